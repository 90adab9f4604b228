//! Catastrophe normal forms as synthetic residual maps `r = L·∇g(M(u − u*))`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::SingularityType;
use crate::boundary::{ResidualEval, ResidualMap};
use crate::error::{Error, Result};
use crate::phase::PhasePoint;
use crate::shooting::SolutionPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalForm {
    /// `u³/3`
    A2,
    /// `u⁴/4`
    A3,
    /// `u⁵/5`
    A4,
    /// `u⁶/6`
    A5,
    /// `u₁³ − 3u₁u₂²`
    D4Minus,
    /// `u₁³ + u₂³`
    D4Plus,
}

impl NormalForm {
    pub fn core_dim(&self) -> usize {
        match self {
            Self::D4Minus | Self::D4Plus => 2,
            _ => 1,
        }
    }

    pub fn expected(&self) -> SingularityType {
        match self {
            Self::A2 => SingularityType::A2,
            Self::A3 => SingularityType::A3,
            Self::A4 => SingularityType::A4,
            Self::A5 => SingularityType::A5,
            Self::D4Minus => SingularityType::D4Minus,
            Self::D4Plus => SingularityType::D4Plus,
        }
    }

    fn degree(&self) -> i32 {
        match self {
            Self::A2 => 2,
            Self::A3 => 3,
            Self::A4 => 4,
            Self::A5 => 5,
            _ => 2,
        }
    }

    /// Gradient and Hessian of the core germ.
    fn core(&self, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        match self {
            Self::D4Minus => {
                let (a, b) = (x[0], x[1]);
                (
                    vec![3.0 * a * a - 3.0 * b * b, -6.0 * a * b],
                    vec![vec![6.0 * a, -6.0 * b], vec![-6.0 * b, -6.0 * a]],
                )
            }
            Self::D4Plus => {
                let (a, b) = (x[0], x[1]);
                (vec![3.0 * a * a, 3.0 * b * b], vec![vec![6.0 * a, 0.0], vec![0.0, 6.0 * b]])
            }
            _ => {
                let k = self.degree();
                (vec![x[0].powi(k)], vec![vec![k as f64 * x[0].powi(k - 1)]])
            }
        }
    }
}

/// `g(x) = germ(x_core) + Σ_j ±½ x_j²`, composed with linear changes of
/// coordinates on both sides and translated to `center`.
#[derive(Debug, Clone)]
pub struct EmbeddedNormalForm {
    pub form: NormalForm,
    pub l: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub center: DVector<f64>,
    pub signs: Vec<f64>,
}

fn random_orthogonal<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    loop {
        let a = DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        if a.determinant().abs() > 1e-3 {
            return a.qr().q();
        }
    }
}

fn random_well_conditioned<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let d = DVector::from_fn(n, |_, _| if rng.gen::<bool>() { 2.0 } else { 0.5 } * rng.gen_range(0.8..1.25));
    random_orthogonal(rng, n) * DMatrix::from_diagonal(&d) * random_orthogonal(rng, n)
}

impl EmbeddedNormalForm {
    pub fn new(form: NormalForm, l: DMatrix<f64>, m: DMatrix<f64>, center: DVector<f64>, signs: Vec<f64>) -> Result<Self> {
        let n = center.len();
        if n < form.core_dim() || l.shape() != (n, n) || m.shape() != (n, n) || signs.len() != n - form.core_dim() {
            return Err(Error::invalid("inconsistent normal-form embedding"));
        }
        Ok(Self { form, l, m, center, signs })
    }

    /// Random invertible changes of coordinates, random center in
    /// `[-1, 1]^n` and random signs of the quadratic part.
    pub fn random<R: Rng>(form: NormalForm, n: usize, rng: &mut R) -> Self {
        let l = random_well_conditioned(rng, n);
        let m = random_well_conditioned(rng, n);
        let center = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let signs = (form.core_dim()..n).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
        Self { form, l, m, center, signs }
    }

    pub fn dim_total(&self) -> usize {
        self.center.len()
    }

    fn gradient_hessian(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let n = x.len();
        let k = self.form.core_dim();
        let (g, h) = self.form.core(&x.as_slice()[..k]);
        let mut grad = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);
        for i in 0..k {
            grad[i] = g[i];
            for j in 0..k {
                hess[(i, j)] = h[i][j];
            }
        }
        for (j, s) in self.signs.iter().enumerate() {
            grad[k + j] = s * x[k + j];
            hess[(k + j, k + j)] = *s;
        }
        (grad, hess)
    }

    /// The exact singular point as a converged solution.
    pub fn solution(&self) -> SolutionPoint {
        let e = self.evaluate(&self.center, true).expect("dimension matches");
        let jac = e.jacobian.clone().expect("requested");
        let sv = crate::linalg::svd_sorted(&jac).sigma;
        SolutionPoint {
            u: self.center.clone(),
            z: e.start,
            z_end: e.end,
            residual_norm: e.r.norm(),
            degeneracy: self.form.core_dim(),
            converged: true,
            iterations: 0,
            near_singular: true,
            singular_values: sv.iter().cloned().collect(),
            hessian_fd: false,
            diagnostic: None,
        }
    }
}

impl ResidualMap for EmbeddedNormalForm {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn evaluate(&self, u: &DVector<f64>, with_jacobian: bool) -> Result<ResidualEval> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: u.len() });
        }
        let x = &self.m * (u - &self.center);
        let (g, h) = self.gradient_hessian(&x);
        let r = &self.l * g;
        let jacobian = with_jacobian.then(|| &self.l * h * &self.m);
        let zeros = DVector::zeros(u.len());
        Ok(ResidualEval {
            start: PhasePoint { x: u.clone(), y: zeros.clone() },
            end: PhasePoint { x: r.clone(), y: zeros },
            r,
            jacobian,
            hessian_fd: false,
        })
    }
}
