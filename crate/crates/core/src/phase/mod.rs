//! Phase-space data model: points in Darboux coordinates, Hamiltonian
//! models and the constraint sets used for embedded manifolds.

mod ellipsoid;
mod metric;
mod polynomial;

pub use ellipsoid::{make_ellipsoid_constrained, EllipsoidConstraint, EllipsoidModel};
pub use metric::{
    make_surface_graph_metric, FlatMetric, GaussianBump, GaussianBumps, GraphMetric, HeightField,
    MetricField, MetricHamiltonian, MetricJet,
};
pub use polynomial::{Monomial, PolynomialHamiltonian};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point `(x, y)` of a `2n`-dimensional phase space in Darboux coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
}

impl PhasePoint {
    pub fn new(x: DVector<f64>, y: DVector<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::invalid("phase point needs n >= 1"));
        }
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
        }
        Ok(Self { x, y })
    }

    pub fn from_slices(x: &[f64], y: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(x), DVector::from_column_slice(y))
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Stacked `(x, y)` vector of length `2n`.
    pub fn to_vector(&self) -> DVector<f64> {
        let n = self.dim();
        let mut v = DVector::zeros(2 * n);
        v.rows_mut(0, n).copy_from(&self.x);
        v.rows_mut(n, n).copy_from(&self.y);
        v
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        let n = v.len() / 2;
        Self { x: v.rows(0, n).into_owned(), y: v.rows(n, n).into_owned() }
    }

    pub fn distance(&self, other: &PhasePoint) -> f64 {
        (self.to_vector() - other.to_vector()).norm()
    }
}

/// Holonomic constraint `g(q) = 0` on an ambient position space `R^m`.
pub trait ConstraintSet: Send + Sync {
    fn codim(&self) -> usize;
    fn ambient_dim(&self) -> usize;
    fn value(&self, q: &DVector<f64>) -> DVector<f64>;
    /// `c × m` Jacobian of `g`.
    fn jacobian(&self, q: &DVector<f64>) -> DMatrix<f64>;
    /// Hessian of each constraint component.
    fn hessians(&self, q: &DVector<f64>) -> Vec<DMatrix<f64>>;

    /// Newton projection of `q` onto the constraint surface along the
    /// constraint normals.
    fn project_position(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        let mut q = q.clone();
        for _ in 0..50 {
            let g = self.value(&q);
            if g.amax() < 1e-15 {
                return Ok(q);
            }
            let gj = self.jacobian(&q);
            let ggt = &gj * gj.transpose();
            let lam = ggt
                .lu()
                .solve(&g)
                .ok_or_else(|| Error::invalid("constraint Jacobian rank deficient"))?;
            q -= gj.transpose() * lam;
        }
        if self.value(&q).amax() < 1e-12 {
            Ok(q)
        } else {
            Err(Error::invalid("projection onto constraint surface did not converge"))
        }
    }

    /// Projection of `p` onto the tangent space `ker G(q)`.
    fn project_momentum(&self, q: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
        let gj = self.jacobian(q);
        let ggt = &gj * gj.transpose();
        match ggt.lu().solve(&(&gj * p)) {
            Some(mu) => p - gj.transpose() * mu,
            None => p.clone(),
        }
    }

    /// Orthonormal basis (`m × (m − c)`) of the tangent space at `q`.
    fn tangent_basis(&self, q: &DVector<f64>) -> DMatrix<f64> {
        crate::linalg::null_space(&self.jacobian(q))
    }

    /// Unit normals, i.e. orthonormalized rows of the Jacobian, as columns.
    fn normal_basis(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let gt = self.jacobian(q).transpose();
        let qr = gt.qr();
        let mut qm = qr.q();
        let r = qr.r();
        // Orient each normal along the corresponding gradient.
        for k in 0..qm.ncols() {
            if r[(k, k)] < 0.0 {
                let c = -qm.column(k);
                qm.set_column(k, &c);
            }
        }
        qm
    }

    /// Numerical rank of the constraint Jacobian at `q`.
    fn jacobian_rank(&self, q: &DVector<f64>) -> usize {
        let s = crate::linalg::svd_sorted(&self.jacobian(q));
        let smax = s.sigma.iter().cloned().fold(0.0, f64::max);
        s.sigma.iter().filter(|&&v| v > 1e-10 * smax.max(1e-300)).count()
    }
}

/// An evaluatable Hamiltonian `H(x, y)` with analytic gradient.
pub trait HamiltonianModel: Send + Sync {
    fn name(&self) -> &str;
    /// Half the phase-space dimension of the integrated coordinates
    /// (ambient `m` for constrained models).
    fn dim(&self) -> usize;
    fn energy(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64;
    /// `(∇_x H, ∇_y H)`.
    fn gradient(&self, x: &DVector<f64>, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>);
    /// Analytic `2n × 2n` Hessian in `(x, y)` ordering, when available.
    fn hessian(&self, _x: &DVector<f64>, _y: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
    /// `p` such that `H(x, λy) = λ^p H(x, y)`.
    fn homogeneity_degree(&self) -> Option<f64> {
        None
    }
    fn constraint(&self) -> Option<&dyn ConstraintSet> {
        None
    }
}

/// Hamiltonian vector field `X_H = (∇_y H, −∇_x H)` stacked.
pub fn hamiltonian_vector_field(model: &dyn HamiltonianModel, z: &PhasePoint) -> DVector<f64> {
    let (gx, gy) = model.gradient(&z.x, &z.y);
    let n = gx.len();
    let mut v = DVector::zeros(2 * n);
    v.rows_mut(0, n).copy_from(&gy);
    v.rows_mut(n, n).copy_from(&(-gx));
    v
}

/// Hessian of `H`, analytic when the model provides one, otherwise by
/// central differences of the analytic gradient (symmetrized). The flag is
/// `true` when the finite-difference fallback was used.
pub fn hessian_or_fd(model: &dyn HamiltonianModel, x: &DVector<f64>, y: &DVector<f64>) -> (DMatrix<f64>, bool) {
    if let Some(h) = model.hessian(x, y) {
        return (h, false);
    }
    let n = x.len();
    let mut hm = DMatrix::zeros(2 * n, 2 * n);
    let z = PhasePoint { x: x.clone(), y: y.clone() }.to_vector();
    for k in 0..2 * n {
        let step = 1e-6 * (1.0 + z[k].abs());
        let mut zp = z.clone();
        let mut zm = z.clone();
        zp[k] += step;
        zm[k] -= step;
        let pp = PhasePoint::from_vector(&zp);
        let pm = PhasePoint::from_vector(&zm);
        let (gxp, gyp) = model.gradient(&pp.x, &pp.y);
        let (gxm, gym) = model.gradient(&pm.x, &pm.y);
        for i in 0..n {
            hm[(i, k)] = (gxp[i] - gxm[i]) / (2.0 * step);
            hm[(n + i, k)] = (gyp[i] - gym[i]) / (2.0 * step);
        }
    }
    let sym = (&hm + hm.transpose()) * 0.5;
    (sym, true)
}

/// Max relative error between the analytic gradient and central differences
/// of the energy, `|g − g_fd| / (1 + |g|)` over all components and samples.
pub fn gradient_self_check(model: &dyn HamiltonianModel, samples: &[PhasePoint], step: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for z in samples {
        let (gx, gy) = model.gradient(&z.x, &z.y);
        let g = PhasePoint { x: gx, y: gy }.to_vector();
        let v = z.to_vector();
        for k in 0..v.len() {
            let mut vp = v.clone();
            let mut vm = v.clone();
            vp[k] += step;
            vm[k] -= step;
            let p = PhasePoint::from_vector(&vp);
            let m = PhasePoint::from_vector(&vm);
            let fd = (model.energy(&p.x, &p.y) - model.energy(&m.x, &m.y)) / (2.0 * step);
            worst = worst.max((g[k] - fd).abs() / (1.0 + g[k].abs()));
        }
    }
    worst
}

/// Max of `|H(x, λy) − λ^p H(x, y)| / (1 + |H(x, y)|)` over samples and
/// `λ ∈ lambdas`. Returns `None` when the model declares no degree.
pub fn homogeneity_self_check(model: &dyn HamiltonianModel, samples: &[PhasePoint], lambdas: &[f64]) -> Option<f64> {
    let p = model.homogeneity_degree()?;
    let mut worst: f64 = 0.0;
    for z in samples {
        let h = model.energy(&z.x, &z.y);
        for &l in lambdas {
            let hl = model.energy(&z.x, &(&z.y * l));
            worst = worst.max((hl - l.powf(p) * h).abs() / (1.0 + h.abs()));
        }
    }
    Some(worst)
}

/// Uniform random phase points in the box `[-rx, rx]^n × [-ry, ry]^n`.
pub fn random_points<R: Rng>(rng: &mut R, n: usize, count: usize, rx: f64, ry: f64) -> Vec<PhasePoint> {
    (0..count)
        .map(|_| PhasePoint {
            x: DVector::from_fn(n, |_, _| rng.gen_range(-rx..=rx)),
            y: DVector::from_fn(n, |_, _| rng.gen_range(-ry..=ry)),
        })
        .collect()
}
