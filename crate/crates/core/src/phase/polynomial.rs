use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::HamiltonianModel;
use crate::error::{Error, Result};

/// `coef · Π x_j^{x_exp[j]} · Π y_j^{y_exp[j]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub x_exp: Vec<u32>,
    pub y_exp: Vec<u32>,
}

impl Monomial {
    pub fn new(coef: f64, x_exp: Vec<u32>, y_exp: Vec<u32>) -> Self {
        Self { coef, x_exp, y_exp }
    }

    pub fn y_degree(&self) -> u32 {
        self.y_exp.iter().sum()
    }

    /// Exponents over the stacked variable `(x, y)`.
    fn stacked(&self) -> Vec<u32> {
        self.x_exp.iter().chain(self.y_exp.iter()).cloned().collect()
    }
}

fn pow(v: f64, e: u32) -> f64 {
    v.powi(e as i32)
}

/// Value of `Π v_j^{e_j}`.
pub(crate) fn monomial_value(exps: &[u32], v: &DVector<f64>) -> f64 {
    exps.iter().enumerate().map(|(j, &e)| pow(v[j], e)).product()
}

/// `∂/∂v_k Π v_j^{e_j}` for all `k`.
pub(crate) fn monomial_gradient(exps: &[u32], v: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(exps.len(), |k, _| {
        if exps[k] == 0 {
            return 0.0;
        }
        let mut p = exps[k] as f64 * pow(v[k], exps[k] - 1);
        for (j, &e) in exps.iter().enumerate() {
            if j != k {
                p *= pow(v[j], e);
            }
        }
        p
    })
}

pub(crate) fn monomial_hessian(exps: &[u32], v: &DVector<f64>) -> DMatrix<f64> {
    let d = exps.len();
    let mut h = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in a..d {
            let mut e = exps.to_vec();
            let mut c = 1.0;
            for idx in [a, b] {
                if e[idx] == 0 {
                    c = 0.0;
                    break;
                }
                c *= e[idx] as f64;
                e[idx] -= 1;
            }
            if c != 0.0 {
                let val = c * monomial_value(&e, v);
                h[(a, b)] = val;
                h[(b, a)] = val;
            }
        }
    }
    h
}

/// Polynomial Hamiltonian `Σ coef · x^α y^β`.
#[derive(Debug, Clone)]
pub struct PolynomialHamiltonian {
    n: usize,
    terms: Vec<Monomial>,
}

impl PolynomialHamiltonian {
    pub fn new(n: usize, terms: Vec<Monomial>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("polynomial Hamiltonian needs n >= 1"));
        }
        for t in &terms {
            if t.x_exp.len() != n || t.y_exp.len() != n {
                return Err(Error::invalid("monomial exponent vectors must have length n"));
            }
        }
        Ok(Self { n, terms })
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    /// Returns a copy with one extra term added.
    pub fn with_term(&self, term: Monomial) -> Result<Self> {
        let mut terms = self.terms.clone();
        terms.push(term);
        Self::new(self.n, terms)
    }

    fn stack(x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let n = x.len();
        let mut v = DVector::zeros(2 * n);
        v.rows_mut(0, n).copy_from(x);
        v.rows_mut(n, n).copy_from(y);
        v
    }
}

impl HamiltonianModel for PolynomialHamiltonian {
    fn name(&self) -> &str {
        "custom_polynomial"
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn energy(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let v = Self::stack(x, y);
        self.terms.iter().map(|t| t.coef * monomial_value(&t.stacked(), &v)).sum()
    }

    fn gradient(&self, x: &DVector<f64>, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let v = Self::stack(x, y);
        let mut g = DVector::zeros(2 * self.n);
        for t in &self.terms {
            g += monomial_gradient(&t.stacked(), &v) * t.coef;
        }
        (g.rows(0, self.n).into_owned(), g.rows(self.n, self.n).into_owned())
    }

    fn hessian(&self, x: &DVector<f64>, y: &DVector<f64>) -> Option<DMatrix<f64>> {
        let v = Self::stack(x, y);
        let mut h = DMatrix::zeros(2 * self.n, 2 * self.n);
        for t in &self.terms {
            h += monomial_hessian(&t.stacked(), &v) * t.coef;
        }
        Some(h)
    }

    fn homogeneity_degree(&self) -> Option<f64> {
        let first = self.terms.first()?.y_degree();
        self.terms.iter().all(|t| t.y_degree() == first).then_some(first as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{gradient_self_check, hessian_or_fd, random_points};
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn polynomial_derivatives_match_finite_differences() {
        let h = PolynomialHamiltonian::new(
            3,
            vec![
                Monomial::new(0.5, vec![0, 0, 0], vec![2, 0, 0]),
                Monomial::new(1.0, vec![0, 0, 0], vec![1, 1, 1]),
                Monomial::new(0.3, vec![0, 2, 2], vec![0, 0, 0]),
                Monomial::new(-0.2, vec![2, 2, 2], vec![0, 0, 0]),
            ],
        )
        .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let pts = random_points(&mut rng, 3, 50, 1.0, 1.0);
        assert!(gradient_self_check(&h, &pts, 1e-5) < 1e-6);
        for z in pts.iter().take(10) {
            let a = h.hessian(&z.x, &z.y).unwrap();
            struct G<'a>(&'a PolynomialHamiltonian);
            impl HamiltonianModel for G<'_> {
                fn name(&self) -> &str {
                    "g"
                }
                fn dim(&self) -> usize {
                    3
                }
                fn energy(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
                    self.0.energy(x, y)
                }
                fn gradient(&self, x: &DVector<f64>, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
                    self.0.gradient(x, y)
                }
            }
            let (fd, _) = hessian_or_fd(&G(&h), &z.x, &z.y);
            assert!((a - fd).amax() < 1e-6);
        }
        assert_eq!(h.homogeneity_degree(), None);
    }

    #[test]
    fn homogeneous_polynomial_reports_degree() {
        let h = PolynomialHamiltonian::new(1, vec![Monomial::new(1.0, vec![2], vec![2])]).unwrap();
        assert_eq!(h.homogeneity_degree(), Some(2.0));
        assert!(PolynomialHamiltonian::new(2, vec![Monomial::new(1.0, vec![1], vec![1])]).is_err());
    }
}
