use nalgebra::{DMatrix, DVector};

use super::polynomial::{monomial_gradient, monomial_hessian, monomial_value};
use super::{ConstraintSet, HamiltonianModel};
use crate::error::{Error, Result};

/// `g(q) = Σ q_i² / a_i² + Σ_k c_k q^{e_k} − 1`.
#[derive(Debug, Clone)]
pub struct EllipsoidConstraint {
    semi_axes: Vec<f64>,
    inv_sq: Vec<f64>,
    perturbation: Vec<(f64, Vec<u32>)>,
}

impl EllipsoidConstraint {
    pub fn semi_axes(&self) -> &[f64] {
        &self.semi_axes
    }
}

impl ConstraintSet for EllipsoidConstraint {
    fn codim(&self) -> usize {
        1
    }

    fn ambient_dim(&self) -> usize {
        self.inv_sq.len()
    }

    fn value(&self, q: &DVector<f64>) -> DVector<f64> {
        let mut g: f64 = q.iter().zip(&self.inv_sq).map(|(v, w)| v * v * w).sum::<f64>() - 1.0;
        for (c, e) in &self.perturbation {
            g += c * monomial_value(e, q);
        }
        DVector::from_element(1, g)
    }

    fn jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let mut row = DVector::from_fn(q.len(), |i, _| 2.0 * q[i] * self.inv_sq[i]);
        for (c, e) in &self.perturbation {
            row += monomial_gradient(e, q) * *c;
        }
        DMatrix::from_row_slice(1, q.len(), row.as_slice())
    }

    fn hessians(&self, q: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let mut h = DMatrix::from_diagonal(&DVector::from_iterator(q.len(), self.inv_sq.iter().map(|w| 2.0 * w)));
        for (c, e) in &self.perturbation {
            h += monomial_hessian(e, q) * *c;
        }
        vec![h]
    }
}

/// Free particle `H(q, p) = ½|p|²` constrained to an (optionally perturbed)
/// ellipsoid; its constrained motions are the geodesics of the induced
/// metric.
#[derive(Debug, Clone)]
pub struct EllipsoidModel {
    constraint: EllipsoidConstraint,
}

impl EllipsoidModel {
    /// Adds `coef · q^{exps}` to the constraint function.
    pub fn with_perturbation(mut self, coef: f64, exps: Vec<u32>) -> Result<Self> {
        if exps.len() != self.constraint.inv_sq.len() {
            return Err(Error::invalid("perturbation exponent length must equal ambient dimension"));
        }
        self.constraint.perturbation.push((coef, exps));
        Ok(self)
    }

    pub fn ellipsoid(&self) -> &EllipsoidConstraint {
        &self.constraint
    }

    pub fn manifold_dim(&self) -> usize {
        self.constraint.ambient_dim() - 1
    }
}

impl HamiltonianModel for EllipsoidModel {
    fn name(&self) -> &str {
        "ellipsoid"
    }

    fn dim(&self) -> usize {
        self.constraint.ambient_dim()
    }

    fn energy(&self, _q: &DVector<f64>, p: &DVector<f64>) -> f64 {
        0.5 * p.norm_squared()
    }

    fn gradient(&self, q: &DVector<f64>, p: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (DVector::zeros(q.len()), p.clone())
    }

    fn hessian(&self, q: &DVector<f64>, _p: &DVector<f64>) -> Option<DMatrix<f64>> {
        let m = q.len();
        let mut h = DMatrix::zeros(2 * m, 2 * m);
        for i in 0..m {
            h[(m + i, m + i)] = 1.0;
        }
        Some(h)
    }

    fn homogeneity_degree(&self) -> Option<f64> {
        Some(2.0)
    }

    fn constraint(&self) -> Option<&dyn ConstraintSet> {
        Some(&self.constraint)
    }
}

/// Ellipsoid `Σ q_i²/a_i² = 1` in `R^m`, `m ∈ {3, 4}`, with the ambient free
/// Hamiltonian. The returned constraint is a copy of the one carried by the
/// model.
pub fn make_ellipsoid_constrained(semi_axes: &[f64]) -> Result<(EllipsoidModel, EllipsoidConstraint)> {
    if !(3..=4).contains(&semi_axes.len()) {
        return Err(Error::invalid("ellipsoid ambient dimension must be 3 or 4"));
    }
    if semi_axes.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
        return Err(Error::invalid("semi-axes must be positive"));
    }
    let constraint = EllipsoidConstraint {
        semi_axes: semi_axes.to_vec(),
        inv_sq: semi_axes.iter().map(|a| 1.0 / (a * a)).collect(),
        perturbation: Vec::new(),
    };
    Ok((EllipsoidModel { constraint: constraint.clone() }, constraint))
}
