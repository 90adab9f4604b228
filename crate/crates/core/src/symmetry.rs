//! Diagonal conformal symplectic scaling actions
//! `x^j ↦ λ^{a_j} x^j`, `y_j ↦ λ^{c − a_j} y_j` and the checks built on them:
//! invariance of `H` up to the factor `λ^p`, the flow-rescaling identity,
//! and the degeneracy bound for boundary problems tangent to the action.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::{AffineLagrangianPlane, LagrangianBvp, ParameterHook, ResidualMap, SeparatedBoundary};
use crate::error::{Error, Result};
use crate::flow::{flow, IntegratorSpec};
use crate::linalg::{null_space, svd_sorted};
use crate::phase::{HamiltonianModel, Monomial, PhasePoint, PolynomialHamiltonian};
use crate::shooting::SolutionPoint;
use crate::singularity::degeneracy;

/// Group parameters used by [`verify_invariance`].
pub const INVARIANCE_LAMBDAS: [f64; 4] = [0.5, 0.9, 1.1, 2.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingAction {
    /// One row `a⁽ˢ⁾ ∈ Rⁿ` per generator.
    pub exponents: Vec<Vec<f64>>,
    /// Conformal exponent: `χ*ω = λᶜ ω`.
    pub c: f64,
    /// Claimed scaling degree: `H ∘ χ_λ = λᵖ H`.
    pub p: f64,
}

impl ScalingAction {
    pub fn new(exponents: Vec<Vec<f64>>, c: f64, p: f64) -> Result<Self> {
        let action = Self { exponents, c, p };
        action.validate()?;
        Ok(action)
    }

    /// Fibre scaling `(x, y) ↦ (x, λ y)` with `H` of degree `p` in `y`.
    pub fn momentum_scaling(n: usize, p: f64) -> Self {
        Self { exponents: vec![vec![0.0; n]], c: 1.0, p }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.exponents.len();
        if k == 0 {
            return Err(Error::InvalidAction("at least one generator is required".into()));
        }
        let n = self.exponents[0].len();
        if n == 0 || self.exponents.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidAction("exponent rows must share a positive length".into()));
        }
        if k > n {
            return Err(Error::InvalidAction(format!("{k} generators exceed n = {n}")));
        }
        if !self.c.is_finite() || !self.p.is_finite() || self.exponents.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidAction("non-finite exponent".into()));
        }
        // Independence of the generators as vector fields: rows (a, c − a).
        let m = DMatrix::from_fn(k, 2 * n, |s, j| {
            if j < n {
                self.exponents[s][j]
            } else {
                self.c - self.exponents[s][j - n]
            }
        });
        let sv = svd_sorted(&m).sigma;
        if sv[k - 1] <= 1e-12 * sv[0].max(1.0) {
            return Err(Error::InvalidAction("exponent rows are linearly dependent".into()));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.exponents.len()
    }

    pub fn n(&self) -> usize {
        self.exponents[0].len()
    }

    /// `k × n` matrix of exponent rows.
    pub fn exponent_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.exponents.len(), self.exponents[0].len(), |s, j| self.exponents[s][j])
    }

    pub fn theta(&self, lambda: f64) -> f64 {
        lambda.powf(self.c)
    }

    pub fn eta(&self, lambda: f64) -> f64 {
        lambda.powf(self.p)
    }

    /// Time factor `η/θ = λ^{p−c}` of the rescaling identity.
    pub fn time_factor(&self, lambda: f64) -> f64 {
        lambda.powf(self.p - self.c)
    }

    /// Exponent of `dx^j ∧ dy_j` under each generator; all equal `c`.
    pub fn symplectic_form_exponents(&self) -> Vec<Vec<f64>> {
        self.exponents.iter().map(|row| row.iter().map(|a| a + (self.c - a)).collect()).collect()
    }

    /// `p ≠ c`: the time factor is not stationary at `λ = 1`.
    pub fn is_nonstationary(&self) -> bool {
        (self.p - self.c).abs() > 1e-12
    }

    /// With several generators the time factor depends on the group element
    /// only through one linear functional, so differences of generators act
    /// without rescaling time. Only a single generator is non-stationary in
    /// every direction of the group.
    pub fn nonstationary_all_directions(&self) -> bool {
        self.k() == 1 && self.is_nonstationary()
    }

    /// `χ⁽ˢ⁾_λ(z)`.
    pub fn apply(&self, generator: usize, lambda: f64, z: &PhasePoint) -> Result<PhasePoint> {
        if generator >= self.k() {
            return Err(Error::InvalidAction(format!("generator {generator} out of range")));
        }
        if !(lambda > 0.0) {
            return Err(Error::InvalidAction("group parameter must be positive".into()));
        }
        if z.dim() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: z.dim() });
        }
        let a = &self.exponents[generator];
        let x = DVector::from_fn(z.dim(), |j, _| lambda.powf(a[j]) * z.x[j]);
        let y = DVector::from_fn(z.dim(), |j, _| lambda.powf(self.c - a[j]) * z.y[j]);
        Ok(PhasePoint { x, y })
    }

    /// Fundamental vectors `V⁽ˢ⁾# = (a_j x^j, (c − a_j) y_j)` as columns.
    pub fn fundamental_vectors(&self, z: &PhasePoint) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(2 * n, self.k(), |i, s| {
            let a = &self.exponents[s];
            if i < n {
                a[i] * z.x[i]
            } else {
                (self.c - a[i - n]) * z.y[i - n]
            }
        })
    }
}

/// Composes a conformal action with a symplectic one (`c = 0`) generator by
/// generator: exponents add, `c` and `p` add. A single-row factor is
/// broadcast against the other factor's rows.
pub fn compose_actions(conformal: &ScalingAction, symplectic: &ScalingAction) -> Result<ScalingAction> {
    // Factors may be degenerate (the identity, for instance); only the
    // composition has to be a valid action.
    for f in [conformal, symplectic] {
        if f.exponents.is_empty() || f.exponents.iter().any(|r| r.len() != f.exponents[0].len()) {
            return Err(Error::InvalidAction("malformed exponent rows".into()));
        }
    }
    if symplectic.c != 0.0 {
        return Err(Error::InvalidAction("the second factor must be symplectic (c = 0)".into()));
    }
    if conformal.n() != symplectic.n() {
        return Err(Error::InvalidAction("factors act on different dimensions".into()));
    }
    let (kc, ks) = (conformal.k(), symplectic.k());
    let k = kc.max(ks);
    if kc != ks && kc != 1 && ks != 1 {
        return Err(Error::InvalidAction(format!("cannot pair {kc} with {ks} generators")));
    }
    let row = |a: &ScalingAction, s: usize| a.exponents[if a.k() == 1 { 0 } else { s }].clone();
    let exponents = (0..k)
        .map(|s| row(conformal, s).iter().zip(row(symplectic, s)).map(|(x, y)| x + y).collect())
        .collect();
    ScalingAction::new(exponents, conformal.c + symplectic.c, conformal.p + symplectic.p)
}

fn check_samples(action: &ScalingAction, model: &dyn HamiltonianModel, samples: &[PhasePoint]) -> Result<()> {
    if model.dim() != action.n() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: action.n() });
    }
    if samples.iter().any(|z| z.y.amax() == 0.0) {
        return Err(Error::invalid("samples must avoid y = 0"));
    }
    if let Some(z) = samples.iter().find(|z| z.dim() != action.n()) {
        return Err(Error::DimensionMismatch { expected: action.n(), got: z.dim() });
    }
    Ok(())
}

/// `max |H(χ_λ z) − λᵖ H(z)| / (1 + |H(z)|)` over samples, generators and
/// [`INVARIANCE_LAMBDAS`].
pub fn verify_invariance(action: &ScalingAction, model: &dyn HamiltonianModel, samples: &[PhasePoint]) -> Result<f64> {
    action.validate()?;
    check_samples(action, model, samples)?;
    let mut worst: f64 = 0.0;
    for z in samples {
        let h = model.energy(&z.x, &z.y);
        for s in 0..action.k() {
            for &l in &INVARIANCE_LAMBDAS {
                let w = action.apply(s, l, z)?;
                let err = (model.energy(&w.x, &w.y) - action.eta(l) * h).abs() / (1.0 + h.abs());
                worst = worst.max(err);
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescalingCheck {
    /// `max ‖χ_λ(φ_{λ^{p−c} t}(z)) − φ_t(χ_λ(z))‖`.
    pub max_residual: f64,
    /// `max ‖χ⁽ˢ⁾χ⁽ʳ⁾z − χ⁽ʳ⁾χ⁽ˢ⁾z‖` over generator pairs.
    pub commutator: f64,
}

/// Flow-rescaling identity for every generator and every `λ` in `lambdas`.
pub fn verify_rescaling_lemma(
    action: &ScalingAction,
    model: &dyn HamiltonianModel,
    spec: &IntegratorSpec,
    samples: &[PhasePoint],
    t: f64,
    lambdas: &[f64],
) -> Result<RescalingCheck> {
    action.validate()?;
    check_samples(action, model, samples)?;
    let per_sample: Vec<(f64, f64)> = samples
        .par_iter()
        .map(|z| -> Result<(f64, f64)> {
            let mut res: f64 = 0.0;
            for s in 0..action.k() {
                for &l in lambdas {
                    let left = action.apply(s, l, &flow(model, z, action.time_factor(l) * t, spec)?)?;
                    let right = flow(model, &action.apply(s, l, z)?, t, spec)?;
                    res = res.max(left.distance(&right));
                }
            }
            let mut comm: f64 = 0.0;
            for s in 0..action.k() {
                for r in 0..action.k() {
                    for &l in lambdas {
                        let a = action.apply(r, l, &action.apply(s, 1.0 / l.sqrt(), z)?)?;
                        let b = action.apply(s, 1.0 / l.sqrt(), &action.apply(r, l, z)?)?;
                        comm = comm.max(a.distance(&b));
                    }
                }
            }
            Ok((res, comm))
        })
        .collect::<Result<_>>()?;
    Ok(per_sample
        .iter()
        .fold(RescalingCheck { max_residual: 0.0, commutator: 0.0 }, |acc, &(r, c)| RescalingCheck {
            max_residual: acc.max_residual.max(r),
            commutator: acc.commutator.max(c),
        }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstructionOptions {
    /// Unit fundamental vectors may leave `T_zΛ` by at most this much.
    pub tangency_tol: f64,
    /// The unit vector field must leave `T_{z′}Λ′` by at least this much.
    pub transversality_tol: f64,
    pub sigma_rel: f64,
}

impl Default for ObstructionOptions {
    fn default() -> Self {
        Self { tangency_tol: 1e-6, transversality_tol: 1e-6, sigma_rel: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    HypothesesNotMet,
}

impl CheckStatus {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Pass => "pass",
            Self::Fail => "fail",
            Self::HypothesesNotMet => "hypotheses not met",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstructionRecord {
    pub z: Vec<f64>,
    pub z_end: Vec<f64>,
    /// Largest distance of a unit fundamental vector from `T_zΛ`.
    pub tangency_margin: f64,
    /// Component of the unit vector field at `z′` outside `T_{z′}Λ′`.
    pub transversality_margin: f64,
    pub degeneracy: usize,
    pub bound: usize,
    /// `min_s ‖Dr · Tᵀ V⁽ˢ⁾#‖ / (|p − c| T ‖[A′ B′] X_H(z′)‖)`; the image of
    /// each symmetry direction is the rescaled vector field, so this is 1
    /// up to discretization error.
    pub mechanism_ratio: f64,
    pub status: CheckStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstructionCheckReport {
    pub action: ScalingAction,
    pub bound: usize,
    pub nonstationary: bool,
    pub nonstationary_all_directions: bool,
    pub records: Vec<ObstructionRecord>,
    /// Records with the hypotheses met all satisfy the bound (and there
    /// is at least one such record).
    pub pass: bool,
    pub status: CheckStatus,
}

fn distance_to_span(basis: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    let nv = v.norm();
    if nv == 0.0 {
        return 0.0;
    }
    let u = v / nv;
    (&u - basis * (basis.transpose() * &u)).norm()
}

/// Degeneracy bound `m ≤ n − k` at converged solutions of a boundary problem
/// whose near plane is tangent to the action and whose far plane is
/// transverse to the Hamiltonian vector field.
pub fn check_obstruction(
    action: &ScalingAction,
    bvp: &LagrangianBvp<'_>,
    solutions: &[SolutionPoint],
    opts: &ObstructionOptions,
) -> Result<ObstructionCheckReport> {
    action.validate()?;
    let model = bvp.model;
    let n = model.dim();
    if action.n() != n {
        return Err(Error::DimensionMismatch { expected: n, got: action.n() });
    }
    if let Some(s) = solutions.iter().find(|s| !s.converged) {
        return Err(Error::invalid(format!(
            "obstruction check needs converged solutions (residual {:.3e})",
            s.residual_norm
        )));
    }
    let bound = n - action.k();
    let near_tangent = null_space(&bvp.boundary.near.stacked());
    let far = bvp.boundary.far.stacked();
    let far_tangent = null_space(&far);
    let records: Vec<ObstructionRecord> = solutions
        .par_iter()
        .map(|sol| -> Result<ObstructionRecord> {
            let (_, dr) = bvp.residual_and_jacobian(&sol.u)?;
            let m = degeneracy(&dr, opts.sigma_rel).m;
            let fv = action.fundamental_vectors(&sol.z);
            let tangency = fv.column_iter().map(|c| distance_to_span(&near_tangent, &c.into_owned())).fold(0.0, f64::max);
            let rank = {
                let sv = svd_sorted(&fv).sigma;
                sv.iter().filter(|&&s| s > 1e-10 * sv[0].max(1e-300)).count()
            };
            let xh = crate::phase::hamiltonian_vector_field(model, &sol.z_end);
            let transversality = distance_to_span(&far_tangent, &xh);
            let image_scale = (action.p - action.c).abs() * bvp.time.abs() * (&far * &xh).norm();
            let mechanism = fv
                .column_iter()
                .map(|c| {
                    let du = bvp.frame().transpose() * c;
                    (&dr * du).norm() / image_scale.max(1e-300)
                })
                .fold(f64::INFINITY, f64::min);
            let met = tangency <= opts.tangency_tol
                && transversality >= opts.transversality_tol
                && rank == action.k()
                && action.is_nonstationary();
            let status = if !met {
                CheckStatus::HypothesesNotMet
            } else if m <= bound {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            };
            Ok(ObstructionRecord {
                z: sol.z.to_vector().iter().cloned().collect(),
                z_end: sol.z_end.to_vector().iter().cloned().collect(),
                tangency_margin: tangency,
                transversality_margin: transversality,
                degeneracy: m,
                bound,
                mechanism_ratio: mechanism,
                status,
            })
        })
        .collect::<Result<_>>()?;
    let checked = records.iter().filter(|r| r.status != CheckStatus::HypothesesNotMet).count();
    let failed = records.iter().any(|r| r.status == CheckStatus::Fail);
    let status = if checked == 0 {
        CheckStatus::HypothesesNotMet
    } else if failed {
        CheckStatus::Fail
    } else {
        CheckStatus::Pass
    };
    Ok(ObstructionCheckReport {
        action: action.clone(),
        bound,
        nonstationary: action.is_nonstationary(),
        nonstationary_all_directions: action.nonstationary_all_directions(),
        records,
        pass: status == CheckStatus::Pass,
        status,
    })
}

/// Separated polynomial system in `n = 3` invariant under two scaling
/// generators `a = (0, 0, 1)` and `a = (0, 1, 0)` with `c = 1`, `p = 2`:
/// `H = ½ y₁² + y₁y₂y₃ + β x₂²x₃² + γ x₁²x₂²x₃²`.
pub fn two_scaling_system(beta: f64, gamma: f64) -> Result<(PolynomialHamiltonian, ScalingAction)> {
    let model = PolynomialHamiltonian::new(
        3,
        vec![
            Monomial::new(0.5, vec![0, 0, 0], vec![2, 0, 0]),
            Monomial::new(1.0, vec![0, 0, 0], vec![1, 1, 1]),
            Monomial::new(beta, vec![0, 2, 2], vec![0, 0, 0]),
            Monomial::new(gamma, vec![2, 2, 2], vec![0, 0, 0]),
        ],
    )?;
    let action = ScalingAction::new(vec![vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]], 1.0, 2.0)?;
    Ok((model, action))
}

/// Boundary planes `{x₁ = ξ, y₂ = y₃ = 0}` at both ends (the far one with
/// `ξ_end`), tangent to both generators of [`two_scaling_system`]. The
/// hook parameters are `μ = (ξ_end, ξ)`.
pub fn two_scaling_boundary(xi: f64, xi_end: f64) -> Result<SeparatedBoundary> {
    let plane = |v: f64| {
        let mut a = DMatrix::zeros(3, 3);
        a[(0, 0)] = 1.0;
        let mut b = DMatrix::zeros(3, 3);
        b[(1, 1)] = 1.0;
        b[(2, 2)] = 1.0;
        AffineLagrangianPlane::new(a, b, DVector::from_vec(vec![v, 0.0, 0.0]))
    };
    SeparatedBoundary::new(plane(xi)?, plane(xi_end)?)?.with_hook(ParameterHook { near: vec![0], far: vec![0] })
}

#[cfg(test)]
mod tests;
