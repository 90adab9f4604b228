//! Hamiltonian flows and their tangent (variational) flows.
//!
//! The symplectic schemes propagate variations by differentiating the
//! discrete step itself, so the returned Jacobian is the exact derivative of
//! the discrete flow map.

mod midpoint;
mod rattle;
mod reference;

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{omega, symplecticity_defect};
use crate::phase::{ConstraintSet, HamiltonianModel, PhasePoint};

pub use reference::reference_fixed_step;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ImplicitMidpoint,
    Rattle,
    ReferenceRk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSpec {
    pub scheme: Scheme,
    /// Fixed step of the symplectic schemes; initial step of `ReferenceRk`.
    pub step: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Local error tolerance (absolute and relative) of `ReferenceRk`.
    pub rk_tol: f64,
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        Self {
            scheme: Scheme::ImplicitMidpoint,
            step: 1e-3,
            newton_tol: 1e-12,
            newton_max_iter: 25,
            rk_tol: 1e-12,
        }
    }
}

impl IntegratorSpec {
    pub fn midpoint(step: f64) -> Self {
        Self { step, ..Self::default() }
    }

    pub fn rattle(step: f64) -> Self {
        Self { scheme: Scheme::Rattle, step, ..Self::default() }
    }

    pub fn reference(rk_tol: f64) -> Self {
        Self { scheme: Scheme::ReferenceRk, step: 1e-2, rk_tol, ..Self::default() }
    }

    /// Symplectic scheme matching the model: RATTLE when it carries a
    /// constraint, implicit midpoint otherwise.
    pub fn symplectic_for(model: &dyn HamiltonianModel, step: f64) -> Self {
        if model.constraint().is_some() {
            Self::rattle(step)
        } else {
            Self::midpoint(step)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::invalid("integrator step must be positive"));
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::invalid("newton_tol must be positive"));
        }
        if self.newton_max_iter == 0 {
            return Err(Error::invalid("newton_max_iter must be at least 1"));
        }
        if self.scheme == Scheme::ReferenceRk && !(self.rk_tol > 0.0) {
            return Err(Error::invalid("rk_tol must be positive"));
        }
        Ok(())
    }
}

/// Flow endpoint together with the Jacobian of the flow map at the initial
/// point.
#[derive(Debug, Clone)]
pub struct TangentFlowState {
    pub z: PhasePoint,
    pub j: DMatrix<f64>,
    pub t: f64,
    /// True when the Hessian came from the finite-difference fallback.
    pub hessian_fd: bool,
}

/// Work counters of one integration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlowStats {
    pub steps: usize,
    pub gradient_evals: usize,
    pub hessian_evals: usize,
    pub newton_iters: usize,
}

/// Result of [`integrate`]: endpoint, propagated variations (if requested)
/// and work counters.
#[derive(Debug, Clone)]
pub struct Integration {
    pub z: PhasePoint,
    pub variations: Option<DMatrix<f64>>,
    pub t: f64,
    pub hessian_fd: bool,
    pub stats: FlowStats,
}

pub(crate) struct Work {
    pub stats: FlowStats,
    pub hessian_fd: bool,
}

impl Work {
    fn new() -> Self {
        Self { stats: FlowStats::default(), hessian_fd: false }
    }

    pub(crate) fn gradient(&mut self, model: &dyn HamiltonianModel, z: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        self.stats.gradient_evals += 1;
        let n = z.len() / 2;
        model.gradient(&z.rows(0, n).into_owned(), &z.rows(n, n).into_owned())
    }

    pub(crate) fn hessian(&mut self, model: &dyn HamiltonianModel, z: &DVector<f64>) -> DMatrix<f64> {
        self.stats.hessian_evals += 1;
        let n = z.len() / 2;
        let (h, fd) = crate::phase::hessian_or_fd(model, &z.rows(0, n).into_owned(), &z.rows(n, n).into_owned());
        self.hessian_fd |= fd;
        h
    }
}

/// Step sizes covering `[0, t]`: full steps of `h` and a shorter final step
/// when `t/h` is not an integer.
pub(crate) fn step_sizes(t: f64, h: f64) -> Vec<f64> {
    let span = t.abs();
    if span == 0.0 {
        return Vec::new();
    }
    let sign = t.signum();
    let ratio = span / h;
    let full = (ratio + 1e-9).floor() as usize;
    let mut steps = vec![sign * h; full];
    let rest = span - full as f64 * h;
    if rest > 1e-9 * h {
        steps.push(sign * rest);
    }
    steps
}

fn check_inputs(model: &dyn HamiltonianModel, z0: &PhasePoint, spec: &IntegratorSpec) -> Result<()> {
    spec.validate()?;
    if z0.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: z0.dim() });
    }
    match (model.constraint(), spec.scheme) {
        (Some(c), scheme) => {
            if scheme == Scheme::ImplicitMidpoint {
                return Err(Error::invalid("constrained models require the rattle scheme"));
            }
            let g = c.value(&z0.x).amax();
            let hidden = (c.jacobian(&z0.x) * &z0.y).amax();
            if g > 1e-10 || hidden > 1e-10 * (1.0 + z0.y.amax()) {
                return Err(Error::invalid(format!(
                    "initial point violates the constraint (|g| = {g:.3e}, |G p| = {hidden:.3e})"
                )));
            }
        }
        (None, Scheme::Rattle) => {
            return Err(Error::invalid("rattle requires a constrained model"));
        }
        _ => {}
    }
    Ok(())
}

/// Integrates `z0` over time `t` (negative `t` runs backwards), propagating
/// the columns of `variations` (tangent vectors at `z0`) if given.
pub fn integrate(
    model: &dyn HamiltonianModel,
    z0: &PhasePoint,
    t: f64,
    spec: &IntegratorSpec,
    variations: Option<&DMatrix<f64>>,
) -> Result<Integration> {
    check_inputs(model, z0, spec)?;
    if let Some(v) = variations {
        if v.nrows() != 2 * model.dim() {
            return Err(Error::DimensionMismatch { expected: 2 * model.dim(), got: v.nrows() });
        }
    }
    let mut work = Work::new();
    let (z, v) = match spec.scheme {
        Scheme::ImplicitMidpoint => midpoint::run(model, &z0.to_vector(), t, spec, variations, &mut work)?,
        Scheme::Rattle => {
            let c = model.constraint().expect("checked");
            rattle::run(model, c, &z0.to_vector(), t, spec, variations, &mut work)?
        }
        Scheme::ReferenceRk => reference::run(model, &z0.to_vector(), t, spec, variations, &mut work)?,
    };
    Ok(Integration {
        z: PhasePoint::from_vector(&z),
        variations: v,
        t,
        hessian_fd: work.hessian_fd,
        stats: work.stats,
    })
}

/// Time-`t` flow `φ_t(z0)`.
pub fn flow(model: &dyn HamiltonianModel, z0: &PhasePoint, t: f64, spec: &IntegratorSpec) -> Result<PhasePoint> {
    Ok(integrate(model, z0, t, spec, None)?.z)
}

/// Time-`t` flow with its full Jacobian `Dφ_t(z0)`.
pub fn flow_with_tangent(
    model: &dyn HamiltonianModel,
    z0: &PhasePoint,
    t: f64,
    spec: &IntegratorSpec,
) -> Result<TangentFlowState> {
    let id = DMatrix::identity(2 * model.dim(), 2 * model.dim());
    let out = integrate(model, z0, t, spec, Some(&id))?;
    Ok(TangentFlowState {
        z: out.z,
        j: out.variations.expect("requested"),
        t,
        hessian_fd: out.hessian_fd,
    })
}

/// `‖χ_θ(φ_{θ^{p−1} t}(z0)) − φ_t(χ_θ(z0))‖` with `χ_θ(x, y) = (x, θy)`.
pub fn rescaling_residual(
    model: &dyn HamiltonianModel,
    z0: &PhasePoint,
    theta: f64,
    t: f64,
    spec: &IntegratorSpec,
) -> Result<f64> {
    let p = model
        .homogeneity_degree()
        .ok_or_else(|| Error::invalid("rescaling residual needs a homogeneous model"))?;
    if !(theta > 0.0) {
        return Err(Error::invalid("theta must be positive"));
    }
    if theta == 1.0 {
        return Ok(0.0);
    }
    let scale = |z: &PhasePoint| PhasePoint { x: z.x.clone(), y: &z.y * theta };
    let lhs = scale(&flow(model, z0, theta.powf(p - 1.0) * t, spec)?);
    let rhs = flow(model, &scale(z0), t, spec)?;
    Ok(lhs.distance(&rhs))
}

/// States at every step of the integration, starting with `(0, z0)`.
pub fn trajectory(
    model: &dyn HamiltonianModel,
    z0: &PhasePoint,
    t: f64,
    spec: &IntegratorSpec,
) -> Result<Vec<(f64, PhasePoint)>> {
    if spec.scheme == Scheme::ReferenceRk {
        return Err(Error::invalid("trajectory dumps use a fixed-step scheme"));
    }
    check_inputs(model, z0, spec)?;
    let mut out = vec![(0.0, z0.clone())];
    let mut cur = z0.clone();
    let mut time = 0.0;
    for h in step_sizes(t, spec.step) {
        let one = IntegratorSpec { step: h.abs(), ..spec.clone() };
        cur = flow(model, &cur, h, &one)?;
        time += h;
        out.push((time, cur.clone()));
    }
    Ok(out)
}

/// Number formatting shared by every CSV/JSON writer: 12 significant digits.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    format!("{v:.11e}")
}

/// Writes `t,x1..xn,y1..yn,H` rows.
pub fn write_trajectory_csv<W: Write>(
    model: &dyn HamiltonianModel,
    traj: &[(f64, PhasePoint)],
    mut w: W,
) -> std::io::Result<()> {
    let n = model.dim();
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=n).map(|i| format!("y{i}")));
    header.push("H".into());
    writeln!(w, "{}", header.join(","))?;
    for (t, z) in traj {
        let mut row = vec![fmt_num(*t)];
        row.extend(z.x.iter().map(|v| fmt_num(*v)));
        row.extend(z.y.iter().map(|v| fmt_num(*v)));
        row.push(fmt_num(model.energy(&z.x, &z.y)));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Basis of the tangent space at `z = (q, p)` of the constrained phase
/// space `{g(q) = 0, G(q) p = 0}`.
pub fn constrained_tangent_basis(c: &dyn ConstraintSet, z: &PhasePoint) -> DMatrix<f64> {
    let m = z.dim();
    let g = c.jacobian(&z.x);
    let hs = c.hessians(&z.x);
    let tq = c.tangent_basis(&z.x);
    let k = tq.ncols();
    // For dq ∈ T_qM pick dp = tangent part + normal correction solving
    // G dp = −[pᵀ ∇²g_i dq]_i.
    let ggt_inv = (&g * g.transpose()).try_inverse().expect("full-rank constraint");
    let mut basis = DMatrix::zeros(2 * m, 2 * k);
    for j in 0..k {
        let dq = tq.column(j).into_owned();
        let rhs = DVector::from_fn(hs.len(), |i, _| -(z.y.transpose() * &hs[i] * &dq)[0]);
        let dp = g.transpose() * (&ggt_inv * rhs);
        basis.view_mut((0, j), (m, 1)).copy_from(&dq);
        basis.view_mut((m, j), (m, 1)).copy_from(&dp);
        basis.view_mut((m, k + j), (m, 1)).copy_from(&tq.column(j));
    }
    basis
}

/// `max |(JB)ᵀΩ(JB) − BᵀΩB|` over a basis `B` of the constrained tangent
/// space at `z0`: the symplecticity defect of a constrained flow map.
pub fn constrained_symplecticity_defect(c: &dyn ConstraintSet, z0: &PhasePoint, j: &DMatrix<f64>) -> f64 {
    let b = constrained_tangent_basis(c, z0);
    let om = omega(z0.dim());
    let jb = j * &b;
    let before = b.transpose() * &om * &b;
    let after = jb.transpose() * &om * &jb;
    (after - before).amax()
}

/// Symplecticity defect appropriate to the model: unconstrained models use
/// `‖JᵀΩJ − Ω‖_∞`, constrained ones the restricted form.
pub fn flow_symplecticity_defect(model: &dyn HamiltonianModel, z0: &PhasePoint, j: &DMatrix<f64>) -> f64 {
    match model.constraint() {
        Some(c) => constrained_symplecticity_defect(c, z0, j),
        None => symplecticity_defect(j),
    }
}

#[cfg(test)]
mod tests;
