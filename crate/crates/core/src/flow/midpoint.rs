//! Implicit midpoint rule `z₁ = z₀ + h·S∇H((z₀ + z₁)/2)`.

use nalgebra::{DMatrix, DVector};

use super::{step_sizes, IntegratorSpec, Work};
use crate::error::{Error, Result};
use crate::phase::HamiltonianModel;

/// `S∇H` with `S = [[0, I], [−I, 0]]`.
pub(crate) fn field(model: &dyn HamiltonianModel, z: &DVector<f64>, work: &mut Work) -> DVector<f64> {
    let (gx, gy) = work.gradient(model, z);
    let n = gx.len();
    let mut f = DVector::zeros(2 * n);
    f.rows_mut(0, n).copy_from(&gy);
    f.rows_mut(n, n).copy_from(&(-gx));
    f
}

/// `S·Hess` for a `2n × 2n` Hessian.
pub(crate) fn s_times(hess: &DMatrix<f64>) -> DMatrix<f64> {
    let n = hess.nrows() / 2;
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    out.rows_mut(0, n).copy_from(&hess.rows(n, n));
    out.rows_mut(n, n).copy_from(&(-hess.rows(0, n)));
    out
}

fn solve_step(
    model: &dyn HamiltonianModel,
    z0: &DVector<f64>,
    h: f64,
    spec: &IntegratorSpec,
    step_idx: usize,
    work: &mut Work,
) -> Result<DVector<f64>> {
    let d = z0.len();
    let residual = |z1: &DVector<f64>, work: &mut Work| {
        let mid = (z0 + z1) * 0.5;
        z1 - z0 - field(model, &mid, work) * h
    };
    let mut z1 = z0 + field(model, z0, work) * h;
    let mut f = residual(&z1, work);
    for _ in 0..spec.newton_max_iter {
        let scale = 1.0 + z1.amax();
        if f.amax() <= spec.newton_tol * scale {
            return Ok(z1);
        }
        work.stats.newton_iters += 1;
        let mid = (z0 + &z1) * 0.5;
        let jac = DMatrix::identity(d, d) - s_times(&work.hessian(model, &mid)) * (0.5 * h);
        let delta = jac.lu().solve(&(-&f)).ok_or_else(|| Error::IntegrationFailure {
            step: step_idx,
            reason: "singular Newton matrix".into(),
        })?;
        let fnorm = f.norm();
        let mut alpha = 1.0;
        let (trial, ft) = loop {
            let trial = &z1 + &delta * alpha;
            let ft = residual(&trial, work);
            if ft.norm() < fnorm || alpha < 1.0 / 64.0 {
                break (trial, ft);
            }
            alpha *= 0.5;
        };
        let stalled = (&delta * alpha).amax() <= 4.0 * f64::EPSILON * scale;
        z1 = trial;
        f = ft;
        if stalled && f.amax() <= 1e3 * spec.newton_tol * scale {
            return Ok(z1);
        }
    }
    if f.amax() <= spec.newton_tol * (1.0 + z1.amax()) {
        return Ok(z1);
    }
    Err(Error::IntegrationFailure {
        step: step_idx,
        reason: format!("midpoint Newton did not converge (residual {:.3e})", f.amax()),
    })
}

pub(crate) fn run(
    model: &dyn HamiltonianModel,
    z0: &DVector<f64>,
    t: f64,
    spec: &IntegratorSpec,
    variations: Option<&DMatrix<f64>>,
    work: &mut Work,
) -> Result<(DVector<f64>, Option<DMatrix<f64>>)> {
    let d = z0.len();
    let mut z = z0.clone();
    let mut v = variations.cloned();
    for (idx, h) in step_sizes(t, spec.step).into_iter().enumerate() {
        let z1 = solve_step(model, &z, h, spec, idx, work)?;
        if let Some(vm) = v.as_mut() {
            // Cayley form of the linearized step: (I − M) V₁ = (I + M) V₀.
            let mid = (&z + &z1) * 0.5;
            let m = s_times(&work.hessian(model, &mid)) * (0.5 * h);
            let lhs = DMatrix::identity(d, d) - &m;
            let rhs = (DMatrix::identity(d, d) + m) * &*vm;
            *vm = lhs.lu().solve(&rhs).ok_or_else(|| Error::IntegrationFailure {
                step: idx,
                reason: "singular tangent step".into(),
            })?;
        }
        z = z1;
        work.stats.steps += 1;
    }
    Ok((z, v))
}
