//! RATTLE for `H(q, p) = ½|p|² + V(q)` on `{g(q) = 0}` with the hidden
//! constraint `G(q) p = 0`.

use nalgebra::{DMatrix, DVector};

use super::{step_sizes, IntegratorSpec, Work};
use crate::error::{Error, Result};
use crate::phase::{ConstraintSet, HamiltonianModel};

struct Potential<'a> {
    model: &'a dyn HamiltonianModel,
    m: usize,
}

impl Potential<'_> {
    fn force(&self, q: &DVector<f64>, work: &mut Work) -> DVector<f64> {
        let mut z = DVector::zeros(2 * self.m);
        z.rows_mut(0, self.m).copy_from(q);
        work.gradient(self.model, &z).0
    }

    fn hessian(&self, q: &DVector<f64>, work: &mut Work) -> DMatrix<f64> {
        let mut z = DVector::zeros(2 * self.m);
        z.rows_mut(0, self.m).copy_from(q);
        work.hessian(self.model, &z).view((0, 0), (self.m, self.m)).into_owned()
    }
}

fn weighted_hessian(hs: &[DMatrix<f64>], w: &DVector<f64>, m: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m, m);
    for (h, wk) in hs.iter().zip(w.iter()) {
        out += h * *wk;
    }
    out
}

fn fail(step: usize, reason: &str) -> Error {
    Error::IntegrationFailure { step, reason: reason.into() }
}

#[allow(clippy::too_many_arguments)]
fn step(
    pot: &Potential,
    c: &dyn ConstraintSet,
    q0: &DVector<f64>,
    p0: &DVector<f64>,
    h: f64,
    spec: &IntegratorSpec,
    idx: usize,
    work: &mut Work,
    var: Option<&mut DMatrix<f64>>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let m = pot.m;
    let f0 = pot.force(q0, work);
    let g0 = c.jacobian(q0);
    let free = q0 + p0 * h - &f0 * (0.5 * h * h);
    let mut lambda = DVector::zeros(c.codim());
    let position = |lambda: &DVector<f64>| &free - g0.transpose() * lambda * (0.5 * h * h);
    let mut q1 = position(&lambda);
    let mut converged = false;
    for _ in 0..spec.newton_max_iter {
        let r = c.value(&q1);
        if r.amax() <= spec.newton_tol {
            converged = true;
            break;
        }
        work.stats.newton_iters += 1;
        let jac = c.jacobian(&q1) * g0.transpose() * (-0.5 * h * h);
        let dl = jac.lu().solve(&(-r)).ok_or_else(|| fail(idx, "singular constraint Jacobian"))?;
        lambda += dl;
        q1 = position(&lambda);
    }
    if !converged && c.value(&q1).amax() > spec.newton_tol {
        return Err(fail(idx, "RATTLE position projection did not converge"));
    }
    let p_half = p0 - (&f0 + g0.transpose() * &lambda) * (0.5 * h);
    let f1 = pot.force(&q1, work);
    let g1 = c.jacobian(&q1);
    let gg1 = &g1 * g1.transpose();
    let gg1_lu = gg1.clone().lu();
    let mu = gg1_lu
        .solve(&(&g1 * (&p_half - &f1 * (0.5 * h)) / (0.5 * h)))
        .ok_or_else(|| fail(idx, "singular momentum projection"))?;
    let p1 = &p_half - (&f1 + g1.transpose() * &mu) * (0.5 * h);

    if let Some(v) = var {
        let hs0 = c.hessians(q0);
        let hs1 = c.hessians(&q1);
        let k0 = pot.hessian(q0, work) + weighted_hessian(&hs0, &lambda, m);
        let k1 = pot.hessian(&q1, work) + weighted_hessian(&hs1, &mu, m);
        let dq0 = v.rows(0, m).into_owned();
        let dp0 = v.rows(m, m).into_owned();
        let lam_mat = (&g1 * g0.transpose() * (0.5 * h * h)).lu();
        let rhs = &g1 * (&dq0 + &dp0 * h - &k0 * &dq0 * (0.5 * h * h));
        let dlam = lam_mat.solve(&rhs).ok_or_else(|| fail(idx, "singular tangent projection"))?;
        let dp_half = &dp0 - (&k0 * &dq0 + g0.transpose() * &dlam) * (0.5 * h);
        let dq1 = &dq0 + &dp_half * h;
        let mut rhs = &g1 * (&dp_half - &k1 * &dq1 * (0.5 * h));
        for (k, hk) in hs1.iter().enumerate() {
            let row = p1.transpose() * hk * &dq1;
            for col in 0..row.ncols() {
                rhs[(k, col)] += row[(0, col)];
            }
        }
        let dmu = gg1_lu.solve(&(rhs / (0.5 * h))).ok_or_else(|| fail(idx, "singular tangent projection"))?;
        let dp1 = &dp_half - (&k1 * &dq1 + g1.transpose() * &dmu) * (0.5 * h);
        v.rows_mut(0, m).copy_from(&dq1);
        v.rows_mut(m, m).copy_from(&dp1);
    }
    Ok((q1, p1))
}

pub(crate) fn run(
    model: &dyn HamiltonianModel,
    c: &dyn ConstraintSet,
    z0: &DVector<f64>,
    t: f64,
    spec: &IntegratorSpec,
    variations: Option<&DMatrix<f64>>,
    work: &mut Work,
) -> Result<(DVector<f64>, Option<DMatrix<f64>>)> {
    let m = model.dim();
    let pot = Potential { model, m };
    let mut q = z0.rows(0, m).into_owned();
    let mut p = z0.rows(m, m).into_owned();
    let mut v = variations.cloned();
    for (idx, h) in step_sizes(t, spec.step).into_iter().enumerate() {
        let (q1, p1) = step(&pot, c, &q, &p, h, spec, idx, work, v.as_mut())?;
        q = q1;
        p = p1;
        work.stats.steps += 1;
    }
    let mut z = DVector::zeros(2 * m);
    z.rows_mut(0, m).copy_from(&q);
    z.rows_mut(m, m).copy_from(&p);
    Ok((z, v))
}
