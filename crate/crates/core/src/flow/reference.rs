//! Dormand–Prince 5(4) explicit Runge–Kutta. Used as an accuracy oracle
//! only; it is not symplectic.

use nalgebra::{DMatrix, DVector};

use super::midpoint::{field, s_times};
use super::{FlowStats, IntegratorSpec, Work};
use crate::error::{Error, Result};
use crate::phase::{HamiltonianModel, PhasePoint};

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Right-hand side on the stacked state `(z, vec(V))`.
struct System<'a> {
    model: &'a dyn HamiltonianModel,
    d: usize,
    k: usize,
}

impl System<'_> {
    fn base(&self, z: &DVector<f64>, work: &mut Work) -> DVector<f64> {
        let Some(c) = self.model.constraint() else {
            return field(self.model, z, work);
        };
        // q' = p, p' = −∇V − Gᵀλ with λ from the twice-differentiated
        // constraint G p' + [pᵀ∇²g_i p]_i = 0.
        let m = self.d / 2;
        let q = z.rows(0, m).into_owned();
        let p = z.rows(m, m).into_owned();
        let (gx, _) = work.gradient(self.model, z);
        let g = c.jacobian(&q);
        let curv = DVector::from_iterator(c.codim(), c.hessians(&q).iter().map(|hk| (p.transpose() * hk * &p)[0]));
        let lambda = (&g * g.transpose())
            .lu()
            .solve(&(curv - &g * &gx))
            .unwrap_or_else(|| DVector::zeros(c.codim()));
        let mut f = DVector::zeros(self.d);
        f.rows_mut(0, m).copy_from(&p);
        f.rows_mut(m, m).copy_from(&(-(gx + g.transpose() * lambda)));
        f
    }

    fn rhs(&self, state: &DVector<f64>, work: &mut Work) -> DVector<f64> {
        let z = state.rows(0, self.d).into_owned();
        let fz = self.base(&z, work);
        let mut out = DVector::zeros(state.len());
        out.rows_mut(0, self.d).copy_from(&fz);
        if self.k == 0 {
            return out;
        }
        let v = DMatrix::from_column_slice(self.d, self.k, &state.as_slice()[self.d..]);
        let dv = if self.model.constraint().is_none() {
            s_times(&work.hessian(self.model, &z)) * v
        } else {
            // Directional central differences of the constrained field.
            let mut dv = DMatrix::zeros(self.d, self.k);
            for col in 0..self.k {
                let dir = v.column(col).into_owned();
                let nrm = dir.norm();
                if nrm == 0.0 {
                    continue;
                }
                let eps = 1e-5 * (1.0 + z.amax()) / nrm;
                let fp = self.base(&(&z + &dir * eps), work);
                let fm = self.base(&(&z - &dir * eps), work);
                dv.set_column(col, &((fp - fm) / (2.0 * eps)));
            }
            dv
        };
        out.rows_mut(self.d, self.d * self.k).copy_from_slice(dv.as_slice());
        out
    }

    fn stages(&self, y: &DVector<f64>, h: f64, k1: DVector<f64>, work: &mut Work) -> [DVector<f64>; 7] {
        let mut ks: Vec<DVector<f64>> = vec![k1];
        for s in 1..7 {
            let mut ys = y.clone();
            for (j, kj) in ks.iter().enumerate() {
                if A[s][j] != 0.0 {
                    ys.axpy(h * A[s][j], kj, 1.0);
                }
            }
            ks.push(self.rhs(&ys, work));
        }
        ks.try_into().expect("seven stages")
    }
}

fn pack(z0: &DVector<f64>, variations: Option<&DMatrix<f64>>) -> (DVector<f64>, usize) {
    let d = z0.len();
    let k = variations.map_or(0, |v| v.ncols());
    let mut y = DVector::zeros(d * (1 + k));
    y.rows_mut(0, d).copy_from(z0);
    if let Some(v) = variations {
        y.rows_mut(d, d * k).copy_from_slice(v.as_slice());
    }
    (y, k)
}

fn unpack(y: &DVector<f64>, d: usize, k: usize, want: bool) -> (DVector<f64>, Option<DMatrix<f64>>) {
    let z = y.rows(0, d).into_owned();
    let v = want.then(|| DMatrix::from_column_slice(d, k, &y.as_slice()[d..]));
    (z, v)
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
    let (mut y, k) = pack(z0, variations);
    let sys = System { model, d, k };
    let tol = spec.rk_tol;
    let dir = if t < 0.0 { -1.0 } else { 1.0 };
    let span = t.abs();
    let mut done = 0.0;
    let mut h = spec.step.min(span.max(f64::MIN_POSITIVE));
    let mut k1 = sys.rhs(&y, work);
    let mut rejects = 0usize;
    while span - done > 1e-14 * span.max(1.0) {
        h = h.min(span - done);
        let ks = sys.stages(&y, dir * h, k1.clone(), work);
        let mut y5 = y.clone();
        let mut err = DVector::zeros(y.len());
        for s in 0..7 {
            y5.axpy(dir * h * B5[s], &ks[s], 1.0);
            err.axpy(dir * h * (B5[s] - B4[s]), &ks[s], 1.0);
        }
        let mut e: f64 = 0.0;
        for i in 0..y.len() {
            let sc = tol + tol * y[i].abs().max(y5[i].abs());
            e = e.max(err[i].abs() / sc);
        }
        if !e.is_finite() {
            return Err(Error::IntegrationFailure { step: work.stats.steps, reason: "non-finite state".into() });
        }
        if e <= 1.0 {
            done += h;
            y = y5;
            // First-same-as-last: the seventh stage is f at the new point.
            k1 = ks[6].clone();
            work.stats.steps += 1;
        } else {
            rejects += 1;
            if rejects > 100_000 {
                return Err(Error::IntegrationFailure { step: work.stats.steps, reason: "step size underflow".into() });
            }
        }
        let fac = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
        h *= fac;
        if h < 1e-14 * span.max(1.0) {
            return Err(Error::IntegrationFailure { step: work.stats.steps, reason: "step size underflow".into() });
        }
    }
    Ok(unpack(&y, d, k, variations.is_some()))
}

/// Dormand–Prince fifth-order solution with `n_steps` equal steps and no
/// error control, for fixed-budget comparisons against the symplectic
/// schemes. Returns the endpoint, propagated variations and work counters.
pub fn reference_fixed_step(
    model: &dyn HamiltonianModel,
    z0: &PhasePoint,
    t: f64,
    n_steps: usize,
    variations: Option<&DMatrix<f64>>,
) -> Result<(PhasePoint, Option<DMatrix<f64>>, FlowStats)> {
    if n_steps == 0 {
        return Err(Error::invalid("n_steps must be positive"));
    }
    let mut work = Work::new();
    let zv = z0.to_vector();
    let d = zv.len();
    let (mut y, k) = pack(&zv, variations);
    let sys = System { model, d, k };
    let h = t / n_steps as f64;
    let mut k1 = sys.rhs(&y, &mut work);
    for _ in 0..n_steps {
        let ks = sys.stages(&y, h, k1.clone(), &mut work);
        for s in 0..6 {
            y.axpy(h * B5[s], &ks[s], 1.0);
        }
        k1 = ks[6].clone();
        work.stats.steps += 1;
    }
    let (z, v) = unpack(&y, d, k, variations.is_some());
    Ok((PhasePoint::from_vector(&z), v, work.stats))
}
