//! Conjugate loci: first conjugate times along unit-speed geodesic rays from
//! a base point, the endpoint curve they trace, and its cusps.

mod surface;
mod trace;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{integrate, IntegratorSpec};
use crate::linalg::{oriented_complement, svd_sorted};
use crate::phase::{HamiltonianModel, PhasePoint};

pub use surface::{trace_locus_3d, LocusSurface, SurfaceOptions, UmbilicCandidate};
pub use trace::{trace_locus, CuspMarker, LocusCurve, LocusOptions, LocusPoint};

/// Tolerances for locating conjugate times along a ray.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RayOptions {
    /// Bisection stops once the bracket is shorter than this.
    pub t_tol: f64,
    /// Normalized transverse singular values below this count as zero.
    pub sigma_tol: f64,
    /// Local minima of the normalized σ_min below this are refined as
    /// possible touching zeros.
    pub touch_ratio: f64,
}

impl Default for RayOptions {
    fn default() -> Self {
        Self { t_tol: 1e-8, sigma_tol: 1e-6, touch_ratio: 0.05 }
    }
}

/// First conjugate point found along one ray.
#[derive(Debug, Clone)]
pub struct ConjugatePoint {
    /// Unit direction in the intrinsic momentum coordinates.
    pub direction: DVector<f64>,
    /// Unit-speed initial momentum.
    pub momentum: DVector<f64>,
    pub t_star: f64,
    pub end: PhasePoint,
    pub degeneracy: usize,
    /// Transverse singular values at `t_star`, normalized by the size of
    /// the propagated Jacobi fields, descending.
    pub sigma: Vec<f64>,
    /// `|D_y X · y − t* ∇_yH(end)| / |t* ∇_yH(end)|`.
    pub radial_defect: f64,
    /// Position part of the extra variation seeded by the caller, if any.
    pub extra: Option<DVector<f64>>,
}

impl ConjugatePoint {
    /// Euclidean unit vector of the endpoint velocity.
    pub fn velocity(&self, model: &dyn HamiltonianModel) -> DVector<f64> {
        let v = model.gradient(&self.end.x, &self.end.y).1;
        let nv = v.norm();
        if nv > 0.0 {
            v / nv
        } else {
            v
        }
    }
}

#[derive(Clone)]
struct Sample {
    t: f64,
    z: PhasePoint,
    v: DMatrix<f64>,
    det: f64,
    ratio: f64,
    sigma: Vec<f64>,
}

/// Geodesic rays issuing from a fixed base point.
pub struct RayFan<'a> {
    model: &'a dyn HamiltonianModel,
    q: DVector<f64>,
    spec: IntegratorSpec,
    /// Columns span the admissible initial momenta (identity for charts,
    /// an orthonormal tangent basis for constrained models).
    basis: DMatrix<f64>,
    pub options: RayOptions,
}

impl<'a> RayFan<'a> {
    pub fn new(model: &'a dyn HamiltonianModel, q: &DVector<f64>, spec: IntegratorSpec) -> Result<Self> {
        spec.validate()?;
        let n = model.dim();
        if q.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: q.len() });
        }
        let basis = match model.constraint() {
            Some(c) => {
                if c.value(q).amax() > 1e-10 {
                    return Err(Error::InvalidInput("base point is off the constraint surface".into()));
                }
                c.tangent_basis(q)
            }
            None => DMatrix::identity(n, n),
        };
        if basis.ncols() < 2 {
            return Err(Error::InvalidInput("conjugate loci need at least two intrinsic dimensions".into()));
        }
        Ok(Self { model, q: q.clone(), spec, basis, options: RayOptions::default() })
    }

    pub fn with_options(mut self, options: RayOptions) -> Self {
        self.options = options;
        self
    }

    pub fn model(&self) -> &'a dyn HamiltonianModel {
        self.model
    }

    pub fn base(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn spec(&self) -> &IntegratorSpec {
        &self.spec
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Number of intrinsic dimensions (`n` for charts, `m − c` on surfaces).
    pub fn intrinsic_dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Unit-speed momentum (`H = ½`) in the direction `w`.
    pub fn momentum(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        if w.len() != self.intrinsic_dim() {
            return Err(Error::DimensionMismatch { expected: self.intrinsic_dim(), got: w.len() });
        }
        let y = &self.basis * w;
        let h = self.model.energy(&self.q, &y);
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidInput("direction has non-positive energy".into()));
        }
        Ok(y / (2.0 * h).sqrt())
    }

    /// Derivative of [`RayFan::momentum`] along `dw`.
    pub fn momentum_derivative(&self, w: &DVector<f64>, dw: &DVector<f64>) -> Result<DVector<f64>> {
        let y0 = &self.basis * w;
        let dy0 = &self.basis * dw;
        let h = self.model.energy(&self.q, &y0);
        if !(h > 0.0) {
            return Err(Error::InvalidInput("direction has non-positive energy".into()));
        }
        let s = (2.0 * h).sqrt();
        let gy = self.model.gradient(&self.q, &y0).1;
        let ds = gy.dot(&dy0) / s;
        Ok(dy0 / s - y0 * (ds / (s * s)))
    }

    /// Domain directions complementary to the ray, oriented with `w`.
    fn transverse_seeds(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let wc = DMatrix::from_column_slice(w.len(), 1, w.as_slice());
        &self.basis * oriented_complement(&wc)
    }

    /// Codomain frame orthogonal to the velocity (and the constraint normals).
    fn codomain_frame(&self, z: &PhasePoint) -> DMatrix<f64> {
        let vel = self.model.gradient(&z.x, &z.y).1;
        let n = self.model.dim();
        let mut cols: Vec<DVector<f64>> = Vec::new();
        if let Some(c) = self.model.constraint() {
            let nb = c.normal_basis(&z.x);
            cols.extend(nb.column_iter().map(|col| col.into_owned()));
        }
        cols.push(vel);
        let m = DMatrix::from_columns(&cols);
        debug_assert_eq!(m.nrows(), n);
        oriented_complement(&m)
    }

    fn sample(&self, t: f64, z: PhasePoint, v: DMatrix<f64>, k: usize) -> Sample {
        let n = self.model.dim();
        let f = self.codomain_frame(&z);
        let dx = v.view((0, 0), (n, k));
        let b = f.transpose() * dx;
        let det = b.determinant();
        let scale = svd_sorted(&v.columns(0, k).into_owned()).sigma[0].max(1e-300);
        let sigma: Vec<f64> = svd_sorted(&b).sigma.iter().map(|s| s / scale).collect();
        let ratio = sigma.last().copied().unwrap_or(0.0);
        Sample { t, z, v, det, ratio, sigma }
    }

    fn advance(&self, from: &Sample, dt: f64, k: usize) -> Result<Sample> {
        let out = integrate(self.model, &from.z, dt, &self.spec, Some(&from.v))?;
        Ok(self.sample(from.t + dt, out.z, out.variations.expect("variations requested"), k))
    }

    /// First conjugate time along the unit-speed ray in direction `w`
    /// (intrinsic coordinates, any nonzero length), searched in
    /// `(0, t_max]`. `extra` seeds one more momentum variation whose
    /// position response is reported in [`ConjugatePoint::extra`].
    pub fn first_conjugate(
        &self,
        w: &DVector<f64>,
        t_max: f64,
        extra: Option<&DVector<f64>>,
    ) -> Result<Option<ConjugatePoint>> {
        if !(t_max > 0.0) || !t_max.is_finite() {
            return Err(Error::InvalidInput("t_max must be positive".into()));
        }
        let nw = w.norm();
        if nw == 0.0 {
            return Err(Error::InvalidInput("direction must be nonzero".into()));
        }
        let w = w / nw;
        let n = self.model.dim();
        let y = self.momentum(&w)?;
        let seeds = self.transverse_seeds(&w);
        let k = seeds.ncols();
        let ncols = k + 1 + usize::from(extra.is_some());
        let mut v0 = DMatrix::zeros(2 * n, ncols);
        v0.view_mut((n, 0), (n, k)).copy_from(&seeds);
        v0.view_mut((n, k), (n, 1)).copy_from(&y);
        if let Some(e) = extra {
            if e.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: e.len() });
            }
            v0.view_mut((n, k + 1), (n, 1)).copy_from(e);
        }
        let z0 = PhasePoint { x: self.q.clone(), y: y.clone() };
        let h = self.spec.step;
        let start = Sample { t: 0.0, z: z0, v: v0, det: 0.0, ratio: 0.0, sigma: vec![0.0; k] };

        let mut prev: Option<Sample> = None;
        let mut cur = self.advance(&start, h.min(t_max), k)?;
        while cur.t < t_max * (1.0 - 1e-12) {
            let dt = h.min(t_max - cur.t);
            let next = self.advance(&cur, dt, k)?;
            if cur.det.signum() != next.det.signum() && cur.det != 0.0 {
                let hit = self.bisect(&cur, &next, k)?;
                return Ok(Some(self.finish(hit, &w, &y, k)));
            }
            if let Some(p) = &prev {
                if cur.ratio < self.options.touch_ratio && cur.ratio < p.ratio && cur.ratio <= next.ratio {
                    let hit = self.golden(p, next.t, k)?;
                    if hit.ratio <= self.options.sigma_tol {
                        return Ok(Some(self.finish(hit, &w, &y, k)));
                    }
                }
            }
            prev = Some(cur);
            cur = next;
        }
        Ok(None)
    }

    fn bisect(&self, lo: &Sample, hi: &Sample, k: usize) -> Result<Sample> {
        let s0 = lo.det.signum();
        let (mut a, mut b) = (0.0, hi.t - lo.t);
        let mut best = hi.clone();
        while b - a > self.options.t_tol {
            let mid = 0.5 * (a + b);
            let s = self.advance(lo, mid, k)?;
            if s.det.signum() == s0 {
                a = mid;
            } else {
                b = mid;
                best = s;
            }
        }
        let mid = 0.5 * (a + b);
        let s = self.advance(lo, mid, k)?;
        Ok(if s.ratio <= best.ratio { s } else { best })
    }

    /// Golden-section minimization of the normalized σ_min on
    /// `[from.t, t_hi]`.
    fn golden(&self, from: &Sample, t_hi: f64, k: usize) -> Result<Sample> {
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (0.0, t_hi - from.t);
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let mut sc = self.advance(from, c, k)?;
        let mut sd = self.advance(from, d, k)?;
        while b - a > self.options.t_tol {
            if sc.ratio < sd.ratio {
                b = d;
                d = c;
                sd = sc;
                c = b - g * (b - a);
                sc = self.advance(from, c, k)?;
            } else {
                a = c;
                c = d;
                sc = sd;
                d = a + g * (b - a);
                sd = self.advance(from, d, k)?;
            }
        }
        Ok(if sc.ratio < sd.ratio { sc } else { sd })
    }

    fn finish(&self, s: Sample, w: &DVector<f64>, y: &DVector<f64>, k: usize) -> ConjugatePoint {
        let n = self.model.dim();
        let zeros = s.sigma.iter().filter(|&&v| v <= self.options.sigma_tol).count().max(1);
        let vel = self.model.gradient(&s.z.x, &s.z.y).1 * s.t;
        let radial = s.v.view((0, k), (n, 1)).column(0).into_owned();
        let radial_defect = (&radial - &vel).norm() / vel.norm().max(1e-300);
        let extra = (s.v.ncols() > k + 1).then(|| s.v.view((0, k + 1), (n, 1)).column(0).into_owned());
        ConjugatePoint {
            direction: w.clone(),
            momentum: y.clone(),
            t_star: s.t,
            end: s.z,
            degeneracy: zeros,
            sigma: s.sigma,
            radial_defect,
            extra,
        }
    }
}

/// Unit direction on `S^{d−1}` from angles: `s` for `d = 2`, polar/azimuth
/// `(θ, φ)` for `d = 3`.
pub fn direction_from_angles(angles: &[f64]) -> Result<DVector<f64>> {
    match angles {
        [s] => Ok(DVector::from_vec(vec![s.cos(), s.sin()])),
        [th, ph] => Ok(DVector::from_vec(vec![th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()])),
        _ => Err(Error::InvalidInput("expected one or two direction angles".into())),
    }
}

/// First conjugate time along the unit-speed geodesic from `q` with initial
/// momentum direction `direction` (ambient momentum; projected onto the
/// tangent space for constrained models). Returns `(t*, m)`.
pub fn first_conjugate_time(
    model: &dyn HamiltonianModel,
    q: &DVector<f64>,
    direction: &DVector<f64>,
    t_max: f64,
    spec: &IntegratorSpec,
) -> Result<Option<(f64, usize)>> {
    let fan = RayFan::new(model, q, spec.clone())?;
    if direction.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: direction.len() });
    }
    let w = fan.basis.transpose() * direction;
    Ok(fan.first_conjugate(&w, t_max, None)?.map(|c| (c.t_star, c.degeneracy)))
}

#[cfg(test)]
mod tests;
