use std::f64::consts::PI;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{direction_from_angles, ConjugatePoint, RayFan, RayOptions};
use crate::boundary::{dirichlet, ConstrainedDirichlet, LagrangianBvp};
use crate::error::{Error, Result};
use crate::shooting::{solve, SolveOptions};
use crate::singularity::{classify, ClassifyOptions, SingularityReport, SingularityType};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocusOptions {
    /// Number of initial directions (at least 64).
    pub resolution: usize,
    pub t_max: f64,
    /// Angle interval; the full circle gives a closed curve.
    pub s_range: (f64, f64),
    pub refine_levels: usize,
    /// Gaps larger than this multiple of the median gap are refined.
    pub refine_factor: f64,
    /// Local minima of `|dX/ds|` below this fraction of the median are
    /// cusp candidates even without a sign change.
    pub cusp_tol: f64,
    /// Cusp refinement stops once the angle bracket is this narrow.
    pub s_tol: f64,
    pub ray: RayOptions,
    pub classify: ClassifyOptions,
}

impl Default for LocusOptions {
    fn default() -> Self {
        Self {
            resolution: 256,
            t_max: 10.0,
            s_range: (0.0, 2.0 * PI),
            refine_levels: 3,
            refine_factor: 4.0,
            cusp_tol: 0.05,
            s_tol: 1e-7,
            ray: RayOptions::default(),
            classify: ClassifyOptions::default(),
        }
    }
}

impl LocusOptions {
    fn closed(&self) -> bool {
        (self.s_range.1 - self.s_range.0 - 2.0 * PI).abs() < 1e-12
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 64 {
            return Err(Error::InvalidInput("locus resolution must be at least 64".into()));
        }
        if !(self.t_max > 0.0) || !(self.s_range.1 > self.s_range.0) {
            return Err(Error::InvalidInput("invalid t_max or direction range".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocusPoint {
    /// Direction parameters (one angle for surfaces, polar and azimuth
    /// angles for three-dimensional problems).
    pub s: Vec<f64>,
    pub t_star: f64,
    pub endpoint: DVector<f64>,
    pub degeneracy: usize,
    /// Signed speed of the endpoint along the locus, `⟨dX/ds, v̂_end⟩`.
    pub cusp_indicator: f64,
    pub cusp: bool,
    pub radial_defect: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CuspMarker {
    /// Index into [`LocusCurve::points`].
    pub index: usize,
    pub s: f64,
    pub kind: SingularityType,
    pub confirmed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocusCurve {
    pub points: Vec<LocusPoint>,
    pub cusps: Vec<CuspMarker>,
    pub closed: bool,
    /// Directions without a conjugate point in `(0, t_max]`.
    pub missing: usize,
}

impl LocusCurve {
    pub fn confirmed_cusps(&self) -> usize {
        self.cusps.iter().filter(|c| c.confirmed).count()
    }

    /// Largest distance between two endpoints.
    pub fn spread(&self) -> f64 {
        let mut best: f64 = 0.0;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                best = best.max((&a.endpoint - &b.endpoint).norm());
            }
        }
        best
    }

    /// Distance between the endpoints of the first and last direction.
    pub fn closure_gap(&self) -> Option<f64> {
        let (a, b) = (self.points.first()?, self.points.last()?);
        Some((&a.endpoint - &b.endpoint).norm())
    }
}

struct Ray {
    s: f64,
    hit: Option<ConjugatePoint>,
}

fn shoot(fan: &RayFan<'_>, s: f64, t_max: f64) -> Result<Ray> {
    let w = direction_from_angles(&[s])?;
    let dw = DVector::from_vec(vec![-s.sin(), s.cos()]);
    let dy = fan.momentum_derivative(&w, &dw)?;
    Ok(Ray { s, hit: fan.first_conjugate(&w, t_max, Some(&dy))? })
}

fn shoot_all(fan: &RayFan<'_>, angles: &[f64], t_max: f64) -> Result<Vec<Ray>> {
    angles.par_iter().map(|&s| shoot(fan, s, t_max)).collect()
}

/// `⟨dX/ds, v̂⟩ = t*′ |v| + ⟨v̂, ∂X/∂s⟩` at fixed time.
fn indicator(fan: &RayFan<'_>, cp: &ConjugatePoint, dt_ds: f64) -> f64 {
    let v = fan.model().gradient(&cp.end.x, &cp.end.y).1;
    let nv = v.norm();
    let along = cp.extra.as_ref().map(|e| e.dot(&v) / nv).unwrap_or(0.0);
    dt_ds * nv + along
}

/// Three-point derivative on a non-uniform grid.
fn derivative3(s: [f64; 3], f: [f64; 3]) -> f64 {
    let h1 = s[1] - s[0];
    let h2 = s[2] - s[1];
    -h2 / (h1 * (h1 + h2)) * f[0] + (h2 - h1) / (h1 * h2) * f[1] + h1 / (h2 * (h1 + h2)) * f[2]
}

/// Indicator values at every found ray, from finite differences of `t*`
/// over neighbouring rays.
fn indicators(fan: &RayFan<'_>, rays: &[Ray], closed: bool) -> Vec<Option<f64>> {
    let n = rays.len();
    let t = |j: usize| rays[j].hit.as_ref().map(|c| c.t_star);
    (0..n)
        .map(|i| {
            let cp = rays[i].hit.as_ref()?;
            let si = rays[i].s;
            let d = if closed {
                let (a, b) = ((i + n - 1) % n, (i + 1) % n);
                let sa = if a > i { rays[a].s - 2.0 * PI } else { rays[a].s };
                let sb = if b < i { rays[b].s + 2.0 * PI } else { rays[b].s };
                derivative3([sa, si, sb], [t(a)?, cp.t_star, t(b)?])
            } else if i == 0 {
                derivative_at_first([si, rays[1].s, rays[2].s], [cp.t_star, t(1)?, t(2)?])
            } else if i + 1 == n {
                derivative_at_last([rays[n - 3].s, rays[n - 2].s, si], [t(n - 3)?, t(n - 2)?, cp.t_star])
            } else {
                derivative3([rays[i - 1].s, si, rays[i + 1].s], [t(i - 1)?, cp.t_star, t(i + 1)?])
            };
            Some(indicator(fan, cp, d))
        })
        .collect()
}

fn derivative_at_first(s: [f64; 3], f: [f64; 3]) -> f64 {
    let h1 = s[1] - s[0];
    let h2 = s[2] - s[1];
    -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * f[0] + (h1 + h2) / (h1 * h2) * f[1] - h1 / (h2 * (h1 + h2)) * f[2]
}

fn derivative_at_last(s: [f64; 3], f: [f64; 3]) -> f64 {
    let h1 = s[1] - s[0];
    let h2 = s[2] - s[1];
    h2 / (h1 * (h1 + h2)) * f[0] - (h1 + h2) / (h1 * h2) * f[1] + (2.0 * h2 + h1) / (h2 * (h1 + h2)) * f[2]
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    v[v.len() / 2]
}

/// Solves the two-point problem from the base point to the conjugate
/// endpoint (over time `t*`) and classifies its singularity.
pub(crate) fn classify_conjugate(
    fan: &RayFan<'_>,
    cp: &ConjugatePoint,
    opts: &ClassifyOptions,
) -> Result<SingularityReport> {
    let model = fan.model();
    let spec = fan.spec().clone();
    let sopts = SolveOptions::default();
    if model.constraint().is_some() {
        let map = ConstrainedDirichlet::new(model, fan.base(), &cp.end.x, spec, cp.t_star)?;
        let u = map.near_basis().transpose() * &cp.momentum;
        let sol = solve(&map, &u, &sopts)?;
        classify(&map, &sol, opts)
    } else {
        let b = dirichlet(fan.base().as_slice(), cp.end.x.as_slice())?;
        let map = LagrangianBvp::with_time(model, b, spec, cp.t_star)?;
        let u = map.coordinates(&crate::PhasePoint { x: fan.base().clone(), y: cp.momentum.clone() });
        let sol = solve(&map, &u, &sopts)?;
        classify(&map, &sol, opts)
    }
}

/// Indicator at an arbitrary angle, with `t*′` from central differences of
/// tightly converged neighbouring rays.
fn indicator_at(fan: &RayFan<'_>, s: f64, t_max: f64) -> Result<Option<(f64, ConjugatePoint)>> {
    let delta = 1e-4;
    let Some(cp) = shoot(fan, s, t_max)?.hit else { return Ok(None) };
    let w = |x: f64| direction_from_angles(&[x]);
    let tp = fan.first_conjugate(&w(s + delta)?, t_max, None)?;
    let tm = fan.first_conjugate(&w(s - delta)?, t_max, None)?;
    match (tp, tm) {
        (Some(a), Some(b)) => {
            let d = (a.t_star - b.t_star) / (2.0 * delta);
            Ok(Some((indicator(fan, &cp, d), cp)))
        }
        _ => Ok(None),
    }
}

/// Bisection on the indicator sign inside `[a, b]`.
fn refine_sign_change(fan: &RayFan<'_>, mut a: f64, mut b: f64, opts: &LocusOptions) -> Result<Option<(f64, ConjugatePoint)>> {
    let Some((ga, _)) = indicator_at(fan, a, opts.t_max)? else { return Ok(None) };
    let mut last = None;
    while b - a > opts.s_tol {
        let mid = 0.5 * (a + b);
        let Some((g, cp)) = indicator_at(fan, mid, opts.t_max)? else { return Ok(None) };
        if g.signum() == ga.signum() {
            a = mid;
        } else {
            b = mid;
        }
        last = Some((mid, cp));
    }
    Ok(last)
}

/// Golden-section minimization of `|indicator|` inside `[a, b]`.
fn refine_minimum(fan: &RayFan<'_>, mut a: f64, mut b: f64, opts: &LocusOptions) -> Result<Option<(f64, ConjugatePoint)>> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let eval = |s: f64| -> Result<Option<(f64, ConjugatePoint)>> {
        Ok(indicator_at(fan, s, opts.t_max)?.map(|(v, cp)| (v.abs(), cp)))
    };
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (Some(mut fc), Some(mut fd)) = (eval(c)?, eval(d)?) else { return Ok(None) };
    while b - a > opts.s_tol.max(1e-6) {
        if fc.0 < fd.0 {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            let Some(v) = eval(c)? else { return Ok(None) };
            fc = v;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            let Some(v) = eval(d)? else { return Ok(None) };
            fd = v;
        }
    }
    Ok(Some(if fc.0 < fd.0 { (c, fc.1) } else { (d, fd.1) }))
}

fn to_point(s: f64, cp: &ConjugatePoint, g: f64) -> LocusPoint {
    LocusPoint {
        s: vec![s],
        t_star: cp.t_star,
        endpoint: cp.end.x.clone(),
        degeneracy: cp.degeneracy,
        cusp_indicator: g,
        cusp: false,
        radial_defect: cp.radial_defect,
    }
}

/// Pairs of consecutive rays (wrapping for closed curves).
fn pairs(n: usize, closed: bool) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect();
    if closed && n > 1 {
        out.push((n - 1, 0));
    }
    out
}

fn midpoint_angle(a: f64, b: f64) -> f64 {
    if b > a {
        0.5 * (a + b)
    } else {
        a + 0.5 * (b + 2.0 * PI - a)
    }
}

/// Conjugate locus of the base point over a one-parameter fan of unit-speed
/// directions.
pub fn trace_locus(fan: &RayFan<'_>, opts: &LocusOptions) -> Result<LocusCurve> {
    opts.validate()?;
    if fan.intrinsic_dim() != 2 {
        return Err(Error::InvalidInput("trace_locus needs a two-dimensional problem".into()));
    }
    let closed = opts.closed();
    let (s0, s1) = opts.s_range;
    let count = opts.resolution;
    let step = if closed { (s1 - s0) / count as f64 } else { (s1 - s0) / (count - 1) as f64 };
    let angles: Vec<f64> = (0..count).map(|i| s0 + step * i as f64).collect();
    let mut rays = shoot_all(fan, &angles, opts.t_max)?;

    for _ in 0..opts.refine_levels {
        let g = indicators(fan, &rays, closed);
        let gaps: Vec<f64> = pairs(rays.len(), closed)
            .iter()
            .filter_map(|&(i, j)| Some((&rays[i].hit.as_ref()?.end.x - &rays[j].hit.as_ref()?.end.x).norm()))
            .collect();
        let med = median(gaps);
        let mut new_angles = Vec::new();
        for (i, j) in pairs(rays.len(), closed) {
            let refine = match (&rays[i].hit, &rays[j].hit) {
                (Some(a), Some(b)) => {
                    let gap = (&a.end.x - &b.end.x).norm();
                    let flip = matches!((g[i], g[j]), (Some(x), Some(y)) if x.signum() != y.signum());
                    gap > opts.refine_factor * med || flip
                }
                (None, None) => false,
                _ => true,
            };
            if refine {
                let m = midpoint_angle(rays[i].s, rays[j].s);
                new_angles.push(if closed && m >= s0 + 2.0 * PI { m - 2.0 * PI } else { m });
            }
        }
        if new_angles.is_empty() {
            break;
        }
        rays.extend(shoot_all(fan, &new_angles, opts.t_max)?);
        rays.sort_by(|a, b| a.s.total_cmp(&b.s));
    }

    let g = indicators(fan, &rays, closed);
    let missing = rays.iter().filter(|r| r.hit.is_none()).count();
    let mut candidates: Vec<(f64, f64, bool)> = Vec::new();
    let abs_med = median(g.iter().flatten().map(|v| v.abs()).collect());
    // Indicator values this small are finite-difference noise (a locus
    // collapsed to a point, for instance).
    let floor = 1e-6 * (1.0 + median(rays.iter().filter_map(|r| r.hit.as_ref().map(|c| c.t_star)).collect()));
    let n = rays.len();
    for (i, j) in pairs(n, closed) {
        if let (Some(a), Some(b)) = (g[i], g[j]) {
            if a.signum() != b.signum() && a.abs().max(b.abs()) > floor {
                let sj = if j < i { rays[j].s + 2.0 * PI } else { rays[j].s };
                candidates.push((rays[i].s, sj, true));
            }
        }
    }
    for i in 0..n {
        let (im, ip) = match (i, closed) {
            (0, false) => continue,
            (_, false) if i + 1 == n => continue,
            _ => ((i + n - 1) % n, (i + 1) % n),
        };
        if let (Some(a), Some(b), Some(c)) = (g[im], g[i], g[ip]) {
            let flips = a.signum() != b.signum() || b.signum() != c.signum();
            if !flips && b.abs() < a.abs() && b.abs() <= c.abs() && b.abs() < opts.cusp_tol * abs_med
                && abs_med > floor
            {
                let sa = if im > i { rays[im].s - 2.0 * PI } else { rays[im].s };
                let sb = if ip < i { rays[ip].s + 2.0 * PI } else { rays[ip].s };
                candidates.push((sa, sb, false));
            }
        }
    }

    let tight = RayFan::new(fan.model(), fan.base(), fan.spec().clone())?
        .with_options(RayOptions { t_tol: opts.ray.t_tol.min(1e-11), ..opts.ray.clone() });
    let refined: Vec<Option<(f64, ConjugatePoint, SingularityType)>> = candidates
        .par_iter()
        .map(|&(a, b, sign)| -> Result<_> {
            let hit = if sign { refine_sign_change(&tight, a, b, opts)? } else { refine_minimum(&tight, a, b, opts)? };
            let Some((s, cp)) = hit else { return Ok(None) };
            let kind = classify_conjugate(&tight, &cp, &opts.classify)
                .map(|r| r.kind)
                .unwrap_or(SingularityType::Unresolved);
            let s = if closed { s0 + (s - s0).rem_euclid(2.0 * PI) } else { s };
            Ok(Some((s, cp, kind)))
        })
        .collect::<Result<_>>()?;

    let mut points: Vec<LocusPoint> = rays
        .iter()
        .zip(&g)
        .filter_map(|(r, gi)| Some(to_point(r.s, r.hit.as_ref()?, gi.unwrap_or(f64::NAN))))
        .collect();
    let mut marks: Vec<(f64, SingularityType)> = Vec::new();
    for (s, cp, kind) in refined.into_iter().flatten() {
        if marks.iter().any(|(m, _)| (m - s).abs() < 1e-6) {
            continue;
        }
        let mut p = to_point(s, &cp, 0.0);
        p.cusp = true;
        points.push(p);
        marks.push((s, kind));
    }
    points.sort_by(|a, b| a.s[0].total_cmp(&b.s[0]));
    let cusps = marks
        .into_iter()
        .map(|(s, kind)| {
            let index = points.iter().position(|p| p.cusp && (p.s[0] - s).abs() < 1e-12).expect("inserted");
            CuspMarker { index, s, confirmed: kind == SingularityType::A3, kind }
        })
        .collect::<Vec<_>>();
    let mut cusps = cusps;
    cusps.sort_by_key(|c| c.index);
    Ok(LocusCurve { points, cusps, closed, missing })
}
