use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::trace::{classify_conjugate, LocusPoint};
use super::{direction_from_angles, ConjugatePoint, RayFan, RayOptions};
use crate::boundary::{dirichlet, ConstrainedDirichlet, LagrangianBvp, ResidualMap};
use crate::error::{Error, Result};
use crate::linalg::{oriented_complement, svd_sorted};
use crate::singularity::{fold_coefficient, ClassifyOptions, SingularityType};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurfaceOptions {
    /// Polar angle samples (cell centres in `(0, π)`).
    pub polar: usize,
    /// Azimuth samples on `[0, 2π)`.
    pub azimuth: usize,
    pub t_max: f64,
    /// Grid minima of the second transverse singular value below this
    /// fraction of its median become degeneracy-2 candidates.
    pub candidate_ratio: f64,
    /// Refined candidates with both singular values below this count as
    /// degeneracy 2.
    pub merge_tol: f64,
    /// Angular radius of the loop used to count cusp ridges.
    pub ridge_radius: f64,
    pub ridge_samples: usize,
    pub ray: RayOptions,
    pub classify: ClassifyOptions,
}

impl Default for SurfaceOptions {
    fn default() -> Self {
        Self {
            polar: 24,
            azimuth: 48,
            t_max: 10.0,
            candidate_ratio: 0.1,
            merge_tol: 1e-4,
            ridge_radius: 0.05,
            ridge_samples: 48,
            ray: RayOptions::default(),
            classify: ClassifyOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UmbilicCandidate {
    pub s: Vec<f64>,
    pub t_star: f64,
    pub endpoint: DVector<f64>,
    /// Both normalized transverse singular values at the refined point.
    pub sigma: Vec<f64>,
    pub degeneracy: usize,
    pub kind: SingularityType,
    /// Sign changes of the fold coefficient around a small loop of
    /// directions, i.e. cusp ridges meeting the point.
    pub ridges: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocusSurface {
    pub samples: Vec<LocusPoint>,
    pub candidates: Vec<UmbilicCandidate>,
    pub missing: usize,
}

fn to_sample(s: Vec<f64>, cp: &ConjugatePoint) -> LocusPoint {
    LocusPoint {
        s,
        t_star: cp.t_star,
        endpoint: cp.end.x.clone(),
        degeneracy: cp.degeneracy,
        cusp_indicator: f64::NAN,
        cusp: false,
        radial_defect: cp.radial_defect,
    }
}

/// Largest normalized transverse singular value at the first conjugate
/// time: it vanishes exactly where the degeneracy is two.
fn second_sigma(fan: &RayFan<'_>, w: &DVector<f64>, t_max: f64) -> Result<Option<(f64, ConjugatePoint)>> {
    Ok(fan.first_conjugate(w, t_max, None)?.map(|cp| (cp.sigma[0], cp)))
}

/// Nelder–Mead on the direction sphere, in angle coordinates.
fn refine_candidate(
    fan: &RayFan<'_>,
    start: [f64; 2],
    scale: f64,
    t_max: f64,
) -> Result<Option<([f64; 2], ConjugatePoint)>> {
    let f = |p: [f64; 2]| -> Result<Option<(f64, ConjugatePoint)>> {
        second_sigma(fan, &direction_from_angles(&p)?, t_max)
    };
    let mut simplex: Vec<([f64; 2], f64, ConjugatePoint)> = Vec::new();
    for p in [start, [start[0] + scale, start[1]], [start[0], start[1] + scale]] {
        let Some((v, cp)) = f(p)? else { return Ok(None) };
        simplex.push((p, v, cp));
    }
    for _ in 0..200 {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = (0..2).map(|k| (simplex[2].0[k] - simplex[0].0[k]).abs()).fold(0.0, f64::max);
        if spread < 1e-9 {
            break;
        }
        let c = [0.5 * (simplex[0].0[0] + simplex[1].0[0]), 0.5 * (simplex[0].0[1] + simplex[1].0[1])];
        let worst = simplex[2].0;
        let along = |t: f64| [c[0] + t * (worst[0] - c[0]), c[1] + t * (worst[1] - c[1])];
        let reflected = along(-1.0);
        let fr = f(reflected)?;
        match fr {
            Some((vr, cpr)) if vr < simplex[0].1 => {
                let expanded = along(-2.0);
                match f(expanded)? {
                    Some((ve, cpe)) if ve < vr => simplex[2] = (expanded, ve, cpe),
                    _ => simplex[2] = (reflected, vr, cpr),
                }
            }
            Some((vr, cpr)) if vr < simplex[1].1 => simplex[2] = (reflected, vr, cpr),
            _ => {
                let contracted = along(0.5);
                match f(contracted)? {
                    Some((vc, cpc)) if vc < simplex[2].1 => simplex[2] = (contracted, vc, cpc),
                    _ => {
                        let best = simplex[0].0;
                        for k in 1..3 {
                            let p = [0.5 * (best[0] + simplex[k].0[0]), 0.5 * (best[1] + simplex[k].0[1])];
                            let Some((v, cp)) = f(p)? else { return Ok(None) };
                            simplex[k] = (p, v, cp);
                        }
                    }
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (p, _, cp) = simplex.swap_remove(0);
    Ok(Some((p, cp)))
}

/// Fold coefficient at a simple conjugate point, with the cokernel vector
/// and the map's Jacobian data.
fn fold_data(fan: &RayFan<'_>, cp: &ConjugatePoint) -> Result<Option<(f64, DVector<f64>)>> {
    let model = fan.model();
    let spec = fan.spec().clone();
    let run = |map: &dyn ResidualMap, u: DVector<f64>| -> Result<Option<(f64, DVector<f64>)>> {
        let (_, dr) = map.residual_and_jacobian(&u)?;
        let svd = svd_sorted(&dr);
        let k = svd.sigma.len() - 1;
        let v = svd.v.column(k).into_owned();
        let w = svd.u.column(k).into_owned();
        let eps = 1e-4 * u.norm().max(1.0);
        Ok(Some((fold_coefficient(map, &u, &v, &w, eps)?, w)))
    };
    if model.constraint().is_some() {
        let map = ConstrainedDirichlet::new(model, fan.base(), &cp.end.x, spec, cp.t_star)?;
        let u = map.near_basis().transpose() * &cp.momentum;
        run(&map, u)
    } else {
        let b = dirichlet(fan.base().as_slice(), cp.end.x.as_slice())?;
        let map = LagrangianBvp::with_time(model, b, spec, cp.t_star)?;
        let u = map.coordinates(&crate::PhasePoint { x: fan.base().clone(), y: cp.momentum.clone() });
        run(&map, u)
    }
}

/// Cusp ridges crossing a loop of directions around `center`: sign changes
/// of the fold coefficient with the cokernel vector carried continuously.
fn count_ridges(fan: &RayFan<'_>, center: &DVector<f64>, opts: &SurfaceOptions) -> Result<usize> {
    let c = DMatrix::from_column_slice(center.len(), 1, center.as_slice());
    let frame = oriented_complement(&c);
    let n = opts.ridge_samples.max(8);
    let samples: Vec<Option<(f64, DVector<f64>)>> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<_> {
            let a = 2.0 * PI * i as f64 / n as f64;
            let w = center + (frame.column(0) * a.cos() + frame.column(1) * a.sin()) * opts.ridge_radius;
            let w = &w / w.norm();
            match fan.first_conjugate(&w, opts.t_max, None)? {
                Some(cp) => fold_data(fan, &cp),
                None => Ok(None),
            }
        })
        .collect::<Result<_>>()?;
    let vals: Vec<(f64, DVector<f64>)> = samples.into_iter().flatten().collect();
    if vals.len() < n {
        return Err(Error::InvalidInput("ridge loop leaves the conjugate locus".into()));
    }
    let mut oriented = Vec::with_capacity(n);
    let mut prev: Option<DVector<f64>> = None;
    for (a2, w) in vals {
        let (a2, w) = match &prev {
            Some(p) if p.dot(&w) < 0.0 => (-a2, -w),
            _ => (a2, w),
        };
        prev = Some(w.clone());
        oriented.push((a2, w));
    }
    let mut changes = 0;
    for i in 0..n {
        let (a, wa) = &oriented[i];
        let (b, wb) = &oriented[(i + 1) % n];
        let b = if i + 1 == n && wa.dot(wb) < 0.0 { -b } else { *b };
        if a.signum() != b.signum() {
            changes += 1;
        }
    }
    Ok(changes)
}

/// Samples the conjugate locus over a polar/azimuth grid of directions and
/// locates, refines and classifies points of degeneracy two.
pub fn trace_locus_3d(fan: &RayFan<'_>, opts: &SurfaceOptions) -> Result<LocusSurface> {
    if fan.intrinsic_dim() != 3 {
        return Err(Error::InvalidInput("trace_locus_3d needs a three-dimensional problem".into()));
    }
    if opts.polar < 2 || opts.azimuth < 3 || !(opts.t_max > 0.0) {
        return Err(Error::InvalidInput("invalid direction grid or t_max".into()));
    }
    let (np, na) = (opts.polar, opts.azimuth);
    let grid: Vec<[f64; 2]> = (0..np)
        .flat_map(|i| (0..na).map(move |j| [PI * (i as f64 + 0.5) / np as f64, 2.0 * PI * j as f64 / na as f64]))
        .collect();
    let hits: Vec<Option<ConjugatePoint>> = grid
        .par_iter()
        .map(|p| fan.first_conjugate(&direction_from_angles(p)?, opts.t_max, None))
        .collect::<Result<_>>()?;
    let missing = hits.iter().filter(|h| h.is_none()).count();
    let samples: Vec<LocusPoint> =
        grid.iter().zip(&hits).filter_map(|(p, h)| Some(to_sample(p.to_vec(), h.as_ref()?))).collect();

    let second: Vec<Option<f64>> = hits.iter().map(|h| h.as_ref().map(|c| c.sigma[0])).collect();
    let med = {
        let mut v: Vec<f64> = second.iter().flatten().cloned().collect();
        v.sort_by(|a, b| a.total_cmp(b));
        v.get(v.len() / 2).cloned().unwrap_or(0.0)
    };
    let idx = |i: usize, j: usize| i * na + j;
    let mut seeds: Vec<[f64; 2]> = Vec::new();
    for i in 0..np {
        for j in 0..na {
            let Some(v) = second[idx(i, j)] else { continue };
            let mut neighbours = vec![idx(i, (j + 1) % na), idx(i, (j + na - 1) % na)];
            if i > 0 {
                neighbours.push(idx(i - 1, j));
            }
            if i + 1 < np {
                neighbours.push(idx(i + 1, j));
            }
            let is_min = neighbours.iter().all(|&k| second[k].map_or(true, |o| v <= o));
            if is_min && v < opts.candidate_ratio * med.max(opts.merge_tol) {
                seeds.push(grid[idx(i, j)]);
            }
        }
    }
    // Degenerate families (every direction has m = 2) collapse to one seed.
    if seeds.len() > 8 && hits.iter().flatten().all(|c| c.degeneracy == 2) {
        seeds.truncate(1);
    }

    let scale = PI / np as f64;
    let refined: Vec<Option<UmbilicCandidate>> = seeds
        .par_iter()
        .map(|&p| -> Result<_> {
            let Some((p, cp)) = refine_candidate(fan, p, 0.5 * scale, opts.t_max)? else { return Ok(None) };
            if cp.sigma[0] > opts.merge_tol {
                return Ok(None);
            }
            let report = classify_conjugate(fan, &cp, &opts.classify);
            let kind = report.as_ref().map(|r| r.kind.clone()).unwrap_or(SingularityType::Unresolved);
            let center = direction_from_angles(&p)?;
            let ridges = count_ridges(fan, &center, opts).unwrap_or(0);
            Ok(Some(UmbilicCandidate {
                s: p.to_vec(),
                t_star: cp.t_star,
                endpoint: cp.end.x.clone(),
                sigma: cp.sigma.clone(),
                degeneracy: 2,
                kind,
                ridges,
            }))
        })
        .collect::<Result<_>>()?;
    let mut candidates: Vec<UmbilicCandidate> = Vec::new();
    for c in refined.into_iter().flatten() {
        let dup = candidates.iter().any(|o| (&o.endpoint - &c.endpoint).norm() < 1e-5);
        if !dup {
            candidates.push(c);
        }
    }
    Ok(LocusSurface { samples, candidates, missing })
}
