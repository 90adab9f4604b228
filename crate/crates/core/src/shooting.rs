//! Damped Newton shooting on a boundary residual, multi-start solution
//! finding and parameter sweeps with warm-starting.

use std::collections::BTreeSet;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::{ResidualEval, ResidualMap};
use crate::error::{Error, Result};
use crate::linalg::svd_sorted;
use crate::phase::PhasePoint;
use crate::singularity::degeneracy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Relative singular-value threshold for the reported degeneracy.
    pub sigma_rel: f64,
    /// Below this `σ_min/σ_max` the Newton step uses the pseudo-inverse.
    pub pinv_cut: f64,
    pub min_step: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 50, sigma_rel: 1e-6, pinv_cut: 1e-12, min_step: 1e-12 }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::invalid("solver tolerance must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be positive"));
        }
        Ok(())
    }
}

/// Outcome of one Newton solve.
#[derive(Debug, Clone)]
pub struct SolutionPoint {
    pub u: DVector<f64>,
    pub z: PhasePoint,
    pub z_end: PhasePoint,
    pub residual_norm: f64,
    pub degeneracy: usize,
    pub converged: bool,
    pub iterations: usize,
    /// A pseudo-inverse step was taken somewhere along the iteration.
    pub near_singular: bool,
    /// Singular values of `Dr` at the final iterate, decreasing.
    pub singular_values: Vec<f64>,
    pub hessian_fd: bool,
    pub diagnostic: Option<String>,
}

impl SolutionPoint {
    fn from_eval(u: DVector<f64>, e: &ResidualEval, iterations: usize) -> Self {
        Self {
            u,
            z: e.start.clone(),
            z_end: e.end.clone(),
            residual_norm: e.r.norm(),
            degeneracy: 0,
            converged: false,
            iterations,
            near_singular: false,
            singular_values: Vec::new(),
            hessian_fd: e.hessian_fd,
            diagnostic: None,
        }
    }

    /// `σ_min / σ_max` of `Dr` (0 when unavailable).
    pub fn sigma_ratio(&self) -> f64 {
        match (self.singular_values.first(), self.singular_values.last()) {
            (Some(&a), Some(&b)) if a > 0.0 => b / a,
            _ => 0.0,
        }
    }
}

fn failed(u: &DVector<f64>, iterations: usize, reason: String) -> SolutionPoint {
    let n = u.len();
    let nan = PhasePoint { x: DVector::from_element(n, f64::NAN), y: DVector::from_element(n, f64::NAN) };
    SolutionPoint {
        u: u.clone(),
        z: nan.clone(),
        z_end: nan,
        residual_norm: f64::INFINITY,
        degeneracy: 0,
        converged: false,
        iterations,
        near_singular: false,
        singular_values: Vec::new(),
        hessian_fd: false,
        diagnostic: Some(reason),
    }
}

/// Damped Newton on `r(u) = 0` from `u0`. Integration failures and
/// non-convergence are reported on the returned point, not as errors.
pub fn solve(map: &dyn ResidualMap, u0: &DVector<f64>, opts: &SolveOptions) -> Result<SolutionPoint> {
    opts.validate()?;
    if u0.len() != map.dim() {
        return Err(Error::DimensionMismatch { expected: map.dim(), got: u0.len() });
    }
    let mut u = u0.clone();
    let mut near_singular = false;
    let mut eval = match map.evaluate(&u, true) {
        Ok(e) => e,
        Err(e) => return Ok(failed(&u, 0, e.to_string())),
    };
    let mut iterations = 0;
    loop {
        let jac = eval.jacobian.clone().expect("requested");
        let svd = svd_sorted(&jac);
        let rnorm = eval.r.norm();
        if rnorm <= opts.tol || iterations >= opts.max_iter {
            let mut sol = SolutionPoint::from_eval(u.clone(), &eval, iterations);
            sol.near_singular = near_singular;
            sol.singular_values = svd.sigma.iter().cloned().collect();
            sol.degeneracy = degeneracy(&jac, opts.sigma_rel).m;
            sol.converged = rnorm <= opts.tol && map.is_genuine(&eval);
            if rnorm > opts.tol {
                sol.diagnostic = Some(format!("no convergence after {iterations} iterations"));
            } else if !sol.converged {
                sol.diagnostic = Some("root of the residual that does not meet the boundary".into());
            }
            return Ok(sol);
        }
        iterations += 1;
        let smax = svd.sigma[0];
        let smin = svd.sigma[svd.sigma.len() - 1];
        let rel = if smax > 0.0 { smin / smax } else { 0.0 };
        let utr = svd.u.transpose() * &eval.r;
        let mut step = DVector::zeros(u.len());
        for i in 0..svd.sigma.len() {
            let s = svd.sigma[i];
            if s > opts.pinv_cut * smax && s > 0.0 {
                step -= svd.v.column(i) * (utr[i] / s);
            }
        }
        if rel <= opts.pinv_cut {
            near_singular = true;
        }
        let mut alpha = 1.0;
        let accepted = loop {
            let trial = &u + &step * alpha;
            // Trial points are screened without the tangent flow.
            if let Ok(e) = map.evaluate(&trial, false) {
                let tn = e.r.norm();
                if tn.is_finite() && tn * tn <= (1.0 - 1e-4 * alpha) * rnorm * rnorm {
                    match map.evaluate(&trial, true) {
                        Ok(full) => break Some((trial, full)),
                        Err(_) => break None,
                    }
                }
            }
            alpha *= 0.5;
            if alpha < opts.min_step {
                break None;
            }
        };
        match accepted {
            Some((trial, e)) => {
                u = trial;
                eval = e;
            }
            None => {
                let mut sol = SolutionPoint::from_eval(u.clone(), &eval, iterations);
                sol.near_singular = near_singular;
                sol.singular_values = svd.sigma.iter().cloned().collect();
                sol.degeneracy = degeneracy(&jac, opts.sigma_rel).m;
                sol.converged = false;
                sol.diagnostic = Some("line search stalled".into());
                return Ok(sol);
            }
        }
    }
}

/// Low-discrepancy sampling of the ball `|u − center| ≤ radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultistartPlan {
    pub center: Vec<f64>,
    pub radius: f64,
    pub starts: usize,
    pub seed: u64,
    pub dedup_tol: f64,
}

impl MultistartPlan {
    pub fn new(n: usize, radius: f64, starts: usize) -> Self {
        Self { center: vec![0.0; n], radius, starts, seed: 0, dedup_tol: 1e-6 }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.center.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.center.len() });
        }
        if !(self.radius > 0.0) {
            return Err(Error::invalid("multistart radius must be positive"));
        }
        if !(self.dedup_tol > 0.0) {
            return Err(Error::invalid("dedup_tol must be positive"));
        }
        Ok(())
    }

    /// Start points: shifted Halton points of the cube mapped into the ball
    /// (points outside the inscribed ball are skipped), then the center.
    pub fn points(&self) -> Vec<DVector<f64>> {
        let n = self.center.len();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let shift: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let center = DVector::from_row_slice(&self.center);
        let mut out = vec![center.clone()];
        let mut index = 1u64;
        while out.len() < self.starts.max(1) && index < 1000 * (self.starts as u64 + 1) {
            let cube = DVector::from_fn(n, |d, _| 2.0 * ((halton(index, PRIMES[d % PRIMES.len()]) + shift[d]) % 1.0) - 1.0);
            index += 1;
            if cube.norm() <= 1.0 {
                out.push(&center + cube * self.radius);
            }
        }
        out
    }

    pub fn inside(&self, u: &DVector<f64>) -> bool {
        (u - DVector::from_row_slice(&self.center)).norm() <= self.radius
    }
}

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Radical inverse of `i` in base `b`.
pub fn halton(mut i: u64, b: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= b as f64;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}

/// Inserts `s` unless a solution within `tol` is already present (the one
/// with the smaller residual is kept). Returns whether the set changed.
fn insert_dedup(set: &mut Vec<SolutionPoint>, s: SolutionPoint, tol: f64) -> bool {
    if let Some(existing) = set.iter_mut().find(|e| (&e.u - &s.u).norm() <= tol) {
        if s.residual_norm < existing.residual_norm && (&existing.u - &s.u).norm() > 0.0 {
            *existing = s;
        }
        return false;
    }
    set.push(s);
    true
}

fn sort_solutions(set: &mut [SolutionPoint]) {
    set.sort_by(|a, b| {
        for (x, y) in a.u.iter().zip(b.u.iter()) {
            match x.partial_cmp(y) {
                Some(std::cmp::Ordering::Equal) | None => continue,
                Some(o) => return o,
            }
        }
        std::cmp::Ordering::Equal
    });
}

fn solve_from_seeds(
    map: &dyn ResidualMap,
    seeds: &[DVector<f64>],
    opts: &SolveOptions,
    dedup_tol: f64,
) -> Result<Vec<SolutionPoint>> {
    let sols: Vec<Result<SolutionPoint>> = seeds.par_iter().map(|u0| solve(map, u0, opts)).collect();
    let mut set = Vec::new();
    for s in sols {
        let s = s?;
        if s.converged {
            insert_dedup(&mut set, s, dedup_tol);
        }
    }
    sort_solutions(&mut set);
    Ok(set)
}

/// All distinct converged solutions found from the plan's start points,
/// sorted lexicographically in `u`. Includes solutions that wandered
/// outside the ball; use [`MultistartPlan::inside`] to count.
pub fn multistart(map: &dyn ResidualMap, plan: &MultistartPlan, opts: &SolveOptions) -> Result<Vec<SolutionPoint>> {
    plan.validate(map.dim())?;
    solve_from_seeds(map, &plan.points(), opts, plan.dedup_tol)
}

/// A family of residual maps indexed by parameters `μ`.
pub trait ResidualFamily: Sync {
    fn param_dim(&self) -> usize;
    fn at(&self, mu: &[f64]) -> Result<Box<dyn ResidualMap + '_>>;
}

impl ResidualFamily for crate::boundary::LagrangianBvp<'_> {
    fn param_dim(&self) -> usize {
        self.boundary.parameter_hook.len()
    }

    fn at(&self, mu: &[f64]) -> Result<Box<dyn ResidualMap + '_>> {
        Ok(Box::new(self.at_parameters(mu)?))
    }
}

/// Parameters are the ambient coordinates of the target, projected onto the
/// constraint surface.
impl ResidualFamily for crate::boundary::ConstrainedDirichlet<'_> {
    fn param_dim(&self) -> usize {
        self.start().len()
    }

    fn at(&self, mu: &[f64]) -> Result<Box<dyn ResidualMap + '_>> {
        Ok(Box::new(self.with_target(&DVector::from_row_slice(mu))?))
    }
}

/// Cartesian grid of parameter values; cells are neighbors when their
/// indices differ by one along exactly one axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuGrid {
    pub axes: Vec<Vec<f64>>,
}

impl MuGrid {
    pub fn line(values: Vec<f64>) -> Self {
        Self { axes: vec![values] }
    }

    /// `count` equally spaced values from `a` to `b` per axis.
    pub fn uniform(ranges: &[(f64, f64, usize)]) -> Self {
        let axes = ranges
            .iter()
            .map(|&(a, b, count)| {
                if count <= 1 {
                    vec![a]
                } else {
                    (0..count).map(|i| a + (b - a) * i as f64 / (count - 1) as f64).collect()
                }
            })
            .collect();
        Self { axes }
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Multi-index of a cell (first axis fastest).
    pub fn index(&self, mut cell: usize) -> Vec<usize> {
        self.axes
            .iter()
            .map(|a| {
                let i = cell % a.len();
                cell /= a.len();
                i
            })
            .collect()
    }

    pub fn cell(&self, index: &[usize]) -> usize {
        let mut cell = 0;
        let mut stride = 1;
        for (i, a) in index.iter().zip(&self.axes) {
            cell += i * stride;
            stride *= a.len();
        }
        cell
    }

    pub fn mu(&self, cell: usize) -> Vec<f64> {
        self.index(cell).iter().zip(&self.axes).map(|(&i, a)| a[i]).collect()
    }

    pub fn neighbors(&self, cell: usize) -> Vec<usize> {
        let idx = self.index(cell);
        let mut out = Vec::new();
        for (d, axis) in self.axes.iter().enumerate() {
            for delta in [-1i64, 1] {
                let j = idx[d] as i64 + delta;
                if j >= 0 && (j as usize) < axis.len() {
                    let mut n = idx.clone();
                    n[d] = j as usize;
                    out.push(self.cell(&n));
                }
            }
        }
        out
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.axes.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: self.axes.len() });
        }
        if self.axes.iter().any(|a| a.is_empty() || a.iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid("parameter grid axes must be non-empty and finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub mu: Vec<f64>,
    /// Deduplicated converged solutions, sorted in `u`.
    pub solutions: Vec<SolutionPoint>,
    /// Number of solutions inside the sampling ball.
    pub count: usize,
    pub fold: bool,
    /// Smallest `σ_min/σ_max` among the counted solutions.
    pub min_sigma_ratio: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub grid: MuGrid,
    pub cells: Vec<SweepCell>,
    /// Neighboring cell pairs whose counts differ by exactly 2.
    pub fold_edges: Vec<(usize, usize)>,
    pub warm_start_rounds: usize,
}

/// Multi-start solve on every cell, then warm-start every cell from its
/// neighbors' solutions until no cell gains a solution. Each warm-start
/// round reads a snapshot of the previous round, so the result does not
/// depend on traversal order or worker count.
pub fn sweep(
    family: &dyn ResidualFamily,
    grid: &MuGrid,
    plan: &MultistartPlan,
    opts: &SolveOptions,
) -> Result<SweepResult> {
    grid.validate(family.param_dim())?;
    opts.validate()?;
    let cells: Vec<usize> = (0..grid.len()).collect();
    let initial: Vec<(Vec<SolutionPoint>, Option<String>)> = cells
        .par_iter()
        .map(|&c| match family.at(&grid.mu(c)).and_then(|map| multistart(map.as_ref(), plan, opts)) {
            Ok(s) => (s, None),
            Err(e) => (Vec::new(), Some(e.to_string())),
        })
        .collect();
    let mut sets: Vec<Vec<SolutionPoint>> = initial.iter().map(|(s, _)| s.clone()).collect();
    let errors: Vec<Option<String>> = initial.into_iter().map(|(_, e)| e).collect();
    // Seeds already tried per cell, keyed by bit patterns for exact reuse.
    let key = |u: &DVector<f64>| u.iter().map(|v| v.to_bits()).collect::<Vec<u64>>();
    let mut tried: Vec<BTreeSet<Vec<u64>>> = vec![BTreeSet::new(); grid.len()];
    let mut rounds = 0;
    loop {
        let snapshot = sets.clone();
        let seeds: Vec<Vec<DVector<f64>>> = cells
            .iter()
            .map(|&c| {
                let mut s: Vec<DVector<f64>> = Vec::new();
                for nb in grid.neighbors(c) {
                    for sol in &snapshot[nb] {
                        if !tried[c].contains(&key(&sol.u)) && !snapshot[c].iter().any(|e| (&e.u - &sol.u).norm() <= plan.dedup_tol) {
                            s.push(sol.u.clone());
                        }
                    }
                }
                s
            })
            .collect();
        if seeds.iter().all(|s| s.is_empty()) || rounds >= 100 {
            break;
        }
        rounds += 1;
        let found: Vec<Vec<SolutionPoint>> = cells
            .par_iter()
            .map(|&c| {
                if seeds[c].is_empty() || errors[c].is_some() {
                    return Vec::new();
                }
                family
                    .at(&grid.mu(c))
                    .and_then(|map| solve_from_seeds(map.as_ref(), &seeds[c], opts, plan.dedup_tol))
                    .unwrap_or_default()
            })
            .collect();
        for c in 0..grid.len() {
            for s in &seeds[c] {
                tried[c].insert(key(s));
            }
            for sol in found[c].clone() {
                insert_dedup(&mut sets[c], sol, plan.dedup_tol);
            }
            sort_solutions(&mut sets[c]);
        }
    }
    let mut out: Vec<SweepCell> = cells
        .iter()
        .map(|&c| {
            let inside: Vec<&SolutionPoint> = sets[c].iter().filter(|s| plan.inside(&s.u)).collect();
            SweepCell {
                mu: grid.mu(c),
                count: inside.len(),
                min_sigma_ratio: inside.iter().map(|s| s.sigma_ratio()).fold(f64::INFINITY, f64::min),
                solutions: sets[c].clone(),
                fold: false,
                error: errors[c].clone(),
            }
        })
        .collect();
    let mut fold_edges = Vec::new();
    for c in 0..grid.len() {
        for nb in grid.neighbors(c) {
            if nb > c && out[c].count.abs_diff(out[nb].count) == 2 {
                fold_edges.push((c, nb));
            }
        }
    }
    for &(a, b) in &fold_edges {
        out[a].fold = true;
        out[b].fold = true;
    }
    Ok(SweepResult { grid: grid.clone(), cells: out, fold_edges, warm_start_rounds: rounds })
}

#[cfg(test)]
mod tests;
