//! Degeneracy of the shooting Jacobian and catastrophe-type classification
//! by numerical Lyapunov–Schmidt reduction.

mod normal_forms;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::boundary::ResidualMap;
use crate::error::{Error, Result};
use crate::linalg::{orthogonal_complement, pinv_solve, svd_sorted};
use crate::shooting::SolutionPoint;

pub use normal_forms::{EmbeddedNormalForm, NormalForm};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SingularityType {
    A1,
    A2,
    A3,
    A4,
    A5,
    #[serde(rename = "D4_minus")]
    D4Minus,
    #[serde(rename = "D4_plus")]
    D4Plus,
    #[serde(rename = "unresolved")]
    Unresolved,
}

impl SingularityType {
    pub fn label(&self) -> &'static str {
        match self {
            Self::A1 => "A1",
            Self::A2 => "A2",
            Self::A3 => "A3",
            Self::A4 => "A4",
            Self::A5 => "A5",
            Self::D4Minus => "D4_minus",
            Self::D4Plus => "D4_plus",
            Self::Unresolved => "unresolved",
        }
    }

    fn a_series(k: usize) -> Self {
        match k {
            2 => Self::A2,
            3 => Self::A3,
            4 => Self::A4,
            5 => Self::A5,
            _ => Self::Unresolved,
        }
    }
}

/// Kernel data of a square Jacobian.
#[derive(Debug, Clone)]
pub struct Degeneracy {
    pub m: usize,
    /// `n × m`, orthonormal right singular vectors of the smallest values.
    pub kernel: DMatrix<f64>,
    /// `n × m`, matching left singular vectors.
    pub cokernel: DMatrix<f64>,
    /// All singular values, decreasing.
    pub sigma: DVector<f64>,
}

/// `m = #{σ_i < rel · σ_max}` (all of them when `σ_max = 0`).
pub fn degeneracy(dr: &DMatrix<f64>, rel: f64) -> Degeneracy {
    let n = dr.ncols();
    let svd = svd_sorted(dr);
    let smax = svd.sigma.iter().cloned().fold(0.0, f64::max);
    let m = if smax == 0.0 || !smax.is_finite() {
        n
    } else {
        svd.sigma.iter().filter(|&&s| s < rel * smax).count()
    };
    let k = svd.sigma.len();
    Degeneracy {
        m,
        kernel: svd.v.columns(k - m, m).into_owned(),
        cokernel: svd.u.columns(k - m, m).into_owned(),
        sigma: svd.sigma,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    pub sigma_rel: f64,
    /// Relative sampling radii; every radius that resolves a type must agree.
    pub fd_ladder: Vec<f64>,
    /// Half-width of the one-dimensional stencil.
    pub stencil: usize,
    /// Coefficients below this fraction of the largest one count as zero.
    pub rel_significance: f64,
    /// Relative accuracy of one residual evaluation.
    pub eval_noise: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self { sigma_rel: 1e-6, fd_ladder: vec![1e-2, 3e-3, 1e-3], stencil: 6, rel_significance: 1e-3, eval_noise: 1e-12 }
    }
}

/// Derivatives `c^{(k)}(0)` of the reduced scalar map with their noise
/// floors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeTable {
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub noise: [f64; 4],
}

#[derive(Debug, Clone)]
pub struct SingularityReport {
    pub solution: SolutionPoint,
    pub degeneracy: usize,
    pub kernel_basis: DMatrix<f64>,
    pub cokernel_basis: DMatrix<f64>,
    pub kind: SingularityType,
    pub derivatives: Option<DerivativeTable>,
    /// Discriminant of the quadratic part of the reduced two-dimensional
    /// map. Sign convention: negative when the underlying binary cubic has
    /// three real linear factors (elliptic umbilic), positive when it has
    /// one; it equals −3 times the classical cubic discriminant for gradient
    /// germs.
    pub cubic_discriminant: Option<f64>,
    /// Per-radius outcomes of the ladder.
    pub votes: Vec<SingularityType>,
}

/// JSON-facing summary `{m, type, kernel, derivatives, cubic_discriminant}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportSummary {
    pub m: usize,
    #[serde(rename = "type")]
    pub kind: SingularityType,
    pub kernel: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub derivatives: Option<DerivativeSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cubic_discriminant: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DerivativeSummary {
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
}

impl SingularityReport {
    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            m: self.degeneracy,
            kind: self.kind.clone(),
            kernel: self.kernel_basis.column_iter().map(|c| c.iter().cloned().collect()).collect(),
            derivatives: self.derivatives.map(|d| DerivativeSummary { c2: d.c2, c3: d.c3, c4: d.c4, c5: d.c5 }),
            cubic_discriminant: self.cubic_discriminant,
        }
    }
}

/// Lyapunov–Schmidt splitting at `u0`: `u = u0 + V s + V⊥ q(s)` with
/// `q(s)` solving `W⊥ᵀ r(u) = 0`; the reduced map is `c(s) = Wᵀ r(u)`.
struct Reduction<'a> {
    map: &'a dyn ResidualMap,
    u0: DVector<f64>,
    v: DMatrix<f64>,
    w: DMatrix<f64>,
    vp: DMatrix<f64>,
    wp: DMatrix<f64>,
    inner: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    scale: f64,
}

impl<'a> Reduction<'a> {
    fn new(map: &'a dyn ResidualMap, u0: &DVector<f64>, dr: &DMatrix<f64>, d: &Degeneracy) -> Self {
        let vp = orthogonal_complement(&d.kernel);
        let wp = orthogonal_complement(&d.cokernel);
        let inner = (vp.ncols() > 0).then(|| (wp.transpose() * dr * &vp).lu());
        Self {
            map,
            u0: u0.clone(),
            v: d.kernel.clone(),
            w: d.cokernel.clone(),
            vp,
            wp,
            inner,
            scale: u0.norm().max(1.0),
        }
    }

    fn eval(&self, s: &DVector<f64>, q0: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let base = &self.u0 + &self.v * s;
        let Some(lu) = &self.inner else {
            let r = self.map.residual(&base)?;
            return Ok((self.w.transpose() * r, DVector::zeros(0)));
        };
        let mut q = q0.clone();
        let mut last = f64::INFINITY;
        for _ in 0..60 {
            let r = self.map.residual(&(&base + &self.vp * &q))?;
            let g = self.wp.transpose() * &r;
            let dq = lu.solve(&(-g)).ok_or_else(|| Error::invalid("singular complement block"))?;
            let size = dq.amax();
            q += &dq;
            if size <= 1e-15 * self.scale || (size >= last && size <= 1e-12 * self.scale) {
                let r = self.map.residual(&(&base + &self.vp * &q))?;
                return Ok((self.w.transpose() * r, q));
            }
            if !size.is_finite() || size > 1e3 * last {
                break;
            }
            last = size;
        }
        Err(Error::invalid("complement correction did not converge"))
    }
}

fn significant(b: &[f64], floor: &[f64], rel: f64) -> Vec<bool> {
    let maxb = b.iter().skip(2).fold(0.0f64, |a, v| a.max(v.abs()));
    b.iter().zip(floor).map(|(&x, &f)| x.abs() > (rel * maxb).max(f)).collect()
}

struct ScalarFit {
    kind: SingularityType,
    /// `a_k`, coefficients of `c(s) = Σ a_k s^k`.
    a: Vec<f64>,
    floor: Vec<f64>,
}

fn classify_scalar(red: &Reduction, delta: f64, opts: &ClassifyOptions, noise: f64) -> Result<ScalarFit> {
    let j = opts.stencil as i64;
    let step = delta * red.scale;
    let rho = step * j as f64;
    let mut values = vec![0.0; (2 * j + 1) as usize];
    let nq = red.vp.ncols();
    for dir in [1i64, -1] {
        let mut q = DVector::zeros(nq);
        for i in 0..=j {
            let idx = dir * i;
            if dir < 0 && i == 0 {
                continue;
            }
            let s = DVector::from_element(1, idx as f64 * step);
            let (c, qn) = red.eval(&s, &q)?;
            q = qn;
            values[(idx + j) as usize] = c[0];
        }
    }
    let taus: Vec<f64> = (-j..=j).map(|i| i as f64 / j as f64).collect();
    let degree = 6.min(2 * opts.stencil);
    let (b, rms, var) = crate::linalg::polyfit(&taus, &values, degree);
    let floor: Vec<f64> = var.iter().map(|v| 10.0 * rms.max(noise) * v.sqrt()).collect();
    let sig = significant(&b, &floor, opts.rel_significance);
    let a: Vec<f64> = b.iter().enumerate().map(|(k, bk)| bk / rho.powi(k as i32)).collect();
    let afloor: Vec<f64> = floor.iter().enumerate().map(|(k, f)| f / rho.powi(k as i32)).collect();
    let kind = if sig[1] || !sig.iter().skip(2).any(|&x| x) {
        SingularityType::Unresolved
    } else {
        let k = (2..sig.len()).find(|&k| sig[k]).expect("some significant coefficient");
        SingularityType::a_series(k)
    };
    Ok(ScalarFit { kind, a, floor: afloor })
}

struct PlanarFit {
    kind: SingularityType,
    disc: f64,
}

const PLANAR_EXPONENTS: [(i32, i32); 15] = [
    (0, 0),
    (1, 0),
    (0, 1),
    (2, 0),
    (1, 1),
    (0, 2),
    (3, 0),
    (2, 1),
    (1, 2),
    (0, 3),
    (4, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 4),
];

fn classify_planar(red: &Reduction, delta: f64, opts: &ClassifyOptions, noise: f64) -> Result<PlanarFit> {
    let j: i64 = 3;
    let step = delta * red.scale;
    let nq = red.vp.ncols();
    let mut rows = Vec::new();
    let mut c1 = Vec::new();
    let mut c2 = Vec::new();
    for a in -j..=j {
        let mut q = DVector::zeros(nq);
        // March along each row from its center for good complement guesses.
        let order: Vec<i64> = (0..=j).chain((1..=j).map(|b| -b)).collect();
        let mut q_center = DVector::zeros(nq);
        for &b in &order {
            if b == -1 {
                q = q_center.clone();
            }
            let s = DVector::from_vec(vec![a as f64 * step, b as f64 * step]);
            let (c, qn) = red.eval(&s, &q)?;
            q = qn;
            if b == 0 {
                q_center = q.clone();
            }
            rows.push((a as f64 / j as f64, b as f64 / j as f64));
            c1.push(c[0]);
            c2.push(c[1]);
        }
    }
    let design = DMatrix::from_fn(rows.len(), PLANAR_EXPONENTS.len(), |i, k| {
        let (t1, t2) = rows[i];
        let (e1, e2) = PLANAR_EXPONENTS[k];
        t1.powi(e1) * t2.powi(e2)
    });
    let xtx_inv = (design.transpose() * &design).try_inverse().ok_or_else(|| Error::invalid("singular design"))?;
    let fit = |vals: &[f64]| {
        let y = DVector::from_column_slice(vals);
        let (coef, _) = pinv_solve(&design, &y, 1e-14);
        let resid = &design * &coef - &y;
        let rms = (resid.norm_squared() / (rows.len() - PLANAR_EXPONENTS.len()) as f64).sqrt();
        (coef, rms)
    };
    let (p1, rms1) = fit(&c1);
    let (p2, rms2) = fit(&c2);
    let rms = rms1.max(rms2).max(noise);
    let floor = |k: usize| 10.0 * rms * xtx_inv[(k, k)].sqrt();
    let quad_max = [3, 4, 5].iter().map(|&k| p1[k].abs().max(p2[k].abs())).fold(0.0, f64::max);
    let lin_sig = [1, 2]
        .iter()
        .any(|&k| p1[k].abs().max(p2[k].abs()) > (opts.rel_significance * quad_max).max(floor(k)));
    let quad_sig = [3, 4, 5].iter().any(|&k| p1[k].abs().max(p2[k].abs()) > floor(k));
    let form = |p: &DVector<f64>| DMatrix::from_row_slice(2, 2, &[p[3], 0.5 * p[4], 0.5 * p[4], p[5]]);
    let k1 = form(&p1);
    let k2 = form(&p2);
    let a = k1.determinant();
    let c = k2.determinant();
    let b = (&k1 + &k2).determinant() - a - c;
    let disc = b * b - 4.0 * a * c;
    let kind = if lin_sig || !quad_sig || disc.abs() <= opts.rel_significance * (b * b + 4.0 * (a * c).abs()) {
        SingularityType::Unresolved
    } else if disc < 0.0 {
        SingularityType::D4Minus
    } else {
        SingularityType::D4Plus
    };
    Ok(PlanarFit { kind, disc })
}

/// The common type of all resolved votes; `Unresolved` when no radius
/// resolved the germ or when resolved radii disagree.
fn majority(votes: &[SingularityType]) -> SingularityType {
    let mut resolved = votes.iter().filter(|v| **v != SingularityType::Unresolved);
    match resolved.next() {
        Some(first) if resolved.all(|v| v == first) => first.clone(),
        _ => SingularityType::Unresolved,
    }
}

/// Richardson extrapolation of a coefficient estimated at two radii whose
/// leading error term is `O(δ²)`.
fn richardson(coarse: f64, fine: f64, ratio: f64) -> f64 {
    let r2 = ratio * ratio;
    (r2 * fine - coarse) / (r2 - 1.0)
}

/// Degeneracy and type of the singularity of `map` at the converged
/// solution `sol`.
pub fn classify(map: &dyn ResidualMap, sol: &SolutionPoint, opts: &ClassifyOptions) -> Result<SingularityReport> {
    classify_at(map, &sol.u, sol, opts)
}

fn classify_at(
    map: &dyn ResidualMap,
    u: &DVector<f64>,
    sol: &SolutionPoint,
    opts: &ClassifyOptions,
) -> Result<SingularityReport> {
    if !sol.converged {
        return Err(Error::invalid("classification needs a converged solution"));
    }
    if opts.fd_ladder.is_empty() || opts.stencil < 3 {
        return Err(Error::invalid("classification ladder must be non-empty and stencil ≥ 3"));
    }
    let (_, dr) = map.residual_and_jacobian(u)?;
    let d = degeneracy(&dr, opts.sigma_rel);
    let mut report = SingularityReport {
        solution: sol.clone(),
        degeneracy: d.m,
        kernel_basis: d.kernel.clone(),
        cokernel_basis: d.cokernel.clone(),
        kind: SingularityType::Unresolved,
        derivatives: None,
        cubic_discriminant: None,
        votes: Vec::new(),
    };
    let red = Reduction::new(map, u, &dr, &d);
    let noise = opts.eval_noise * d.sigma[0].max(1e-300) * red.scale;
    match d.m {
        0 => report.kind = SingularityType::A1,
        1 => {
            let fits: Vec<Option<ScalarFit>> =
                opts.fd_ladder.iter().map(|&delta| classify_scalar(&red, delta, opts, noise).ok()).collect();
            report.votes =
                fits.iter().map(|f| f.as_ref().map_or(SingularityType::Unresolved, |f| f.kind.clone())).collect();
            report.kind = majority(&report.votes);
            let usable: Vec<(f64, &ScalarFit)> =
                opts.fd_ladder.iter().zip(&fits).filter_map(|(&dl, f)| f.as_ref().map(|f| (dl, f))).collect();
            if let Some(&(d_fine, fine)) = usable.last() {
                let coef = |k: usize| -> (f64, f64) {
                    let fact = (1..=k).product::<usize>() as f64;
                    let a = if usable.len() >= 2 {
                        let (d_coarse, coarse) = usable[usable.len() - 2];
                        richardson(coarse.a[k], fine.a[k], d_coarse / d_fine)
                    } else {
                        fine.a[k]
                    };
                    (fact * a, fact * fine.floor[k])
                };
                let (c2, n2) = coef(2);
                let (c3, n3) = coef(3);
                let (c4, n4) = coef(4);
                let (c5, n5) = coef(5);
                report.derivatives = Some(DerivativeTable { c2, c3, c4, c5, noise: [n2, n3, n4, n5] });
            }
        }
        2 => {
            let fits: Vec<Option<PlanarFit>> =
                opts.fd_ladder.iter().map(|&delta| classify_planar(&red, delta, opts, noise).ok()).collect();
            report.votes =
                fits.iter().map(|f| f.as_ref().map_or(SingularityType::Unresolved, |f| f.kind.clone())).collect();
            report.kind = majority(&report.votes);
            report.cubic_discriminant = fits
                .iter()
                .flatten()
                .find(|f| f.kind == report.kind)
                .or_else(|| fits.iter().flatten().next())
                .map(|f| f.disc);
        }
        _ => {}
    }
    Ok(report)
}

/// `⟨w, D²r(u)[v, v]⟩` by central differences of `Dr·v`: the quadratic
/// coefficient of the reduced map along a simple kernel direction. Its zeros
/// along a fold curve are cusp candidates.
pub fn fold_coefficient(
    map: &dyn ResidualMap,
    u: &DVector<f64>,
    v: &DVector<f64>,
    w: &DVector<f64>,
    eps: f64,
) -> Result<f64> {
    let (_, jp) = map.residual_and_jacobian(&(u + v * eps))?;
    let (_, jm) = map.residual_and_jacobian(&(u - v * eps))?;
    Ok(w.dot(&((jp - jm) * v)) / (2.0 * eps))
}

#[cfg(test)]
mod tests;
