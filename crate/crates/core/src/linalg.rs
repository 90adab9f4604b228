//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};

/// Thin SVD with singular values sorted in decreasing order.
///
/// `u` is `rows × k`, `v` is `cols × k` with `k = min(rows, cols)`.
#[derive(Debug, Clone)]
pub struct SortedSvd {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
}

pub fn svd_sorted(m: &DMatrix<f64>) -> SortedSvd {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let k = svd.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut su = DMatrix::zeros(m.nrows(), k);
    let mut sv = DMatrix::zeros(m.ncols(), k);
    let mut ss = DVector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        ss[dst] = svd.singular_values[src];
        su.set_column(dst, &u.column(src));
        sv.set_column(dst, &vt.row(src).transpose());
    }
    SortedSvd { u: su, sigma: ss, v: sv }
}

/// Full SVD of a square matrix, sorted. Convenience alias used where the
/// caller relies on square shape.
pub fn svd_square(m: &DMatrix<f64>) -> SortedSvd {
    debug_assert_eq!(m.nrows(), m.ncols());
    svd_sorted(m)
}

/// Orthonormal basis of the orthogonal complement of the column span of `cols`
/// in `R^d` (`cols` assumed to have full column rank).
pub fn orthogonal_complement(cols: &DMatrix<f64>) -> DMatrix<f64> {
    let d = cols.nrows();
    let k = cols.ncols();
    if k == 0 {
        return DMatrix::identity(d, d);
    }
    // Pad to square so that the SVD returns a full left basis.
    let mut padded = DMatrix::zeros(d, d);
    padded.view_mut((0, 0), (d, k)).copy_from(cols);
    let svd = svd_sorted(&padded);
    svd.u.columns(k, d - k).into_owned()
}

/// Orthonormal complement of `cols` oriented so that `det[cols | F] > 0`.
pub fn oriented_complement(cols: &DMatrix<f64>) -> DMatrix<f64> {
    let d = cols.nrows();
    let k = cols.ncols();
    let mut f = orthogonal_complement(cols);
    if f.ncols() == 0 {
        return f;
    }
    let mut full = DMatrix::zeros(d, d);
    full.view_mut((0, 0), (d, k)).copy_from(cols);
    full.view_mut((0, k), (d, d - k)).copy_from(&f);
    if full.determinant() < 0.0 {
        let last = f.ncols() - 1;
        let col = -f.column(last);
        f.set_column(last, &col);
    }
    f
}

/// Orthonormal basis of the null space of a wide matrix `m` (`rows ≤ cols`)
/// assuming it has full row rank.
pub fn null_space(m: &DMatrix<f64>) -> DMatrix<f64> {
    let r = m.nrows();
    let c = m.ncols();
    let mut padded = DMatrix::zeros(c, c);
    padded.view_mut((0, 0), (r, c)).copy_from(m);
    let svd = svd_sorted(&padded);
    svd.v.columns(r, c - r).into_owned()
}

/// Least-squares / pseudo-inverse solve of `m x = b`, discarding singular
/// values below `rel_cut · σ_max`. Returns the solution and whether any
/// singular value was discarded.
pub fn pinv_solve(m: &DMatrix<f64>, b: &DVector<f64>, rel_cut: f64) -> (DVector<f64>, bool) {
    let svd = svd_sorted(m);
    let smax = svd.sigma.iter().cloned().fold(0.0, f64::max);
    let mut x = DVector::zeros(m.ncols());
    let mut truncated = false;
    let utb = svd.u.transpose() * b;
    for i in 0..svd.sigma.len() {
        let s = svd.sigma[i];
        if s > rel_cut * smax && s > 0.0 {
            x += svd.v.column(i) * (utb[i] / s);
        } else {
            truncated = true;
        }
    }
    (x, truncated)
}

/// Standard symplectic matrix `Ω = [[0, I], [-I, 0]]` of size `2n`.
pub fn omega(n: usize) -> DMatrix<f64> {
    let mut o = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        o[(i, n + i)] = 1.0;
        o[(n + i, i)] = -1.0;
    }
    o
}

/// `‖Jᵀ Ω J − Ω‖_∞` (max abs entry).
pub fn symplecticity_defect(j: &DMatrix<f64>) -> f64 {
    let n = j.nrows() / 2;
    let o = omega(n);
    let d = j.transpose() * &o * j - o;
    d.amax()
}

/// Polynomial least-squares fit of `values` at `abscissae` with monomials
/// up to `degree`. Returns coefficients, residual RMS and the diagonal of
/// `(XᵀX)⁻¹` (coefficient variance factors).
pub fn polyfit(abscissae: &[f64], values: &[f64], degree: usize) -> (Vec<f64>, f64, Vec<f64>) {
    let rows = abscissae.len();
    let cols = degree + 1;
    let mut x = DMatrix::zeros(rows, cols);
    for (i, &t) in abscissae.iter().enumerate() {
        let mut p = 1.0;
        for k in 0..cols {
            x[(i, k)] = p;
            p *= t;
        }
    }
    let y = DVector::from_column_slice(values);
    let (coef, _) = pinv_solve(&x, &y, 1e-14);
    let resid = &x * &coef - &y;
    let dof = rows.saturating_sub(cols).max(1) as f64;
    let rms = (resid.norm_squared() / dof).sqrt();
    let xtx = x.transpose() * &x;
    let var = xtx
        .try_inverse()
        .map(|inv| (0..cols).map(|k| inv[(k, k)].abs()).collect())
        .unwrap_or_else(|| vec![f64::INFINITY; cols]);
    (coef.iter().cloned().collect(), rms, var)
}
