use nalgebra::{DMatrix, DVector};

use super::HamiltonianModel;

/// Inverse metric `A(x)` together with its first and (optionally) second
/// coordinate derivatives at one point.
#[derive(Debug, Clone)]
pub struct MetricJet {
    pub a: DMatrix<f64>,
    /// `da[k] = ∂A/∂x^k`.
    pub da: Vec<DMatrix<f64>>,
    /// `dda[k][l] = ∂²A/∂x^k∂x^l`, present when the field supports it.
    pub dda: Option<Vec<Vec<DMatrix<f64>>>>,
}

/// A field of symmetric positive-definite inverse metrics on a chart.
pub trait MetricField: Send + Sync {
    fn dim(&self) -> usize;
    /// `order` 0 fills `a` only, 1 adds `da`, 2 adds `dda` if supported.
    fn jet(&self, x: &DVector<f64>, order: usize) -> MetricJet;

    /// Closed-form `(∇_x H, ∇_y H)` of `H = ½ yᵀA(x)y`, bypassing the jet.
    fn hamiltonian_gradient(&self, _x: &DVector<f64>, _y: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        None
    }

    /// Closed-form `2n × 2n` Hessian of `H`, bypassing the jet.
    fn hamiltonian_hessian(&self, _x: &DVector<f64>, _y: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

/// `H(x, y) = ½ yᵀ A(x) y` for an inverse metric field `A`.
pub struct MetricHamiltonian {
    name: String,
    field: Box<dyn MetricField>,
}

impl MetricHamiltonian {
    pub fn new(name: impl Into<String>, field: Box<dyn MetricField>) -> Self {
        Self { name: name.into(), field }
    }

    pub fn flat(n: usize) -> Self {
        Self::new("flat", Box::new(FlatMetric { n }))
    }

    pub fn inverse_metric(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.field.jet(x, 0).a
    }

    pub fn field(&self) -> &dyn MetricField {
        self.field.as_ref()
    }
}

impl HamiltonianModel for MetricHamiltonian {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.field.dim()
    }

    fn energy(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let a = self.field.jet(x, 0).a;
        0.5 * y.dot(&(a * y))
    }

    fn gradient(&self, x: &DVector<f64>, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        if let Some(g) = self.field.hamiltonian_gradient(x, y) {
            return g;
        }
        let jet = self.field.jet(x, 1);
        let gx = DVector::from_fn(x.len(), |k, _| 0.5 * y.dot(&(&jet.da[k] * y)));
        (gx, &jet.a * y)
    }

    fn hessian(&self, x: &DVector<f64>, y: &DVector<f64>) -> Option<DMatrix<f64>> {
        if let Some(h) = self.field.hamiltonian_hessian(x, y) {
            return Some(h);
        }
        let jet = self.field.jet(x, 2);
        let dda = jet.dda.as_ref()?;
        let n = x.len();
        let mut h = DMatrix::zeros(2 * n, 2 * n);
        for k in 0..n {
            let day = &jet.da[k] * y;
            for j in 0..n {
                h[(k, n + j)] = day[j];
                h[(n + j, k)] = day[j];
            }
            for l in 0..=k {
                let v = 0.5 * y.dot(&(&dda[k][l] * y));
                h[(k, l)] = v;
                h[(l, k)] = v;
            }
        }
        h.view_mut((n, n), (n, n)).copy_from(&jet.a);
        Some(h)
    }

    fn homogeneity_degree(&self) -> Option<f64> {
        Some(2.0)
    }
}

/// Euclidean metric on `R^n`.
#[derive(Debug, Clone)]
pub struct FlatMetric {
    pub n: usize,
}

impl MetricField for FlatMetric {
    fn dim(&self) -> usize {
        self.n
    }

    fn jet(&self, _x: &DVector<f64>, order: usize) -> MetricJet {
        let n = self.n;
        let zero = DMatrix::zeros(n, n);
        MetricJet {
            a: DMatrix::identity(n, n),
            da: if order >= 1 { vec![zero.clone(); n] } else { Vec::new() },
            dda: if order >= 2 { Some(vec![vec![zero; n]; n]) } else { None },
        }
    }
}

/// A height function `f: R^n → R` with derivatives up to third order.
pub trait HeightField: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64>;
    /// `third[k][(i, j)] = ∂³f / ∂x^i ∂x^j ∂x^k`; `None` disables the
    /// analytic Hamiltonian Hessian.
    fn third(&self, _x: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        None
    }
}

/// `a · exp(−|x − c|² / (2σ²))`.
#[derive(Debug, Clone)]
pub struct GaussianBump {
    pub amplitude: f64,
    pub sigma: f64,
    pub center: DVector<f64>,
}

/// Sum of Gaussian bumps. A second, small bump serves as the optional
/// perturbation of the single-bump surface.
#[derive(Debug, Clone)]
pub struct GaussianBumps {
    pub bumps: Vec<GaussianBump>,
}

impl GaussianBumps {
    pub fn single(n: usize, amplitude: f64, sigma: f64) -> Self {
        Self { bumps: vec![GaussianBump { amplitude, sigma, center: DVector::zeros(n) }] }
    }

    pub fn with_perturbation(mut self, amplitude: f64, sigma: f64, center: DVector<f64>) -> Self {
        self.bumps.push(GaussianBump { amplitude, sigma, center });
        self
    }
}

impl GaussianBump {
    fn parts(&self, x: &DVector<f64>) -> (DVector<f64>, f64, f64) {
        let d = x - &self.center;
        let s2 = self.sigma * self.sigma;
        let e = self.amplitude * (-d.norm_squared() / (2.0 * s2)).exp();
        (d, e, s2)
    }
}

impl HeightField for GaussianBumps {
    fn dim(&self) -> usize {
        self.bumps.first().map(|b| b.center.len()).unwrap_or(0)
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.bumps.iter().map(|b| b.parts(x).1).sum()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(x.len());
        for b in &self.bumps {
            let (d, e, s2) = b.parts(x);
            g -= d * (e / s2);
        }
        g
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = x.len();
        let mut h = DMatrix::zeros(n, n);
        for b in &self.bumps {
            let (d, e, s2) = b.parts(x);
            h += (&d * d.transpose() / (s2 * s2) - DMatrix::identity(n, n) / s2) * e;
        }
        h
    }

    fn third(&self, x: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        let n = x.len();
        let mut t = vec![DMatrix::zeros(n, n); n];
        for b in &self.bumps {
            let (d, e, s2) = b.parts(x);
            let s4 = s2 * s2;
            let s6 = s4 * s2;
            for (k, tk) in t.iter_mut().enumerate() {
                for i in 0..n {
                    for j in 0..n {
                        let mut v = -d[i] * d[j] * d[k] / s6;
                        if i == j {
                            v += d[k] / s4;
                        }
                        if i == k {
                            v += d[j] / s4;
                        }
                        if j == k {
                            v += d[i] / s4;
                        }
                        tk[(i, j)] += v * e;
                    }
                }
            }
        }
        Some(t)
    }
}

/// Induced metric of the graph `z = f(x)` in `R^{n+1}` in the global chart
/// `x`: `g = I + ∇f ∇fᵀ`, `A = g⁻¹ = I − ∇f ∇fᵀ / (1 + |∇f|²)`.
pub struct GraphMetric<F: HeightField> {
    pub height: F,
}

impl<F: HeightField> GraphMetric<F> {
    /// First fundamental form `g(x)`.
    pub fn metric(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = x.len();
        let g = self.height.gradient(x);
        DMatrix::identity(n, n) + &g * g.transpose()
    }
}

impl<F: HeightField> MetricField for GraphMetric<F> {
    fn dim(&self) -> usize {
        self.height.dim()
    }

    fn jet(&self, x: &DVector<f64>, order: usize) -> MetricJet {
        let n = x.len();
        let g = self.height.gradient(x);
        let w = 1.0 + g.norm_squared();
        let ggt = &g * g.transpose();
        let a = DMatrix::identity(n, n) - &ggt / w;
        if order == 0 {
            return MetricJet { a, da: Vec::new(), dda: None };
        }
        let f = self.height.hessian(x);
        let fg = &f * &g;
        let w2 = w * w;
        let sym = |u: &DVector<f64>, v: &DVector<f64>| u * v.transpose() + v * u.transpose();
        let cols: Vec<DVector<f64>> = (0..n).map(|k| f.column(k).into_owned()).collect();
        let da: Vec<DMatrix<f64>> = (0..n)
            .map(|k| -sym(&cols[k], &g) / w + &ggt * (2.0 * fg[k] / w2))
            .collect();
        let dda = if order >= 2 {
            self.height.third(x).map(|t| {
                let ff = &f * &f;
                let w3 = w2 * w;
                let tg: Vec<DVector<f64>> = t.iter().map(|tl| tl * &g).collect();
                (0..n)
                    .map(|k| {
                        (0..n)
                            .map(|l| {
                                let tkl = t[l].column(k).into_owned();
                                let d_fg = tg[l][k] + ff[(k, l)];
                                -(sym(&tkl, &g) + sym(&cols[k], &cols[l])) / w
                                    + sym(&cols[k], &g) * (2.0 * fg[l] / w2)
                                    + sym(&cols[l], &g) * (2.0 * fg[k] / w2)
                                    + &ggt * (2.0 * d_fg / w2 - 8.0 * fg[k] * fg[l] / w3)
                            })
                            .collect()
                    })
                    .collect()
            })
        } else {
            None
        };
        MetricJet { a, da, dda }
    }

    // With s = ∇f·y and w = 1 + |∇f|², H = ½|y|² − s²/(2w).
    fn hamiltonian_gradient(&self, x: &DVector<f64>, y: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        let g = self.height.gradient(x);
        let f = self.height.hessian(x);
        let w = 1.0 + g.norm_squared();
        let s = g.dot(y);
        let a = &f * y;
        let b = &f * &g * 2.0;
        let gx = -&a * (s / w) + b * (s * s / (2.0 * w * w));
        let gy = y - &g * (s / w);
        Some((gx, gy))
    }

    fn hamiltonian_hessian(&self, x: &DVector<f64>, y: &DVector<f64>) -> Option<DMatrix<f64>> {
        let t = self.height.third(x)?;
        let n = x.len();
        let g = self.height.gradient(x);
        let f = self.height.hessian(x);
        let w = 1.0 + g.norm_squared();
        let (w2, w3) = (w * w, w * w * w);
        let s = g.dot(y);
        let a = &f * y;
        let b = &f * &g * 2.0;
        let ff = &f * &f;
        let mut h = DMatrix::zeros(2 * n, 2 * n);
        for k in 0..n {
            for l in 0..n {
                // ∂²s/∂x^k∂x^l and ∂²w/∂x^k∂x^l from the third derivatives.
                let (mut ty, mut tg) = (0.0, 0.0);
                for i in 0..n {
                    ty += t[l][(i, k)] * y[i];
                    tg += t[l][(i, k)] * g[i];
                }
                let bkl = 2.0 * (ff[(k, l)] + tg);
                h[(k, l)] = -(a[k] * a[l] + s * ty) / w + s * (a[k] * b[l] + b[k] * a[l]) / w2 + s * s * bkl / (2.0 * w2)
                    - s * s * b[k] * b[l] / w3;
                let xy = -(g[l] * a[k] + s * f[(k, l)]) / w + s * g[l] * b[k] / w2;
                h[(k, n + l)] = xy;
                h[(n + l, k)] = xy;
                h[(n + k, n + l)] = if k == l { 1.0 } else { 0.0 } - g[k] * g[l] / w;
            }
        }
        Some(h)
    }
}

/// Geodesic Hamiltonian of the graph surface `z = f(x)`.
pub fn make_surface_graph_metric<F: HeightField + 'static>(f: F) -> MetricHamiltonian {
    MetricHamiltonian::new("graph", Box::new(GraphMetric { height: f }))
}
