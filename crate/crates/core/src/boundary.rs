//! Separated Lagrangian boundary conditions given by affine planes
//! `{(x, y) : A x + B y = c}` and the shooting residual they induce.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{integrate, IntegratorSpec};
use crate::linalg::{null_space, omega, svd_sorted};
use crate::phase::{ConstraintSet, HamiltonianModel, PhasePoint};

const LAGRANGIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineLagrangianPlane {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DVector<f64>,
}

impl AffineLagrangianPlane {
    /// Builds and validates the plane (`rank [A B] = n`, `A Bᵀ = B Aᵀ`).
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DVector<f64>) -> Result<Self> {
        let n = c.len();
        if a.shape() != (n, n) || b.shape() != (n, n) {
            return Err(Error::InvalidBoundary(format!(
                "A and B must be {n}×{n}, got {:?} and {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let plane = Self { a, b, c };
        plane.validate()?;
        Ok(plane)
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    /// `[A B]`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut ab = DMatrix::zeros(n, 2 * n);
        ab.view_mut((0, 0), (n, n)).copy_from(&self.a);
        ab.view_mut((0, n), (n, n)).copy_from(&self.b);
        ab
    }

    /// `max |A Bᵀ − B Aᵀ|`.
    pub fn lagrangian_defect(&self) -> f64 {
        (&self.a * self.b.transpose() - &self.b * self.a.transpose()).amax()
    }

    pub fn validate(&self) -> Result<()> {
        let ab = self.stacked();
        let sv = svd_sorted(&ab).sigma;
        let smax = sv[0];
        let smin = sv[sv.len() - 1];
        if !(smax > 0.0) || smin <= 1e-12 * smax {
            return Err(Error::InvalidBoundary("rank [A B] < n".into()));
        }
        let scale = 1.0f64.max(self.a.amax() * self.b.amax());
        if self.lagrangian_defect() > LAGRANGIAN_TOL * scale {
            return Err(Error::InvalidBoundary(format!(
                "plane is not Lagrangian: |A Bᵀ − B Aᵀ| = {:.3e}",
                self.lagrangian_defect()
            )));
        }
        Ok(())
    }

    /// `A x + B y − c`.
    pub fn evaluate(&self, z: &PhasePoint) -> DVector<f64> {
        &self.a * &z.x + &self.b * &z.y - &self.c
    }

    /// Minimum-norm point of the plane and an orthonormal frame of its
    /// direction space `ker [A B]`.
    ///
    /// The frame is rotated within the direction space to be the closest
    /// orthonormal basis to the momentum directions `[0; I]` (or to the
    /// position directions `[I; 0]` when the plane is transverse to them),
    /// so that coordinates `u` are momenta for Dirichlet planes and
    /// positions for Neumann planes.
    pub fn parametrize(&self) -> Result<(PhasePoint, DMatrix<f64>)> {
        self.validate()?;
        let n = self.dim();
        let ab = self.stacked();
        let gram = &ab * ab.transpose();
        let w = gram
            .lu()
            .solve(&self.c)
            .ok_or_else(|| Error::InvalidBoundary("rank [A B] < n".into()))?;
        let zb = PhasePoint::from_vector(&(ab.transpose() * w));
        let mut momenta = DMatrix::zeros(2 * n, n);
        let mut positions = DMatrix::zeros(2 * n, n);
        for i in 0..n {
            momenta[(n + i, i)] = 1.0;
            positions[(i, i)] = 1.0;
        }
        if self.b.amax() == 0.0 {
            return Ok((zb, momenta));
        }
        if self.a.amax() == 0.0 {
            return Ok((zb, positions));
        }
        let t0 = null_space(&ab);
        for target in [&momenta, &positions] {
            let m = t0.transpose() * target;
            let svd = svd_sorted(&m);
            if svd.sigma[n - 1] > 1e-8 {
                let rot = &svd.u * svd.v.transpose();
                return Ok((zb, &t0 * rot));
            }
        }
        Ok((zb, t0))
    }
}

/// Which entries of `c_far` (then `c_near`) are overwritten by the family
/// parameters `μ`, in order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParameterHook {
    pub far: Vec<usize>,
    pub near: Vec<usize>,
}

impl ParameterHook {
    pub fn len(&self) -> usize {
        self.far.len() + self.near.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatedBoundary {
    pub near: AffineLagrangianPlane,
    pub far: AffineLagrangianPlane,
    pub parameter_hook: ParameterHook,
}

impl SeparatedBoundary {
    pub fn new(near: AffineLagrangianPlane, far: AffineLagrangianPlane) -> Result<Self> {
        if near.dim() != far.dim() {
            return Err(Error::DimensionMismatch { expected: near.dim(), got: far.dim() });
        }
        Ok(Self { near, far, parameter_hook: ParameterHook::default() })
    }

    pub fn dim(&self) -> usize {
        self.near.dim()
    }

    pub fn with_hook(mut self, hook: ParameterHook) -> Result<Self> {
        let n = self.dim();
        if hook.far.iter().chain(&hook.near).any(|&i| i >= n) {
            return Err(Error::InvalidBoundary("parameter index out of range".into()));
        }
        self.parameter_hook = hook;
        Ok(self)
    }

    /// Copy with the hooked right-hand-side entries set to `mu`.
    pub fn at_parameters(&self, mu: &[f64]) -> Result<Self> {
        let hook = &self.parameter_hook;
        if mu.len() != hook.len() {
            return Err(Error::DimensionMismatch { expected: hook.len(), got: mu.len() });
        }
        let mut out = self.clone();
        let (far_mu, near_mu) = mu.split_at(hook.far.len());
        for (&i, &v) in hook.far.iter().zip(far_mu) {
            out.far.c[i] = v;
        }
        for (&i, &v) in hook.near.iter().zip(near_mu) {
            out.near.c[i] = v;
        }
        Ok(out)
    }

    /// Current values of the hooked parameters.
    pub fn parameters(&self) -> Vec<f64> {
        let hook = &self.parameter_hook;
        hook.far.iter().map(|&i| self.far.c[i]).chain(hook.near.iter().map(|&i| self.near.c[i])).collect()
    }
}

fn identity_zero(n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    (DMatrix::identity(n, n), DMatrix::zeros(n, n))
}

/// `{x = x*}` at the start, `{X = X*}` at the end. The hook varies `X*`.
pub fn dirichlet(x_star: &[f64], x_end: &[f64]) -> Result<SeparatedBoundary> {
    let n = x_star.len();
    if x_end.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x_end.len() });
    }
    let (i, z) = identity_zero(n);
    let near = AffineLagrangianPlane::new(i.clone(), z.clone(), DVector::from_row_slice(x_star))?;
    let far = AffineLagrangianPlane::new(i, z, DVector::from_row_slice(x_end))?;
    SeparatedBoundary::new(near, far)?.with_hook(ParameterHook { far: (0..n).collect(), near: Vec::new() })
}

/// `{y = y*}` at the start, `{Y = Y*}` at the end.
pub fn neumann(y_star: &[f64], y_end: &[f64]) -> Result<SeparatedBoundary> {
    let n = y_star.len();
    if y_end.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y_end.len() });
    }
    let (i, z) = identity_zero(n);
    let near = AffineLagrangianPlane::new(z.clone(), i.clone(), DVector::from_row_slice(y_star))?;
    let far = AffineLagrangianPlane::new(z, i, DVector::from_row_slice(y_end))?;
    SeparatedBoundary::new(near, far)?.with_hook(ParameterHook { far: (0..n).collect(), near: Vec::new() })
}

/// Robin plane `x_j + α_j y_j = β_j`.
pub fn robin_plane(alpha: &[f64], beta: &[f64]) -> Result<AffineLagrangianPlane> {
    let n = alpha.len();
    if beta.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: beta.len() });
    }
    AffineLagrangianPlane::new(
        DMatrix::identity(n, n),
        DMatrix::from_diagonal(&DVector::from_row_slice(alpha)),
        DVector::from_row_slice(beta),
    )
}

/// Robin conditions at both ends.
pub fn robin(alpha0: &[f64], beta0: &[f64], alpha1: &[f64], beta1: &[f64]) -> Result<SeparatedBoundary> {
    let near = robin_plane(alpha0, beta0)?;
    let far = robin_plane(alpha1, beta1)?;
    let n = near.dim();
    SeparatedBoundary::new(near, far)?.with_hook(ParameterHook { far: (0..n).collect(), near: Vec::new() })
}

/// Random Lagrangian plane `y = S x + d` with `S` symmetric, written as
/// `(−S) x + I y = d`.
pub fn random_lagrangian_plane<R: Rng>(rng: &mut R, n: usize) -> AffineLagrangianPlane {
    let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let s = (&m + m.transpose()) * 0.5;
    let d = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    AffineLagrangianPlane::new(-s, DMatrix::identity(n, n), d).expect("graph of a symmetric matrix is Lagrangian")
}

/// `max |vᵢᵀ Ω vⱼ|` over the frame columns.
pub fn frame_isotropy_defect(frame: &DMatrix<f64>) -> f64 {
    let n = frame.nrows() / 2;
    (frame.transpose() * omega(n) * frame).amax()
}

/// One evaluation of a shooting residual.
#[derive(Debug, Clone)]
pub struct ResidualEval {
    pub r: DVector<f64>,
    pub jacobian: Option<DMatrix<f64>>,
    pub start: PhasePoint,
    pub end: PhasePoint,
    pub hessian_fd: bool,
}

/// A square nonlinear system `r(u) = 0` arising from a boundary value
/// problem, `u ∈ R^d`.
pub trait ResidualMap: Sync {
    fn dim(&self) -> usize;

    fn evaluate(&self, u: &DVector<f64>, with_jacobian: bool) -> Result<ResidualEval>;

    /// Rejects roots of `r` that do not solve the boundary problem (the
    /// constrained residual also vanishes at the reflected surface point).
    fn is_genuine(&self, _eval: &ResidualEval) -> bool {
        true
    }

    fn residual(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.evaluate(u, false)?.r)
    }

    fn residual_and_jacobian(&self, u: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let e = self.evaluate(u, true)?;
        Ok((e.r, e.jacobian.expect("jacobian requested")))
    }
}

/// Unconstrained separated Lagrangian problem
/// `r(u) = A′ φ_T^x(z(u)) + B′ φ_T^y(z(u)) − c′`, `z(u) = z_b + T u`.
pub struct LagrangianBvp<'a> {
    pub model: &'a dyn HamiltonianModel,
    pub boundary: SeparatedBoundary,
    pub spec: IntegratorSpec,
    /// Flow time (1 unless stated otherwise).
    pub time: f64,
    base: PhasePoint,
    frame: DMatrix<f64>,
}

impl<'a> LagrangianBvp<'a> {
    pub fn new(model: &'a dyn HamiltonianModel, boundary: SeparatedBoundary, spec: IntegratorSpec) -> Result<Self> {
        Self::with_time(model, boundary, spec, 1.0)
    }

    pub fn with_time(
        model: &'a dyn HamiltonianModel,
        boundary: SeparatedBoundary,
        spec: IntegratorSpec,
        time: f64,
    ) -> Result<Self> {
        if model.constraint().is_some() {
            return Err(Error::invalid("constrained models use ConstrainedDirichlet"));
        }
        if boundary.dim() != model.dim() {
            return Err(Error::DimensionMismatch { expected: model.dim(), got: boundary.dim() });
        }
        boundary.far.validate()?;
        let (base, frame) = boundary.near.parametrize()?;
        spec.validate()?;
        Ok(Self { model, boundary, spec, time, base, frame })
    }

    pub fn base(&self) -> &PhasePoint {
        &self.base
    }

    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    pub fn point(&self, u: &DVector<f64>) -> PhasePoint {
        PhasePoint::from_vector(&(self.base.to_vector() + &self.frame * u))
    }

    /// Same problem with the hooked parameters set to `mu`.
    pub fn at_parameters(&self, mu: &[f64]) -> Result<LagrangianBvp<'a>> {
        Self::with_time(self.model, self.boundary.at_parameters(mu)?, self.spec.clone(), self.time)
    }

    /// Local coordinates `u` of a phase point lying on the near plane.
    pub fn coordinates(&self, z: &PhasePoint) -> DVector<f64> {
        self.frame.transpose() * (z.to_vector() - self.base.to_vector())
    }
}

impl ResidualMap for LagrangianBvp<'_> {
    fn dim(&self) -> usize {
        self.boundary.dim()
    }

    fn evaluate(&self, u: &DVector<f64>, with_jacobian: bool) -> Result<ResidualEval> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: u.len() });
        }
        let start = self.point(u);
        let seeds = with_jacobian.then_some(&self.frame);
        let out = integrate(self.model, &start, self.time, &self.spec, seeds)?;
        let r = self.boundary.far.evaluate(&out.z);
        let jacobian = out.variations.map(|jt| self.boundary.far.stacked() * jt);
        Ok(ResidualEval { r, jacobian, start, end: out.z, hessian_fd: out.hessian_fd })
    }
}

/// Dirichlet problem for a constrained model: from `q` on the constraint
/// surface, find initial momenta `p ∈ T_qM` (coordinates `u` in an
/// orthonormal tangent basis `E`) with `φ_T^q(q, E u) = Q*`.
///
/// The residual is the endpoint in a stereographic-type chart centred at
/// `Q*`: `ψ(Q) = 2ρ Fᵀ(Q − Q*) / (2ρ + ν·(Q − Q*))` with `F` an orthonormal
/// basis of `T_{Q*}M`, `ν` the outward unit normal and `ρ = ν·Q*` (exact
/// stereographic projection from the antipode on round spheres). A plain
/// tangent projection `Fᵀ(Q − Q*)` would also vanish where the normal line
/// through `Q*` meets the surface again, creating spurious roots with large
/// Newton basins.
pub struct ConstrainedDirichlet<'a> {
    pub model: &'a dyn HamiltonianModel,
    pub spec: IntegratorSpec,
    pub time: f64,
    q: DVector<f64>,
    target: DVector<f64>,
    near_basis: DMatrix<f64>,
    far_basis: DMatrix<f64>,
    normal: DVector<f64>,
    rho: f64,
}

impl<'a> ConstrainedDirichlet<'a> {
    pub fn new(
        model: &'a dyn HamiltonianModel,
        q: &DVector<f64>,
        target: &DVector<f64>,
        spec: IntegratorSpec,
        time: f64,
    ) -> Result<Self> {
        let c = model.constraint().ok_or_else(|| Error::invalid("model has no constraint"))?;
        for p in [q, target] {
            if p.len() != c.ambient_dim() {
                return Err(Error::DimensionMismatch { expected: c.ambient_dim(), got: p.len() });
            }
            if c.value(p).amax() > 1e-10 {
                return Err(Error::InvalidBoundary("boundary point is off the constraint surface".into()));
            }
        }
        spec.validate()?;
        Ok(Self {
            model,
            spec,
            time,
            q: q.clone(),
            target: target.clone(),
            near_basis: c.tangent_basis(q),
            far_basis: c.tangent_basis(target),
            normal: c.normal_basis(target).column(0).into_owned(),
            rho: 0.0,
        }
        .with_chart_radius())
    }

    fn with_chart_radius(mut self) -> Self {
        // Outward normal with respect to the origin (the centre of the
        // ellipsoid family); the floor keeps the chart defined if the
        // surface is not star-shaped about the origin at the target.
        if self.normal.dot(&self.target) < 0.0 {
            self.normal = -&self.normal;
        }
        self.rho = self.normal.dot(&self.target).max(1e-3 * self.target.norm()).max(1e-12);
        self
    }

    /// Chart value and derivative at an endpoint `Q`.
    fn chart(&self, q_end: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let d = q_end - &self.target;
        let denom = 2.0 * self.rho + self.normal.dot(&d);
        let ftd = self.far_basis.transpose() * &d;
        let val = &ftd * (2.0 * self.rho / denom);
        let jac = self.far_basis.transpose() * (2.0 * self.rho / denom)
            - &ftd * self.normal.transpose() * (2.0 * self.rho / (denom * denom));
        (val, jac)
    }

    fn constraint(&self) -> &dyn ConstraintSet {
        self.model.constraint().expect("checked at construction")
    }

    pub fn near_basis(&self) -> &DMatrix<f64> {
        &self.near_basis
    }

    pub fn far_basis(&self) -> &DMatrix<f64> {
        &self.far_basis
    }

    pub fn start(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }

    /// Same start, new target (projected onto the surface).
    pub fn with_target(&self, target: &DVector<f64>) -> Result<ConstrainedDirichlet<'a>> {
        let t = self.constraint().project_position(target)?;
        Self::new(self.model, &self.q, &t, self.spec.clone(), self.time)
    }

    pub fn point(&self, u: &DVector<f64>) -> PhasePoint {
        PhasePoint { x: self.q.clone(), y: &self.near_basis * u }
    }
}

impl ResidualMap for ConstrainedDirichlet<'_> {
    fn dim(&self) -> usize {
        self.near_basis.ncols()
    }

    fn evaluate(&self, u: &DVector<f64>, with_jacobian: bool) -> Result<ResidualEval> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: u.len() });
        }
        let m = self.q.len();
        let start = self.point(u);
        let seeds = with_jacobian.then(|| {
            let mut s = DMatrix::zeros(2 * m, self.dim());
            s.view_mut((m, 0), (m, self.dim())).copy_from(&self.near_basis);
            s
        });
        let out = integrate(self.model, &start, self.time, &self.spec, seeds.as_ref())?;
        let (r, dchart) = self.chart(&out.z.x);
        let jacobian = out.variations.map(|v| dchart * v.rows(0, m));
        Ok(ResidualEval { r, jacobian, start, end: out.z, hessian_fd: out.hessian_fd })
    }

    fn is_genuine(&self, eval: &ResidualEval) -> bool {
        (&eval.end.x - &self.target).norm() <= 1e-6 * (1.0 + self.target.norm())
    }
}
