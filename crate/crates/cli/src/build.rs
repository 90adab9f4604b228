//! Turns a configuration into models, integrators and boundary problems.

use conj_atlas::boundary::{dirichlet, neumann, robin, ConstrainedDirichlet, LagrangianBvp, ResidualMap};
use conj_atlas::flow::{IntegratorSpec, Scheme};
use conj_atlas::phase::{
    make_ellipsoid_constrained, make_surface_graph_metric, GaussianBump, GaussianBumps, MetricHamiltonian, Monomial,
    PolynomialHamiltonian,
};
use conj_atlas::shooting::{MultistartPlan, ResidualFamily, SolveOptions};
use conj_atlas::symmetry::{two_scaling_boundary, two_scaling_system, ScalingAction};
use conj_atlas::HamiltonianModel;
use nalgebra::DVector;

use crate::config::{
    ActionKind, BoundaryConfig, ExperimentConfig, ModelConfig, SchemeChoice, ShootingConfig, SymmetryConfig, TermConfig,
};
use crate::CliError;

fn bad(key: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {e}"))
}

pub struct Built {
    pub model: Box<dyn HamiltonianModel>,
    /// Natural action of the model family, when it has one.
    pub native_action: Option<ScalingAction>,
}

fn terms(list: &[TermConfig]) -> Vec<Monomial> {
    list.iter().map(|t| Monomial::new(t.coef, t.x_exp.clone(), t.y_exp.clone())).collect()
}

pub fn model(cfg: &ModelConfig) -> Result<Built, CliError> {
    let model: Box<dyn HamiltonianModel> = match cfg {
        ModelConfig::Flat { dim } => {
            if *dim == 0 {
                return Err(bad("model.dim", "must be positive"));
            }
            Box::new(MetricHamiltonian::flat(*dim))
        }
        ModelConfig::Gaussian { dim, bumps } => {
            if bumps.is_empty() {
                return Err(bad("model.bumps", "at least one bump is required"));
            }
            let mut list = Vec::new();
            for b in bumps {
                if b.center.len() != *dim {
                    return Err(bad("model.bumps.center", format!("expected {dim} coordinates")));
                }
                if !(b.sigma > 0.0) {
                    return Err(bad("model.bumps.sigma", "must be positive"));
                }
                list.push(GaussianBump { amplitude: b.amplitude, sigma: b.sigma, center: DVector::from_vec(b.center.clone()) });
            }
            Box::new(make_surface_graph_metric(GaussianBumps { bumps: list }))
        }
        ModelConfig::Sphere { dim, radius } => {
            let (m, _) = make_ellipsoid_constrained(&vec![*radius; *dim]).map_err(|e| bad("model.radius", e))?;
            Box::new(m)
        }
        ModelConfig::Ellipsoid { semi_axes, perturbation } => {
            let (mut m, _) = make_ellipsoid_constrained(semi_axes).map_err(|e| bad("model.semi_axes", e))?;
            if let Some(p) = perturbation {
                m = m.with_perturbation(p.coef, p.exps.clone()).map_err(|e| bad("model.perturbation", e))?;
            }
            Box::new(m)
        }
        ModelConfig::TwoScaling { beta, gamma, terms: extra } => {
            let (mut m, action) = two_scaling_system(*beta, *gamma).map_err(|e| bad("model", e))?;
            for t in terms(extra) {
                m = m.with_term(t).map_err(|e| bad("model.terms", e))?;
            }
            return Ok(Built { model: Box::new(m), native_action: Some(action) });
        }
        ModelConfig::Polynomial { dim, terms: list } => {
            Box::new(PolynomialHamiltonian::new(*dim, terms(list)).map_err(|e| bad("model.terms", e))?)
        }
    };
    Ok(Built { model, native_action: None })
}

pub fn integrator(cfg: &ExperimentConfig, model: &dyn HamiltonianModel) -> Result<IntegratorSpec, CliError> {
    let c = &cfg.integrator;
    let mut spec = match c.scheme {
        SchemeChoice::Auto => IntegratorSpec::symplectic_for(model, c.step),
        SchemeChoice::Midpoint => IntegratorSpec::midpoint(c.step),
        SchemeChoice::Rattle => IntegratorSpec::rattle(c.step),
        SchemeChoice::Reference => IntegratorSpec { step: c.step, ..IntegratorSpec::reference(c.rk_tol) },
    };
    spec.newton_tol = c.newton_tol;
    spec.newton_max_iter = c.newton_max_iter;
    if model.constraint().is_some() && spec.scheme == Scheme::ImplicitMidpoint {
        return Err(bad("integrator.scheme", "constrained models need rattle or reference"));
    }
    spec.validate().map_err(|e| bad("integrator", e))?;
    Ok(spec)
}

pub enum Problem<'a> {
    Free(LagrangianBvp<'a>),
    Constrained(ConstrainedDirichlet<'a>),
}

impl Problem<'_> {
    pub fn map(&self) -> &dyn ResidualMap {
        match self {
            Self::Free(b) => b,
            Self::Constrained(b) => b,
        }
    }

    pub fn family(&self) -> &dyn ResidualFamily {
        match self {
            Self::Free(b) => b,
            Self::Constrained(b) => b,
        }
    }

    pub fn free(&self) -> Option<&LagrangianBvp<'_>> {
        match self {
            Self::Free(b) => Some(b),
            Self::Constrained(_) => None,
        }
    }
}

pub fn problem<'a>(
    cfg: &BoundaryConfig,
    model: &'a dyn HamiltonianModel,
    spec: &IntegratorSpec,
) -> Result<Problem<'a>, CliError> {
    let n = model.dim();
    let check = |key: &str, v: &[f64]| {
        if v.len() == n {
            Ok(())
        } else {
            Err(bad(key, format!("expected {n} entries, got {}", v.len())))
        }
    };
    let (boundary, time) = match cfg {
        BoundaryConfig::Dirichlet { start, end, time } => {
            check("boundary.start", start)?;
            check("boundary.end", end)?;
            if model.constraint().is_some() {
                let q = DVector::from_vec(start.clone());
                let target = DVector::from_vec(end.clone());
                let bvp = ConstrainedDirichlet::new(model, &q, &target, spec.clone(), *time)
                    .map_err(|e| bad("boundary", e))?;
                return Ok(Problem::Constrained(bvp));
            }
            (dirichlet(start, end), *time)
        }
        BoundaryConfig::Neumann { start, end, time } => {
            check("boundary.start", start)?;
            check("boundary.end", end)?;
            (neumann(start, end), *time)
        }
        BoundaryConfig::Robin { alpha0, beta0, alpha1, beta1, time } => {
            for (k, v) in [("boundary.alpha0", alpha0), ("boundary.beta0", beta0), ("boundary.alpha1", alpha1), ("boundary.beta1", beta1)] {
                check(k, v)?;
            }
            (robin(alpha0, beta0, alpha1, beta1), *time)
        }
        BoundaryConfig::TwoScaling { xi, xi_end, time } => {
            if n != 3 {
                return Err(bad("boundary.kind", "two_scaling planes need a three-dimensional model"));
            }
            (two_scaling_boundary(*xi, *xi_end), *time)
        }
    };
    if model.constraint().is_some() {
        return Err(bad("boundary.kind", "constrained models support dirichlet only"));
    }
    let boundary = boundary.map_err(|e| bad("boundary", e))?;
    let bvp = LagrangianBvp::with_time(model, boundary, spec.clone(), time).map_err(|e| bad("boundary", e))?;
    Ok(Problem::Free(bvp))
}

pub fn shooting(cfg: &ShootingConfig, dim: usize, seed: u64) -> Result<(MultistartPlan, SolveOptions), CliError> {
    let center = cfg.center.clone().unwrap_or_else(|| vec![0.0; dim]);
    let plan = MultistartPlan { center, radius: cfg.radius, starts: cfg.starts, seed, dedup_tol: cfg.dedup_tol };
    plan.validate(dim).map_err(|e| bad("shooting", e))?;
    let opts = SolveOptions {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        sigma_rel: cfg.sigma_rel,
        min_step: cfg.min_step,
        ..SolveOptions::default()
    };
    opts.validate().map_err(|e| bad("shooting", e))?;
    Ok((plan, opts))
}

pub fn action(cfg: &SymmetryConfig, built: &Built) -> Result<ScalingAction, CliError> {
    let n = built.model.dim();
    let p = cfg.p.unwrap_or(2.0);
    let action = match cfg.action {
        ActionKind::MomentumScaling => ScalingAction::momentum_scaling(n, p),
        ActionKind::TwoScaling => built
            .native_action
            .clone()
            .ok_or_else(|| bad("symmetry.action", "two_scaling needs a two_scaling model"))?,
        ActionKind::Custom => {
            let exponents = cfg.exponents.clone().ok_or_else(|| bad("symmetry.exponents", "required for custom actions"))?;
            let c = cfg.c.ok_or_else(|| bad("symmetry.c", "required for custom actions"))?;
            ScalingAction::new(exponents, c, p).map_err(|e| bad("symmetry.exponents", e))?
        }
    };
    if action.n() != n {
        return Err(bad("symmetry.exponents", format!("expected {n} exponents per generator")));
    }
    Ok(action)
}
