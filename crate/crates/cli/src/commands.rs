//! The five commands. Each writes its artifacts and returns the exit code
//! for a completed run (0, or 1 when a check reports violations).

use conj_atlas::locus::{trace_locus, trace_locus_3d, LocusOptions, RayFan, SurfaceOptions};
use conj_atlas::phase::random_points;
use conj_atlas::shooting::{multistart, sweep, MuGrid, SolutionPoint};
use conj_atlas::singularity::{classify, ClassifyOptions, ReportSummary};
use conj_atlas::symmetry::{check_obstruction, verify_invariance, ObstructionCheckReport, ObstructionOptions, ScalingAction};
use conj_atlas::{HamiltonianModel, PhasePoint};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::build::{self, Built, Problem};
use crate::config::{Command, ExperimentConfig};
use crate::output::{columns, num, svg, to_json, Artifacts, Csv};
use crate::CliError;

pub struct Context<'a> {
    pub cfg: &'a ExperimentConfig,
    pub built: &'a Built,
    pub emit_svg: bool,
}

fn numerical(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

pub fn run(command: Command, ctx: &Context<'_>, out: &mut Artifacts) -> Result<i32, CliError> {
    match command {
        Command::Solve => solve(ctx, out),
        Command::Sweep => run_sweep(ctx, out),
        Command::Locus => locus(ctx, out),
        Command::Classify => run_classify(ctx, out),
        Command::SymmetryCheck => symmetry_check(ctx, out),
    }
}

fn problem<'a>(ctx: &Context<'a>) -> Result<Problem<'a>, CliError> {
    let model = ctx.built.model.as_ref();
    let spec = build::integrator(ctx.cfg, model)?;
    let boundary = ctx.cfg.boundary.as_ref().ok_or_else(|| CliError::Config("missing [boundary] table".into()))?;
    build::problem(boundary, model, &spec)
}

fn solutions(ctx: &Context<'_>, p: &Problem<'_>) -> Result<Vec<SolutionPoint>, CliError> {
    let shooting = ctx.cfg.shooting.as_ref().ok_or_else(|| CliError::Config("missing [shooting] table".into()))?;
    let (plan, opts) = build::shooting(shooting, p.map().dim(), ctx.cfg.seed)?;
    let sols = multistart(p.map(), &plan, &opts).map_err(numerical)?;
    if sols.is_empty() {
        return Err(CliError::Numerical(format!("no converged solution from {} starts", plan.starts)));
    }
    log::info!("{} distinct solutions", sols.len());
    Ok(sols)
}

fn solution_csv(sols: &[SolutionPoint]) -> String {
    let (d, n) = (sols[0].u.len(), sols[0].z.x.len());
    let mut header: Vec<String> =
        ["index", "converged", "residual_norm", "iterations", "degeneracy", "sigma_ratio"].map(String::from).to_vec();
    for (p, k) in [("u", d), ("x", n), ("y", n), ("X", n), ("Y", n)] {
        header.extend(columns(p, k));
    }
    let mut csv = Csv::new(&header);
    for (i, s) in sols.iter().enumerate() {
        let mut row = vec![
            i.to_string(),
            (s.converged as u8).to_string(),
            num(s.residual_norm),
            s.iterations.to_string(),
            s.degeneracy.to_string(),
            num(s.sigma_ratio()),
        ];
        for v in [&s.u, &s.z.x, &s.z.y, &s.z_end.x, &s.z_end.y] {
            row.extend(v.iter().map(|&a| num(a)));
        }
        csv.row(&row);
    }
    csv.finish()
}

fn solve(ctx: &Context<'_>, out: &mut Artifacts) -> Result<i32, CliError> {
    let p = problem(ctx)?;
    let sols = solutions(ctx, &p)?;
    out.write("solutions.csv", &solution_csv(&sols))?;
    Ok(0)
}

fn run_sweep(ctx: &Context<'_>, out: &mut Artifacts) -> Result<i32, CliError> {
    let p = problem(ctx)?;
    let cfg = ctx.cfg.sweep.as_ref().ok_or_else(|| CliError::Config("missing [sweep] table".into()))?;
    let family = p.family();
    if cfg.axes.len() != family.param_dim() {
        return Err(CliError::Config(format!(
            "sweep.axes: the boundary has {} parameters, got {} axes",
            family.param_dim(),
            cfg.axes.len()
        )));
    }
    let grid = MuGrid::uniform(&cfg.axes);
    grid.validate(family.param_dim()).map_err(|e| CliError::Config(format!("sweep.axes: {e}")))?;
    let shooting = ctx.cfg.shooting.as_ref().ok_or_else(|| CliError::Config("missing [shooting] table".into()))?;
    let (plan, opts) = build::shooting(shooting, p.map().dim(), ctx.cfg.seed)?;
    let result = sweep(family, &grid, &plan, &opts).map_err(numerical)?;

    let k = family.param_dim();
    let mut header = vec!["cell".to_string()];
    header.extend(columns("mu", k));
    header.extend(["count", "fold", "min_sigma_ratio", "error"].map(String::from));
    let mut cells = Csv::new(&header);
    let mut header = vec!["cell".to_string(), "solution".to_string()];
    header.extend(columns("mu", k));
    header.extend(["degeneracy", "sigma_ratio"].map(String::from));
    header.extend(columns("u", p.map().dim()));
    let mut sols = Csv::new(&header);
    for (i, c) in result.cells.iter().enumerate() {
        let mu: Vec<String> = c.mu.iter().map(|&v| num(v)).collect();
        let mut row = vec![i.to_string()];
        row.extend(mu.iter().cloned());
        let error = c.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        row.extend([c.count.to_string(), (c.fold as u8).to_string(), num(c.min_sigma_ratio), error]);
        cells.row(&row);
        for (j, s) in c.solutions.iter().enumerate() {
            let mut row = vec![i.to_string(), j.to_string()];
            row.extend(mu.iter().cloned());
            row.extend([s.degeneracy.to_string(), num(s.sigma_ratio())]);
            row.extend(s.u.iter().map(|&v| num(v)));
            sols.row(&row);
        }
    }
    out.write("sweep.csv", &cells.finish())?;
    out.write("sweep_solutions.csv", &sols.finish())?;
    let failed = result.cells.iter().filter(|c| c.error.is_some()).count();
    if failed == result.cells.len() {
        return Err(CliError::Numerical(format!("every sweep cell failed; first error: {:?}", result.cells[0].error)));
    }
    Ok(0)
}

#[derive(Serialize)]
struct CuspSummary {
    index: usize,
    s: f64,
    kind: String,
    confirmed: bool,
}

#[derive(Serialize)]
struct LocusSummary {
    points: usize,
    missing: usize,
    closed: bool,
    spread: f64,
    confirmed_cusps: usize,
    cusps: Vec<CuspSummary>,
}

#[derive(Serialize)]
struct UmbilicSummary {
    s: Vec<f64>,
    t_star: f64,
    endpoint: Vec<f64>,
    sigma: Vec<f64>,
    degeneracy: usize,
    kind: String,
    ridges: usize,
}

#[derive(Serialize)]
struct SurfaceSummary {
    samples: usize,
    missing: usize,
    candidates: Vec<UmbilicSummary>,
}

fn locus(ctx: &Context<'_>, out: &mut Artifacts) -> Result<i32, CliError> {
    let cfg = ctx.cfg.locus.as_ref().ok_or_else(|| CliError::Config("missing [locus] table".into()))?;
    let model: &dyn HamiltonianModel = ctx.built.model.as_ref();
    let spec = build::integrator(ctx.cfg, model)?;
    let m = model.dim();
    if cfg.base.len() != m {
        return Err(CliError::Config(format!("locus.base: expected {m} coordinates, got {}", cfg.base.len())));
    }
    let mut base = DVector::from_vec(cfg.base.clone());
    if let Some(c) = model.constraint() {
        base = c.project_position(&base).map_err(|e| CliError::Config(format!("locus.base: {e}")))?;
    }
    let fan = RayFan::new(model, &base, spec).map_err(|e| CliError::Config(format!("locus.base: {e}")))?;
    let (ax, ay) = cfg.svg_axes;
    if ax >= m || ay >= m {
        return Err(CliError::Config(format!("locus.svg_axes: coordinates must be below {m}")));
    }
    match fan.intrinsic_dim() {
        2 => {
            let mut opts = LocusOptions { resolution: cfg.resolution, t_max: cfg.t_max, ..LocusOptions::default() };
            if let Some(r) = cfg.s_range {
                opts.s_range = r;
            }
            opts.validate().map_err(|e| CliError::Config(format!("locus: {e}")))?;
            let curve = trace_locus(&fan, &opts).map_err(numerical)?;
            let mut header = vec!["s".to_string(), "t_star".to_string()];
            header.extend(columns("X", m));
            header.extend(["m", "cusp_flag"].map(String::from));
            let mut csv = Csv::new(&header);
            for p in &curve.points {
                let mut row = vec![num(p.s[0]), num(p.t_star)];
                row.extend(p.endpoint.iter().map(|&v| num(v)));
                row.extend([p.degeneracy.to_string(), (p.cusp as u8).to_string()]);
                csv.row(&row);
            }
            out.write("locus.csv", &csv.finish())?;
            let summary = LocusSummary {
                points: curve.points.len(),
                missing: curve.missing,
                closed: curve.closed,
                spread: curve.spread(),
                confirmed_cusps: curve.confirmed_cusps(),
                cusps: curve
                    .cusps
                    .iter()
                    .map(|c| CuspSummary { index: c.index, s: c.s, kind: c.kind.label().into(), confirmed: c.confirmed })
                    .collect(),
            };
            out.write("locus.json", &to_json(&summary)?)?;
            if ctx.emit_svg {
                let pts: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.endpoint[ax], p.endpoint[ay])).collect();
                let marks: Vec<(f64, f64)> = curve
                    .cusps
                    .iter()
                    .filter(|c| c.confirmed)
                    .map(|c| (curve.points[c.index].endpoint[ax], curve.points[c.index].endpoint[ay]))
                    .collect();
                out.write("locus.svg", &svg(&pts, &marks))?;
            }
            if curve.points.is_empty() {
                log::warn!("no conjugate point up to t_max = {}", cfg.t_max);
            }
            Ok(0)
        }
        3 => {
            let opts = SurfaceOptions { polar: cfg.polar, azimuth: cfg.azimuth, t_max: cfg.t_max, ..SurfaceOptions::default() };
            let surface = trace_locus_3d(&fan, &opts).map_err(numerical)?;
            let mut header = vec!["s1".to_string(), "s2".to_string(), "t_star".to_string()];
            header.extend(columns("X", m));
            header.extend(["m", "cusp_flag"].map(String::from));
            let mut csv = Csv::new(&header);
            for p in &surface.samples {
                let mut row = vec![num(p.s[0]), num(p.s[1]), num(p.t_star)];
                row.extend(p.endpoint.iter().map(|&v| num(v)));
                row.extend([p.degeneracy.to_string(), (p.cusp as u8).to_string()]);
                csv.row(&row);
            }
            out.write("locus.csv", &csv.finish())?;
            let summary = SurfaceSummary {
                samples: surface.samples.len(),
                missing: surface.missing,
                candidates: surface
                    .candidates
                    .iter()
                    .map(|c| UmbilicSummary {
                        s: c.s.clone(),
                        t_star: c.t_star,
                        endpoint: c.endpoint.iter().cloned().collect(),
                        sigma: c.sigma.clone(),
                        degeneracy: c.degeneracy,
                        kind: c.kind.label().into(),
                        ridges: c.ridges,
                    })
                    .collect(),
            };
            out.write("locus.json", &to_json(&summary)?)?;
            if ctx.emit_svg {
                let pts: Vec<(f64, f64)> = surface.samples.iter().map(|p| (p.endpoint[ax], p.endpoint[ay])).collect();
                let marks: Vec<(f64, f64)> = surface.candidates.iter().map(|c| (c.endpoint[ax], c.endpoint[ay])).collect();
                out.write("locus.svg", &svg(&pts, &marks))?;
            }
            Ok(0)
        }
        d => Err(CliError::Config(format!("locus: fans are traced on 2- and 3-manifolds, this model has dimension {d}"))),
    }
}

#[derive(Serialize)]
struct Classified {
    index: usize,
    sigma_ratio: f64,
    u: Vec<f64>,
    report: ReportSummary,
}

fn run_classify(ctx: &Context<'_>, out: &mut Artifacts) -> Result<i32, CliError> {
    let p = problem(ctx)?;
    let sols = solutions(ctx, &p)?;
    let mut opts = ClassifyOptions::default();
    if let Some(r) = ctx.cfg.classify.as_ref().and_then(|c| c.sigma_rel) {
        opts.sigma_rel = r;
    }
    let mut records = Vec::new();
    for (i, s) in sols.iter().enumerate() {
        let report = classify(p.map(), s, &opts).map_err(numerical)?;
        records.push(Classified { index: i, sigma_ratio: s.sigma_ratio(), u: s.u.iter().cloned().collect(), report: report.summary() });
    }
    let mut header = ["index", "m", "type", "sigma_ratio", "cubic_discriminant"].map(String::from).to_vec();
    header.extend(columns("u", sols[0].u.len()));
    let mut csv = Csv::new(&header);
    for r in &records {
        let mut row = vec![
            r.index.to_string(),
            r.report.m.to_string(),
            r.report.kind.label().to_string(),
            num(r.sigma_ratio),
            r.report.cubic_discriminant.map(num).unwrap_or_default(),
        ];
        row.extend(r.u.iter().map(|&v| num(v)));
        csv.row(&row);
    }
    out.write("classify.csv", &csv.finish())?;
    out.write("classify.json", &to_json(&records)?)?;
    Ok(0)
}

#[derive(Serialize)]
struct Violation {
    kind: &'static str,
    index: usize,
    point: Vec<f64>,
    value: f64,
    tol: f64,
}

#[derive(Serialize)]
struct SymmetryReport {
    action: ScalingAction,
    samples: usize,
    max_invariance_defect: f64,
    tol: f64,
    obstruction: Option<ObstructionCheckReport>,
    violations: Vec<Violation>,
    pass: bool,
}

fn symmetry_check(ctx: &Context<'_>, out: &mut Artifacts) -> Result<i32, CliError> {
    let cfg = ctx.cfg.symmetry.as_ref().ok_or_else(|| CliError::Config("missing [symmetry] table".into()))?;
    let model = ctx.built.model.as_ref();
    if model.constraint().is_some() {
        return Err(CliError::Config("model.kind: symmetry checks need an unconstrained model".into()));
    }
    let action = build::action(cfg, ctx.built)?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
    let points: Vec<PhasePoint> = random_points(&mut rng, model.dim(), cfg.samples, cfg.sample_radius, cfg.sample_radius);
    let mut violations = Vec::new();
    let mut worst: f64 = 0.0;
    for (i, z) in points.iter().enumerate() {
        let d = verify_invariance(&action, model, std::slice::from_ref(z)).map_err(numerical)?;
        worst = worst.max(d);
        if !(d <= cfg.tol) {
            violations.push(Violation { kind: "invariance", index: i, point: z.to_vector().iter().cloned().collect(), value: d, tol: cfg.tol });
        }
    }

    // The degeneracy bound at solutions of the configured boundary problem.
    let mut obstruction = None;
    if ctx.cfg.boundary.is_some() && ctx.cfg.shooting.is_some() {
        let p = problem(ctx)?;
        if let Some(bvp) = p.free() {
            let sols = solutions(ctx, &p)?;
            let report = check_obstruction(&action, bvp, &sols, &ObstructionOptions::default()).map_err(numerical)?;
            for (i, r) in report.records.iter().enumerate() {
                if r.status == conj_atlas::symmetry::CheckStatus::Fail {
                    violations.push(Violation {
                        kind: "degeneracy_bound",
                        index: i,
                        point: r.z.clone(),
                        value: r.degeneracy as f64,
                        tol: r.bound as f64,
                    });
                }
            }
            obstruction = Some(report);
        }
    }
    let pass = violations.is_empty();
    let report = SymmetryReport {
        action,
        samples: points.len(),
        max_invariance_defect: worst,
        tol: cfg.tol,
        obstruction,
        violations,
        pass,
    };
    out.write("symmetry.json", &to_json(&report)?)?;
    Ok(if pass { 0 } else { 1 })
}
