//! Strict TOML experiment configuration.

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Sweep,
    Locus,
    Classify,
    SymmetryCheck,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Solve => "solve",
            Self::Sweep => "sweep",
            Self::Locus => "locus",
            Self::Classify => "classify",
            Self::SymmetryCheck => "symmetry-check",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seeds multistart sampling and the symmetry sample points.
    #[serde(default)]
    pub seed: u64,
    pub model: ModelConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    pub boundary: Option<BoundaryConfig>,
    pub shooting: Option<ShootingConfig>,
    pub sweep: Option<SweepConfig>,
    pub locus: Option<LocusConfig>,
    pub classify: Option<ClassifyConfig>,
    pub symmetry: Option<SymmetryConfig>,
    pub output: Option<OutputConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Flat { dim: usize },
    Gaussian { dim: usize, bumps: Vec<BumpConfig> },
    Sphere { dim: usize, radius: f64 },
    Ellipsoid { semi_axes: Vec<f64>, perturbation: Option<PerturbationConfig> },
    TwoScaling {
        beta: f64,
        gamma: f64,
        #[serde(default)]
        terms: Vec<TermConfig>,
    },
    Polynomial { dim: usize, terms: Vec<TermConfig> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpConfig {
    pub amplitude: f64,
    pub sigma: f64,
    pub center: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    pub coef: f64,
    pub exps: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub coef: f64,
    pub x_exp: Vec<u32>,
    pub y_exp: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SchemeChoice {
    /// RATTLE for constrained models, implicit midpoint otherwise.
    #[default]
    Auto,
    Midpoint,
    Rattle,
    Reference,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub scheme: SchemeChoice,
    pub step: f64,
    pub rk_tol: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { scheme: SchemeChoice::Auto, step: 1e-3, rk_tol: 1e-12, newton_tol: 1e-12, newton_max_iter: 25 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum BoundaryConfig {
    Dirichlet {
        start: Vec<f64>,
        end: Vec<f64>,
        #[serde(default = "unit")]
        time: f64,
    },
    Neumann {
        start: Vec<f64>,
        end: Vec<f64>,
        #[serde(default = "unit")]
        time: f64,
    },
    Robin {
        alpha0: Vec<f64>,
        beta0: Vec<f64>,
        alpha1: Vec<f64>,
        beta1: Vec<f64>,
        #[serde(default = "unit")]
        time: f64,
    },
    TwoScaling {
        xi: f64,
        xi_end: f64,
        #[serde(default = "unit")]
        time: f64,
    },
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShootingConfig {
    /// Center of the start ball in boundary coordinates; zero by default.
    pub center: Option<Vec<f64>>,
    #[serde(default = "unit")]
    pub radius: f64,
    #[serde(default = "default_starts")]
    pub starts: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_min_step")]
    pub min_step: f64,
    #[serde(default = "default_sigma_rel")]
    pub sigma_rel: f64,
    #[serde(default = "default_dedup")]
    pub dedup_tol: f64,
}

fn default_starts() -> usize {
    16
}
fn default_tol() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    50
}
fn default_min_step() -> f64 {
    1e-12
}
fn default_sigma_rel() -> f64 {
    1e-6
}
fn default_dedup() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// One `[lo, hi, count]` triple per boundary parameter.
    pub axes: Vec<(f64, f64, usize)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocusConfig {
    pub base: Vec<f64>,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    /// Angle interval of a surface fan; the full circle by default.
    pub s_range: Option<(f64, f64)>,
    /// Direction grid of a 3-manifold fan.
    #[serde(default = "default_polar")]
    pub polar: usize,
    #[serde(default = "default_azimuth")]
    pub azimuth: usize,
    /// Ambient coordinates drawn in the SVG.
    #[serde(default = "default_svg_axes")]
    pub svg_axes: (usize, usize),
}

fn default_t_max() -> f64 {
    10.0
}
fn default_resolution() -> usize {
    256
}
fn default_polar() -> usize {
    12
}
fn default_azimuth() -> usize {
    24
}
fn default_svg_axes() -> (usize, usize) {
    (0, 1)
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ClassifyConfig {
    pub sigma_rel: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    MomentumScaling,
    /// The two-generator action of a `two_scaling` model.
    TwoScaling,
    /// Explicit `exponents`, `c` and `p`.
    Custom,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymmetryConfig {
    pub action: ActionKind,
    /// Homogeneity degree; 2 by default.
    pub p: Option<f64>,
    pub c: Option<f64>,
    pub exponents: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_invariance_tol")]
    pub tol: f64,
    #[serde(default = "unit")]
    pub sample_radius: f64,
}

fn default_samples() -> usize {
    50
}
fn default_invariance_tol() -> f64 {
    1e-9
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<String>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Every block the command reads must be present.
    pub fn check_blocks(&self, command: Command) -> Result<(), CliError> {
        let need = |present: bool, key: &str| {
            if present {
                Ok(())
            } else {
                Err(CliError::Config(format!("command `{}` needs the [{key}] table", command.name())))
            }
        };
        match command {
            Command::Solve | Command::Classify => {
                need(self.boundary.is_some(), "boundary")?;
                need(self.shooting.is_some(), "shooting")
            }
            Command::Sweep => {
                need(self.boundary.is_some(), "boundary")?;
                need(self.shooting.is_some(), "shooting")?;
                need(self.sweep.is_some(), "sweep")
            }
            Command::Locus => need(self.locus.is_some(), "locus"),
            Command::SymmetryCheck => need(self.symmetry.is_some(), "symmetry"),
        }
    }
}
