//! Experiment configuration. One JSON document, parsed strictly: unknown
//! keys anywhere are rejected and named in the error.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use mtlz_core::evolution::{PropagationOptions, StepControl};
use mtlz_core::models::{
    FourStateFamily, FourStateParams, GaudinFamily, GaudinParams, LandauZenerFamily, LandauZenerParams,
    TavisCummingsFamily, TcParams, TcSector,
};
use mtlz_core::HamiltonianFamily;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TaskName {
    VerifyFamily,
    Evolve,
    Scatter,
    KappaMap,
    Sweep,
}

impl TaskName {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskName::VerifyFamily => "verify-family",
            TaskName::Evolve => "evolve",
            TaskName::Scatter => "scatter",
            TaskName::KappaMap => "kappa-map",
            TaskName::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub model: ModelConfig,
    /// Must agree with the subcommand when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub evolve: EvolveConfig,
    #[serde(default)]
    pub scatter: ScatterConfig,
    #[serde(default)]
    pub kappa_map: KappaMapConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn from_value(v: serde_json::Value) -> Result<Self, CliError> {
        serde_json::from_value(v).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "params", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    FourState(FourStateParams),
    LandauZener(LandauZenerParams),
    TavisCummings(TcModel),
    Gaudin(GaudinParams),
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::FourState(FourStateParams::reference(0.2))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TcModel {
    pub epsilons: Vec<f64>,
    pub g: f64,
    pub boson_cutoff: usize,
    #[serde(default = "truncation_exact")]
    pub sector: TcSector,
    /// Value of ω in the default base point.
    #[serde(default)]
    pub omega: f64,
}

fn truncation_exact() -> TcSector {
    TcSector::TruncationExact
}

impl TcModel {
    fn params(&self) -> TcParams {
        TcParams { epsilons: self.epsilons.clone(), g: self.g, boson_cutoff: self.boson_cutoff }
    }
}

fn min_separation(eps: &[f64]) -> Option<f64> {
    let mut s: Vec<f64> = eps.to_vec();
    s.sort_by(f64::total_cmp);
    s.windows(2).map(|w| w[1] - w[0]).reduce(f64::min)
}

impl ModelConfig {
    pub fn build(&self) -> Result<Box<dyn HamiltonianFamily>, CliError> {
        Ok(match self {
            ModelConfig::FourState(p) => Box::new(FourStateFamily::new(*p)?),
            ModelConfig::LandauZener(p) => Box::new(LandauZenerFamily::new(*p)?),
            ModelConfig::TavisCummings(m) => Box::new(TavisCummingsFamily::new(m.params(), m.sector)?),
            ModelConfig::Gaudin(p) => Box::new(GaudinFamily::new(p.clone())?),
        })
    }

    /// Reference point used for default grids and map slices.
    pub fn base_point(&self) -> Vec<f64> {
        match self {
            ModelConfig::FourState(p) => vec![0.0, p.e0],
            ModelConfig::LandauZener(_) => vec![0.0],
            ModelConfig::TavisCummings(m) => std::iter::once(m.omega).chain(m.epsilons.iter().copied()).collect(),
            ModelConfig::Gaudin(p) => std::iter::once(p.b).chain(p.epsilons.iter().copied()).collect(),
        }
    }

    /// Half-widths of the default verification box around [`Self::base_point`],
    /// small enough to stay clear of the `ε_j = ε_k` and `B = 0` poles.
    pub fn default_half_widths(&self) -> Vec<f64> {
        match self {
            ModelConfig::FourState(_) => vec![3.0, 3.0],
            ModelConfig::LandauZener(_) => vec![3.0],
            ModelConfig::TavisCummings(m) => {
                let eps = min_separation(&m.epsilons).map_or(3.0, |s| (0.4 * s).min(3.0));
                std::iter::once(3.0).chain(m.epsilons.iter().map(|_| eps)).collect()
            }
            ModelConfig::Gaudin(p) => {
                let eps = min_separation(&p.epsilons).map_or(3.0, |s| (0.4 * s).min(3.0));
                std::iter::once((0.5 * p.b.abs()).min(3.0)).chain(p.epsilons.iter().map(|_| eps)).collect()
            }
        }
    }

    /// Straight sweep of the driving slot from `−r` to `r`, when the model has one.
    pub fn default_path(&self, r: f64) -> Option<Vec<Vec<f64>>> {
        match self {
            ModelConfig::FourState(p) => Some(vec![vec![-r, -p.v * r + p.e0], vec![r, p.v * r + p.e0]]),
            ModelConfig::LandauZener(_) => Some(vec![vec![-r], vec![r]]),
            ModelConfig::TavisCummings(_) => {
                let mut a = self.base_point();
                let mut b = a.clone();
                a[0] = -r;
                b[0] = r;
                Some(vec![a, b])
            }
            ModelConfig::Gaudin(_) => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelConfig::FourState(_) => "four-state",
            ModelConfig::LandauZener(_) => "landau-zener",
            ModelConfig::TavisCummings(_) => "tavis-cummings",
            ModelConfig::Gaudin(_) => "gaudin",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StepConfig {
    Adaptive {
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default = "default_min_step")]
        min_step: f64,
        #[serde(default = "default_max_step")]
        max_step: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_phase: Option<f64>,
    },
    Fixed {
        step: f64,
    },
}

fn default_tol() -> f64 {
    1e-6
}
fn default_min_step() -> f64 {
    1e-9
}
fn default_max_step() -> f64 {
    1.0
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig::Adaptive { tol: default_tol(), min_step: default_min_step(), max_step: default_max_step(), max_phase: None }
    }
}

impl StepConfig {
    pub fn options(&self) -> Result<PropagationOptions, CliError> {
        let control = match *self {
            StepConfig::Adaptive { tol, min_step, max_step, max_phase } => {
                StepControl::Adaptive { tol, min_step, max_step, max_phase }
            }
            StepConfig::Fixed { step } => StepControl::Fixed { step },
        };
        control.validate()?;
        Ok(PropagationOptions { control, trace: false })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Derivatives {
    /// Analytic partials when the model has them.
    #[default]
    Auto,
    CentralDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<Vec<f64>>,
    /// Points per axis; defaults by slot count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default)]
    pub derivatives: Derivatives,
    #[serde(default = "default_rel_step")]
    pub rel_step: f64,
    /// Worst full curvature norm tolerated in strict mode.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_rel_step() -> f64 {
    mtlz_core::family::DEFAULT_REL_STEP
}
fn default_threshold() -> f64 {
    1e-8
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            lo: None,
            hi: None,
            n: None,
            derivatives: Derivatives::Auto,
            rel_step: default_rel_step(),
            threshold: default_threshold(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    /// 1-based basis state.
    State(usize),
    /// `[re, im]` pairs; must be normalized.
    Vector(Vec<[f64; 2]>),
}

impl Default for InitialState {
    fn default() -> Self {
        InitialState::State(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveConfig {
    /// Vertices; defaults to the model's sweep path at `R`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_evolve_r", rename = "R")]
    pub r: f64,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default)]
    pub step: StepConfig,
    /// Emit populations after every accepted step instead of the final state.
    #[serde(default)]
    pub trace: bool,
}

fn default_evolve_r() -> f64 {
    20.0
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self { path: None, r: default_evolve_r(), initial: InitialState::default(), step: StepConfig::default(), trace: false }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScatterMethod {
    #[default]
    Numeric,
    /// Product of pairwise LZ blocks (4-state model).
    Chain,
    ClosedForm,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PathChoice {
    #[default]
    Straight,
    /// Parameters first, then time (4-state model).
    Rectangular,
    Vertices(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseChoice {
    #[default]
    Keep,
    /// Seeded random phases that respect the plan's symmetry.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScatterConfig {
    #[serde(default)]
    pub method: ScatterMethod,
    #[serde(default = "default_scatter_r", rename = "R")]
    pub r: f64,
    #[serde(default)]
    pub path: PathChoice,
    /// Also run at `2R` and report the largest entry change.
    #[serde(default)]
    pub drift: bool,
    #[serde(default)]
    pub phases: PhaseChoice,
    #[serde(default)]
    pub step: StepConfig,
}

fn default_scatter_r() -> f64 {
    400.0
}

impl Default for ScatterConfig {
    fn default() -> Self {
        Self {
            method: ScatterMethod::Numeric,
            r: default_scatter_r(),
            path: PathChoice::Straight,
            drift: false,
            phases: PhaseChoice::Keep,
            step: StepConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KappaMapConfig {
    /// `[lo, hi, n]` along the first axis.
    #[serde(default = "default_axis")]
    pub x: (f64, f64, usize),
    #[serde(default = "default_axis")]
    pub y: (f64, f64, usize),
    #[serde(default = "default_axes")]
    pub axes: (usize, usize),
    /// Values of the other slots; defaults to the model's base point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<Vec<f64>>,
    /// 1-based diabatic levels.
    #[serde(default = "default_pair")]
    pub pair: (usize, usize),
}

fn default_axis() -> (f64, f64, usize) {
    (-30.0, 30.0, 61)
}
fn default_axes() -> (usize, usize) {
    (0, 1)
}
fn default_pair() -> (usize, usize) {
    (2, 3)
}

impl Default for KappaMapConfig {
    fn default() -> Self {
        Self { x: default_axis(), y: default_axis(), axes: default_axes(), base: None, pair: default_pair() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Dotted path into the config (`scatter.R`, `model.params.epsilons.0`);
    /// bare names refer to model parameters.
    pub parameter: String,
    pub from: f64,
    pub to: f64,
    pub count: usize,
    pub task: TaskName,
}

impl SweepConfig {
    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.from + (self.to - self.from) * i as f64 / (self.count - 1) as f64).collect()
    }

    pub fn pointer(&self) -> Vec<String> {
        let parts: Vec<String> = self.parameter.split('.').map(str::to_string).collect();
        const TOP: [&str; 7] = ["model", "seed", "verify", "evolve", "scatter", "kappa_map", "output"];
        if TOP.contains(&parts[0].as_str()) {
            parts
        } else {
            ["model".to_string(), "params".to_string()].into_iter().chain(parts).collect()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Csv,
    JsonText,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}
