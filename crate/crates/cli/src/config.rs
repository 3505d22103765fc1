//! Experiment configuration files (JSON, unknown keys rejected).

use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use regenjump::coupling::{CouplingMode, MinorizationSeeds, MinorizationSettings};
use regenjump::diagnostics::Binning;
use regenjump::generator::{Dictionary, SeminormSettings};
use regenjump::model::{BallSet, EvalGrid, InhomogeneousModel, LimitModel, Quadrature, Region};
use regenjump::models::{
    make_cir_models, make_hawkes_limit, make_hawkes_schedule, make_hawkes_system, CirParams, HawkesParams,
};
use regenjump::simulate::Scheme;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; relative paths are taken under the output root.
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub model: ModelSpec,
    pub experiment: Experiment,
    /// Names of the checks whose failure makes the run exit with code 2.
    #[serde(default)]
    pub checks: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Cir {
        #[serde(default)]
        params: CirParams,
    },
    HawkesSystem {
        #[serde(default)]
        params: HawkesParams,
        /// Growing particle count `N(t) = 1 + e^{rt}` instead of a fixed `N`.
        #[serde(default)]
        schedule: Option<Schedule>,
    },
    HawkesLimit {
        #[serde(default)]
        params: HawkesParams,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub r: f64,
    pub t_max: f64,
}

/// The models a spec gives rise to.
pub struct Models {
    pub inhomogeneous: Option<InhomogeneousModel>,
    pub limit: LimitModel,
}

impl Models {
    pub fn inhomogeneous(&self) -> Result<&InhomogeneousModel> {
        self.inhomogeneous
            .as_ref()
            .context("this experiment needs a time-inhomogeneous model (cir or hawkes_system)")
    }
}

impl ModelSpec {
    pub fn build(&self) -> Result<Models> {
        Ok(match self {
            ModelSpec::Cir { params } => {
                let (m, l) = make_cir_models(params)?;
                Models {
                    inhomogeneous: Some(m),
                    limit: l,
                }
            }
            ModelSpec::HawkesSystem { params, schedule } => {
                let m = match schedule {
                    None => make_hawkes_system(params)?,
                    Some(s) => make_hawkes_schedule(params, s.r, s.t_max)?,
                };
                Models {
                    inhomogeneous: Some(m),
                    limit: make_hawkes_limit(params)?,
                }
            }
            ModelSpec::HawkesLimit { params } => Models {
                inhomogeneous: None,
                limit: make_hawkes_limit(params)?,
            },
        })
    }

    /// Decay rate of the inhomogeneity, when the model has one.
    pub fn decay_rate(&self) -> Option<f64> {
        match self {
            ModelSpec::Cir { params } => Some(params.r),
            ModelSpec::HawkesSystem {
                schedule: Some(s), ..
            } => Some(s.r),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", content = "settings", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    Simulate(SimulateSettings),
    Couple(CoupleSettings),
    Minorize(MinorizeSettings),
    Lyapunov(LyapunovSettings),
    Regimes(RegimeSettings),
    Pseudotrajectory(PseudoSettings),
    Equilibrium(EquilibriumSettings),
    Control(ControlSettings),
    Seminorms(SeminormExperiment),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Simulate(_) => "simulate",
            Experiment::Couple(_) => "couple",
            Experiment::Minorize(_) => "minorize",
            Experiment::Lyapunov(_) => "lyapunov",
            Experiment::Regimes(_) => "regimes",
            Experiment::Pseudotrajectory(_) => "pseudotrajectory",
            Experiment::Equilibrium(_) => "equilibrium",
            Experiment::Control(_) => "control",
            Experiment::Seminorms(_) => "seminorms",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Process {
    /// The limit model (the only choice for `hawkes_limit`).
    #[default]
    Limit,
    Inhomogeneous,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSettings {
    pub x0: Vec<f64>,
    pub dt: f64,
    pub horizon: f64,
    pub paths: usize,
    #[serde(default)]
    pub process: Process,
    #[serde(default)]
    pub t_start: f64,
    /// Truncation level of the limit model.
    #[serde(default)]
    pub level: Option<usize>,
    #[serde(default)]
    pub scheme: Scheme,
    /// Number of full paths written to `paths.csv`; none by default.
    #[serde(default)]
    pub record_paths: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinorizeSettings {
    #[serde(default = "one")]
    pub level: usize,
    pub seeds: MinorizationSeeds,
    #[serde(default)]
    pub settings: MinorizationSettings,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupleSettings {
    #[serde(default = "one")]
    pub level: usize,
    pub seeds: MinorizationSeeds,
    #[serde(default)]
    pub minorization: MinorizationSettings,
    pub starts: [Vec<f64>; 2],
    pub dt: f64,
    pub horizon: f64,
    pub pairs: usize,
    #[serde(default)]
    pub mode: CouplingMode,
    #[serde(default = "moment_orders")]
    pub moments: Vec<f64>,
    #[serde(default = "replicates")]
    pub replicates: usize,
    /// Times at which `P(τ_c > t)` is reported in the summary.
    #[serde(default)]
    pub survival_times: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    #[default]
    Limit,
    Inhomogeneous,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    #[serde(default = "grid_points")]
    pub points: usize,
}

impl GridSpec {
    pub fn points(&self) -> Vec<Vec<f64>> {
        EvalGrid::new(self.lo.clone(), self.hi.clone())
            .with_points(self.points)
            .points()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovSettings {
    #[serde(default)]
    pub target: Target,
    /// Times for the inhomogeneous generator.
    #[serde(default)]
    pub times: Vec<f64>,
    pub grid: GridSpec,
    /// The compact set `K` of `LV ≤ -bV + c 1_K`, with `V = 1 + |x|²`.
    pub compact: Region,
    #[serde(default = "unit")]
    pub b: f64,
    #[serde(default = "unit")]
    pub c: f64,
    #[serde(default)]
    pub quadrature: Quadrature,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeSettings {
    pub times: Vec<f64>,
    pub grid: GridSpec,
    #[serde(default)]
    pub quadrature: Quadrature,
    /// Size of the dictionary for the generator gap; none by default.
    #[serde(default)]
    pub dictionary_size: Option<usize>,
    /// Largest relative deviation of the fitted rate from `r` accepted by
    /// the `epsilon_rate` check.
    #[serde(default = "rate_tolerance")]
    pub rate_tolerance: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PseudoSettings {
    pub x0: Vec<f64>,
    pub dt: f64,
    pub paths: usize,
    pub t_list: Vec<f64>,
    pub horizon: f64,
    #[serde(default)]
    pub s_grid: Vec<f64>,
    #[serde(default = "dictionary_size")]
    pub dictionary_size: usize,
    #[serde(default = "replicates")]
    pub replicates: usize,
    #[serde(default = "level")]
    pub level: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSettings {
    pub x0: Vec<f64>,
    pub paths: usize,
    pub dt: f64,
    #[serde(default = "burn_in")]
    pub burn_in: f64,
    #[serde(default = "unit")]
    pub thin: f64,
    #[serde(default = "per_path")]
    pub per_path: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumSettings {
    pub reference: ReferenceSettings,
    pub starts: Vec<Vec<f64>>,
    pub t_list: Vec<f64>,
    pub paths: usize,
    pub dt: f64,
    #[serde(default)]
    pub binning: Binning,
    #[serde(default = "dictionary_size")]
    pub dictionary_size: usize,
    #[serde(default = "replicates")]
    pub replicates: usize,
    #[serde(default = "level")]
    pub level: f64,
    /// Smallest TV decay exponent accepted by the `decay_exponent` check.
    #[serde(default = "unit")]
    pub min_exponent: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSettings {
    pub grid: GridSpec,
    pub target: BallSet,
    /// Truncation level `n`; all layers when absent.
    #[serde(default)]
    pub level: Option<usize>,
    pub dt: f64,
    pub paths: usize,
    #[serde(default)]
    pub scheme: Scheme,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeminormExperiment {
    pub grid: EvalGrid,
    #[serde(default)]
    pub settings: SeminormSettings,
}

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

fn grid_points() -> usize {
    11
}

fn moment_orders() -> Vec<f64> {
    vec![1.0, 2.0]
}

fn replicates() -> usize {
    200
}

fn level() -> f64 {
    0.95
}

fn dictionary_size() -> usize {
    Dictionary::DEFAULT_SIZE
}

fn burn_in() -> f64 {
    50.0
}

fn per_path() -> usize {
    10
}

fn rate_tolerance() -> f64 {
    0.05
}

fn positive(name: &str, v: f64) -> Result<()> {
    ensure!(v > 0.0 && v.is_finite(), "{name} must be positive, got {v}");
    Ok(())
}

fn count(name: &str, v: usize) -> Result<()> {
    ensure!(v > 0, "{name} must be positive");
    Ok(())
}

fn grid(g: &GridSpec) -> Result<()> {
    ensure!(
        !g.lo.is_empty() && g.lo.len() == g.hi.len() && g.lo.iter().zip(&g.hi).all(|(a, b)| a <= b),
        "grid box is empty or malformed"
    );
    count("grid points", g.points)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).context("invalid experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Numeric settings must be positive; names must be usable as paths.
    pub fn validate(&self) -> Result<()> {
        ensure!(
            !self.name.is_empty() && !self.name.contains(['/', '\\']) && self.name != "." && self.name != "..",
            "experiment name {:?} cannot be used as a directory name",
            self.name
        );
        match &self.experiment {
            Experiment::Simulate(s) => {
                positive("dt", s.dt)?;
                positive("horizon", s.horizon)?;
                count("paths", s.paths)?;
                ensure!(s.record_paths <= s.paths, "record_paths exceeds paths");
            }
            Experiment::Couple(s) => {
                count("level", s.level)?;
                positive("dt", s.dt)?;
                positive("horizon", s.horizon)?;
                count("pairs", s.pairs)?;
                count("replicates", s.replicates)?;
            }
            Experiment::Minorize(s) => count("level", s.level)?,
            Experiment::Lyapunov(s) => {
                grid(&s.grid)?;
                positive("b", s.b)?;
                positive("c", s.c)?;
                if s.target == Target::Inhomogeneous && s.times.is_empty() {
                    bail!("the inhomogeneous target needs times");
                }
            }
            Experiment::Regimes(s) => {
                grid(&s.grid)?;
                ensure!(s.times.len() >= 2, "regimes need at least two times");
                positive("rate_tolerance", s.rate_tolerance)?;
            }
            Experiment::Pseudotrajectory(s) => {
                positive("dt", s.dt)?;
                positive("horizon", s.horizon)?;
                count("paths", s.paths)?;
                count("dictionary_size", s.dictionary_size)?;
                count("replicates", s.replicates)?;
            }
            Experiment::Equilibrium(s) => {
                positive("dt", s.dt)?;
                positive("reference dt", s.reference.dt)?;
                count("paths", s.paths)?;
                count("reference paths", s.reference.paths)?;
                count("dictionary_size", s.dictionary_size)?;
                count("replicates", s.replicates)?;
                ensure!(!s.starts.is_empty(), "equilibrium needs at least one start");
            }
            Experiment::Control(s) => {
                grid(&s.grid)?;
                positive("dt", s.dt)?;
                count("paths", s.paths)?;
            }
            Experiment::Seminorms(s) => {
                count("grid points", s.grid.points)?;
            }
        }
        Ok(())
    }
}
