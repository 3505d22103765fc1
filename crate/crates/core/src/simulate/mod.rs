//! Path simulation by thinning: inhomogeneous, limit, truncated and
//! small-jump processes, plus the deterministic control skeletons.

mod engine;
mod skeleton;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::validate::{validate_limit, EvalGrid};
use crate::model::{InhomogeneousModel, LayerRange, LimitModel, PathRecord};
use crate::rng::{PathRngs, SimRng, StreamFactory};

pub use engine::{Chain, Engine, EventView, JumpCounter, NoSink, Process, Scheme, Sink};
pub use skeleton::{skeleton_flow, skeleton_path, Control, ControlSkeletonInput};

pub const DEFAULT_GUARD: f64 = 1e6;

fn default_guard() -> f64 {
    DEFAULT_GUARD
}

fn default_paths() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    /// Truncation level `n`: only layers `G_n` drive jumps. `None` keeps
    /// every declared layer.
    #[serde(default)]
    pub level: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_guard")]
    pub guard: f64,
    #[serde(default)]
    pub scheme: Scheme,
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64, seed: u64) -> Self {
        SimConfig {
            dt,
            horizon,
            level: None,
            seed,
            paths: 1,
            guard: DEFAULT_GUARD,
            scheme: Scheme::Euler,
        }
    }

    pub fn with_paths(mut self, paths: usize) -> Self {
        self.paths = paths;
        self
    }

    pub fn with_level(mut self, level: usize) -> Self {
        self.level = Some(level);
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if !(self.guard > 0.0) {
            return Err(Error::InvalidParameter("guard must be positive".into()));
        }
        if self.level == Some(0) {
            return Err(Error::InvalidParameter("truncation level starts at 1".into()));
        }
        Ok(())
    }
}

/// A configured simulator: one process, one layer selection, one stream
/// family. Path `i` always uses streams `2i` and `2i + 1`.
#[derive(Clone, Copy)]
pub struct Simulator<'m> {
    pub engine: Engine<'m>,
    pub horizon: f64,
    pub paths: usize,
    pub seed: u64,
    pub streams: StreamFactory,
}

fn check_level(len: usize, level: Option<usize>) -> Result<()> {
    match level {
        Some(n) if n > len => Err(Error::InvalidParameter(format!(
            "truncation level {n} exceeds the {len} declared layers"
        ))),
        _ => Ok(()),
    }
}

impl<'m> Simulator<'m> {
    fn build(process: Process<'m>, layers: LayerRange, t_start: f64, cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.scheme == Scheme::Rk4 && process.noise_dim() > 0 {
            return Err(Error::Unsupported("Runge-Kutta needs a model without Brownian noise".into()));
        }
        Ok(Simulator {
            engine: Engine {
                process,
                layers,
                t_start,
                dt: cfg.dt,
                guard: cfg.guard,
                scheme: cfg.scheme,
            },
            horizon: cfg.horizon,
            paths: cfg.paths,
            seed: cfg.seed,
            streams: StreamFactory::new(cfg.seed),
        })
    }

    /// The inhomogeneous process started at absolute time `t_start`.
    pub fn inhomogeneous(model: &'m InhomogeneousModel, t_start: f64, cfg: &SimConfig) -> Result<Self> {
        let layers = cfg.level.map_or(LayerRange::All, LayerRange::Upto);
        if let Some(n) = cfg.level {
            check_level(model.measure.at(t_start).len(), Some(n))?;
        }
        Self::build(Process::Inhomogeneous(model), layers, t_start, cfg)
    }

    /// The limit process; with `cfg.level = Some(n)` this is the truncated
    /// process on `G_n`.
    pub fn limit(model: &'m LimitModel, cfg: &SimConfig) -> Result<Self> {
        check_level(model.measure.len(), cfg.level)?;
        let (layers, tail_drift) = match cfg.level {
            None => (LayerRange::All, true),
            Some(n) => (LayerRange::Upto(n), false),
        };
        Self::build(Process::Limit { model, tail_drift }, layers, 0.0, cfg)
    }

    /// `Z`: drift, diffusion and only the jumps outside `G_n`.
    pub fn small_jump(model: &'m LimitModel, level: usize, cfg: &SimConfig) -> Result<Self> {
        check_level(model.measure.len(), Some(level))?;
        if level == 0 {
            return Err(Error::InvalidParameter("truncation level starts at 1".into()));
        }
        Self::build(
            Process::Limit {
                model,
                tail_drift: true,
            },
            LayerRange::Beyond(level),
            0.0,
            cfg,
        )
    }

    /// `X̄^G`: only marks in `g` drive jumps; nothing outside is kept.
    pub fn truncated(model: &'m LimitModel, g: LayerRange, cfg: &SimConfig) -> Result<Self> {
        Self::build(
            Process::Limit {
                model,
                tail_drift: false,
            },
            g,
            0.0,
            cfg,
        )
    }

    pub fn with_streams(mut self, streams: StreamFactory) -> Self {
        self.streams = streams;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn dim(&self) -> usize {
        self.engine.process.dim()
    }

    pub fn chain(&self, x0: &[f64], path: u64) -> Chain {
        Chain::new(x0, self.streams.path(path))
    }

    pub fn chain_with(&self, x0: &[f64], rngs: PathRngs) -> Chain {
        Chain::new(x0, rngs)
    }

    pub fn advance(&self, chain: &mut Chain, until: f64, sink: &mut dyn Sink) -> Result<()> {
        self.engine.advance(chain, until, sink)
    }

    fn check_start(&self, x0: &[f64]) -> Result<()> {
        if x0.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "start point has {} coordinates, model has {}",
                x0.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Full record of path `path` over `[0, horizon]`.
    pub fn record(&self, x0: &[f64], path: u64) -> Result<PathRecord> {
        self.check_start(x0)?;
        let p = &self.engine.process;
        let mut rec = PathRecord::new(p.dim(), p.mark_dim(), self.seed, path);
        rec.push_state(self.engine.t_start, x0);
        let mut chain = self.chain(x0, path);
        self.advance(&mut chain, self.horizon, &mut rec)?;
        Ok(rec)
    }

    pub fn record_all(&self, x0: &[f64]) -> Result<Vec<PathRecord>> {
        (0..self.paths as u64)
            .into_par_iter()
            .map(|i| self.record(x0, i))
            .collect()
    }

    pub fn terminal(&self, x0: &[f64], path: u64) -> Result<Vec<f64>> {
        self.check_start(x0)?;
        let mut chain = self.chain(x0, path);
        self.advance(&mut chain, self.horizon, &mut NoSink)?;
        Ok(chain.x)
    }

    /// Terminal states of all `paths` paths, in path order.
    pub fn terminals(&self, x0: &[f64]) -> Result<Vec<Vec<f64>>> {
        (0..self.paths as u64)
            .into_par_iter()
            .map(|i| self.terminal(x0, i))
            .collect()
    }

    /// States at each of the increasing elapsed `times`, indexed
    /// `[time][path]`.
    pub fn snapshots(&self, x0: &[f64], times: &[f64]) -> Result<Vec<Vec<Vec<f64>>>> {
        self.check_start(x0)?;
        let per_path: Vec<Vec<Vec<f64>>> = (0..self.paths as u64)
            .into_par_iter()
            .map(|i| {
                let mut chain = self.chain(x0, i);
                let mut out = Vec::with_capacity(times.len());
                for &t in times {
                    self.advance(&mut chain, t, &mut NoSink)?;
                    out.push(chain.x.clone());
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        Ok((0..times.len())
            .map(|k| per_path.iter().map(|p| p[k].clone()).collect())
            .collect())
    }
}

pub fn simulate_inhomogeneous(
    model: &InhomogeneousModel,
    x0: &[f64],
    t_start: f64,
    cfg: &SimConfig,
) -> Result<PathRecord> {
    Simulator::inhomogeneous(model, t_start, cfg)?.record(x0, 0)
}

pub fn simulate_limit(model: &LimitModel, x0: &[f64], cfg: &SimConfig) -> Result<PathRecord> {
    Simulator::limit(model, cfg)?.record(x0, 0)
}

pub fn simulate_small_jump(model: &LimitModel, x0: &[f64], level: usize, cfg: &SimConfig) -> Result<PathRecord> {
    Simulator::small_jump(model, level, cfg)?.record(x0, 0)
}

/// Inputs for the truncation error bound
/// `(T e / ρ) exp(C T [Σ‖∇σ_l‖ + ‖∇g‖ + C_μ]²) α(G^c)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlBoundInput {
    pub grid: EvalGrid,
    pub rho: f64,
    /// The unspecified universal constant `C`.
    #[serde(default = "one")]
    pub constant: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub alpha_tail: f64,
    pub c_mu: f64,
    pub lipschitz_sum: f64,
    pub horizon: f64,
    pub rho: f64,
    /// Upper bound on `P(sup_{t≤T} |X̄^G_t - X̄_t| ≥ ρ)`.
    pub bound: f64,
}

pub fn truncation_bound(model: &LimitModel, g: LayerRange, horizon: f64, input: &ControlBoundInput) -> TruncationReport {
    let report = validate_limit(model, &input.grid, g);
    let lip = report.lipschitz_diffusion + report.lipschitz_drift + report.c_mu;
    let bound = if report.alpha_tail == 0.0 {
        0.0
    } else {
        horizon * std::f64::consts::E / input.rho
            * (input.constant * horizon * lip * lip).exp()
            * report.alpha_tail
    };
    TruncationReport {
        alpha_tail: report.alpha_tail,
        c_mu: report.c_mu,
        lipschitz_sum: lip,
        horizon,
        rho: input.rho,
        bound,
    }
}

/// Path of `X̄^G` together with the bound on its distance to `X̄`.
pub fn simulate_truncated(
    model: &LimitModel,
    x0: &[f64],
    g: LayerRange,
    cfg: &SimConfig,
    input: &ControlBoundInput,
) -> Result<(PathRecord, TruncationReport)> {
    let path = Simulator::truncated(model, g, cfg)?.record(x0, 0)?;
    Ok((path, truncation_bound(model, g, cfg.horizon, input)))
}

/// One draw from `q_G(·, y)`: `None` is the null mark (probability
/// `1 - ∫_G γ(z,y) μ(dz) / (μ(G) Γ)`), otherwise a mark with density
/// proportional to `γ(z, y)` on `G`.
pub fn sample_real_shock(model: &LimitModel, g: LayerRange, y: &[f64], rng: &mut SimRng) -> Result<Option<Vec<f64>>> {
    let measure = &model.measure;
    let mut z = vec![0.0; model.dim_mark];
    if measure.range_mass(g) <= 0.0 {
        return Err(Error::InvalidParameter("real shocks need mu(G) > 0".into()));
    }
    measure.sample(g, rng, &mut z);
    let rate = (model.rate)(&z, y);
    if !(rate <= model.rate_bound * (1.0 + 1e-12)) {
        return Err(Error::RateBoundViolation {
            time: f64::NAN,
            rate,
            bound: model.rate_bound,
        });
    }
    let u = rng.random::<f64>() * model.rate_bound;
    Ok((u < rate).then_some(z))
}
