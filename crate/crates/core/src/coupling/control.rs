use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{BallSet, LayerRange, LimitModel};
use crate::simulate::{Scheme, SimConfig, Simulator};
use crate::util::stats::wilson;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub dt: f64,
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub scheme: Scheme,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlPoint {
    pub x: Vec<f64>,
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlEstimate {
    pub points: Vec<ControlPoint>,
    /// The grid point with the smallest estimate.
    pub min: ControlPoint,
}

/// Monte Carlo estimate of `P_x(|X̄^G_1 - x0| <= radius)` for every `x`
/// of the grid `k`, where `target` is the ball `B(x0, radius)`.
pub fn control_probability(
    model: &LimitModel,
    g: LayerRange,
    k: &[Vec<f64>],
    target: &BallSet,
    cfg: &ControlConfig,
) -> Result<ControlEstimate> {
    let sim_cfg = SimConfig::new(cfg.dt, 1.0, cfg.seed)
        .with_paths(cfg.paths)
        .with_scheme(cfg.scheme);
    let points = k
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let sim = Simulator::truncated(model, g, &sim_cfg)?
                .with_streams(crate::rng::StreamFactory::new(cfg.seed).child(i as u64));
            let hits: usize = (0..cfg.paths as u64)
                .into_par_iter()
                .map(|p| sim.terminal(x, p).map(|y| target.contains_closed(&y) as usize))
                .sum::<Result<usize>>()?;
            let (ci_lo, ci_hi) = wilson(hits, cfg.paths, 0.95);
            Ok(ControlPoint {
                x: x.clone(),
                estimate: hits as f64 / cfg.paths as f64,
                ci_lo,
                ci_hi,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let min = points
        .iter()
        .min_by(|a, b| a.estimate.total_cmp(&b.estimate))
        .cloned()
        .unwrap_or(ControlPoint {
            x: Vec::new(),
            estimate: f64::NAN,
            ci_lo: f64::NAN,
            ci_hi: f64::NAN,
        });
    Ok(ControlEstimate { points, min })
}
