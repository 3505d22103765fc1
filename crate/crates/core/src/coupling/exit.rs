use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::minorization::ball_grid;
use crate::error::{Error, Result};
use crate::model::{BallSet, LimitModel};
use crate::rng::{PathRngs, StreamFactory};
use crate::simulate::{Chain, EventView, Scheme, SimConfig, Simulator, Sink};

/// Flags the first visit outside a ball.
pub struct ExitWatch<'a> {
    pub ball: &'a BallSet,
    pub exited: bool,
}

impl Sink for ExitWatch<'_> {
    fn grid(&mut self, _t: f64, x: &[f64]) {
        self.exited |= !self.ball.contains(x);
    }
    fn event(&mut self, e: &EventView<'_>) {
        self.exited |= !self.ball.contains(e.state);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExitConfig {
    pub dt: f64,
    pub trials: usize,
    /// Grid points per coordinate on `C'` for the start pairs.
    #[serde(default = "three")]
    pub start_points: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub scheme: Scheme,
}

fn three() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitRow {
    pub level: usize,
    pub rate_bound: f64,
    /// Smallest stay probability over the start pairs.
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitReport {
    pub rows: Vec<ExitRow>,
    /// First `(level, Γ_n)` with stay probability at least 1/2.
    pub threshold: Option<(usize, f64)>,
}

/// For pairs started in `C' = B(x0, η/2)`, the probability that two
/// independent small-jump chains both stay in `C` until the first big jump
/// `T_1 ~ Exp(Γ_n)`, for levels `n = 1, 2, 4, ...`.
pub fn exit_time_threshold(model: &LimitModel, small_set: &BallSet, cfg: &ExitConfig) -> Result<ExitReport> {
    if cfg.trials == 0 {
        return Err(Error::InvalidParameter("exit-time check needs trials".into()));
    }
    let inner = small_set.scaled(0.5);
    let starts = ball_grid(&inner, cfg.start_points);
    let mut rows = Vec::new();
    let mut threshold = None;
    let mut level = 1;
    while level <= model.measure.len() {
        let gamma_n = model.measure.rate_bound(level);
        let sim_cfg = SimConfig::new(cfg.dt, f64::MAX, cfg.seed).with_scheme(cfg.scheme);
        let sim = Simulator::small_jump(model, level, &sim_cfg)?;
        let streams = StreamFactory::new(cfg.seed).child(level as u64);
        let mut worst = 1.0f64;
        for (i, x) in starts.iter().enumerate() {
            for (j, y) in starts.iter().enumerate() {
                let pair = (i * starts.len() + j) as u64;
                let stays: usize = (0..cfg.trials as u64)
                    .into_par_iter()
                    .map(|trial| -> Result<usize> {
                        let base = (pair * cfg.trials as u64 + trial) * 5;
                        let t1: f64 = streams.stream(base).sample::<f64, _>(Exp1) / gamma_n;
                        let mut ok = true;
                        for (k, start) in [x, y].into_iter().enumerate() {
                            let rngs = PathRngs {
                                jumps: streams.stream(base + 1 + 2 * k as u64),
                                noise: streams.stream(base + 2 + 2 * k as u64),
                            };
                            let mut chain = Chain::new(start, rngs);
                            let mut watch = ExitWatch {
                                ball: small_set,
                                exited: false,
                            };
                            sim.advance(&mut chain, t1, &mut watch)?;
                            ok &= !watch.exited && small_set.contains(&chain.x);
                        }
                        Ok(ok as usize)
                    })
                    .sum::<Result<usize>>()?;
                worst = worst.min(stays as f64 / cfg.trials as f64);
            }
        }
        rows.push(ExitRow {
            level,
            rate_bound: gamma_n,
            probability: worst,
        });
        if worst >= 0.5 && threshold.is_none() {
            threshold = Some((level, gamma_n));
            break;
        }
        level *= 2;
    }
    Ok(ExitReport { rows, threshold })
}

