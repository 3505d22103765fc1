use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::df::{evaluate, max_abs};
use super::{EmpiricalLaw, GapCurve, LawMeta};
use crate::error::{Error, Result};
use crate::generator::Dictionary;
use crate::model::{InhomogeneousModel, LayerRange, LimitModel};
use crate::rng::StreamFactory;
use crate::simulate::{NoSink, SimConfig, Simulator};
use crate::util::stats::{linear_fit, percentile_interval};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PseudoConfig {
    pub x0: Vec<f64>,
    pub dt: f64,
    pub paths: usize,
    pub seed: u64,
    /// Branching times, increasing.
    pub t_list: Vec<f64>,
    /// Window length `T`.
    pub horizon: f64,
    /// Offsets `s ∈ (0, T]`; empty means `T/4, T/2, 3T/4, T`.
    #[serde(default)]
    pub s_grid: Vec<f64>,
    /// Test functions; `None` builds one over the box spanned by the
    /// simulated states.
    #[serde(default)]
    pub dictionary: Option<Dictionary>,
    #[serde(default = "default_size")]
    pub dictionary_size: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_size() -> usize {
    Dictionary::DEFAULT_SIZE
}

fn default_replicates() -> usize {
    200
}

fn default_level() -> f64 {
    0.95
}

impl PseudoConfig {
    pub fn new(x0: Vec<f64>, t_list: Vec<f64>, horizon: f64, paths: usize, dt: f64, seed: u64) -> Self {
        PseudoConfig {
            x0,
            dt,
            paths,
            seed,
            t_list,
            horizon,
            s_grid: Vec::new(),
            dictionary: None,
            dictionary_size: default_size(),
            replicates: default_replicates(),
            level: default_level(),
        }
    }

    fn offsets(&self) -> Vec<f64> {
        if self.s_grid.is_empty() {
            (1..=4).map(|k| self.horizon * k as f64 / 4.0).collect()
        } else {
            self.s_grid.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoGaps {
    /// `max_s d_F(μ_{t+s}, μ_t P_s)` against `t`.
    pub curve: GapCurve,
    /// Dictionary statistic for each `(t, s)`.
    pub per_offset: Vec<Vec<f64>>,
    pub offsets: Vec<f64>,
    /// `-slope` of `log gap` against `t`.
    pub decay_rate: f64,
    pub dictionary: Dictionary,
}

impl PseudoGaps {
    /// Smallest `K` with `gap(t) ≤ K ∫_t^{t+T} e^{-rs} ds` on the curve.
    pub fn envelope_constant(&self, r: f64, horizon: f64) -> f64 {
        self.curve
            .points
            .iter()
            .map(|p| p.gap / ((-r * p.x).exp() - (-r * (p.x + horizon)).exp()) * r)
            .fold(0.0, f64::max)
    }
}

/// Branches every inhomogeneous path at each `t` into a continued copy and
/// a copy driven by the limit dynamics, both consuming the same random
/// streams, and compares the two laws after each offset `s`.
///
/// When the two models coincide the branches are bitwise equal and the gap
/// is exactly zero.
pub fn pseudotrajectory_gap(model: &InhomogeneousModel, limit: &LimitModel, cfg: &PseudoConfig) -> Result<PseudoGaps> {
    let offsets = cfg.offsets();
    if cfg.t_list.is_empty() || cfg.t_list.windows(2).any(|w| w[1] <= w[0]) || cfg.t_list[0] < 0.0 {
        return Err(Error::InvalidParameter("t_list must be nonempty, nonnegative and increasing".into()));
    }
    if offsets.iter().any(|s| !(*s > 0.0 && *s <= cfg.horizon)) {
        return Err(Error::InvalidParameter("offsets must lie in (0, T]".into()));
    }
    if model.dim_state != limit.dim_state {
        return Err(Error::Dimension("model and limit have different state dimensions".into()));
    }
    let sim_cfg = SimConfig::new(cfg.dt, cfg.t_list[cfg.t_list.len() - 1] + cfg.horizon, cfg.seed).with_paths(cfg.paths);
    let inhom = Simulator::inhomogeneous(model, 0.0, &sim_cfg)?;
    let lim = Simulator::limit(limit, &sim_cfg)?;
    let lambda_lim = limit.measure.candidate_rate(LayerRange::All);

    // [path][t][s] -> (continued, switched)
    type Branches = Vec<Vec<(Vec<f64>, Vec<f64>)>>;
    let per_path: Vec<Branches> = (0..cfg.paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut chain = inhom.chain(&cfg.x0, i);
            let mut out = Vec::with_capacity(cfg.t_list.len());
            for &t in &cfg.t_list {
                inhom.advance(&mut chain, t, &mut NoSink)?;
                let same_clock = model.measure.is_static()
                    && model.measure.at(t).candidate_rate(LayerRange::All) == lambda_lim;
                let mut a = chain.clone();
                let mut b = chain.clone();
                if !same_clock {
                    b.reset_clock();
                }
                let mut row = Vec::with_capacity(offsets.len());
                for &s in &offsets {
                    inhom.advance(&mut a, t + s, &mut NoSink)?;
                    lim.advance(&mut b, t + s, &mut NoSink)?;
                    row.push((a.x.clone(), b.x.clone()));
                }
                out.push(row);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let dictionary = match &cfg.dictionary {
        Some(d) => d.clone(),
        None => {
            let d = limit.dim_state;
            let (mut lo, mut hi) = (vec![f64::INFINITY; d], vec![f64::NEG_INFINITY; d]);
            for (a, b) in per_path.iter().flatten().flatten() {
                for k in 0..d {
                    lo[k] = lo[k].min(a[k]).min(b[k]);
                    hi[k] = hi[k].max(a[k]).max(b[k]);
                }
            }
            for k in 0..d {
                if hi[k] - lo[k] < 1e-9 {
                    lo[k] -= 0.5;
                    hi[k] += 0.5;
                }
            }
            Dictionary::new(&lo, &hi, cfg.dictionary_size, cfg.seed)?
        }
    };
    let k = dictionary.len();
    let n = cfg.paths;
    let mut curve = GapCurve::new("dictionary");
    let mut per_offset = Vec::with_capacity(cfg.t_list.len());
    for (ti, &t) in cfg.t_list.iter().enumerate() {
        // Row-wise differences f(a_i) - f(b_i), one matrix per offset.
        let diffs: Vec<Vec<f64>> = (0..offsets.len())
            .map(|si| {
                let meta = |m: &str| LawMeta {
                    model: m.into(),
                    time: t + offsets[si],
                    seed: cfg.seed,
                };
                let rows_a: Vec<Vec<f64>> = per_path.iter().map(|p| p[ti][si].0.clone()).collect();
                let rows_b: Vec<Vec<f64>> = per_path.iter().map(|p| p[ti][si].1.clone()).collect();
                let va = evaluate(&EmpiricalLaw::from_rows(&rows_a, meta(&model.name))?, &dictionary);
                let vb = evaluate(&EmpiricalLaw::from_rows(&rows_b, meta(&limit.name))?, &dictionary);
                Ok(va.iter().zip(&vb).map(|(x, y)| x - y).collect())
            })
            .collect::<Result<_>>()?;
        let stat = |idx: Option<&[usize]>| -> Vec<f64> {
            diffs
                .iter()
                .map(|d| {
                    let mut m = vec![0.0; k];
                    let mut add = |i: usize| {
                        for j in 0..k {
                            m[j] += d[i * k + j];
                        }
                    };
                    let count = match idx {
                        None => {
                            (0..n).for_each(&mut add);
                            n
                        }
                        Some(idx) => {
                            idx.iter().copied().for_each(&mut add);
                            idx.len()
                        }
                    };
                    m.iter_mut().for_each(|v| *v /= count as f64);
                    max_abs(&m).1
                })
                .collect()
        };
        let row = stat(None);
        let gap = row.iter().copied().fold(0.0, f64::max);
        let streams = StreamFactory::new(cfg.seed).child(0x95e0).child(ti as u64);
        let mut reps: Vec<f64> = (0..cfg.replicates as u64)
            .into_par_iter()
            .map(|r| {
                let mut rng = streams.stream(r);
                let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                stat(Some(&idx)).into_iter().fold(0.0, f64::max)
            })
            .collect();
        reps.sort_by(f64::total_cmp);
        let ci = if reps.is_empty() { (gap, gap) } else { percentile_interval(&reps, cfg.level) };
        curve.push(t, gap, ci);
        per_offset.push(row);
    }
    let (ts, ls): (Vec<f64>, Vec<f64>) = curve
        .points
        .iter()
        .filter(|p| p.gap > 0.0)
        .map(|p| (p.x, p.gap.ln()))
        .unzip();
    let decay_rate = if ts.len() >= 2 { -linear_fit(&ts, &ls).slope } else { f64::NAN };
    Ok(PseudoGaps {
        curve,
        per_offset,
        offsets,
        decay_rate,
        dictionary,
    })
}
