use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::df::{df_estimate, df_interval, Pairing};
use super::tv::{split_test, tv_estimate, Binning};
use super::{EmpiricalLaw, GapCurve, LawMeta};
use crate::error::{Error, Result};
use crate::generator::Dictionary;
use crate::model::LimitModel;
use crate::rng::StreamFactory;
use crate::simulate::{NoSink, SimConfig, Simulator};

/// Long-run simulation settings for the stationary reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub x0: Vec<f64>,
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
    /// Time between retained samples of one path.
    #[serde(default = "default_thin")]
    pub thin: f64,
    #[serde(default = "default_per_path")]
    pub per_path: usize,
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    /// Permutations in the stationarity self-test.
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    /// The reference is rejected when the self-test p-value is at or below
    /// this level.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_burn_in() -> f64 {
    50.0
}

fn default_thin() -> f64 {
    1.0
}

fn default_per_path() -> usize {
    10
}

fn default_permutations() -> usize {
    999
}

fn default_alpha() -> f64 {
    1e-3
}

impl ReferenceConfig {
    pub fn new(x0: Vec<f64>, paths: usize, dt: f64, seed: u64) -> Self {
        ReferenceConfig {
            x0,
            burn_in: default_burn_in(),
            thin: default_thin(),
            per_path: default_per_path(),
            paths,
            dt,
            seed,
            permutations: default_permutations(),
            alpha: default_alpha(),
        }
    }
}

/// Simulated stand-in for the invariant law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceLaw {
    pub law: EmpiricalLaw,
    /// Binned TV between the early and late halves of every path.
    pub halves_tv: f64,
    pub p_value: f64,
    pub config: ReferenceConfig,
}

/// Samples `per_path` states per path at `burn_in + j * thin` and checks
/// that the early and late halves agree (binned TV, permutation null).
pub fn build_reference(limit: &LimitModel, cfg: &ReferenceConfig) -> Result<ReferenceLaw> {
    if cfg.per_path < 2 || !(cfg.thin > 0.0) || !(cfg.burn_in >= 0.0) {
        return Err(Error::InvalidParameter(
            "reference needs at least two samples per path, positive thinning and nonnegative burn-in".into(),
        ));
    }
    let times: Vec<f64> = (0..cfg.per_path).map(|j| cfg.burn_in + j as f64 * cfg.thin).collect();
    let sim_cfg = SimConfig::new(cfg.dt, times[times.len() - 1], cfg.seed).with_paths(cfg.paths);
    let sim = Simulator::limit(limit, &sim_cfg)?.with_streams(StreamFactory::new(cfg.seed).child(0x9e7));
    let snaps = sim.snapshots(&cfg.x0, &times)?;
    // Early half first, then late half; within each, time-major.
    let half = cfg.per_path / 2;
    let rows: Vec<Vec<f64>> = snaps[..half]
        .iter()
        .chain(&snaps[cfg.per_path - half..])
        .flatten()
        .cloned()
        .collect();
    let n_first = half * cfg.paths;
    let split_law = EmpiricalLaw::from_rows(&rows, LawMeta::default())?;
    let binning = Binning {
        replicates: cfg.permutations,
        seed: cfg.seed,
        ..Binning::default()
    };
    let (halves_tv, p_value) = split_test(&split_law, n_first, &binning)?;
    if p_value <= cfg.alpha {
        return Err(Error::NonStationaryReference { p_value });
    }
    let all: Vec<Vec<f64>> = snaps.into_iter().flatten().collect();
    let law = EmpiricalLaw::from_rows(
        &all,
        LawMeta {
            model: limit.name.clone(),
            time: f64::INFINITY,
            seed: cfg.seed,
        },
    )?;
    Ok(ReferenceLaw {
        law,
        halves_tv,
        p_value,
        config: cfg.clone(),
    })
}

/// Initial condition of an equilibrium run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartLaw {
    Point(Vec<f64>),
    /// Path `i` starts from row `i mod len`.
    Sample(EmpiricalLaw),
}

impl StartLaw {
    fn start(&self, i: usize) -> &[f64] {
        match self {
            StartLaw::Point(x) => x,
            StartLaw::Sample(law) => law.row(i % law.len()),
        }
    }

    fn dim(&self) -> usize {
        match self {
            StartLaw::Point(x) => x.len(),
            StartLaw::Sample(law) => law.dim,
        }
    }
}

impl From<Vec<f64>> for StartLaw {
    fn from(x: Vec<f64>) -> Self {
        StartLaw::Point(x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumConfig {
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    #[serde(default)]
    pub binning: Binning,
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

impl EquilibriumConfig {
    pub fn new(paths: usize, dt: f64, seed: u64) -> Self {
        EquilibriumConfig {
            paths,
            dt,
            seed,
            binning: Binning::default(),
            dictionary: None,
            dictionary_size: default_size(),
            replicates: default_replicates(),
            level: default_level(),
        }
    }
}

/// Gap curves between `P_t` started from each start law and the reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumGaps {
    /// One curve per start law.
    pub tv: Vec<GapCurve>,
    pub df: Vec<GapCurve>,
    /// Fitted polynomial decay exponents of the TV curves.
    pub tv_exponents: Vec<f64>,
    pub df_exponents: Vec<f64>,
    /// Distances between the laws from the first two starts (same random
    /// streams, so the dictionary statistic is paired).
    pub two_start_tv: Option<GapCurve>,
    pub two_start_df: Option<GapCurve>,
    pub dictionary: Dictionary,
}

/// Dictionary over the central 99.8% of the reference, per coordinate.
fn reference_dictionary(reference: &ReferenceLaw, size: usize, seed: u64) -> Result<Dictionary> {
    let d = reference.law.dim;
    let (mut lo, mut hi) = (Vec::with_capacity(d), Vec::with_capacity(d));
    for k in 0..d {
        let mut c = reference.law.column(k);
        c.sort_by(f64::total_cmp);
        let q = |p: f64| c[((c.len() - 1) as f64 * p).round() as usize];
        let (a, mut b) = (q(0.001), q(0.999));
        if b - a < 1e-9 {
            b = a + 1.0;
        }
        lo.push(a);
        hi.push(b);
    }
    Dictionary::new(&lo, &hi, size, seed)
}

/// Laws of `X_t` for each start and each `t`, indexed `[start][time]`.
fn simulate_starts(limit: &LimitModel, starts: &[StartLaw], t_list: &[f64], cfg: &EquilibriumConfig) -> Result<Vec<Vec<EmpiricalLaw>>> {
    let horizon = t_list[t_list.len() - 1];
    let sim = Simulator::limit(limit, &SimConfig::new(cfg.dt, horizon, cfg.seed).with_paths(cfg.paths))?;
    starts
        .iter()
        .map(|start| {
            if start.dim() != limit.dim_state {
                return Err(Error::Dimension("start law and model differ in dimension".into()));
            }
            let per_path: Vec<Vec<Vec<f64>>> = (0..cfg.paths as u64)
                .into_par_iter()
                .map(|i| {
                    let mut chain = sim.chain(start.start(i as usize), i);
                    t_list
                        .iter()
                        .map(|&t| {
                            sim.advance(&mut chain, t, &mut NoSink)?;
                            Ok(chain.x.clone())
                        })
                        .collect()
                })
                .collect::<Result<_>>()?;
            t_list
                .iter()
                .enumerate()
                .map(|(k, &t)| {
                    let rows: Vec<Vec<f64>> = per_path.iter().map(|p| p[k].clone()).collect();
                    EmpiricalLaw::from_rows(
                        &rows,
                        LawMeta {
                            model: limit.name.clone(),
                            time: t,
                            seed: cfg.seed,
                        },
                    )
                })
                .collect()
        })
        .collect()
}

/// TV and dictionary gaps between `P_t` from each start law and the
/// reference, at each `t` in `t_list`.
pub fn equilibrium_gap(
    limit: &LimitModel,
    starts: &[StartLaw],
    t_list: &[f64],
    reference: &ReferenceLaw,
    cfg: &EquilibriumConfig,
) -> Result<EquilibriumGaps> {
    if starts.is_empty() || t_list.is_empty() || t_list.windows(2).any(|w| w[1] <= w[0]) || t_list[0] < 0.0 {
        return Err(Error::InvalidParameter(
            "need at least one start and a nonnegative increasing time list".into(),
        ));
    }
    let dictionary = match &cfg.dictionary {
        Some(d) => d.clone(),
        None => reference_dictionary(reference, cfg.dictionary_size, cfg.seed)?,
    };
    let laws = simulate_starts(limit, starts, t_list, cfg)?;
    let curve_pair = |a: &[EmpiricalLaw], b: Option<&[EmpiricalLaw]>, pairing: Pairing| -> Result<(GapCurve, GapCurve)> {
        let mut tv = GapCurve::new("tv");
        let mut df = GapCurve::new("dictionary");
        for (k, &t) in t_list.iter().enumerate() {
            let other = b.map_or(&reference.law, |b| &b[k]);
            let e = tv_estimate(&a[k], other, &cfg.binning)?;
            tv.push(t, e.value, (e.ci_lo, e.ci_hi));
            let d = df_estimate(&a[k], other, &dictionary, pairing)?;
            let ci = df_interval(&a[k], other, &dictionary, pairing, cfg.replicates, cfg.seed ^ k as u64, cfg.level)?;
            df.push(t, d.value, ci);
        }
        Ok((tv, df))
    };
    let mut tv = Vec::with_capacity(starts.len());
    let mut df = Vec::with_capacity(starts.len());
    for l in &laws {
        let (a, b) = curve_pair(l, None, Pairing::Independent)?;
        tv.push(a);
        df.push(b);
    }
    let (two_start_tv, two_start_df) = if laws.len() >= 2 {
        let (a, b) = curve_pair(&laws[0], Some(&laws[1]), Pairing::Paired)?;
        (Some(a), Some(b))
    } else {
        (None, None)
    };
    Ok(EquilibriumGaps {
        tv_exponents: tv.iter().map(GapCurve::decay_exponent).collect(),
        df_exponents: df.iter().map(GapCurve::decay_exponent).collect(),
        tv,
        df,
        two_start_tv,
        two_start_df,
        dictionary,
    })
}
