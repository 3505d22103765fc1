use std::io::Write;

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::sample_jump_kernel;
use super::minorization::MinorizationCertificate;
use super::split::{sample_split_kernel, Branch, SplitRngs};
use crate::error::{Error, Result};
use crate::model::path::JumpEvent;
use crate::model::{LimitModel, PathRecord};
use crate::rng::{PathRngs, StreamFactory};
use crate::simulate::{Chain, NoSink, Scheme, SimConfig, Simulator, Sink, DEFAULT_GUARD};

/// How the two chains share randomness before they meet.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMode {
    /// Independent small-jump noise; residual draws share only their first
    /// proposal.
    #[default]
    Independent,
    /// Both chains read the same streams, so equal starts stay equal.
    Synchronous,
}

fn default_guard() -> f64 {
    DEFAULT_GUARD
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    pub dt: f64,
    pub horizon: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub pairs: usize,
    #[serde(default)]
    pub mode: CouplingMode,
    #[serde(default)]
    pub record_paths: bool,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "default_guard")]
    pub guard: f64,
}

fn one() -> usize {
    1
}

impl CouplingConfig {
    pub fn new(dt: f64, horizon: f64, seed: u64) -> Self {
        CouplingConfig {
            dt,
            horizon,
            seed,
            pairs: 1,
            mode: CouplingMode::Independent,
            record_paths: false,
            scheme: Scheme::Euler,
            guard: DEFAULT_GUARD,
        }
    }

    pub fn with_pairs(mut self, pairs: usize) -> Self {
        self.pairs = pairs;
        self
    }

    pub fn with_mode(mut self, mode: CouplingMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn recording(mut self) -> Self {
        self.record_paths = true;
        self
    }

    fn sim_config(&self) -> SimConfig {
        SimConfig {
            dt: self.dt,
            horizon: self.horizon,
            level: None,
            seed: self.seed,
            paths: 1,
            guard: self.guard,
            scheme: self.scheme,
        }
    }
}

/// One tick `T_k` of the big-jump clock.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BigJump {
    pub k: usize,
    pub time: f64,
    /// `U_k`; `U_0 = 1`.
    pub color: f64,
    /// Both pre-jump states in `C`.
    pub in_c_both: bool,
    pub regenerated: bool,
    pub branch: Option<Branch>,
    /// Post-jump states, kept for regenerations.
    pub post: Option<[Vec<f64>; 2]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingResult {
    pub pair: u64,
    /// `None` when the chains had not met by the horizon.
    pub tau_c: Option<f64>,
    /// Clock ticks up to `τ_c` (or the horizon), starting with `k = 0`.
    pub big_jumps: Vec<BigJump>,
    pub terminal: [Vec<f64>; 2],
    pub paths: Option<[PathRecord; 2]>,
}

impl CouplingResult {
    /// CSV with columns `k,T_k,U_k,in_C_both,regenerated,tau_c`; `tau_c`
    /// is `inf` when censored.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::InvalidParameter(format!("csv: {e}"));
        out.write_record(["k", "T_k", "U_k", "in_C_both", "regenerated", "tau_c"])
            .map_err(io)?;
        let tau = self.tau_c.map_or("inf".to_string(), |t| t.to_string());
        for b in &self.big_jumps {
            out.write_record([
                b.k.to_string(),
                b.time.to_string(),
                b.color.to_string(),
                (b.in_c_both as u8).to_string(),
                (b.regenerated as u8).to_string(),
                tau.clone(),
            ])
            .map_err(io)?;
        }
        out.flush().map_err(|e| Error::InvalidParameter(format!("csv: {e}")))?;
        Ok(())
    }
}

/// Records the same events into both paths once the chains have merged.
struct Tee<'a>(&'a mut PathRecord, &'a mut PathRecord);

impl Sink for Tee<'_> {
    fn grid(&mut self, t: f64, x: &[f64]) {
        self.0.grid(t, x);
        self.1.grid(t, x);
    }
    fn event(&mut self, e: &crate::simulate::EventView<'_>) {
        self.0.event(e);
        self.1.event(e);
    }
}

fn big_jump_event(time: f64, color: f64, mark: Option<&[f64]>, mark_dim: usize, jumped: bool, state: &[f64]) -> JumpEvent {
    JumpEvent {
        time,
        layer: 0,
        mark: mark.map_or(vec![f64::NAN; mark_dim], |m| m.to_vec()),
        u: color,
        accepted: jumped,
        state: state.to_vec(),
    }
}

/// Streams of pair `i`: 0 clock and shared kernel noise, 1–2 first chain,
/// 3–4 second chain, 5–6 residual continuations.
const STREAMS_PER_PAIR: u64 = 8;
const COUPLING_TAG: u64 = 0xC0_0B1E;

/// Simulate one coupled pair: a shared big-jump clock of rate `Γ_n`,
/// small-jump dynamics between ticks, the split kernel at each tick, and a
/// single merged chain after the first regeneration.
pub fn coupled_simulate(
    model: &LimitModel,
    cert: &MinorizationCertificate,
    starts: [&[f64]; 2],
    cfg: &CouplingConfig,
    pair: u64,
) -> Result<CouplingResult> {
    let d = model.dim_state;
    if starts.iter().any(|s| s.len() != d) {
        return Err(Error::Dimension("start points must match the state dimension".into()));
    }
    let sim = Simulator::small_jump(model, cert.level, &cfg.sim_config())?;
    let streams = StreamFactory::new(cfg.seed).child(COUPLING_TAG);
    let base = pair * STREAMS_PER_PAIR;
    let sync = cfg.mode == CouplingMode::Synchronous;
    let second = if sync { base + 1 } else { base + 3 };
    let mut shared = streams.stream(base);
    let mut chains = [
        Chain::new(
            starts[0],
            PathRngs {
                jumps: streams.stream(base + 1),
                noise: streams.stream(base + 2),
            },
        ),
        Chain::new(
            starts[1],
            PathRngs {
                jumps: streams.stream(second),
                noise: streams.stream(second + 1),
            },
        ),
    ];
    let mut own = [streams.stream(base + 5), streams.stream(if sync { base + 5 } else { base + 6 })];
    let mut paths = cfg.record_paths.then(|| {
        [0, 1].map(|k| {
            let mut p = PathRecord::new(d, model.dim_mark, cfg.seed, pair);
            p.push_state(0.0, starts[k]);
            p
        })
    });

    let gamma_n = cert.rate_bound;
    let mut rows = vec![BigJump {
        k: 0,
        time: 0.0,
        color: 1.0,
        in_c_both: cert.in_small_set(starts[0]) && cert.in_small_set(starts[1]),
        regenerated: false,
        branch: None,
        post: None,
    }];
    let mut t = 0.0;
    let mut tau = None;
    let advance_pair = |chains: &mut [Chain; 2], paths: &mut Option<[PathRecord; 2]>, until: f64| -> Result<()> {
        for (k, chain) in chains.iter_mut().enumerate() {
            match paths {
                Some(p) => sim.advance(chain, until, &mut p[k])?,
                None => sim.advance(chain, until, &mut NoSink)?,
            }
        }
        Ok(())
    };
    loop {
        let e: f64 = shared.sample(Exp1);
        let next = t + e / gamma_n;
        if next > cfg.horizon {
            advance_pair(&mut chains, &mut paths, cfg.horizon)?;
            break;
        }
        advance_pair(&mut chains, &mut paths, next)?;
        t = next;
        let color: f64 = shared.random();
        let [c0, c1] = &mut chains;
        let pre = [c0.x.clone(), c1.x.clone()];
        let [o0, o1] = &mut own;
        let draw = sample_split_kernel(
            cert,
            model,
            [&pre[0], &pre[1]],
            color,
            SplitRngs {
                shared: &mut shared,
                own: [o0, o1],
            },
        )?;
        if let Some(p) = &mut paths {
            for k in 0..2 {
                p[k].events.push(big_jump_event(t, color, None, model.dim_mark, draw.jumped[k], &pre[k]));
            }
        }
        c0.x.clone_from(&draw.y[0]);
        c1.x.clone_from(&draw.y[1]);
        let regenerated = draw.branch == Branch::Regenerate;
        rows.push(BigJump {
            k: rows.len(),
            time: t,
            color,
            in_c_both: draw.branch != Branch::Synchronous,
            regenerated,
            branch: Some(draw.branch),
            post: regenerated.then(|| draw.y.clone()),
        });
        if regenerated {
            tau = Some(t);
            break;
        }
    }

    if tau.is_some() {
        // merged: one chain, big jumps from Π
        let [c0, _] = &mut chains;
        loop {
            let e: f64 = shared.sample(Exp1);
            let next = t + e / gamma_n;
            let until = next.min(cfg.horizon);
            match &mut paths {
                Some([a, b]) => sim.advance(c0, until, &mut Tee(a, b))?,
                None => sim.advance(c0, until, &mut NoSink)?,
            }
            if next > cfg.horizon {
                break;
            }
            t = next;
            let pre = c0.x.clone();
            let draw = sample_jump_kernel(model, cert.level, &pre, &mut shared)?;
            if let Some(p) = &mut paths {
                let ev = big_jump_event(t, f64::NAN, draw.mark.as_deref(), model.dim_mark, draw.mark.is_some(), &pre);
                p[0].events.push(ev.clone());
                p[1].events.push(ev);
            }
            c0.x = draw.y;
        }
        chains[1].x = chains[0].x.clone();
    }

    let [c0, c1] = chains;
    Ok(CouplingResult {
        pair,
        tau_c: tau,
        big_jumps: rows,
        terminal: [c0.x, c1.x],
        paths,
    })
}

/// `cfg.pairs` independent coupled pairs, in pair order.
pub fn coupled_batch(
    model: &LimitModel,
    cert: &MinorizationCertificate,
    starts: [&[f64]; 2],
    cfg: &CouplingConfig,
) -> Result<Vec<CouplingResult>> {
    (0..cfg.pairs as u64)
        .into_par_iter()
        .map(|i| coupled_simulate(model, cert, starts, cfg, i))
        .collect()
}
