//! Thinning engine shared by every simulator.
//!
//! Jumps are proposed by a dominating Poisson clock and thinned; drift and
//! diffusion are integrated on a fixed grid anchored at elapsed time 0, with
//! steps split at candidate times.

use std::borrow::Cow;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{InhomogeneousModel, LayerRange, LayeredMeasure, LimitModel, PathRecord};
use crate::model::path::JumpEvent;
use crate::rng::PathRngs;

/// Integration rule for the continuous part.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Euler,
    /// Classical Runge–Kutta; only for models without Brownian noise.
    Rk4,
}

/// Which coefficients drive the engine.
#[derive(Clone, Copy)]
pub enum Process<'m> {
    Inhomogeneous(&'m InhomogeneousModel),
    Limit {
        model: &'m LimitModel,
        /// Add the mean drift of the undeclared small-jump tail.
        tail_drift: bool,
    },
}

impl Process<'_> {
    pub fn dim(&self) -> usize {
        match self {
            Process::Inhomogeneous(m) => m.dim_state,
            Process::Limit { model, .. } => model.dim_state,
        }
    }

    pub fn mark_dim(&self) -> usize {
        match self {
            Process::Inhomogeneous(m) => m.dim_mark,
            Process::Limit { model, .. } => model.dim_mark,
        }
    }

    pub fn noise_dim(&self) -> usize {
        match self {
            Process::Inhomogeneous(_) => 0,
            Process::Limit { model, .. } => model.noise_dim,
        }
    }

    pub fn static_measure(&self) -> bool {
        match self {
            Process::Inhomogeneous(m) => m.measure.is_static(),
            Process::Limit { .. } => true,
        }
    }

    pub fn measure_at(&self, t: f64) -> Cow<'_, LayeredMeasure> {
        match self {
            Process::Inhomogeneous(m) => m.measure.at(t),
            Process::Limit { model, .. } => Cow::Borrowed(model.measure.as_ref()),
        }
    }

    pub fn drift(&self, t: f64, x: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        match self {
            Process::Inhomogeneous(m) => (m.drift)(t, x, out),
            Process::Limit { model, tail_drift } => {
                (model.drift)(x, out);
                if *tail_drift {
                    if let Some(tail) = &model.tail {
                        (tail.drift)(x, scratch);
                        for (o, s) in out.iter_mut().zip(scratch.iter()) {
                            *o += s;
                        }
                    }
                }
            }
        }
    }

    pub fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        if let Process::Limit { model, .. } = self {
            if let Some(s) = &model.diffusion {
                s(x, out);
            }
        }
    }

    pub fn rate(&self, t: f64, z: &[f64], x: &[f64]) -> f64 {
        match self {
            Process::Inhomogeneous(m) => (m.rate)(t, z, x),
            Process::Limit { model, .. } => (model.rate)(z, x),
        }
    }

    pub fn amplitude(&self, t: f64, z: &[f64], x: &[f64], out: &mut [f64]) {
        match self {
            Process::Inhomogeneous(m) => (m.amplitude)(t, z, x, out),
            Process::Limit { model, .. } => (model.amplitude)(z, x, out),
        }
    }
}

/// Observer of a path under construction.
pub trait Sink {
    fn grid(&mut self, _t: f64, _x: &[f64]) {}
    fn event(&mut self, _e: &EventView<'_>) {}
}

pub struct EventView<'a> {
    pub time: f64,
    /// 0-based layer index.
    pub layer: usize,
    pub mark: &'a [f64],
    pub u: f64,
    pub accepted: bool,
    pub state: &'a [f64],
}

/// Discards everything.
pub struct NoSink;

impl Sink for NoSink {}

impl Sink for PathRecord {
    fn grid(&mut self, t: f64, x: &[f64]) {
        self.push_state(t, x);
    }

    fn event(&mut self, e: &EventView<'_>) {
        self.events.push(JumpEvent {
            time: e.time,
            layer: e.layer + 1,
            mark: e.mark.to_vec(),
            u: e.u,
            accepted: e.accepted,
            state: e.state.to_vec(),
        });
    }
}

/// Counts accepted jumps.
#[derive(Default)]
pub struct JumpCounter {
    pub accepted: usize,
    pub candidates: usize,
}

impl Sink for JumpCounter {
    fn event(&mut self, e: &EventView<'_>) {
        self.candidates += 1;
        self.accepted += e.accepted as usize;
    }
}

/// One path in progress: state, elapsed time, pending candidate, streams.
#[derive(Clone, Debug)]
pub struct Chain {
    pub x: Vec<f64>,
    pub elapsed: f64,
    pending: Option<f64>,
    pub rngs: PathRngs,
}

impl Chain {
    pub fn new(x0: &[f64], rngs: PathRngs) -> Self {
        Chain {
            x: x0.to_vec(),
            elapsed: 0.0,
            pending: None,
            rngs,
        }
    }

    /// Restart the clock at a new elapsed time (used when the caller moves
    /// the state by hand, e.g. after a big jump).
    pub fn reset_clock(&mut self) {
        self.pending = None;
    }
}

/// Fixed integration settings.
#[derive(Clone, Copy)]
pub struct Engine<'m> {
    pub process: Process<'m>,
    pub layers: LayerRange,
    /// Absolute time at elapsed 0.
    pub t_start: f64,
    pub dt: f64,
    pub guard: f64,
    pub scheme: Scheme,
}

struct Scratch {
    b: Vec<f64>,
    tail: Vec<f64>,
    sigma: Vec<f64>,
    xi: Vec<f64>,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
    z: Vec<f64>,
    c: Vec<f64>,
}

impl Engine<'_> {
    fn scratch(&self) -> Scratch {
        let d = self.process.dim();
        let k = self.process.noise_dim();
        Scratch {
            b: vec![0.0; d],
            tail: vec![0.0; d],
            sigma: vec![0.0; d * k],
            xi: vec![0.0; k],
            k: [vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]],
            tmp: vec![0.0; d],
            z: vec![0.0; self.process.mark_dim()],
            c: vec![0.0; d],
        }
    }

    fn check_guard(&self, x: &[f64], s: f64) -> Result<()> {
        if x.iter().all(|v| v.abs() <= self.guard) {
            Ok(())
        } else {
            Err(Error::Explosion {
                time: self.t_start + s,
            })
        }
    }

    fn continuous_step(&self, x: &mut [f64], s: f64, h: f64, chain_noise: &mut crate::rng::SimRng, sc: &mut Scratch) {
        if h <= 0.0 {
            return;
        }
        let t = self.t_start + s;
        let p = &self.process;
        let k = p.noise_dim();
        match self.scheme {
            Scheme::Rk4 if k == 0 => {
                let d = x.len();
                p.drift(t, x, &mut sc.k[0], &mut sc.tail);
                for i in 0..d {
                    sc.tmp[i] = x[i] + 0.5 * h * sc.k[0][i];
                }
                p.drift(t + 0.5 * h, &sc.tmp, &mut sc.k[1], &mut sc.tail);
                for i in 0..d {
                    sc.tmp[i] = x[i] + 0.5 * h * sc.k[1][i];
                }
                p.drift(t + 0.5 * h, &sc.tmp, &mut sc.k[2], &mut sc.tail);
                for i in 0..d {
                    sc.tmp[i] = x[i] + h * sc.k[2][i];
                }
                p.drift(t + h, &sc.tmp, &mut sc.k[3], &mut sc.tail);
                for i in 0..d {
                    x[i] += h / 6.0 * (sc.k[0][i] + 2.0 * sc.k[1][i] + 2.0 * sc.k[2][i] + sc.k[3][i]);
                }
            }
            _ => {
                p.drift(t, x, &mut sc.b, &mut sc.tail);
                if k > 0 {
                    p.diffusion(x, &mut sc.sigma);
                    let sq = h.sqrt();
                    for l in 0..k {
                        sc.xi[l] = chain_noise.sample::<f64, _>(StandardNormal) * sq;
                    }
                    for i in 0..x.len() {
                        let mut v = sc.b[i] * h;
                        for l in 0..k {
                            v += sc.sigma[i * k + l] * sc.xi[l];
                        }
                        x[i] += v;
                    }
                } else {
                    for i in 0..x.len() {
                        x[i] += sc.b[i] * h;
                    }
                }
            }
        }
    }

    /// Evolve `chain` until elapsed time `until`, reporting grid points
    /// (including `until`) and every thinning candidate to `sink`.
    pub fn advance(&self, chain: &mut Chain, until: f64, sink: &mut dyn Sink) -> Result<()> {
        let mut sc = self.scratch();
        let static_measure = self.process.static_measure();
        let Chain {
            x,
            elapsed,
            pending,
            rngs,
        } = chain;
        let mut s = *elapsed;
        while s < until {
            let k = (s / self.dt + 1e-9).floor() + 1.0;
            let grid_point = k * self.dt;
            let step_end = grid_point.min(until);
            let measure = self.process.measure_at(self.t_start + step_end);
            let lambda = measure.candidate_rate(self.layers);
            if !static_measure {
                *pending = None;
            }
            loop {
                let cand = match *pending {
                    Some(c) => c,
                    None => {
                        let e: f64 = rngs.jumps.sample(Exp1);
                        let c = if lambda > 0.0 { s + e / lambda } else { f64::INFINITY };
                        *pending = Some(c);
                        c
                    }
                };
                if cand >= step_end {
                    break;
                }
                *pending = None;
                self.continuous_step(x, s, cand - s, &mut rngs.noise, &mut sc);
                s = cand;
                self.check_guard(x, s)?;
                let t = self.t_start + s;
                let layer = measure.sample_candidate(self.layers, &mut rngs.jumps, &mut sc.z);
                let cap = measure.layer_cap(layer);
                let u = rngs.jumps.random::<f64>() * cap;
                let g = self.process.rate(t, &sc.z, x);
                if !(g <= cap * (1.0 + 1e-12)) {
                    return Err(Error::RateBoundViolation {
                        time: t,
                        rate: g,
                        bound: cap,
                    });
                }
                let accepted = u < g;
                sink.event(&EventView {
                    time: t,
                    layer,
                    mark: &sc.z,
                    u,
                    accepted,
                    state: x,
                });
                if accepted {
                    self.process.amplitude(t, &sc.z, x, &mut sc.c);
                    for (xi, ci) in x.iter_mut().zip(&sc.c) {
                        *xi += ci;
                    }
                    self.check_guard(x, s)?;
                }
            }
            self.continuous_step(x, s, step_end - s, &mut rngs.noise, &mut sc);
            s = step_end;
            self.check_guard(x, s)?;
            if step_end == grid_point || step_end == until {
                sink.grid(self.t_start + s, x);
            }
        }
        *elapsed = s;
        Ok(())
    }
}
