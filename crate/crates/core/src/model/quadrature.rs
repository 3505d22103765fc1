//! Mark-space integration over layers of a [`LayeredMeasure`].

use serde::{Deserialize, Serialize};

use crate::model::measure::{LayerRange, LayeredMeasure};
use crate::model::sets::MarkSet;
use crate::rng::StreamFactory;

/// Point estimate with its Monte Carlo standard error (0 for deterministic
/// rules).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Quadrature {
    /// Composite Gauss–Legendre on box layers (tensor product for m > 1),
    /// log-graded panels on intervals spanning several orders of magnitude.
    GaussLegendre { points: usize, panels: usize },
    /// Per-layer Monte Carlo using the layer samplers.
    MonteCarlo { samples: usize, seed: u64 },
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature::GaussLegendre {
            points: 16,
            panels: 8,
        }
    }
}

/// Nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { z } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * p - pm1) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn panel_breaks(lo: f64, hi: f64, panels: usize) -> Vec<f64> {
    let span = (1.0 + lo.abs().max(hi.abs())) / (1.0 + lo.abs().min(hi.abs()));
    if lo < 0.0 && hi > 0.0 {
        let mut left = panel_breaks(lo, 0.0, panels.div_ceil(2));
        let right = panel_breaks(0.0, hi, panels.div_ceil(2));
        left.pop();
        left.extend(right);
        return left;
    }
    if span > 100.0 {
        // uniform in log(1 + |z|)
        let sign = if hi <= 0.0 { -1.0 } else { 1.0 };
        let (a, b) = ((1.0 + lo.abs()).ln(), (1.0 + hi.abs()).ln());
        let n = panels.max((b - a).abs().ceil() as usize * 2);
        (0..=n)
            .map(|k| {
                if k == 0 {
                    lo
                } else if k == n {
                    hi
                } else {
                    sign * ((a + (b - a) * k as f64 / n as f64).exp() - 1.0)
                }
            })
            .collect()
    } else {
        (0..=panels)
            .map(|k| lo + (hi - lo) * k as f64 / panels as f64)
            .collect()
    }
}

fn interval_nodes(lo: f64, hi: f64, points: usize, panels: usize) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = gauss_legendre(points);
    let breaks = panel_breaks(lo, hi, panels);
    let mut x = Vec::with_capacity(points * breaks.len());
    let mut w = Vec::with_capacity(points * breaks.len());
    for p in breaks.windows(2) {
        let (mid, half) = (0.5 * (p[0] + p[1]), 0.5 * (p[1] - p[0]));
        for (xi, wi) in gx.iter().zip(&gw) {
            x.push(mid + half * xi);
            w.push(half * wi);
        }
    }
    (x, w)
}

/// Integration nodes `z_k` with weights `w_k ≈ μ(dz)` over a layer range.
#[derive(Clone, Debug)]
pub struct QuadNodes {
    pub mark_dim: usize,
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    pub layer: Vec<usize>,
    /// Monte Carlo nodes: per-layer counts for standard errors.
    mc_layers: Option<Vec<(usize, usize, f64)>>,
}

impl QuadNodes {
    pub fn build(measure: &LayeredMeasure, range: LayerRange, rule: &Quadrature) -> QuadNodes {
        let m = measure.mark_dim();
        let (lo, hi) = range.bounds(measure.len());
        let mut nodes = QuadNodes {
            mark_dim: m,
            z: Vec::new(),
            w: Vec::new(),
            layer: Vec::new(),
            mc_layers: None,
        };
        let mut mc = Vec::new();
        for i in lo..hi {
            let layer = measure.layer(i);
            let gl = match (rule, &layer.set, &layer.density) {
                (Quadrature::GaussLegendre { points, panels }, MarkSet::Box { lo, hi }, Some(h))
                    if m <= 3 =>
                {
                    Some((*points, *panels, lo.clone(), hi.clone(), h.clone()))
                }
                _ => None,
            };
            if let Some((points, panels, blo, bhi, h)) = gl {
                let axes: Vec<_> = (0..m)
                    .map(|k| interval_nodes(blo[k], bhi[k], points, panels))
                    .collect();
                let total: usize = axes.iter().map(|a| a.0.len()).product();
                let mut z = vec![0.0; m];
                for mut idx in 0..total {
                    let mut w = 1.0;
                    for (k, (ax, aw)) in axes.iter().enumerate() {
                        let j = idx % ax.len();
                        idx /= ax.len();
                        z[k] = ax[j];
                        w *= aw[j];
                    }
                    nodes.z.extend_from_slice(&z);
                    nodes.w.push(w * h(&z));
                    nodes.layer.push(i);
                }
            } else {
                let (samples, seed) = match rule {
                    Quadrature::MonteCarlo { samples, seed } => (*samples, *seed),
                    Quadrature::GaussLegendre { points, panels } => {
                        (points * panels * 64, 0x9a55)
                    }
                };
                let mut rng = StreamFactory::new(seed).stream(i as u64);
                let start = nodes.w.len();
                let mut z = vec![0.0; m];
                for _ in 0..samples {
                    layer.sample(&mut rng, &mut z);
                    nodes.z.extend_from_slice(&z);
                    nodes.w.push(layer.mass / samples as f64);
                    nodes.layer.push(i);
                }
                mc.push((start, samples, layer.mass));
            }
        }
        if !mc.is_empty() {
            nodes.mc_layers = Some(mc);
        }
        nodes
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn mark(&self, k: usize) -> &[f64] {
        &self.z[k * self.mark_dim..(k + 1) * self.mark_dim]
    }

    /// `∫ f dμ` with compensated summation.
    pub fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> Estimate {
        let mut values = Vec::with_capacity(self.len());
        for k in 0..self.len() {
            values.push(f(self.mark(k)));
        }
        self.integrate_values(&values)
    }

    /// Same as [`integrate`](Self::integrate) for precomputed `f(z_k)`.
    pub fn integrate_values(&self, values: &[f64]) -> Estimate {
        let mut sum = Neumaier::default();
        for (v, w) in values.iter().zip(&self.w) {
            sum.add(v * w);
        }
        let mut var = 0.0;
        if let Some(mc) = &self.mc_layers {
            for &(start, n, mass) in mc {
                let vals = &values[start..start + n];
                let mean = vals.iter().sum::<f64>() / n as f64;
                let v = vals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
                    / (n.max(2) - 1) as f64;
                var += mass * mass * v / n as f64;
            }
        }
        Estimate {
            value: sum.total(),
            se: var.sqrt(),
        }
    }
}

/// Neumaier compensated summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}
