use std::borrow::Cow;
use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::sets::MarkSet;
use crate::rng::{SimRng, StreamFactory};

pub type DensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type SamplerFn = Arc<dyn Fn(&mut SimRng, &mut [f64]) + Send + Sync>;

#[derive(Clone)]
pub enum MarkSampler {
    /// Uniform on the layer's set (valid when the density is constant there).
    Uniform,
    Custom(SamplerFn),
}

/// One shell `G_n \ G_{n-1}` of the layered noise measure.
#[derive(Clone)]
pub struct Layer {
    pub set: MarkSet,
    pub mass: f64,
    pub sampler: MarkSampler,
    /// Density of the absolutely continuous part with respect to Lebesgue.
    pub density: Option<DensityFn>,
    /// Tighter bound on the jump rate over this layer (defaults to the
    /// global bound). Lets thinning propose rare marks less often.
    pub rate_cap: Option<f64>,
}

impl fmt::Debug for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Layer")
            .field("set", &self.set)
            .field("mass", &self.mass)
            .field("has_density", &self.density.is_some())
            .finish()
    }
}

impl Layer {
    /// Lebesgue measure restricted to `set` (density 1).
    pub fn lebesgue(set: MarkSet) -> Self {
        Self::uniform(set, 1.0)
    }

    /// Constant density `h` on `set`.
    pub fn uniform(set: MarkSet, h: f64) -> Self {
        let vol = set.volume().expect("uniform layer needs a set with known volume");
        Layer {
            set,
            mass: vol * h,
            sampler: MarkSampler::Uniform,
            density: Some(Arc::new(move |_| h)),
            rate_cap: None,
        }
    }

    pub fn with_rate_cap(mut self, cap: f64) -> Self {
        self.rate_cap = Some(cap);
        self
    }

    pub fn sample(&self, rng: &mut SimRng, out: &mut [f64]) {
        match &self.sampler {
            MarkSampler::Uniform => self.set.sample_uniform(rng, out),
            MarkSampler::Custom(f) => f(rng, out),
        }
    }

    pub fn density_at(&self, z: &[f64]) -> Option<f64> {
        self.density.as_ref().map(|h| h(z))
    }
}

/// Which layers drive jumps: `Upto(n)` is `G_n` (layers `0..n`), `Beyond(n)`
/// its complement among declared layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum LayerRange {
    All,
    Upto(usize),
    Beyond(usize),
    Between(usize, usize),
}

impl LayerRange {
    pub fn bounds(&self, len: usize) -> (usize, usize) {
        match *self {
            LayerRange::All => (0, len),
            LayerRange::Upto(n) => (0, n.min(len)),
            LayerRange::Beyond(n) => (n.min(len), len),
            LayerRange::Between(a, b) => (a.min(len), b.min(len).max(a.min(len))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LayeredMeasure {
    layers: Vec<Layer>,
    cumulative: Vec<f64>,
    /// Prefix sums of `mass * cap`, the thinning proposal intensity.
    cumulative_rate: Vec<f64>,
    rate_bounds: Vec<f64>,
    global_rate: f64,
}

/// Settings for the Monte Carlo spot checks run at construction.
#[derive(Clone, Copy, Debug)]
pub struct MeasureCheck {
    pub samples: usize,
    pub sigmas: f64,
    pub seed: u64,
}

impl Default for MeasureCheck {
    fn default() -> Self {
        MeasureCheck {
            samples: 100_000,
            sigmas: 3.0,
            seed: 0x5eed,
        }
    }
}

/// Validated construction. `rate_bounds` may be given explicitly (`Γ_n`,
/// one per layer) or derived as `μ(G_n)·Γ`.
pub fn build_layered_measure(
    layers: Vec<Layer>,
    global_rate: f64,
    rate_bounds: Option<Vec<f64>>,
    check: Option<MeasureCheck>,
) -> Result<LayeredMeasure> {
    let measure = LayeredMeasure::new(layers, global_rate)?;
    let measure = match rate_bounds {
        Some(bounds) => measure.with_rate_bounds(bounds)?,
        None => measure,
    };
    if let Some(check) = check {
        measure.check_layers(&check)?;
    }
    Ok(measure)
}

impl LayeredMeasure {
    /// Cheap construction: masses must be positive and finite; bounds are
    /// `μ(G_n)·Γ`.
    pub fn new(layers: Vec<Layer>, global_rate: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter("measure needs at least one layer".into()));
        }
        if !(global_rate >= 0.0 && global_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "rate bound must be finite and nonnegative, got {global_rate}"
            )));
        }
        let m = layers[0].set.dim();
        let mut cumulative = Vec::with_capacity(layers.len() + 1);
        cumulative.push(0.0);
        for (i, layer) in layers.iter().enumerate() {
            if !(layer.mass > 0.0 && layer.mass.is_finite()) {
                return Err(Error::NonPositiveMass {
                    layer: i,
                    mass: layer.mass,
                });
            }
            if layer.set.dim() != m {
                return Err(Error::Dimension(format!(
                    "layer {i} has mark dimension {} but layer 0 has {m}",
                    layer.set.dim()
                )));
            }
            cumulative.push(cumulative[i] + layer.mass);
        }
        let mut cumulative_rate = Vec::with_capacity(layers.len() + 1);
        cumulative_rate.push(0.0);
        for (i, layer) in layers.iter().enumerate() {
            let cap = layer.rate_cap.unwrap_or(global_rate);
            if !(cap >= 0.0 && cap <= global_rate) {
                return Err(Error::InvalidParameter(format!(
                    "layer {i}: rate cap {cap} must lie in [0, {global_rate}]"
                )));
            }
            cumulative_rate.push(cumulative_rate[i] + layer.mass * cap);
        }
        let rate_bounds = cumulative[1..].iter().map(|c| c * global_rate).collect();
        Ok(LayeredMeasure {
            layers,
            cumulative,
            cumulative_rate,
            rate_bounds,
            global_rate,
        })
    }

    pub fn with_rate_bounds(mut self, bounds: Vec<f64>) -> Result<Self> {
        if bounds.len() != self.layers.len() {
            return Err(Error::Dimension(format!(
                "{} rate bounds for {} layers",
                bounds.len(),
                self.layers.len()
            )));
        }
        for i in 1..bounds.len() {
            if !(bounds[i] > bounds[i - 1]) {
                return Err(Error::RateBoundsNotIncreasing {
                    layer: i,
                    prev: bounds[i - 1],
                    next: bounds[i],
                });
            }
        }
        self.rate_bounds = bounds;
        Ok(self)
    }

    /// Sampler-in-set and density-mass spot checks.
    pub fn check_layers(&self, check: &MeasureCheck) -> Result<()> {
        let streams = StreamFactory::new(check.seed);
        let m = self.mark_dim();
        let mut z = vec![0.0; m];
        for (i, layer) in self.layers.iter().enumerate() {
            let mut rng = streams.stream(i as u64);
            for _ in 0..check.samples.min(1000) {
                layer.sample(&mut rng, &mut z);
                if !layer.set.contains(&z) {
                    return Err(Error::SamplerOutsideSet { layer: i });
                }
            }
            let Some(h) = &layer.density else { continue };
            // integrate h over the bounding box restricted to the set
            let (lo, hi) = layer.set.bounding_box();
            let vol: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
            if !vol.is_finite() {
                continue;
            }
            let n = check.samples.max(2);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                for k in 0..m {
                    z[k] = lo[k] + rng.random::<f64>() * (hi[k] - lo[k]);
                }
                let v = if layer.set.contains(&z) { vol * h(&z) } else { 0.0 };
                s += v;
                s2 += v * v;
            }
            let mean = s / n as f64;
            let var = (s2 / n as f64 - mean * mean).max(0.0);
            let se = (var / n as f64).sqrt();
            let tol = check.sigmas * se + 1e-9 * layer.mass.max(1.0);
            if (mean - layer.mass).abs() > tol {
                return Err(Error::MassMismatch {
                    layer: i,
                    declared: layer.mass,
                    estimated: mean,
                    se,
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn mark_dim(&self) -> usize {
        self.layers[0].set.dim()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer(&self, i: usize) -> &Layer {
        &self.layers[i]
    }

    pub fn global_rate(&self) -> f64 {
        self.global_rate
    }

    /// `μ(G_n)`: mass of the first `n` layers.
    pub fn cumulative_mass(&self, n: usize) -> f64 {
        self.cumulative[n.min(self.layers.len())]
    }

    pub fn total_mass(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn range_mass(&self, range: LayerRange) -> f64 {
        let (lo, hi) = range.bounds(self.len());
        self.cumulative[hi] - self.cumulative[lo]
    }

    /// `Γ_n` for `n >= 1`.
    pub fn rate_bound(&self, n: usize) -> f64 {
        assert!(n >= 1 && n <= self.len(), "level {n} out of range");
        self.rate_bounds[n - 1]
    }

    pub fn rate_bounds(&self) -> &[f64] {
        &self.rate_bounds
    }

    pub fn layer_cap(&self, i: usize) -> f64 {
        self.layers[i].rate_cap.unwrap_or(self.global_rate)
    }

    /// Total proposal intensity `Σ mass_i · cap_i` over `range`.
    pub fn candidate_rate(&self, range: LayerRange) -> f64 {
        let (lo, hi) = range.bounds(self.len());
        self.cumulative_rate[hi] - self.cumulative_rate[lo]
    }

    /// Draw a thinning candidate: layer chosen proportionally to
    /// `mass * cap`, then a mark from that layer.
    pub fn sample_candidate(&self, range: LayerRange, rng: &mut SimRng, out: &mut [f64]) -> usize {
        let (lo, hi) = range.bounds(self.len());
        let i = pick(&self.cumulative_rate, lo, hi, rng);
        self.layers[i].sample(rng, out);
        i
    }

    /// Index of the layer within `range` containing `z`.
    pub fn locate(&self, z: &[f64], range: LayerRange) -> Option<usize> {
        let (lo, hi) = range.bounds(self.len());
        (lo..hi).find(|&i| self.layers[i].set.contains(z))
    }

    /// Density of the absolutely continuous part at `z` (0 off the range).
    pub fn density(&self, z: &[f64], range: LayerRange) -> f64 {
        match self.locate(z, range) {
            Some(i) => self.layers[i].density_at(z).unwrap_or(0.0),
            None => 0.0,
        }
    }

    /// Draw a mark from `μ` restricted to `range`, normalized. Returns the
    /// layer index.
    pub fn sample(&self, range: LayerRange, rng: &mut SimRng, out: &mut [f64]) -> usize {
        let (lo, hi) = range.bounds(self.len());
        let i = pick(&self.cumulative, lo, hi, rng);
        self.layers[i].sample(rng, out);
        i
    }
}

fn pick(cumulative: &[f64], lo: usize, hi: usize, rng: &mut SimRng) -> usize {
    debug_assert!(hi > lo, "sampling from an empty layer range");
    if hi - lo == 1 {
        return lo;
    }
    let base = cumulative[lo];
    let target = base + rng.random::<f64>() * (cumulative[hi] - base);
    let k = cumulative[lo + 1..=hi].partition_point(|&c| c <= target);
    (lo + k).min(hi - 1)
}

pub type ScheduleFn = Arc<dyn Fn(f64) -> LayeredMeasure + Send + Sync>;

/// Noise measure of a model, possibly depending on time.
#[derive(Clone)]
pub enum MeasureSchedule {
    Static(Arc<LayeredMeasure>),
    /// Must be nondecreasing in `t` (the domain only grows).
    Varying(ScheduleFn),
}

impl fmt::Debug for MeasureSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasureSchedule::Static(m) => write!(f, "Static({} layers)", m.len()),
            MeasureSchedule::Varying(_) => write!(f, "Varying"),
        }
    }
}

impl MeasureSchedule {
    pub fn at(&self, t: f64) -> Cow<'_, LayeredMeasure> {
        match self {
            MeasureSchedule::Static(m) => Cow::Borrowed(m.as_ref()),
            MeasureSchedule::Varying(f) => Cow::Owned(f(t)),
        }
    }

    pub fn is_static(&self) -> bool {
        matches!(self, MeasureSchedule::Static(_))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval(lo: f64, hi: f64) -> MarkSet {
        MarkSet::interval(lo, hi)
    }

    #[test]
    fn one_layer_measure() {
        let m = build_layered_measure(
            vec![Layer::uniform(interval(-1.0, 1.0), 0.5)],
            3.0,
            None,
            Some(MeasureCheck::default()),
        )
        .unwrap();
        assert!((m.total_mass() - 1.0).abs() < 1e-15);
        assert!((m.rate_bound(1) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn mass_mismatch_flagged() {
        let mut layer = Layer::lebesgue(interval(0.0, 2.0));
        layer.mass = 1.0;
        let err = build_layered_measure(vec![layer], 1.0, None, Some(MeasureCheck::default()));
        assert!(matches!(err, Err(Error::MassMismatch { .. })), "{err:?}");
    }

    #[test]
    fn bad_masses_and_bounds() {
        let mut layer = Layer::lebesgue(interval(0.0, 1.0));
        layer.mass = 0.0;
        assert!(matches!(
            LayeredMeasure::new(vec![layer], 1.0),
            Err(Error::NonPositiveMass { layer: 0, .. })
        ));
        let m = LayeredMeasure::new(
            vec![Layer::lebesgue(interval(0.0, 1.0)), Layer::lebesgue(interval(1.0, 2.0))],
            1.0,
        )
        .unwrap();
        assert!(matches!(
            m.with_rate_bounds(vec![2.0, 2.0]),
            Err(Error::RateBoundsNotIncreasing { layer: 1, .. })
        ));
    }

    #[test]
    fn range_sampling_respects_layers() {
        let m = LayeredMeasure::new(
            vec![
                Layer::lebesgue(interval(0.0, 1.0)),
                Layer::lebesgue(interval(1.0, 10.0)),
                Layer::lebesgue(interval(10.0, 100.0)),
            ],
            1.0,
        )
        .unwrap();
        assert_eq!(m.range_mass(LayerRange::Beyond(1)), 99.0);
        assert_eq!(m.cumulative_mass(2), 10.0);
        let mut rng = StreamFactory::new(3).stream(0);
        let mut z = [0.0];
        let mut counts = [0usize; 3];
        for _ in 0..20_000 {
            let i = m.sample(LayerRange::Beyond(1), &mut rng, &mut z);
            assert!(i >= 1);
            assert!(m.layer(i).set.contains(&z));
            counts[i] += 1;
        }
        // layer 1 carries 9/99 of the mass
        let p = counts[1] as f64 / 20_000.0;
        let se = (9.0 / 99.0 * 90.0 / 99.0 / 20_000.0f64).sqrt();
        assert!((p - 9.0 / 99.0).abs() < 4.0 * se);
        assert_eq!(m.locate(&[5.0], LayerRange::All), Some(1));
        assert_eq!(m.locate(&[5.0], LayerRange::Upto(1)), None);
    }
}
