use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Euclidean ball `{|x - center| < radius}`; closed-ball membership is
/// available separately for mark balls.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BallSet {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl BallSet {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        Ok(BallSet { center, radius })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn dist(&self, x: &[f64]) -> f64 {
        self.center
            .iter()
            .zip(x)
            .map(|(c, v)| (v - c) * (v - c))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.dist(x) < self.radius
    }

    pub fn contains_closed(&self, x: &[f64]) -> bool {
        self.dist(x) <= self.radius
    }

    pub fn volume(&self) -> f64 {
        unit_ball_volume(self.dim()) * self.radius.powi(self.dim() as i32)
    }

    pub fn scaled(&self, factor: f64) -> BallSet {
        BallSet {
            center: self.center.clone(),
            radius: self.radius * factor,
        }
    }

    /// Uniform draw from the ball.
    pub fn sample(&self, rng: &mut SimRng, out: &mut [f64]) {
        let d = self.dim();
        if d == 1 {
            out[0] = self.center[0] + self.radius * (2.0 * rng.random::<f64>() - 1.0);
            return;
        }
        let mut norm = 0.0;
        for o in out.iter_mut().take(d) {
            let g: f64 = rng.sample(StandardNormal);
            *o = g;
            norm += g * g;
        }
        let norm = norm.sqrt();
        let r = self.radius * rng.random::<f64>().powf(1.0 / d as f64);
        for i in 0..d {
            out[i] = self.center[i] + r * out[i] / norm;
        }
    }
}

pub fn unit_ball_volume(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    std::f64::consts::PI.powf(h) / statrs::function::gamma::gamma(h + 1.0)
}

pub type IndicatorFn = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// Mark-space region of one layer.
#[derive(Clone)]
pub enum MarkSet {
    /// Half-open box `lo < z <= hi` per coordinate.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball(BallSet),
    /// Arbitrary region given by a membership test inside a bounding box.
    Indicator {
        contains: IndicatorFn,
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
}

impl fmt::Debug for MarkSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MarkSet::Box { lo, hi } => write!(f, "Box({lo:?}, {hi:?})"),
            MarkSet::Ball(b) => write!(f, "Ball({:?}, {})", b.center, b.radius),
            MarkSet::Indicator { lo, hi, .. } => write!(f, "Indicator(in {lo:?}..{hi:?})"),
        }
    }
}

impl MarkSet {
    pub fn interval(lo: f64, hi: f64) -> Self {
        MarkSet::Box {
            lo: vec![lo],
            hi: vec![hi],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            MarkSet::Box { lo, .. } | MarkSet::Indicator { lo, .. } => lo.len(),
            MarkSet::Ball(b) => b.dim(),
        }
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        match self {
            MarkSet::Box { lo, hi } => z
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (a, b))| *v > *a && *v <= *b),
            MarkSet::Ball(b) => b.contains_closed(z),
            MarkSet::Indicator { contains, .. } => contains(z),
        }
    }

    /// Lebesgue volume when it is known in closed form.
    pub fn volume(&self) -> Option<f64> {
        match self {
            MarkSet::Box { lo, hi } => Some(lo.iter().zip(hi).map(|(a, b)| b - a).product()),
            MarkSet::Ball(b) => Some(b.volume()),
            MarkSet::Indicator { .. } => None,
        }
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            MarkSet::Box { lo, hi } | MarkSet::Indicator { lo, hi, .. } => (lo.clone(), hi.clone()),
            MarkSet::Ball(b) => (
                b.center.iter().map(|c| c - b.radius).collect(),
                b.center.iter().map(|c| c + b.radius).collect(),
            ),
        }
    }

    /// Uniform draw with respect to Lebesgue measure on the set.
    pub fn sample_uniform(&self, rng: &mut SimRng, out: &mut [f64]) {
        match self {
            MarkSet::Box { lo, hi } => {
                for i in 0..lo.len() {
                    // 1 - U lies in (0, 1], matching the half-open box
                    let u = 1.0 - rng.random::<f64>();
                    out[i] = lo[i] + u * (hi[i] - lo[i]);
                }
            }
            MarkSet::Ball(b) => b.sample(rng, out),
            MarkSet::Indicator { contains, lo, hi } => loop {
                for i in 0..lo.len() {
                    out[i] = lo[i] + rng.random::<f64>() * (hi[i] - lo[i]);
                }
                if contains(out) {
                    return;
                }
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamFactory;

    #[test]
    fn ball_volumes() {
        assert!((unit_ball_volume(1) - 2.0).abs() < 1e-12);
        assert!((unit_ball_volume(2) - std::f64::consts::PI).abs() < 1e-12);
        assert!((unit_ball_volume(3) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_radius() {
        assert!(BallSet::new(vec![0.0], 0.0).is_err());
        assert!(BallSet::new(vec![0.0], -1.0).is_err());
    }

    #[test]
    fn samples_stay_inside() {
        let mut rng = StreamFactory::new(1).stream(0);
        let ball = MarkSet::Ball(BallSet::new(vec![1.0, -1.0], 0.5).unwrap());
        let boxed = MarkSet::interval(0.0, 2.0);
        let mut z = [0.0; 2];
        for _ in 0..1000 {
            ball.sample_uniform(&mut rng, &mut z);
            assert!(ball.contains(&z));
            boxed.sample_uniform(&mut rng, &mut z[..1]);
            assert!(boxed.contains(&z[..1]));
        }
    }
}
