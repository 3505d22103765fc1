//! Models, noise measures, sets, paths, and assumption checks.

pub mod measure;
pub mod path;
pub mod quadrature;
pub mod sets;
pub mod validate;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use measure::{
    build_layered_measure, Layer, LayerRange, LayeredMeasure, MarkSampler, MeasureCheck,
    MeasureSchedule,
};
pub use path::{JumpEvent, PathRecord};
pub use quadrature::{Estimate, QuadNodes, Quadrature};
pub use sets::{BallSet, MarkSet};
pub use validate::{validate_inhomogeneous, validate_limit, EvalGrid, ValidationReport};

pub type TimeField = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
pub type TimeAmplitude = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;
pub type TimeRate = Arc<dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync>;
pub type Field = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type Amplitude = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
pub type Rate = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
pub type Scalar = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type Classifier = Arc<dyn Fn(f64, &[f64]) -> Regime + Send + Sync>;

/// Jump regime of a mark at a given time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// Centered small jumps that produce a diffusion in the limit.
    Fast,
    /// Jumps that average out to a drift.
    Intermediate,
    /// Jumps that survive in the limit.
    Slow,
}

/// `dX = b(t,X)dt + ∫ c(t,z,X) 1{u ≤ γ(t,z,X)} N(dt,dz,du)`.
#[derive(Clone)]
pub struct InhomogeneousModel {
    pub name: String,
    pub dim_state: usize,
    pub dim_mark: usize,
    /// `b(t, x)`.
    pub drift: TimeField,
    /// `c(t, z, x)`.
    pub amplitude: TimeAmplitude,
    /// `γ(t, z, x)`.
    pub rate: TimeRate,
    /// Global bound `Γ` on `γ`.
    pub rate_bound: f64,
    pub measure: MeasureSchedule,
    pub regimes: Option<Classifier>,
}

impl fmt::Debug for InhomogeneousModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InhomogeneousModel")
            .field("name", &self.name)
            .field("dim_state", &self.dim_state)
            .field("dim_mark", &self.dim_mark)
            .field("rate_bound", &self.rate_bound)
            .field("measure", &self.measure)
            .finish()
    }
}

/// Contribution of marks beyond the last declared layer, which is never
/// simulated as jumps. `drift(x) = ∫ c γ dμ` and `abs_moment(x) = ∫ |c| γ dμ`
/// over that tail.
#[derive(Clone)]
pub struct Tail {
    pub drift: Field,
    pub abs_moment: Scalar,
}

/// `dX = g(X)dt + Σ_l σ_l(X) dW^l + ∫ c(z,X) 1{u ≤ γ(z,X)} N(dt,dz,du)`.
#[derive(Clone)]
pub struct LimitModel {
    pub name: String,
    pub dim_state: usize,
    pub dim_mark: usize,
    /// Number of Brownian columns `k`.
    pub noise_dim: usize,
    pub drift: Field,
    /// Writes `σ` as a row-major `d × k` matrix (`out[i*k + l] = σ_l^i`).
    pub diffusion: Option<Field>,
    pub amplitude: Amplitude,
    pub rate: Rate,
    pub rate_bound: f64,
    pub measure: Arc<LayeredMeasure>,
    /// Small-jump tail beyond the declared layers, replaced by its mean
    /// drift whenever the full measure is simulated.
    pub tail: Option<Tail>,
    /// Description of `μ` used for integrals (generator, regime
    /// functionals). When present it must cover the whole support, tail
    /// included, and the tail terms are not added again.
    pub integration: Option<Arc<LayeredMeasure>>,
}

impl fmt::Debug for LimitModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LimitModel")
            .field("name", &self.name)
            .field("dim_state", &self.dim_state)
            .field("dim_mark", &self.dim_mark)
            .field("noise_dim", &self.noise_dim)
            .field("rate_bound", &self.rate_bound)
            .field("layers", &self.measure.len())
            .finish()
    }
}

impl LimitModel {
    pub fn integration_measure(&self) -> &LayeredMeasure {
        self.integration.as_deref().unwrap_or(&self.measure)
    }

    pub fn check_shape(&self) -> Result<()> {
        if self.dim_state == 0 {
            return Err(Error::Dimension("state dimension must be positive".into()));
        }
        if self.measure.mark_dim() != self.dim_mark {
            return Err(Error::Dimension(format!(
                "measure marks have dimension {} but the model declares {}",
                self.measure.mark_dim(),
                self.dim_mark
            )));
        }
        if (self.noise_dim > 0) != self.diffusion.is_some() {
            return Err(Error::Dimension(
                "diffusion must be given exactly when noise_dim > 0".into(),
            ));
        }
        if (self.measure.global_rate() - self.rate_bound).abs() > 1e-12 * self.rate_bound.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "measure built with rate bound {} but model declares {}",
                self.measure.global_rate(),
                self.rate_bound
            )));
        }
        Ok(())
    }

    pub fn drift_at(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_state];
        (self.drift)(x, &mut out);
        out
    }

    pub fn amplitude_at(&self, z: &[f64], x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_state];
        (self.amplitude)(z, x, &mut out);
        out
    }

    /// `σ(x)` as a row-major `d × k` matrix (empty when `k = 0`).
    pub fn sigma_at(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_state * self.noise_dim];
        if let Some(s) = &self.diffusion {
            s(x, &mut out);
        }
        out
    }

    /// `a(x) = σ σᵀ`, row-major `d × d`.
    pub fn diffusion_matrix(&self, x: &[f64]) -> Vec<f64> {
        let (d, k) = (self.dim_state, self.noise_dim);
        let s = self.sigma_at(x);
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                a[i * d + j] = (0..k).map(|l| s[i * k + l] * s[j * k + l]).sum();
            }
        }
        a
    }
}

impl InhomogeneousModel {
    /// The limit model viewed as a (trivially) time-inhomogeneous one. Only
    /// pure-jump limits qualify: the inhomogeneous equation has no Brownian
    /// part. The tail drift, if any, is folded into `b`.
    pub fn from_limit(limit: &LimitModel) -> Result<Self> {
        if limit.noise_dim > 0 {
            return Err(Error::Unsupported(
                "inhomogeneous models carry no Brownian part".into(),
            ));
        }
        let l = limit.clone();
        let l2 = limit.clone();
        let l3 = limit.clone();
        let d = limit.dim_state;
        Ok(InhomogeneousModel {
            name: format!("{}-as-inhomogeneous", limit.name),
            dim_state: d,
            dim_mark: limit.dim_mark,
            drift: Arc::new(move |_, x, out| {
                (l.drift)(x, out);
                if let Some(tail) = &l.tail {
                    let mut extra = vec![0.0; d];
                    (tail.drift)(x, &mut extra);
                    for (o, e) in out.iter_mut().zip(extra) {
                        *o += e;
                    }
                }
            }),
            amplitude: Arc::new(move |_, z, x, out| (l2.amplitude)(z, x, out)),
            rate: Arc::new(move |_, z, x| (l3.rate)(z, x)),
            rate_bound: limit.rate_bound,
            measure: MeasureSchedule::Static(limit.measure.clone()),
            regimes: None,
        })
    }
}

/// Region used by a Lyapunov condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Region {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball(BallSet),
}

impl Region {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (a, b))| *v >= *a && *v <= *b),
            Region::Ball(b) => b.contains_closed(x),
        }
    }
}

/// `L V ≤ -b V + c 1_K` with `V ≥ 1`.
#[derive(Clone)]
pub struct LyapunovSpec {
    pub v: Scalar,
    pub b: f64,
    pub c: f64,
    pub compact: Region,
}

impl fmt::Debug for LyapunovSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LyapunovSpec")
            .field("b", &self.b)
            .field("c", &self.c)
            .field("compact", &self.compact)
            .finish()
    }
}

impl LyapunovSpec {
    pub fn new(v: Scalar, b: f64, c: f64, compact: Region) -> Result<Self> {
        if !(b > 0.0 && c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "drift constants must be positive, got b = {b}, c = {c}"
            )));
        }
        Ok(LyapunovSpec { v, b, c, compact })
    }

    /// `V(x) = 1 + |x|²`.
    pub fn quadratic(compact: Region) -> Self {
        LyapunovSpec {
            v: Arc::new(|x| 1.0 + x.iter().map(|v| v * v).sum::<f64>()),
            b: 1.0,
            c: 1.0,
            compact,
        }
    }

    /// Checks `V ≥ 1` on the given points; returns the first offender.
    pub fn check_floor(&self, points: &[Vec<f64>]) -> Result<()> {
        for p in points {
            let v = (self.v)(p);
            if !(v >= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "Lyapunov function is {v} < 1 at {p:?}"
                )));
            }
        }
        Ok(())
    }
}
