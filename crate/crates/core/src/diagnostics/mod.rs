//! Distances between empirical laws and the convergence experiments built
//! on them.
//!
//! Total variation is estimated by equal-mass binning; the smooth distance
//! `d_F` by the largest mean difference over a test-function dictionary,
//! which is a lower bound of the true supremum.

mod df;
mod equilibrium;
mod pseudo;
mod tv;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::stats::linear_fit;

pub use df::{df_estimate, df_interval, DfEstimate, Pairing};
pub use equilibrium::{
    build_reference, equilibrium_gap, EquilibriumConfig, EquilibriumGaps, ReferenceConfig, ReferenceLaw, StartLaw,
};
pub use pseudo::{pseudotrajectory_gap, PseudoConfig, PseudoGaps};
pub use tv::{tv_estimate, Binning, TvEstimate};

/// Where a sample came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LawMeta {
    pub model: String,
    pub time: f64,
    pub seed: u64,
}

/// `N` points in `ℝ^d`, optionally weighted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalLaw {
    pub dim: usize,
    data: Vec<f64>,
    weights: Option<Vec<f64>>,
    pub meta: LawMeta,
}

impl EmpiricalLaw {
    pub fn from_rows(rows: &[Vec<f64>], meta: LawMeta) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.len());
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Dimension("rows must be nonempty and of equal length".into()));
        }
        Ok(EmpiricalLaw {
            dim,
            data: rows.iter().flatten().copied().collect(),
            weights: None,
            meta,
        })
    }

    /// Weights are normalized to sum to 1.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if weights.len() != self.len() || weights.iter().any(|w| !(*w >= 0.0)) || !(total > 0.0) {
            return Err(Error::InvalidParameter(
                "weights must be nonnegative, one per sample, with positive sum".into(),
            ));
        }
        self.weights = Some(weights.into_iter().map(|w| w / total).collect());
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Normalized weight of sample `i`.
    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0 / self.len() as f64, |w| w[i])
    }

    pub fn is_weighted(&self) -> bool {
        self.weights.is_some()
    }

    /// Coordinate `k` of every sample.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.rows().map(|r| r[k]).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapPoint {
    pub x: f64,
    pub gap: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Gap estimates along an abscissa (time, or a system size).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapCurve {
    pub estimator: String,
    pub points: Vec<GapPoint>,
}

impl GapCurve {
    pub fn new(estimator: impl Into<String>) -> Self {
        GapCurve {
            estimator: estimator.into(),
            points: Vec::new(),
        }
    }

    /// Adds a point, widening the interval if needed so that it contains the
    /// estimate.
    pub fn push(&mut self, x: f64, gap: f64, ci: (f64, f64)) {
        self.points.push(GapPoint {
            x,
            gap,
            ci_lo: ci.0.min(gap),
            ci_hi: ci.1.max(gap),
        });
    }

    /// Each interval lies strictly below the previous one.
    pub fn strictly_decreasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].ci_hi < w[0].ci_lo)
    }

    /// First pair `(k, k+1)` that is not separated, if any.
    pub fn first_overlap(&self) -> Option<usize> {
        self.points.windows(2).position(|w| w[1].ci_hi >= w[0].ci_lo)
    }

    /// `-slope` of `log gap` against `log x` over points with positive
    /// gap and abscissa.
    pub fn decay_exponent(&self) -> f64 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = self
            .points
            .iter()
            .filter(|p| p.gap > 0.0 && p.x > 0.0)
            .map(|p| (p.x.ln(), p.gap.ln()))
            .unzip();
        if xs.len() < 2 {
            return f64::NAN;
        }
        -linear_fit(&xs, &ys).slope
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x", "gap", "ci_lo", "ci_hi", "estimator"])?;
        for p in &self.points {
            out.write_record([
                p.x.to_string(),
                p.gap.to_string(),
                p.ci_lo.to_string(),
                p.ci_hi.to_string(),
                self.estimator.clone(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_ordering() {
        let mut c = GapCurve::new("tv");
        c.push(1.0, 0.5, (0.45, 0.55));
        c.push(2.0, 0.3, (0.25, 0.35));
        c.push(4.0, 0.1, (0.05, 0.3));
        assert!(!c.strictly_decreasing());
        assert_eq!(c.first_overlap(), Some(1));
        c.push(5.0, 0.2, (0.3, 0.1));
        assert!(c.points[3].ci_lo <= 0.2 && c.points[3].ci_hi >= 0.2);
    }

    #[test]
    fn weights_normalize() {
        let law = EmpiricalLaw::from_rows(&[vec![0.0], vec![1.0]], LawMeta::default())
            .unwrap()
            .with_weights(vec![1.0, 3.0])
            .unwrap();
        assert_eq!(law.weight(1), 0.75);
        assert!(EmpiricalLaw::from_rows(&[vec![0.0], vec![1.0, 2.0]], LawMeta::default()).is_err());
    }
}
