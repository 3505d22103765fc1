use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::stats::{bootstrap_ci, loglog_fit};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub p: f64,
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingMoments {
    pub samples: usize,
    /// Pairs that had not met by the horizon; excluded from the moments.
    pub censored: usize,
    pub moments: Vec<MomentRow>,
    /// `(t, P(τ_c > t))` at each observed time, censored pairs counted as
    /// surviving throughout.
    pub survival: Vec<(f64, f64)>,
    /// Slope of `log P(τ_c > t)` against `log t` over the upper half of
    /// the observed times.
    pub tail_exponent: f64,
}

impl CouplingMoments {
    /// Empirical `P(τ_c > t)`.
    pub fn survival_at(&self, t: f64) -> f64 {
        let k = self.survival.partition_point(|(s, _)| *s <= t);
        if k == 0 {
            1.0
        } else {
            self.survival[k - 1].1
        }
    }
}

/// Moments `E τ_c^p` with percentile-bootstrap intervals, the empirical
/// survival function and a fitted polynomial tail exponent.
pub fn coupling_time_moments(
    times: &[Option<f64>],
    p_list: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<CouplingMoments> {
    let mut finite: Vec<f64> = times.iter().flatten().copied().collect();
    if finite.is_empty() {
        return Err(Error::NoCoupling {
            samples: times.len(),
        });
    }
    finite.sort_by(f64::total_cmp);
    let n = times.len();
    let censored = n - finite.len();
    let moments = p_list
        .iter()
        .map(|&p| {
            let powers: Vec<f64> = finite.iter().map(|t| t.powf(p)).collect();
            let estimate = powers.iter().sum::<f64>() / powers.len() as f64;
            let (ci_lo, ci_hi) = bootstrap_ci(powers.len(), replicates, seed ^ p.to_bits(), 0.95, |idx| {
                idx.iter().map(|&i| powers[i]).sum::<f64>() / idx.len() as f64
            });
            MomentRow {
                p,
                estimate,
                ci_lo,
                ci_hi,
            }
        })
        .collect();
    let mut survival = Vec::with_capacity(finite.len());
    for (i, &t) in finite.iter().enumerate() {
        let s = (n - i - 1) as f64 / n as f64;
        match survival.last_mut() {
            Some((last, v)) if *last == t => *v = s,
            _ => survival.push((t, s)),
        }
    }
    let half = survival.len() / 2;
    let tail: Vec<&(f64, f64)> = survival[half..].iter().filter(|(_, s)| *s > 0.0).collect();
    let tail_exponent = if tail.len() >= 3 {
        let (x, y): (Vec<f64>, Vec<f64>) = tail.iter().map(|(t, s)| (*t, *s)).unzip();
        -loglog_fit(&x, &y).slope
    } else {
        f64::NAN
    };
    Ok(CouplingMoments {
        samples: n,
        censored,
        moments,
        survival,
        tail_exponent,
    })
}
