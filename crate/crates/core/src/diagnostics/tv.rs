use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EmpiricalLaw;
use crate::error::{Error, Result};
use crate::rng::StreamFactory;
use crate::util::stats::percentile_interval;

pub const MIN_SAMPLES: usize = 100;

/// Equal-mass binning of the pooled sample, one axis at a time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Binning {
    /// Bins per coordinate; `None` means `⌈N^{1/3}⌉` with `N` the smaller
    /// sample size.
    pub bins_per_dim: Option<usize>,
    pub cap: usize,
    pub replicates: usize,
    pub seed: u64,
    pub level: f64,
}

impl Default for Binning {
    fn default() -> Self {
        Binning {
            bins_per_dim: None,
            cap: 32,
            replicates: 200,
            seed: 0x7b,
            level: 0.95,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvEstimate {
    pub value: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub bins_per_dim: usize,
}

/// Interior edges splitting the pooled sorted values into `k` equal-count
/// groups; each edge is the midpoint between neighbouring order statistics.
fn edges(mut pooled: Vec<f64>, k: usize) -> Vec<f64> {
    pooled.sort_by(f64::total_cmp);
    let n = pooled.len();
    let mut out: Vec<f64> = (1..k)
        .map(|j| {
            let pos = j * n / k;
            0.5 * (pooled[pos - 1] + pooled[pos])
        })
        .collect();
    out.dedup();
    out
}

fn cells(law: &EmpiricalLaw, axes: &[Vec<f64>]) -> Vec<usize> {
    law.rows()
        .map(|r| {
            let mut idx = 0;
            let mut stride = 1;
            for (v, e) in r.iter().zip(axes) {
                idx += stride * e.partition_point(|edge| edge < v);
                stride *= e.len() + 1;
            }
            idx
        })
        .collect()
}

fn histogram(law: &EmpiricalLaw, cell: &[usize], ncells: usize, idx: Option<&[usize]>) -> Vec<f64> {
    let mut h = vec![0.0; ncells];
    match idx {
        None => {
            for (i, &c) in cell.iter().enumerate() {
                h[c] += law.weight(i);
            }
        }
        Some(idx) => {
            let mut total = 0.0;
            for &i in idx {
                let w = law.weight(i);
                h[cell[i]] += w;
                total += w;
            }
            for v in &mut h {
                *v /= total;
            }
        }
    }
    h
}

fn half_l1(a: &[f64], b: &[f64]) -> f64 {
    (0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()).clamp(0.0, 1.0)
}

/// Total variation between the binned laws, with a percentile bootstrap
/// interval (each law resampled independently, bins held fixed). Coarse
/// bins bias the estimate down, sampling noise biases it up.
pub fn tv_estimate(a: &EmpiricalLaw, b: &EmpiricalLaw, binning: &Binning) -> Result<TvEstimate> {
    if a.dim != b.dim {
        return Err(Error::Dimension(format!("laws in dimensions {} and {}", a.dim, b.dim)));
    }
    let n = a.len().min(b.len());
    if n < MIN_SAMPLES {
        return Err(Error::SampleTooSmall { n, min: MIN_SAMPLES });
    }
    let k = binning
        .bins_per_dim
        .unwrap_or_else(|| (n as f64).cbrt().ceil() as usize)
        .clamp(1, binning.cap.max(1));
    let axes: Vec<Vec<f64>> = (0..a.dim)
        .map(|j| {
            let mut pooled = a.column(j);
            pooled.extend(b.column(j));
            edges(pooled, k)
        })
        .collect();
    let ncells: usize = axes.iter().map(|e| e.len() + 1).product();
    let (ca, cb) = (cells(a, &axes), cells(b, &axes));
    let value = half_l1(&histogram(a, &ca, ncells, None), &histogram(b, &cb, ncells, None));
    let streams = StreamFactory::new(binning.seed).child(0x7f);
    let mut reps: Vec<f64> = (0..binning.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = streams.stream(r);
            let ia: Vec<usize> = (0..a.len()).map(|_| rng.random_range(0..a.len())).collect();
            let ib: Vec<usize> = (0..b.len()).map(|_| rng.random_range(0..b.len())).collect();
            half_l1(
                &histogram(a, &ca, ncells, Some(&ia)),
                &histogram(b, &cb, ncells, Some(&ib)),
            )
        })
        .collect();
    reps.sort_by(f64::total_cmp);
    let (lo, hi) = if reps.is_empty() {
        (value, value)
    } else {
        percentile_interval(&reps, binning.level)
    };
    Ok(TvEstimate {
        value,
        ci_lo: lo.min(value),
        ci_hi: hi.max(value),
        bins_per_dim: k,
    })
}

/// Permutation test of whether the first `n_first` rows of `law` and the
/// rest come from the same distribution, with binned TV as the statistic.
/// Bins come from the pooled sample, so they are shared by every split.
/// Returns the observed TV and the permutation p-value.
pub(super) fn split_test(law: &EmpiricalLaw, n_first: usize, binning: &Binning) -> Result<(f64, f64)> {
    let n = n_first.min(law.len() - n_first);
    if n < MIN_SAMPLES {
        return Err(Error::SampleTooSmall { n, min: MIN_SAMPLES });
    }
    let k = binning
        .bins_per_dim
        .unwrap_or_else(|| (n as f64).cbrt().ceil() as usize)
        .clamp(1, binning.cap.max(1));
    let axes: Vec<Vec<f64>> = (0..law.dim).map(|j| edges(law.column(j), k)).collect();
    let ncells: usize = axes.iter().map(|e| e.len() + 1).product();
    let cell = cells(law, &axes);
    let stat = |order: &[usize]| {
        let (mut ha, mut hb) = (vec![0.0; ncells], vec![0.0; ncells]);
        let (mut wa, mut wb) = (0.0, 0.0);
        for (pos, &i) in order.iter().enumerate() {
            let w = law.weight(i);
            if pos < n_first {
                ha[cell[i]] += w;
                wa += w;
            } else {
                hb[cell[i]] += w;
                wb += w;
            }
        }
        ha.iter_mut().for_each(|v| *v /= wa);
        hb.iter_mut().for_each(|v| *v /= wb);
        half_l1(&ha, &hb)
    };
    let identity: Vec<usize> = (0..law.len()).collect();
    let observed = stat(&identity);
    let streams = StreamFactory::new(binning.seed).child(0x5b1);
    let exceed = (0..binning.replicates as u64)
        .into_par_iter()
        .filter(|&r| {
            let mut order = identity.clone();
            order.shuffle(&mut streams.stream(r));
            stat(&order) >= observed
        })
        .count();
    Ok((observed, (1 + exceed) as f64 / (1 + binning.replicates) as f64))
}

#[cfg(test)]
mod tests {
    use rand_distr::{Distribution, StandardNormal};

    use super::*;
    use crate::diagnostics::LawMeta;

    fn law(v: Vec<f64>) -> EmpiricalLaw {
        let rows: Vec<Vec<f64>> = v.into_iter().map(|x| vec![x]).collect();
        EmpiricalLaw::from_rows(&rows, LawMeta::default()).unwrap()
    }

    #[test]
    fn identical_and_disjoint() {
        let mut rng = StreamFactory::new(1).stream(0);
        let v: Vec<f64> = (0..1000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let a = law(v.clone());
        let e = tv_estimate(&a, &a, &Binning::default()).unwrap();
        assert_eq!(e.value, 0.0);
        let b = law(v.iter().map(|x| x + 100.0).collect());
        let e = tv_estimate(&a, &b, &Binning::default()).unwrap();
        assert_eq!(e.value, 1.0);
        assert!(e.ci_lo <= 1.0 && e.ci_hi >= 1.0);
    }

    #[test]
    fn too_small() {
        let a = law(vec![0.0; 50]);
        assert!(matches!(
            tv_estimate(&a, &a, &Binning::default()),
            Err(Error::SampleTooSmall { n: 50, .. })
        ));
    }

    #[test]
    fn symmetric() {
        let mut rng = StreamFactory::new(2).stream(0);
        let a = law((0..500).map(|_| StandardNormal.sample(&mut rng)).collect());
        let b = law((0..700).map(|_| 0.5 + Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect());
        let ab = tv_estimate(&a, &b, &Binning::default()).unwrap();
        let ba = tv_estimate(&b, &a, &Binning::default()).unwrap();
        assert_eq!(ab.value, ba.value);
        assert!((0.0..=1.0).contains(&ab.value));
    }
}
