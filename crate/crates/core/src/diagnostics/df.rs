use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EmpiricalLaw;
use crate::error::{Error, Result};
use crate::generator::{Dictionary, TestFunction};
use crate::rng::StreamFactory;
use crate::util::stats::percentile_interval;

/// How the two samples relate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    #[default]
    Independent,
    /// Row `i` of both laws comes from the same underlying draw (common
    /// random numbers); differences are taken row by row.
    Paired,
}

/// `max_f |μ_A(f) - μ_B(f)|` over a dictionary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DfEstimate {
    pub value: f64,
    /// Standard error of the maximizing difference.
    pub se: f64,
    pub argmax: usize,
    /// Per-function differences `μ_A(f) - μ_B(f)` and their standard errors.
    pub diffs: Vec<f64>,
    pub ses: Vec<f64>,
}

/// `values[i * k + j] = f_j(row_i)`.
pub(super) fn evaluate(law: &EmpiricalLaw, dict: &Dictionary) -> Vec<f64> {
    let k = dict.len();
    let rows: Vec<&[f64]> = law.rows().collect();
    let mut out = vec![0.0; rows.len() * k];
    out.par_chunks_mut(k).zip(rows).for_each(|(chunk, r)| {
        for (v, f) in chunk.iter_mut().zip(&dict.functions) {
            *v = f.value(r);
        }
    });
    out
}

fn check(a: &EmpiricalLaw, b: &EmpiricalLaw, dict: &Dictionary, pairing: Pairing) -> Result<()> {
    if a.dim != b.dim || dict.dim() != a.dim {
        return Err(Error::Dimension(format!(
            "laws in dimensions {} and {}, dictionary in {}",
            a.dim,
            b.dim,
            dict.dim()
        )));
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::SampleTooSmall { n: 0, min: 1 });
    }
    if pairing == Pairing::Paired && (a.len() != b.len() || a.is_weighted() || b.is_weighted()) {
        return Err(Error::InvalidParameter(
            "paired laws need equal sizes and no weights".into(),
        ));
    }
    Ok(())
}

/// Weighted means over the index multiset `idx` (all rows when `None`).
fn means(law: &EmpiricalLaw, vals: &[f64], k: usize, idx: Option<&[usize]>) -> Vec<f64> {
    let mut m = vec![0.0; k];
    let mut total = 0.0;
    let mut add = |i: usize| {
        let w = law.weight(i);
        total += w;
        for j in 0..k {
            m[j] += w * vals[i * k + j];
        }
    };
    match idx {
        None => (0..law.len()).for_each(&mut add),
        Some(idx) => idx.iter().copied().for_each(&mut add),
    }
    m.iter_mut().for_each(|v| *v /= total);
    m
}

pub(super) fn max_abs(v: &[f64]) -> (usize, f64) {
    v.iter()
        .enumerate()
        .map(|(i, x)| (i, x.abs()))
        .fold((0, 0.0), |acc, c| if c.1 > acc.1 { c } else { acc })
}

/// Variance of `Σ w_i v_i` given per-row values (weights normalized).
fn weighted_var(law: &EmpiricalLaw, vals: &[f64], k: usize, j: usize, mean: f64) -> f64 {
    (0..law.len())
        .map(|i| {
            let w = law.weight(i);
            w * w * (vals[i * k + j] - mean).powi(2)
        })
        .sum::<f64>()
}

/// Dictionary lower bound of `d_F(A, B)`. Every dictionary member is
/// 1-Lipschitz, so the estimate between two point masses is at most their
/// distance.
pub fn df_estimate(a: &EmpiricalLaw, b: &EmpiricalLaw, dict: &Dictionary, pairing: Pairing) -> Result<DfEstimate> {
    check(a, b, dict, pairing)?;
    let k = dict.len();
    let (va, vb) = (evaluate(a, dict), evaluate(b, dict));
    let (ma, mb) = (means(a, &va, k, None), means(b, &vb, k, None));
    let diffs: Vec<f64> = ma.iter().zip(&mb).map(|(x, y)| x - y).collect();
    let ses: Vec<f64> = (0..k)
        .map(|j| match pairing {
            Pairing::Independent => {
                (weighted_var(a, &va, k, j, ma[j]) + weighted_var(b, &vb, k, j, mb[j])).sqrt()
            }
            Pairing::Paired => {
                let n = a.len() as f64;
                let var = (0..a.len())
                    .map(|i| (va[i * k + j] - vb[i * k + j] - diffs[j]).powi(2))
                    .sum::<f64>()
                    / (n - 1.0).max(1.0);
                (var / n).sqrt()
            }
        })
        .collect();
    let (argmax, value) = max_abs(&diffs);
    Ok(DfEstimate {
        value,
        se: ses[argmax],
        argmax,
        diffs,
        ses,
    })
}

/// Percentile bootstrap interval of the dictionary statistic. Paired laws
/// are resampled jointly.
pub fn df_interval(
    a: &EmpiricalLaw,
    b: &EmpiricalLaw,
    dict: &Dictionary,
    pairing: Pairing,
    replicates: usize,
    seed: u64,
    level: f64,
) -> Result<(f64, f64)> {
    check(a, b, dict, pairing)?;
    let k = dict.len();
    let (va, vb) = (evaluate(a, dict), evaluate(b, dict));
    let streams = StreamFactory::new(seed).child(0xdf);
    let mut reps: Vec<f64> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = streams.stream(r);
            let ia: Vec<usize> = (0..a.len()).map(|_| rng.random_range(0..a.len())).collect();
            let ib: Vec<usize> = match pairing {
                Pairing::Paired => ia.clone(),
                Pairing::Independent => (0..b.len()).map(|_| rng.random_range(0..b.len())).collect(),
            };
            let ma = means(a, &va, k, Some(&ia));
            let mb = means(b, &vb, k, Some(&ib));
            let d: Vec<f64> = ma.iter().zip(&mb).map(|(x, y)| x - y).collect();
            max_abs(&d).1
        })
        .collect();
    reps.sort_by(f64::total_cmp);
    Ok(percentile_interval(&reps, level))
}
