use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::regimes::regime_functionals_with;
use super::{apply_generator_with, apply_limit_generator_with, limit_nodes, nodes_at, Dictionary, GeneratorRule};
use crate::error::{Error, Result};
use crate::model::{InhomogeneousModel, LimitModel};
use crate::util::linalg::norm;
use crate::util::stats::linear_fit;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonRow {
    pub t: f64,
    pub x: Vec<f64>,
    /// Gap terms at `t` itself.
    pub instant: f64,
    /// `ε(x, t)`: supremum of the instantaneous value over grid times `≥ t`.
    pub eps: f64,
    /// `max_f |L f(x) - L_t f(x)|` over the dictionary, when one was given.
    pub generator_gap: Option<f64>,
}

/// Comparison of `|L f - L_t f|` with `C e^{-rt} (1 + |x|)` over the
/// dictionary (whose members have `‖f‖_{3,∞} = 1`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DictionaryCheck {
    pub evaluations: usize,
    pub violations: usize,
    /// Largest `|L f - L_t f| / bound`.
    pub max_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonDecay {
    pub rows: Vec<EpsilonRow>,
    /// Slope of `log max_x ε(x,t)/(1+|x|)` against `t`; NaN when `ε`
    /// vanishes somewhere on the grid.
    pub slope: f64,
    pub slope_se: f64,
    /// `-slope`.
    pub rate: f64,
    /// Smallest `C` with `ε(x,t) ≤ C (1+|x|) e^{-rate·t}` on the grid.
    pub constant: f64,
    pub decaying: bool,
    pub dictionary: Option<DictionaryCheck>,
}

impl EpsilonDecay {
    pub fn max_eps(&self) -> f64 {
        self.rows.iter().map(|r| r.eps).fold(0.0, f64::max)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "x", "eps", "instant", "generator_gap"])?;
        for r in &self.rows {
            let x: Vec<String> = r.x.iter().map(|v| v.to_string()).collect();
            out.write_record([
                r.t.to_string(),
                x.join(" "),
                r.eps.to_string(),
                r.instant.to_string(),
                r.generator_gap.map_or(String::new(), |g| g.to_string()),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `ε(x, t)` on a grid and its exponential fit; optionally the generator
/// gap over a dictionary at the same points.
pub fn epsilon_decay(
    model: &InhomogeneousModel,
    limit: &LimitModel,
    x_grid: &[Vec<f64>],
    t_grid: &[f64],
    dictionary: Option<&Dictionary>,
    rule: &GeneratorRule,
) -> Result<EpsilonDecay> {
    if x_grid.is_empty() || t_grid.len() < 2 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "epsilon fit needs points and at least two increasing times".into(),
        ));
    }
    let lnodes = limit_nodes(limit, &rule.quadrature);
    type PerTime = (Vec<f64>, Option<Vec<f64>>);
    let per_time: Vec<PerTime> = t_grid
        .par_iter()
        .map(|&t| -> Result<PerTime> {
            let measure = model.measure.at(t);
            let nodes = nodes_at(&measure, &rule.quadrature);
            let eps = x_grid
                .iter()
                .map(|x| {
                    regime_functionals_with(model, Some(limit), &nodes, Some(&lnodes), t, x, rule)
                        .map(|r| r.eps.unwrap_or(f64::NAN))
                })
                .collect::<Result<Vec<_>>>()?;
            let gaps = match dictionary {
                None => None,
                Some(dict) => {
                    let mut worst = Vec::with_capacity(x_grid.len());
                    for x in x_grid {
                        let mut m = 0.0f64;
                        for f in &dict.functions {
                            let lt = apply_generator_with(model, &nodes, f, t, x, rule)?;
                            let l = apply_limit_generator_with(limit, &lnodes, f, x, rule)?;
                            m = m.max((l.value - lt.value).abs());
                        }
                        worst.push(m);
                    }
                    Some(worst)
                }
            };
            Ok((eps, gaps))
        })
        .collect::<Result<Vec<_>>>()?;

    // sup over later grid times
    let nt = t_grid.len();
    let nx = x_grid.len();
    let mut sup = vec![vec![0.0; nx]; nt];
    for i in (0..nt).rev() {
        for j in 0..nx {
            let later = if i + 1 < nt { sup[i + 1][j] } else { 0.0 };
            sup[i][j] = f64::max(per_time[i].0[j], later);
        }
    }
    let weight: Vec<f64> = x_grid.iter().map(|x| 1.0 + norm(x)).collect();
    let logs: Vec<f64> = sup
        .iter()
        .map(|row| {
            row.iter()
                .zip(&weight)
                .map(|(e, w)| e / w)
                .fold(0.0, f64::max)
                .ln()
        })
        .collect();
    let (slope, slope_se) = if logs.iter().all(|v| v.is_finite()) {
        let fit = linear_fit(t_grid, &logs);
        (fit.slope, fit.slope_se)
    } else {
        (f64::NAN, f64::NAN)
    };
    let rate = -slope;
    let constant = if slope.is_finite() {
        sup.iter()
            .zip(t_grid)
            .flat_map(|(row, &t)| {
                row.iter()
                    .zip(&weight)
                    .map(move |(e, w)| e / w * (rate * t).exp())
            })
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    let mut rows = Vec::with_capacity(nt * nx);
    let mut check = DictionaryCheck {
        evaluations: 0,
        violations: 0,
        max_ratio: 0.0,
    };
    for (i, &t) in t_grid.iter().enumerate() {
        for (j, x) in x_grid.iter().enumerate() {
            let gap = per_time[i].1.as_ref().map(|g| g[j]);
            if let Some(g) = gap {
                // bound with the fitted constants; with ε ≡ 0 the bound is 0
                let bound = if slope.is_finite() {
                    constant * (-rate * t).exp() * weight[j]
                } else {
                    0.0
                };
                let slack = 1e-9 * (1.0 + g);
                check.evaluations += 1;
                if g > bound + slack {
                    check.violations += 1;
                }
                let ratio = if bound > 0.0 { g / bound } else if g > slack { f64::INFINITY } else { 0.0 };
                check.max_ratio = check.max_ratio.max(ratio);
            }
            rows.push(EpsilonRow {
                t,
                x: x.clone(),
                instant: per_time[i].0[j],
                eps: sup[i][j],
                generator_gap: gap,
            });
        }
    }
    Ok(EpsilonDecay {
        rows,
        slope,
        slope_se,
        rate,
        constant,
        decaying: slope < 0.0,
        dictionary: dictionary.map(|_| check),
    })
}
