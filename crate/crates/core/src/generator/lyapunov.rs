use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{apply_generator_with, apply_limit_generator_with, limit_nodes, nodes_at, FnTest, GeneratorRule};
use crate::error::Result;
use crate::model::{InhomogeneousModel, LimitModel, LyapunovSpec};

/// Generator whose drift condition is checked.
#[derive(Clone, Copy)]
pub enum GeneratorTarget<'a> {
    Limit(&'a LimitModel),
    /// `L_t` at each of the given times.
    Inhomogeneous {
        model: &'a InhomogeneousModel,
        times: &'a [f64],
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovPoint {
    pub t: Option<f64>,
    pub x: Vec<f64>,
    pub v: f64,
    pub lv: f64,
    pub in_compact: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovOutcome {
    /// A positive `b` exists on the grid.
    pub verified: bool,
    /// Largest `b` with `LV ≤ -bV` at every grid point outside `K`.
    pub b_fit: f64,
    /// Smallest `c ≥ 0` with `LV ≤ -b_fit V + c` on `K`.
    pub c_fit: f64,
    /// Indices of points violating the declared `(b, c)`.
    pub violations: Vec<usize>,
    pub points: Vec<LyapunovPoint>,
}

impl LyapunovOutcome {
    pub fn spec_holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Evaluates `LV` on `grid` and fits the drift constants. Report only:
/// a failed condition is a `verified = false` outcome, not an error.
pub fn lyapunov_check(
    target: GeneratorTarget<'_>,
    spec: &LyapunovSpec,
    grid: &[Vec<f64>],
    rule: &GeneratorRule,
) -> Result<LyapunovOutcome> {
    let v = spec.v.clone();
    let f = FnTest(move |x: &[f64]| v(x));
    let points: Vec<LyapunovPoint> = match target {
        GeneratorTarget::Limit(model) => {
            let nodes = limit_nodes(model, &rule.quadrature);
            grid.par_iter()
                .map(|x| {
                    let lv = apply_limit_generator_with(model, &nodes, &f, x, rule)?.value;
                    Ok(LyapunovPoint {
                        t: None,
                        x: x.clone(),
                        v: (spec.v)(x),
                        lv,
                        in_compact: spec.compact.contains(x),
                    })
                })
                .collect::<Result<_>>()?
        }
        GeneratorTarget::Inhomogeneous { model, times } => times
            .par_iter()
            .map(|&t| {
                let m = model.measure.at(t);
                let nodes = nodes_at(&m, &rule.quadrature);
                grid.iter()
                    .map(|x| {
                        let lv = apply_generator_with(model, &nodes, &f, t, x, rule)?.value;
                        Ok(LyapunovPoint {
                            t: Some(t),
                            x: x.clone(),
                            v: (spec.v)(x),
                            lv,
                            in_compact: spec.compact.contains(x),
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect(),
    };
    let b_fit = points
        .iter()
        .filter(|p| !p.in_compact)
        .map(|p| -p.lv / p.v)
        .fold(f64::INFINITY, f64::min);
    let c_fit = if b_fit.is_finite() {
        points
            .iter()
            .filter(|p| p.in_compact)
            .map(|p| p.lv + b_fit * p.v)
            .fold(0.0, f64::max)
    } else {
        f64::NAN
    };
    let violations = points
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            let rhs = -spec.b * p.v + if p.in_compact { spec.c } else { 0.0 };
            p.lv > rhs + 1e-9 * (1.0 + p.v)
        })
        .map(|(i, _)| i)
        .collect();
    Ok(LyapunovOutcome {
        verified: b_fit.is_finite() && b_fit > 0.0 && c_fit.is_finite(),
        b_fit,
        c_fit,
        violations,
        points,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::model::{Layer, LayeredMeasure, MarkSet, Region};

    fn linear_flow(k: f64) -> LimitModel {
        let measure = Arc::new(
            LayeredMeasure::new(vec![Layer::lebesgue(MarkSet::interval(0.0, 1.0))], 1.0).unwrap(),
        );
        LimitModel {
            name: "flow".into(),
            dim_state: 1,
            dim_mark: 1,
            noise_dim: 0,
            drift: Arc::new(move |x, o| o[0] = k * x[0]),
            diffusion: None,
            amplitude: Arc::new(|_, _, o| o[0] = 0.0),
            rate: Arc::new(|_, _| 0.0),
            rate_bound: 1.0,
            measure,
            tail: None,
            integration: None,
        }
    }

    fn grid() -> Vec<Vec<f64>> {
        (0..=40).map(|i| vec![-4.0 + 0.2 * i as f64]).collect()
    }

    #[test]
    fn contracting_flow_meets_unit_constants() {
        // LV = -2x² = -V + (1 - x²) ≤ -V + 1
        let spec = LyapunovSpec::quadratic(Region::Box {
            lo: vec![-1.0],
            hi: vec![1.0],
        });
        let model = linear_flow(-1.0);
        let out = lyapunov_check(GeneratorTarget::Limit(&model), &spec, &grid(), &GeneratorRule::default()).unwrap();
        assert!(out.verified);
        assert!(out.spec_holds(), "{:?}", out.violations);
        assert!(out.b_fit >= 1.0 - 1e-6);
    }

    #[test]
    fn expanding_flow_fails() {
        let spec = LyapunovSpec::quadratic(Region::Box {
            lo: vec![-1.0],
            hi: vec![1.0],
        });
        let model = linear_flow(1.0);
        let out = lyapunov_check(GeneratorTarget::Limit(&model), &spec, &grid(), &GeneratorRule::default()).unwrap();
        assert!(!out.verified);
        assert!(!out.spec_holds());
    }
}
