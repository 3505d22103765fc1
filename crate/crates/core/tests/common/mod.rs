#![allow(dead_code)]

use std::sync::Arc;

use regenjump::model::{InhomogeneousModel, Layer, LayeredMeasure, LimitModel, MarkSet, MeasureSchedule};

/// Limit model with no drift, no diffusion, no jumps; tests override the
/// fields they need.
pub fn quiet_limit(dim: usize, layers: Vec<Layer>, gamma: f64) -> LimitModel {
    LimitModel {
        name: "toy".into(),
        dim_state: dim,
        dim_mark: layers[0].set.dim(),
        noise_dim: 0,
        drift: Arc::new(|_, o| o.fill(0.0)),
        diffusion: None,
        amplitude: Arc::new(|_, _, o| o.fill(0.0)),
        rate: Arc::new(|_, _| 0.0),
        rate_bound: gamma,
        measure: Arc::new(LayeredMeasure::new(layers, gamma).unwrap()),
        tail: None,
        integration: None,
    }
}

pub fn quiet_inhomogeneous(dim: usize, layers: Vec<Layer>, gamma: f64) -> InhomogeneousModel {
    InhomogeneousModel {
        name: "toy".into(),
        dim_state: dim,
        dim_mark: layers[0].set.dim(),
        drift: Arc::new(|_, _, o| o.fill(0.0)),
        amplitude: Arc::new(|_, _, _, o| o.fill(0.0)),
        rate: Arc::new(|_, _, _| 0.0),
        rate_bound: gamma,
        measure: MeasureSchedule::Static(Arc::new(LayeredMeasure::new(layers, gamma).unwrap())),
        regimes: None,
    }
}

pub fn unit_layer() -> Vec<Layer> {
    vec![Layer::lebesgue(MarkSet::interval(0.0, 1.0))]
}

/// `|a - b| <= k * se`.
pub fn within(a: f64, b: f64, se: f64, k: f64) -> bool {
    (a - b).abs() <= k * se
}

pub fn mean_se(v: &[f64]) -> (f64, f64) {
    regenjump::util::stats::mean_se(v)
}
