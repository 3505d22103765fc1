//! Numerical generators `L_t`, `L` on test functions, the regime
//! functionals of the inhomogeneous model, Lyapunov drift checks and the
//! seminorms entering the pseudotrajectory bound.

mod dictionary;
mod epsilon;
mod lyapunov;
mod regimes;
mod seminorm;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Estimate, InhomogeneousModel, LayerRange, LayeredMeasure, LimitModel, QuadNodes, Quadrature};
use crate::util::fd;

pub use dictionary::{Dictionary, DictionaryFunction, Factor};
pub use epsilon::{epsilon_decay, DictionaryCheck, EpsilonDecay, EpsilonRow};
pub use lyapunov::{lyapunov_check, GeneratorTarget, LyapunovOutcome, LyapunovPoint};
pub use regimes::{regime_functionals, RegimeFunctionals};
pub use seminorm::{seminorm_report, BoundRow, SeminormReport, SeminormSettings, Term};

/// A function on the state space. Derivatives default to central finite
/// differences.
pub trait TestFunction: Sync {
    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        fd::gradient(&|y| self.value(y), x, out);
    }

    /// Row-major `d × d`.
    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        fd::hessian(&|y| self.value(y), x, out);
    }
}

/// Wraps a closure; derivatives by finite differences.
pub struct FnTest<F>(pub F);

impl<F: Fn(&[f64]) -> f64 + Sync> TestFunction for FnTest<F> {
    fn value(&self, x: &[f64]) -> f64 {
        (self.0)(x)
    }
}

/// Quadrature rule plus the largest acceptable standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRule {
    pub quadrature: Quadrature,
    pub max_se: f64,
}

impl Default for GeneratorRule {
    fn default() -> Self {
        GeneratorRule {
            quadrature: Quadrature::default(),
            max_se: 1e-3,
        }
    }
}

impl GeneratorRule {
    pub fn new(quadrature: Quadrature) -> Self {
        GeneratorRule {
            quadrature,
            ..Default::default()
        }
    }

    pub(crate) fn accept(&self, e: Estimate) -> Result<Estimate> {
        if e.se > self.max_se {
            Err(Error::QuadratureVariance {
                se: e.se,
                threshold: self.max_se,
            })
        } else {
            Ok(e)
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `∫ [f(x + c) - f(x)] γ dμ` over precomputed nodes.
fn jump_part(
    nodes: &QuadNodes,
    f: &dyn TestFunction,
    x: &[f64],
    mut coef: impl FnMut(&[f64], &mut [f64]) -> f64,
) -> Estimate {
    let fx = f.value(x);
    let mut c = vec![0.0; x.len()];
    let mut y = vec![0.0; x.len()];
    nodes.integrate(|z| {
        let g = coef(z, &mut c);
        if g == 0.0 {
            return 0.0;
        }
        for i in 0..x.len() {
            y[i] = x[i] + c[i];
        }
        (f.value(&y) - fx) * g
    })
}

pub(crate) fn nodes_at(measure: &LayeredMeasure, rule: &Quadrature) -> QuadNodes {
    QuadNodes::build(measure, LayerRange::All, rule)
}

/// `L_t f(x) = b(t,x)·∇f(x) + ∫ [f(x + c) - f(x)] γ dμ_t`.
pub fn apply_generator(
    model: &InhomogeneousModel,
    f: &dyn TestFunction,
    t: f64,
    x: &[f64],
    rule: &GeneratorRule,
) -> Result<Estimate> {
    let measure = model.measure.at(t);
    let nodes = nodes_at(&measure, &rule.quadrature);
    apply_generator_with(model, &nodes, f, t, x, rule)
}

pub(crate) fn apply_generator_with(
    model: &InhomogeneousModel,
    nodes: &QuadNodes,
    f: &dyn TestFunction,
    t: f64,
    x: &[f64],
    rule: &GeneratorRule,
) -> Result<Estimate> {
    let d = model.dim_state;
    check_dim(x, d)?;
    let mut b = vec![0.0; d];
    (model.drift)(t, x, &mut b);
    let mut grad = vec![0.0; d];
    f.gradient(x, &mut grad);
    let jumps = jump_part(nodes, f, x, |z, c| {
        let g = (model.rate)(t, z, x);
        if g != 0.0 {
            (model.amplitude)(t, z, x, c);
        }
        g
    });
    rule.accept(Estimate {
        value: dot(&b, &grad) + jumps.value,
        se: jumps.se,
    })
}

/// Nodes for the limit generator: the integration measure when declared,
/// otherwise the simulated layers (the tail then enters as a drift).
pub(crate) fn limit_nodes(model: &LimitModel, rule: &Quadrature) -> QuadNodes {
    nodes_at(model.integration_measure(), rule)
}

/// `L f(x) = g·∇f + ½ Σ a^{ij} ∂_{ij} f + ∫ [f(x + c) - f(x)] γ dμ`.
pub fn apply_limit_generator(
    model: &LimitModel,
    f: &dyn TestFunction,
    x: &[f64],
    rule: &GeneratorRule,
) -> Result<Estimate> {
    let nodes = limit_nodes(model, &rule.quadrature);
    apply_limit_generator_with(model, &nodes, f, x, rule)
}

pub(crate) fn apply_limit_generator_with(
    model: &LimitModel,
    nodes: &QuadNodes,
    f: &dyn TestFunction,
    x: &[f64],
    rule: &GeneratorRule,
) -> Result<Estimate> {
    let d = model.dim_state;
    check_dim(x, d)?;
    let mut g = model.drift_at(x);
    if model.integration.is_none() {
        if let Some(tail) = &model.tail {
            let mut extra = vec![0.0; d];
            (tail.drift)(x, &mut extra);
            for (a, e) in g.iter_mut().zip(extra) {
                *a += e;
            }
        }
    }
    let mut grad = vec![0.0; d];
    f.gradient(x, &mut grad);
    let mut value = dot(&g, &grad);
    if model.noise_dim > 0 {
        let a = model.diffusion_matrix(x);
        let mut h = vec![0.0; d * d];
        f.hessian(x, &mut h);
        value += 0.5 * dot(&a, &h);
    }
    let jumps = jump_part(nodes, f, x, |z, c| {
        let r = (model.rate)(z, x);
        if r != 0.0 {
            (model.amplitude)(z, x, c);
        }
        r
    });
    rule.accept(Estimate {
        value: value + jumps.value,
        se: jumps.se,
    })
}

fn check_dim(x: &[f64], d: usize) -> Result<()> {
    if x.len() != d {
        return Err(Error::Dimension(format!(
            "state has length {} but the model dimension is {d}",
            x.len()
        )));
    }
    Ok(())
}
