use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{LayerRange, LimitModel};
use crate::rng::SimRng;

/// Checks `1 <= level <= layers`.
pub(crate) fn check_level(model: &LimitModel, level: usize) -> Result<()> {
    if level == 0 || level > model.measure.len() {
        return Err(Error::InvalidParameter(format!(
            "level {level} outside 1..={}",
            model.measure.len()
        )));
    }
    Ok(())
}

/// `Γ_n / μ(G_n)`: the thinning threshold that turns a uniform proposal
/// from `μ|_{G_n}` into a draw from `Π^{[n]}`.
pub(crate) fn threshold(model: &LimitModel, level: usize) -> f64 {
    model.measure.rate_bound(level) / model.measure.cumulative_mass(level)
}

/// One big-jump draw.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelDraw {
    pub y: Vec<f64>,
    /// Mark of the accepted jump; `None` for the no-jump atom.
    pub mark: Option<Vec<f64>>,
}

/// `Π^{[n]}(x, ·)` evaluated on a given proposal `(z, u)` with `u` uniform
/// on `[0, Γ_n / μ(G_n))`.
pub(crate) fn kernel_from(model: &LimitModel, level: usize, x: &[f64], z: &[f64], u: f64) -> Result<KernelDraw> {
    let thr = threshold(model, level);
    let g = (model.rate)(z, x);
    if !(g <= thr * (1.0 + 1e-12)) {
        return Err(Error::RateBoundViolation {
            time: f64::NAN,
            rate: g,
            bound: thr,
        });
    }
    if u < g {
        let mut y = vec![0.0; x.len()];
        (model.amplitude)(z, x, &mut y);
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi += xi;
        }
        Ok(KernelDraw {
            y,
            mark: Some(z.to_vec()),
        })
    } else {
        Ok(KernelDraw {
            y: x.to_vec(),
            mark: None,
        })
    }
}

/// Proposal `(z, u)` for the big-jump kernel.
pub(crate) fn propose(model: &LimitModel, level: usize, rng: &mut SimRng) -> (Vec<f64>, f64) {
    let mut z = vec![0.0; model.dim_mark];
    model.measure.sample(LayerRange::Upto(level), rng, &mut z);
    let u = rng.random::<f64>() * threshold(model, level);
    (z, u)
}

/// Draw from the big-jump kernel
/// `Π^{[n]}(x, dy) = (1 - γ̄_n(x)/Γ_n) δ_x(dy) + Γ_n⁻¹ ∫_{G_n} 1{x + c(z,x) ∈ dy} γ(z,x) μ(dz)`.
pub fn sample_jump_kernel(model: &LimitModel, level: usize, x: &[f64], rng: &mut SimRng) -> Result<KernelDraw> {
    check_level(model, level)?;
    let (z, u) = propose(model, level, rng);
    kernel_from(model, level, x, &z, u)
}
