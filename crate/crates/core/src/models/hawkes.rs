use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::rate::RateFunction;
use crate::error::{Error, Result};
use crate::model::{
    InhomogeneousModel, Layer, LayeredMeasure, LimitModel, MarkSet, MeasureSchedule, Regime,
};

/// Where `X¹` lands after its own process fires.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Reset {
    #[default]
    Zero,
    /// `X¹ ↦ ε (z - 1)` with `z` uniform on `(1, 2]`.
    Random { eps: f64 },
}

/// Mean-field Hawkes system with exponential memory `h(t) = c e^{-αt}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HawkesParams {
    /// Number of processes `N`.
    pub n: usize,
    pub alpha: f64,
    pub b: f64,
    pub c: f64,
    pub f1: RateFunction,
    pub f2: RateFunction,
    pub reset: Reset,
}

impl Default for HawkesParams {
    fn default() -> Self {
        HawkesParams {
            n: 100,
            alpha: 1.0,
            b: 1.0,
            c: 1.0,
            f1: RateFunction::logistic(1.0, 0.0),
            f2: RateFunction::logistic(1.0, 0.0),
            reset: Reset::Zero,
        }
    }
}

impl HawkesParams {
    fn check_common(&self) -> Result<()> {
        if !(self.b > 0.0 && self.c > 0.0 && self.b.is_finite() && self.c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "Hawkes constants b, c must be positive, got b = {}, c = {}",
                self.b, self.c
            )));
        }
        self.f1.validate()?;
        self.f2.validate()?;
        if let Reset::Random { eps } = self.reset {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "reset spread must be positive, got {eps}"
                )));
            }
        }
        Ok(())
    }

    fn check_alpha(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "alpha = {} must be positive: the X² flow has an equilibrium only for alpha > 0",
                self.alpha
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParameter(format!(
                "the Hawkes system needs N >= 2, got {}",
                self.n
            )));
        }
        self.check_alpha()?;
        self.check_common()
    }

    /// Fixed point of `-αx - c f₂(x) + b = 0` by bisection.
    pub fn equilibrium_x2(&self) -> f64 {
        let h = |x: f64| -self.alpha * x - self.c * self.f2.value(x) + self.b;
        let (mut lo, mut hi) = ((self.b - self.c * self.f2.sup()) / self.alpha - 1.0, self.b / self.alpha + 1.0);
        while h(lo) < 0.0 {
            lo -= 1.0 + lo.abs();
        }
        while h(hi) > 0.0 {
            hi += 1.0 + hi.abs();
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

fn reset_amplitude(reset: Reset, z: f64, x1: f64) -> f64 {
    match reset {
        Reset::Zero => -x1,
        Reset::Random { eps } => -x1 + eps * (z - 1.0),
    }
}

/// Summary chain `(X¹, X²)` of the system as a function of `N - 1`, which
/// may depend on time.
fn system_model(
    params: &HawkesParams,
    name: String,
    n_minus_one: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    measure: MeasureSchedule,
    rate_bound: f64,
) -> InhomogeneousModel {
    let (pd, pa, pr) = (params.clone(), params.clone(), params.clone());
    let (ka, kr) = (n_minus_one.clone(), n_minus_one);
    InhomogeneousModel {
        name,
        dim_state: 2,
        dim_mark: 1,
        drift: Arc::new(move |_, x, out| {
            out[0] = -pd.alpha * x[0];
            out[1] = -pd.alpha * x[1] + pd.b;
        }),
        amplitude: Arc::new(move |t, z, x, out| {
            if z[0] > 0.0 && z[0] <= 1.0 {
                let k = ka(t);
                out[0] = 1.0 / k;
                out[1] = -pa.c / k;
            } else if z[0] > 1.0 && z[0] <= 2.0 {
                out[0] = reset_amplitude(pa.reset, z[0], x[0]);
                out[1] = 0.0;
            } else {
                out[0] = 0.0;
                out[1] = 0.0;
            }
        }),
        rate: Arc::new(move |t, z, x| {
            if z[0] > 0.0 && z[0] <= 1.0 {
                kr(t) * pr.f2.value(x[1])
            } else if z[0] > 1.0 && z[0] <= 2.0 {
                pr.f1.value(x[0])
            } else {
                0.0
            }
        }),
        rate_bound,
        measure,
        regimes: Some(Arc::new(|_, z| {
            if z[0] <= 1.0 {
                Regime::Intermediate
            } else {
                Regime::Slow
            }
        })),
    }
}

fn system_layers(params: &HawkesParams, n_minus_one: f64) -> Vec<Layer> {
    vec![
        Layer::lebesgue(MarkSet::interval(0.0, 1.0)).with_rate_cap(n_minus_one * params.f2.sup()),
        Layer::lebesgue(MarkSet::interval(1.0, 2.0)).with_rate_cap(params.f1.sup()),
    ]
}

fn system_bound(params: &HawkesParams, n_minus_one: f64) -> f64 {
    (n_minus_one * params.f2.sup()).max(params.f1.sup())
}

/// The `N`-particle system reduced to its two-dimensional summary chain.
/// Thinning proposes at total rate `(N-1) sup f₂ + sup f₁`.
pub fn make_hawkes_system(params: &HawkesParams) -> Result<InhomogeneousModel> {
    params.validate()?;
    let k = (params.n - 1) as f64;
    let gamma = system_bound(params, k);
    let measure = LayeredMeasure::new(system_layers(params, k), gamma)?;
    Ok(system_model(
        params,
        format!("hawkes-system-{}", params.n),
        Arc::new(move |_| k),
        MeasureSchedule::Static(Arc::new(measure)),
        gamma,
    ))
}

/// The system with a particle count growing in time, `N(t) = 1 + e^{rt}`,
/// so the mean-field jumps shrink like `e^{-rt}`. The rate bound holds up to
/// `t_max`.
pub fn make_hawkes_schedule(params: &HawkesParams, r: f64, t_max: f64) -> Result<InhomogeneousModel> {
    params.check_alpha()?;
    params.check_common()?;
    if !(r > 0.0 && t_max > 0.0 && (r * t_max).is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "schedule needs r > 0 and t_max > 0, got r = {r}, t_max = {t_max}"
        )));
    }
    let gamma = system_bound(params, (r * t_max).exp());
    let p = params.clone();
    Ok(system_model(
        params,
        format!("hawkes-schedule-{r}"),
        Arc::new(move |t| (r * t).exp()),
        MeasureSchedule::Varying(Arc::new(move |t| {
            // beyond t_max the mean-field cap would exceed the bound
            let k = (r * t.min(t_max)).exp();
            LayeredMeasure::new(system_layers(&p, k), gamma).expect("caps within the bound")
        })),
        gamma,
    ))
}

/// The PDMP limit as `N → ∞`.
pub fn make_hawkes_limit(params: &HawkesParams) -> Result<LimitModel> {
    params.check_alpha()?;
    params.check_common()?;
    let gamma = params.f1.sup();
    let measure = LayeredMeasure::new(vec![Layer::lebesgue(MarkSet::interval(1.0, 2.0))], gamma)?;
    let (pd, pa, pr) = (params.clone(), params.clone(), params.clone());
    Ok(LimitModel {
        name: "hawkes-limit".into(),
        dim_state: 2,
        dim_mark: 1,
        noise_dim: 0,
        drift: Arc::new(move |x, out| {
            let f2 = pd.f2.value(x[1]);
            out[0] = -pd.alpha * x[0] + f2;
            out[1] = -pd.alpha * x[1] - pd.c * f2 + pd.b;
        }),
        diffusion: None,
        amplitude: Arc::new(move |z, x, out| {
            out[0] = if z[0] > 1.0 && z[0] <= 2.0 {
                reset_amplitude(pa.reset, z[0], x[0])
            } else {
                0.0
            };
            out[1] = 0.0;
        }),
        rate: Arc::new(move |z, x| {
            if z[0] > 1.0 && z[0] <= 2.0 {
                pr.f1.value(x[0])
            } else {
                0.0
            }
        }),
        rate_bound: gamma,
        measure: Arc::new(measure),
        tail: None,
        integration: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_checks() {
        let p = HawkesParams {
            n: 1,
            ..HawkesParams::default()
        };
        assert!(make_hawkes_system(&p).is_err());
        let p = HawkesParams {
            alpha: 0.0,
            ..HawkesParams::default()
        };
        let err = make_hawkes_limit(&p).unwrap_err().to_string();
        assert!(err.contains("equilibrium"), "{err}");
    }

    #[test]
    fn equilibrium_root() {
        let p = HawkesParams::default();
        let x = p.equilibrium_x2();
        assert!((-p.alpha * x - p.c * p.f2.value(x) + p.b).abs() < 1e-12);
    }
}
