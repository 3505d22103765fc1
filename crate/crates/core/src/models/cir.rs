use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::rate::RateFunction;
use crate::error::{Error, Result};
use crate::model::{
    InhomogeneousModel, Layer, LayeredMeasure, LimitModel, MarkSet, MeasureSchedule, Regime,
    Tail,
};

/// Which diffusion coefficient the limit model carries.
///
/// Integrating `c²γ` over the centered band gives `σ² f(x) / 2`; the
/// closed form usually quoted for this example is `σ² f(x)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitVariance {
    /// `a(x) = σ² f(x) / 2`, matching the band integral.
    #[default]
    BandIntegral,
    /// `a(x) = σ² f(x)`.
    AsStated,
}

impl LimitVariance {
    pub fn factor(self) -> f64 {
        match self {
            LimitVariance::BandIntegral => 0.5,
            LimitVariance::AsStated => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CirParams {
    pub sigma: f64,
    pub d: f64,
    pub a: f64,
    pub b: f64,
    /// Decay rate of the inhomogeneity.
    pub r: f64,
    pub rate: RateFunction,
    /// Right ends `M_1 < M_2 < ...` of the slow-jump layers `(M_{k-1}, M_k]`
    /// of the limit model.
    pub cuts: Vec<f64>,
    pub variance: LimitVariance,
}

impl Default for CirParams {
    fn default() -> Self {
        CirParams {
            sigma: 1.0,
            d: 1.0,
            a: 1.0,
            b: 1.0,
            r: 0.5,
            rate: RateFunction::logistic(1.0, 1.0),
            cuts: vec![1.0, 10.0, 100.0, 1000.0],
            variance: LimitVariance::BandIntegral,
        }
    }
}

/// Right end of the integration measure's last layer, standing in for
/// `+∞`. The slow-jump integrand decays like `z⁻²`, so the omitted mass is
/// of order `1e-30`.
pub const FAR_CUT: f64 = 1e30;

impl CirParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.sigma, self.d, self.a, self.b, self.r]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.a <= 0.0 || self.b <= 0.0 || self.r <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "CIR needs finite sigma, d and positive a, b, r; got {self:?}"
            )));
        }
        self.rate.validate()?;
        if self.cuts.is_empty()
            || self.cuts[0] <= 0.0
            || self.cuts.windows(2).any(|w| w[1] <= w[0])
            || *self.cuts.last().unwrap() >= FAR_CUT
        {
            return Err(Error::InvalidParameter(format!(
                "slow-band cuts must be positive and strictly increasing, got {:?}",
                self.cuts
            )));
        }
        Ok(())
    }

    /// Stationary mean `(b + d ∫ f(x)(1+z)⁻² dz) / a` when `f` is constant.
    pub fn stationary_mean_constant_rate(&self, f: f64) -> f64 {
        (self.b + self.d * f) / self.a
    }

    /// `Γ = max(sup f, 1)`.
    pub fn rate_bound(&self) -> f64 {
        self.rate.sup().max(1.0)
    }

    fn band(&self, t: f64) -> f64 {
        (2.0 * self.r * t).exp()
    }
}

/// Band index of `z` at time `t`: 0, 1 for the two halves of the centered
/// band, 2 for the drift band, 3 for the slow band.
fn band_of(e: f64, z: f64) -> Option<usize> {
    if z <= -3.0 * e || z > e {
        None
    } else if z <= -2.0 * e {
        Some(0)
    } else if z <= -e {
        Some(1)
    } else if z <= 0.0 {
        Some(2)
    } else {
        Some(3)
    }
}

fn cir_measure(p: &CirParams, t: f64) -> LayeredMeasure {
    let e = p.band(t);
    let gamma = p.rate_bound();
    let sup_f = p.rate.sup();
    // Marks are proposed from the bands at the end of a step and rated at
    // the current time; a mark of the drift band may then still sit in the
    // centered band, so that layer is capped by the global bound.
    LayeredMeasure::new(
        vec![
            Layer::lebesgue(MarkSet::interval(-3.0 * e, -e)).with_rate_cap(sup_f),
            Layer::lebesgue(MarkSet::interval(-e, 0.0)).with_rate_cap(gamma),
            Layer::lebesgue(MarkSet::interval(0.0, e)).with_rate_cap(sup_f),
        ],
        gamma,
    )
    .expect("CIR bands have positive mass")
}

/// The time-inhomogeneous CIR-type model and its limit.
pub fn make_cir_models(params: &CirParams) -> Result<(InhomogeneousModel, LimitModel)> {
    params.validate()?;
    Ok((cir_inhomogeneous(params), cir_limit(params)?))
}

fn cir_inhomogeneous(params: &CirParams) -> InhomogeneousModel {
    let p = params.clone();
    let (pa, pr, pb) = (p.clone(), p.clone(), p.clone());
    let pm = p.clone();
    InhomogeneousModel {
        name: "cir".into(),
        dim_state: 1,
        dim_mark: 1,
        drift: Arc::new(move |_, _, out| out[0] = pb.b),
        amplitude: Arc::new(move |t, z, x, out| {
            let e = pa.band(t);
            out[0] = match band_of(e, z[0]) {
                Some(0) => 0.5 * pa.sigma * (-pa.r * t).exp(),
                Some(1) => -0.5 * pa.sigma * (-pa.r * t).exp(),
                Some(2) => -pa.a * x[0] / e,
                Some(_) => pa.d / ((1.0 + z[0]) * (1.0 + z[0])),
                None => 0.0,
            };
        }),
        rate: Arc::new(move |t, z, x| match band_of(pr.band(t), z[0]) {
            Some(0 | 1 | 3) => pr.rate.value(x[0]),
            Some(_) => 1.0,
            None => 0.0,
        }),
        rate_bound: p.rate_bound(),
        measure: MeasureSchedule::Varying(Arc::new(move |t| cir_measure(&pm, t))),
        regimes: Some(Arc::new(move |t, z| {
            let e = p.band(t);
            if z[0] <= -e {
                Regime::Fast
            } else if z[0] <= 0.0 {
                Regime::Intermediate
            } else {
                Regime::Slow
            }
        })),
    }
}

fn slow_layers(cuts: &[f64], cap: f64) -> Vec<Layer> {
    let mut lo = 0.0;
    cuts.iter()
        .map(|&hi| {
            let l = Layer::lebesgue(MarkSet::interval(lo, hi)).with_rate_cap(cap);
            lo = hi;
            l
        })
        .collect()
}

fn cir_limit(p: &CirParams) -> Result<LimitModel> {
    let gamma = p.rate.sup();
    let measure = LayeredMeasure::new(slow_layers(&p.cuts, gamma), gamma)?;
    let mut far = p.cuts.clone();
    far.push(FAR_CUT);
    let integration = LayeredMeasure::new(slow_layers(&far, gamma), gamma)?;
    let m = *p.cuts.last().unwrap();
    let tail_weight = p.d / (1.0 + m);
    let (pg, ps, pc, pr, pt, pa) = (
        p.clone(),
        p.clone(),
        p.clone(),
        p.clone(),
        p.clone(),
        p.clone(),
    );
    let var = p.variance.factor();
    Ok(LimitModel {
        name: "cir-limit".into(),
        dim_state: 1,
        dim_mark: 1,
        noise_dim: 1,
        drift: Arc::new(move |x, out| out[0] = pg.b - pg.a * x[0]),
        diffusion: Some(Arc::new(move |x, out| {
            out[0] = ps.sigma * (var * ps.rate.value(x[0])).sqrt()
        })),
        amplitude: Arc::new(move |z, _, out| {
            out[0] = if z[0] > 0.0 {
                pc.d / ((1.0 + z[0]) * (1.0 + z[0]))
            } else {
                0.0
            }
        }),
        rate: Arc::new(move |z, x| if z[0] > 0.0 { pr.rate.value(x[0]) } else { 0.0 }),
        rate_bound: gamma,
        measure: Arc::new(measure),
        tail: Some(Tail {
            drift: Arc::new(move |x, out| out[0] = pt.rate.value(x[0]) * tail_weight),
            abs_moment: Arc::new(move |x| pa.rate.value(x[0]) * tail_weight.abs()),
        }),
        integration: Some(Arc::new(integration)),
    })
}
