use serde::{Deserialize, Serialize};

use super::{limit_nodes, nodes_at, GeneratorRule};
use crate::error::{Error, Result};
use crate::model::{Estimate, InhomogeneousModel, LayerRange, LimitModel, QuadNodes, Regime};
use crate::util::linalg::norm;

/// Mark integrals split by jump regime at one `(t, x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeFunctionals {
    pub t: f64,
    pub x: Vec<f64>,
    /// `a(t,x) = ∫_{E¹} c cᵀ γ dμ`, row-major `d × d`.
    pub a: Vec<f64>,
    /// `∫_{E¹} c γ dμ`; vanishes for centered fast jumps.
    pub fast_mean: Vec<Estimate>,
    /// `b̃(t,x) = ∫_{E²} c γ dμ`.
    pub b_tilde: Vec<Estimate>,
    /// `∫_{E¹} |c|³ γ dμ`.
    pub third_moment: Estimate,
    /// `∫_{E²} |c|² γ dμ`.
    pub second_moment_mid: Estimate,
    /// `b(t,x)`.
    pub drift: Vec<f64>,
    /// Diffusion matrix of the limit, when one was given.
    pub a_limit: Option<Vec<f64>>,
    /// Distance between the slow jumps and the limit jumps, when a limit
    /// was given.
    pub slow_gap: Option<Estimate>,
    /// Sum of the four gap terms at this `t` (no supremum over later
    /// times), when a limit was given.
    pub eps: Option<f64>,
}

impl RegimeFunctionals {
    /// Frobenius distance `|a(t,x) - a(x)|`.
    pub fn variance_gap(&self) -> Option<f64> {
        self.a_limit.as_ref().map(|l| {
            self.a
                .iter()
                .zip(l)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
    }

    /// `|b(t,x) + b̃(t,x) - g(x)|` given `g(x)`.
    pub fn drift_gap(&self, g: &[f64]) -> f64 {
        let v: Vec<f64> = self
            .drift
            .iter()
            .zip(&self.b_tilde)
            .zip(g)
            .map(|((b, bt), g)| b + bt.value - g)
            .collect();
        norm(&v)
    }
}

/// Regime integrals of `model` at `(t, x)`; with a limit model, also the
/// slow-jump gap and the instantaneous value of `ε`.
pub fn regime_functionals(
    model: &InhomogeneousModel,
    limit: Option<&LimitModel>,
    t: f64,
    x: &[f64],
    rule: &GeneratorRule,
) -> Result<RegimeFunctionals> {
    let measure = model.measure.at(t);
    let nodes = nodes_at(&measure, &rule.quadrature);
    let limit_nodes = limit.map(|l| limit_nodes(l, &rule.quadrature));
    regime_functionals_with(model, limit, &nodes, limit_nodes.as_ref(), t, x, rule)
}

pub(crate) fn regime_functionals_with(
    model: &InhomogeneousModel,
    limit: Option<&LimitModel>,
    nodes: &QuadNodes,
    lnodes: Option<&QuadNodes>,
    t: f64,
    x: &[f64],
    rule: &GeneratorRule,
) -> Result<RegimeFunctionals> {
    let classify = model.regimes.as_ref().ok_or(Error::MissingClassifier)?;
    let d = model.dim_state;
    if x.len() != d {
        return Err(Error::Dimension(format!("state has length {}, model {d}", x.len())));
    }
    let n = nodes.len();
    let mut regime = Vec::with_capacity(n);
    let mut gam = Vec::with_capacity(n);
    let mut amp = vec![0.0; n * d];
    for k in 0..n {
        let z = nodes.mark(k);
        regime.push(classify(t, z));
        let g = (model.rate)(t, z, x);
        gam.push(g);
        if g != 0.0 {
            (model.amplitude)(t, z, x, &mut amp[k * d..(k + 1) * d]);
        }
    }
    let c = |k: usize| &amp[k * d..(k + 1) * d];
    let integrate = |want: Regime, f: &dyn Fn(usize) -> f64| -> Estimate {
        let vals: Vec<f64> = (0..n)
            .map(|k| if regime[k] == want && gam[k] != 0.0 { f(k) } else { 0.0 })
            .collect();
        nodes.integrate_values(&vals)
    };
    let mut a = vec![0.0; d * d];
    for i in 0..d {
        for j in i..d {
            let v = integrate(Regime::Fast, &|k| c(k)[i] * c(k)[j] * gam[k]).value;
            a[i * d + j] = v;
            a[j * d + i] = v;
        }
    }
    let fast_mean = (0..d)
        .map(|i| rule.accept(integrate(Regime::Fast, &|k| c(k)[i] * gam[k])))
        .collect::<Result<Vec<_>>>()?;
    let b_tilde = (0..d)
        .map(|i| rule.accept(integrate(Regime::Intermediate, &|k| c(k)[i] * gam[k])))
        .collect::<Result<Vec<_>>>()?;
    let third_moment = rule.accept(integrate(Regime::Fast, &|k| norm(c(k)).powi(3) * gam[k]))?;
    let second_moment_mid =
        rule.accept(integrate(Regime::Intermediate, &|k| norm(c(k)).powi(2) * gam[k]))?;
    let mut drift = vec![0.0; d];
    (model.drift)(t, x, &mut drift);

    let mut out = RegimeFunctionals {
        t,
        x: x.to_vec(),
        a,
        fast_mean,
        b_tilde,
        third_moment,
        second_moment_mid,
        drift,
        a_limit: None,
        slow_gap: None,
        eps: None,
    };
    if let (Some(limit), Some(lnodes)) = (limit, lnodes) {
        let support = limit.integration_measure();
        let mut cl = vec![0.0; d];
        // limit jumps not reproduced inside the slow band
        let total = lnodes.integrate(|z| {
            let g = (limit.rate)(z, x);
            if g == 0.0 {
                return 0.0;
            }
            (limit.amplitude)(z, x, &mut cl);
            norm(&cl) * g
        });
        let inside: Vec<f64> = (0..n)
            .map(|k| {
                let z = nodes.mark(k);
                if regime[k] != Regime::Slow || support.locate(z, LayerRange::All).is_none() {
                    return 0.0;
                }
                let g = (limit.rate)(z, x);
                if g == 0.0 {
                    return 0.0;
                }
                (limit.amplitude)(z, x, &mut cl);
                norm(&cl) * g
            })
            .collect();
        let inside = nodes.integrate_values(&inside);
        // |c_t γ_t - c γ| ≤ |c_t| |γ_t - γ| + γ |c_t - c| on the slow band
        let mismatch: Vec<f64> = (0..n)
            .map(|k| {
                if regime[k] != Regime::Slow {
                    return 0.0;
                }
                let z = nodes.mark(k);
                let (gl, cl) = if support.locate(z, LayerRange::All).is_some() {
                    let mut v = vec![0.0; d];
                    (limit.amplitude)(z, x, &mut v);
                    ((limit.rate)(z, x), v)
                } else {
                    (0.0, vec![0.0; d])
                };
                let diff: Vec<f64> = c(k).iter().zip(&cl).map(|(a, b)| a - b).collect();
                let ct = if gam[k] != 0.0 { norm(c(k)) } else { 0.0 };
                ct * (gam[k] - gl).abs() + gl * norm(&diff)
            })
            .collect();
        let mismatch = nodes.integrate_values(&mismatch);
        let gap = Estimate {
            value: (total.value - inside.value).max(0.0) + mismatch.value,
            se: (total.se.powi(2) + inside.se.powi(2) + mismatch.se.powi(2)).sqrt(),
        };
        out.slow_gap = Some(rule.accept(gap)?);
        out.a_limit = Some(limit.diffusion_matrix(x));
        let g = limit.drift_at(x);
        out.eps = Some(
            out.third_moment.value
                + out.second_moment_mid.value
                + out.variance_gap().unwrap_or(0.0)
                + out.drift_gap(&g)
                + gap.value,
        );
    }
    Ok(out)
}
