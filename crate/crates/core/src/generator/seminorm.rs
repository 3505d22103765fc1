//! Mark-integral seminorms of the limit coefficients and the regularity
//! constant of the inhomogeneous generator, combined into the bound on the
//! pseudotrajectory gap.
//!
//! Suprema over `x` are maxima over a grid; derivatives are central finite
//! differences. Everything here is an estimate, not a certified bound.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::nodes_at;
use crate::error::{Error, Result};
use crate::model::validate::{validate_limit, EvalGrid};
use crate::model::{InhomogeneousModel, LayerRange, LimitModel, QuadNodes, Regime};
use crate::util::fd;
use crate::util::linalg::norm;
use crate::util::stats::linear_fit;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeminormSettings {
    pub q: usize,
    pub p: usize,
    /// The unspecified constant `C` in `α_{q,p}(C, T)` and in the bound.
    pub constant: f64,
    /// Horizons `T` at which `Q_q(P, T)` is evaluated.
    pub horizons: Vec<f64>,
    /// Start times `t_0` for `C_{t_0}` and the bound.
    pub t0s: Vec<f64>,
    /// Times over which `sup_{t ≥ t_0}` is taken.
    pub times: Vec<f64>,
    /// Decay rate `r` of the inhomogeneity.
    pub r: f64,
    /// Truncation level `n` defining `G = G_n` for `α(G^c)`.
    pub level: usize,
    /// Integral estimates above this are flagged as divergent.
    pub divergence: f64,
}

impl Default for SeminormSettings {
    fn default() -> Self {
        SeminormSettings {
            q: 3,
            p: 12,
            constant: 1.0,
            horizons: vec![0.5, 1.0, 2.0, 4.0],
            t0s: vec![1.0, 2.0, 4.0, 8.0],
            times: vec![1.0, 2.0, 4.0, 8.0, 16.0],
            r: 0.5,
            level: 1,
            divergence: 1e12,
        }
    }
}

/// One named ingredient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub name: String,
    pub value: f64,
    pub divergent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub t0: f64,
    pub horizon: f64,
    /// `C e^{M_1 T} ∫_{t_0}^{t_0+T} e^{-rs} ds`.
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeminormReport {
    pub terms: Vec<Term>,
    /// `θ_{(q,p)}`.
    pub theta: f64,
    /// `α_p` at `p` and at `p·q`.
    pub alpha_p: f64,
    pub alpha_pq: f64,
    /// `[∇_x c]_p`.
    pub grad_c: f64,
    /// `Γ_q(γ)`.
    pub gamma_q: f64,
    /// `Σ_{0≤|β|≤q} [∂^β ln γ]_p`.
    pub log_rate: f64,
    /// `(T, α_{q,p}(C,T))`.
    pub alpha_qp: Vec<(f64, f64)>,
    /// `(T, Q_q(P,T))`.
    pub q_bound: Vec<(f64, f64)>,
    /// Fitted exponential growth rate of `Q_q` in `T`.
    pub m1: f64,
    /// `(t_0, C_{t_0})`, when an inhomogeneous model was given.
    pub c_t0: Vec<(f64, f64)>,
    pub c_mu: f64,
    pub alpha_gc: f64,
    pub bounds: Vec<BoundRow>,
}

impl SeminormReport {
    pub fn divergent(&self) -> Vec<&str> {
        self.terms
            .iter()
            .filter(|t| t.divergent)
            .map(|t| t.name.as_str())
            .collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["quantity", "value", "divergent"])?;
        for t in &self.terms {
            out.write_record([t.name.clone(), t.value.to_string(), t.divergent.to_string()])?;
        }
        for (t0, c) in &self.c_t0 {
            out.write_record([format!("C_t0[{t0}]"), c.to_string(), (!c.is_finite()).to_string()])?;
        }
        for (t, q) in &self.q_bound {
            out.write_record([format!("Q[{t}]"), q.to_string(), (!q.is_finite()).to_string()])?;
        }
        for b in &self.bounds {
            out.write_record([
                format!("bound[{},{}]", b.t0, b.horizon),
                b.value.to_string(),
                (!b.value.is_finite()).to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Non-decreasing coordinate lists of length `1..=q` (unordered
/// multi-indices).
fn multi_indices(d: usize, lo: usize, q: usize) -> Vec<Vec<usize>> {
    let mut all = Vec::new();
    let mut layer: Vec<Vec<usize>> = vec![vec![]];
    for order in 1..=q {
        layer = layer
            .into_iter()
            .flat_map(|a| {
                let start = a.last().copied().unwrap_or(0);
                (start..d).map(move |i| {
                    let mut b = a.clone();
                    b.push(i);
                    b
                })
            })
            .collect();
        if order >= lo {
            all.extend(layer.iter().cloned());
        }
    }
    all
}

/// `∂^α` of a vector field by nested central differences.
fn partial_vec(f: &dyn Fn(&[f64], &mut [f64]), x: &[f64], alpha: &[usize], rows: usize) -> Vec<f64> {
    let rel = fd::step_for_order(alpha.len());
    fn rec(f: &dyn Fn(&[f64], &mut [f64]), y: &mut Vec<f64>, alpha: &[usize], rows: usize, rel: f64) -> Vec<f64> {
        match alpha.split_first() {
            None => {
                let mut out = vec![0.0; rows];
                f(y, &mut out);
                out
            }
            Some((&i, rest)) => {
                let xi = y[i];
                let h = rel * xi.abs().max(1.0);
                y[i] = xi + h;
                let p = rec(f, y, rest, rows, rel);
                y[i] = xi - h;
                let m = rec(f, y, rest, rows, rel);
                y[i] = xi;
                p.iter().zip(m).map(|(a, b)| (a - b) / (2.0 * h)).collect()
            }
        }
    }
    rec(f, &mut x.to_vec(), alpha, rows, rel)
}

/// Values `|f(z_k, x)|` and `γ(z_k, x)` at one `x`, with `p`-norms.
struct MarkField {
    abs: Vec<f64>,
    gamma: Vec<f64>,
}

impl MarkField {
    /// `∫ |f|^p γ dμ`.
    fn moment(&self, nodes: &QuadNodes, p: f64) -> f64 {
        let vals: Vec<f64> = self
            .abs
            .iter()
            .zip(&self.gamma)
            .map(|(a, g)| if *g > 0.0 { a.powf(p) * g } else { 0.0 })
            .collect();
        nodes.integrate_values(&vals).value
    }
}

/// `[f]_p = sup_{1 ≤ p' ≤ p} sup_x (∫ |f|^{p'} γ dμ)^{1/p'}` from per-point
/// fields (integer `p'`).
fn bracket(fields: &[MarkField], nodes: &QuadNodes, p: usize) -> f64 {
    (1..=p)
        .map(|pp| {
            fields
                .iter()
                .map(|f| f.moment(nodes, pp as f64).powf(1.0 / pp as f64))
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

fn sup_norm_partials(f: &dyn Fn(&[f64], &mut [f64]), rows: usize, points: &[Vec<f64>], alphas: &[Vec<usize>]) -> f64 {
    alphas
        .iter()
        .map(|a| {
            points
                .iter()
                .map(|x| norm(&partial_vec(f, x, a, rows)))
                .fold(0.0, f64::max)
        })
        .sum()
}

/// Seminorms of `limit` on `grid`, and `C_{t_0}` of `model` when given.
pub fn seminorm_report(
    limit: &LimitModel,
    model: Option<&InhomogeneousModel>,
    grid: &EvalGrid,
    settings: &SeminormSettings,
) -> Result<SeminormReport> {
    let s = settings;
    if s.q == 0 || s.p == 0 || !(s.r > 0.0) || !(s.constant > 0.0) {
        return Err(Error::InvalidParameter(format!("bad seminorm settings {s:?}")));
    }
    let d = limit.dim_state;
    let points = grid.points();
    let nodes = nodes_at(limit.integration_measure(), &grid.quadrature);
    let n = nodes.len();
    let mut terms = Vec::new();
    let mut push = |name: String, value: f64| -> f64 {
        terms.push(Term {
            divergent: !(value.abs() <= s.divergence),
            name,
            value,
        });
        value
    };

    // coefficient norms
    let k = limit.noise_dim;
    let sigma = |x: &[f64], o: &mut [f64]| {
        if let Some(f) = &limit.diffusion {
            f(x, o)
        }
    };
    let drift = |x: &[f64], o: &mut [f64]| (limit.drift)(x, o);
    let high = multi_indices(d, 2, s.q);
    let first = multi_indices(d, 1, 1);
    let sigma_high = push("|sigma|_{2,q}".into(), sup_norm_partials(&sigma, d * k, &points, &high));
    let g_high = push("|g|_{2,q}".into(), sup_norm_partials(&drift, d, &points, &high));
    let jac_sup = |f: &dyn Fn(&[f64], &mut [f64]), rows: usize| {
        points
            .iter()
            .map(|x| {
                let parts: Vec<f64> = first.iter().flat_map(|a| partial_vec(f, x, a, rows)).collect();
                norm(&parts)
            })
            .fold(0.0, f64::max)
    };
    let grad_sigma = push("|grad sigma|".into(), jac_sup(&sigma, d * k));
    let grad_g = push("|grad g|".into(), jac_sup(&drift, d));

    // mark fields at each grid point
    let field = |x: &[f64], f: &dyn Fn(&[f64], &[f64]) -> f64| MarkField {
        abs: (0..n).map(|i| f(nodes.mark(i), x)).collect(),
        gamma: (0..n).map(|i| (limit.rate)(nodes.mark(i), x)).collect(),
    };
    let grad_c_fields: Vec<MarkField> = points
        .par_iter()
        .map(|x| {
            field(x, &|z, x| {
                let g = amplitude_in_x(limit, z);
                let parts: Vec<f64> = first.iter().flat_map(|a| partial_vec(&g, x, a, d)).collect();
                norm(&parts)
            })
        })
        .collect();
    let grad_c = push(format!("[grad c]_{}", s.p), bracket(&grad_c_fields, &nodes, s.p));
    let mut jump_high = 0.0;
    for a in &high {
        let fields: Vec<MarkField> = points
            .par_iter()
            .map(|x| field(x, &|z, x| norm(&partial_vec(&amplitude_in_x(limit, z), x, a, d))))
            .collect();
        jump_high += push(format!("[d{a:?} c]_{}", s.p), bracket(&fields, &nodes, s.p));
    }
    let theta = push(format!("theta_({},{})", s.q, s.p), 1.0 + sigma_high + g_high + jump_high);
    let alpha_of = |p: usize, fields: &[MarkField]| {
        let b = bracket(fields, &nodes, p);
        grad_sigma * grad_sigma + grad_g + b.powi(p as i32)
    };
    let alpha_p = push(format!("alpha_{}", s.p), alpha_of(s.p, &grad_c_fields));
    let alpha_pq = push(format!("alpha_{}", s.p * s.q), alpha_of(s.p * s.q, &grad_c_fields));

    // derivatives of ln γ
    let log_field = |a: &[usize]| -> Vec<MarkField> {
        points
            .par_iter()
            .map(|x| {
                field(x, &|z, x| {
                    if (limit.rate)(z, x) <= 0.0 {
                        0.0
                    } else if a.is_empty() {
                        (limit.rate)(z, x).ln().abs()
                    } else {
                        partial_vec(&log_rate_in_x(limit, z), x, a, 1)[0].abs()
                    }
                })
            })
            .collect()
    };
    let mut log_rate = 0.0;
    let mut gamma_parts = vec![0.0; points.len()];
    let mut orders: Vec<Vec<usize>> = vec![vec![]];
    orders.extend(multi_indices(d, 1, s.q));
    for a in &orders {
        let fields = log_field(a);
        log_rate += push(format!("[d{a:?} ln gamma]_{}", s.p), bracket(&fields, &nodes, s.p));
        if !a.is_empty() {
            for l in a.len()..=s.q {
                let pw = l as f64 / a.len() as f64;
                for (acc, f) in gamma_parts.iter_mut().zip(&fields) {
                    *acc += f.moment(&nodes, pw).powf(s.q as f64 / l as f64);
                }
            }
        }
    }
    let gamma_q = push(format!("Gamma_{}", s.q), gamma_parts.iter().copied().fold(0.0, f64::max));

    let harmonic: f64 = (1..=s.q).map(|n| 1.0 / n as f64).sum();
    let alpha_qp: Vec<(f64, f64)> = s
        .horizons
        .iter()
        .map(|&t| {
            let v = s.constant * theta.powi(s.q as i32) * (s.constant * t * s.q as f64 * harmonic * alpha_pq).exp();
            (t, v)
        })
        .collect();
    let outer = 1.0 + gamma_q + log_rate;
    let q_bound: Vec<(f64, f64)> = alpha_qp
        .iter()
        .map(|&(t, a)| (t, a.powi(2 * s.q as i32) * outer.powi(s.q as i32)))
        .collect();
    let m1 = if q_bound.len() >= 2 && q_bound.iter().all(|(_, q)| q.is_finite() && *q > 0.0) {
        let ts: Vec<f64> = q_bound.iter().map(|v| v.0).collect();
        let ls: Vec<f64> = q_bound.iter().map(|v| v.1.ln()).collect();
        linear_fit(&ts, &ls).slope
    } else {
        f64::INFINITY
    };
    let report = validate_limit(limit, grid, LayerRange::Upto(s.level));
    let c_mu = push("C_mu".into(), report.c_mu);
    let alpha_gc = push("alpha(G^c)".into(), report.alpha_tail);
    let divergent_q = terms
        .iter()
        .any(|t| t.divergent && t.name != "C_mu" && t.name != "alpha(G^c)");
    let m1 = if divergent_q { f64::INFINITY } else { m1 };

    let c_t0 = match model {
        Some(m) => regularity_constants(m, &points, grid, s)?,
        None => Vec::new(),
    };
    let mut bounds = Vec::new();
    for &t0 in &s.t0s {
        for &t in &s.horizons {
            let integral = ((-s.r * t0).exp() - (-s.r * (t0 + t)).exp()) / s.r;
            bounds.push(BoundRow {
                t0,
                horizon: t,
                value: s.constant * (m1 * t).exp() * integral,
            });
        }
    }
    Ok(SeminormReport {
        terms,
        theta,
        alpha_p,
        alpha_pq,
        grad_c,
        gamma_q,
        log_rate,
        alpha_qp,
        q_bound,
        m1,
        c_t0,
        c_mu,
        alpha_gc,
        bounds,
    })
}

fn amplitude_in_x<'a>(limit: &'a LimitModel, z: &'a [f64]) -> impl Fn(&[f64], &mut [f64]) + 'a {
    move |x, o| (limit.amplitude)(z, x, o)
}

fn log_rate_in_x<'a>(limit: &'a LimitModel, z: &'a [f64]) -> impl Fn(&[f64], &mut [f64]) + 'a {
    move |x, o| o[0] = (limit.rate)(z, x).ln()
}

/// `C_{t_0} = sup_{t ≥ t_0} sup_x ∫ (Φ_1 + Φ_2) dμ_t` over grid times.
fn regularity_constants(
    model: &InhomogeneousModel,
    points: &[Vec<f64>],
    grid: &EvalGrid,
    s: &SeminormSettings,
) -> Result<Vec<(f64, f64)>> {
    let classify = model.regimes.as_ref().ok_or(Error::MissingClassifier)?;
    let d = model.dim_state;
    let per_time: Vec<f64> = s
        .times
        .par_iter()
        .map(|&t| {
            let m = model.measure.at(t);
            let nodes = nodes_at(&m, &grid.quadrature);
            let mut worst = 0.0f64;
            for x in points {
                let mut c = vec![0.0; d];
                let mut jac = vec![0.0; d * d];
                let mut grad = vec![0.0; d];
                let total = nodes.integrate(|z| {
                    let g = (model.rate)(t, z, x);
                    (model.amplitude)(t, z, x, &mut c);
                    let amp = |y: &[f64], o: &mut [f64]| (model.amplitude)(t, z, y, o);
                    fd::jacobian(&amp, x, d, fd::STEP, &mut jac);
                    fd::gradient(&|y| (model.rate)(t, z, y), x, &mut grad);
                    let (nc, nj, ng) = (norm(&c), norm(&jac), norm(&grad));
                    match classify(t, z) {
                        Regime::Fast => ng * nc * nc + (nj * nj + nc * nc) * g,
                        _ => ng * nc + (nj * nc + nj) * g,
                    }
                });
                worst = worst.max(total.value);
            }
            worst
        })
        .collect();
    Ok(s
        .t0s
        .iter()
        .map(|&t0| {
            let v = s
                .times
                .iter()
                .zip(&per_time)
                .filter(|(t, _)| **t >= t0)
                .map(|(_, v)| *v)
                .fold(0.0, f64::max);
            (t0, v)
        })
        .collect())
}
