//! Grid checks of the standing assumptions (report only, never errors).

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::model::measure::{LayerRange, LayeredMeasure};
use crate::model::quadrature::{QuadNodes, Quadrature};
use crate::model::{InhomogeneousModel, LimitModel};
use crate::util::linalg::symmetric_eigen;

/// Tensor grid over a declared box, plus the times and mark rule used for
/// time-dependent quantities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalGrid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
    #[serde(default)]
    pub quadrature: Quadrature,
}

fn default_points() -> usize {
    33
}

fn default_times() -> Vec<f64> {
    vec![0.0]
}

impl EvalGrid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        EvalGrid {
            lo,
            hi,
            points: default_points(),
            times: default_times(),
            quadrature: Quadrature::default(),
        }
    }

    pub fn with_points(mut self, points: usize) -> Self {
        self.points = points;
        self
    }

    pub fn with_times(mut self, times: Vec<f64>) -> Self {
        self.times = times;
        self
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn axis(&self, k: usize) -> Vec<f64> {
        let n = self.points.max(1);
        if n == 1 {
            return vec![0.5 * (self.lo[k] + self.hi[k])];
        }
        (0..n)
            .map(|i| self.lo[k] + (self.hi[k] - self.lo[k]) * i as f64 / (n - 1) as f64)
            .collect()
    }

    /// All grid points, first coordinate varying fastest.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        let axes: Vec<_> = (0..d).map(|k| self.axis(k)).collect();
        let total = self.points.max(1).pow(d as u32);
        (0..total)
            .map(|mut idx| {
                (0..d)
                    .map(|k| {
                        let j = idx % axes[k].len();
                        idx /= axes[k].len();
                        axes[k][j]
                    })
                    .collect()
            })
            .collect()
    }

    /// Pairs of grid neighbours `(i, j)` along each axis.
    fn neighbours(&self) -> Vec<(usize, usize)> {
        let d = self.dim();
        let n = self.points.max(1);
        let total = n.pow(d as u32);
        let mut out = Vec::new();
        for idx in 0..total {
            let mut stride = 1;
            let mut rest = idx;
            for _ in 0..d {
                if rest % n + 1 < n {
                    out.push((idx, idx + stride));
                }
                rest /= n;
                stride *= n;
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub lipschitz_drift: f64,
    pub lipschitz_diffusion: f64,
    /// `sup_z L_c(z)`.
    pub lipschitz_amplitude: f64,
    /// `sup_z L_γ(z)`.
    pub lipschitz_rate: f64,
    pub sup_rate: f64,
    /// `sup_x ∫ (L_c γ + L_γ |c|) dμ`.
    pub c_mu: f64,
    /// `sup_x ∫_{G^c} |c| γ dμ`, including the undeclared tail.
    pub alpha_tail: f64,
    /// `sup_x ∫_{layer} |c| γ dμ` per declared layer.
    pub layer_abs_moments: Vec<f64>,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

type DriftAt<'a> = dyn Fn(f64, &[f64], &mut [f64]) + 'a;
type AmpAt<'a> = dyn Fn(f64, &[f64], &[f64], &mut [f64]) + 'a;
type RateAt<'a> = dyn Fn(f64, &[f64], &[f64]) -> f64 + 'a;

struct View<'a> {
    d: usize,
    drift: &'a DriftAt<'a>,
    sigma: Option<(usize, &'a (dyn Fn(&[f64], &mut [f64]) + 'a))>,
    amplitude: &'a AmpAt<'a>,
    rate: &'a RateAt<'a>,
    bound: f64,
    measure: &'a (dyn Fn(f64) -> Cow<'a, LayeredMeasure> + 'a),
    tail_abs: Option<&'a (dyn Fn(&[f64]) -> f64 + 'a)>,
    /// Finer measure for `C_μ` when the simulated layers omit a tail.
    integration: Option<&'a LayeredMeasure>,
}

fn lipschitz(values: &[Vec<f64>], points: &[Vec<f64>], pairs: &[(usize, usize)]) -> f64 {
    let mut l: f64 = 0.0;
    for &(i, j) in pairs {
        let dx = dist(&points[i], &points[j]);
        if dx > 0.0 {
            l = l.max(dist(&values[i], &values[j]) / dx);
        }
    }
    l
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

struct Scan {
    sup_rate: f64,
    rate_violation: Option<String>,
    cap_violation: Option<String>,
    lip_c: f64,
    lip_g: f64,
    finite: bool,
}

struct Terms {
    cmu: Vec<f64>,
    layer: Vec<Vec<f64>>,
}

impl Default for Scan {
    fn default() -> Self {
        Scan {
            sup_rate: 0.0,
            rate_violation: None,
            cap_violation: None,
            lip_c: 0.0,
            lip_g: 0.0,
            finite: true,
        }
    }
}

impl Scan {
    fn integrate(
        &mut self,
        view: &View,
        grid: &EvalGrid,
        measure: &LayeredMeasure,
        t: f64,
        points: &[Vec<f64>],
        pairs: &[(usize, usize)],
    ) -> Terms {
        let d = view.d;
        let nodes = QuadNodes::build(measure, LayerRange::All, &grid.quadrature);
        let mut terms = Terms {
            cmu: vec![0.0; points.len()],
            layer: vec![vec![0.0; points.len()]; measure.len()],
        };
        let mut cz = vec![vec![0.0; d]; points.len()];
        let mut gz = vec![vec![0.0; 1]; points.len()];
        for k in 0..nodes.len() {
            let z = nodes.mark(k);
            let layer = nodes.layer[k];
            let cap = measure.layer_cap(layer);
            for (p, x) in points.iter().enumerate() {
                (view.amplitude)(t, z, x, &mut cz[p]);
                let r = (view.rate)(t, z, x);
                gz[p][0] = r;
                if !r.is_finite() || cz[p].iter().any(|v| !v.is_finite()) {
                    self.finite = false;
                }
                self.sup_rate = self.sup_rate.max(r);
                if r > view.bound * (1.0 + 1e-12) && self.rate_violation.is_none() {
                    self.rate_violation = Some(format!(
                        "gamma = {r} > {} at t = {t}, z = {z:?}, x = {x:?}",
                        view.bound
                    ));
                }
                if r > cap * (1.0 + 1e-12) && self.cap_violation.is_none() {
                    self.cap_violation = Some(format!(
                        "gamma = {r} above layer {} cap {cap} at t = {t}, z = {z:?}, x = {x:?}",
                        layer + 1
                    ));
                }
            }
            let lc = lipschitz(&cz, points, pairs);
            let lg = lipschitz(&gz, points, pairs);
            self.lip_c = self.lip_c.max(lc);
            self.lip_g = self.lip_g.max(lg);
            let w = nodes.w[k];
            for p in 0..points.len() {
                let abs_c = cz[p].iter().map(|v| v * v).sum::<f64>().sqrt();
                terms.cmu[p] += w * (lc * gz[p][0] + lg * abs_c);
                terms.layer[layer][p] += w * abs_c * gz[p][0];
            }
        }
        terms
    }
}

fn run(view: &View, grid: &EvalGrid, g: LayerRange) -> ValidationReport {
    let d = view.d;
    let points = grid.points();
    let pairs = grid.neighbours();
    let mut checks = Vec::new();

    let mut lip_b: f64 = 0.0;
    for &t in &grid.times {
        let vals: Vec<Vec<f64>> = points
            .iter()
            .map(|x| {
                let mut o = vec![0.0; d];
                (view.drift)(t, x, &mut o);
                o
            })
            .collect();
        lip_b = lip_b.max(lipschitz(&vals, &points, &pairs));
    }

    let mut lip_s = 0.0;
    if let Some((k, sigma)) = view.sigma {
        let vals: Vec<Vec<f64>> = points
            .iter()
            .map(|x| {
                let mut o = vec![0.0; d * k];
                sigma(x, &mut o);
                o
            })
            .collect();
        lip_s = lipschitz(&vals, &points, &pairs);
        let mut worst: Option<(f64, &Vec<f64>)> = None;
        for (x, s) in points.iter().zip(&vals) {
            let mut a = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..d {
                    a[i * d + j] = (0..k).map(|l| s[i * k + l] * s[j * k + l]).sum();
                }
            }
            let (w, _) = symmetric_eigen(&a, d);
            let scale = w.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let min = w.iter().cloned().fold(f64::INFINITY, f64::min);
            if min < -1e-12 * scale && worst.is_none_or(|(m, _)| min < m) {
                worst = Some((min, x));
            }
        }
        checks.push(match worst {
            None => Check {
                name: "psd".into(),
                passed: true,
                detail: "a(x) positive semidefinite at every grid point".into(),
            },
            Some((m, x)) => Check {
                name: "psd".into(),
                passed: false,
                detail: format!("a(x) has eigenvalue {m} at x = {x:?}"),
            },
        });
    }

    let mut scan = Scan::default();
    let mut c_mu: f64 = 0.0;
    let mut alpha: f64 = 0.0;
    let mut layer_moments: Vec<f64> = Vec::new();

    for &t in &grid.times {
        let measure = (view.measure)(t);
        let (glo, ghi) = g.bounds(measure.len());
        if layer_moments.len() < measure.len() {
            layer_moments.resize(measure.len(), 0.0);
        }
        let terms = scan.integrate(view, grid, &measure, t, &points, &pairs);
        let cmu_terms = match view.integration {
            Some(m) => scan.integrate(view, grid, m, t, &points, &pairs).cmu,
            None => terms.cmu.clone(),
        };
        for (p, x) in points.iter().enumerate() {
            let tail = view.tail_abs.map_or(0.0, |f| f(x));
            let outside: f64 = (0..measure.len())
                .filter(|&i| i < glo || i >= ghi)
                .map(|i| terms.layer[i][p])
                .sum();
            c_mu = c_mu.max(cmu_terms[p]);
            alpha = alpha.max(outside + tail);
        }
        for (i, v) in terms.layer.iter().enumerate() {
            layer_moments[i] = layer_moments[i].max(v.iter().cloned().fold(0.0, f64::max));
        }
    }
    let Scan {
        sup_rate,
        rate_violation,
        cap_violation,
        lip_c,
        lip_g,
        finite,
    } = scan;

    checks.push(Check {
        name: "rate_bound".into(),
        passed: rate_violation.is_none(),
        detail: rate_violation.unwrap_or_else(|| format!("sup gamma = {sup_rate} <= {}", view.bound)),
    });
    checks.push(Check {
        name: "rate_caps".into(),
        passed: cap_violation.is_none(),
        detail: cap_violation.unwrap_or_else(|| "layer caps respected".into()),
    });
    let lip_finite = [lip_b, lip_s, lip_c, lip_g].iter().all(|v| v.is_finite()) && finite;
    checks.push(Check {
        name: "lipschitz".into(),
        passed: lip_finite,
        detail: format!("L_b = {lip_b}, L_sigma = {lip_s}, L_c = {lip_c}, L_gamma = {lip_g}"),
    });
    let moments_finite = layer_moments.iter().all(|v| v.is_finite()) && alpha.is_finite();
    checks.push(Check {
        name: "layer_moments".into(),
        passed: moments_finite,
        detail: format!("sup_x int_layer |c| gamma = {layer_moments:?}"),
    });

    ValidationReport {
        lipschitz_drift: lip_b,
        lipschitz_diffusion: lip_s,
        lipschitz_amplitude: lip_c,
        lipschitz_rate: lip_g,
        sup_rate,
        c_mu,
        alpha_tail: alpha,
        layer_abs_moments: layer_moments,
        checks,
    }
}

/// Checks for a limit model; `g` selects the retained set `G` for
/// `α(G^c)`.
pub fn validate_limit(model: &LimitModel, grid: &EvalGrid, g: LayerRange) -> ValidationReport {
    let drift = |_: f64, x: &[f64], o: &mut [f64]| (model.drift)(x, o);
    let amp = |_: f64, z: &[f64], x: &[f64], o: &mut [f64]| (model.amplitude)(z, x, o);
    let rate = |_: f64, z: &[f64], x: &[f64]| (model.rate)(z, x);
    let measure = |_: f64| Cow::Borrowed(model.measure.as_ref());
    let tail = model.tail.as_ref().map(|t| t.abs_moment.clone());
    let tail_fn = tail.as_ref().map(|f| move |x: &[f64]| f(x));
    let sigma = model.diffusion.as_ref();
    let sigma_fn = sigma.map(|s| move |x: &[f64], o: &mut [f64]| s(x, o));
    let view = View {
        d: model.dim_state,
        drift: &drift,
        sigma: sigma_fn
            .as_ref()
            .map(|f| (model.noise_dim, f as &dyn Fn(&[f64], &mut [f64]))),
        amplitude: &amp,
        rate: &rate,
        bound: model.rate_bound,
        measure: &measure,
        tail_abs: tail_fn.as_ref().map(|f| f as &dyn Fn(&[f64]) -> f64),
        integration: model.integration.as_deref(),
    };
    let mut report = run(&view, grid, g);
    report.checks.push(Check {
        name: "shape".into(),
        passed: model.check_shape().is_ok(),
        detail: model
            .check_shape()
            .err()
            .map_or("dimensions consistent".into(), |e| e.to_string()),
    });
    report
}

/// Checks for an inhomogeneous model over `grid.times`.
pub fn validate_inhomogeneous(model: &InhomogeneousModel, grid: &EvalGrid) -> ValidationReport {
    let measure = |t: f64| model.measure.at(t);
    let view = View {
        d: model.dim_state,
        drift: model.drift.as_ref(),
        sigma: None,
        amplitude: model.amplitude.as_ref(),
        rate: model.rate.as_ref(),
        bound: model.rate_bound,
        measure: &measure,
        tail_abs: None,
        integration: None,
    };
    let mut report = run(&view, grid, LayerRange::All);
    if let Some(classify) = &model.regimes {
        // each sampled (t, z) must receive one class, and the same one twice
        let mut ok = true;
        for &t in &grid.times {
            let m = model.measure.at(t);
            let nodes = QuadNodes::build(&m, LayerRange::All, &grid.quadrature);
            for k in 0..nodes.len() {
                ok &= classify(t, nodes.mark(k)) == classify(t, nodes.mark(k));
            }
        }
        report.checks.push(Check {
            name: "partition".into(),
            passed: ok,
            detail: "every sampled mark maps to exactly one regime".into(),
        });
    }
    report
}
