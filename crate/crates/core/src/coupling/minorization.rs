use serde::{Deserialize, Serialize};

use super::kernel::check_level;
use crate::error::{Error, Result};
use crate::model::{BallSet, LayerRange, LimitModel};
use crate::rng::SimRng;
use crate::util::fd;
use crate::util::linalg::{determinant, norm, solve};

/// Starting point of the certificate search: small set `C = B(x0, eta)`
/// and mark ball `{|z - z0| <= mark_radius}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinorizationSeeds {
    pub x0: Vec<f64>,
    pub z0: Vec<f64>,
    pub eta: f64,
    pub mark_radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinorizationSettings {
    /// Grid points per coordinate on `C` and on the image ball.
    pub grid_points: usize,
    /// Grid points per coordinate on the mark ball.
    pub mark_points: usize,
    /// Grid points per coordinate for the post-hoc verification.
    pub verify_points: usize,
    /// `β = safety · β_raw`.
    pub safety: f64,
    pub min_eta: f64,
    pub det_tol: f64,
}

impl Default for MinorizationSettings {
    fn default() -> Self {
        MinorizationSettings {
            grid_points: 17,
            mark_points: 33,
            verify_points: 65,
            safety: 0.9,
            min_eta: 1e-3,
            det_tol: 1e-10,
        }
    }
}

/// `Π^{[n]}(x, ·) >= β ν` for every `x` in the small set, with `ν` uniform
/// on the regeneration ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinorizationCertificate {
    pub level: usize,
    /// `C`.
    pub small_set: BallSet,
    pub beta: f64,
    /// Volume of `B` times the grid minimum of the kernel density.
    pub beta_raw: f64,
    /// `B`, the support of `ν`.
    pub regeneration: BallSet,
    pub mark_ball: BallSet,
    /// Grid minimum of the kernel density over `C × B`.
    pub grid_min_density: f64,
    /// `Γ_n`.
    pub rate_bound: f64,
    /// How often `eta` was halved before `β > 0`.
    pub halvings: usize,
}

impl MinorizationCertificate {
    /// Density of `ν` on `B`.
    pub fn nu_density(&self) -> f64 {
        1.0 / self.regeneration.volume()
    }

    pub fn sample_nu(&self, rng: &mut SimRng, out: &mut [f64]) {
        self.regeneration.sample(rng, out);
    }

    pub fn in_small_set(&self, x: &[f64]) -> bool {
        self.small_set.contains(x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateCheck {
    pub points: usize,
    pub violations: usize,
    /// Smallest `p(x, y) / (β · dν/dy)` over the verification grid.
    pub min_ratio: f64,
}

/// Points of the closed ball on a cube grid with `k` points per coordinate
/// (the center and the axis endpoints are always included for odd `k`).
pub(crate) fn ball_grid(ball: &BallSet, k: usize) -> Vec<Vec<f64>> {
    let d = ball.dim();
    let k = k.max(2);
    let total = k.pow(d as u32);
    let mut out = Vec::new();
    for mut idx in 0..total {
        let mut p = vec![0.0; d];
        for (i, v) in p.iter_mut().enumerate() {
            let j = idx % k;
            idx /= k;
            *v = ball.center[i] + ball.radius * (2.0 * j as f64 / (k - 1) as f64 - 1.0);
        }
        if ball.dist(&p) <= ball.radius * (1.0 + 1e-12) {
            out.push(p);
        }
    }
    out
}

fn directions(d: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..d {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; d];
            e[i] = s;
            out.push(e);
        }
    }
    if d > 1 {
        let scale = 1.0 / (d as f64).sqrt();
        for mask in 0..(1usize << d) {
            out.push((0..d).map(|i| if mask >> i & 1 == 1 { scale } else { -scale }).collect());
        }
    }
    out
}

/// Kernel-density machinery shared by estimation, verification and the
/// residual sampler.
pub(crate) struct DensityProbe<'a> {
    model: &'a LimitModel,
    level: usize,
    mark_ball: BallSet,
    gamma_n: f64,
    marks: Vec<Vec<f64>>,
}

impl<'a> DensityProbe<'a> {
    pub(crate) fn new(model: &'a LimitModel, level: usize, mark_ball: BallSet, mark_points: usize) -> Self {
        let marks = ball_grid(&mark_ball, mark_points);
        DensityProbe {
            model,
            level,
            gamma_n: model.measure.rate_bound(level),
            mark_ball,
            marks,
        }
    }

    fn amplitude(&self, z: &[f64], x: &[f64]) -> Vec<f64> {
        self.model.amplitude_at(z, x)
    }

    fn jacobian_det(&self, z: &[f64], x: &[f64]) -> f64 {
        let d = x.len();
        let mut j = vec![0.0; d * d];
        fd::jacobian(&|z, out| (self.model.amplitude)(z, x, out), z, d, fd::STEP, &mut j);
        determinant(&j, d)
    }

    /// `h(z)`, looking just inside the mark ball when `z` sits on a layer
    /// boundary (a null set for `μ`).
    fn h(&self, z: &[f64]) -> Option<f64> {
        let measure = &self.model.measure;
        let range = LayerRange::Upto(self.level);
        let layer = measure.locate(z, range).or_else(|| {
            let shrunk: Vec<f64> = z
                .iter()
                .zip(&self.mark_ball.center)
                .map(|(v, c)| c + (1.0 - 1e-9) * (v - c))
                .collect();
            measure.locate(&shrunk, range)
        })?;
        measure.layer(layer).density_at(z)
    }

    /// `γ(z,x) h(z) / (|det ∇_z c(z,x)| Γ_n)`: the density at
    /// `x + c(z, x)` of the part of `Π(x, ·)` coming from marks near `z`.
    pub(crate) fn density_at_mark(&self, x: &[f64], z: &[f64]) -> f64 {
        let det = self.jacobian_det(z, x).abs();
        if det == 0.0 {
            return 0.0;
        }
        let h = self.h(z).unwrap_or(0.0);
        (self.model.rate)(z, x) * h / (det * self.gamma_n)
    }

    pub(crate) fn in_mark_ball(&self, z: &[f64]) -> bool {
        self.mark_ball.dist(z) <= self.mark_ball.radius * (1.0 + 1e-12)
    }

    /// A mark `z` in the mark ball with `c(z, x) = w`, by damped Newton
    /// from the closest grid mark.
    pub(crate) fn preimage(&self, x: &[f64], w: &[f64]) -> Option<Vec<f64>> {
        let d = x.len();
        let resid = |z: &[f64]| -> Vec<f64> {
            self.amplitude(z, x).iter().zip(w).map(|(c, w)| c - w).collect()
        };
        let mut z = self
            .marks
            .iter()
            .min_by(|a, b| norm(&resid(a)).total_cmp(&norm(&resid(b))))?
            .clone();
        let tol = 1e-11 * (1.0 + norm(w));
        let mut r = resid(&z);
        let mut rn = norm(&r);
        for _ in 0..60 {
            if rn <= tol {
                break;
            }
            let mut j = vec![0.0; d * d];
            fd::jacobian(&|z, out| (self.model.amplitude)(z, x, out), &z, d, fd::STEP, &mut j);
            let step = solve(&j, &r, d)?;
            let mut lambda = 1.0;
            let mut improved = false;
            for _ in 0..30 {
                let trial: Vec<f64> = z.iter().zip(&step).map(|(a, s)| a - lambda * s).collect();
                let tr = resid(&trial);
                let tn = norm(&tr);
                if tn < rn {
                    z = trial;
                    r = tr;
                    rn = tn;
                    improved = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !improved {
                break;
            }
        }
        (rn <= tol.max(1e-9 * (1.0 + norm(w))) && self.in_mark_ball(&z)).then_some(z)
    }

    /// Kernel density at `y` restricted to marks of the ball, or `None` if
    /// `y - x` has no preimage there.
    pub(crate) fn density(&self, x: &[f64], y: &[f64]) -> Option<f64> {
        let w: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
        let z = self.preimage(x, &w)?;
        Some(self.density_at_mark(x, &z))
    }
}

/// Largest `s` with `center + s u` reachable from every grid point of `C`.
fn inscribed_radius(probe: &DensityProbe, c_grid: &[Vec<f64>], center: &[f64], dirs: &[Vec<f64>], span: f64) -> f64 {
    let reachable = |x: &[f64], y: &[f64]| {
        let w: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
        probe.preimage(x, &w).is_some()
    };
    let mut rho = f64::INFINITY;
    for x in c_grid {
        if !reachable(x, center) {
            return 0.0;
        }
        for u in dirs {
            let at = |s: f64| -> Vec<f64> { center.iter().zip(u).map(|(c, u)| c + s * u).collect() };
            let (mut lo, mut hi) = (0.0, span.min(rho));
            if reachable(x, &at(hi)) {
                rho = rho.min(hi);
                continue;
            }
            for _ in 0..45 {
                let mid = 0.5 * (lo + hi);
                if reachable(x, &at(mid)) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            rho = rho.min(lo);
            if rho == 0.0 {
                return 0.0;
            }
        }
    }
    rho
}

fn min_density(probe: &DensityProbe, c_grid: &[Vec<f64>], b_grid: &[Vec<f64>]) -> f64 {
    let mut m = f64::INFINITY;
    for x in c_grid {
        for y in b_grid {
            match probe.density(x, y) {
                Some(p) => m = m.min(p),
                None => return 0.0,
            }
        }
    }
    m
}

/// Search for a local Doeblin bound `Π^{[n]}(x, ·) >= β ν` on a ball around
/// `x0`, with `ν` uniform on a ball inside the image of the mark ball.
///
/// `η` starts at `seeds.eta` and is halved until `β > 0`.
pub fn estimate_minorization(
    model: &LimitModel,
    level: usize,
    seeds: &MinorizationSeeds,
    settings: &MinorizationSettings,
) -> Result<MinorizationCertificate> {
    check_level(model, level)?;
    let d = model.dim_state;
    if model.dim_mark != d {
        return Err(Error::Unsupported(format!(
            "certificates need as many mark as state coordinates (m = {}, d = {d})",
            model.dim_mark
        )));
    }
    if seeds.x0.len() != d || seeds.z0.len() != d {
        return Err(Error::Dimension("seed points must match the state dimension".into()));
    }
    if !(settings.safety > 0.0 && settings.safety <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "safety factor must lie in (0, 1], got {}",
            settings.safety
        )));
    }
    let mark_ball = BallSet::new(seeds.z0.clone(), seeds.mark_radius)?;
    let probe = DensityProbe::new(model, level, mark_ball.clone(), settings.mark_points);
    for z in &probe.marks {
        if probe.h(z).is_none() {
            return Err(Error::InvalidParameter(format!(
                "mark ball must lie in G_{level} where mu has a density; fails at z = {z:?}"
            )));
        }
    }
    let det = probe.jacobian_det(&seeds.z0, &seeds.x0);
    if !(det.abs() > settings.det_tol) {
        return Err(Error::RankDeficient { det });
    }

    let images: Vec<Vec<f64>> = probe
        .marks
        .iter()
        .map(|z| {
            let c = probe.amplitude(z, &seeds.x0);
            seeds.x0.iter().zip(c).map(|(a, b)| a + b).collect()
        })
        .collect();
    let stride = (images.len() / 64).max(1);
    let candidates: Vec<&Vec<f64>> = images.iter().step_by(stride).collect();
    let dirs = directions(d);

    let mut eta = seeds.eta;
    let mut halvings = 0;
    while eta >= settings.min_eta {
        let small_set = BallSet::new(seeds.x0.clone(), eta)?;
        let c_grid = ball_grid(&small_set, settings.grid_points);
        let span = images
            .iter()
            .flat_map(|a| images.iter().map(move |b| a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)))
            .fold(0.0, f64::max)
            + 2.0 * eta;
        let mut best: Option<(f64, BallSet, f64)> = None;
        for center in &candidates {
            let rho = inscribed_radius(&probe, &c_grid, center, &dirs, span);
            if !(rho > 0.0) {
                continue;
            }
            for frac in [1.0, 0.75, 0.5, 0.25] {
                let ball = BallSet::new(center.to_vec(), rho * frac)?;
                let b_grid = ball_grid(&ball, settings.grid_points);
                let m = min_density(&probe, &c_grid, &b_grid);
                let beta_raw = ball.volume() * m;
                if beta_raw > best.as_ref().map_or(0.0, |b| b.0) {
                    best = Some((beta_raw, ball, m));
                }
            }
        }
        if let Some((beta_raw, regeneration, grid_min_density)) = best {
            let beta_raw = beta_raw.min(1.0);
            return Ok(MinorizationCertificate {
                level,
                small_set,
                beta: settings.safety * beta_raw,
                beta_raw,
                regeneration,
                mark_ball,
                grid_min_density,
                rate_bound: model.measure.rate_bound(level),
                halvings,
            });
        }
        eta *= 0.5;
        halvings += 1;
    }
    Err(Error::NoPositiveBeta { eta })
}

/// Re-check `p(x, y) >= β / vol(B)` on a grid finer than the one used for
/// estimation.
pub fn verify_certificate(
    model: &LimitModel,
    cert: &MinorizationCertificate,
    settings: &MinorizationSettings,
) -> CertificateCheck {
    let probe = DensityProbe::new(model, cert.level, cert.mark_ball.clone(), settings.mark_points);
    let c_grid = ball_grid(&cert.small_set, settings.verify_points);
    let b_grid = ball_grid(&cert.regeneration, settings.verify_points);
    let need = cert.beta * cert.nu_density();
    let mut violations = 0;
    let mut min_ratio = f64::INFINITY;
    for x in &c_grid {
        for y in &b_grid {
            let p = probe.density(x, y).unwrap_or(0.0);
            let ratio = p / need;
            min_ratio = min_ratio.min(ratio);
            if ratio < 1.0 {
                violations += 1;
            }
        }
    }
    CertificateCheck {
        points: c_grid.len() * b_grid.len(),
        violations,
        min_ratio,
    }
}
