use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LayerRange, LimitModel};
use crate::simulate::DEFAULT_GUARD;

/// Cameron–Martin control given by a piecewise-constant derivative:
/// `ḣ(u) = rates[j]` for `breaks[j] ≤ u < breaks[j+1]` (the last piece
/// extends to infinity). Each `rates[j]` has one entry per Brownian column.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub breaks: Vec<f64>,
    pub rates: Vec<Vec<f64>>,
}

impl Control {
    pub fn zero() -> Self {
        Control::default()
    }

    pub fn constant(rate: Vec<f64>) -> Self {
        Control {
            breaks: vec![0.0],
            rates: vec![rate],
        }
    }

    fn rate_at(&self, u: f64) -> Option<&[f64]> {
        let j = self.breaks.partition_point(|&b| b <= u);
        if j == 0 {
            None
        } else {
            Some(&self.rates[j - 1])
        }
    }

    fn check(&self, k: usize) -> Result<()> {
        if self.breaks.len() != self.rates.len()
            || self.rates.iter().any(|r| r.len() != k || r.iter().any(|v| !v.is_finite()))
            || self.breaks.windows(2).any(|w| !(w[0] < w[1]))
        {
            return Err(Error::InvalidParameter(
                "control table must have increasing breaks and finite rates of the noise dimension".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlSkeletonInput {
    /// `0 < t_1 < … < t_n < 1`.
    pub times: Vec<f64>,
    pub marks: Vec<Vec<f64>>,
    /// `h_1, …, h_n` (one control when `n = 0`).
    pub controls: Vec<Control>,
}

fn field(model: &LimitModel, h: &Control, u: f64, x: &[f64], sigma: &mut [f64], out: &mut [f64]) {
    (model.drift)(x, out);
    let k = model.noise_dim;
    if let (Some(s), Some(rate)) = (&model.diffusion, h.rate_at(u)) {
        s(x, sigma);
        for i in 0..x.len() {
            for l in 0..k {
                out[i] += sigma[i * k + l] * rate[l];
            }
        }
    }
}

/// `φ' = g(φ) + Σ_l σ_l(φ) ḣ^l`, integrated by RK4 with step `dt` over
/// local time `[0, duration]`. Returns `(u, φ(u))` on the step grid.
pub fn skeleton_flow(model: &LimitModel, x: &[f64], h: &Control, duration: f64, dt: f64) -> Result<Vec<(f64, Vec<f64>)>> {
    h.check(model.noise_dim)?;
    if !(dt > 0.0) || !(duration >= 0.0) {
        return Err(Error::InvalidParameter("flow needs dt > 0 and duration >= 0".into()));
    }
    let d = x.len();
    let mut sigma = vec![0.0; d * model.noise_dim];
    let mut k = [vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]];
    let mut tmp = vec![0.0; d];
    let mut y = x.to_vec();
    let mut u = 0.0;
    let mut out = vec![(0.0, y.clone())];
    let steps = (duration / dt).ceil() as usize;
    for i in 0..steps {
        let hstep = (duration - u).min(dt);
        let end = if i + 1 == steps { duration } else { u + hstep };
        let hstep = end - u;
        field(model, h, u, &y, &mut sigma, &mut k[0]);
        for j in 0..d {
            tmp[j] = y[j] + 0.5 * hstep * k[0][j];
        }
        field(model, h, u + 0.5 * hstep, &tmp, &mut sigma, &mut k[1]);
        for j in 0..d {
            tmp[j] = y[j] + 0.5 * hstep * k[1][j];
        }
        field(model, h, u + 0.5 * hstep, &tmp, &mut sigma, &mut k[2]);
        for j in 0..d {
            tmp[j] = y[j] + hstep * k[2][j];
        }
        field(model, h, end, &tmp, &mut sigma, &mut k[3]);
        for j in 0..d {
            y[j] += hstep / 6.0 * (k[0][j] + 2.0 * k[1][j] + 2.0 * k[2][j] + k[3][j]);
        }
        u = end;
        if y.iter().any(|v| !(v.abs() <= DEFAULT_GUARD)) {
            return Err(Error::Explosion { time: u });
        }
        out.push((u, y.clone()));
    }
    Ok(out)
}

/// Terminal value `x_1(x, t, z, h)` of the skeleton: flows between the
/// prescribed jump times, jumps `x ↦ x + c(z_k, x)` at `t_k`.
pub fn skeleton_path(model: &LimitModel, x: &[f64], input: &ControlSkeletonInput, g: LayerRange, dt: f64) -> Result<Vec<f64>> {
    let n = input.times.len();
    if input.marks.len() != n || input.controls.len() != n.max(1) {
        return Err(Error::Dimension(format!(
            "{n} jump times need {n} marks and {} controls",
            n.max(1)
        )));
    }
    if input.times.iter().any(|t| !(*t > 0.0 && *t < 1.0)) || input.times.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter("jump times must increase inside (0, 1)".into()));
    }
    for z in &input.marks {
        if model.measure.locate(z, g).is_none() {
            return Err(Error::MarkOutsideSet(z.clone()));
        }
    }
    let flow_end = |y: &[f64], h: &Control, dur: f64| -> Result<Vec<f64>> {
        Ok(skeleton_flow(model, y, h, dur, dt)?.pop().unwrap().1)
    };
    let first = input.times.first().copied().unwrap_or(1.0);
    let mut y = flow_end(x, &input.controls[0], first)?;
    for k in 0..n {
        let c = model.amplitude_at(&input.marks[k], &y);
        for (yi, ci) in y.iter_mut().zip(c) {
            *yi += ci;
        }
        let next = input.times.get(k + 1).copied().unwrap_or(1.0);
        y = flow_end(&y, &input.controls[k], next - input.times[k])?;
    }
    Ok(y)
}
