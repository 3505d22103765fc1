use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kernel::{check_level, kernel_from, propose};
use super::minorization::{DensityProbe, MinorizationCertificate};
use crate::error::{Error, Result};
use crate::model::LimitModel;
use crate::rng::SimRng;

/// Which line of the split kernel produced a pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// Both in `C`, `u <= β`: common draw from `ν`.
    Regenerate,
    /// Both in `C`, `u > β`: each from its residual kernel.
    Residual,
    /// Otherwise: both from `Π` with shared noise.
    Synchronous,
}

/// Streams used by one split-kernel draw. `shared` drives the common
/// proposal and the regeneration draw; `own` continues rejection sampling
/// per component. Two `own` streams in the same state make equal inputs
/// give equal outputs.
pub struct SplitRngs<'a> {
    pub shared: &'a mut SimRng,
    pub own: [&'a mut SimRng; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitDraw {
    pub y: [Vec<f64>; 2],
    pub branch: Branch,
    /// Whether each component jumped (always true under regeneration).
    pub jumped: [bool; 2],
}

/// Cap on residual proposals per component; each proposal is accepted with
/// probability at least `1 - β`, so this is never reached in practice.
const MAX_RESIDUAL_TRIES: usize = 1_000_000;

/// Split kernel `Q((x, x'), u; ·)`. Averaging over `u ~ U[0, 1]` gives
/// `Π^{[n]}` in each component.
pub fn sample_split_kernel(
    cert: &MinorizationCertificate,
    model: &LimitModel,
    x: [&[f64]; 2],
    u: f64,
    rngs: SplitRngs<'_>,
) -> Result<SplitDraw> {
    let level = cert.level;
    check_level(model, level)?;
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::InvalidParameter(format!("color u = {u} outside [0, 1]")));
    }
    let SplitRngs { shared, own } = rngs;
    let both_in_c = cert.in_small_set(x[0]) && cert.in_small_set(x[1]);
    if !both_in_c {
        let (z, v) = propose(model, level, shared);
        let a = kernel_from(model, level, x[0], &z, v)?;
        let b = kernel_from(model, level, x[1], &z, v)?;
        return Ok(SplitDraw {
            jumped: [a.mark.is_some(), b.mark.is_some()],
            y: [a.y, b.y],
            branch: Branch::Synchronous,
        });
    }
    if u <= cert.beta {
        let mut y = vec![0.0; model.dim_state];
        cert.sample_nu(shared, &mut y);
        return Ok(SplitDraw {
            y: [y.clone(), y],
            branch: Branch::Regenerate,
            jumped: [true, true],
        });
    }

    let probe = DensityProbe::new(model, level, cert.mark_ball.clone(), 9);
    let nu = cert.beta * cert.nu_density();
    let accept_prob = |x: &[f64], draw: &super::kernel::KernelDraw| -> Result<f64> {
        let Some(z) = &draw.mark else { return Ok(1.0) };
        if !cert.regeneration.contains_closed(&draw.y) || !probe.in_mark_ball(z) {
            return Ok(1.0);
        }
        let p = probe.density_at_mark(x, z);
        let a = 1.0 - nu / p;
        if !(a >= -1e-9) {
            return Err(Error::CertificateInconsistency { prob: a });
        }
        Ok(a.clamp(0.0, 1.0))
    };

    let (z, v) = propose(model, level, shared);
    let w: f64 = shared.random();
    let mut out: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut jumped = [false; 2];
    for (k, rng) in own.into_iter().enumerate() {
        let mut draw = kernel_from(model, level, x[k], &z, v)?;
        let mut accept = w < accept_prob(x[k], &draw)?;
        let mut tries = 1;
        while !accept {
            if tries >= MAX_RESIDUAL_TRIES {
                return Err(Error::CertificateInconsistency { prob: 0.0 });
            }
            let (z, v) = propose(model, level, rng);
            draw = kernel_from(model, level, x[k], &z, v)?;
            accept = rng.random::<f64>() < accept_prob(x[k], &draw)?;
            tries += 1;
        }
        jumped[k] = draw.mark.is_some();
        out[k] = draw.y;
    }
    Ok(SplitDraw {
        y: out,
        branch: Branch::Residual,
        jumped,
    })
}
