//! Regeneration coupling of two copies of the limit process.
//!
//! Big jumps (marks in `G_n`) arrive on a shared Poisson clock of rate
//! `Γ_n`. When both chains sit in the small set `C` at a tick, a common
//! color `U` decides between a joint draw from `ν` (the chains meet) and
//! independent draws from the residual kernels; outside `C × C` both chains
//! jump with shared noise.

mod control;
mod coupled;
mod exit;
mod kernel;
mod minorization;
mod moments;
mod split;

pub use control::{control_probability, ControlConfig, ControlEstimate, ControlPoint};
pub use coupled::{coupled_batch, coupled_simulate, BigJump, CouplingConfig, CouplingMode, CouplingResult};
pub use exit::{exit_time_threshold, ExitConfig, ExitReport, ExitRow, ExitWatch};
pub use kernel::{sample_jump_kernel, KernelDraw};
pub use minorization::{
    estimate_minorization, verify_certificate, CertificateCheck, MinorizationCertificate,
    MinorizationSeeds, MinorizationSettings,
};
pub use moments::{coupling_time_moments, CouplingMoments, MomentRow};
pub use split::{sample_split_kernel, Branch, SplitDraw, SplitRngs};
