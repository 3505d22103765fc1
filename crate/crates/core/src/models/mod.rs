//! The two worked examples: a CIR-type jump process with shrinking
//! inhomogeneity, and a mean-field Hawkes system with variable-length
//! memory.

pub mod cir;
pub mod hawkes;
pub mod rate;

pub use cir::{make_cir_models, CirParams, LimitVariance};
pub use hawkes::{make_hawkes_limit, make_hawkes_schedule, make_hawkes_system, HawkesParams, Reset};
pub use rate::RateFunction;
