use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("layer {layer}: mass must be positive and finite, got {mass}")]
    NonPositiveMass { layer: usize, mass: f64 },
    #[error("rate bounds must be strictly increasing: layer {layer} has {next} after {prev}")]
    RateBoundsNotIncreasing { layer: usize, prev: f64, next: f64 },
    #[error("layer {layer}: declared mass {declared} but Monte Carlo mass is {estimated} (s.e. {se})")]
    MassMismatch {
        layer: usize,
        declared: f64,
        estimated: f64,
        se: f64,
    },
    #[error("layer {layer}: sampler produced a mark outside the declared set")]
    SamplerOutsideSet { layer: usize },
    #[error("state left the safety box at t = {time}")]
    Explosion { time: f64 },
    #[error("jump rate {rate} exceeds the declared bound {bound} at t = {time}")]
    RateBoundViolation { time: f64, rate: f64, bound: f64 },
    #[error("mark {0:?} lies outside the truncation set")]
    MarkOutsideSet(Vec<f64>),
    #[error("amplitude Jacobian is rank deficient at (z0, x0): |det| = {det}")]
    RankDeficient { det: f64 },
    #[error("no positive minorization constant found down to eta = {eta}")]
    NoPositiveBeta { eta: f64 },
    #[error("certificate inconsistent with kernel: residual acceptance probability {prob}")]
    CertificateInconsistency { prob: f64 },
    #[error("no coupling time observed in {samples} samples")]
    NoCoupling { samples: usize },
    #[error("sample too small: {n} < {min}")]
    SampleTooSmall { n: usize, min: usize },
    #[error("model has no regime classifier")]
    MissingClassifier,
    #[error("quadrature standard error {se} above threshold {threshold}")]
    QuadratureVariance { se: f64, threshold: f64 },
    #[error("reference law failed the stationarity self-test (p = {p_value})")]
    NonStationaryReference { p_value: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
