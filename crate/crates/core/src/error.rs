use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid transition table: {0}")]
    InvalidTransition(String),

    #[error("invalid source: {0}")]
    InvalidSource(String),

    #[error("chain is not irreducible: {closed_classes} closed communicating classes")]
    NotIrreducible { closed_classes: usize },

    #[error("chain is not aperiodic (period {period})")]
    NotAperiodic { period: usize },

    #[error("horizon too large: {size} words exceeds the enumeration cap {cap}")]
    HorizonTooLarge { size: u128, cap: usize },

    #[error("alphabet too large: {size} exceeds the enumeration cap {cap}")]
    AlphabetTooLarge { size: u128, cap: usize },

    #[error("enumeration cap exceeded: {0}")]
    CapExceeded(String),

    #[error("conditioning prefix has zero probability")]
    ZeroProbabilityPrefix,

    #[error("residual distribution has entry {value:e} below zero")]
    NegativeResidual { value: f64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid distortion measure: {0}")]
    InvalidDistortion(String),

    #[error("distortion level {0} is not achievable")]
    DInfeasible(f64),

    #[error("zero distortion is ambiguous: d(x,y) = 0 for some x != y")]
    ZeroDistortionAmbiguous,

    #[error("alternating minimization did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("infeasible parameters: {0}")]
    InfeasibleParameters(String),

    #[error("bad interval: need 0 < a <= a' and K >= 0 (got K={k}, a={a}, a'={a_prime})")]
    BadInterval { k: f64, a: f64, a_prime: f64 },

    #[error("flag lambda {flags} does not match the source's psi(tau) = {source_psi}")]
    InconsistentLambda { flags: f64, source_psi: f64 },

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
