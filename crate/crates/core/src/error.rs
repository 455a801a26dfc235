use thiserror::Error;

/// Errors produced across the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid moduli-set parameter k = {0}: k must lie in [2, {max}]", max = crate::rns::MAX_K)]
    InvalidK(u32),

    #[error("value {value} is outside the signed RNS range [-{psi}, {psi}]")]
    OutOfRange { value: i64, psi: i64 },

    #[error("residue {residue} is not valid for modulus {modulus}")]
    InvalidResidue { residue: u64, modulus: u64 },

    #[error("expected {expected} residues, got {got}")]
    ResidueCount { expected: usize, got: usize },

    #[error("non-finite input value {0}")]
    NonFinite(f64),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error(
        "RNS range too small for BFP(b_m = {b_m}, g = {g}) with k = {k}: need log2(M) >= 2(b_m+1) + log2(g) - 1 = {required:.3}, have {available:.3} (smallest valid k is {min_k})"
    )]
    RangeBudget {
        b_m: u32,
        g: usize,
        k: u32,
        required: f64,
        available: f64,
        min_k: u32,
    },

    #[error("{0}")]
    Dataflow(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("schema violation: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
