//! Error taxonomy shared by the whole crate.
//!
//! Everything here is a *domain* error: a mathematically meaningful rejection
//! of the inputs or an internal self-check failure. I/O and format errors are
//! the caller's business (the CLI maps them to a separate exit code).

use crate::core::Violation;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("scalar field mismatch: {0}")]
    FieldMismatch(String),

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(ViolationList),

    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("subset enumeration cap exceeded: m = {m} > cap = {cap}")]
    EnumerationCap { m: usize, cap: usize },

    #[error("combinatorial budget exceeded: estimated {estimate} scalar operations > limit {limit}")]
    BudgetExceeded { estimate: u128, limit: u128 },

    #[error("equal shift pair at coordinate {index}")]
    EqualShiftPair { index: usize },

    #[error("collinear shift triple at coordinate {index} (margin {margin})")]
    CollinearTriple { index: usize, margin: f64 },

    #[error("block matrix is singular at the configured rank tolerance")]
    SingularBlock,

    #[error("ensemble does not match the required structured pattern: {0}")]
    PatternMismatch(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("sparsity level out of range: s = {s} must satisfy 1 <= s <= d-1 with d = {d}")]
    SparsityRange { s: usize, d: usize },

    #[error("ill-conditioned input: {0}")]
    Conditioning(String),

    #[error("witness self-check failed: {0}")]
    WitnessSelfCheck(String),

    #[error("internal error: {0}")]
    Internal(String),
}

/// Wrapper so `InvalidEnsemble` can carry the individual findings while still
/// rendering as a single readable message.
#[derive(Debug, Clone)]
pub struct ViolationList(pub Vec<Violation>);

impl std::fmt::Display for ViolationList {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut first = true;
        for v in &self.0 {
            if !first {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
            first = false;
        }
        Ok(())
    }
}
