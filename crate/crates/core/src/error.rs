use thiserror::Error;

/// Errors produced by the simulator.
///
/// `NoConvergence`, `CapHit` and `InsufficientEvents` describe outcomes of a
/// Monte Carlo experiment (the process did not do what was asked of it) rather
/// than bugs; callers usually report them instead of aborting.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("negative entry at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize },

    #[error("row {row} sums to {sum}, not 1")]
    RowSumViolation { row: usize, sum: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("matrix is not strictly positive")]
    NotStrictlyPositive,

    #[error("could not compute the left unit eigenvector")]
    EigenvectorFailure,

    #[error("invalid probability {name} = {value}")]
    InvalidProbability { name: &'static str, value: f64 },

    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("only {converged} of {replicas} replicas reached the consensus tolerance")]
    NoConvergence { converged: usize, replicas: usize },

    #[error("semigroup exploration exceeded {cap} distinct elements")]
    ExplosionGuard { cap: usize },

    #[error("{hits} of {replicas} replicas still above phi at t_cap = {t_cap}")]
    CapHit {
        hits: usize,
        replicas: usize,
        t_cap: usize,
    },

    #[error("distribution has an atom on the diagonal x = y; the log energy is infinite")]
    SingularMass,

    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    #[error("balance violated at agent {agent}: row sum {row_sum}, column sum {col_sum}")]
    BalanceViolation {
        agent: usize,
        row_sum: f64,
        col_sum: f64,
    },

    #[error("precondition unmet: {0}")]
    PreconditionUnmet(String),

    #[error("generator has temporal dependence; an iid spec is required")]
    NotIid,

    #[error("exceedance events died out: only {points} usable grid points")]
    InsufficientEvents { points: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
