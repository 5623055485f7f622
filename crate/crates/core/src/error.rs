use thiserror::Error;

/// Errors raised by the probability, geometry, and design routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObfuscationError {
    #[error("probability vector is empty")]
    Empty,

    #[error("negative probability mass {value} at index {index}")]
    NegativeMass { index: usize, value: f64 },

    #[error("total mass {sum} deviates from 1 by more than {tolerance}")]
    MassMismatch { sum: f64, tolerance: f64 },

    #[error("non-finite entry at index {index}")]
    NonFinite { index: usize },

    #[error("alphabet sizes differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("p({index}) > 0 but reference assigns zero mass")]
    SupportViolation { index: usize },

    #[error("reference pmf is not in the interior of the simplex (entry {index} is zero)")]
    NotInterior { index: usize },

    #[error("kernel column {column} sums to {sum}")]
    NotStochastic { column: usize, sum: f64 },

    #[error("marginal mismatch: max deviation {deviation}")]
    MarginalMismatch { deviation: f64 },

    #[error("channel output marginal inconsistent with kernel and input (max deviation {deviation})")]
    InconsistentMarginals { deviation: f64 },

    #[error("marginal entry {index} is zero but carries joint mass")]
    DegenerateMarginal { index: usize },

    #[error("target equals reference; perturbation direction is undefined")]
    ZeroDirection,

    #[error("epsilon {epsilon} exceeds the feasible bound {max}")]
    EpsilonTooLarge { epsilon: f64, max: f64 },

    #[error("epsilon must be finite and non-negative, got {0}")]
    InvalidEpsilon(f64),

    #[error("perturbation direction violates orthogonality to sqrt(p): {violation}")]
    NotOrthogonal { violation: f64 },

    #[error("non-trivial perfect obfuscation is infeasible for this instance")]
    InfeasibleInstance,

    #[error("requested {requested} directions but the null space has dimension {available}")]
    RequestedTooManyDirections { requested: usize, available: usize },

    #[error("at least one direction must be requested")]
    ZeroModes,

    #[error("|Z| = {release} exceeds the cardinality bound |X| + 2 = {bound}")]
    CardinalityBound { release: usize, bound: usize },

    #[error("oracle supports |X| <= {limit}, got {size}")]
    OracleScaleExceeded { size: usize, limit: usize },
}

pub type Result<T> = std::result::Result<T, ObfuscationError>;
