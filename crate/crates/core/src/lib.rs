//! Local information geometry for perfect privacy: divergence transfer
//! matrices, null-space feasibility, and synthesis of release channels that
//! are exactly independent of a secret while informative about a utility.

pub mod designer;
pub mod dtm;
pub mod error;
pub mod evaluator;
pub mod geometry;
pub mod instances;
mod linalg;
pub mod prob;

pub use designer::{
    design_mechanism, feasibility, optimal_directions, DesignOptions, EpsilonChoice, EpsilonRule,
    FeasibilityReport, LocalMetrics, ObfuscationMechanism, RankedDirection, DEFAULT_TOLERANCE,
};
pub use dtm::{build_channel_dtm, build_dtm, svd_modes, DivergenceTransferMatrix, ModalDecomposition};
pub use error::{ObfuscationError, Result};
pub use evaluator::{audit, brute_force_feasibility, epsilon_sweep, AuditResult, SweepRow};
pub use geometry::PerturbationDirection;
pub use prob::{compose_markov, mutual_information, JointPair, JointUSX, Kernel, Pmf};
