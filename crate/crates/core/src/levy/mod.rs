//! Levy processes: characteristics, measure calculus and path sampling.

pub(crate) mod convergence;
mod jump;
mod model;
mod sample;

pub use convergence::{empirical_l1_convergence, L1ConvergenceRow, L1ConvergenceTable};
pub use jump::{
    jump_second_moment, jump_tail_first_moment, stable_density_constant, Cutoff, JumpComponentSpec,
    JumpKind, JumpLaw,
};
pub use model::{
    covariance_matrix, structural_upsilon, upsilon_infinity, LevyModel, TruncatedLevyModel,
    UpsilonReport, UPSILON_TOLERANCE,
};
pub use sample::{sample_increments, standard_symmetric_stable, Jump, LayeredNoise};
