//! Fixed-order H2 synthesis under a conic-sector constraint on the controller.

mod algorithm;
mod luenberger;
mod subproblem;
mod transform;

pub use algorithm::{
    iteration_bound, residuals, run_algorithm1, run_algorithm1_on, IterateState, IterationRecord,
    Residuals, SynthesisOptions, SynthesisResult, SynthesisStatus,
};
pub use luenberger::design_h2_luenberger;
pub use subproblem::{build_subproblem, Anchor, Step, Subproblem, SubproblemGoal, MAX_Q_COND};
pub use transform::{
    assemble_closed_loop, build_transform, closed_loop_gramian, conic_lmi_matrix, conic_residual,
    gamma_matrix, lyapunov_lmi_matrix, lyapunov_residual, overbound_cost, p_tilde, true_cost,
    Dims, KMatrix, TransformData,
};
