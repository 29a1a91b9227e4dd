//! Newton-CG trust-region updates and the four training loops built on them.

mod cg;
mod linesearch;
mod train;

pub use cg::{conjugate_gradient, natural_step, CgConfig, CgReport};
pub use linesearch::{
    backtrack, backtracking_line_search, LineSearchConfig, StepObjective, StepOutcome,
    SurrogateObjective,
};
pub use train::{
    ablation_nofisher_train, ablation_sgd_train, svrpo_train, train, train_with_hook, trpo_train,
    Algorithm, CgDiagnostics, InnerStep, IterationRecord, RolloutHook, SvrpoConfig, TrainRun,
};
