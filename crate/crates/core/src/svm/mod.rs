//! Soft-margin kernel SVMs trained by SMO, combined one-vs-one.

mod kernel;
mod multiclass;
mod smo;

pub use kernel::{kernel_eval, KernelKind, KernelSpec, DEFAULT_DEGREE, DEFAULT_GAMMA};
pub use multiclass::{
    argmax_first, predict_multiclass, train_multiclass, MultiClassSvm, PairMachine, SvmParams, SVM_FORMAT_VERSION,
};
pub use smo::{
    dual_objective, kkt_violation, primal_hinge_objective, primal_weights, smo_train, solve_dual, BinarySvm,
    DualSolution, SmoOptions,
};
