//! Fitting the model to energies and forces.

pub mod adam;
pub mod design;
pub mod env;
pub mod fit;
pub mod grads;
pub mod local;
pub mod plan;
pub mod split;
pub mod stiefel;
pub mod sweep;
pub mod trace;

pub use adam::{AdamConfig, AdamState};
pub use design::AugmentedDesign;
pub use env::{Dot, EnvironmentCache};
pub use fit::{basis_epoch, energy_rmse, fit, Checkpointing, FitOptions, OptimizerConfig, OptimizerState};
pub use grads::{basis_gradients, compute_loss, BasisGradients, LossParts};
pub use local::{conjugate_gradient, solve_cg, CgOutcome, CgSettings, LocalProblem};
pub use plan::{Phase, PhaseMode, SweepKind, SweepPlan};
pub use split::{merge_cores, truncate_split, Direction, SplitResult};
pub use stiefel::StiefelAdam;
pub use sweep::{bonds_saturated, sweep, Solver, SweepReport, SweepSettings};
pub use trace::{TraceRecord, TrainTrace, TRACE_HEADER};
