pub mod adjoint_loop;
pub mod checkpoint;
pub mod dynamics;
pub mod error;
pub mod hybrid;
pub mod mesh;
pub mod nonlinear;
mod par;
pub mod paraexp;
pub mod scaling;
pub mod solution;
pub mod sparse;
pub mod timestepping;
pub mod vecops;

pub use adjoint_loop::{
    cost, descend, direct_adjoint_loop, gradient_wrt_forcing, synthesize_truth, Algorithm, GradientReport,
    LoopConfig, ProbeGrid, TrackingSource,
};
pub use checkpoint::{CheckpointSchedule, Storage};
pub use dynamics::{AdjointOperator, AdjointSource, Dynamics, LinearDynamics};
pub use error::{Error, Result};
pub use hybrid::{estimate_k, partition_geometric, solve_hybrid, HybridPlan, HybridSolution};
pub use mesh::{Grid2D, Problem, ProblemKind, ProblemSpec};
pub use nonlinear::{solve_direct_nonlinear, IterationConfig, NonlinearSolution};
pub use paraexp::{solve_adjoint, solve_adjoint_linear, solve_direct_linear, RunLog};
pub use solution::{PiecewiseSolution, TimePartition, WorkerPlan};
pub use scaling::{
    measure_profile, predict_hybrid, predict_linear, predict_nonlinear, simulate_schedule, ScheduleKind,
    SpeedupPrediction, TimingProfile,
};
pub use sparse::{OperatorFamily, SparseOperator};
pub use timestepping::{History, LejaConfig, RkConfig, Trajectory};
