//! Boolean and quantitative semantics over team trajectories.

mod boolean;
pub mod io;
mod robust;
mod tape;
mod trajectory;
mod validate;

pub use boolean::{count, inner_sat, outer_sat};
pub use robust::{
    inner_levels, inner_rho, inner_rho_all, outer_levels, outer_rho, smooth_error_bound, task_rho, Algebra,
    FloatSemantics, RobustnessConfig, SmoothLevels, Smoothing, TeamSemantics, DEFAULT_TAU, DEFAULT_TOP,
};
pub use tape::TapeSemantics;
pub use trajectory::{AgentTrajectory, IndividualTrajectory, TeamTrajectory};

pub(crate) use validate::check_outer;
