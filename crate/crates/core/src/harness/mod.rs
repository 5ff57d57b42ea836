//! Scenarios, bundled case studies, evaluation and plotting.

mod builtin;
mod eval;
mod plot;
mod scenario;

pub use builtin::{builtin, case_study, reduced_case_study, repair_toy, toy};
pub use eval::{evaluate, evaluate_states, rollout_robustness, sample_initial_states, EvalReport, RobustnessSummary};
pub use plot::{comm_svg, emit_plots, map_svg, Layer, PlotInputs};
pub use scenario::{AgentSpec, Scenario};
