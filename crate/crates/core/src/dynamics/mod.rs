//! Step rules for zero-sum game dynamics and the trajectory runner.

mod config;
mod equivalence;
mod run;
mod step;

pub use config::{Method, MethodConfig, PerPlayerRates};
pub use equivalence::{
    equivalence_report, mpm_two_step_trajectory, EquivalenceRates, EquivalenceReport, PairDeviation,
};
pub use run::{
    parse_trajectory_csv, run, RunOptions, StopReason, Trajectory, TrajectoryRow,
    DEFAULT_DIVERGE_BOUND,
};
pub use step::{
    agda_step, appca_step, eg_step, gda_step, grad_aca_step, grad_sca_step, mpm_step, ogda_step,
    ppca_step, ppca_unprojected_step, step, MethodState,
};
