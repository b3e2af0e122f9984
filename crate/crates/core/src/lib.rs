//! Two-player linear-quadratic dynamic feedback potential games: the
//! coupled Riccati solver, potential-game checks and reduction, online play
//! with a finite preview window, and the price-of-uncertainty study.

pub mod error;
pub mod experiments;
pub mod fixtures;
pub mod game;
pub mod linalg;
pub mod online;
pub mod potential;

pub use error::{Error, Result};
pub use game::{
    cost_difference_check, evaluate_cost, rollout_feedback, simulate, solve_feedback_nash,
    verify_nash_by_deviation, CostSchedule, GameSpec, NashSolution, Player,
};
pub use linalg::{Mat, Tolerances};
pub use online::{compute_pou, compute_tracking_gain, gain_decay_diagnostic, log_rel_pou, run_online, OnlineRun};
pub use potential::{check_assumptions, reduce_to_ocp, verify_equivalence, AssumptionMode, AssumptionReport};
