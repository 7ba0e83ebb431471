//! Experiment harness: configuration, trajectory simulation, parameter
//! sweeps, and CSV output.

pub mod config;
pub mod csv;
pub mod sweep;
pub mod trajectory;

pub use config::{Cell, ExperimentConfig, Mode, Scenario};
pub use csv::{
    format_float, read_steps_csv, write_bounds_csv, write_steps_csv, write_summary_csv,
    write_sweep_csv,
};
pub use sweep::{bounds_table, run_sweep, BoundsRow, SweepRow};
pub use trajectory::{run_trajectory, trajectory_stream, TrajectoryRecord, TrajectorySummary};
