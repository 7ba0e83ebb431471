//! Parameter sweeps: the cartesian grid of a config's axes, one summary
//! row per (cell, policy), with scaling bounds attached and per-cell
//! failures recorded rather than aborting the sweep.

use rayon::prelude::*;

use crate::bounds::{
    full_rank_scaling_bounds, general_a_lower_bound, guarantee_ratio,
    low_rank_scaling_bounds, DEFAULT_RANK_TOL,
};
use crate::error::{Error, Result};
use crate::harness::config::{Cell, ExperimentConfig, Scenario};
use crate::harness::trajectory::run_trajectory;
use crate::model::SystemModel;
use crate::policies::PolicyKind;

/// One line of a sweep result: a parameter cell, a policy, its averaged
/// performance, and the cell's scaling bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub scenario: Scenario,
    pub m: Option<usize>,
    pub rho: Option<f64>,
    pub a_scale: f64,
    pub policy: PolicyKind,
    pub horizon: u64,
    pub replications: u32,
    /// Time-average total error, averaged over replications.
    pub avg_total_err: Option<f64>,
    /// `avg_total_err / m`.
    pub avg_norm_err: Option<f64>,
    /// Scaling lower bound on the long-run total error, clamped at zero.
    pub lb: Option<f64>,
    pub lb_norm: Option<f64>,
    /// Scaling upper bound; absent for expanding dynamics, which have no
    /// matching ceiling.
    pub ub: Option<f64>,
    pub ub_norm: Option<f64>,
    /// True when the raw lower bound was negative before clamping.
    pub vacuous_lb: bool,
    /// `"ok"`, or the error that stopped this row.
    pub status: String,
}

/// Scaling bounds appropriate to a model: the full-rank pair when `Q` is
/// invertible, the low-rank pair when it is singular, and the
/// expanding-dynamics lower bound when `a_scale > 1`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScalingColumns {
    /// Raw lower bound (may be negative; report `max(lb, 0)`).
    pub lb: Option<f64>,
    pub ub: Option<f64>,
    /// Guarantee factor `kappa`; only defined in the full-rank driftless
    /// regime.
    pub ratio: Option<f64>,
}

impl ScalingColumns {
    pub fn vacuous_lb(&self) -> bool {
        self.lb.is_some_and(|v| v < 0.0)
    }

    pub fn lb_clamped(&self) -> Option<f64> {
        self.lb.map(|v| v.max(0.0))
    }
}

/// Computes the scaling bounds for one concrete model.
pub fn scaling_columns(model: &SystemModel) -> Result<ScalingColumns> {
    let expanding = model.a_diag().iter().any(|a| *a > 1.0);
    if expanding {
        let lb = general_a_lower_bound(model)?;
        return Ok(ScalingColumns {
            lb: Some(lb),
            ub: None,
            ratio: None,
        });
    }
    match full_rank_scaling_bounds(model.q()) {
        Ok(pair) => {
            let ratio = guarantee_ratio(model.q()).ok();
            Ok(ScalingColumns {
                lb: Some(pair.lower),
                ub: Some(pair.upper),
                ratio,
            })
        }
        Err(Error::SingularMatrix(_)) => {
            let b = low_rank_scaling_bounds(model.q(), DEFAULT_RANK_TOL)?;
            Ok(ScalingColumns {
                lb: Some(b.pair.lower),
                ub: Some(b.pair.upper),
                ratio: None,
            })
        }
        Err(e) => Err(e),
    }
}

fn row_skeleton(config: &ExperimentConfig, cell: &Cell, policy: PolicyKind) -> SweepRow {
    SweepRow {
        scenario: config.scenario,
        m: cell.m,
        rho: cell.rho,
        a_scale: config.a_scale,
        policy,
        horizon: config.horizon,
        replications: config.replications,
        avg_total_err: None,
        avg_norm_err: None,
        lb: None,
        lb_norm: None,
        ub: None,
        ub_norm: None,
        vacuous_lb: false,
        status: "ok".to_string(),
    }
}

fn sweep_cell(config: &ExperimentConfig, cell: &Cell) -> Vec<SweepRow> {
    let model = match config.build_model(cell) {
        Ok(model) => model,
        Err(e) => {
            return config
                .policies
                .iter()
                .map(|&policy| {
                    let mut row = row_skeleton(config, cell, policy);
                    row.status = e.to_string();
                    row
                })
                .collect();
        }
    };
    let m = model.dim() as f64;
    let (columns, bounds_note) = match scaling_columns(&model) {
        Ok(columns) => (columns, None),
        Err(e) => (ScalingColumns::default(), Some(format!("bounds failed: {e}"))),
    };
    config
        .policies
        .iter()
        .map(|&policy| {
            let mut row = row_skeleton(config, cell, policy);
            row.m = Some(model.dim());
            row.lb = columns.lb_clamped();
            row.lb_norm = row.lb.map(|v| v / m);
            row.ub = columns.ub;
            row.ub_norm = columns.ub.map(|v| v / m);
            row.vacuous_lb = columns.vacuous_lb();
            if let Some(note) = &bounds_note {
                row.status = note.clone();
            }
            let mut total = 0.0;
            for replication in 0..config.replications {
                match run_trajectory(config, &model, policy, cell.index, replication) {
                    Ok((_, summary)) => total += summary.avg_total_err,
                    Err(e) => {
                        row.status = e.to_string();
                        return row;
                    }
                }
            }
            let avg = total / config.replications as f64;
            row.avg_total_err = Some(avg);
            row.avg_norm_err = Some(avg / m);
            row
        })
        .collect()
}

/// Runs every cell of the sweep grid. Cells execute concurrently; the row
/// order (cells as enumerated, policies as configured) and all numeric
/// content are independent of thread count.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    if !config.is_sweep() {
        return Err(Error::Config(
            "sweep requires m or rho to be a list; use run for a single cell".into(),
        ));
    }
    let cells = config.cells()?;
    let per_cell: Vec<Vec<SweepRow>> = cells
        .par_iter()
        .map(|cell| sweep_cell(config, cell))
        .collect();
    Ok(per_cell.concat())
}

/// One line of the `bounds` report: the scaling bounds of each cell
/// without running any policy.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsRow {
    pub scenario: Scenario,
    pub m: Option<usize>,
    pub rho: Option<f64>,
    pub a_scale: f64,
    pub lb: Option<f64>,
    pub ub: Option<f64>,
    pub ratio: Option<f64>,
    pub vacuous_lb: bool,
    pub status: String,
}

/// Evaluates the scaling bounds for every cell of the config.
pub fn bounds_table(config: &ExperimentConfig) -> Result<Vec<BoundsRow>> {
    config.validate()?;
    let cells = config.cells()?;
    Ok(cells
        .iter()
        .map(|cell| {
            let mut row = BoundsRow {
                scenario: config.scenario,
                m: cell.m,
                rho: cell.rho,
                a_scale: config.a_scale,
                lb: None,
                ub: None,
                ratio: None,
                vacuous_lb: false,
                status: "ok".to_string(),
            };
            match config.build_model(cell).and_then(|model| {
                let columns = scaling_columns(&model)?;
                Ok((model, columns))
            }) {
                Ok((model, columns)) => {
                    row.m = Some(model.dim());
                    row.lb = columns.lb_clamped();
                    row.ub = columns.ub;
                    row.ratio = columns.ratio;
                    row.vacuous_lb = columns.vacuous_lb();
                }
                Err(e) => row.status = e.to_string(),
            }
            row
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ExperimentConfig;

    fn config(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(text).unwrap()
    }

    #[test]
    fn rho_sweep_bounds_move_as_correlation_grows() {
        // The scaling floor is asymptotic; the fresh start hands the
        // scheduler m free resets, so compare steady-state averages.
        let cfg = config(
            r#"
scenario = "rho_sweep"
m = 8
rho = [0.0, 0.3, 0.6, 0.9]
policies = ["mwa"]
horizon = 400
seed = 17
burn_in = 64
"#,
        );
        let rows = run_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 4);
        for pair in rows.windows(2) {
            // Correlation helps the scheduler: the achievable floor drops.
            assert!(pair[1].lb.unwrap() < pair[0].lb.unwrap());
            // The correlation-blind ceiling ignores rho entirely.
            assert!((pair[1].ub.unwrap() - pair[0].ub.unwrap()).abs() <= 1e-9);
        }
        for row in &rows {
            assert_eq!(row.status, "ok");
            let err = row.avg_total_err.unwrap();
            assert!(err >= row.lb.unwrap() - 1e-9);
            assert!(err <= row.ub.unwrap() + 1e-9);
        }
    }

    #[test]
    fn sweep_requires_a_swept_axis() {
        let cfg = config(
            r#"
scenario = "symmetric"
m = 4
rho = 0.5
policies = ["mee"]
horizon = 10
seed = 1
"#,
        );
        assert!(matches!(run_sweep(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn failed_cells_are_recorded_and_the_sweep_continues() {
        // rho = 2 is not a valid correlation; its cell must fail without
        // taking down the rho = 0 cell.
        let cfg = config(
            r#"
scenario = "rho_sweep"
m = 4
rho = [0.0, 2.0]
policies = ["mee"]
horizon = 10
seed = 1
"#,
        );
        let rows = run_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].status, "ok");
        assert!(rows[0].avg_total_err.is_some());
        assert_ne!(rows[1].status, "ok");
        assert!(rows[1].avg_total_err.is_none());
    }

    #[test]
    fn low_rank_cells_fall_back_to_the_reduced_bounds() {
        let cfg = config(
            r#"
scenario = "low_rank"
m = [4, 6]
rho = 0.4
policies = ["mee"]
horizon = 200
seed = 9
"#,
        );
        let rows = run_sweep(&cfg).unwrap();
        for row in &rows {
            assert_eq!(row.status, "ok", "{}", row.status);
            assert!(row.ub.is_some());
            assert!(row.lb.is_some());
            assert!(row.lb.unwrap() >= 0.0, "reported bound is clamped");
        }
    }

    #[test]
    fn expanding_dynamics_report_only_the_lower_bound() {
        // The expanding-dynamics floor is a steady-state statement; the
        // fresh start sits below it, so burn the transient off before
        // comparing.
        let cfg = config(
            r#"
scenario = "diag_a"
m = [4, 6]
rho = 0.0
a_scale = 2.0
policies = ["wiee"]
horizon = 200
seed = 13
burn_in = 50
"#,
        );
        let rows = run_sweep(&cfg).unwrap();
        for row in &rows {
            assert_eq!(row.status, "ok");
            assert!(row.ub.is_none());
            let lb = row.lb.unwrap();
            assert!(lb >= 0.0);
            assert!(row.avg_total_err.unwrap() >= lb - 1e-9);
        }
    }

    #[test]
    fn bounds_table_reports_ratio_only_in_the_full_rank_regime() {
        let cfg = config(
            r#"
scenario = "rho_sweep"
m = 6
rho = [0.0, 0.5]
policies = ["mee"]
horizon = 10
seed = 1
"#,
        );
        let rows = bounds_table(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].ratio, Some(2.0), "diagonal Q has factor exactly 2");
        assert!(rows[1].ratio.unwrap() > 2.0);

        let low_rank = config(
            r#"
scenario = "low_rank"
m = 4
rho = 0.2
policies = ["mee"]
horizon = 10
seed = 1
"#,
        );
        let rows = bounds_table(&low_rank).unwrap();
        assert_eq!(rows[0].ratio, None);
        assert_eq!(rows[0].status, "ok");
    }
}
