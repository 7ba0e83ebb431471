//! Single-trajectory execution: one policy, one parameter cell, one
//! replication, producing a per-step record stream plus a summary.

use nalgebra::DVector;

use crate::bounds::{per_step_bounds, schur_weights};
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, Mode};
use crate::kalman::{covariance_step_sensor, expected_error, kalman_update, KalmanState};
use crate::model::{noise_factor, step_process, stream_rng, ProcessState, SystemModel};
use crate::policies::{decide, AoiVector, DecisionContext, PolicyKind};

/// One slot of a simulated trajectory.
///
/// `lb`/`ub` sum the per-sensor error sandwich at the slot's ages; `lb` is
/// absent when `Q` is singular (the conditional variances behind it are
/// undefined). In Monte Carlo mode `total_err` is the *realized* squared
/// error, which individual slots may carry outside the expected-error
/// sandwich.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub t: u64,
    pub policy: PolicyKind,
    /// Sensor scheduled this slot (0-based).
    pub scheduled: usize,
    /// Trace of the covariance carried into the next slot.
    pub trace_p: f64,
    /// Total (summed over sensors) squared estimation error for this slot:
    /// expected in covariance-only mode, realized in Monte Carlo mode.
    pub total_err: f64,
    pub lb: Option<f64>,
    pub ub: f64,
    /// Per-sensor errors, recorded when the config asks for wide output.
    pub per_sensor_err: Option<Vec<f64>>,
    /// Per-sensor ages, recorded when the config asks for wide output.
    pub aoi: Option<Vec<u64>>,
}

/// Time-averaged results of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySummary {
    pub policy: PolicyKind,
    pub replication: u32,
    pub m: usize,
    pub horizon: u64,
    /// Slots excluded from the front of the averages below.
    pub burn_in: u64,
    pub avg_total_err: f64,
    /// `avg_total_err / m`, the normalized error figures report.
    pub avg_norm_err: f64,
    pub avg_trace_p: f64,
}

/// RNG stream id for one (cell, policy, replication) triple. Streams are
/// keyed by stable policy tags, so editing the policy list of a config
/// never perturbs the draws of the runs that stay.
pub fn trajectory_stream(cell_index: u64, policy: PolicyKind, replication: u32) -> u64 {
    (cell_index << 40) | (policy.stream_tag() << 32) | replication as u64
}

fn at_step<T>(t: u64, result: Result<T>) -> Result<T> {
    result.map_err(|e| Error::Step {
        t,
        source: Box::new(e),
    })
}

/// Runs one policy for `config.horizon` slots on `model` and returns every
/// step record plus the summary. Deterministic given `(config, seed)`.
pub fn run_trajectory(
    config: &ExperimentConfig,
    model: &SystemModel,
    policy: PolicyKind,
    cell_index: u64,
    replication: u32,
) -> Result<(Vec<TrajectoryRecord>, TrajectorySummary)> {
    let m = model.dim();
    let horizon = config.horizon;
    // Conditional variances exist only for nonsingular Q; without them the
    // lower half of the sandwich is undefined and stays empty.
    let q_tilde = schur_weights(model.q()).ok();
    let mut rng = stream_rng(
        config.seed,
        trajectory_stream(cell_index, policy, replication),
    );

    let monte_carlo = config.mode == Mode::MonteCarlo;
    let mut filter = KalmanState::initial(model, monte_carlo);
    let mut truth: Option<ProcessState> = None;
    let mut factor = None;
    if monte_carlo {
        let f = noise_factor(model.q())?;
        // Start the truth on the filter's prior N(0, Q) so the covariance
        // recursion is the exact error covariance from slot 0.
        truth = Some(ProcessState {
            t: 0,
            x: f.sample(&mut rng),
        });
        factor = Some(f);
    }

    let mut h = AoiVector::zeros(m);
    let mut records = Vec::with_capacity(horizon as usize);
    let mut sum_err = 0.0;
    let mut sum_trace = 0.0;
    for t in 0..horizon {
        let ctx = DecisionContext {
            t,
            h: &h,
            p: &filter.p,
            model,
        };
        let scheduled = at_step(t, decide(policy, ctx, &mut rng))?;
        h = at_step(t, h.step(scheduled))?;

        let (next_filter, per_sensor): (KalmanState, DVector<f64>) = if monte_carlo {
            let state = truth.as_mut().expect("monte carlo state");
            let y = state.x[scheduled];
            let next = at_step(t, kalman_update(&filter, scheduled, y, model))?;
            let xhat = next.xhat.as_ref().expect("tracking enabled");
            let realized =
                DVector::from_fn(m, |i, _| (xhat[i] - state.x[i]) * (xhat[i] - state.x[i]));
            *state = at_step(
                t,
                step_process(state, model, factor.as_ref().unwrap(), &mut rng),
            )?;
            (next, realized)
        } else {
            let p_next = at_step(t, covariance_step_sensor(&filter.p, scheduled, model))?;
            let expected = at_step(t, expected_error(&p_next, model))?;
            (KalmanState::with_covariance(p_next, false), expected)
        };

        let total_err = per_sensor.iter().sum();
        let (lb, ub) = match &q_tilde {
            Some(weights) => {
                let pairs = at_step(t, per_step_bounds(&h, model, weights))?;
                (
                    Some(pairs.iter().map(|p| p.lower).sum()),
                    pairs.iter().map(|p| p.upper).sum(),
                )
            }
            None => {
                let ub = (0..m)
                    .map(|i| {
                        model.q().entry(i, i)
                            * crate::bounds::geometric_age_factor(model.a(i), h.age(i))
                    })
                    .sum();
                (None, ub)
            }
        };
        let trace_p = next_filter.p.trace();
        if t >= config.burn_in {
            sum_err += total_err;
            sum_trace += trace_p;
        }
        records.push(TrajectoryRecord {
            t,
            policy,
            scheduled,
            trace_p,
            total_err,
            lb,
            ub,
            per_sensor_err: config.per_sensor.then(|| per_sensor.iter().copied().collect()),
            aoi: config.per_sensor.then(|| h.ages().to_vec()),
        });
        filter = next_filter;
    }

    let counted = (horizon - config.burn_in) as f64;
    let avg_total_err = sum_err / counted;
    let summary = TrajectorySummary {
        policy,
        replication,
        m,
        horizon,
        burn_in: config.burn_in,
        avg_total_err,
        avg_norm_err: avg_total_err / m as f64,
        avg_trace_p: sum_trace / counted,
    };
    Ok((records, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ExperimentConfig;

    fn config(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(text).unwrap()
    }

    #[test]
    fn single_sensor_is_always_fresh() {
        let cfg = config(
            r#"
scenario = "symmetric"
m = 1
rho = 0.0
policies = ["mee"]
horizon = 10
seed = 3
"#,
        );
        let cell = cfg.single_cell().unwrap();
        let model = cfg.build_model(&cell).unwrap();
        let (records, summary) =
            run_trajectory(&cfg, &model, PolicyKind::Mee, 0, 0).unwrap();
        assert_eq!(records.len(), 10);
        for r in &records {
            assert_eq!(r.scheduled, 0);
            assert!((r.trace_p - 1.0).abs() <= 1e-12);
            assert!(r.total_err.abs() <= 1e-12);
            assert_eq!(r.lb, Some(0.0));
            assert_eq!(r.ub, 0.0);
        }
        assert!(summary.avg_total_err.abs() <= 1e-12);
    }

    #[test]
    fn round_robin_pair_converges_to_unit_average_error() {
        let cfg = config(
            r#"
scenario = "symmetric"
m = 2
rho = 0.0
policies = ["round-robin"]
horizon = 4000
seed = 3
"#,
        );
        let cell = cfg.single_cell().unwrap();
        let model = cfg.build_model(&cell).unwrap();
        let (records, summary) =
            run_trajectory(&cfg, &model, PolicyKind::RoundRobin, 0, 0).unwrap();
        // After the very first slot the alternating pattern is exact: one
        // sensor fresh (error 0), the other one slot stale (error 1).
        assert!((summary.avg_total_err - 1.0).abs() <= 1e-3);
        assert!((records[100].total_err - 1.0).abs() <= 1e-12);
        assert_eq!(records[100].lb, Some(1.0));
        assert_eq!(records[100].ub, 1.0);
    }

    #[test]
    fn sandwich_holds_on_every_emitted_record() {
        let cfg = config(
            r#"
scenario = "symmetric"
m = 5
rho = 0.6
policies = ["mee", "mwa", "wiee", "greedy", "sr", "round-robin"]
horizon = 400
seed = 11
"#,
        );
        let cell = cfg.single_cell().unwrap();
        let model = cfg.build_model(&cell).unwrap();
        for &policy in &cfg.policies {
            let (records, _) = run_trajectory(&cfg, &model, policy, 0, 0).unwrap();
            for r in &records {
                let lb = r.lb.expect("Q is positive definite");
                assert!(
                    lb <= r.total_err + 1e-9 && r.total_err <= r.ub + 1e-9,
                    "{policy} violated sandwich at t={}: {} <= {} <= {}",
                    r.t,
                    lb,
                    r.total_err,
                    r.ub
                );
                assert!(r.trace_p >= 0.0);
            }
        }
    }

    #[test]
    fn identical_seeds_reproduce_identical_records() {
        let cfg = config(
            r#"
scenario = "symmetric"
m = 4
rho = 0.3
policies = ["sr"]
horizon = 200
seed = 99
"#,
        );
        let cell = cfg.single_cell().unwrap();
        let model = cfg.build_model(&cell).unwrap();
        let (a, _) = run_trajectory(&cfg, &model, PolicyKind::Sr, 0, 0).unwrap();
        let (b, _) = run_trajectory(&cfg, &model, PolicyKind::Sr, 0, 0).unwrap();
        assert_eq!(a, b);
        let (c, _) = run_trajectory(&cfg, &model, PolicyKind::Sr, 0, 1).unwrap();
        assert_ne!(a, c, "replications must draw distinct streams");
    }

    #[test]
    fn monte_carlo_tracks_covariance_averages() {
        // Over many slots, realized squared error averages to the
        // covariance prediction; with a single replication and moderate
        // horizon we only check the ballpark.
        let cfg = config(
            r#"
scenario = "symmetric"
m = 3
rho = 0.5
policies = ["mwa"]
horizon = 6000
seed = 21
mode = "monte_carlo"
"#,
        );
        let cell = cfg.single_cell().unwrap();
        let model = cfg.build_model(&cell).unwrap();
        let (_, mc) = run_trajectory(&cfg, &model, PolicyKind::Mwa, 0, 0).unwrap();
        let cov_cfg = config(
            r#"
scenario = "symmetric"
m = 3
rho = 0.5
policies = ["mwa"]
horizon = 6000
seed = 21
"#,
        );
        let (_, cov) = run_trajectory(&cov_cfg, &model, PolicyKind::Mwa, 0, 0).unwrap();
        let rel = (mc.avg_total_err - cov.avg_total_err).abs() / cov.avg_total_err;
        assert!(
            rel <= 0.10,
            "realized {} vs expected {}",
            mc.avg_total_err,
            cov.avg_total_err
        );
    }

    #[test]
    fn per_sensor_columns_appear_on_request() {
        let cfg = config(
            r#"
scenario = "symmetric"
m = 3
rho = 0.2
policies = ["greedy"]
horizon = 5
seed = 1
per_sensor = true
"#,
        );
        let cell = cfg.single_cell().unwrap();
        let model = cfg.build_model(&cell).unwrap();
        let (records, _) = run_trajectory(&cfg, &model, PolicyKind::Greedy, 0, 0).unwrap();
        for r in &records {
            let errs = r.per_sensor_err.as_ref().unwrap();
            let ages = r.aoi.as_ref().unwrap();
            assert_eq!(errs.len(), 3);
            assert_eq!(ages.len(), 3);
            assert!((errs.iter().sum::<f64>() - r.total_err).abs() <= 1e-12);
            assert_eq!(ages[r.scheduled], 0);
        }
    }

    #[test]
    fn burn_in_drops_the_transient_from_summaries() {
        let text = |burn: u64| {
            format!(
                r#"
scenario = "symmetric"
m = 4
rho = 0.0
policies = ["round-robin"]
horizon = 400
seed = 5
burn_in = {burn}
"#
            )
        };
        let cfg0 = config(&text(0));
        let cfg100 = config(&text(100));
        let cell = cfg0.single_cell().unwrap();
        let model = cfg0.build_model(&cell).unwrap();
        let (_, s0) = run_trajectory(&cfg0, &model, PolicyKind::RoundRobin, 0, 0).unwrap();
        let (_, s100) =
            run_trajectory(&cfg100, &model, PolicyKind::RoundRobin, 0, 0).unwrap();
        // Round-robin on independent sensors ramps up over the first m
        // slots, so excluding the transient raises the average slightly.
        assert!(s100.avg_total_err >= s0.avg_total_err);
        assert_eq!(s100.burn_in, 100);
    }
}
