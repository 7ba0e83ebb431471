//! Independent cross-checks: a brute-force finite-horizon optimum, direct
//! verifications of the matrix lemmas the bounds rest on, and randomized
//! suites that pit the policies and the reduction against those oracles.
//!
//! Everything here is deliberately written *against the grain* of the main
//! implementation — enumeration instead of recursion tricks, explicit
//! solves instead of cached weights — so that agreement between the two is
//! evidence rather than tautology.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, RngExt};
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::bounds::{low_rank_reduce, schur_weights, DEFAULT_RANK_TOL};
use crate::error::{Error, Result};
use crate::kalman::covariance_step_sensor;
use crate::model::{eigenvalues_desc, stream_rng, CovarianceMatrix, SystemModel};
use crate::policies::{decide, mwa_decide, wiee_decide, AoiVector, DecisionContext, PolicyKind};

/// Hard cap on the number of schedules [`dp_optimal_schedule`] will
/// enumerate (`m^horizon`).
pub const SCHEDULE_BUDGET: u64 = 10_000_000;

/// Result of exhaustively minimizing the finite-horizon average trace.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// The minimizing schedule; lexicographically smallest among ties.
    pub best_schedule: Vec<usize>,
    /// Its objective: `(1/T) * sum_{t=1..T} trace(P_t)`.
    pub best_avg_trace: f64,
    /// Number of complete schedules evaluated (`m^horizon`).
    pub evaluated_count: u64,
}

#[derive(Debug, Clone)]
struct DfsBest {
    value: f64,
    schedule: Vec<usize>,
}

fn dfs_schedules(
    model: &SystemModel,
    p: &CovarianceMatrix,
    acc_trace: f64,
    depth: usize,
    horizon: usize,
    prefix: &mut Vec<usize>,
    best: &mut Option<DfsBest>,
    count: &mut u64,
) -> Result<()> {
    if depth == horizon {
        *count += 1;
        let value = acc_trace / horizon as f64;
        // Strict improvement only: depth-first order visits schedules
        // lexicographically, so the first optimum seen is the smallest.
        let improves = best.as_ref().is_none_or(|b| value < b.value);
        if improves {
            *best = Some(DfsBest {
                value,
                schedule: prefix.clone(),
            });
        }
        return Ok(());
    }
    for j in 0..model.dim() {
        let next = covariance_step_sensor(p, j, model)?;
        let trace = next.trace();
        prefix.push(j);
        dfs_schedules(
            model,
            &next,
            acc_trace + trace,
            depth + 1,
            horizon,
            prefix,
            best,
            count,
        )?;
        prefix.pop();
    }
    Ok(())
}

/// Exhaustive finite-horizon optimum: enumerates every one-sensor-per-slot
/// schedule of length `horizon` starting from covariance `p0` and returns
/// the one minimizing the average trace of the resulting covariances.
///
/// Refuses with [`Error::BudgetExceeded`] when `m^horizon` exceeds
/// [`SCHEDULE_BUDGET`]. The top-level branch on the first decision runs in
/// parallel; the merge is deterministic, so results do not depend on thread
/// count.
pub fn dp_optimal_schedule(
    model: &SystemModel,
    p0: &CovarianceMatrix,
    horizon: usize,
) -> Result<OracleResult> {
    let m = model.dim();
    if p0.dim() != m {
        return Err(Error::DimensionMismatch(format!(
            "initial covariance is {}x{} but the model has {m} sensors",
            p0.dim(),
            p0.dim()
        )));
    }
    if horizon == 0 {
        return Err(Error::Domain("horizon must be at least 1".into()));
    }
    let mut total: u128 = 1;
    for _ in 0..horizon {
        total = total.saturating_mul(m as u128);
        if total > SCHEDULE_BUDGET as u128 {
            return Err(Error::BudgetExceeded {
                schedules: total.min(u64::MAX as u128) as u64,
                budget: SCHEDULE_BUDGET,
            });
        }
    }

    let branches: Vec<Result<(Option<DfsBest>, u64)>> = (0..m)
        .into_par_iter()
        .map(|j0| {
            let p1 = covariance_step_sensor(p0, j0, model)?;
            let mut best = None;
            let mut count = 0u64;
            let mut prefix = vec![j0];
            dfs_schedules(
                model,
                &p1,
                p1.trace(),
                1,
                horizon,
                &mut prefix,
                &mut best,
                &mut count,
            )?;
            Ok((best, count))
        })
        .collect();

    let mut best: Option<DfsBest> = None;
    let mut evaluated = 0u64;
    for branch in branches {
        let (branch_best, count) = branch?;
        evaluated += count;
        if let Some(b) = branch_best {
            // Branches are merged in first-decision order, so on exact
            // ties the earlier (lexicographically smaller) schedule wins.
            let improves = best.as_ref().is_none_or(|cur| b.value < cur.value);
            if improves {
                best = Some(b);
            }
        }
    }
    let best = best.expect("horizon >= 1 guarantees at least one schedule");
    Ok(OracleResult {
        best_schedule: best.schedule,
        best_avg_trace: best.value,
        evaluated_count: evaluated,
    })
}

/// Report from [`max_ratio_check`]: sampling never beats the closed-form
/// maximum of `(p'b)^2 / (b'Ab)`, and the analytic maximizer attains it.
#[derive(Debug, Clone)]
pub struct MaxRatioReport {
    /// Closed-form maximum `p' A^{-1} p`.
    pub closed_form: f64,
    /// Largest ratio found by random sampling of `b`.
    pub max_sampled_ratio: f64,
    /// Ratio evaluated at the analytic maximizer `b* = A^{-1} p`.
    pub maximizer_ratio: f64,
    pub trials: usize,
    pub pass: bool,
}

/// Verifies `max_b (p'b)^2 / (b'Ab) = p' A^{-1} p` for a positive definite
/// `A`: random probes must stay below the closed form and the analytic
/// maximizer must attain it.
pub fn max_ratio_check(
    a: &DMatrix<f64>,
    p: &DVector<f64>,
    trials: usize,
    rng: &mut impl Rng,
) -> Result<MaxRatioReport> {
    let m = a.nrows();
    if a.ncols() != m || p.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "ratio check needs square A and matching p; got {}x{} and {}",
            a.nrows(),
            a.ncols(),
            p.len()
        )));
    }
    let chol = Cholesky::new(a.clone()).ok_or_else(|| {
        Error::SingularMatrix("ratio check needs positive definite A".into())
    })?;
    let b_star = chol.solve(p);
    let closed_form = p.dot(&b_star);
    let ratio = |b: &DVector<f64>| -> f64 {
        let denom = (a * b).dot(b);
        if denom <= 0.0 {
            0.0
        } else {
            let num = p.dot(b);
            num * num / denom
        }
    };
    let maximizer_ratio = if b_star.norm() <= 1e-300 {
        0.0
    } else {
        ratio(&b_star)
    };
    let mut max_sampled: f64 = 0.0;
    for _ in 0..trials {
        let b = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        max_sampled = max_sampled.max(ratio(&b));
    }
    let tol = 1e-9 * closed_form.abs().max(1.0);
    let pass = max_sampled <= closed_form + tol
        && (maximizer_ratio - closed_form).abs() <= tol;
    Ok(MaxRatioReport {
        closed_form,
        max_sampled_ratio: max_sampled,
        maximizer_ratio,
        trials,
        pass,
    })
}

/// Report from [`psd_inverse_order_check`]: margins are smallest
/// eigenvalues of the two differences.
#[derive(Debug, Clone)]
pub struct PsdOrderReport {
    /// `lambda_min(A - B)`; nonnegative means the premise `A >= B` holds.
    pub premise_margin: f64,
    /// `lambda_min(B^{-1} - A^{-1})`; nonnegative means inversion reversed
    /// the order as claimed.
    pub conclusion_margin: f64,
    pub pass: bool,
}

/// Verifies the inversion anti-monotonicity `A >= B > 0  =>  B^{-1} >=
/// A^{-1}` on a concrete pair.
pub fn psd_inverse_order_check(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<PsdOrderReport> {
    let m = a.nrows();
    if a.ncols() != m || b.nrows() != m || b.ncols() != m {
        return Err(Error::DimensionMismatch(
            "order check needs square matrices of equal size".into(),
        ));
    }
    let sym = |x: &DMatrix<f64>| (x + x.transpose()) * 0.5;
    let diff = sym(&(a - b));
    let premise_margin = *eigenvalues_desc(&diff).last().unwrap();
    let a_inv = Cholesky::new(sym(a))
        .ok_or_else(|| Error::SingularMatrix("A must be positive definite".into()))?
        .inverse();
    let b_inv = Cholesky::new(sym(b))
        .ok_or_else(|| Error::SingularMatrix("B must be positive definite".into()))?
        .inverse();
    let inv_diff = sym(&(&b_inv - &a_inv));
    let inv_eigs = eigenvalues_desc(&inv_diff);
    let conclusion_margin = *inv_eigs.last().unwrap();
    let premise_scale = eigenvalues_desc(&sym(a))[0].abs().max(1.0);
    let conclusion_scale = eigenvalues_desc(&b_inv)[0].abs().max(1.0);
    let pass = premise_margin >= -1e-9 * premise_scale
        && conclusion_margin >= -1e-9 * conclusion_scale;
    Ok(PsdOrderReport {
        premise_margin,
        conclusion_margin,
        pass,
    })
}

/// Report from [`lower_bound_trajectory_check`].
#[derive(Debug, Clone)]
pub struct TrajectoryLowerBoundReport {
    pub steps: usize,
    /// Smallest value of `p_00(t) - (q_00 + h * q~_00)` seen; the lower
    /// bound demands this stays nonnegative.
    pub min_slack: f64,
    /// Largest deviation of a freshly observed sensor's covariance column
    /// from the corresponding column of `Q`; the proof pins these equal.
    pub max_pin_deviation: f64,
    /// Smallest value of `p' R^{-1} p - realized_reduction`; the ratio
    /// lemma says the certificate dominates what any single observation
    /// actually removes.
    pub min_certificate_margin: f64,
    pub pass: bool,
}

/// Replays the adversarial trajectory behind the per-step lower bound:
/// sensor 0 is starved while the rest are observed round-robin, and every
/// step is checked against the three facts the proof chains together.
pub fn lower_bound_trajectory_check(
    q: &CovarianceMatrix,
    horizon: usize,
) -> Result<TrajectoryLowerBoundReport> {
    let m = q.dim();
    if m < 2 {
        return Err(Error::Domain(
            "the starvation replay needs at least two sensors".into(),
        ));
    }
    if horizon == 0 {
        return Err(Error::Domain("horizon must be at least 1".into()));
    }
    let model = SystemModel::wiener(q.clone());
    let q_tilde = schur_weights(q)?;
    let scale = q.matrix().abs().max().max(1.0);
    let others: Vec<usize> = (1..m).collect();

    let mut p = q.clone();
    let mut min_slack = f64::INFINITY;
    let mut max_pin_deviation: f64 = 0.0;
    let mut min_certificate_margin = f64::INFINITY;
    for t in 0..horizon {
        let j = others[t % others.len()];
        // Certificate: the most any observation of the complement could
        // remove from p_00 is p' R^{-1} p over the complement block.
        let r = DMatrix::from_fn(m - 1, m - 1, |row, col| p.entry(others[row], others[col]));
        let p_row = DVector::from_fn(m - 1, |k, _| p.entry(0, others[k]));
        let certificate = match Cholesky::new(r) {
            Some(chol) => p_row.dot(&chol.solve(&p_row)),
            None => {
                return Err(Error::SingularMatrix(
                    "complement block lost positive definiteness during replay".into(),
                ))
            }
        };
        let realized = p.entry(0, j) * p.entry(0, j) / p.entry(j, j);
        min_certificate_margin = min_certificate_margin.min(certificate - realized);

        let next = covariance_step_sensor(&p, j, &model)?;
        for i in 0..m {
            max_pin_deviation =
                max_pin_deviation.max((next.entry(i, j) - q.entry(i, j)).abs());
        }
        let age = (t + 1) as f64;
        let slack = next.entry(0, 0) - (q.entry(0, 0) + age * q_tilde[0]);
        min_slack = min_slack.min(slack);
        p = next;
    }
    let tol = 1e-9 * scale;
    let pass = min_slack >= -tol
        && max_pin_deviation <= tol
        && min_certificate_margin >= -tol;
    Ok(TrajectoryLowerBoundReport {
        steps: horizon,
        min_slack,
        max_pin_deviation,
        min_certificate_margin,
        pass,
    })
}

/// Outcome of one randomized verification suite.
#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    /// Human-readable note: either "ok" or a description of the first
    /// failure.
    pub detail: String,
}

impl SuiteOutcome {
    pub fn pass(&self) -> bool {
        self.failures == 0
    }

    fn from_failures(name: &'static str, cases: usize, failures: Vec<String>) -> Self {
        let detail = failures
            .first()
            .cloned()
            .unwrap_or_else(|| "ok".to_string());
        Self {
            name,
            cases,
            failures: failures.len(),
            detail,
        }
    }
}

fn random_pd(m: usize, rng: &mut impl Rng) -> CovarianceMatrix {
    let g = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    CovarianceMatrix::new(&g * g.transpose() + DMatrix::identity(m, m) * 0.1)
        .expect("Gram matrix plus ridge is positive definite")
}

/// Randomized suite for the ratio lemma.
pub fn max_ratio_suite(seed: u64, cases: usize) -> SuiteOutcome {
    let mut rng = stream_rng(seed, 11);
    let mut failures = Vec::new();
    for case in 0..cases {
        let m = 2 + case % 6;
        let a = random_pd(m, &mut rng).into_matrix();
        let p = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        match max_ratio_check(&a, &p, 100, &mut rng) {
            Ok(report) if report.pass => {}
            Ok(report) => failures.push(format!(
                "case {case}: sampled {} vs closed form {}",
                report.max_sampled_ratio, report.closed_form
            )),
            Err(e) => failures.push(format!("case {case}: {e}")),
        }
    }
    SuiteOutcome::from_failures("max-ratio", cases, failures)
}

/// Randomized suite for inversion anti-monotonicity.
pub fn psd_inverse_order_suite(seed: u64, cases: usize) -> SuiteOutcome {
    let mut rng = stream_rng(seed, 12);
    let mut failures = Vec::new();
    for case in 0..cases {
        let m = 2 + case % 6;
        let b = random_pd(m, &mut rng).into_matrix();
        let k = 1 + case % m;
        let g = DMatrix::from_fn(m, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let a = &b + &g * g.transpose();
        match psd_inverse_order_check(&a, &b) {
            Ok(report) if report.pass => {}
            Ok(report) => failures.push(format!(
                "case {case}: premise margin {}, conclusion margin {}",
                report.premise_margin, report.conclusion_margin
            )),
            Err(e) => failures.push(format!("case {case}: {e}")),
        }
    }
    SuiteOutcome::from_failures("psd-inverse-order", cases, failures)
}

/// Randomized suite replaying the starvation trajectory on random positive
/// definite covariances.
pub fn trajectory_lower_bound_suite(seed: u64, cases: usize) -> SuiteOutcome {
    let mut rng = stream_rng(seed, 13);
    let mut failures = Vec::new();
    for case in 0..cases {
        let m = 2 + case % 7;
        let q = random_pd(m, &mut rng);
        match lower_bound_trajectory_check(&q, 50) {
            Ok(report) if report.pass => {}
            Ok(report) => failures.push(format!(
                "case {case}: min slack {}, pin deviation {}, certificate margin {}",
                report.min_slack, report.max_pin_deviation, report.min_certificate_margin
            )),
            Err(e) => failures.push(format!("case {case}: {e}")),
        }
    }
    SuiteOutcome::from_failures("trajectory-lower-bound", cases, failures)
}

/// Randomized suite checking that the low-rank reduction reproduces its
/// input exactly (up to roundoff) on matrices of known rank.
pub fn low_rank_reconstruction_suite(seed: u64, cases: usize) -> SuiteOutcome {
    let mut rng = stream_rng(seed, 14);
    let mut failures = Vec::new();
    for case in 0..cases {
        let m = 3 + case % 6;
        let l = 1 + case % (m - 1);
        let g = DMatrix::from_fn(m, l, |_, _| rng.sample::<f64, _>(StandardNormal));
        let q = match CovarianceMatrix::new(&g * g.transpose()) {
            Ok(q) => q,
            Err(e) => {
                failures.push(format!("case {case}: construction failed: {e}"));
                continue;
            }
        };
        match low_rank_reduce(&q, DEFAULT_RANK_TOL) {
            Ok(red) => {
                let scale = q.matrix().abs().max().max(1.0);
                let err = (red.reconstruct() - q.matrix()).abs().max();
                if red.rank() != l {
                    failures.push(format!(
                        "case {case}: rank {} instead of {l}",
                        red.rank()
                    ));
                } else if err > 1e-8 * scale {
                    failures.push(format!("case {case}: reconstruction error {err}"));
                }
            }
            Err(e) => failures.push(format!("case {case}: {e}")),
        }
    }
    SuiteOutcome::from_failures("low-rank-reconstruction", cases, failures)
}

/// Randomized suite for the degenerate regime where the index policy must
/// coincide with weighted-age scheduling: unit gains and equal variances
/// make both reduce to plain age ordering.
pub fn wiee_mwa_equal_variance_suite(seed: u64, cases: usize) -> SuiteOutcome {
    let mut rng = stream_rng(seed, 15);
    let mut failures = Vec::new();
    for case in 0..cases {
        let m = 2 + case % 7;
        let q_common = 0.1 + 9.9 * rng.random::<f64>();
        let q = CovarianceMatrix::new(DMatrix::identity(m, m) * q_common)
            .expect("scaled identity is positive definite");
        let model = SystemModel::wiener(q.clone());
        let mut h = AoiVector::zeros(m);
        for step in 0..30 {
            let by_index = match wiee_decide(&h, &model) {
                Ok(j) => j,
                Err(e) => {
                    failures.push(format!("case {case} step {step}: {e}"));
                    break;
                }
            };
            let by_weighted_age = match mwa_decide(&h, &q) {
                Ok(j) => j,
                Err(e) => {
                    failures.push(format!("case {case} step {step}: {e}"));
                    break;
                }
            };
            let oldest = h
                .ages()
                .iter()
                .enumerate()
                .max_by(|(i, a), (j, b)| a.cmp(b).then(j.cmp(i)))
                .map(|(i, _)| i)
                .unwrap();
            if by_index != oldest || by_weighted_age != oldest {
                failures.push(format!(
                    "case {case} step {step}: ages {:?} gave index {by_index}, \
                     weighted age {by_weighted_age}, oldest {oldest}",
                    h.ages()
                ));
                break;
            }
            h = h.step(by_index).expect("valid pick");
        }
    }
    SuiteOutcome::from_failures("wiee-mwa-equal-variance", cases, failures)
}

/// Runs all lemma suites at their standard sizes.
pub fn run_lemma_suites(seed: u64) -> Vec<SuiteOutcome> {
    vec![
        max_ratio_suite(seed, 200),
        psd_inverse_order_suite(seed, 500),
        trajectory_lower_bound_suite(seed, 200),
        low_rank_reconstruction_suite(seed, 200),
        wiee_mwa_equal_variance_suite(seed, 200),
    ]
}

/// Average trace achieved by one policy on one instance, mirroring the
/// oracle's objective.
fn policy_avg_trace(
    kind: PolicyKind,
    model: &SystemModel,
    p0: &CovarianceMatrix,
    horizon: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    let mut p = p0.clone();
    let mut h = AoiVector::zeros(model.dim());
    let mut acc = 0.0;
    for t in 0..horizon {
        let ctx = DecisionContext {
            t: t as u64,
            h: &h,
            p: &p,
            model,
        };
        let j = decide(kind, ctx, rng)?;
        h = h.step(j)?;
        p = covariance_step_sensor(&p, j, model)?;
        acc += p.trace();
    }
    Ok(acc / horizon as f64)
}

/// Randomized suite: no policy may beat the exhaustive optimum.
pub fn oracle_dominance_suite(seed: u64, instances: usize) -> SuiteOutcome {
    let mut rng = stream_rng(seed, 16);
    let mut failures = Vec::new();
    for k in 0..instances {
        let m = 2 + k % 2;
        let horizon = 6 + k % 5;
        let q = random_pd(m, &mut rng);
        let scale = if k % 2 == 0 { 1.0 } else { 1.2 };
        let model = match SystemModel::scaled_identity(scale, q.clone()) {
            Ok(model) => model,
            Err(e) => {
                failures.push(format!("instance {k}: {e}"));
                continue;
            }
        };
        let optimum = match dp_optimal_schedule(&model, &q, horizon) {
            Ok(result) => result,
            Err(e) => {
                failures.push(format!("instance {k}: oracle failed: {e}"));
                continue;
            }
        };
        for kind in PolicyKind::ALL {
            let mut policy_rng = stream_rng(seed, 1_000 + k as u64);
            match policy_avg_trace(kind, &model, &q, horizon, &mut policy_rng) {
                Ok(avg) => {
                    if avg < optimum.best_avg_trace - 1e-9 {
                        failures.push(format!(
                            "instance {k}: {kind} achieved {avg} below optimum {}",
                            optimum.best_avg_trace
                        ));
                    }
                }
                Err(e) => failures.push(format!("instance {k}: {kind} failed: {e}")),
            }
        }
    }
    SuiteOutcome::from_failures("oracle-dominance", instances, failures)
}

/// Randomized suite: relabeling sensors must relabel decisions and leave
/// the trace trajectory untouched, for every data-driven deterministic
/// policy.
pub fn permutation_equivariance_suite(seed: u64, instances: usize) -> SuiteOutcome {
    const POLICIES: [PolicyKind; 4] = [
        PolicyKind::Mee,
        PolicyKind::Mwa,
        PolicyKind::Wiee,
        PolicyKind::Greedy,
    ];
    let mut rng = stream_rng(seed, 17);
    let mut failures = Vec::new();
    for k in 0..instances {
        let m = 2 + k % 4;
        let horizon = 20;
        let q = random_pd(m, &mut rng);
        let scale = if k % 2 == 0 { 1.0 } else { 1.4 };
        // perm[new] = old: sensor `new` of the relabeled system is sensor
        // `perm[new]` of the original.
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(&mut rng);
        let q_perm = CovarianceMatrix::new(DMatrix::from_fn(m, m, |r, c| {
            q.entry(perm[r], perm[c])
        }))
        .expect("permutation preserves positive definiteness");
        let model = SystemModel::scaled_identity(scale, q.clone()).expect("scale >= 1");
        let model_perm =
            SystemModel::scaled_identity(scale, q_perm.clone()).expect("scale >= 1");
        // Start from distinct ages and a generic covariance: on exact ties
        // (e.g. the all-zero age vector) every policy falls back to the
        // lowest index, which deliberately ignores relabeling.
        let mut ages: Vec<u64> = (1..=m as u64).collect();
        ages.shuffle(&mut rng);
        let p0 = random_pd(m, &mut rng);
        let p0_perm = CovarianceMatrix::new(DMatrix::from_fn(m, m, |r, c| {
            p0.entry(perm[r], perm[c])
        }))
        .expect("permutation preserves positive definiteness");
        for kind in POLICIES {
            let mut p = p0.clone();
            let mut p_perm = p0_perm.clone();
            let mut h = AoiVector::from_ages(ages.clone());
            let mut h_perm =
                AoiVector::from_ages((0..m).map(|k| ages[perm[k]]).collect());
            let mut dummy = stream_rng(seed, 18);
            for t in 0..horizon {
                let ctx = DecisionContext {
                    t,
                    h: &h,
                    p: &p,
                    model: &model,
                };
                let ctx_perm = DecisionContext {
                    t,
                    h: &h_perm,
                    p: &p_perm,
                    model: &model_perm,
                };
                let j = decide(kind, ctx, &mut dummy).expect("decision");
                let j_perm = decide(kind, ctx_perm, &mut dummy).expect("decision");
                if perm[j_perm] != j {
                    failures.push(format!(
                        "instance {k}: {kind} at t={t} picked {} under relabeling, \
                         expected {}",
                        perm[j_perm], j
                    ));
                    break;
                }
                h = h.step(j).expect("valid pick");
                h_perm = h_perm.step(j_perm).expect("valid pick");
                p = covariance_step_sensor(&p, j, &model).expect("step");
                p_perm =
                    covariance_step_sensor(&p_perm, j_perm, &model_perm).expect("step");
                let drift = (p.trace() - p_perm.trace()).abs();
                if drift > 1e-9 * p.trace().abs().max(1.0) {
                    failures.push(format!(
                        "instance {k}: {kind} trace drift {drift} at t={t}"
                    ));
                    break;
                }
            }
        }
    }
    SuiteOutcome::from_failures("permutation-equivariance", instances, failures)
}

/// Runs the oracle-backed suites at their standard sizes.
pub fn run_oracle_suites(seed: u64) -> Vec<SuiteOutcome> {
    vec![
        oracle_dominance_suite(seed, 50),
        permutation_equivariance_suite(seed, 20),
    ]
}
