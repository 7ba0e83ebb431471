//! Scheduled Kalman filtering: the a-priori covariance recursion driven by
//! which sensor (or which linear combination) was observed each slot.
//!
//! Observing direction `c` at slot `t` updates the a-priori covariance as
//!
//! ```text
//! P[t+1] = A P[t] A' - (A P[t] c)(A P[t] c)' / (c' P[t] c) + Q
//! ```
//!
//! which for `A = I` is the familiar rank-one conditioning step plus noise
//! injection. The estimate itself is optional: scheduling and all error
//! accounting depend only on `P`, so most experiments run covariance-only.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{CovarianceMatrix, SystemModel};

/// Relative pivot threshold: a step with `c' P c <= PIVOT_TOL * trace(P)`
/// is rejected as carrying no usable information.
pub const PIVOT_TOL: f64 = 1e-12;

/// Expected-error entries in `[-ERROR_CLAMP_TOL, 0)` are treated as
/// floating-point residue and clamped to zero.
pub const ERROR_CLAMP_TOL: f64 = 1e-9;

/// Filter state at the top of slot `t`: the a-priori covariance `P[t]`
/// (before the slot's measurement) and, when estimate tracking is on, the
/// a-posteriori estimate from slot `t - 1`.
#[derive(Debug, Clone)]
pub struct KalmanState {
    pub t: u64,
    pub p: CovarianceMatrix,
    pub xhat: Option<DVector<f64>>,
}

impl KalmanState {
    /// Initial state at `t = 0` with `P[0] = Q` (the error covariance one
    /// slot after a hypothetical perfect observation) and, if requested, a
    /// zero estimate.
    pub fn initial(model: &SystemModel, track_estimate: bool) -> Self {
        Self {
            t: 0,
            p: model.q().clone(),
            xhat: track_estimate.then(|| DVector::zeros(model.dim())),
        }
    }

    /// Initial state with an explicit starting covariance.
    pub fn with_covariance(p: CovarianceMatrix, track_estimate: bool) -> Self {
        let m = p.dim();
        Self {
            t: 0,
            p,
            xhat: track_estimate.then(|| DVector::zeros(m)),
        }
    }
}

fn check_dims(p: &CovarianceMatrix, model: &SystemModel) -> Result<()> {
    if p.dim() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "covariance is {}x{} but model has {} sensors",
            p.dim(),
            p.dim(),
            model.dim()
        )));
    }
    Ok(())
}

/// One covariance step after observing the linear combination `c' x`.
///
/// Fails with [`Error::SingularPivot`] when the observed combination's
/// variance `c' P c` is numerically indistinguishable from zero relative to
/// its own noise floor `c' Q c`. (For covariances produced by this
/// recursion `P >= Q` always holds, so a healthy pivot clears the floor
/// comfortably no matter how large the *other* sensors' variances grow.)
/// The result is symmetrized exactly before being returned, so repeated
/// steps cannot accumulate asymmetry.
pub fn covariance_step(
    p: &CovarianceMatrix,
    c: &DVector<f64>,
    model: &SystemModel,
) -> Result<CovarianceMatrix> {
    check_dims(p, model)?;
    if c.len() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "observation direction has length {} but model has {} sensors",
            c.len(),
            model.dim()
        )));
    }
    let pc = p.matrix() * c;
    let noise_floor = c.dot(&(model.q().matrix() * c));
    step_with_pc(p, &pc, c.dot(&pc), noise_floor, model)
}

/// One covariance step after observing sensor `j` directly. Equivalent to
/// [`covariance_step`] with `c = e_j` but avoids the matrix-vector product.
pub fn covariance_step_sensor(
    p: &CovarianceMatrix,
    j: usize,
    model: &SystemModel,
) -> Result<CovarianceMatrix> {
    check_dims(p, model)?;
    if j >= model.dim() {
        return Err(Error::IndexOutOfRange {
            index: j,
            len: model.dim(),
        });
    }
    let pc = p.matrix().column(j).clone_owned();
    let pivot = pc[j];
    step_with_pc(p, &pc, pivot, model.q().entry(j, j), model)
}

fn pivot_threshold(pivot: f64, noise_floor: f64) -> f64 {
    PIVOT_TOL * (noise_floor + pivot.abs())
}

fn step_with_pc(
    p: &CovarianceMatrix,
    pc: &DVector<f64>,
    pivot: f64,
    noise_floor: f64,
    model: &SystemModel,
) -> Result<CovarianceMatrix> {
    let threshold = pivot_threshold(pivot, noise_floor);
    if !(pivot > threshold) {
        return Err(Error::SingularPivot { pivot, threshold });
    }
    let m = model.dim();
    let a = model.a_diag();
    // A P A' for diagonal A scales entry (i, j) by a_i a_j.
    let mut next = DMatrix::from_fn(m, m, |i, j| a[i] * a[j] * p.entry(i, j));
    // Subtract the conditioning term (A P c)(A P c)' / pivot.
    let u = DVector::from_fn(m, |i, _| a[i] * pc[i]);
    next.ger(-1.0 / pivot, &u, &u, 1.0);
    next += model.q().matrix();
    Ok(CovarianceMatrix::from_symmetric_unchecked(next))
}

/// One full filter step: fold in the measurement `y` of sensor `j` taken at
/// slot `state.t`, then advance the covariance to the next slot.
///
/// The estimate update uses the a-priori prediction `A xhat` and the gain
/// `K = P c / (c' P c)` built from the stored a-priori covariance.
pub fn kalman_update(
    state: &KalmanState,
    j: usize,
    y: f64,
    model: &SystemModel,
) -> Result<KalmanState> {
    check_dims(&state.p, model)?;
    if j >= model.dim() {
        return Err(Error::IndexOutOfRange {
            index: j,
            len: model.dim(),
        });
    }
    let xhat = state.xhat.as_ref().ok_or_else(|| {
        Error::Domain("kalman_update requires estimate tracking to be enabled".into())
    })?;
    if !y.is_finite() {
        return Err(Error::Domain(format!("measurement must be finite, got {y}")));
    }
    let pc = state.p.matrix().column(j).clone_owned();
    let pivot = pc[j];
    let threshold = pivot_threshold(pivot, model.q().entry(j, j));
    if !(pivot > threshold) {
        return Err(Error::SingularPivot { pivot, threshold });
    }
    let a = model.a_diag();
    let xpred = DVector::from_fn(model.dim(), |i, _| a[i] * xhat[i]);
    let xnew = &xpred + (&pc / pivot) * (y - xpred[j]);
    let p_next = step_with_pc(&state.p, &pc, pivot, model.q().entry(j, j), model)?;
    Ok(KalmanState {
        t: state.t + 1,
        p: p_next,
        xhat: Some(xnew),
    })
}

/// Per-sensor expected squared estimation error at the slot that produced
/// `p_next`: component `i` is `(p_next[i][i] - q[i][i]) / a_i^2`.
///
/// Mathematically nonnegative; tiny negative residue (within
/// [`ERROR_CLAMP_TOL`]) is clamped to zero, anything more negative is left
/// alone so downstream checks can catch it.
pub fn expected_error(p_next: &CovarianceMatrix, model: &SystemModel) -> Result<DVector<f64>> {
    check_dims(p_next, model)?;
    let q = model.q();
    Ok(DVector::from_fn(model.dim(), |i, _| {
        let v = (p_next.entry(i, i) - q.entry(i, i)) / (model.a(i) * model.a(i));
        if v < 0.0 && v >= -ERROR_CLAMP_TOL {
            0.0
        } else {
            v
        }
    }))
}

/// Eigenvalue floors that every reachable `P[t]`, `t >= m`, must satisfy:
/// the `k`-th entry (descending eigenvalue order, `k = 0` largest) is
///
/// ```text
/// (m - k) * min_eig(Q)                                  if A = I
/// (lam^(m-k) - 1) / (lam - 1) * min_eig(Q)              otherwise
/// ```
///
/// with `lam = min_i a_i^2`. Their sum is the matching trace floor, which
/// for `A = I` equals `m (m + 1) / 2 * min_eig(Q)`.
pub fn eigenvalue_floors(model: &SystemModel) -> Vec<f64> {
    let m = model.dim();
    let q_min = model.q().min_eigenvalue().max(0.0);
    let lam = model
        .a_diag()
        .iter()
        .fold(f64::INFINITY, |acc, a| acc.min(a * a));
    (0..m)
        .map(|k| {
            let n = (m - k) as f64;
            if lam == 1.0 {
                n * q_min
            } else {
                (lam.powf(n) - 1.0) / (lam - 1.0) * q_min
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{eigenvalues_desc, make_symmetric_q, stream_rng};
    use rand::RngExt;

    fn wiener_identity(m: usize) -> SystemModel {
        SystemModel::wiener(CovarianceMatrix::identity(m))
    }

    #[test]
    fn scheduled_sensor_resets_to_its_noise_variance() {
        // M = 1: whatever P was, observing collapses it back to Q.
        let q = CovarianceMatrix::new(DMatrix::from_element(1, 1, 2.0)).unwrap();
        let model = SystemModel::wiener(q);
        let p = CovarianceMatrix::new(DMatrix::from_element(1, 1, 5.0)).unwrap();
        let next = covariance_step_sensor(&p, 0, &model).unwrap();
        assert!((next.entry(0, 0) - 2.0).abs() <= 1e-12);
    }

    #[test]
    fn identity_case_matches_hand_computation() {
        let model = wiener_identity(2);
        let p = CovarianceMatrix::identity(2);
        let next = covariance_step_sensor(&p, 0, &model).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        assert_eq!(next.matrix(), &want);
    }

    #[test]
    fn correlated_case_matches_hand_computation() {
        // P = [[2,1],[1,2]], observe sensor 0:
        // P c = (2,1)', pivot 2, P - (Pc)(Pc)'/2 + I = [[1,0],[0,2.5]].
        let model = wiener_identity(2);
        let p =
            CovarianceMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        let next = covariance_step_sensor(&p, 0, &model).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.5]);
        assert!((next.matrix() - want).abs().max() <= 1e-12);
    }

    #[test]
    fn scaled_dynamics_case_matches_hand_computation() {
        // A = diag(2,1), P = I, Q = I, observe sensor 0:
        // APA' = diag(4,1), u = (2,0)', pivot 1 -> P' = diag(1,2).
        let q = CovarianceMatrix::identity(2);
        let model = SystemModel::new(DVector::from_vec(vec![2.0, 1.0]), q).unwrap();
        let p = CovarianceMatrix::identity(2);
        let next = covariance_step_sensor(&p, 0, &model).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        assert!((next.matrix() - want).abs().max() <= 1e-12);
    }

    #[test]
    fn zero_pivot_is_rejected() {
        let model = wiener_identity(2);
        let p = CovarianceMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]))
            .unwrap();
        assert!(matches!(
            covariance_step_sensor(&p, 1, &model),
            Err(Error::SingularPivot { .. })
        ));
        // A general direction orthogonal to the informative subspace fails
        // the same way.
        let c = DVector::from_vec(vec![0.0, 1.0]);
        assert!(matches!(
            covariance_step(&p, &c, &model),
            Err(Error::SingularPivot { .. })
        ));
    }

    #[test]
    fn general_direction_agrees_with_sensor_step_on_basis_vectors() {
        let q = make_symmetric_q(3, 0.4).unwrap();
        let model = SystemModel::wiener(q.clone());
        let p = q;
        for j in 0..3 {
            let mut c = DVector::zeros(3);
            c[j] = 1.0;
            let a = covariance_step(&p, &c, &model).unwrap();
            let b = covariance_step_sensor(&p, j, &model).unwrap();
            assert!((a.matrix() - b.matrix()).abs().max() <= 1e-14);
        }
    }

    #[test]
    fn update_with_unit_gain_adopts_the_measurement() {
        let q = CovarianceMatrix::identity(1);
        let model = SystemModel::wiener(q);
        let state = KalmanState::with_covariance(CovarianceMatrix::identity(1), true);
        let next = kalman_update(&state, 0, 3.7, &model).unwrap();
        assert_eq!(next.t, 1);
        assert!((next.xhat.as_ref().unwrap()[0] - 3.7).abs() <= 1e-15);
    }

    #[test]
    fn update_with_uncorrelated_prior_leaves_other_sensor_untouched() {
        let model = wiener_identity(2);
        let state = KalmanState::with_covariance(CovarianceMatrix::identity(2), true);
        let next = kalman_update(&state, 0, 5.0, &model).unwrap();
        let xhat = next.xhat.unwrap();
        assert!((xhat[0] - 5.0).abs() <= 1e-15);
        assert_eq!(xhat[1], 0.0);
    }

    #[test]
    fn update_propagates_through_correlation() {
        let model = wiener_identity(2);
        let p =
            CovarianceMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        let state = KalmanState::with_covariance(p, true);
        let next = kalman_update(&state, 0, 4.0, &model).unwrap();
        let xhat = next.xhat.unwrap();
        assert!((xhat[0] - 4.0).abs() <= 1e-15);
        assert!((xhat[1] - 2.0).abs() <= 1e-15);
    }

    #[test]
    fn update_requires_estimate_tracking() {
        let model = wiener_identity(2);
        let state = KalmanState::initial(&model, false);
        assert!(matches!(
            kalman_update(&state, 0, 1.0, &model),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn expected_error_subtracts_noise_and_rescales() {
        let model = wiener_identity(2);
        let p = CovarianceMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.5]))
            .unwrap();
        let err = expected_error(&p, &model).unwrap();
        assert_eq!(err[0], 0.0);
        assert!((err[1] - 1.5).abs() <= 1e-15);

        let q = CovarianceMatrix::identity(2);
        let scaled = SystemModel::scaled_identity(2.0, q).unwrap();
        let p2 = CovarianceMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]))
            .unwrap();
        let err2 = expected_error(&p2, &scaled).unwrap();
        assert_eq!(err2[0], 0.0);
        assert!((err2[1] - 0.25).abs() <= 1e-15);
    }

    #[test]
    fn expected_error_clamps_tiny_negative_residue() {
        let model = wiener_identity(1);
        let p = CovarianceMatrix::new(DMatrix::from_element(1, 1, 1.0 - 1e-10)).unwrap();
        let err = expected_error(&p, &model).unwrap();
        assert_eq!(err[0], 0.0);
    }

    /// Shared driver: run a random schedule and hand each transition to the
    /// supplied checker.
    fn run_random_schedule(
        model: &SystemModel,
        steps: usize,
        seed: u64,
        mut check: impl FnMut(u64, &CovarianceMatrix, &CovarianceMatrix),
    ) {
        let mut rng = stream_rng(seed, 0);
        let mut p = model.q().clone();
        for t in 0..steps {
            let j = rng.random_range(0..model.dim());
            let next = covariance_step_sensor(&p, j, model).unwrap();
            check(t as u64 + 1, &p, &next);
            p = next;
        }
    }

    #[test]
    fn covariance_dominates_noise_along_random_trajectories() {
        for (seed, m, rho) in [(1u64, 2usize, 0.3), (2, 4, 0.6), (3, 6, 0.8)] {
            let q = make_symmetric_q(m, rho).unwrap();
            let model = SystemModel::wiener(q.clone());
            run_random_schedule(&model, 200, seed, |t, _p, next| {
                let gap = next.matrix() - q.matrix();
                let min = eigenvalues_desc(&gap).last().copied().unwrap();
                assert!(min >= -1e-9, "domination failed at t={t}: min eig {min}");
            });
        }
    }

    #[test]
    fn per_entry_growth_is_bounded_by_one_step_drift() {
        let q = make_symmetric_q(4, 0.5).unwrap();
        let model = SystemModel::scaled_identity(1.3, q.clone()).unwrap();
        run_random_schedule(&model, 200, 11, |_t, p, next| {
            for i in 0..4 {
                let cap = 1.3 * 1.3 * p.entry(i, i) + q.entry(i, i) + 1e-9;
                assert!(next.entry(i, i) <= cap);
            }
        });
    }

    #[test]
    fn eigenvalue_floors_hold_after_warmup() {
        for (seed, scale) in [(5u64, 1.0), (6, 2.0)] {
            let q = make_symmetric_q(4, 0.5).unwrap();
            let model = SystemModel::scaled_identity(scale, q).unwrap();
            let floors = eigenvalue_floors(&model);
            let trace_floor: f64 = floors.iter().sum();
            run_random_schedule(&model, 80, seed, |t, _p, next| {
                if t < 4 {
                    return;
                }
                let eigs = next.eigenvalues_desc();
                for (k, floor) in floors.iter().enumerate() {
                    assert!(
                        eigs[k] >= floor - 1e-9,
                        "eigenvalue {k} = {} below floor {floor} at t={t}",
                        eigs[k]
                    );
                }
                assert!(next.trace() >= trace_floor - 1e-9);
            });
        }
    }

    #[test]
    fn floors_match_closed_forms() {
        let q = make_symmetric_q(3, 0.25).unwrap();
        let q_min = q.min_eigenvalue();
        let wiener = SystemModel::wiener(q.clone());
        let f1 = eigenvalue_floors(&wiener);
        assert!((f1[0] - 3.0 * q_min).abs() <= 1e-12);
        assert!((f1[2] - q_min).abs() <= 1e-12);
        let sum: f64 = f1.iter().sum();
        assert!((sum - 6.0 * q_min).abs() <= 1e-12, "m(m+1)/2 = 6 for m = 3");

        let scaled = SystemModel::scaled_identity(2.0, q).unwrap();
        let f2 = eigenvalue_floors(&scaled);
        // lam = 4: floors are (4^3-1)/3, (4^2-1)/3, (4-1)/3 times min eig.
        assert!((f2[0] - 21.0 * q_min).abs() <= 1e-9);
        assert!((f2[1] - 5.0 * q_min).abs() <= 1e-9);
        assert!((f2[2] - 1.0 * q_min).abs() <= 1e-9);
    }

    #[test]
    fn estimate_error_statistics_match_expected_error() {
        // Monte-Carlo sanity: the one-step prediction error
        // x[t+1] - A xhat[t|t] has covariance P[t+1], so its mean squared
        // norm over many replications should match trace(P[t+1]).
        let q = make_symmetric_q(2, 0.6).unwrap();
        let model = SystemModel::wiener(q.clone());
        let factor = crate::model::noise_factor(&q).unwrap();
        let mut rng = stream_rng(77, 3);
        let reps = 8000usize;
        let steps = 6usize;
        let mut realized = 0.0;
        let mut predicted = 0.0;
        for _ in 0..reps {
            // Draw x[0] ~ N(0, Q) so the filter's initial P[0] = Q is the
            // exact prior and its covariance stays calibrated throughout.
            let mut truth = crate::model::ProcessState {
                t: 0,
                x: factor.sample(&mut rng),
            };
            let mut filt = KalmanState::initial(&model, true);
            for s in 0..steps {
                let j = s % 2;
                let y = truth.x[j];
                filt = kalman_update(&filt, j, y, &model).unwrap();
                truth = crate::model::step_process(&truth, &model, &factor, &mut rng).unwrap();
                let xh = filt.xhat.as_ref().unwrap();
                let pred = DVector::from_fn(2, |i, _| model.a(i) * xh[i]);
                realized += (&truth.x - pred).norm_squared();
                predicted += filt.p.trace();
            }
        }
        let ratio = realized / predicted;
        assert!(
            (ratio - 1.0).abs() < 0.05,
            "realized/predicted = {ratio} drifted from 1"
        );
    }
}
