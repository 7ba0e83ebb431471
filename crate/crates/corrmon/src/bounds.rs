//! Performance bounds: per-step error sandwiches driven by age of
//! information, long-run scaling bounds, and the low-rank reduction that
//! extends them to singular noise covariances.
//!
//! The central objects are the conditional variances
//!
//! ```text
//! q~_ii = q_ii - q_i' Q_{-i}^{-1} q_i
//! ```
//!
//! (the Schur complement of `Q` onto sensor `i`), which quantify how much
//! of sensor `i`'s noise the other sensors cannot explain. They weight the
//! lower halves of every bound in this module; the raw variances `q_ii`
//! weight the upper halves.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{eigenvalues_desc, CovarianceMatrix, SystemModel};
use crate::policies::AoiVector;

/// Condition-number ceiling for the `Q_{-i}` inversions inside
/// [`schur_weights`]; worse-conditioned inputs are rejected.
pub const COND_LIMIT: f64 = 1e12;

/// Default numerical-rank tolerance for [`low_rank_reduce`]: eigenvalues
/// below `rank_tol * max_eigenvalue` count as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// A lower/upper pair bracketing the same quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundPair {
    pub lower: f64,
    pub upper: f64,
}

impl BoundPair {
    /// The pair with a vacuous (negative) lower bound clamped to zero, the
    /// form used in reports.
    pub fn clamped(self) -> Self {
        Self {
            lower: self.lower.max(0.0),
            upper: self.upper,
        }
    }

    /// True when the raw lower bound was negative and carries no
    /// information.
    pub fn lower_is_vacuous(self) -> bool {
        self.lower < 0.0
    }
}

/// Conditional variances `q~_ii` for a strictly positive definite `Q`.
///
/// Fails with [`Error::SingularMatrix`] when `Q` is singular or its
/// condition number exceeds [`COND_LIMIT`] (Cauchy interlacing guarantees
/// every `Q_{-i}` is then at least as well conditioned, so one spectrum
/// check covers all `m` inversions).
pub fn schur_weights(q: &CovarianceMatrix) -> Result<Vec<f64>> {
    let m = q.dim();
    let eigs = q.eigenvalues_desc();
    let lam_max = eigs[0];
    let lam_min = eigs[m - 1];
    if lam_min <= 0.0 || lam_max / lam_min > COND_LIMIT {
        return Err(Error::SingularMatrix(format!(
            "schur weights need Q > 0 with condition below {COND_LIMIT:.0e}; \
             eigenvalue range [{lam_min:.6e}, {lam_max:.6e}]"
        )));
    }
    if m == 1 {
        return Ok(vec![q.entry(0, 0)]);
    }
    let mut weights = Vec::with_capacity(m);
    for i in 0..m {
        let others: Vec<usize> = (0..m).filter(|&j| j != i).collect();
        let q_minus =
            DMatrix::from_fn(m - 1, m - 1, |r, c| q.entry(others[r], others[c]));
        let q_i = DVector::from_fn(m - 1, |r, _| q.entry(others[r], i));
        let chol = Cholesky::new(q_minus).ok_or_else(|| {
            Error::SingularMatrix(format!(
                "principal submatrix excluding sensor {i} is not positive definite"
            ))
        })?;
        let x = chol.solve(&q_i);
        weights.push(q.entry(i, i) - q_i.dot(&x));
    }
    Ok(weights)
}

/// Age-to-error growth factor `G(a, h)`: how many noise quanta a sensor
/// accumulates `h` slots after its last observation.
///
/// `G = h` for `a = 1` and `(a^(2h) - 1) / (a^2 - 1)` otherwise; in both
/// cases `G(a, 0) = 0`, matching zero error right after an observation.
pub fn geometric_age_factor(a: f64, h: u64) -> f64 {
    if a == 1.0 {
        h as f64
    } else {
        let r = a * a;
        (r.powf(h as f64) - 1.0) / (r - 1.0)
    }
}

/// The inclusive geometric sum `sum_{k=0..h} a^(2k)`, the alternative
/// display form of the growth factor. It runs exactly one slot ahead:
/// `geometric_age_sum(a, h) == geometric_age_factor(a, h + 1)`.
pub fn geometric_age_sum(a: f64, h: u64) -> f64 {
    geometric_age_factor(a, h + 1)
}

/// Per-sensor error sandwich at the current ages: sensor `i`'s expected
/// error is bracketed by `[q~_ii G(a_i, h_i), q_ii G(a_i, h_i)]`.
///
/// `q_tilde` comes from [`schur_weights`] on the model's own `Q`, computed
/// once per run rather than per step.
pub fn per_step_bounds(
    h: &AoiVector,
    model: &SystemModel,
    q_tilde: &[f64],
) -> Result<Vec<BoundPair>> {
    let m = model.dim();
    if h.len() != m || q_tilde.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "ages ({}), weights ({}), and model ({m}) disagree",
            h.len(),
            q_tilde.len()
        )));
    }
    Ok((0..m)
        .map(|i| {
            let g = geometric_age_factor(model.a(i), h.age(i));
            BoundPair {
                lower: q_tilde[i] * g,
                upper: model.q().entry(i, i) * g,
            }
        })
        .collect())
}

/// Long-run scaling bounds for `A = I` and `Q > 0`: the time-averaged total
/// estimation error of the best possible schedule lies in
///
/// ```text
/// [ (sum_i sqrt(q~_ii))^2 / 2 - sum_i q~_ii / 2 ,  (sum_i sqrt(q_ii))^2 - sum_i q_ii ]
/// ```
pub fn full_rank_scaling_bounds(q: &CovarianceMatrix) -> Result<BoundPair> {
    let q_tilde = schur_weights(q)?;
    let s_sqrt: f64 = q_tilde.iter().map(|v| v.sqrt()).sum();
    let s_sum: f64 = q_tilde.iter().sum();
    let u_sqrt: f64 = (0..q.dim()).map(|i| q.entry(i, i).sqrt()).sum();
    let u_sum: f64 = (0..q.dim()).map(|i| q.entry(i, i)).sum();
    Ok(BoundPair {
        lower: 0.5 * s_sqrt * s_sqrt - 0.5 * s_sum,
        upper: u_sqrt * u_sqrt - u_sum,
    })
}

/// Factor-of-optimality certificate: the constant `kappa` such that the
/// stationary randomized policy (hence also MEE / MWA, which dominate it in
/// drift) is within `kappa` of optimal:
///
/// ```text
/// kappa = 2 [ (sum sqrt(q_ii))^2 - sum q_ii ] / [ (sum sqrt(q~_ii))^2 - sum q~_ii ]
/// ```
///
/// Diagonal `Q` gives exactly 2; correlations only raise it.
pub fn guarantee_ratio(q: &CovarianceMatrix) -> Result<f64> {
    let q_tilde = schur_weights(q)?;
    let s_sqrt: f64 = q_tilde.iter().map(|v| v.sqrt()).sum();
    let s_sum: f64 = q_tilde.iter().sum();
    let denom = s_sqrt * s_sqrt - s_sum;
    if denom <= 1e-12 {
        return Err(Error::DegenerateBound(format!(
            "guarantee ratio undefined: conditional-variance spread {denom:.3e} vanishes \
             (single sensor?)"
        )));
    }
    let u_sqrt: f64 = (0..q.dim()).map(|i| q.entry(i, i).sqrt()).sum();
    let u_sum: f64 = (0..q.dim()).map(|i| q.entry(i, i)).sum();
    Ok(2.0 * (u_sqrt * u_sqrt - u_sum) / denom)
}

/// Exact reduction of a rank-deficient `Q` onto a strictly positive
/// definite core: `Q = H Q' H'` with `H = [rows of I for kept; alpha for
/// dropped]`.
#[derive(Debug, Clone)]
pub struct LowRankReduction {
    /// Indices of the kept sensors: the first `L` rows of `Q` that are
    /// linearly independent, in ascending order.
    pub kept: Vec<usize>,
    /// Indices of the dropped (linearly dependent) sensors, ascending.
    pub dropped: Vec<usize>,
    /// Coefficients expressing each dropped sensor's noise as a linear
    /// combination of the kept ones; row `r` corresponds to `dropped[r]`.
    pub alpha: DMatrix<f64>,
    /// The kept-by-kept core `Q'`, strictly positive definite.
    pub q_reduced: CovarianceMatrix,
}

impl LowRankReduction {
    /// Numerical rank `L` of the original matrix.
    pub fn rank(&self) -> usize {
        self.kept.len()
    }

    /// The lifting matrix `H` (original dimension by `L`), with identity
    /// rows for kept sensors and `alpha` rows for dropped ones.
    pub fn lift_matrix(&self) -> DMatrix<f64> {
        let m = self.kept.len() + self.dropped.len();
        let l = self.kept.len();
        let mut h = DMatrix::zeros(m, l);
        for (pos, &i) in self.kept.iter().enumerate() {
            h[(i, pos)] = 1.0;
        }
        for (r, &i) in self.dropped.iter().enumerate() {
            for c in 0..l {
                h[(i, c)] = self.alpha[(r, c)];
            }
        }
        h
    }

    /// Reassembles `H Q' H'`, which must reproduce the original matrix.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let h = self.lift_matrix();
        &h * self.q_reduced.matrix() * h.transpose()
    }
}

/// Splits a singular covariance into an invertible core plus exact linear
/// dependences, keeping the first maximal set of linearly independent rows.
///
/// Row `i` joins the kept set when its conditional variance given the rows
/// already kept exceeds `rank_tol * max_eigenvalue(q)`. Fails with
/// [`Error::FullRank`] when every row is kept (nothing to reduce) and
/// [`Error::Domain`] for a nonpositive or non-finite `rank_tol`.
pub fn low_rank_reduce(q: &CovarianceMatrix, rank_tol: f64) -> Result<LowRankReduction> {
    if !rank_tol.is_finite() || rank_tol <= 0.0 {
        return Err(Error::Domain(format!(
            "rank tolerance must be positive and finite, got {rank_tol}"
        )));
    }
    let m = q.dim();
    let lam_max = q.eigenvalues_desc()[0].max(0.0);
    let threshold = rank_tol * lam_max;
    let mut kept: Vec<usize> = Vec::new();
    let mut dropped: Vec<usize> = Vec::new();
    for i in 0..m {
        let resid = if kept.is_empty() {
            q.entry(i, i)
        } else {
            let sub = DMatrix::from_fn(kept.len(), kept.len(), |r, c| {
                q.entry(kept[r], kept[c])
            });
            let rhs = DVector::from_fn(kept.len(), |r, _| q.entry(kept[r], i));
            let chol = Cholesky::new(sub).ok_or_else(|| {
                Error::SingularMatrix(
                    "kept rows lost positive definiteness during reduction".into(),
                )
            })?;
            q.entry(i, i) - rhs.dot(&chol.solve(&rhs))
        };
        if resid > threshold {
            kept.push(i);
        } else {
            dropped.push(i);
        }
    }
    let l = kept.len();
    if l == m {
        return Err(Error::FullRank { rank: l });
    }
    let core = DMatrix::from_fn(l, l, |r, c| q.entry(kept[r], kept[c]));
    let mut alpha = DMatrix::zeros(dropped.len(), l);
    if l > 0 {
        let chol = Cholesky::new(core.clone()).ok_or_else(|| {
            Error::SingularMatrix("reduced core is not positive definite".into())
        })?;
        for (r, &i) in dropped.iter().enumerate() {
            let rhs = DVector::from_fn(l, |k, _| q.entry(kept[k], i));
            let coeffs = chol.solve(&rhs);
            for c in 0..l {
                alpha[(r, c)] = coeffs[c];
            }
        }
    }
    let q_reduced = CovarianceMatrix::new(core).map_err(|e| {
        Error::SingularMatrix(format!("reduced core failed validation: {e}"))
    })?;
    Ok(LowRankReduction {
        kept,
        dropped,
        alpha,
        q_reduced,
    })
}

/// Scaling bounds for a rank-deficient `Q`, obtained by bounding the
/// reduced `L`-sensor system and paying for the lift.
#[derive(Debug, Clone)]
pub struct LowRankBounds {
    /// Raw bounds; the lower side may be negative (vacuous). Use
    /// [`BoundPair::clamped`] for reporting.
    pub pair: BoundPair,
    /// Lifting constant `lambda_max(I + alpha' alpha)` multiplying the
    /// reduced upper bound.
    pub lift_constant: f64,
    /// Numerical rank of `Q`.
    pub rank: usize,
}

/// Long-run scaling bounds when `Q` is singular:
///
/// ```text
/// LB = L (L + 1) / 2 * lambda_min(Q') - trace(Q)
/// UB = lambda_max(I + alpha' alpha) * [ (sum_kept sqrt(q'_ii))^2 - sum_kept q'_ii ]
/// ```
pub fn low_rank_scaling_bounds(
    q: &CovarianceMatrix,
    rank_tol: f64,
) -> Result<LowRankBounds> {
    let red = low_rank_reduce(q, rank_tol)?;
    let l = red.rank();
    let lam_min_core = red.q_reduced.min_eigenvalue();
    let lower = (l * (l + 1)) as f64 / 2.0 * lam_min_core - q.trace();
    let gram = DMatrix::identity(l, l) + red.alpha.transpose() * &red.alpha;
    let lift_constant = eigenvalues_desc(&gram)[0];
    let s_sqrt: f64 = (0..l).map(|i| red.q_reduced.entry(i, i).sqrt()).sum();
    let s_sum: f64 = (0..l).map(|i| red.q_reduced.entry(i, i)).sum();
    let upper = lift_constant * (s_sqrt * s_sqrt - s_sum);
    Ok(LowRankBounds {
        pair: BoundPair { lower, upper },
        lift_constant,
        rank: l,
    })
}

/// Long-run lower bound for strictly expanding dynamics (`min_i a_i^2 > 1`):
///
/// ```text
/// LB = [lam^(M+1) - (M+1) lam - M] / [lam_1 (lam - 1)^2] * lambda_min(Q)
///      - trace(Q) / lam_1
/// ```
///
/// with `lam = min_i a_i^2` and `lam_1 = max_i a_i^2`. The raw value may be
/// negative (vacuous) for small systems; callers clamp for reporting.
pub fn general_a_lower_bound(model: &SystemModel) -> Result<f64> {
    let m = model.dim() as f64;
    let lam = model
        .a_diag()
        .iter()
        .fold(f64::INFINITY, |acc, a| acc.min(a * a));
    let lam_1 = model
        .a_diag()
        .iter()
        .fold(0.0_f64, |acc, a| acc.max(a * a));
    if lam <= 1.0 + 1e-12 {
        return Err(Error::Domain(format!(
            "general-dynamics lower bound needs min a_i^2 > 1, got {lam}"
        )));
    }
    let q = model.q();
    let qmin = q.min_eigenvalue().max(0.0);
    let numer = lam.powf(m + 1.0) - (m + 1.0) * lam - m;
    Ok(numer / (lam_1 * (lam - 1.0) * (lam - 1.0)) * qmin - q.trace() / lam_1)
}
