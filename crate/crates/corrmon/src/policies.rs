//! Scheduling policies: which sensor gets the slot.
//!
//! All policies pick exactly one sensor per slot from observable quantities
//! only (the a-priori covariance, ages, or static weights), and all break
//! score ties toward the lowest sensor index so runs are reproducible.

use nalgebra::DVector;
use rand::{Rng, RngExt};

use crate::error::{Error, Result};
use crate::kalman::covariance_step_sensor;
use crate::model::{CovarianceMatrix, SystemModel};

/// Age of information: slots elapsed since each sensor was last observed.
///
/// Ages start at zero before any scheduling and update once per slot: the
/// scheduled sensor resets to 0, every other age increments by 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AoiVector {
    h: Vec<u64>,
}

impl AoiVector {
    pub fn zeros(m: usize) -> Self {
        Self { h: vec![0; m] }
    }

    pub fn from_ages(h: Vec<u64>) -> Self {
        Self { h }
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    pub fn age(&self, i: usize) -> u64 {
        self.h[i]
    }

    pub fn ages(&self) -> &[u64] {
        &self.h
    }

    /// Ages after a slot in which `scheduled` was observed.
    pub fn step(&self, scheduled: usize) -> Result<Self> {
        if scheduled >= self.h.len() {
            return Err(Error::IndexOutOfRange {
                index: scheduled,
                len: self.h.len(),
            });
        }
        let h = self
            .h
            .iter()
            .enumerate()
            .map(|(i, &v)| if i == scheduled { 0 } else { v + 1 })
            .collect();
        Ok(Self { h })
    }
}

/// The policy families the harness and CLI know about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Maximum expected estimation error: argmax `p_ii / sqrt(q_ii)`.
    Mee,
    /// Maximum weighted age: argmax `sqrt(q_ii) * h_i`.
    Mwa,
    /// Whittle-style index on the per-sensor age cost (handles `a_ii > 1`).
    Wiee,
    /// One-step lookahead: argmin of the successor trace.
    Greedy,
    /// Stationary randomized: sensor `i` with probability proportional to
    /// `sqrt(q_ii)`.
    Sr,
    /// Fixed periodic schedule `t mod m`; a correlation-blind baseline.
    RoundRobin,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::Mee,
        PolicyKind::Mwa,
        PolicyKind::Wiee,
        PolicyKind::Greedy,
        PolicyKind::Sr,
        PolicyKind::RoundRobin,
    ];

    /// Canonical name used in configs, CLI arguments, and CSV output.
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Mee => "mee",
            PolicyKind::Mwa => "mwa",
            PolicyKind::Wiee => "wiee",
            PolicyKind::Greedy => "greedy",
            PolicyKind::Sr => "sr",
            PolicyKind::RoundRobin => "round-robin",
        }
    }

    /// Stable RNG stream tag. Streams are keyed by policy identity, not by
    /// position in a run's policy list, so adding a policy to a config
    /// never shifts the draws of the others.
    pub fn stream_tag(self) -> u64 {
        match self {
            PolicyKind::Mee => 0,
            PolicyKind::Mwa => 1,
            PolicyKind::Wiee => 2,
            PolicyKind::Greedy => 3,
            PolicyKind::Sr => 4,
            PolicyKind::RoundRobin => 5,
        }
    }

    /// True for policies whose decisions consume randomness.
    pub fn is_randomized(self) -> bool {
        matches!(self, PolicyKind::Sr)
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown policy {s:?}; expected one of mee, mwa, wiee, greedy, sr, round-robin"
                ))
            })
    }
}

/// Index of the maximum score, ties to the lowest index. Scores must be
/// non-NaN (callers validate their inputs first).
fn argmax(scores: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0usize;
    let mut best_score = f64::NEG_INFINITY;
    for (i, s) in scores.into_iter().enumerate() {
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    best
}

/// Maximum expected error policy: schedule argmax `p_ii / sqrt(q_ii)`.
pub fn mee_decide(p: &CovarianceMatrix, q: &CovarianceMatrix) -> Result<usize> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch(format!(
            "covariance is {}-dimensional but weights are {}-dimensional",
            p.dim(),
            q.dim()
        )));
    }
    for i in 0..q.dim() {
        if q.entry(i, i) <= 0.0 {
            return Err(Error::Domain(format!(
                "mee requires q[{i}][{i}] > 0, got {}",
                q.entry(i, i)
            )));
        }
    }
    Ok(argmax(
        (0..p.dim()).map(|i| p.entry(i, i) / q.entry(i, i).sqrt()),
    ))
}

/// Maximum weighted age policy: schedule argmax `sqrt(q_ii) * h_i`, using
/// the ages as they stood at the end of the previous slot.
pub fn mwa_decide(h: &AoiVector, q: &CovarianceMatrix) -> Result<usize> {
    if h.len() != q.dim() {
        return Err(Error::DimensionMismatch(format!(
            "ages have length {} but weights are {}-dimensional",
            h.len(),
            q.dim()
        )));
    }
    for i in 0..q.dim() {
        if q.entry(i, i) < 0.0 {
            return Err(Error::Domain(format!(
                "mwa requires q[{i}][{i}] >= 0, got {}",
                q.entry(i, i)
            )));
        }
    }
    Ok(argmax(
        (0..h.len()).map(|i| q.entry(i, i).sqrt() * h.age(i) as f64),
    ))
}

/// Natural log of the Whittle-style index for one sensor with variance
/// `q`, gain `a`, and age `h`.
///
/// The index is `(h+1) f(h+1) - sum_{k=0..h} f(k)` for the per-age cost
/// `f(x) = q (a^(2x) - 1) / (a^2 - 1)` (or `q x` when `a = 1`). Working on
/// the log scale keeps sensors comparable when `a^(2h)` overflows `f64`;
/// the index itself is strictly positive for `q > 0`, so the log is always
/// defined.
pub fn wiee_log_index(q: f64, a: f64, h: u64) -> f64 {
    let hp1 = (h + 1) as f64;
    let ln_r = 2.0 * a.ln();
    if ln_r == 0.0 {
        // f(x) = q x telescopes to q (h+1)(h+2)/2.
        return q.ln() + (hp1 * (hp1 + 1.0) / 2.0).ln();
    }
    if hp1 * ln_r <= 500.0 {
        // Comfortably finite: evaluate through expm1 so that gains barely
        // above one do not lose precision to cancellation.
        let e1 = ln_r.exp_m1(); // r - 1
        let eh = (hp1 * ln_r).exp_m1(); // r^(h+1) - 1
        let bracket = hp1 * eh - eh / e1 + hp1;
        return q.ln() + bracket.ln() - e1.ln();
    }
    // Overflow regime: index = q r^(h+1) / (r-1) * [(h+1) - (1 - r^-(h+1)) / (r-1)].
    // Here (h+1)(r-1) > 500, so the bracket is safely positive, and the
    // r^-(h+1) term underflows harmlessly.
    let r_minus_1 = ln_r.exp_m1();
    let bracket = hp1 - (1.0 - (-hp1 * ln_r).exp()) / r_minus_1;
    q.ln() + hp1 * ln_r - r_minus_1.ln() + bracket.ln()
}

/// The Whittle-style index itself. May overflow to infinity for extreme
/// ages; scheduling decisions go through [`wiee_log_index`] instead.
pub fn wiee_index(q: f64, a: f64, h: u64) -> f64 {
    wiee_log_index(q, a, h).exp()
}

/// Whittle-style index policy: schedule the sensor with the largest index
/// given the ages at the end of the previous slot.
pub fn wiee_decide(h: &AoiVector, model: &SystemModel) -> Result<usize> {
    if h.len() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "ages have length {} but model has {} sensors",
            h.len(),
            model.dim()
        )));
    }
    let q = model.q();
    for i in 0..model.dim() {
        if q.entry(i, i) <= 0.0 {
            return Err(Error::Domain(format!(
                "wiee requires q[{i}][{i}] > 0, got {}",
                q.entry(i, i)
            )));
        }
    }
    Ok(argmax((0..h.len()).map(|i| {
        wiee_log_index(q.entry(i, i), model.a(i), h.age(i))
    })))
}

/// One-step lookahead: schedule the sensor whose observation minimizes the
/// successor covariance trace, ties to the lowest index.
pub fn greedy_decide(p: &CovarianceMatrix, model: &SystemModel) -> Result<usize> {
    let m = model.dim();
    let mut best = 0usize;
    let mut best_trace = f64::INFINITY;
    for j in 0..m {
        let trace = covariance_step_sensor(p, j, model)?.trace();
        if trace < best_trace {
            best = j;
            best_trace = trace;
        }
    }
    Ok(best)
}

/// Stationary randomized policy: sensor `i` with probability
/// `sqrt(q_ii) / sum_j sqrt(q_jj)`, drawn by inverse CDF from a single
/// uniform variate so the stream advances one draw per slot.
pub fn sr_decide(q: &CovarianceMatrix, rng: &mut impl Rng) -> Result<usize> {
    let m = q.dim();
    let weights: Vec<f64> = (0..m).map(|i| q.entry(i, i)).collect();
    if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
        return Err(Error::Domain("sr requires finite q_ii >= 0".into()));
    }
    let sqrt_weights: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let total: f64 = sqrt_weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Domain(
            "sr requires at least one positive variance".into(),
        ));
    }
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in sqrt_weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return Ok(i);
        }
    }
    // Rounding can push `acc` fractionally below `total`; fall back to the
    // last sensor with positive weight.
    Ok(sqrt_weights
        .iter()
        .rposition(|w| *w > 0.0)
        .expect("total > 0 implies a positive weight"))
}

/// Fixed periodic schedule: slot `t` goes to sensor `t mod m`.
pub fn round_robin_decide(t: u64, m: usize) -> Result<usize> {
    if m == 0 {
        return Err(Error::Domain("round-robin needs at least one sensor".into()));
    }
    Ok((t % m as u64) as usize)
}

/// Everything a policy may look at when making a decision.
#[derive(Debug, Clone, Copy)]
pub struct DecisionContext<'a> {
    /// Slot index being scheduled.
    pub t: u64,
    /// Ages at the end of the previous slot.
    pub h: &'a AoiVector,
    /// A-priori covariance at the top of the slot.
    pub p: &'a CovarianceMatrix,
    pub model: &'a SystemModel,
}

/// Dispatches to the policy's decision function. `rng` is consumed only by
/// randomized policies.
pub fn decide(
    kind: PolicyKind,
    ctx: DecisionContext<'_>,
    rng: &mut impl Rng,
) -> Result<usize> {
    match kind {
        PolicyKind::Mee => mee_decide(ctx.p, ctx.model.q()),
        PolicyKind::Mwa => mwa_decide(ctx.h, ctx.model.q()),
        PolicyKind::Wiee => wiee_decide(ctx.h, ctx.model),
        PolicyKind::Greedy => greedy_decide(ctx.p, ctx.model),
        PolicyKind::Sr => sr_decide(ctx.model.q(), rng),
        PolicyKind::RoundRobin => round_robin_decide(ctx.t, ctx.model.dim()),
    }
}

/// Per-sensor SR probabilities, exposed for diagnostics and tests.
pub fn sr_probabilities(q: &CovarianceMatrix) -> Result<DVector<f64>> {
    let m = q.dim();
    let sqrt_weights: Vec<f64> = (0..m).map(|i| q.entry(i, i).max(0.0).sqrt()).collect();
    let total: f64 = sqrt_weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Domain(
            "sr requires at least one positive variance".into(),
        ));
    }
    Ok(DVector::from_iterator(
        m,
        sqrt_weights.iter().map(|w| w / total),
    ))
}
