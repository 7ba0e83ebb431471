//! System model: covariance matrices, linear-Gaussian dynamics, and
//! process-noise sampling.
//!
//! The monitored plant is a vector AR(1) process
//!
//! ```text
//! x[t+1] = A x[t] + w[t],      w[t] ~ N(0, Q) i.i.d.
//! ```
//!
//! with `A` diagonal (entries `a_ii >= 1`) and `Q` positive semidefinite.
//! Everything downstream (the Kalman recursion, scheduling policies, and
//! performance bounds) consumes the [`SystemModel`] defined here.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Relative tolerance for the symmetry check on covariance construction.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Relative tolerance for the positive-semidefiniteness check: eigenvalues
/// down to `-PSD_TOL * max |eigenvalue|` are accepted as numerically zero.
pub const PSD_TOL: f64 = 1e-9;

/// Eigenvalues below `RANK_TOL * max eigenvalue` count as zero when
/// determining numerical rank.
pub const RANK_TOL: f64 = 1e-10;

/// A validated symmetric positive-semidefinite matrix.
///
/// Construction via [`CovarianceMatrix::new`] checks squareness, symmetry
/// (to [`SYMMETRY_TOL`], relative), nonnegative diagonal, and positive
/// semidefiniteness (to [`PSD_TOL`], relative to the largest eigenvalue
/// magnitude), then stores an exactly symmetrized copy so that downstream
/// algebra never sees `m[(i, j)] != m[(j, i)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    mat: DMatrix<f64>,
}

impl CovarianceMatrix {
    /// Validates `mat` and wraps it. See the type-level docs for the checks
    /// applied; any violation yields [`Error::Domain`].
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "covariance must be square, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        if mat.is_empty() {
            return Err(Error::Domain("covariance must have dimension >= 1".into()));
        }
        if mat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("covariance has non-finite entries".into()));
        }
        let scale = mat.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
        for i in 0..mat.nrows() {
            for j in (i + 1)..mat.ncols() {
                if (mat[(i, j)] - mat[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::Domain(format!(
                        "covariance not symmetric at ({i}, {j}): {} vs {}",
                        mat[(i, j)],
                        mat[(j, i)]
                    )));
                }
            }
        }
        for i in 0..mat.nrows() {
            if mat[(i, i)] < -SYMMETRY_TOL * scale {
                return Err(Error::Domain(format!(
                    "covariance has negative diagonal entry {} at index {i}",
                    mat[(i, i)]
                )));
            }
        }
        let sym = Self::from_symmetric_unchecked(mat);
        let eigs = sym.eigenvalues_desc();
        let eig_scale = eigs.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let min = eigs.last().copied().unwrap_or(0.0);
        if min < -PSD_TOL * eig_scale {
            return Err(Error::Domain(format!(
                "covariance is not positive semidefinite: min eigenvalue {min:.6e}"
            )));
        }
        Ok(sym)
    }

    /// Wraps a matrix that is positive semidefinite by construction,
    /// symmetrizing it exactly as `(M + M') / 2`. Callers must guarantee
    /// PSD-ness; this skips the eigenvalue check that `new` performs.
    pub(crate) fn from_symmetric_unchecked(mat: DMatrix<f64>) -> Self {
        debug_assert_eq!(mat.nrows(), mat.ncols());
        let sym = (&mat + mat.transpose()) * 0.5;
        Self { mat: sym }
    }

    /// The all-zero covariance (a deterministic process).
    pub fn zeros(m: usize) -> Self {
        Self {
            mat: DMatrix::zeros(m, m),
        }
    }

    /// The identity covariance.
    pub fn identity(m: usize) -> Self {
        Self {
            mat: DMatrix::identity(m, m),
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.mat[(i, j)]
    }

    pub fn diagonal(&self) -> DVector<f64> {
        self.mat.diagonal()
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace()
    }

    /// True when every off-diagonal entry is exactly zero.
    pub fn is_diagonal(&self) -> bool {
        let m = self.dim();
        (0..m).all(|i| (0..m).all(|j| i == j || self.mat[(i, j)] == 0.0))
    }

    /// Eigenvalues sorted in descending order, so index 0 is the largest.
    pub fn eigenvalues_desc(&self) -> Vec<f64> {
        eigenvalues_desc(&self.mat)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues_desc().last().copied().unwrap_or(0.0)
    }
}

/// Eigenvalues of a symmetric matrix, sorted descending.
pub(crate) fn eigenvalues_desc(mat: &DMatrix<f64>) -> Vec<f64> {
    let mut eigs: Vec<f64> = mat.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    eigs.sort_by(|a, b| b.partial_cmp(a).expect("eigenvalues are finite"));
    eigs
}

/// The linear-Gaussian system being monitored: diagonal dynamics `A` and
/// process-noise covariance `Q` over `m` sensors.
#[derive(Debug, Clone)]
pub struct SystemModel {
    a_diag: DVector<f64>,
    q: CovarianceMatrix,
}

impl SystemModel {
    /// Builds a model with per-sensor dynamics gains `a_diag` (each `>= 1`)
    /// and noise covariance `q`.
    pub fn new(a_diag: DVector<f64>, q: CovarianceMatrix) -> Result<Self> {
        if a_diag.len() != q.dim() {
            return Err(Error::DimensionMismatch(format!(
                "dynamics diagonal has length {} but covariance is {}x{}",
                a_diag.len(),
                q.dim(),
                q.dim()
            )));
        }
        if a_diag.iter().any(|a| !a.is_finite() || *a < 1.0) {
            return Err(Error::Domain(
                "dynamics gains must be finite and >= 1".into(),
            ));
        }
        Ok(Self { a_diag, q })
    }

    /// A model with `A = I`: each component is a discrete Wiener process.
    pub fn wiener(q: CovarianceMatrix) -> Self {
        let m = q.dim();
        Self {
            a_diag: DVector::from_element(m, 1.0),
            q,
        }
    }

    /// A model with `A = scale * I`, `scale >= 1`.
    pub fn scaled_identity(scale: f64, q: CovarianceMatrix) -> Result<Self> {
        let m = q.dim();
        Self::new(DVector::from_element(m, scale), q)
    }

    /// Number of sensors (equivalently, the state dimension).
    pub fn dim(&self) -> usize {
        self.q.dim()
    }

    pub fn a_diag(&self) -> &DVector<f64> {
        &self.a_diag
    }

    pub fn a(&self, i: usize) -> f64 {
        self.a_diag[i]
    }

    pub fn q(&self) -> &CovarianceMatrix {
        &self.q
    }

    /// True when `A = I` exactly.
    pub fn is_wiener(&self) -> bool {
        self.a_diag.iter().all(|a| *a == 1.0)
    }
}

/// State of the monitored process at a discrete time.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessState {
    pub t: u64,
    pub x: DVector<f64>,
}

impl ProcessState {
    /// The conventional start: `x[0] = 0` at `t = 0`.
    pub fn origin(m: usize) -> Self {
        Self {
            t: 0,
            x: DVector::zeros(m),
        }
    }
}

/// Builds the one-parameter symmetric covariance: unit variances with a
/// common correlation `rho` between every pair of sensors.
///
/// The eigenvalues are `1 + rho (m - 1)` (once) and `1 - rho` (with
/// multiplicity `m - 1`), so the construction fails for `rho` outside the
/// PSD range, roughly `(-1/(m-1), 1]` for `m >= 2`.
pub fn make_symmetric_q(m: usize, rho: f64) -> Result<CovarianceMatrix> {
    if m == 0 {
        return Err(Error::Domain("need at least one sensor".into()));
    }
    if !rho.is_finite() {
        return Err(Error::Domain(format!("correlation must be finite, got {rho}")));
    }
    let mat = DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 } else { rho });
    CovarianceMatrix::new(mat)
}

/// Builds the two-group covariance used for heterogeneous experiments:
/// sensors split into two equal halves, the first with unit variances, the
/// second with variance 100, cross-correlated through `10 rho` blocks.
///
/// ```text
/// Q = [ R          10 rho 1 1' ]        r_ii = 1, r_ij = rho
///     [ 10 rho 1 1'   100 R    ]
/// ```
///
/// Requires even `m`; fails if the assembled matrix is not PSD.
pub fn make_block_q(m: usize, rho: f64) -> Result<CovarianceMatrix> {
    if m == 0 || m % 2 != 0 {
        return Err(Error::Domain(format!(
            "block covariance needs an even sensor count, got {m}"
        )));
    }
    if !rho.is_finite() {
        return Err(Error::Domain(format!("correlation must be finite, got {rho}")));
    }
    let half = m / 2;
    let r = |i: usize, j: usize| if i == j { 1.0 } else { rho };
    let mat = DMatrix::from_fn(m, m, |i, j| match (i < half, j < half) {
        (true, true) => r(i, j),
        (false, false) => 100.0 * r(i - half, j - half),
        _ => 10.0 * rho,
    });
    CovarianceMatrix::new(mat)
}

/// A factor `F` with `F F' = Q`, used to draw process noise as `F z` with
/// `z` standard normal. The column count equals the numerical rank of `Q`.
#[derive(Debug, Clone)]
pub struct NoiseFactor {
    f: DMatrix<f64>,
}

impl NoiseFactor {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.f
    }

    /// Numerical rank of the factored covariance.
    pub fn rank(&self) -> usize {
        self.f.ncols()
    }

    /// Draws one noise vector `F z`, consuming `rank()` standard normals
    /// from `rng` in column order.
    pub fn sample(&self, rng: &mut impl Rng) -> DVector<f64> {
        let z = DVector::from_fn(self.f.ncols(), |_, _| rng.sample(StandardNormal));
        &self.f * z
    }
}

/// Factors `q` as `F F'` through its eigendecomposition.
///
/// Eigenvalues in `[-PSD_TOL * max, 0]` are clipped to zero; anything more
/// negative is rejected. Eigenvalues at or below `RANK_TOL * max` are
/// treated as numerically zero and contribute no column, so the factor is
/// `m x L` with `L` the numerical rank.
pub fn noise_factor(q: &CovarianceMatrix) -> Result<NoiseFactor> {
    let decomp = q.matrix().clone().symmetric_eigen();
    let max_eig = decomp
        .eigenvalues
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let mut cols: Vec<(f64, usize)> = Vec::new();
    for (k, &lam) in decomp.eigenvalues.iter().enumerate() {
        if lam < -PSD_TOL * max_eig.max(1.0) {
            return Err(Error::Domain(format!(
                "covariance eigenvalue {lam:.6e} is negative beyond tolerance"
            )));
        }
        if lam > RANK_TOL * max_eig {
            cols.push((lam, k));
        }
    }
    // Sort by descending eigenvalue so the factor's column order is
    // deterministic regardless of how the eigensolver orders its output.
    cols.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("eigenvalues are finite"));
    let m = q.dim();
    let mut f = DMatrix::zeros(m, cols.len());
    for (out, &(lam, k)) in cols.iter().enumerate() {
        let scaled = decomp.eigenvectors.column(k) * lam.sqrt();
        f.set_column(out, &scaled);
    }
    Ok(NoiseFactor { f })
}

/// Advances the process one step: `x[t+1] = A x[t] + F z`.
///
/// The factor must come from [`noise_factor`] on the model's own `Q`;
/// callers build it once per run instead of refactoring every step.
pub fn step_process(
    state: &ProcessState,
    model: &SystemModel,
    factor: &NoiseFactor,
    rng: &mut impl Rng,
) -> Result<ProcessState> {
    let m = model.dim();
    if state.x.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "process state has dimension {} but model expects {m}",
            state.x.len()
        )));
    }
    if factor.f.nrows() != m {
        return Err(Error::DimensionMismatch(format!(
            "noise factor has {} rows but model expects {m}",
            factor.f.nrows()
        )));
    }
    let mut x = factor.sample(rng);
    for i in 0..m {
        x[i] += model.a(i) * state.x[i];
    }
    Ok(ProcessState { t: state.t + 1, x })
}

/// Deterministic per-stream generator: one root seed fans out into
/// independent streams keyed by `stream`, so adding streams never perturbs
/// existing ones.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
