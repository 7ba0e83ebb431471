//! Declarative experiment configuration: a flat TOML file names a scenario,
//! its parameter axes, the policies to run, and the execution mode. One
//! config drives `run`, `sweep`, and `bounds` alike.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{make_block_q, make_symmetric_q, CovarianceMatrix, SystemModel};
use crate::policies::PolicyKind;

/// Named model constructions covering the standard experiment families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Unit variances with a common correlation `rho`.
    Symmetric,
    /// Two symmetric blocks of unequal scale with cross-correlation.
    Block,
    /// The symmetric family swept over a list of `rho` values.
    RhoSweep,
    /// Symmetric noise with expanding dynamics `A = a_scale * I`,
    /// `a_scale > 1`.
    DiagA,
    /// A rank-`m/2` covariance: two perfectly correlated copies of a
    /// symmetric block, exercising the singular-noise machinery.
    LowRank,
    /// Covariance loaded verbatim from `matrix_file`.
    CustomMatrixFile,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Symmetric => "symmetric",
            Scenario::Block => "block",
            Scenario::RhoSweep => "rho_sweep",
            Scenario::DiagA => "diag_a",
            Scenario::LowRank => "low_rank",
            Scenario::CustomMatrixFile => "custom_matrix_file",
        }
    }
}

/// Execution mode: propagate covariances analytically, or also sample
/// trajectories and filter them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    CovarianceOnly,
    MonteCarlo,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::CovarianceOnly => "covariance_only",
            Mode::MonteCarlo => "monte_carlo",
        }
    }
}

/// A parameter that is either a single value or a swept list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Copy> Axis<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            Axis::One(v) => vec![*v],
            Axis::Many(vs) => vs.clone(),
        }
    }

    pub fn is_list(&self) -> bool {
        matches!(self, Axis::Many(_))
    }

    /// The value, when this axis is a scalar.
    pub fn scalar(&self) -> Option<T> {
        match self {
            Axis::One(v) => Some(*v),
            Axis::Many(_) => None,
        }
    }
}

fn default_a_scale() -> f64 {
    1.0
}

fn default_replications() -> u32 {
    1
}

/// A complete experiment description. See the repository README for the
/// config grammar and a commented example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    /// Number of sensors; a list turns the run into a sweep axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<Axis<usize>>,
    /// Common correlation; a list turns the run into a sweep axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<Axis<f64>>,
    /// Diagonal dynamics gain, `>= 1`; `1` is the driftless model.
    #[serde(default = "default_a_scale")]
    pub a_scale: f64,
    pub policies: Vec<PolicyKind>,
    /// Number of slots per trajectory.
    pub horizon: u64,
    pub seed: u64,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_replications")]
    pub replications: u32,
    /// Covariance file for the `custom_matrix_file` scenario:
    /// comma-separated rows, one per line, `#` comments allowed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix_file: Option<PathBuf>,
    /// Emit per-sensor error and age columns in step CSVs.
    #[serde(default)]
    pub per_sensor: bool,
    /// Slots excluded from the front of summary averages. Step records are
    /// always emitted for the full horizon.
    #[serde(default)]
    pub burn_in: u64,
}

impl ExperimentConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Serializes back to TOML; `parse(serialize(parse(x)))` is identical
    /// to `parse(x)`.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn m_axis(&self) -> Result<&Axis<usize>> {
        self.m.as_ref().ok_or_else(|| {
            Error::Config(format!(
                "scenario {} requires the field `m`",
                self.scenario.name()
            ))
        })
    }

    fn rho_axis(&self) -> Result<&Axis<f64>> {
        self.rho.as_ref().ok_or_else(|| {
            Error::Config(format!(
                "scenario {} requires the field `rho`",
                self.scenario.name()
            ))
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.burn_in >= self.horizon {
            return Err(Error::Config(format!(
                "burn_in ({}) must be smaller than horizon ({})",
                self.burn_in, self.horizon
            )));
        }
        if !self.a_scale.is_finite() || self.a_scale < 1.0 {
            return Err(Error::Config(format!(
                "a_scale must be finite and >= 1, got {}",
                self.a_scale
            )));
        }
        if self.policies.is_empty() {
            return Err(Error::Config("policies must not be empty".into()));
        }
        for (i, kind) in self.policies.iter().enumerate() {
            if self.policies[..i].contains(kind) {
                return Err(Error::Config(format!("duplicate policy {kind}")));
            }
        }
        if self.replications > 1
            && self.policies.contains(&PolicyKind::Sr)
            && self.mode != Mode::MonteCarlo
        {
            return Err(Error::Config(
                "averaging sr over replications requires mode = \"monte_carlo\"".into(),
            ));
        }
        match self.scenario {
            Scenario::CustomMatrixFile => {
                if self.matrix_file.is_none() {
                    return Err(Error::Config(
                        "scenario custom_matrix_file requires the field `matrix_file`"
                            .into(),
                    ));
                }
                if self.m.as_ref().is_some_and(Axis::is_list)
                    || self.rho.as_ref().is_some_and(Axis::is_list)
                {
                    return Err(Error::Config(
                        "custom_matrix_file cannot sweep m or rho".into(),
                    ));
                }
            }
            scenario => {
                let m_axis = self.m_axis()?;
                let rho_axis = self.rho_axis()?;
                for m in m_axis.values() {
                    if m == 0 {
                        return Err(Error::Config("m must be at least 1".into()));
                    }
                    if matches!(scenario, Scenario::Block | Scenario::LowRank)
                        && (m < 2 || m % 2 != 0)
                    {
                        return Err(Error::Config(format!(
                            "scenario {} requires even m >= 2, got {m}",
                            scenario.name()
                        )));
                    }
                }
                for rho in rho_axis.values() {
                    if !rho.is_finite() {
                        return Err(Error::Config(format!("rho must be finite, got {rho}")));
                    }
                }
                if scenario == Scenario::RhoSweep {
                    if !rho_axis.is_list() {
                        return Err(Error::Config(
                            "scenario rho_sweep requires rho to be a list".into(),
                        ));
                    }
                    if m_axis.is_list() {
                        return Err(Error::Config(
                            "scenario rho_sweep sweeps rho only; m must be a scalar"
                                .into(),
                        ));
                    }
                }
                if scenario == Scenario::DiagA && self.a_scale <= 1.0 {
                    return Err(Error::Config(
                        "scenario diag_a requires a_scale > 1".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// The grid of parameter cells this config describes, in deterministic
    /// order (`m` outer, `rho` inner, both as written).
    pub fn cells(&self) -> Result<Vec<Cell>> {
        if self.scenario == Scenario::CustomMatrixFile {
            return Ok(vec![Cell {
                index: 0,
                m: self.m.as_ref().and_then(Axis::scalar),
                rho: None,
            }]);
        }
        let ms = self.m_axis()?.values();
        let rhos = self.rho_axis()?.values();
        let mut cells = Vec::with_capacity(ms.len() * rhos.len());
        for &m in &ms {
            for &rho in &rhos {
                cells.push(Cell {
                    index: cells.len() as u64,
                    m: Some(m),
                    rho: Some(rho),
                });
            }
        }
        Ok(cells)
    }

    /// The unique cell of a non-sweep config; fails when any axis is a
    /// list.
    pub fn single_cell(&self) -> Result<Cell> {
        let swept = self.m.as_ref().is_some_and(Axis::is_list)
            || self.rho.as_ref().is_some_and(Axis::is_list);
        if swept {
            return Err(Error::Config(
                "this config sweeps a parameter; use the sweep command".into(),
            ));
        }
        let mut cells = self.cells()?;
        Ok(cells.remove(0))
    }

    /// True when this config describes a sweep (some axis is a list).
    pub fn is_sweep(&self) -> bool {
        self.m.as_ref().is_some_and(Axis::is_list)
            || self.rho.as_ref().is_some_and(Axis::is_list)
    }

    /// Builds the concrete model for one parameter cell.
    pub fn build_model(&self, cell: &Cell) -> Result<SystemModel> {
        let q = match self.scenario {
            Scenario::Symmetric | Scenario::RhoSweep | Scenario::DiagA => {
                make_symmetric_q(cell.require_m()?, cell.require_rho()?)?
            }
            Scenario::Block => make_block_q(cell.require_m()?, cell.require_rho()?)?,
            Scenario::LowRank => {
                let m = cell.require_m()?;
                let half = make_symmetric_q(m / 2, cell.require_rho()?)?;
                let k = m / 2;
                let tiled =
                    DMatrix::from_fn(m, m, |i, j| half.entry(i % k, j % k));
                CovarianceMatrix::new(tiled)?
            }
            Scenario::CustomMatrixFile => {
                let path = self.matrix_file.as_ref().ok_or_else(|| {
                    Error::Config("matrix_file missing".into())
                })?;
                let q = read_matrix_file(path)?;
                if let Some(m) = cell.m {
                    if m != q.dim() {
                        return Err(Error::Config(format!(
                            "config says m = {m} but {} is {}x{}",
                            path.display(),
                            q.dim(),
                            q.dim()
                        )));
                    }
                }
                q
            }
        };
        SystemModel::scaled_identity(self.a_scale, q)
    }
}

/// One point of the parameter grid. `m`/`rho` are `None` where the
/// scenario does not use them (the custom-matrix scenario infers `m` from
/// the file).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub index: u64,
    pub m: Option<usize>,
    pub rho: Option<f64>,
}

impl Cell {
    fn require_m(&self) -> Result<usize> {
        self.m
            .ok_or_else(|| Error::Config("cell is missing m".into()))
    }

    fn require_rho(&self) -> Result<f64> {
        self.rho
            .ok_or_else(|| Error::Config("cell is missing rho".into()))
    }
}

/// Reads a covariance matrix from a text file: one row per line, entries
/// separated by commas, blank lines and `#` comments ignored.
pub fn read_matrix_file(path: &Path) -> Result<CovarianceMatrix> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let row: Vec<f64> = body
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|_| {
                    Error::Config(format!(
                        "{}:{}: not a number: {cell:?}",
                        path.display(),
                        lineno + 1
                    ))
                })
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Config(format!(
                    "{}:{}: row has {} entries, expected {}",
                    path.display(),
                    lineno + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Config(format!(
            "{}: no matrix rows found",
            path.display()
        )));
    }
    if rows.len() != rows[0].len() {
        return Err(Error::Config(format!(
            "{}: matrix is {}x{}, expected square",
            path.display(),
            rows.len(),
            rows[0].len()
        )));
    }
    let m = rows.len();
    CovarianceMatrix::new(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
scenario = "symmetric"
m = 4
rho = 0.5
policies = ["mee", "mwa"]
horizon = 100
seed = 7
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let config = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(config.scenario, Scenario::Symmetric);
        assert_eq!(config.a_scale, 1.0);
        assert_eq!(config.mode, Mode::CovarianceOnly);
        assert_eq!(config.replications, 1);
        assert!(!config.per_sensor);
        assert_eq!(config.burn_in, 0);
        assert!(!config.is_sweep());
        let cell = config.single_cell().unwrap();
        assert_eq!(cell.m, Some(4));
        assert_eq!(cell.rho, Some(0.5));
    }

    #[test]
    fn roundtrip_is_idempotent() {
        let config = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let text = config.to_toml_string().unwrap();
        let again = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(config, again);
    }

    #[test]
    fn sweep_axes_expand_to_cells_in_order() {
        let config = ExperimentConfig::from_toml_str(
            r#"
scenario = "symmetric"
m = [10, 20]
rho = [0.0, 0.8]
policies = ["mwa"]
horizon = 10
seed = 1
"#,
        )
        .unwrap();
        assert!(config.is_sweep());
        let cells = config.cells().unwrap();
        let grid: Vec<(usize, f64)> = cells
            .iter()
            .map(|c| (c.m.unwrap(), c.rho.unwrap()))
            .collect();
        assert_eq!(
            grid,
            vec![(10, 0.0), (10, 0.8), (20, 0.0), (20, 0.8)]
        );
        assert!(config.single_cell().is_err());
    }

    #[test]
    fn unknown_policy_name_is_a_config_error() {
        let err = ExperimentConfig::from_toml_str(
            r#"
scenario = "symmetric"
m = 4
rho = 0.5
policies = ["mee", "newest-first"]
horizon = 100
seed = 7
"#,
        )
        .unwrap_err();
        let message = err.to_string();
        assert!(message.contains("policies"), "got: {message}");
    }

    #[test]
    fn unknown_field_is_a_config_error() {
        let err =
            ExperimentConfig::from_toml_str(&format!("{MINIMAL}\nhorizont = 3\n"))
                .unwrap_err();
        assert!(err.to_string().contains("horizont"));
    }

    #[test]
    fn validation_rules_fire() {
        let reject = |patch: &str, needle: &str| {
            let text = format!(
                r#"
scenario = "symmetric"
m = 4
rho = 0.5
policies = ["mee"]
horizon = 100
seed = 7
{patch}
"#
            );
            let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
            assert!(
                err.to_string().contains(needle),
                "patch {patch:?}: expected {needle:?} in {err}"
            );
        };
        reject("replications = 0", "replications");
        reject("burn_in = 100", "burn_in");
        reject("a_scale = 0.5", "a_scale");
        let err = ExperimentConfig::from_toml_str(
            r#"
scenario = "symmetric"
m = 4
rho = 0.5
policies = ["mee", "mee"]
horizon = 100
seed = 7
"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn sr_replication_averaging_requires_monte_carlo() {
        let text = r#"
scenario = "symmetric"
m = 4
rho = 0.5
policies = ["sr"]
horizon = 100
seed = 7
replications = 8
"#;
        let err = ExperimentConfig::from_toml_str(text).unwrap_err();
        assert!(err.to_string().contains("monte_carlo"));
        let ok = format!("{text}mode = \"monte_carlo\"\n");
        ExperimentConfig::from_toml_str(&ok).unwrap();
    }

    #[test]
    fn block_and_low_rank_require_even_m() {
        for scenario in ["block", "low_rank"] {
            let err = ExperimentConfig::from_toml_str(&format!(
                r#"
scenario = "{scenario}"
m = 5
rho = 0.5
policies = ["mee"]
horizon = 10
seed = 1
"#
            ))
            .unwrap_err();
            assert!(err.to_string().contains("even"));
        }
    }

    #[test]
    fn diag_a_requires_expanding_dynamics() {
        let err = ExperimentConfig::from_toml_str(
            r#"
scenario = "diag_a"
m = 4
rho = 0.5
policies = ["wiee"]
horizon = 10
seed = 1
"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("a_scale"));
    }

    #[test]
    fn low_rank_model_is_singular_with_tiled_structure() {
        let config = ExperimentConfig::from_toml_str(
            r#"
scenario = "low_rank"
m = 6
rho = 0.5
policies = ["mee"]
horizon = 10
seed = 1
"#,
        )
        .unwrap();
        let cell = config.single_cell().unwrap();
        let model = config.build_model(&cell).unwrap();
        assert_eq!(model.dim(), 6);
        let eigs = model.q().eigenvalues_desc();
        // Rank m/2: the bottom half of the spectrum vanishes.
        assert!(eigs[2] > 1e-9);
        assert!(eigs[3].abs() <= 1e-9);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(model.q().entry(i, j), model.q().entry(i + 3, j + 3));
                assert_eq!(model.q().entry(i, j), model.q().entry(i + 3, j));
            }
        }
    }

    #[test]
    fn matrix_file_roundtrip_and_diagnostics() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("q.csv");
        std::fs::write(&good, "# a comment\n2.0, 1.0\n1.0, 2.0\n").unwrap();
        let q = read_matrix_file(&good).unwrap();
        assert_eq!(q.dim(), 2);
        assert_eq!(q.entry(0, 1), 1.0);

        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "1.0, x\n").unwrap();
        let err = read_matrix_file(&bad).unwrap_err();
        assert!(err.to_string().contains("bad.csv:1"));

        let ragged = dir.path().join("ragged.csv");
        std::fs::write(&ragged, "1.0, 0.0\n0.0\n").unwrap();
        assert!(read_matrix_file(&ragged).is_err());
    }

    #[test]
    fn custom_scenario_checks_declared_dimension() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.csv");
        std::fs::write(&path, "1.0, 0.0\n0.0, 1.0\n").unwrap();
        let text = format!(
            r#"
scenario = "custom_matrix_file"
matrix_file = "{}"
m = 3
policies = ["mee"]
horizon = 10
seed = 1
"#,
            path.display()
        );
        let config = ExperimentConfig::from_toml_str(&text).unwrap();
        let cell = config.single_cell().unwrap();
        let err = config.build_model(&cell).unwrap_err();
        assert!(err.to_string().contains("m = 3"));
    }
}
