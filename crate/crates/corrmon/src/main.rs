//! Command-line front end: single-cell runs, parameter sweeps, bound
//! tables, and the numerical verification suites.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use corrmon::harness::{
    bounds_table, run_sweep, run_trajectory, write_bounds_csv, write_steps_csv,
    write_summary_csv, write_sweep_csv, ExperimentConfig,
};
use corrmon::oracle::{run_lemma_suites, run_oracle_suites};
use corrmon::{Error, Result};

/// Seed for `verify` when none is given; the suites are randomized but
/// reproducible.
const DEFAULT_VERIFY_SEED: u64 = 7;

#[derive(Parser)]
#[command(name = "corrmon", version, about = "Scheduling simulator and bounds toolkit for correlated-source monitoring", long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every configured policy on a single parameter cell and
    /// write per-step plus summary CSV files.
    Run {
        /// Experiment description (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Override the config's root seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Exclude the first N slots from summary averages.
        #[arg(long)]
        burn_in: Option<u64>,
        /// Add per-sensor error and age columns to the step files.
        #[arg(long)]
        per_sensor: bool,
    },
    /// Run the full parameter grid and write one summary table.
    Sweep {
        /// Experiment description (TOML) with `m` or `rho` as a list.
        #[arg(long)]
        config: PathBuf,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Override the config's root seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the scaling bounds for every cell of a config as CSV.
    Bounds {
        /// Experiment description (TOML).
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the numerical verification suites and report pass/fail.
    Verify {
        /// Which suites to run.
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
        /// Root seed for the randomized suites.
        #[arg(long, default_value_t = DEFAULT_VERIFY_SEED)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Suite {
    /// Closed-form identities and replay checks.
    Lemmas,
    /// Brute-force schedule optimality and equivariance checks.
    Oracle,
    /// Everything.
    All,
}

/// Applies `CORRMON_THREADS` to the global worker pool before any
/// parallel work starts.
fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("CORRMON_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .parse()
        .map_err(|_| Error::Config(format!("CORRMON_THREADS must be a positive integer, got {raw:?}")))?;
    if threads == 0 {
        return Err(Error::Config(
            "CORRMON_THREADS must be a positive integer, got \"0\"".into(),
        ));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(format!("failed to size the thread pool: {e}")))
}

fn run(
    config: &PathBuf,
    out: &PathBuf,
    seed: Option<u64>,
    burn_in: Option<u64>,
    per_sensor: bool,
) -> Result<()> {
    let mut config = ExperimentConfig::load(config)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(burn_in) = burn_in {
        config.burn_in = burn_in;
    }
    if per_sensor {
        config.per_sensor = true;
    }
    config.validate()?;
    let cell = config.single_cell()?;
    let model = config.build_model(&cell)?;
    std::fs::create_dir_all(out)?;

    let mut summaries = Vec::new();
    for &policy in &config.policies {
        for replication in 0..config.replications {
            let (records, summary) =
                run_trajectory(&config, &model, policy, cell.index, replication)?;
            let name = if config.replications == 1 {
                format!("steps_{policy}.csv")
            } else {
                format!("steps_{policy}_r{replication}.csv")
            };
            let path = out.join(name);
            write_steps_csv(&path, &records)?;
            println!("wrote {}", path.display());
            summaries.push(summary);
        }
    }
    let path = out.join("summary.csv");
    write_summary_csv(&path, &summaries)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn sweep(config: &PathBuf, out: &PathBuf, seed: Option<u64>) -> Result<()> {
    let mut config = ExperimentConfig::load(config)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let rows = run_sweep(&config)?;
    std::fs::create_dir_all(out)?;
    let path = out.join("sweep.csv");
    write_sweep_csv(&path, &rows)?;
    println!("wrote {}", path.display());
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    if failed > 0 {
        eprintln!("warning: {failed} of {} rows failed; see the status column", rows.len());
    }
    Ok(())
}

fn bounds(config: &PathBuf) -> Result<()> {
    let config = ExperimentConfig::load(config)?;
    let rows = bounds_table(&config)?;
    write_bounds_csv(std::io::stdout().lock(), &rows)
}

fn verify(suite: Suite, seed: u64) -> Result<bool> {
    let mut outcomes = Vec::new();
    if matches!(suite, Suite::Lemmas | Suite::All) {
        outcomes.extend(run_lemma_suites(seed));
    }
    if matches!(suite, Suite::Oracle | Suite::All) {
        outcomes.extend(run_oracle_suites(seed));
    }
    let mut all_pass = true;
    for o in &outcomes {
        if o.pass() {
            println!("PASS {} ({} cases)", o.name, o.cases);
        } else {
            all_pass = false;
            println!(
                "FAIL {} ({} of {} cases): {}",
                o.name, o.failures, o.cases, o.detail
            );
        }
    }
    Ok(all_pass)
}

fn main() -> ExitCode {
    // Exit codes: 0 success, 1 any error, 2 verification failure. Clap's
    // default usage-error code is 2, which would collide with the
    // verification meaning, so parse errors are remapped to 1 here.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::FAILURE;
        }
        Err(help_or_version) => {
            let _ = help_or_version.print();
            return ExitCode::SUCCESS;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("corrmon: {e}");
        return ExitCode::FAILURE;
    }
    let outcome = match &cli.command {
        Command::Run {
            config,
            out,
            seed,
            burn_in,
            per_sensor,
        } => run(config, out, *seed, *burn_in, *per_sensor).map(|()| ExitCode::SUCCESS),
        Command::Sweep { config, out, seed } => {
            sweep(config, out, *seed).map(|()| ExitCode::SUCCESS)
        }
        Command::Bounds { config } => bounds(config).map(|()| ExitCode::SUCCESS),
        Command::Verify { suite, seed } => verify(*suite, *seed).map(|ok| {
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("corrmon: {e}");
        ExitCode::FAILURE
    })
}
