//! CSV persistence with a pinned column order and lossless float
//! formatting, so identical runs produce byte-identical files.

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::harness::sweep::{BoundsRow, SweepRow};
use crate::harness::trajectory::{TrajectoryRecord, TrajectorySummary};
use crate::policies::PolicyKind;

/// Step-file column order. Wide (per-sensor) output appends
/// `err_0..err_{m-1},aoi_0..aoi_{m-1}` after these.
pub const STEP_HEADER: [&str; 7] = [
    "t",
    "policy",
    "scheduled",
    "trace_p",
    "total_err",
    "lb",
    "ub",
];

/// Formats a float with 17 significant digits, enough for an exact
/// parse-back of every finite `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn format_opt(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

fn format_opt_int<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes per-step records. The wide per-sensor columns appear exactly
/// when the records carry them.
pub fn write_steps_csv(path: &Path, records: &[TrajectoryRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let m = records
        .first()
        .and_then(|r| r.per_sensor_err.as_ref())
        .map_or(0, Vec::len);
    let mut header: Vec<String> = STEP_HEADER.iter().map(|s| s.to_string()).collect();
    header.extend((0..m).map(|i| format!("err_{i}")));
    header.extend((0..m).map(|i| format!("aoi_{i}")));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.t.to_string(),
            r.policy.to_string(),
            r.scheduled.to_string(),
            format_float(r.trace_p),
            format_float(r.total_err),
            format_opt(r.lb),
            format_float(r.ub),
        ];
        if let Some(errs) = &r.per_sensor_err {
            row.extend(errs.iter().map(|&e| format_float(e)));
        }
        if let Some(ages) = &r.aoi {
            row.extend(ages.iter().map(|h| h.to_string()));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn field<'a>(record: &'a csv::StringRecord, idx: usize, row: usize) -> Result<&'a str> {
    record.get(idx).ok_or_else(|| {
        Error::Config(format!("steps csv row {row}: missing column {idx}"))
    })
}

fn parse<T>(record: &csv::StringRecord, idx: usize, row: usize) -> Result<T>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    let raw = field(record, idx, row)?;
    raw.parse().map_err(|e| {
        Error::Config(format!("steps csv row {row} column {idx}: {e} (got {raw:?})"))
    })
}

/// Reads a step file back into records; the inverse of
/// [`write_steps_csv`] for every value it emits.
pub fn read_steps_csv(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .from_path(path)?;
    let mut rows = reader.records();
    let header = match rows.next() {
        Some(h) => h?,
        None => return Err(Error::Config("steps csv: empty file".into())),
    };
    let base = STEP_HEADER.len();
    if header.len() < base || header.iter().take(base).ne(STEP_HEADER) {
        return Err(Error::Config(format!(
            "steps csv: unexpected header {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    let extra = header.len() - base;
    if extra % 2 != 0 {
        return Err(Error::Config(
            "steps csv: per-sensor columns must pair errors with ages".into(),
        ));
    }
    let m = extra / 2;

    let mut records = Vec::new();
    for (i, record) in rows.enumerate() {
        let record = record?;
        let row = i + 2;
        if record.len() != base + extra {
            return Err(Error::Config(format!(
                "steps csv row {row}: expected {} fields, found {}",
                base + extra,
                record.len()
            )));
        }
        let lb_raw = field(&record, 5, row)?;
        let lb = if lb_raw.is_empty() {
            None
        } else {
            Some(parse::<f64>(&record, 5, row)?)
        };
        let per_sensor_err = if m > 0 {
            Some(
                (0..m)
                    .map(|k| parse::<f64>(&record, base + k, row))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        let aoi = if m > 0 {
            Some(
                (0..m)
                    .map(|k| parse::<u64>(&record, base + m + k, row))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        records.push(TrajectoryRecord {
            t: parse(&record, 0, row)?,
            policy: PolicyKind::from_str(field(&record, 1, row)?)?,
            scheduled: parse(&record, 2, row)?,
            trace_p: parse(&record, 3, row)?,
            total_err: parse(&record, 4, row)?,
            lb,
            ub: parse(&record, 6, row)?,
            per_sensor_err,
            aoi,
        });
    }
    Ok(records)
}

/// Writes one summary row per (policy, replication).
pub fn write_summary_csv(path: &Path, summaries: &[TrajectorySummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "policy",
        "replication",
        "m",
        "horizon",
        "burn_in",
        "avg_total_err",
        "avg_norm_err",
        "avg_trace_p",
    ])?;
    for s in summaries {
        w.write_record([
            s.policy.to_string(),
            s.replication.to_string(),
            s.m.to_string(),
            s.horizon.to_string(),
            s.burn_in.to_string(),
            format_float(s.avg_total_err),
            format_float(s.avg_norm_err),
            format_float(s.avg_trace_p),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the sweep table, one row per (cell, policy).
pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    write_sweep_rows(&mut w, rows)
}

fn write_sweep_rows<W: std::io::Write>(w: &mut csv::Writer<W>, rows: &[SweepRow]) -> Result<()> {
    w.write_record([
        "scenario",
        "m",
        "rho",
        "a_scale",
        "policy",
        "horizon",
        "replications",
        "avg_total_err",
        "avg_norm_err",
        "lb",
        "lb_norm",
        "ub",
        "ub_norm",
        "vacuous_lb",
        "status",
    ])?;
    for r in rows {
        w.write_record([
            r.scenario.name().to_string(),
            format_opt_int(r.m),
            format_opt(r.rho),
            format_float(r.a_scale),
            r.policy.to_string(),
            r.horizon.to_string(),
            r.replications.to_string(),
            format_opt(r.avg_total_err),
            format_opt(r.avg_norm_err),
            format_opt(r.lb),
            format_opt(r.lb_norm),
            format_opt(r.ub),
            format_opt(r.ub_norm),
            r.vacuous_lb.to_string(),
            r.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the bounds table for any sink (the CLI points this at stdout).
pub fn write_bounds_csv<W: std::io::Write>(out: W, rows: &[BoundsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "scenario",
        "m",
        "rho",
        "a_scale",
        "lb",
        "ub",
        "guarantee_ratio",
        "vacuous_lb",
        "status",
    ])?;
    for r in rows {
        w.write_record([
            r.scenario.name().to_string(),
            format_opt_int(r.m),
            format_opt(r.rho),
            format_float(r.a_scale),
            format_opt(r.lb),
            format_opt(r.ub),
            format_opt(r.ratio),
            r.vacuous_lb.to_string(),
            r.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ExperimentConfig;
    use crate::harness::trajectory::run_trajectory;
    use crate::model::stream_rng;
    use rand::RngExt;

    fn sample_records(text: &str) -> Vec<TrajectoryRecord> {
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        let cell = cfg.single_cell().unwrap();
        let model = cfg.build_model(&cell).unwrap();
        let policy = cfg.policies[0];
        run_trajectory(&cfg, &model, policy, 0, 0).unwrap().0
    }

    #[test]
    fn format_float_roundtrips_exactly() {
        let mut rng = stream_rng(12, 400);
        for _ in 0..2000 {
            let v: f64 = (rng.random::<f64>() - 0.5) * 10f64.powi(rng.random_range(-300..300));
            assert_eq!(format_float(v).parse::<f64>().unwrap(), v, "{v:?}");
        }
        for v in [0.0, -0.0, f64::MIN_POSITIVE, f64::MAX, 1.0, -1.0 / 3.0] {
            assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn step_file_header_is_pinned() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("steps.csv");
        let records = sample_records(
            r#"
scenario = "symmetric"
m = 3
rho = 0.4
policies = ["mee"]
horizon = 5
seed = 8
"#,
        );
        write_steps_csv(&path, &records).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "t,policy,scheduled,trace_p,total_err,lb,ub"
        );
        assert_eq!(text.lines().count(), 6);
    }

    #[test]
    fn long_trajectory_roundtrips_to_identical_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("steps.csv");
        let records = sample_records(
            r#"
scenario = "symmetric"
m = 2
rho = 0.3
policies = ["mwa"]
horizon = 20000
seed = 4
"#,
        );
        assert_eq!(records.len(), 20000);
        write_steps_csv(&path, &records).unwrap();
        let back = read_steps_csv(&path).unwrap();
        assert_eq!(records, back);
    }

    #[test]
    fn wide_records_roundtrip_with_per_sensor_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("steps.csv");
        let records = sample_records(
            r#"
scenario = "symmetric"
m = 3
rho = 0.5
policies = ["sr"]
horizon = 50
seed = 6
per_sensor = true
"#,
        );
        write_steps_csv(&path, &records).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text
            .lines()
            .next()
            .unwrap()
            .ends_with("err_0,err_1,err_2,aoi_0,aoi_1,aoi_2"));
        assert_eq!(read_steps_csv(&path).unwrap(), records);
    }

    #[test]
    fn singular_noise_leaves_the_lb_column_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("steps.csv");
        let records = sample_records(
            r#"
scenario = "low_rank"
m = 2
rho = 0.0
policies = ["round-robin"]
horizon = 4
seed = 2
"#,
        );
        assert!(records.iter().all(|r| r.lb.is_none()));
        write_steps_csv(&path, &records).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        // ...,lb,ub with lb empty: two adjacent commas in every data row.
        assert!(text.lines().skip(1).all(|l| l.contains(",,")));
        assert_eq!(read_steps_csv(&path).unwrap(), records);
    }

    #[test]
    fn rewriting_the_same_records_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        let records = sample_records(
            r#"
scenario = "symmetric"
m = 4
rho = 0.6
policies = ["greedy"]
horizon = 100
seed = 13
"#,
        );
        write_steps_csv(&a, &records).unwrap();
        write_steps_csv(&b, &records).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn corrupt_files_are_reported_with_row_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("steps.csv");
        std::fs::write(
            &path,
            "t,policy,scheduled,trace_p,total_err,lb,ub\n0,mee,0,oops,1.0,,2.0\n",
        )
        .unwrap();
        let err = read_steps_csv(&path).unwrap_err().to_string();
        assert!(err.contains("row 2"), "{err}");

        std::fs::write(&path, "time,policy\n").unwrap();
        let err = read_steps_csv(&path).unwrap_err().to_string();
        assert!(err.contains("header"), "{err}");
    }

    #[test]
    fn summary_and_sweep_writers_emit_their_pinned_headers() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_toml_str(
            r#"
scenario = "rho_sweep"
m = 3
rho = [0.0, 0.5]
policies = ["mee"]
horizon = 20
seed = 5
"#,
        )
        .unwrap();
        let rows = crate::harness::sweep::run_sweep(&cfg).unwrap();
        let sweep_path = dir.path().join("sweep.csv");
        write_sweep_csv(&sweep_path, &rows).unwrap();
        let text = std::fs::read_to_string(&sweep_path).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "scenario,m,rho,a_scale,policy,horizon,replications,avg_total_err,\
             avg_norm_err,lb,lb_norm,ub,ub_norm,vacuous_lb,status"
        );
        assert_eq!(text.lines().count(), 1 + rows.len());

        let cell = ExperimentConfig::from_toml_str(
            r#"
scenario = "symmetric"
m = 3
rho = 0.5
policies = ["mee"]
horizon = 20
seed = 5
"#,
        )
        .unwrap();
        let model = cell.build_model(&cell.single_cell().unwrap()).unwrap();
        let (_, summary) =
            run_trajectory(&cell, &model, PolicyKind::Mee, 0, 0).unwrap();
        let summary_path = dir.path().join("summary.csv");
        write_summary_csv(&summary_path, &[summary]).unwrap();
        let text = std::fs::read_to_string(&summary_path).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "policy,replication,m,horizon,burn_in,avg_total_err,avg_norm_err,avg_trace_p"
        );

        let bounds = crate::harness::sweep::bounds_table(&cfg).unwrap();
        let mut buf = Vec::new();
        write_bounds_csv(&mut buf, &bounds).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "scenario,m,rho,a_scale,lb,ub,guarantee_ratio,vacuous_lb,status"
        );
        assert_eq!(text.lines().count(), 3);
    }
}
