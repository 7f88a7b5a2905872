//! Command-line front end: config loading, the five subcommands, and the
//! file formats they write.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::acoustics::{Calibration, ExposureField};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::path::{full_lap, spiral_inward, Corner};
use crate::sim::{
    calibrate, run, CalibrationGrid, CalibrationReport, CalibrationTargets, LoggedEvent, Metrics,
    Scenario,
};
use crate::swarm::{validate_partition, CellAssignment};

pub const THREADS_ENV: &str = "ABIOT_SIM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "abiot", version, about = "Acoustic pest-control tricopter simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON run config; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dotted `section.key=value` override, applied in order.
    #[arg(long = "override", value_name = "K=V")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate and write metrics.csv, events.jsonl, exposure.pgm and resolved-config.json.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Consecutive seeds from `sim.seed`, one metrics row each.
        #[arg(long, default_value_t = 1)]
        seeds: usize,
    },
    /// Write the standalone waypoint list as CSV.
    Plan {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every (value, seed) pair of one parameter and write sweep.csv.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Dotted config key to vary, e.g. `path.laps`.
        #[arg(long)]
        param: String,
        /// Comma-separated values for the parameter.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
    },
    /// Grid-search the repellence constants and write them as JSON.
    Calibrate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        /// `standalone=`, `coordinated=` or `system=` target override.
        #[arg(long = "target", value_name = "NAME=VALUE")]
        targets: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        k_values: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        i_ref_values: Option<Vec<f64>>,
    },
    /// Check an assignments JSON file for overlap and gaps; prints the report.
    ValidatePartition {
        #[command(flatten)]
        cfg: ConfigArgs,
        assignments: PathBuf,
    },
}

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } => 1,
        Error::PartitionRefused(_) | Error::NegotiationTimeout { .. } => 3,
        Error::CalibrationFailure(_) => 4,
        _ => 2,
    }
}

pub fn main() -> i32 {
    main_with(std::env::args_os())
}

pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            if let Error::PartitionRefused(report) = &e {
                println!("{}", serde_json::to_string_pretty(report).expect("report serializes"));
            }
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Run { cfg, out, seeds } => cmd_run(&load(&cfg)?, &out, seeds).map(|_| 0),
        Command::Plan { cfg, out } => cmd_plan(&load(&cfg)?, &out).map(|_| 0),
        Command::Sweep {
            cfg,
            out,
            param,
            values,
            seeds,
        } => cmd_sweep(&load(&cfg)?, &param, &values, seeds, &out).map(|_| 0),
        Command::Calibrate {
            cfg,
            out,
            seeds,
            targets,
            k_values,
            i_ref_values,
        } => {
            let mut t = CalibrationTargets::default();
            for spec in &targets {
                set_target(&mut t, spec)?;
            }
            let mut grid = CalibrationGrid::default();
            if let Some(k) = k_values {
                grid.k = k;
            }
            if let Some(i) = i_ref_values {
                grid.i_ref = i;
            }
            cmd_calibrate(&load(&cfg)?, &t, &grid, seeds, &out).map(|_| 0)
        }
        Command::ValidatePartition { cfg, assignments } => {
            let ok = cmd_validate_partition(&load(&cfg)?, &assignments)?;
            Ok(if ok { 0 } else { 3 })
        }
    }
}

fn set_target(t: &mut CalibrationTargets, spec: &str) -> Result<()> {
    let bad = || Error::config("--target", format!("expected NAME=VALUE, got `{spec}`"));
    let (name, value) = spec.split_once('=').ok_or_else(bad)?;
    let v: f64 = value.trim().parse().map_err(|_| bad())?;
    match name.trim() {
        "standalone" => t.standalone = v,
        "coordinated" => t.coordinated = v,
        "system" => t.system = v,
        other => return Err(Error::config("--target", format!("unknown target `{other}`"))),
    }
    Ok(())
}

/// Reads the config file (or defaults) and applies the overrides.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            RunConfig::from_json_str(&text, overrides)
        }
        None => RunConfig::default().with_overrides(overrides),
    }
}

fn load(a: &ConfigArgs) -> Result<RunConfig> {
    load_config(a.config.as_deref(), &a.overrides)
}

/// Writes `bytes` to `path` through a sibling temp file, so the target is
/// either complete or untouched.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub const METRICS_HEADER: &str = "seed,effectiveness,coverage,energy_used_j,laps_completed,per_day_effectiveness";

pub fn metrics_row(seed: u64, m: &Metrics) -> String {
    let per_day: Vec<String> = m.per_day_effectiveness.iter().map(f64::to_string).collect();
    format!(
        "{seed},{},{},{},{},{}",
        m.effectiveness,
        m.coverage,
        m.energy_used_j,
        m.laps_completed,
        per_day.join(";")
    )
}

pub fn events_jsonl(events: &[LoggedEvent]) -> String {
    let mut s = String::new();
    for ev in events {
        s.push_str(&serde_json::to_string(ev).expect("event serializes"));
        s.push('\n');
    }
    s
}

/// Plain-text PGM, doses scaled linearly so the maximum maps to 65535. The
/// first row is the northern edge of the field.
pub fn exposure_pgm(ef: &ExposureField) -> String {
    let (nx, ny) = (ef.nx(), ef.ny());
    let max = ef.max_dose();
    let mut s = format!("P2\n{nx} {ny}\n65535\n");
    for j in (0..ny).rev() {
        let row: Vec<String> = (0..nx)
            .map(|i| {
                let v = if max > 0.0 { ef.dose(i, j) / max * 65535.0 } else { 0.0 };
                (v.round() as u32).to_string()
            })
            .collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

/// Runs `seeds` consecutive seeds; events and exposure come from the first.
pub fn cmd_run(cfg: &RunConfig, out_dir: &Path, seeds: usize) -> Result<()> {
    if seeds == 0 {
        return Err(Error::config("--seeds", "at least one seed is required"));
    }
    let mut sc = Scenario::from_config(cfg)?;
    let base = sc.sim.seed;
    let mut metrics = format!("{METRICS_HEADER}\n");
    let mut first = None;
    for i in 0..seeds as u64 {
        sc.sim.seed = base.wrapping_add(i);
        let out = run(&sc)?;
        metrics.push_str(&metrics_row(sc.sim.seed, &out.metrics));
        metrics.push('\n');
        first.get_or_insert(out);
    }
    let first = first.expect("at least one seed");
    create_dir(out_dir)?;
    write_atomic(&out_dir.join("metrics.csv"), metrics.as_bytes())?;
    write_atomic(&out_dir.join("events.jsonl"), events_jsonl(&first.events).as_bytes())?;
    write_atomic(&out_dir.join("exposure.pgm"), exposure_pgm(&first.exposure).as_bytes())?;
    let mut resolved = cfg.to_json_pretty();
    resolved.push('\n');
    write_atomic(&out_dir.join("resolved-config.json"), resolved.as_bytes())?;
    Ok(())
}

pub const PLAN_HEADER: &str = "lap,seq,x_m,y_m";

/// The standalone mission as CSV: every lap's full out-and-back waypoint
/// list, laps numbered from 0.
pub fn plan_csv(cfg: &RunConfig) -> Result<String> {
    let sc = Scenario::from_config(cfg)?;
    let corner = Corner::nearest(&sc.region, sc.field.launch_point);
    let lap = full_lap(&spiral_inward(&sc.region, sc.sim.spacing_m, corner)?);
    let mut s = format!("{PLAN_HEADER}\n");
    for l in 0..cfg.path.laps {
        for (seq, p) in lap.iter().enumerate() {
            writeln!(s, "{l},{seq},{},{}", p.x, p.y).expect("string write");
        }
    }
    Ok(s)
}

pub fn cmd_plan(cfg: &RunConfig, out: &Path) -> Result<()> {
    let csv = plan_csv(cfg)?;
    write_atomic(out, csv.as_bytes())
}

pub const SWEEP_HEADER: &str = "param,value,seed,effectiveness,coverage,energy_used_j,laps_completed";

fn sweep_threads() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// One row per (value, seed). Runs are independent and may execute in
/// parallel; rows are emitted in (value, seed) order.
pub fn sweep_csv(cfg: &RunConfig, param: &str, values: &[String], seeds: usize) -> Result<String> {
    if values.is_empty() || seeds == 0 {
        return Err(Error::config("--values", "a sweep needs at least one value and one seed"));
    }
    let mut jobs = Vec::with_capacity(values.len() * seeds);
    for v in values {
        let cfg_v = cfg.with_overrides(&[format!("{param}={v}")])?;
        for i in 0..seeds as u64 {
            let mut sc = Scenario::from_config(&cfg_v)?;
            sc.sim.seed = cfg.sim.seed.wrapping_add(i);
            jobs.push((v.clone(), sc));
        }
    }
    let work = || {
        jobs.par_iter()
            .map(|(v, sc)| {
                let m = run(sc)?.metrics;
                Ok(format!(
                    "{param},{v},{},{},{},{},{}\n",
                    sc.sim.seed, m.effectiveness, m.coverage, m.energy_used_j, m.laps_completed
                ))
            })
            .collect::<Result<Vec<String>>>()
    };
    let rows = match sweep_threads() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(work)?,
        None => work()?,
    };
    let mut s = format!("{SWEEP_HEADER}\n");
    s.extend(rows);
    Ok(s)
}

pub fn cmd_sweep(cfg: &RunConfig, param: &str, values: &[String], seeds: usize, out_dir: &Path) -> Result<()> {
    let csv = sweep_csv(cfg, param, values, seeds)?;
    create_dir(out_dir)?;
    write_atomic(&out_dir.join("sweep.csv"), csv.as_bytes())
}

#[derive(Serialize)]
struct CalibrationFile<'a> {
    ok: bool,
    calibration: Calibration,
    max_abs_error: f64,
    #[serde(flatten)]
    report: &'a CalibrationReport,
}

/// Writes the best constants and the per-candidate table. On failure the
/// file is still written, with `ok: false`, before the error is returned.
pub fn cmd_calibrate(
    cfg: &RunConfig,
    targets: &CalibrationTargets,
    grid: &CalibrationGrid,
    seeds: usize,
    out: &Path,
) -> Result<CalibrationReport> {
    let (result, report) = match calibrate(cfg, targets, grid, seeds) {
        Ok(r) => (Ok(()), r),
        Err(Error::CalibrationFailure(r)) => {
            let copy = (*r).clone();
            (Err(Error::CalibrationFailure(r)), copy)
        }
        Err(e) => return Err(e),
    };
    let file = CalibrationFile {
        ok: result.is_ok(),
        calibration: Calibration {
            k: report.best.k,
            i_ref: report.best.i_ref,
        },
        max_abs_error: report.best_max_abs_error,
        report: &report,
    };
    let mut text = serde_json::to_string_pretty(&file).expect("report serializes");
    text.push('\n');
    write_atomic(out, text.as_bytes())?;
    result.map(|_| report)
}

/// Prints the partition report for an assignments file; returns whether it
/// tiles the configured field exactly.
pub fn cmd_validate_partition(cfg: &RunConfig, assignments: &Path) -> Result<bool> {
    let text = std::fs::read_to_string(assignments).map_err(|e| Error::io(assignments, e))?;
    let cells: Vec<CellAssignment> = serde_json::from_str(&text).map_err(|e| {
        Error::config(
            assignments.display().to_string(),
            format!("line {} column {}: {e}", e.line(), e.column()),
        )
    })?;
    let field = crate::field::build_field(&cfg.field)?;
    let report = validate_partition(&cells, &field);
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(report.ok)
}
