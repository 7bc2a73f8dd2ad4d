//! Command-line front end.
//!
//! Subcommands: `simulate`, `estimate`, `experiment` (all driven by a JSON
//! config document, see the `driftblocks::config` module), and `rates`
//! (no config; prints the schedule validity grid).
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime failure. All
//! output files are written atomically (temp file + rename).

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;

use driftblocks::config::{
    build_experiment, build_scenario, build_theta_box, estimate_params, simulate_step, RunConfig,
};
use driftblocks::experiment::{
    error_table, error_table_csv, mae_curve, mae_curve_csv, normality_csv, normality_summary,
    replications_csv, run_replications, SD_CONVENTION,
};
use driftblocks::rates::validity_grid_csv;
use driftblocks::sim::ObservationRecord;
use driftblocks::{
    build_blocks, maximize_quasi_lik, schedule, simulate_scenario, OptimizerOptions,
};

#[derive(Parser)]
#[command(name = "driftblocks", version, about = "Drift estimation for ergodic SDE/BSDE data with unobserved volatility")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an observation record and write it as CSV.
    Simulate(RunArgs),
    /// Estimate the drift parameter from an observation CSV.
    Estimate(RunArgs),
    /// Run a Monte Carlo experiment grid.
    Experiment(RunArgs),
    /// Print the (l, k) schedule validity grid as CSV.
    Rates,
}

#[derive(Args)]
struct RunArgs {
    /// Path to the JSON run configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Worker thread cap (default: hardware count).
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
    /// Dot-path config override, e.g. `--set experiment.reps=10` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Rates => {
            print!("{}", validity_grid_csv());
            Ok(())
        }
        Command::Simulate(args) => with_config(&args, cmd_simulate),
        Command::Estimate(args) => with_config(&args, cmd_estimate),
        Command::Experiment(args) => with_config(&args, cmd_experiment),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

struct Ctx {
    config: RunConfig,
    /// Normalized config echo for run metadata.
    config_value: serde_json::Value,
    out: PathBuf,
}

fn with_config(args: &RunArgs, run: fn(&Ctx) -> Result<(), CliError>) -> Result<(), CliError> {
    if let Some(n) = args.threads {
        // ignore the error if a pool already exists (tests call repeatedly)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let raw = fs::read_to_string(&args.config)
        .map_err(|e| config_err(format!("cannot read config {}: {e}", args.config.display())))?;
    let mut value: serde_json::Value = serde_json::from_str(&raw)
        .map_err(|e| config_err(format!("config {} is not valid JSON: {e}", args.config.display())))?;
    for assignment in &args.set {
        apply_override(&mut value, assignment)?;
    }
    let config: RunConfig = serde_json::from_value(value)
        .map_err(|e| config_err(format!("invalid config: {e}")))?;
    let config_value = serde_json::to_value(&config).map_err(config_err)?;
    fs::create_dir_all(&args.out)
        .map_err(|e| runtime_err(format!("cannot create output dir {}: {e}", args.out.display())))?;
    run(&Ctx {
        config,
        config_value,
        out: args.out.clone(),
    })
}

/// Apply one `key.path=value` assignment to the JSON tree. The value is
/// parsed as JSON when possible and falls back to a plain string.
fn apply_override(root: &mut serde_json::Value, assignment: &str) -> Result<(), CliError> {
    let (path, raw_value) = assignment
        .split_once('=')
        .ok_or_else(|| config_err(format!("override `{assignment}` is not of the form key=value")))?;
    let value: serde_json::Value = serde_json::from_str(raw_value)
        .unwrap_or_else(|_| serde_json::Value::String(raw_value.to_string()));
    let mut node = root;
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(config_err(format!("override key `{path}` has empty segments")));
    }
    for (i, seg) in segments.iter().enumerate() {
        if !node.is_object() {
            return Err(config_err(format!(
                "override key `{path}`: `{}` is not an object",
                segments[..i].join(".")
            )));
        }
        let map = node.as_object_mut().expect("checked is_object");
        if i + 1 == segments.len() {
            map.insert((*seg).to_string(), value);
            return Ok(());
        }
        node = map
            .entry((*seg).to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    unreachable!("assignment loop returns on last segment")
}

fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

fn cmd_simulate(ctx: &Ctx) -> Result<(), CliError> {
    let built = build_scenario(&ctx.config).map_err(config_err)?;
    let sim = ctx
        .config
        .simulate
        .as_ref()
        .ok_or_else(|| config_err("missing config section `simulate`"))?;
    let h = simulate_step(&ctx.config, sim.n).map_err(config_err)?;
    let obs = simulate_scenario(&built.spec, sim.n, h, sim.seed).map_err(runtime_err)?;
    let path = ctx.out.join("observations.csv");
    write_atomic(&path, &obs.to_csv()).map_err(runtime_err)?;
    println!("wrote {}", path.display());
    for note in &built.notes {
        eprintln!("note: {note}");
    }
    Ok(())
}

/// Read an observation CSV produced by `simulate` (header `k,t,x_1..,y_1..`).
fn read_observation_csv(path: &Path, h: f64) -> Result<ObservationRecord, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| config_err(format!("cannot read data {}: {e}", path.display())))?;
    let headers = reader.headers().map_err(runtime_err)?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 3 || cols[0] != "k" || cols[1] != "t" {
        return Err(config_err(format!(
            "{}: expected header starting with `k,t`, got {:?}",
            path.display(),
            cols
        )));
    }
    let d_x = cols.iter().filter(|c| c.starts_with("x_")).count();
    let d_y = cols.iter().filter(|c| c.starts_with("y_")).count();
    if d_y == 0 || 2 + d_x + d_y != cols.len() {
        return Err(config_err(format!(
            "{}: header must be k,t,x_1..x_dx,y_1..y_dy",
            path.display()
        )));
    }
    let mut x_flat = Vec::new();
    let mut y_flat = Vec::new();
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record.map_err(runtime_err)?;
        if record.len() != cols.len() {
            return Err(runtime_err(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                rows + 1,
                record.len(),
                cols.len()
            )));
        }
        for j in 0..d_x {
            let v: f64 = record[2 + j].parse().map_err(runtime_err)?;
            x_flat.push(v);
        }
        for j in 0..d_y {
            let v: f64 = record[2 + d_x + j].parse().map_err(runtime_err)?;
            y_flat.push(v);
        }
        rows += 1;
    }
    if rows < 2 {
        return Err(runtime_err(format!("{}: needs at least 2 rows", path.display())));
    }
    let n = rows - 1;
    let x_path = Array2::from_shape_vec((rows, d_x), x_flat).map_err(runtime_err)?;
    let y_path = Array2::from_shape_vec((rows, d_y), y_flat).map_err(runtime_err)?;
    Ok(ObservationRecord {
        n,
        h,
        x_path,
        y_path,
        seed: 0,
        scenario_name: "file".into(),
    })
}

fn cmd_estimate(ctx: &Ctx) -> Result<(), CliError> {
    // explicit driver section wins; otherwise the scenario's driver applies
    let driver = match (&ctx.config.driver, &ctx.config.scenario) {
        (Some(d), _) => driftblocks::builtin_driver(&d.name, &d.params).map_err(config_err)?,
        (None, Some(_)) => build_scenario(&ctx.config).map_err(config_err)?.spec.driver,
        (None, None) => return Err(config_err("missing config section `driver`")),
    };
    let bounds = build_theta_box(&ctx.config).map_err(config_err)?;
    if bounds.dim() != driver.d_theta() {
        return Err(config_err(format!(
            "theta_box has dim {} but driver `{}` has d_theta={}",
            bounds.dim(),
            driver.name(),
            driver.d_theta()
        )));
    }
    let est = ctx
        .config
        .estimate
        .as_ref()
        .ok_or_else(|| config_err("missing config section `estimate`"))?;

    // the row count fixes n, which (c, h) derivation may need
    let probe = fs::read_to_string(&est.data)
        .map_err(|e| config_err(format!("cannot read estimate.data {}: {e}", est.data)))?;
    let n = probe.lines().count().saturating_sub(2);
    let (c, h) = estimate_params(&ctx.config, n).map_err(config_err)?;
    let obs = read_observation_csv(Path::new(&est.data), h)?;
    let scheme = build_blocks(obs.n, c).map_err(runtime_err)?;
    let res = maximize_quasi_lik(&obs, &scheme, &driver, &bounds, &OptimizerOptions::default())
        .map_err(runtime_err)?;

    let gamma_rows: Vec<Vec<f64>> = (0..res.gamma_hat.nrows())
        .map(|i| res.gamma_hat.row(i).to_vec())
        .collect();
    let doc = serde_json::json!({
        "theta_hat": res.theta_hat.to_vec(),
        "h_value": res.h_value,
        "gamma_hat": gamma_rows,
        "std_errors": res.std_errors.to_vec(),
        "iterations": res.iterations,
        "converged": res.converged,
        "on_boundary": res.on_boundary,
        "grad_norm": res.grad_norm,
        "dropped_blocks": res.dropped_blocks,
        "used_blocks": res.used_blocks,
        "n": obs.n,
        "h": h,
        "c": c,
    });
    let path = ctx.out.join("estimate.json");
    let mut text = serde_json::to_string_pretty(&doc).map_err(runtime_err)?;
    text.push('\n');
    write_atomic(&path, &text).map_err(runtime_err)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_experiment(ctx: &Ctx) -> Result<(), CliError> {
    let (exp, mut notes) = build_experiment(&ctx.config).map_err(config_err)?;
    let results = run_replications(&exp).map_err(runtime_err)?;

    write_atomic(&ctx.out.join("replications.csv"), &replications_csv(&results))
        .map_err(runtime_err)?;

    let theta0 = &exp.scenario.theta0;
    if theta0.len() == 1 && theta0[0] != 0.0 {
        let table = error_table(&results, theta0[0]).map_err(runtime_err)?;
        write_atomic(&ctx.out.join("error_table.csv"), &error_table_csv(&table))
            .map_err(runtime_err)?;
    } else {
        notes.push(
            "error_table.csv skipped: relative error grid is defined for scalar nonzero theta0"
                .into(),
        );
    }

    let curve = mae_curve(&results, theta0);
    write_atomic(&ctx.out.join("mae_curve.csv"), &mae_curve_csv(&curve)).map_err(runtime_err)?;

    match exp.scenario.analytic_gamma() {
        Some(gamma) => {
            let mut rows = Vec::new();
            for &n in &exp.n_set {
                for &(l, k) in &exp.lk_pairs {
                    let cell: Vec<_> = results
                        .iter()
                        .filter(|r| r.l == l && r.k == k)
                        .cloned()
                        .collect();
                    let h = schedule(n, l, k).h;
                    let summary = normality_summary(&cell, gamma.view(), theta0, n, h)
                        .map_err(runtime_err)?;
                    rows.push((n, l, k, summary));
                }
            }
            write_atomic(&ctx.out.join("normality.csv"), &normality_csv(&rows))
                .map_err(runtime_err)?;
        }
        None => notes.push(
            "normality.csv skipped: no analytic information matrix for this scenario".into(),
        ),
    }

    let meta = serde_json::json!({
        "version": driftblocks::VERSION,
        "sd_convention": SD_CONVENTION,
        "notes": notes,
        "config": ctx.config_value,
    });
    let mut text = serde_json::to_string_pretty(&meta).map_err(runtime_err)?;
    text.push('\n');
    write_atomic(&ctx.out.join("run_meta.json"), &text).map_err(runtime_err)?;
    println!("wrote {} (and CSV outputs)", ctx.out.join("run_meta.json").display());
    Ok(())
}
