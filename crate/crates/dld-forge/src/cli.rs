//! Batch command-line surface. Every run takes an output directory, writes a
//! resolved-config echo there, and prints a short human summary (4
//! significant digits); machine files carry 17 significant digits.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::automation::{self, DesignRequest, DesignResult, Directive};
use crate::critical::{critical_diameter_of_field, DEFAULT_TOL};
use crate::dataset::{self, BuildConfig, SplitTag};
use crate::error::{Error, Result};
use crate::flow::{solve_flow, SolverConfig};
use crate::geometry::{unit_cell, DldParams};
use crate::gridfile;
use crate::surrogate::{
    cnn_build, cnn_train, fcnn_build, fcnn_predict, fcnn_train, load_model,
    save_model, NetModel, TrainConfig,
};
use crate::svg::Plot;
use crate::tracer::{recurrence_map, release_start, trace, RecurrenceMap, Trajectory};
use crate::walls::wall_distance_field;

/// 17 significant digits for machine files.
pub fn fmt_machine(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Parser)]
#[command(
    name = "dld-forge",
    about = "Design-automation toolkit for deterministic lateral displacement arrays",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one steady unit-cell flow field.
    Solve(SolveArgs),
    /// Precompute the wall distance field for one geometry.
    Walls(WallsArgs),
    /// Trace one particle and dump its trajectory and recurrence map.
    Trace(TraceArgs),
    /// Extract the critical diameter for one configuration.
    Dc(DcArgs),
    /// Build a labeled dataset over a configuration sweep.
    Sweep(SweepArgs),
    /// Train the direct critical-diameter predictor.
    TrainDirect(TrainDirectArgs),
    /// Train the convolutional field generator.
    TrainField(TrainFieldArgs),
    /// Augment a dataset through the trained field generator.
    Augment(AugmentArgs),
    /// Turn a separation request into a device recipe.
    Design(DesignArgs),
    /// Verify a design against the solver.
    Verify(VerifyArgs),
    /// Emit the SVG/CSV report bundle for a design.
    Report(ReportArgs),
}

/// Merge helper: CLI flags override config-file values.
fn merge<T: Copy>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn load_config_file<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        Some(p) => Ok(serde_json::from_str(&std::fs::read_to_string(p)?)?),
        None => Ok(T::default()),
    }
}

fn write_echo<T: Serialize>(out_dir: &Path, echo: &T) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(
        out_dir.join("resolved_config.json"),
        serde_json::to_string_pretty(echo)?,
    )?;
    Ok(())
}

fn thread_cap(requested: usize) -> usize {
    match std::env::var("DLD_FORGE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        Some(cap) if cap >= 1 => requested.min(cap),
        _ => requested,
    }
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    f: Option<f64>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    re: Option<f64>,
    #[arg(long)]
    res: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct SolveConfigFile {
    f: Option<f64>,
    n: Option<u32>,
    re: Option<f64>,
    res: Option<usize>,
}

#[derive(Serialize)]
struct SolveEcho {
    f: f64,
    n: u32,
    re: f64,
    res: usize,
}

fn cmd_solve(args: &SolveArgs) -> Result<()> {
    let file: SolveConfigFile = load_config_file(&args.config)?;
    let echo = SolveEcho {
        f: merge(args.f, file.f, 0.5),
        n: merge(args.n, file.n, 5),
        re: merge(args.re, file.re, 1.0),
        res: merge(args.res, file.res, 64),
    };
    write_echo(&args.out, &echo)?;
    let params = DldParams::new(echo.f, echo.n, echo.re)?;
    let field = solve_flow(&params, &SolverConfig::with_res(echo.res))?;
    gridfile::save_field(&field, None, &args.out.join("field.f64"))?;
    println!(
        "solved f={:.4} N={} Re={:.4}: achieved Re {:.4}, res {}",
        echo.f, echo.n, echo.re, field.achieved_re, echo.res
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// walls
// ---------------------------------------------------------------------------

#[derive(Args)]
struct WallsArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    f: Option<f64>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    res: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

fn cmd_walls(args: &WallsArgs) -> Result<()> {
    let file: SolveConfigFile = load_config_file(&args.config)?;
    let echo = SolveEcho {
        f: merge(args.f, file.f, 0.5),
        n: merge(args.n, file.n, 5),
        re: 1.0,
        res: merge(args.res, file.res, 64),
    };
    write_echo(&args.out, &echo)?;
    let params = DldParams::new(echo.f, echo.n, echo.re)?;
    let geom = unit_cell(&params)?;
    let wf = wall_distance_field(&geom, echo.res)?;
    gridfile::save_wall_plane(&wf, &params, &args.out.join("walls.f64"))?;
    println!("wall field written for f={:.4} N={} at res {}", echo.f, echo.n, echo.res);
    Ok(())
}

// ---------------------------------------------------------------------------
// trace
// ---------------------------------------------------------------------------

#[derive(Args)]
struct TraceArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    f: Option<f64>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    re: Option<f64>,
    #[arg(long)]
    res: Option<usize>,
    /// Particle diameter in unit-cell lengths.
    #[arg(long)]
    diameter: Option<f64>,
    #[arg(long)]
    periods: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct TraceConfigFile {
    f: Option<f64>,
    n: Option<u32>,
    re: Option<f64>,
    res: Option<usize>,
    diameter: Option<f64>,
    periods: Option<usize>,
}

#[derive(Serialize)]
struct TraceEcho {
    f: f64,
    n: u32,
    re: f64,
    res: usize,
    diameter: f64,
    periods: usize,
}

pub(crate) fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut csv = String::from("t,x,y,contact\n");
    let contacts: std::collections::BTreeSet<usize> = traj.contacts.iter().copied().collect();
    for (i, &(t, x, y)) in traj.points.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            fmt_machine(t),
            fmt_machine(x),
            fmt_machine(y),
            u8::from(contacts.contains(&i))
        ));
    }
    std::fs::write(path, csv)?;
    Ok(())
}

pub(crate) fn write_recurrence_csv(path: &Path, map: &RecurrenceMap) -> Result<()> {
    let mut csv = String::from("period,entry,exit\n");
    for &(k, entry, exit) in &map.rows {
        csv.push_str(&format!(
            "{k},{},{}\n",
            fmt_machine(entry),
            fmt_machine(exit)
        ));
    }
    std::fs::write(path, csv)?;
    Ok(())
}

fn cmd_trace(args: &TraceArgs) -> Result<()> {
    let file: TraceConfigFile = load_config_file(&args.config)?;
    let echo = TraceEcho {
        f: merge(args.f, file.f, 0.5),
        n: merge(args.n, file.n, 5),
        re: merge(args.re, file.re, 1.0),
        res: merge(args.res, file.res, 64),
        diameter: merge(args.diameter, file.diameter, 0.2),
        periods: merge(args.periods, file.periods, 2),
    };
    write_echo(&args.out, &echo)?;
    let params = DldParams::new(echo.f, echo.n, echo.re)?;
    let field = solve_flow(&params, &SolverConfig::with_res(echo.res))?;
    let geom = unit_cell(&params)?;
    let wf = wall_distance_field(&geom, echo.res)?;
    let start = release_start(&wf, echo.diameter)?;
    let traj = trace(&field, &wf, start, echo.diameter, echo.periods)?;
    write_trajectory_csv(&args.out.join("trajectory.csv"), &traj)?;
    write_recurrence_csv(&args.out.join("recurrence.csv"), &recurrence_map(&traj))?;
    println!(
        "traced d={:.4}: mode {:?}, {} contacts, {} points",
        echo.diameter,
        traj.mode,
        traj.contacts.len(),
        traj.points.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// dc
// ---------------------------------------------------------------------------

#[derive(Args)]
struct DcArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    f: Option<f64>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    re: Option<f64>,
    #[arg(long)]
    res: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct DcConfigFile {
    f: Option<f64>,
    n: Option<u32>,
    re: Option<f64>,
    res: Option<usize>,
    tol: Option<f64>,
}

#[derive(Serialize)]
struct DcEcho {
    f: f64,
    n: u32,
    re: f64,
    res: usize,
    tol: f64,
}

fn cmd_dc(args: &DcArgs) -> Result<()> {
    let file: DcConfigFile = load_config_file(&args.config)?;
    let echo = DcEcho {
        f: merge(args.f, file.f, 0.5),
        n: merge(args.n, file.n, 5),
        re: merge(args.re, file.re, 1.0),
        res: merge(args.res, file.res, 64),
        tol: merge(args.tol, file.tol, DEFAULT_TOL),
    };
    write_echo(&args.out, &echo)?;
    let params = DldParams::new(echo.f, echo.n, echo.re)?;
    let field = solve_flow(&params, &SolverConfig::with_res(echo.res))?;
    let geom = unit_cell(&params)?;
    let wf = wall_distance_field(&geom, echo.res)?;
    let crit = critical_diameter_of_field(&field, &wf, echo.tol, 2)?;
    let out = serde_json::json!({
        "d_c": crit.d_c,
        "evaluations": crit.evaluations,
        "achieved_re": field.achieved_re,
    });
    std::fs::write(
        args.out.join("dc.json"),
        serde_json::to_string_pretty(&out)?,
    )?;
    match crit.d_c {
        Some(d) => println!("d_c = {d:.4} ({} evaluations)", crit.evaluations),
        None => println!(
            "no critical diameter inside the probe interval ({} evaluations)",
            crit.evaluations
        ),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    f_start: Option<f64>,
    #[arg(long)]
    f_stop: Option<f64>,
    #[arg(long)]
    f_step: Option<f64>,
    /// Comma-separated period numbers.
    #[arg(long, value_delimiter = ',')]
    n_set: Option<Vec<u32>>,
    /// Comma-separated Reynolds numbers.
    #[arg(long, value_delimiter = ',')]
    re_set: Option<Vec<f64>>,
    #[arg(long)]
    res: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    dev_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct SweepConfigFile {
    f_start: Option<f64>,
    f_stop: Option<f64>,
    f_step: Option<f64>,
    n_set: Option<Vec<u32>>,
    re_set: Option<Vec<f64>>,
    res: Option<usize>,
    tol: Option<f64>,
    dev_fraction: Option<f64>,
    seed: Option<u64>,
    jobs: Option<usize>,
}

#[derive(Serialize)]
struct SweepEcho {
    f_start: f64,
    f_stop: f64,
    f_step: f64,
    n_set: Vec<u32>,
    re_set: Vec<f64>,
    res: usize,
    tol: f64,
    dev_fraction: f64,
    seed: u64,
    jobs: usize,
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let file: SweepConfigFile = load_config_file(&args.config)?;
    let echo = SweepEcho {
        f_start: merge(args.f_start, file.f_start, 0.25),
        f_stop: merge(args.f_stop, file.f_stop, 0.75),
        f_step: merge(args.f_step, file.f_step, 0.1),
        n_set: args
            .n_set
            .clone()
            .or(file.n_set)
            .unwrap_or_else(|| vec![3, 5, 7, 10]),
        re_set: args
            .re_set
            .clone()
            .or(file.re_set)
            .unwrap_or_else(|| vec![0.01, 0.1, 1.0, 5.0, 10.0]),
        res: merge(args.res, file.res, 64),
        tol: merge(args.tol, file.tol, DEFAULT_TOL),
        dev_fraction: merge(args.dev_fraction, file.dev_fraction, 0.2),
        seed: merge(args.seed, file.seed, 0),
        jobs: thread_cap(merge(args.jobs, file.jobs, 1)),
    };
    write_echo(&args.out, &echo)?;
    let grid = dataset::generate_grid(
        (echo.f_start, echo.f_stop, echo.f_step),
        &echo.n_set,
        &echo.re_set,
    )?;
    let cfg = BuildConfig {
        solver: SolverConfig::with_res(echo.res),
        bisect_tol: echo.tol,
        n_periods: 2,
        jobs: echo.jobs,
    };
    let mut manifest = dataset::build_dataset(&grid, &cfg, &args.out)?;
    dataset::split(&mut manifest, echo.dev_fraction, echo.seed)?;
    dataset::save_manifest(&manifest, &args.out)?;
    println!(
        "sweep complete: {} records, {} failures, manifest at {}",
        manifest.records.len(),
        manifest.failures.len(),
        args.out.join("manifest.json").display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train-direct / train-field
// ---------------------------------------------------------------------------

fn parse_schedule(text: &str) -> Result<Vec<(usize, f64)>> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let (epochs, rate) = part.split_once(':').ok_or_else(|| {
            Error::Argument(format!("bad schedule segment `{part}`, want epochs:rate"))
        })?;
        out.push((
            epochs.trim().parse().map_err(|_| {
                Error::Argument(format!("bad epoch count in `{part}`"))
            })?,
            rate.trim().parse().map_err(|_| {
                Error::Argument(format!("bad learning rate in `{part}`"))
            })?,
        ));
    }
    Ok(out)
}

fn write_losses_csv(path: &Path, losses: &[(f64, f64)]) -> Result<()> {
    let mut csv = String::from("epoch,train,dev\n");
    for (i, (train, dev)) in losses.iter().enumerate() {
        csv.push_str(&format!(
            "{i},{},{}\n",
            fmt_machine(*train),
            fmt_machine(*dev)
        ));
    }
    std::fs::write(path, csv)?;
    Ok(())
}

#[derive(Args)]
struct TrainDirectArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    /// Comma-separated epochs:rate segments, e.g. "1000:1e-4".
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct TrainDirectConfigFile {
    hidden: Option<usize>,
    width: Option<usize>,
    batch: Option<usize>,
    schedule: Option<String>,
    seed: Option<u64>,
}

fn cmd_train_direct(args: &TrainDirectArgs) -> Result<()> {
    let file: TrainDirectConfigFile = load_config_file(&args.config)?;
    let schedule_text = args
        .schedule
        .clone()
        .or(file.schedule)
        .unwrap_or_else(|| "1000:1e-4".to_string());
    let echo = serde_json::json!({
        "manifest": args.manifest,
        "hidden": merge(args.hidden, file.hidden, 8),
        "width": merge(args.width, file.width, 128),
        "batch": merge(args.batch, file.batch, 64),
        "schedule": schedule_text,
        "seed": merge(args.seed, file.seed, 0),
    });
    write_echo(&args.out, &echo)?;
    let manifest = dataset::load_manifest(&args.manifest)?;
    let train = dataset::direct_samples(&manifest, SplitTag::Train);
    let dev = dataset::direct_samples(&manifest, SplitTag::Dev);
    let mut net = fcnn_build(
        echo["hidden"].as_u64().unwrap() as usize,
        echo["width"].as_u64().unwrap() as usize,
    )?;
    let cfg = TrainConfig {
        batch_size: echo["batch"].as_u64().unwrap() as usize,
        schedule: parse_schedule(&schedule_text)?,
        seed: echo["seed"].as_u64().unwrap(),
        stop_below: None,
    };
    fcnn_train(&mut net, &train, &dev, &cfg)?;
    write_losses_csv(&args.out.join("losses.csv"), &net.meta.losses)?;
    println!(
        "trained direct net on {} samples (dev {}): train MSE {:.4e}, dev MSE {:.4e}",
        train.len(),
        dev.len(),
        net.meta.final_train_loss(),
        net.meta.final_dev_loss()
    );
    save_model(&NetModel::Direct(net), &args.out.join("direct.dldnn"))?;
    Ok(())
}

#[derive(Args)]
struct TrainFieldArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    res: Option<usize>,
    #[arg(long)]
    base: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct TrainFieldConfigFile {
    res: Option<usize>,
    base: Option<usize>,
    batch: Option<usize>,
    schedule: Option<String>,
    seed: Option<u64>,
}

fn cmd_train_field(args: &TrainFieldArgs) -> Result<()> {
    let file: TrainFieldConfigFile = load_config_file(&args.config)?;
    let schedule_text = args
        .schedule
        .clone()
        .or(file.schedule)
        .unwrap_or_else(|| "100:2e-3,100:2e-4,100:2e-5".to_string());
    let res = merge(args.res, file.res, 32);
    let echo = serde_json::json!({
        "manifest": args.manifest,
        "res": res,
        "base": merge(args.base, file.base, 64),
        "batch": merge(args.batch, file.batch, 64),
        "schedule": schedule_text,
        "seed": merge(args.seed, file.seed, 0),
    });
    write_echo(&args.out, &echo)?;
    let manifest = dataset::load_manifest(&args.manifest)?;
    let base_dir = args
        .manifest
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let train = dataset::field_samples(&manifest, &base_dir, SplitTag::Train, res)?;
    let dev = dataset::field_samples(&manifest, &base_dir, SplitTag::Dev, res)?;
    let mut net = cnn_build(res, echo["base"].as_u64().unwrap() as usize)?;
    let cfg = TrainConfig {
        batch_size: echo["batch"].as_u64().unwrap() as usize,
        schedule: parse_schedule(&schedule_text)?,
        seed: echo["seed"].as_u64().unwrap(),
        stop_below: None,
    };
    cnn_train(&mut net, &train, &dev, &cfg)?;
    write_losses_csv(&args.out.join("losses.csv"), &net.meta.losses)?;
    println!(
        "trained field net on {} samples (dev {}): train MSE {:.4e}, dev MSE {:.4e}",
        train.len(),
        dev.len(),
        net.meta.final_train_loss(),
        net.meta.final_dev_loss()
    );
    save_model(&NetModel::Field(net), &args.out.join("field.dldnn"))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// augment
// ---------------------------------------------------------------------------

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    re_step: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct AugmentConfigFile {
    re_step: Option<f64>,
    tol: Option<f64>,
}

fn cmd_augment(args: &AugmentArgs) -> Result<()> {
    let file: AugmentConfigFile = load_config_file(&args.config)?;
    let re_step = merge(args.re_step, file.re_step, 0.499);
    let tol = merge(args.tol, file.tol, DEFAULT_TOL);
    let echo = serde_json::json!({
        "model": args.model,
        "manifest": args.manifest,
        "re_step": re_step,
        "tol": tol,
    });
    write_echo(&args.out, &echo)?;
    let net = match load_model(&args.model)? {
        NetModel::Field(net) => net,
        NetModel::Direct(_) => {
            return Err(Error::Argument(
                "augment needs a field model, got a direct model".into(),
            ))
        }
    };
    let manifest = dataset::load_manifest(&args.manifest)?;
    let mut pairs: Vec<(f64, u32)> = Vec::new();
    for r in &manifest.records {
        let pair = (r.params.f, r.params.n);
        if !pairs.contains(&pair) {
            pairs.push(pair);
        }
    }
    // Speed ceiling: ten times the largest shape-normalized sample speed,
    // which is order one by construction.
    let cfg = dataset::AugmentConfig {
        fine_re_step: re_step,
        re_min: net.norm.mins[2],
        re_max: net.norm.maxs[2],
        bisect_tol: tol,
        n_periods: 2,
        max_field_speed: 10.0 * 4.0,
    };
    let augmented = dataset::augment(&net, &pairs, &cfg)?;
    dataset::save_manifest(&augmented, &args.out)?;
    println!(
        "augmented {} pairs into {} records ({} rejected)",
        pairs.len(),
        augmented.records.len(),
        augmented.failures.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// design / verify / report
// ---------------------------------------------------------------------------

fn parse_directive(text: &str) -> Result<Directive> {
    match text.to_ascii_lowercase().as_str() {
        "min" => Ok(Directive::Min),
        "max" => Ok(Directive::Max),
        "free" | "-" => Ok(Directive::Free),
        other => {
            if let Some(v) = other.strip_prefix("fixed:") {
                v.parse()
                    .map(Directive::Fixed)
                    .map_err(|_| Error::Argument(format!("bad fixed value in `{text}`")))
            } else {
                Err(Error::Argument(format!(
                    "bad directive `{text}` (want min|max|free|fixed:<v>)"
                )))
            }
        }
    }
}

#[derive(Args)]
struct DesignArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    d1: Option<f64>,
    #[arg(long)]
    d2: Option<f64>,
    #[arg(long)]
    phi: Option<f64>,
    #[arg(long)]
    cf: Option<String>,
    #[arg(long)]
    cn: Option<String>,
    #[arg(long)]
    cre: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct DesignConfigFile {
    d1: Option<f64>,
    d2: Option<f64>,
    phi: Option<f64>,
    cf: Option<String>,
    cn: Option<String>,
    cre: Option<String>,
    seed: Option<u64>,
    generations: Option<usize>,
}

/// Everything the design run used and produced, as written to design.json.
#[derive(Serialize, Deserialize)]
pub struct DesignBundle {
    pub request: DesignRequest,
    pub result: DesignResult,
}

fn write_pareto_csv(path: &Path, result: &DesignResult) -> Result<()> {
    let mut csv = String::from("f,N,Re,G,obj_center,obj_phi,obj_directive\n");
    for p in &result.archive {
        let row: Vec<String> = p
            .genes
            .iter()
            .chain(p.objectives.iter())
            .map(|&v| fmt_machine(v))
            .collect();
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    std::fs::write(path, csv)?;
    Ok(())
}

fn cmd_design(args: &DesignArgs) -> Result<()> {
    let file: DesignConfigFile = load_config_file(&args.config)?;
    let request = DesignRequest {
        d1_um: merge(args.d1, file.d1, 5.0),
        d2_um: merge(args.d2, file.d2, 8.0),
        phi: merge(args.phi, file.phi, 0.0),
        c_f: parse_directive(&args.cf.clone().or(file.cf).unwrap_or_else(|| "free".into()))?,
        c_n: parse_directive(&args.cn.clone().or(file.cn).unwrap_or_else(|| "free".into()))?,
        c_re: parse_directive(&args.cre.clone().or(file.cre).unwrap_or_else(|| "free".into()))?,
        periods: 10,
        seed: merge(args.seed, file.seed, 0),
        generations: merge(args.generations, file.generations, 30),
    };
    write_echo(&args.out, &request)?;
    let net = match load_model(&args.model)? {
        NetModel::Direct(net) => net,
        NetModel::Field(_) => {
            return Err(Error::Argument(
                "design needs a direct model, got a field model".into(),
            ))
        }
    };
    let result = automation::design(&request, &net)?;
    let bundle = DesignBundle {
        request,
        result,
    };
    std::fs::write(
        args.out.join("design.json"),
        serde_json::to_string_pretty(&bundle)?,
    )?;
    write_pareto_csv(&args.out.join("pareto.csv"), &bundle.result)?;
    println!(
        "design: f={:.4} N={} Re={:.4} G={:.4} um -> D_c {:.4} um, BW {:.4} um",
        bundle.result.f,
        bundle.result.n,
        bundle.result.re,
        bundle.result.g_um,
        bundle.result.d_c_um,
        bundle.result.bw_um
    );
    Ok(())
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    design: PathBuf,
    #[arg(long)]
    res: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

fn cmd_verify(args: &VerifyArgs) -> Result<()> {
    let res = args.res.unwrap_or(64);
    let tol = args.tol.unwrap_or(DEFAULT_TOL);
    let echo = serde_json::json!({
        "design": args.design,
        "res": res,
        "tol": tol,
    });
    write_echo(&args.out, &echo)?;
    let bundle: DesignBundle = serde_json::from_str(&std::fs::read_to_string(&args.design)?)?;
    let e_pct = automation::verify(&bundle.result, &SolverConfig::with_res(res), tol)?;
    std::fs::write(
        args.out.join("verify.json"),
        serde_json::to_string_pretty(&serde_json::json!({ "e_pct": e_pct }))?,
    )?;
    println!("verification error: {e_pct:.4}%");
    Ok(())
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    design: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    res: Option<usize>,
    #[arg(long)]
    periods: Option<usize>,
    /// Particle diameters to render, micrometers.
    #[arg(long, value_delimiter = ',')]
    diameters: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let res = args.res.unwrap_or(64);
    let bundle: DesignBundle = serde_json::from_str(&std::fs::read_to_string(&args.design)?)?;
    let periods = args.periods.unwrap_or(bundle.request.periods);
    let diameters = args
        .diameters
        .clone()
        .unwrap_or_else(|| vec![bundle.request.d1_um, bundle.request.d2_um]);
    let echo = serde_json::json!({
        "design": args.design,
        "model": args.model,
        "res": res,
        "periods": periods,
        "diameters": diameters,
    });
    write_echo(&args.out, &echo)?;
    let net = match load_model(&args.model)? {
        NetModel::Direct(net) => net,
        NetModel::Field(_) => {
            return Err(Error::Argument("report needs the direct model".into()))
        }
    };
    std::fs::write(
        args.out.join("design.json"),
        serde_json::to_string_pretty(&bundle)?,
    )?;
    write_pareto_csv(&args.out.join("pareto.csv"), &bundle.result)?;

    // D_c vs Re curve through the surrogate.
    let (re_lo, re_hi) = (net.norm.mins[2], net.norm.maxs[2]);
    let curve: Vec<(f64, f64)> = (0..automation::BW_SWEEP_POINTS)
        .map(|k| {
            let re = re_lo
                + (re_hi - re_lo) * k as f64 / (automation::BW_SWEEP_POINTS - 1) as f64;
            let params = DldParams::new(bundle.result.f, bundle.result.n, re)?;
            let d_c = fcnn_predict(&net, &params)?;
            Ok((re, d_c * bundle.result.g_um / (1.0 - bundle.result.f)))
        })
        .collect::<Result<_>>()?;
    let mut plot = Plot::new("critical diameter vs Reynolds number", "Re", "D_c (um)");
    plot.fit(curve.iter().copied());
    plot.polyline(&curve, "#1f77b4", 1.5);
    plot.circles(
        &[(bundle.result.re, bundle.result.d_c_um)],
        "#d62728",
        3.0,
    );
    std::fs::write(args.out.join("dc_vs_re.svg"), plot.render())?;

    // Device render: solver field at the designed configuration.
    let params = DldParams::new(bundle.result.f, bundle.result.n, bundle.result.re)?;
    let field = solve_flow(&params, &SolverConfig::with_res(res))?;
    let geom = unit_cell(&params)?;
    let wf = wall_distance_field(&geom, res)?;
    let runs = automation::simulate_device(&bundle.result, &diameters, periods, &field, &wf)?;
    let mut traj_plot = Plot::new("particle trajectories", "x (cells)", "y (cells)");
    let all_points: Vec<(f64, f64)> = runs
        .iter()
        .flat_map(|(_, traj, _)| {
            let n = traj.n as f64;
            traj.points
                .iter()
                .map(move |&(_, x, y)| (x, y + x / n))
        })
        .collect();
    traj_plot.fit(all_points.iter().copied());
    let palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    for (i, (d_um, traj, map)) in runs.iter().enumerate() {
        let n = traj.n as f64;
        let pts: Vec<(f64, f64)> = traj
            .points
            .iter()
            .step_by(16)
            .map(|&(_, x, y)| (x, y + x / n))
            .collect();
        traj_plot.polyline(&pts, palette[i % palette.len()], 1.2);
        let tag = format!("{d_um:.2}");
        crate::cli::write_trajectory_csv(
            &args.out.join(format!("trajectory_{tag}um.csv")),
            traj,
        )?;
        crate::cli::write_recurrence_csv(
            &args.out.join(format!("recurrence_{tag}um.csv")),
            map,
        )?;
    }
    std::fs::write(args.out.join("trajectories.svg"), traj_plot.render())?;
    println!(
        "report bundle written to {} ({} trajectories)",
        args.out.display(),
        runs.len()
    );
    Ok(())
}

/// Parse argv and run; exit 0 on success, 1 on usage errors, 2 on
/// computation errors.
pub fn dispatch<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            // Explicit --help/--version are not usage errors.
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    let outcome = match &cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Walls(args) => cmd_walls(args),
        Command::Trace(args) => cmd_trace(args),
        Command::Dc(args) => cmd_dc(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::TrainDirect(args) => cmd_train_direct(args),
        Command::TrainField(args) => cmd_train_field(args),
        Command::Augment(args) => cmd_augment(args),
        Command::Design(args) => cmd_design(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Report(args) => cmd_report(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
