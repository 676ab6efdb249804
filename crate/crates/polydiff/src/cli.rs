//! Command line interface: dataset generation, training, single-query
//! planning, benchmarking, and artifact inspection.
//!
//! Exit codes: 0 success, 1 planning or numerical failure, 2 invalid
//! configuration or arguments, 3 file format or I/O errors.

use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand};
use serde_json::json;

use crate::bench::{
    compare_reports, read_report, run_query, run_suite, write_report, write_report_csv,
    PlannerContext, Variant, ALL_VARIANTS,
};
use crate::bernstein::BernsteinTransform;
use crate::config::{self, Config};
use crate::diffusion::{
    read_checkpoint, resume, train, write_checkpoint, CHECKPOINT_MAGIC,
};
use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::rng::{derive_rng, derive_seed};
use crate::world::{
    generate_expert, generate_problem, read_dataset, read_scene, write_dataset, Dataset,
    Difficulty, Obstacle, PlanningProblem, DATASET_MAGIC,
};

const TAG_DATASET: u64 = 0xda7a;

#[derive(Parser)]
#[command(
    name = "polydiff",
    about = "Diffusion-based polynomial trajectory planner for 2D scenes",
    version
)]
pub struct Cli {
    /// JSON configuration file layered over the built-in defaults.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Individual configuration overrides, e.g. --set train.epochs=30.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Worker threads for the benchmark (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate an expert demonstration dataset.
    GenData(GenDataArgs),
    /// Train or fine-tune the denoising model.
    Train(TrainArgs),
    /// Plan a single query against a scene file.
    Plan(PlanArgs),
    /// Run the variant benchmark over a procedural problem suite.
    Bench(BenchArgs),
    /// Summarize a dataset, checkpoint, scene, or report file.
    Inspect(InspectArgs),
    /// Compare success rates of two benchmark reports.
    Compare(CompareArgs),
}

#[derive(Args)]
pub struct GenDataArgs {
    /// Scene difficulty: empty, sparse, cluttered, narrow-passage.
    #[arg(long, default_value = "cluttered")]
    pub difficulty: String,
    /// Number of expert samples to collect.
    #[arg(short = 'n', long)]
    pub count: usize,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Overrides the configured master seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Input dataset.
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// Output checkpoint.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Continue from an existing checkpoint instead of initializing.
    #[arg(long, value_name = "FILE")]
    pub resume: Option<PathBuf>,
    /// Where to write the per-epoch loss curve (default: OUT.loss.csv).
    #[arg(long, value_name = "FILE")]
    pub loss_csv: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct PlanArgs {
    /// Model checkpoint.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Scene JSON file.
    #[arg(long, value_name = "FILE")]
    pub scene: PathBuf,
    /// Start position as "x,y".
    #[arg(long)]
    pub start: String,
    /// Goal position as "x,y".
    #[arg(long)]
    pub goal: String,
    #[arg(long, default_value = "GPD-1G")]
    pub variant: String,
    /// Write the result JSON here instead of stdout.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Write a flat plotting CSV (obstacle outlines, path, control points).
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct BenchArgs {
    /// Model checkpoint.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Scene difficulty the suite is generated from.
    #[arg(long, default_value = "cluttered")]
    pub suite: String,
    /// Number of problems.
    #[arg(short = 'n', long, default_value_t = 200)]
    pub count: usize,
    /// Comma-separated variant list (default: all).
    #[arg(long)]
    pub variants: Option<String>,
    /// Report JSON output path.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Also write a flat per-query CSV.
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct InspectArgs {
    pub path: PathBuf,
}

#[derive(Args)]
pub struct CompareArgs {
    pub a: PathBuf,
    pub b: PathBuf,
}

fn parse_point(s: &str) -> Result<Point2> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::InvalidConfig(format!("'{s}' is not of the form x,y")));
    }
    let x: f64 = parts[0]
        .trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("'{s}' has a non-numeric coordinate")))?;
    let y: f64 = parts[1]
        .trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("'{s}' has a non-numeric coordinate")))?;
    Ok([x, y])
}

fn load_config(cli_config: Option<&Path>, sets: &[String]) -> Result<Config> {
    config::load(cli_config, sets)
}

fn cmd_gen_data(cfg: &Config, args: &GenDataArgs) -> Result<serde_json::Value> {
    if args.count == 0 {
        return Err(Error::InvalidConfig("sample count must be at least 1".into()));
    }
    let difficulty = Difficulty::parse(&args.difficulty)?;
    let seed = args.seed.unwrap_or(cfg.seed);
    let transform = BernsteinTransform::new(cfg.trajectory.degree, cfg.trajectory.horizon)?;
    let mut dataset = Dataset::new(2, cfg.trajectory.degree, cfg.trajectory.horizon);
    let max_attempts = args.count * 8 + 100;
    let mut attempt = 0u64;
    let mut residual_worst: f64 = 0.0;
    while dataset.count() < args.count {
        if attempt as usize >= max_attempts {
            return Err(Error::PlanFailed(format!(
                "collected only {} of {} samples in {max_attempts} attempts",
                dataset.count(),
                args.count
            )));
        }
        let problem_seed = derive_seed(seed, &[TAG_DATASET, attempt]);
        attempt += 1;
        let problem = match generate_problem(problem_seed, difficulty, &cfg.scene) {
            Ok(p) => p,
            Err(Error::PlanFailed(_)) => continue,
            Err(e) => return Err(e),
        };
        let mut rng = derive_rng(problem_seed, &[TAG_DATASET, 1]);
        match generate_expert(&problem, &transform, &cfg.expert, &mut rng) {
            Ok(sample) => {
                residual_worst = residual_worst.max(sample.residual);
                dataset.push(&sample.alpha)?;
            }
            Err(Error::PlanFailed(_)) | Err(Error::Numerical(_)) => continue,
            Err(e) => return Err(e),
        }
        if dataset.count() % 500 == 0 {
            log::info!("collected {} / {} samples", dataset.count(), args.count);
        }
    }
    write_dataset(&args.out, &dataset)?;
    Ok(json!({
        "path": args.out.display().to_string(),
        "samples": dataset.count(),
        "attempts": attempt,
        "difficulty": difficulty.as_str(),
        "degree": cfg.trajectory.degree,
        "horizon": cfg.trajectory.horizon,
        "worst_fit_residual": residual_worst,
    }))
}

fn cmd_train(cfg: &Config, args: &TrainArgs) -> Result<serde_json::Value> {
    let dataset = read_dataset(&args.data)?;
    let mut train_cfg = cfg.train;
    if let Some(epochs) = args.epochs {
        train_cfg.epochs = epochs;
    }
    if let Some(seed) = args.seed {
        train_cfg.seed = seed;
    }
    let run = match &args.resume {
        Some(path) => {
            let existing = read_checkpoint(path)?;
            resume(&dataset, &train_cfg, existing)?
        }
        None => train(&dataset, &cfg.diffusion, &train_cfg)?,
    };
    write_checkpoint(&args.out, &run.params)?;
    let loss_path = args
        .loss_csv
        .clone()
        .unwrap_or_else(|| args.out.with_extension("loss.csv"));
    let mut csv = String::from("epoch,loss\n");
    for (i, loss) in run.epoch_losses.iter().enumerate() {
        csv.push_str(&format!("{},{}\n", i + 1, loss));
    }
    std::fs::write(&loss_path, csv).map_err(|e| Error::io(loss_path.display().to_string(), e))?;
    Ok(json!({
        "path": args.out.display().to_string(),
        "loss_csv": loss_path.display().to_string(),
        "samples": dataset.count(),
        "epochs": train_cfg.epochs,
        "initial_loss": run.epoch_losses.first(),
        "final_loss": run.epoch_losses.last(),
        "timesteps": run.params.schedule.timesteps(),
        "resumed": args.resume.is_some(),
    }))
}

fn outcome_json(
    problem: &PlanningProblem,
    variant: Variant,
    seed: u64,
    outcome: &crate::bench::QueryOutcome,
) -> serde_json::Value {
    let waypoints: Option<Vec<[f64; 2]>> = outcome
        .waypoints
        .as_ref()
        .map(|w| (0..w.ncols()).map(|k| [w[[0, k]], w[[1, k]]]).collect());
    let control_points: Option<Vec<Vec<f64>>> = outcome
        .control_points
        .as_ref()
        .map(|a| a.rows().into_iter().map(|r| r.to_vec()).collect());
    json!({
        "variant": variant.as_str(),
        "seed": seed,
        "start": problem.start,
        "goal": problem.goal,
        "success": outcome.success,
        "timeout": outcome.timeout,
        "denoise_ms": outcome.denoise_ms,
        "stitch_ms": outcome.stitch_ms,
        "total_ms": outcome.total_ms,
        "cost": outcome.cost,
        "stitches": outcome.stitches,
        "smoothness": outcome.smoothness,
        "guide_incidents": outcome.guide_incidents,
        "failure": outcome.failure,
        "segments": outcome.segments,
        "waypoints": waypoints,
        "control_points": control_points,
    })
}

/// Flat CSV for plotting: obstacle outlines, the planned path, and (when
/// present) the Bernstein control polygon, all in one table keyed by tag.
fn plot_csv(problem: &PlanningProblem, variant: Variant, outcome: &crate::bench::QueryOutcome) -> String {
    let mut out = String::from("t,x,y,variant,tag\n");
    let v = variant.as_str();
    let mut push = |t: f64, x: f64, y: f64, tag: &str| {
        out.push_str(&format!("{t},{x},{y},{v},{tag}\n"));
    };
    for (i, ob) in problem.scene.obstacles.iter().enumerate() {
        let tag = format!("obstacle{i}");
        match ob {
            Obstacle::Circle { center, radius } => {
                let n = 64;
                for j in 0..=n {
                    let t = j as f64 / n as f64;
                    let a = t * std::f64::consts::TAU;
                    push(t, center[0] + radius * a.cos(), center[1] + radius * a.sin(), &tag);
                }
            }
            Obstacle::Box { min, max } => {
                let ring =
                    [[min[0], min[1]], [max[0], min[1]], [max[0], max[1]], [min[0], max[1]], [min[0], min[1]]];
                for (j, c) in ring.iter().enumerate() {
                    push(j as f64 / 4.0, c[0], c[1], &tag);
                }
            }
        }
    }
    if let Some(w) = &outcome.waypoints {
        let n = w.ncols();
        for k in 0..n {
            let t = if n > 1 { k as f64 / (n - 1) as f64 } else { 0.0 };
            push(t, w[[0, k]], w[[1, k]], "path");
        }
    }
    if let Some(a) = &outcome.control_points {
        let n = a.ncols();
        for k in 0..n {
            let t = if n > 1 { k as f64 / (n - 1) as f64 } else { 0.0 };
            push(t, a[[0, k]], a[[1, k]], "control");
        }
    }
    out
}

fn cmd_plan(cfg: &Config, args: &PlanArgs) -> Result<(serde_json::Value, bool)> {
    let params = read_checkpoint(&args.model)?;
    let scene = read_scene(&args.scene)?;
    let start = parse_point(&args.start)?;
    let goal = parse_point(&args.goal)?;
    for (name, p) in [("start", start), ("goal", goal)] {
        if !scene.workspace.contains(p) {
            return Err(Error::InvalidConfig(format!("{name} {p:?} is outside the workspace")));
        }
        if scene.signed_distance(p) < scene.robot_radius {
            return Err(Error::InvalidConfig(format!("{name} {p:?} is in collision")));
        }
    }
    let variant = Variant::parse(&args.variant)?;
    let transform = BernsteinTransform::new(params.degree, params.horizon)?;
    let ctx = PlannerContext::new(&params, &transform, cfg)?;
    let problem = PlanningProblem { scene, start, goal };
    let seed = args.seed.unwrap_or(cfg.seed);
    let outcome = run_query(&ctx, &problem, variant, seed);
    if let Some(csv) = &args.csv {
        std::fs::write(csv, plot_csv(&problem, variant, &outcome))
            .map_err(|e| Error::io(csv.display().to_string(), e))?;
    }
    let success = outcome.success;
    Ok((outcome_json(&problem, variant, seed, &outcome), success))
}

fn cmd_bench(cfg: &Config, args: &BenchArgs) -> Result<serde_json::Value> {
    let params = read_checkpoint(&args.model)?;
    let difficulty = Difficulty::parse(&args.suite)?;
    let variants: Vec<Variant> = match &args.variants {
        None => ALL_VARIANTS.to_vec(),
        Some(list) => list
            .split(',')
            .map(|s| Variant::parse(s.trim()))
            .collect::<Result<Vec<_>>>()?,
    };
    let seed = args.seed.unwrap_or(cfg.seed);
    let transform = BernsteinTransform::new(params.degree, params.horizon)?;
    let ctx = PlannerContext::new(&params, &transform, cfg)?;
    let run = run_suite(&ctx, difficulty, args.count, &variants, seed)?;
    write_report(&args.out, &run.report)?;
    if let Some(csv) = &args.csv {
        write_report_csv(csv, &run.report)?;
    }
    println!(
        "{:<8} {:>16} {:>9} {:>17} {:>15} {:>16}",
        "variant", "success", "timeouts", "median denoise", "mean stitch", "median total"
    );
    for s in &run.report.summaries {
        println!(
            "{:<8} {:>5.1}% ({:>3}/{:<3}) {:>9} {:>14.1} ms {:>12.1} ms {:>13.1} ms",
            s.variant,
            s.success_rate * 100.0,
            s.successes,
            s.queries,
            s.timeouts,
            s.median_denoise_ms,
            s.mean_stitch_ms,
            s.median_total_ms
        );
    }
    let summaries: Vec<serde_json::Value> = run
        .report
        .summaries
        .iter()
        .map(|s| {
            json!({
                "variant": s.variant,
                "success_rate": s.success_rate,
                "successes": s.successes,
                "queries": s.queries,
                "median_total_ms": s.median_total_ms,
            })
        })
        .collect();
    Ok(json!({
        "path": args.out.display().to_string(),
        "suite": run.report.suite,
        "problems": run.report.problems,
        "summaries": summaries,
    }))
}

fn cmd_inspect(args: &InspectArgs) -> Result<serde_json::Value> {
    let path = &args.path;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    if bytes.len() >= 4 && bytes[..4] == DATASET_MAGIC {
        let ds = read_dataset(path)?;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in ds.samples.iter() {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        return Ok(json!({
            "kind": "dataset",
            "samples": ds.count(),
            "dims": ds.m,
            "degree": ds.degree,
            "horizon": ds.horizon,
            "coeff_dim": ds.coeff_dim(),
            "coeff_min": if ds.count() > 0 { Some(lo) } else { None },
            "coeff_max": if ds.count() > 0 { Some(hi) } else { None },
        }));
    }
    if bytes.len() >= 4 && bytes[..4] == CHECKPOINT_MAGIC {
        let params = read_checkpoint(path)?;
        let weight_count = params.w_in.len()
            + params.b_in.len()
            + params
                .blocks
                .iter()
                .map(|(w, b)| w.len() + b.len())
                .sum::<usize>()
            + params.w_out.len()
            + params.b_out.len();
        return Ok(json!({
            "kind": "checkpoint",
            "dims": params.m,
            "degree": params.degree,
            "horizon": params.horizon,
            "timesteps": params.schedule.timesteps(),
            "schedule": params.schedule.kind,
            "hidden": params.mlp.hidden,
            "blocks": params.mlp.blocks,
            "embed_dim": params.mlp.embed_dim,
            "weights": weight_count,
        }));
    }
    let text = String::from_utf8(bytes)
        .map_err(|_| Error::format(path.display().to_string(), "not a known binary or JSON file"))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
    if value.get("obstacles").is_some() {
        let scene = read_scene(path)?;
        let (mut circles, mut boxes) = (0, 0);
        for o in &scene.obstacles {
            match o {
                crate::world::Obstacle::Circle { .. } => circles += 1,
                crate::world::Obstacle::Box { .. } => boxes += 1,
            }
        }
        return Ok(json!({
            "kind": "scene",
            "seed": scene.seed,
            "robot_radius": scene.robot_radius,
            "obstacles": scene.obstacles.len(),
            "circles": circles,
            "boxes": boxes,
        }));
    }
    if value.get("queries").is_some() {
        let report = read_report(path)?;
        return Ok(json!({
            "kind": "report",
            "suite": report.suite,
            "problems": report.problems,
            "seed": report.seed,
            "variants": report.summaries.iter().map(|s| {
                json!({"variant": s.variant, "success_rate": s.success_rate})
            }).collect::<Vec<_>>(),
        }));
    }
    Err(Error::format(
        path.display().to_string(),
        "unrecognized file: expected a dataset, checkpoint, scene, or report",
    ))
}

fn cmd_compare(args: &CompareArgs) -> Result<serde_json::Value> {
    let a = read_report(&args.a)?;
    let b = read_report(&args.b)?;
    let cmp = compare_reports(&a, &b)?;
    serde_json::to_value(&cmp).map_err(|e| Error::InvalidConfig(e.to_string()))
}

fn dispatch(cli: &Cli) -> Result<(serde_json::Value, i32)> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::InvalidConfig("--jobs must be at least 1".into()));
        }
        // Ignore the error if a global pool already exists (tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match &cli.command {
        Command::GenData(args) => {
            let cfg = load_config(cli.config.as_deref(), &cli.sets)?;
            Ok((cmd_gen_data(&cfg, args)?, 0))
        }
        Command::Train(args) => {
            let cfg = load_config(cli.config.as_deref(), &cli.sets)?;
            Ok((cmd_train(&cfg, args)?, 0))
        }
        Command::Plan(args) => {
            let cfg = load_config(cli.config.as_deref(), &cli.sets)?;
            let (value, success) = cmd_plan(&cfg, args)?;
            if let Some(out) = &args.out {
                let mut text = serde_json::to_string_pretty(&value)
                    .map_err(|e| Error::InvalidConfig(e.to_string()))?;
                text.push('\n');
                std::fs::write(out, text).map_err(|e| Error::io(out.display().to_string(), e))?;
            }
            Ok((value, if success { 0 } else { 1 }))
        }
        Command::Bench(args) => {
            let cfg = load_config(cli.config.as_deref(), &cli.sets)?;
            Ok((cmd_bench(&cfg, args)?, 0))
        }
        Command::Inspect(args) => Ok((cmd_inspect(args)?, 0)),
        Command::Compare(args) => Ok((cmd_compare(args)?, 0)),
    }
}

/// Parses arguments, runs the selected command, prints its JSON summary to
/// stdout, and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful exits.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match dispatch(&cli) {
        Ok((value, code)) => {
            match serde_json::to_string_pretty(&value) {
                Ok(text) => println!("{text}"),
                Err(e) => {
                    eprintln!("error: {e}");
                    return 2;
                }
            }
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
