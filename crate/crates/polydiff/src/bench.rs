//! Planning variants and the benchmark harness: runs each variant over a
//! procedurally generated problem suite, validates results against the
//! dense collision oracle, and writes per-query and per-variant reports.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bernstein::{BernsteinTransform, ControlPoints};
use crate::config::Config;
use crate::diffusion::{decode_rows, sample, DenoiserParams, Endpoints, SampleOutput};
use crate::error::{Error, Result};
use crate::geom::{self, Point2};
use crate::guidance::{default_portfolio, sample_guided, GuideConfig};
use crate::rng::{derive_rng, derive_seed};
use crate::rrt::{resample_arclength, rrt_connect};
use crate::stitching::{stitch, SegmentSource, StitchPool};
use crate::world::{generate_problem, is_collision_free, Difficulty, PlanningProblem};

pub const REPORT_VERSION: u32 = 1;

const TAG_PROBLEM: u64 = 0xbe7c;
const TAG_VARIANT: u64 = 0x3a11;
const TAG_BRIDGE: u64 = 0xb11d;
const TAG_GS: u64 = 0x65a1;

/// The planning variant ladder. Short names as used in reports: unguided
/// prior (PD), stitching over Gaussian samples (GS), stitching over the
/// prior (PDS), guided diffusion with one or a portfolio of guides
/// (GPD-1G, GPD-nG), guided diffusion plus stitching (GPDS), and the
/// sampling-planner baseline (RRT-C).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Pd,
    Gs,
    Pds,
    Gpd1G,
    GpdNG,
    Gpds,
    RrtC,
}

pub const ALL_VARIANTS: [Variant; 7] = [
    Variant::Pd,
    Variant::Gs,
    Variant::Pds,
    Variant::Gpd1G,
    Variant::GpdNG,
    Variant::Gpds,
    Variant::RrtC,
];

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Pd => "PD",
            Variant::Gs => "GS",
            Variant::Pds => "PDS",
            Variant::Gpd1G => "GPD-1G",
            Variant::GpdNG => "GPD-nG",
            Variant::Gpds => "GPDS",
            Variant::RrtC => "RRT-C",
        }
    }

    pub fn parse(s: &str) -> Result<Variant> {
        ALL_VARIANTS
            .iter()
            .copied()
            .find(|v| v.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<&str> = ALL_VARIANTS.iter().map(|v| v.as_str()).collect();
                Error::InvalidConfig(format!(
                    "unknown variant '{s}', expected one of {}",
                    names.join(", ")
                ))
            })
    }

    fn id(self) -> u64 {
        ALL_VARIANTS.iter().position(|v| *v == self).unwrap() as u64
    }

    pub fn uses_stitching(self) -> bool {
        matches!(self, Variant::Gs | Variant::Pds | Variant::Gpds)
    }

    pub fn uses_model(self) -> bool {
        !matches!(self, Variant::RrtC)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Everything a variant needs to answer one query.
pub struct PlannerContext<'a> {
    pub params: &'a DenoiserParams,
    pub transform: &'a BernsteinTransform,
    pub cfg: &'a Config,
    /// Guides for the portfolio variant; built once per context.
    pub portfolio: Vec<GuideConfig>,
}

impl<'a> PlannerContext<'a> {
    pub fn new(params: &'a DenoiserParams, transform: &'a BernsteinTransform, cfg: &'a Config) -> Result<Self> {
        if params.m != 2 {
            return Err(Error::InvalidConfig(format!(
                "planner requires a 2-dimensional model, checkpoint has m={}",
                params.m
            )));
        }
        if params.degree != transform.degree() || params.horizon != transform.horizon() {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint is degree {} horizon {}, transform is degree {} horizon {}",
                params.degree,
                params.horizon,
                transform.degree(),
                transform.horizon()
            )));
        }
        let portfolio = default_portfolio(&cfg.guide, cfg.bench.guides);
        Ok(PlannerContext { params, transform, cfg, portfolio })
    }
}

/// One variant's answer to one query.
#[derive(Debug, Clone)]
pub struct QueryOutcome {
    pub success: bool,
    /// The returned path, `(2, n)`. Present whenever the variant produced
    /// any trajectory, even a failed one.
    pub waypoints: Option<Array2<f64>>,
    /// Coefficients of the selected sample, for pure-diffusion variants.
    pub control_points: Option<ControlPoints>,
    /// Selection cost of the returned trajectory.
    pub cost: Option<f64>,
    pub stitches: usize,
    /// Provenance of each piece of a stitched path, in path order.
    pub segments: Vec<SegmentSource>,
    pub denoise_ms: f64,
    pub stitch_ms: f64,
    pub total_ms: f64,
    /// Mean squared second difference of the returned path resampled to
    /// the model horizon. Present on success.
    pub smoothness: Option<f64>,
    pub guide_incidents: usize,
    pub timeout: bool,
    pub failure: Option<String>,
}

impl QueryOutcome {
    fn failed(reason: String, denoise_ms: f64, stitch_ms: f64, total_ms: f64) -> Self {
        QueryOutcome {
            success: false,
            waypoints: None,
            control_points: None,
            cost: None,
            stitches: 0,
            segments: Vec::new(),
            denoise_ms,
            stitch_ms,
            total_ms,
            smoothness: None,
            guide_incidents: 0,
            timeout: false,
            failure: Some(reason),
        }
    }
}

/// Mean squared second difference over interior waypoints.
pub fn mssd(traj: &Array2<f64>) -> f64 {
    let h = traj.ncols();
    if h < 3 {
        return 0.0;
    }
    let mut total = 0.0;
    for k in 1..h - 1 {
        let ax = traj[[0, k - 1]] - 2.0 * traj[[0, k]] + traj[[0, k + 1]];
        let ay = traj[[1, k - 1]] - 2.0 * traj[[1, k]] + traj[[1, k + 1]];
        total += ax * ax + ay * ay;
    }
    total / (h - 2) as f64
}

fn points_to_array(points: &[Point2]) -> Array2<f64> {
    let mut out = Array2::zeros((2, points.len()));
    for (k, p) in points.iter().enumerate() {
        out[[0, k]] = p[0];
        out[[1, k]] = p[1];
    }
    out
}

fn array_to_points(traj: &Array2<f64>) -> Vec<Point2> {
    (0..traj.ncols()).map(|k| [traj[[0, k]], traj[[1, k]]]).collect()
}

/// Resamples a path to the model horizon for like-for-like smoothness.
fn smoothness_of(traj: &Array2<f64>, horizon: usize) -> Option<f64> {
    if traj.ncols() == horizon {
        return Some(mssd(traj));
    }
    resample_arclength(&array_to_points(traj), horizon)
        .ok()
        .map(|p| mssd(&points_to_array(&p)))
}

/// Success check shared by all variants: finite, endpoint-accurate, and
/// clear of every obstacle at the oracle resolution.
fn validate(
    ctx: &PlannerContext,
    problem: &PlanningProblem,
    traj: &Array2<f64>,
) -> std::result::Result<(), String> {
    if traj.ncols() < 2 || !traj.iter().all(|v| v.is_finite()) {
        return Err("trajectory is empty or non-finite".into());
    }
    let tol = ctx.cfg.bench.goal_tolerance;
    let first = [traj[[0, 0]], traj[[1, 0]]];
    let last = [traj[[0, traj.ncols() - 1]], traj[[1, traj.ncols() - 1]]];
    if geom::dist(first, problem.start) > tol {
        return Err(format!("start missed by {:.4}", geom::dist(first, problem.start)));
    }
    if geom::dist(last, problem.goal) > tol {
        return Err(format!("goal missed by {:.4}", geom::dist(last, problem.goal)));
    }
    if !is_collision_free(&problem.scene, traj, ctx.cfg.stitch.resolution) {
        return Err("collision oracle rejected the trajectory".into());
    }
    Ok(())
}

/// Evaluates and ranks a batch of sampled coefficient sets, returning the
/// lowest-cost trajectory.
fn select_best(
    ctx: &PlannerContext,
    problem: &PlanningProblem,
    finals: &[ControlPoints],
) -> Result<(usize, Array2<f64>, f64)> {
    if finals.is_empty() {
        return Err(Error::PlanFailed("sampler produced no candidates".into()));
    }
    let mut best: Option<(usize, Array2<f64>, f64)> = None;
    for (i, alpha) in finals.iter().enumerate() {
        let traj = ctx.transform.evaluate(alpha)?;
        let cost = ctx.cfg.guide.selection_cost(&problem.scene, &traj);
        if best.as_ref().map_or(true, |(_, _, c)| cost < *c) {
            best = Some((i, traj, cost));
        }
    }
    Ok(best.unwrap())
}

/// Turns sampler output (finals plus recorded late-step states) into a
/// stitch pool with selection costs.
fn pool_from_samples(
    ctx: &PlannerContext,
    problem: &PlanningProblem,
    out: &SampleOutput,
) -> Result<StitchPool> {
    let mut trajectories = Vec::with_capacity(out.pool.len());
    let mut costs = Vec::with_capacity(out.pool.len());
    for entry in &out.pool {
        let traj = ctx.transform.evaluate(&entry.alpha)?;
        let cost = ctx.cfg.guide.selection_cost(&problem.scene, &traj);
        trajectories.push(traj);
        costs.push(cost);
    }
    StitchPool::new(trajectories, costs)
}

/// Pool of smooth random curves: standard normal coefficients in the
/// model's normalized space, decoded and endpoint-conditioned.
fn gaussian_pool(
    ctx: &PlannerContext,
    problem: &PlanningProblem,
    count: usize,
    master_seed: u64,
) -> Result<StitchPool> {
    let endpoints = Endpoints { start: problem.start, goal: problem.goal };
    let d = ctx.params.norm_shift.len();
    let mut rng = derive_rng(master_seed, &[TAG_GS]);
    let raw = crate::diffusion::standard_normal(&mut rng, count, d);
    let decoded = decode_rows(ctx.params, &raw, &endpoints);
    let cols = ctx.params.degree + 1;
    let mut trajectories = Vec::with_capacity(count);
    let mut costs = Vec::with_capacity(count);
    for row in decoded.rows() {
        let alpha = row
            .to_owned()
            .into_shape_with_order((2, cols))
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let traj = ctx.transform.evaluate(&alpha)?;
        costs.push(ctx.cfg.guide.selection_cost(&problem.scene, &traj));
        trajectories.push(traj);
    }
    StitchPool::new(trajectories, costs)
}

fn run_sampling(
    ctx: &PlannerContext,
    problem: &PlanningProblem,
    variant: Variant,
    master_seed: u64,
    record_last: usize,
) -> Result<SampleOutput> {
    let endpoints = Endpoints { start: problem.start, goal: problem.goal };
    let batch = ctx.cfg.bench.batch;
    match variant {
        Variant::Pd | Variant::Pds => {
            sample(ctx.params, &endpoints, batch, master_seed, 0, record_last, None)
        }
        Variant::Gpd1G | Variant::Gpds => sample_guided(
            ctx.params,
            ctx.transform,
            &problem.scene,
            &ctx.cfg.guide,
            &endpoints,
            batch,
            master_seed,
            0,
            record_last,
        ),
        Variant::GpdNG => {
            let guides = &ctx.portfolio;
            let n = guides.len();
            let mut merged: Option<SampleOutput> = None;
            for (g, guide) in guides.iter().enumerate() {
                let lanes = batch / n + usize::from(g < batch % n);
                if lanes == 0 {
                    continue;
                }
                let out = sample_guided(
                    ctx.params,
                    ctx.transform,
                    &problem.scene,
                    guide,
                    &endpoints,
                    lanes,
                    master_seed,
                    g as u64,
                    record_last,
                )?;
                match &mut merged {
                    None => merged = Some(out),
                    Some(m) => {
                        m.finals.extend(out.finals);
                        m.pool.extend(out.pool);
                        m.guide_incidents += out.guide_incidents;
                    }
                }
            }
            merged.ok_or_else(|| Error::InvalidConfig("empty guide portfolio".into()))
        }
        Variant::Gs | Variant::RrtC => {
            Err(Error::InvalidConfig(format!("{variant} does not run the sampler")))
        }
    }
}

/// Runs one variant on one query. Deterministic in `master_seed`.
pub fn run_query(
    ctx: &PlannerContext,
    problem: &PlanningProblem,
    variant: Variant,
    master_seed: u64,
) -> QueryOutcome {
    let started = Instant::now();
    let mut denoise_ms = 0.0;
    let mut stitch_ms = 0.0;
    let mut outcome = match variant {
        Variant::Pd | Variant::Gpd1G | Variant::GpdNG => {
            let mut run = || -> Result<QueryOutcome> {
                let t0 = Instant::now();
                let out = run_sampling(ctx, problem, variant, master_seed, 1)?;
                denoise_ms = t0.elapsed().as_secs_f64() * 1e3;
                let (idx, traj, cost) = select_best(ctx, problem, &out.finals)?;
                let success = validate(ctx, problem, &traj);
                Ok(QueryOutcome {
                    success: success.is_ok(),
                    smoothness: smoothness_of(&traj, ctx.transform.horizon()),
                    control_points: Some(out.finals[idx].clone()),
                    waypoints: Some(traj),
                    cost: Some(cost),
                    stitches: 0,
                    segments: Vec::new(),
                    denoise_ms,
                    stitch_ms: 0.0,
                    total_ms: 0.0,
                    guide_incidents: out.guide_incidents,
                    timeout: false,
                    failure: success.err(),
                })
            };
            run()
        }
        Variant::Pds | Variant::Gpds | Variant::Gs => {
            let mut run = || -> Result<QueryOutcome> {
                let mut incidents = 0;
                let pool = if variant == Variant::Gs {
                    gaussian_pool(ctx, problem, ctx.cfg.bench.gs_batch, master_seed)?
                } else {
                    let t0 = Instant::now();
                    let out = run_sampling(ctx, problem, variant, master_seed, ctx.cfg.bench.pool_last)?;
                    denoise_ms = t0.elapsed().as_secs_f64() * 1e3;
                    incidents = out.guide_incidents;
                    pool_from_samples(ctx, problem, &out)?
                };
                let t1 = Instant::now();
                let stitch_seed = derive_seed(master_seed, &[TAG_BRIDGE]);
                let stitched = stitch(&problem.scene, &pool, &ctx.cfg.stitch, stitch_seed);
                stitch_ms = t1.elapsed().as_secs_f64() * 1e3;
                match stitched {
                    Ok(res) => {
                        let success = validate(ctx, problem, &res.waypoints);
                        let cost = ctx.cfg.guide.selection_cost(&problem.scene, &res.waypoints);
                        Ok(QueryOutcome {
                            success: success.is_ok(),
                            smoothness: smoothness_of(&res.waypoints, ctx.transform.horizon()),
                            waypoints: Some(res.waypoints),
                            control_points: None,
                            cost: Some(cost),
                            stitches: res.stitches,
                            segments: res.segments,
                            denoise_ms,
                            stitch_ms,
                            total_ms: 0.0,
                            guide_incidents: incidents,
                            timeout: false,
                            failure: success.err(),
                        })
                    }
                    Err(Error::PlanFailed(reason)) => {
                        Ok(QueryOutcome::failed(reason, denoise_ms, stitch_ms, 0.0))
                    }
                    Err(other) => Err(other),
                }
            };
            run()
        }
        Variant::RrtC => {
            let run = || -> Result<QueryOutcome> {
                let mut rng = derive_rng(master_seed, &[TAG_BRIDGE]);
                let t0 = Instant::now();
                let path = rrt_connect(
                    &problem.scene,
                    problem.start,
                    problem.goal,
                    &ctx.cfg.bench.baseline,
                    &mut rng,
                );
                let elapsed = t0.elapsed().as_secs_f64() * 1e3;
                match path {
                    Ok(points) => {
                        let traj = points_to_array(&points);
                        let success = validate(ctx, problem, &traj);
                        let cost = ctx.cfg.guide.selection_cost(&problem.scene, &traj);
                        Ok(QueryOutcome {
                            success: success.is_ok(),
                            smoothness: smoothness_of(&traj, ctx.transform.horizon()),
                            waypoints: Some(traj),
                            control_points: None,
                            cost: Some(cost),
                            stitches: 0,
                            segments: Vec::new(),
                            denoise_ms: 0.0,
                            stitch_ms: elapsed,
                            total_ms: 0.0,
                            guide_incidents: 0,
                            timeout: false,
                            failure: success.err(),
                        })
                    }
                    Err(Error::PlanFailed(reason)) => {
                        Ok(QueryOutcome::failed(reason, 0.0, elapsed, 0.0))
                    }
                    Err(other) => Err(other),
                }
            };
            run()
        }
    }
    .unwrap_or_else(|e| QueryOutcome::failed(e.to_string(), denoise_ms, stitch_ms, 0.0));
    outcome.total_ms = started.elapsed().as_secs_f64() * 1e3;
    if outcome.total_ms > ctx.cfg.bench.watchdog_secs as f64 * 1e3 {
        outcome.timeout = true;
        outcome.success = false;
        let note = "watchdog limit exceeded".to_string();
        outcome.failure = Some(match outcome.failure.take() {
            Some(f) => format!("{note}; {f}"),
            None => note,
        });
    }
    outcome
}

/// Flat per-query record as written to reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryRecord {
    pub problem: usize,
    pub problem_seed: u64,
    pub variant: String,
    pub success: bool,
    pub timeout: bool,
    pub denoise_ms: f64,
    pub stitch_ms: f64,
    pub total_ms: f64,
    pub cost: Option<f64>,
    pub stitches: usize,
    pub smoothness: Option<f64>,
    pub guide_incidents: usize,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub queries: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub timeouts: usize,
    pub mean_denoise_ms: f64,
    pub median_denoise_ms: f64,
    pub mean_stitch_ms: f64,
    pub mean_total_ms: f64,
    pub median_total_ms: f64,
    pub mean_stitches: f64,
    /// Mean over successful queries.
    pub mean_smoothness: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchReport {
    pub version: u32,
    /// Crate version that produced the report.
    pub produced_by: String,
    pub suite: String,
    pub problems: usize,
    pub seed: u64,
    pub batch: usize,
    /// Full resolved configuration the run used.
    pub config: Config,
    pub summaries: Vec<VariantSummary>,
    pub queries: Vec<QueryRecord>,
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

fn summarize(variant: &str, records: &[&QueryRecord]) -> VariantSummary {
    let successes = records.iter().filter(|r| r.success).count();
    let denoise: Vec<f64> = records.iter().map(|r| r.denoise_ms).collect();
    let total: Vec<f64> = records.iter().map(|r| r.total_ms).collect();
    let smooth: Vec<f64> =
        records.iter().filter(|r| r.success).filter_map(|r| r.smoothness).collect();
    VariantSummary {
        variant: variant.to_string(),
        queries: records.len(),
        successes,
        success_rate: if records.is_empty() {
            0.0
        } else {
            successes as f64 / records.len() as f64
        },
        timeouts: records.iter().filter(|r| r.timeout).count(),
        mean_denoise_ms: mean(&denoise),
        median_denoise_ms: median(&denoise),
        mean_stitch_ms: mean(&records.iter().map(|r| r.stitch_ms).collect::<Vec<_>>()),
        mean_total_ms: mean(&total),
        median_total_ms: median(&total),
        mean_stitches: mean(&records.iter().map(|r| r.stitches as f64).collect::<Vec<_>>()),
        mean_smoothness: if smooth.is_empty() { None } else { Some(mean(&smooth)) },
    }
}

/// A full suite run: the report plus raw outcomes for downstream checks.
pub struct SuiteRun {
    pub report: BenchReport,
    pub problems: Vec<PlanningProblem>,
    /// `outcomes[p][v]` matches `problems[p]` and the variant order given
    /// to `run_suite`.
    pub outcomes: Vec<Vec<QueryOutcome>>,
}

/// Generates `count` problems of the given difficulty and runs every
/// requested variant on each. Problems are generated sequentially from the
/// suite seed; queries run in parallel across problems.
pub fn run_suite(
    ctx: &PlannerContext,
    difficulty: Difficulty,
    count: usize,
    variants: &[Variant],
    seed: u64,
) -> Result<SuiteRun> {
    if count == 0 {
        return Err(Error::InvalidConfig("suite needs at least one problem".into()));
    }
    if variants.is_empty() {
        return Err(Error::InvalidConfig("no variants requested".into()));
    }
    let mut problems = Vec::with_capacity(count);
    let mut seeds = Vec::with_capacity(count);
    for i in 0..count {
        let pseed = derive_seed(seed, &[TAG_PROBLEM, i as u64]);
        problems.push(generate_problem(pseed, difficulty, &ctx.cfg.scene)?);
        seeds.push(pseed);
    }
    let outcomes: Vec<Vec<QueryOutcome>> = problems
        .par_iter()
        .zip(seeds.par_iter())
        .map(|(problem, pseed)| {
            variants
                .iter()
                .map(|v| run_query(ctx, problem, *v, derive_seed(*pseed, &[TAG_VARIANT, v.id()])))
                .collect()
        })
        .collect();
    let mut queries = Vec::with_capacity(count * variants.len());
    for (p, row) in outcomes.iter().enumerate() {
        for (v, outcome) in row.iter().enumerate() {
            queries.push(QueryRecord {
                problem: p,
                problem_seed: seeds[p],
                variant: variants[v].as_str().to_string(),
                success: outcome.success,
                timeout: outcome.timeout,
                denoise_ms: outcome.denoise_ms,
                stitch_ms: outcome.stitch_ms,
                total_ms: outcome.total_ms,
                cost: outcome.cost,
                stitches: outcome.stitches,
                smoothness: outcome.smoothness,
                guide_incidents: outcome.guide_incidents,
                failure: outcome.failure.clone(),
            });
        }
    }
    let summaries = variants
        .iter()
        .map(|v| {
            let rows: Vec<&QueryRecord> =
                queries.iter().filter(|q| q.variant == v.as_str()).collect();
            summarize(v.as_str(), &rows)
        })
        .collect();
    let report = BenchReport {
        version: REPORT_VERSION,
        produced_by: env!("CARGO_PKG_VERSION").to_string(),
        suite: difficulty.as_str().to_string(),
        problems: count,
        seed,
        batch: ctx.cfg.bench.batch,
        config: ctx.cfg.clone(),
        summaries,
        queries,
    };
    Ok(SuiteRun { report, problems, outcomes })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let io = |e: std::io::Error| Error::io(path.display().to_string(), e);
    let mut f = std::fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(io)?;
    Ok(())
}

pub fn write_report(path: &Path, report: &BenchReport) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)
        .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_report(path: &Path) -> Result<BenchReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let report: BenchReport = serde_json::from_str(&text)
        .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
    if report.version != REPORT_VERSION {
        return Err(Error::format(
            path.display().to_string(),
            format!("report version {} unsupported (expected {REPORT_VERSION})", report.version),
        ));
    }
    Ok(report)
}

fn csv_field(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Flat per-query CSV: one row per (problem, variant).
pub fn write_report_csv(path: &Path, report: &BenchReport) -> Result<()> {
    let mut out = String::from(
        "problem,problem_seed,variant,success,timeout,denoise_ms,stitch_ms,total_ms,cost,stitches,smoothness,guide_incidents\n",
    );
    for q in &report.queries {
        out.push_str(&format!(
            "{},{},{},{},{},{:.3},{:.3},{:.3},{},{},{},{}\n",
            q.problem,
            q.problem_seed,
            q.variant,
            q.success,
            q.timeout,
            q.denoise_ms,
            q.stitch_ms,
            q.total_ms,
            csv_field(q.cost),
            q.stitches,
            csv_field(q.smoothness),
            q.guide_incidents,
        ));
    }
    write_atomic(path, out.as_bytes())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantComparison {
    pub variant: String,
    pub rate_a: f64,
    pub rate_b: f64,
    pub delta: f64,
    /// Two-proportion z statistic for the success-rate difference.
    pub z: f64,
    /// True when |z| exceeds the 5% two-sided threshold of 1.96.
    pub significant: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportComparison {
    pub suite: String,
    pub variants: Vec<VariantComparison>,
}

/// Compares success rates of matching variants across two reports of the
/// same suite.
pub fn compare_reports(a: &BenchReport, b: &BenchReport) -> Result<ReportComparison> {
    if a.suite != b.suite {
        return Err(Error::InvalidConfig(format!(
            "cannot compare a {} report with a {} report",
            a.suite, b.suite
        )));
    }
    let index = |r: &BenchReport| -> BTreeMap<String, (usize, usize)> {
        r.summaries.iter().map(|s| (s.variant.clone(), (s.successes, s.queries))).collect()
    };
    let ia = index(a);
    let ib = index(b);
    let mut variants = Vec::new();
    for (variant, (sa, na)) in &ia {
        let Some((sb, nb)) = ib.get(variant) else { continue };
        if *na == 0 || *nb == 0 {
            continue;
        }
        let pa = *sa as f64 / *na as f64;
        let pb = *sb as f64 / *nb as f64;
        let pooled = (*sa + *sb) as f64 / (*na + *nb) as f64;
        let denom = (pooled * (1.0 - pooled) * (1.0 / *na as f64 + 1.0 / *nb as f64)).sqrt();
        let z = if denom > 0.0 { (pa - pb) / denom } else { 0.0 };
        variants.push(VariantComparison {
            variant: variant.clone(),
            rate_a: pa,
            rate_b: pb,
            delta: pa - pb,
            z,
            significant: z.abs() > 1.96,
        });
    }
    if variants.is_empty() {
        return Err(Error::InvalidConfig("reports share no populated variants".into()));
    }
    Ok(ReportComparison { suite: a.suite.clone(), variants })
}
