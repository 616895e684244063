use std::fs;
use std::path::Path;

use paradjoint::adjoint_loop::DescentStep;
use paradjoint::scaling::ProblemKernels;
use paradjoint::{
    descend, direct_adjoint_loop, estimate_k, measure_profile, partition_geometric, predict_hybrid, predict_linear,
    predict_nonlinear, synthesize_truth, Algorithm, CheckpointSchedule, Dynamics, GradientReport, PiecewiseSolution,
    Problem, RunLog, SpeedupPrediction, TimingProfile, TrackingSource,
};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{HybridK, RunConfig};
use crate::CliError;

/// Testbed with the configured control, and the trajectory it tracks.
struct Case {
    forced: Problem,
    truth: PiecewiseSolution,
}

fn prepare(cfg: &RunConfig) -> Result<Case, CliError> {
    let base = cfg.problem()?;
    let truth_forcing = cfg.problem.truth_forcing.sample(&base);
    let truth = synthesize_truth(&base, &truth_forcing, &cfg.serial_config(cfg.reference_rtol))?;
    let forced = base.with_forcing(&cfg.problem.forcing.sample(&base))?;
    Ok(Case { forced, truth })
}

fn resolve_k(cfg: &RunConfig, case: &Case) -> Result<f64, CliError> {
    match cfg.hybrid_k {
        HybridK::Fixed(k) => Ok(k),
        HybridK::Auto(_) => {
            let q0 = vec![0.0; case.forced.dim()];
            let source = TrackingSource::new(&case.truth);
            let t = case.forced.spec().final_time;
            let k = estimate_k(&case.forced, &q0, &source, t, cfg.pilot_fraction, &cfg.loop_config(1, 1.0).rk)?;
            log::info!("pilot estimate k = {k:.3}");
            Ok(k)
        }
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("cannot create {}: {e}", dir.display())))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let fail = |e: &dyn std::fmt::Display| CliError::Output(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(|e| fail(&e))?;
    for row in rows {
        w.serialize(row).map_err(|e| fail(&e))?;
    }
    w.flush().map_err(|e| fail(&e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Output(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("summaries serialize");
    write_text(path, &text)
}

#[derive(Serialize)]
struct Plan<'a> {
    config: &'a RunConfig,
    state_dimension: usize,
    segments: Vec<(f64, f64)>,
    partitions: Vec<PlannedRun>,
}

#[derive(Serialize)]
struct PlannedRun {
    workers: usize,
    first_segment_boundaries: Option<Vec<f64>>,
}

/// Validated configuration and the partitions it implies, without solving.
pub fn dry_run(cfg: &RunConfig) -> Result<(), CliError> {
    let problem = cfg.problem()?;
    let t = problem.spec().final_time;
    let schedule = CheckpointSchedule::equispaced(t, cfg.checkpoints)?;
    let segments: Vec<(f64, f64)> = (0..schedule.segments()).map(|i| schedule.segment(i)).collect();
    let partitions = cfg
        .workers
        .iter()
        .map(|&n| {
            // An automatic k is only known after the pilot.
            let boundaries = match cfg.hybrid_k {
                HybridK::Fixed(k) => Some(
                    cfg.loop_config(n, k)
                        .partition(segments[0].0, segments[0].1)?
                        .boundaries()
                        .to_vec(),
                ),
                HybridK::Auto(_) if cfg.algorithm == Algorithm::Hybrid => None,
                HybridK::Auto(_) => Some(cfg.loop_config(n, 1.0).partition(segments[0].0, segments[0].1)?.boundaries().to_vec()),
            };
            Ok(PlannedRun {
                workers: n,
                first_segment_boundaries: boundaries,
            })
        })
        .collect::<Result<Vec<_>, paradjoint::Error>>()?;
    let plan = Plan {
        config: cfg,
        state_dimension: problem.dim(),
        segments,
        partitions,
    };
    println!("{}", serde_json::to_string_pretty(&plan).expect("plans serialize"));
    Ok(())
}

/// One row of `results.csv`.
#[derive(Debug, Serialize)]
pub struct RunRow {
    pub algorithm: String,
    pub workers: usize,
    pub checkpoints: usize,
    pub repeats: usize,
    pub cost: f64,
    pub grad_norm: f64,
    /// Direct iterations per segment, `;`-separated, for the iterative algorithm.
    pub iterations: String,
    pub peak_resident_nodes: usize,
    pub mean_seconds: f64,
    pub min_seconds: f64,
    pub serial_seconds: f64,
    pub speedup: f64,
    /// Spread of inhomogeneous finish times across workers in the logged loop.
    pub lag_seconds: Option<f64>,
    /// Forward sweep to the checkpoints in the last repeat; zero without checkpoints.
    pub rough_seconds: f64,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    config: &'a RunConfig,
    hybrid_k: f64,
    serial_cost: f64,
    rows: &'a [RunRow],
    descent_final_cost: Option<f64>,
}

fn timed_loops(case: &Case, cfg: &paradjoint::LoopConfig, repeats: usize, log: Option<&RunLog>) -> Result<(GradientReport, Vec<f64>), CliError> {
    let mut times = Vec::with_capacity(repeats);
    let mut last = None;
    for r in 0..repeats {
        // Only the final repeat is logged, so the log shows a single loop.
        let this_log = if r + 1 == repeats { log } else { None };
        let report = direct_adjoint_loop(&case.forced, &case.truth, cfg, this_log)?;
        times.push(report.wall_seconds);
        last = Some(report);
    }
    Ok((last.expect("at least one repeat"), times))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    create_dir(&cfg.output)?;
    let case = prepare(cfg)?;
    let k = resolve_k(cfg, &case)?;
    // Untimed warm-up, so one-off setup is not charged to the first timed loop.
    let widest = *cfg.workers.iter().max().expect("validated non-empty");
    direct_adjoint_loop(&case.forced, &case.truth, &cfg.loop_config(widest, k), None)?;
    let serial_cfg = cfg.serial_config(cfg.rtol);
    let (serial, serial_times) = timed_loops(&case, &serial_cfg, cfg.repeats, None)?;
    let serial_seconds = mean(&serial_times);
    log::info!("serial loop: J = {:.6e}, {serial_seconds:.3} s", serial.cost);

    let mut rows = Vec::with_capacity(cfg.workers.len());
    let log = RunLog::new();
    for &n in &cfg.workers {
        log.clear();
        let (report, times) = timed_loops(&case, &cfg.loop_config(n, k), cfg.repeats, Some(&log))?;
        let mean_seconds = mean(&times);
        rows.push(RunRow {
            algorithm: cfg.algorithm.name().to_string(),
            workers: n,
            checkpoints: cfg.checkpoints,
            repeats: cfg.repeats,
            cost: report.cost,
            grad_norm: norm(&report.gradient),
            iterations: report.iterations().iter().map(usize::to_string).collect::<Vec<_>>().join(";"),
            peak_resident_nodes: report.peak_resident_nodes,
            mean_seconds,
            min_seconds: times.iter().cloned().fold(f64::INFINITY, f64::min),
            serial_seconds,
            speedup: serial_seconds / mean_seconds,
            lag_seconds: log.inhomogeneous_lag(),
            rough_seconds: report.rough_seconds,
        });
        println!(
            "{} N={n}: J = {:.6e}, loop {mean_seconds:.3} s, speedup {:.2}",
            cfg.algorithm.name(),
            report.cost,
            serial_seconds / mean_seconds
        );
    }
    // The log holds the last worker count only.
    write_text(&cfg.output.join("messages.jsonl"), &log.messages_json_lines())?;
    write_csv(&cfg.output.join("events.csv"), &log.events())?;
    write_csv(&cfg.output.join("results.csv"), &rows)?;

    let mut descent_final = None;
    if let Some(d) = &cfg.descent {
        let n = *cfg.workers.last().expect("validated non-empty");
        let f0 = case.forced.spec().f_spatial.clone();
        let result = descend(&case.forced, &case.truth, &f0, d.steps, d.learning_rate, &cfg.loop_config(n, k))?;
        descent_final = result.history.last().map(|s: &DescentStep| s.cost);
        write_csv(&cfg.output.join("descent.csv"), &result.history)?;
        write_json(&cfg.output.join("control.json"), &result.control)?;
    }
    write_json(
        &cfg.output.join("summary.json"),
        &RunSummary {
            config: cfg,
            hybrid_k: k,
            serial_cost: serial.cost,
            rows: &rows,
            descent_final_cost: descent_final,
        },
    )
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Profile measured on the configured testbed.
pub fn profile(cfg: &RunConfig) -> Result<TimingProfile, CliError> {
    let problem = cfg.problem()?;
    let forced = problem.with_forcing(&cfg.problem.forcing.sample(&problem))?;
    let lc = cfg.loop_config(1, 1.0);
    let mut kernels = ProblemKernels::new(&forced, &lc.rk, &lc.leja)?;
    let span = cfg.pilot_fraction * forced.spec().final_time;
    Ok(measure_profile(&mut kernels, span, cfg.repeats)?)
}

pub fn write_profile(cfg: &RunConfig, profile: &TimingProfile) -> Result<(), CliError> {
    create_dir(&cfg.output)?;
    write_json(&cfg.output.join("profile.json"), profile)
}

/// One row of `predict.csv`.
#[derive(Debug, Serialize)]
pub struct PredictRow {
    pub algorithm: String,
    pub workers: usize,
    pub speedup: f64,
    pub s_max: f64,
    pub n_min: Option<usize>,
    pub iterations: usize,
    pub beneficial: bool,
    /// Hybrid partition boundaries, `;`-separated.
    pub boundaries: String,
}

pub struct PredictRequest {
    pub algorithm: Algorithm,
    pub max_workers: usize,
    pub iterations: usize,
    pub hybrid_k: Option<f64>,
    pub final_time: f64,
    pub final_condition: bool,
}

pub fn predict(profile: &TimingProfile, req: &PredictRequest) -> Result<Vec<PredictRow>, CliError> {
    profile.validate()?;
    let k = req.hybrid_k.unwrap_or_else(|| profile.hybrid_k());
    (1..=req.max_workers)
        .map(|n| {
            let (p, boundaries): (SpeedupPrediction, String) = match req.algorithm {
                Algorithm::Serial => return Err(CliError::Config("the serial loop has no speedup to predict".into())),
                Algorithm::Linear => (predict_linear(profile, n)?, String::new()),
                Algorithm::Nonlinear => (predict_nonlinear(profile, n, req.iterations)?, String::new()),
                Algorithm::Hybrid => {
                    let part = partition_geometric(req.final_time, n, k)?;
                    let b = part.boundaries().iter().map(|t| format!("{t}")).collect::<Vec<_>>().join(";");
                    (predict_hybrid(profile, &part, req.final_condition)?, b)
                }
            };
            Ok(PredictRow {
                algorithm: req.algorithm.name().to_string(),
                workers: n,
                speedup: p.speedup,
                s_max: p.s_max,
                n_min: p.n_min,
                iterations: p.iterations,
                beneficial: p.speedup > 1.0,
                boundaries,
            })
        })
        .collect()
}

pub fn print_predictions(rows: &[PredictRow]) {
    println!("{:>4}  {:>8}  {:>8}  {:>6}  note", "N", "speedup", "s_max", "N_min");
    for r in rows {
        let n_min = r.n_min.map_or("-".to_string(), |n| n.to_string());
        let note = if r.beneficial { "" } else { "not beneficial" };
        println!("{:>4}  {:>8.3}  {:>8.3}  {:>6}  {note}", r.workers, r.speedup, r.s_max, n_min);
        if !r.boundaries.is_empty() {
            println!("      partition {}", r.boundaries.replace(';', " "));
        }
    }
}

/// One row of `gradient_errors.csv`.
#[derive(Debug, Serialize)]
pub struct GradientRow {
    pub algorithm: String,
    pub workers: usize,
    pub relative_error: f64,
    pub cost: f64,
    pub reference_cost: f64,
    pub iterations: String,
    pub seconds: f64,
}

/// One row of `finite_differences.csv`.
#[derive(Debug, Serialize)]
pub struct FdRow {
    pub component: usize,
    pub adjoint: f64,
    pub finite_difference: f64,
    pub relative_error: f64,
}

pub fn verify_gradient(cfg: &RunConfig, fd_components: usize) -> Result<(), CliError> {
    create_dir(&cfg.output)?;
    let case = prepare(cfg)?;
    let k = resolve_k(cfg, &case)?;
    let ref_cfg = cfg.serial_config(cfg.reference_rtol);
    let reference = direct_adjoint_loop(&case.forced, &case.truth, &ref_cfg, None)?;
    let rel = |g: &[f64]| {
        let diff: Vec<f64> = g.iter().zip(&reference.gradient).map(|(a, b)| a - b).collect();
        norm(&diff) / norm(&reference.gradient)
    };

    let mut rows = Vec::new();
    let mut push = |algorithm: &str, workers: usize, report: &GradientReport| {
        let row = GradientRow {
            algorithm: algorithm.to_string(),
            workers,
            relative_error: rel(&report.gradient),
            cost: report.cost,
            reference_cost: reference.cost,
            iterations: report.iterations().iter().map(usize::to_string).collect::<Vec<_>>().join(";"),
            seconds: report.wall_seconds,
        };
        println!("{algorithm} N={workers}: relative gradient error {:.3e}", row.relative_error);
        rows.push(row);
    };
    let serial = direct_adjoint_loop(&case.forced, &case.truth, &cfg.serial_config(cfg.rtol), None)?;
    push("serial", 1, &serial);
    if cfg.algorithm != Algorithm::Serial {
        for &n in &cfg.workers {
            let report = direct_adjoint_loop(&case.forced, &case.truth, &cfg.loop_config(n, k), None)?;
            push(cfg.algorithm.name(), n, &report);
        }
    }
    write_csv(&cfg.output.join("gradient_errors.csv"), &rows)?;

    if fd_components > 0 {
        let fd = finite_differences(cfg, &case, &reference.gradient, fd_components)?;
        let worst = fd.iter().map(|r| r.relative_error).fold(0.0, f64::max);
        println!("finite differences on {} components: worst relative error {worst:.3e}", fd.len());
        write_csv(&cfg.output.join("finite_differences.csv"), &fd)?;
    }
    Ok(())
}

/// Central differences of the serial reference cost on seeded random
/// components of the forcing.
fn finite_differences(cfg: &RunConfig, case: &Case, gradient: &[f64], count: usize) -> Result<Vec<FdRow>, CliError> {
    const STEP: f64 = 1e-5;
    let ref_cfg = cfg.serial_config(cfg.reference_rtol);
    let base = case.forced.spec().f_spatial.clone();
    let cost_at = |f: &[f64]| -> Result<f64, CliError> {
        Ok(direct_adjoint_loop(&case.forced.with_forcing(f)?, &case.truth, &ref_cfg, None)?.cost)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut picks = sample(&mut rng, base.len(), count.min(base.len())).into_vec();
    picks.sort_unstable();
    picks
        .into_iter()
        .map(|i| {
            let mut f = base.clone();
            f[i] = base[i] + STEP;
            let up = cost_at(&f)?;
            f[i] = base[i] - STEP;
            let down = cost_at(&f)?;
            let fd = (up - down) / (2.0 * STEP);
            Ok(FdRow {
                component: i,
                adjoint: gradient[i],
                finite_difference: fd,
                relative_error: (fd - gradient[i]).abs() / gradient[i].abs(),
            })
        })
        .collect()
}
