//! Cost functional, adjoint forcing and forcing gradient of the tracking
//! problem, plus the direct-adjoint loop and a fixed-step descent driver.
//!
//! The control is the spatial amplitude `f` of the forcing `f sin(omega t)`.
//! The cost is `J = (1/T) int_0^T |q - q_true|^2 dt` and its gradient is
//! `dJ/df = (1/T) int_0^T q_adj sin(omega t) dt`, both evaluated by the
//! trapezoid rule on a uniform probe grid.

use std::ops::Range;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::checkpoint::{run_checkpointed_loop, Storage};
use crate::dynamics::{AdjointOperator, AdjointSource, Dynamics};
use crate::error::{check_dim, Error, Result};
use crate::hybrid::{serial_adjoint, solve_hybrid, HybridPlan};
use crate::mesh::Problem;
use crate::nonlinear::{solve_direct_nonlinear, IterationConfig};
use crate::paraexp::{solve_adjoint, solve_direct_linear, RunLog};
use crate::solution::{PiecewiseSolution, TimePartition};
use crate::timestepping::{rk45_integrate, History, LejaConfig, RkConfig};
use crate::vecops;

/// Which solver runs each direct-adjoint loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Plain RK45 forward and backward, one worker.
    Serial,
    /// Paraexp for linear problems.
    Linear,
    /// Iterated Paraexp for the direct solve, Paraexp for the adjoint.
    Nonlinear,
    /// Serial direct overlapped with a parallel adjoint.
    Hybrid,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Serial => "serial",
            Algorithm::Linear => "linear",
            Algorithm::Nonlinear => "nonlinear",
            Algorithm::Hybrid => "hybrid",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    pub algorithm: Algorithm,
    pub workers: usize,
    pub rk: RkConfig,
    pub leja: LejaConfig,
    pub iteration: IterationConfig,
    /// Adjoint to direct cost ratio used for the hybrid partition.
    pub hybrid_k: f64,
    /// Number of interior checkpoints `M`; the horizon is cut into `M + 1`
    /// equal segments.
    pub checkpoints: usize,
    pub storage: Storage,
    /// Nodes of the uniform quadrature grid for the cost and gradient.
    pub probe_nodes: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            algorithm: Algorithm::Linear,
            workers: 1,
            rk: RkConfig::default(),
            leja: LejaConfig::default(),
            iteration: IterationConfig::default(),
            hybrid_k: 2.11,
            checkpoints: 0,
            storage: Storage::Recompute,
            probe_nodes: 200,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::InvalidParameter("at least one worker is required".into()));
        }
        if self.algorithm == Algorithm::Serial && self.workers != 1 {
            return Err(Error::InvalidParameter("the serial algorithm runs on one worker".into()));
        }
        if self.probe_nodes < 2 {
            return Err(Error::InvalidParameter("the probe grid needs at least two nodes".into()));
        }
        if !(self.hybrid_k > 0.0) || !self.hybrid_k.is_finite() {
            return Err(Error::InvalidParameter(format!("hybrid k must be positive, got {}", self.hybrid_k)));
        }
        self.rk.validate()?;
        self.leja.validate()
    }

    /// Worker partition of one segment `[t0, t1]`.
    pub fn partition(&self, t0: f64, t1: f64) -> Result<TimePartition> {
        match self.algorithm {
            Algorithm::Serial => TimePartition::from_boundaries(vec![t0, t1]),
            Algorithm::Linear | Algorithm::Nonlinear => TimePartition::equidistant_on(t0, t1, self.workers),
            Algorithm::Hybrid => TimePartition::geometric_on(t0, t1, self.workers, self.hybrid_k),
        }
    }
}

/// Uniform quadrature nodes with trapezoid weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeGrid {
    times: Vec<f64>,
    weights: Vec<f64>,
}

impl ProbeGrid {
    pub fn uniform(t0: f64, t1: f64, nodes: usize) -> Result<Self> {
        if nodes < 2 || !(t1 > t0) {
            return Err(Error::InvalidParameter(format!(
                "probe grid of {nodes} nodes on [{t0}, {t1}]"
            )));
        }
        let h = (t1 - t0) / (nodes - 1) as f64;
        let mut times: Vec<f64> = (0..nodes).map(|i| t0 + h * i as f64).collect();
        times[nodes - 1] = t1;
        let mut weights = vec![h; nodes];
        weights[0] = 0.5 * h;
        weights[nodes - 1] = 0.5 * h;
        Ok(ProbeGrid { times, weights })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn span(&self) -> f64 {
        self.times[self.times.len() - 1] - self.times[0]
    }

    /// Nodes in `[t0, t1)`, or `[t0, t1]` when `t1` is the last node.
    pub fn nodes_in(&self, t0: f64, t1: f64) -> Range<usize> {
        let a = self.times.partition_point(|&t| t < t0);
        let b = if t1 >= self.times[self.times.len() - 1] {
            self.times.len()
        } else {
            self.times.partition_point(|&t| t < t1)
        };
        a..b.max(a)
    }

    /// Unnormalized `sum w |q - q_true|^2` over `range`.
    pub(crate) fn cost_terms(&self, range: Range<usize>, q: &dyn History, truth: &dyn History) -> f64 {
        let n = q.dim();
        let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
        let mut acc = 0.0;
        for i in range {
            q.eval_into(self.times[i], &mut a);
            truth.eval_into(self.times[i], &mut b);
            let sq: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
            acc += self.weights[i] * sq;
        }
        acc
    }

    /// Adds the unnormalized `sum w q_adj sin(omega t)` over `range` to `acc`.
    pub(crate) fn gradient_terms(&self, range: Range<usize>, adjoint: &dyn History, omega: f64, acc: &mut [f64]) {
        let mut a = vec![0.0; adjoint.dim()];
        for i in range {
            let t = self.times[i];
            adjoint.eval_into(t, &mut a);
            vecops::axpy(self.weights[i] * (omega * t).sin(), &a, acc);
        }
    }
}

/// `J = (1/T) int |q - q_true|^2 dt` on the probe grid.
pub fn cost(q: &dyn History, truth: &dyn History, probe: &ProbeGrid) -> Result<f64> {
    check_dim(truth.dim(), q.dim())?;
    Ok(probe.cost_terms(0..probe.times.len(), q, truth) / probe.span())
}

/// `t -> 2 (q(t) - q_true(t))`
pub fn adjoint_forcing<'a>(q: &'a dyn History, truth: &'a dyn History) -> impl Fn(f64, &mut [f64]) + Sync + 'a {
    move |t, out| {
        let mut b = vec![0.0; out.len()];
        q.eval_into(t, out);
        truth.eval_into(t, &mut b);
        for (o, bi) in out.iter_mut().zip(&b) {
            *o = 2.0 * (*o - bi);
        }
    }
}

/// `dJ/df = (1/T) int q_adj sin(omega t) dt` on the probe grid.
pub fn gradient_wrt_forcing(adjoint: &dyn History, omega: f64, probe: &ProbeGrid) -> Vec<f64> {
    let mut g = vec![0.0; adjoint.dim()];
    probe.gradient_terms(0..probe.times.len(), adjoint, omega, &mut g);
    vecops::scale(1.0 / probe.span(), &mut g);
    g
}

/// Adjoint source `2 (q - q_true(t))` of the tracking cost.
pub struct TrackingSource<'a> {
    truth: &'a dyn History,
}

impl<'a> TrackingSource<'a> {
    pub fn new(truth: &'a dyn History) -> Self {
        TrackingSource { truth }
    }
}

impl AdjointSource for TrackingSource<'_> {
    fn eval(&self, t: f64, q: &[f64], out: &mut [f64]) {
        self.truth.eval_into(t, out);
        for (o, qi) in out.iter_mut().zip(q) {
            *o = 2.0 * (qi - *o);
        }
    }
}

/// Reference trajectory from a direct solve with `f = f_true` and `q0 = 0`.
pub fn synthesize_truth(problem: &Problem, f_true: &[f64], cfg: &LoopConfig) -> Result<PiecewiseSolution> {
    cfg.validate()?;
    let truth_problem = problem.with_forcing(f_true)?;
    let zero = vec![0.0; problem.dim()];
    let (sol, _) = segment_direct(&truth_problem, &zero, 0.0, problem.spec().final_time, cfg, None)?;
    Ok(sol)
}

/// Direct solve on one segment with the configured algorithm. Returns the
/// iteration count for the nonlinear algorithm.
pub(crate) fn segment_direct(
    problem: &Problem,
    q_start: &[f64],
    t0: f64,
    t1: f64,
    cfg: &LoopConfig,
    log: Option<&RunLog>,
) -> Result<(PiecewiseSolution, Option<usize>)> {
    let partition = cfg.partition(t0, t1)?;
    match cfg.algorithm {
        Algorithm::Serial | Algorithm::Hybrid => {
            // The hybrid direct sweep is a serial chain over its partition.
            let mut pieces = Vec::with_capacity(partition.workers());
            let mut state = q_start.to_vec();
            for p in 0..partition.workers() {
                let (a, b) = partition.interval(p);
                let piece = rk45_integrate(|t, y, dy| problem.rhs(t, y, dy), &state, a, b, &cfg.rk)?;
                state = piece.last_state().to_vec();
                pieces.push(piece);
            }
            Ok((PiecewiseSolution::new(partition, pieces)?, None))
        }
        Algorithm::Linear => {
            require_linear(problem)?;
            let forcing = |t: f64, out: &mut [f64]| problem.forcing(t, out);
            let sol = solve_direct_linear(problem.linear_part(), q_start, &forcing, &partition, &cfg.rk, &cfg.leja, log)?;
            Ok((sol, None))
        }
        Algorithm::Nonlinear => {
            let sol = solve_direct_nonlinear(problem, q_start, &partition, &cfg.rk, &cfg.leja, &cfg.iteration, log)?;
            Ok((sol.solution, Some(sol.iterations)))
        }
    }
}

fn require_linear(problem: &Problem) -> Result<()> {
    if problem.is_linear() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(
            "the linear algorithm needs a linear problem; use nonlinear or hybrid".into(),
        ))
    }
}

pub(crate) struct SegmentOutcome {
    pub direct: PiecewiseSolution,
    pub adjoint: PiecewiseSolution,
    pub iterations: Option<usize>,
}

/// Direct-adjoint loop on one segment. `stored` is a dense direct solution
/// kept from an earlier sweep; the hybrid algorithm always recomputes its
/// direct solution because the sweep overlaps the adjoint.
#[allow(clippy::too_many_arguments)]
pub(crate) fn segment_loop(
    problem: &Problem,
    truth: &dyn History,
    q_start: &[f64],
    stored: Option<PiecewiseSolution>,
    qdag_end: &[f64],
    t0: f64,
    t1: f64,
    cfg: &LoopConfig,
    log: Option<&RunLog>,
) -> Result<SegmentOutcome> {
    let source = TrackingSource::new(truth);
    if cfg.algorithm == Algorithm::Hybrid {
        let plan = HybridPlan::on(t0, t1, cfg.workers, cfg.hybrid_k, &cfg.rk)?;
        let sol = solve_hybrid(problem, q_start, &source, qdag_end, &plan, &cfg.rk, &cfg.leja, log)?;
        return Ok(SegmentOutcome {
            direct: sol.direct,
            adjoint: sol.adjoint,
            iterations: None,
        });
    }
    let (direct, iterations) = match stored {
        Some(d) => (d, None),
        None => segment_direct(problem, q_start, t0, t1, cfg, log)?,
    };
    let adjoint = match cfg.algorithm {
        Algorithm::Serial => {
            let tr = serial_adjoint(problem, &source, &direct, t0, t1, qdag_end, &cfg.rk)?;
            PiecewiseSolution::single(tr)?
        }
        _ => {
            let op = AdjointOperator::new(problem, &direct);
            let forcing = |t: f64, out: &mut [f64]| {
                let q = direct.eval(t);
                source.eval(t, &q, out);
            };
            solve_adjoint(&op, &forcing, qdag_end, direct.partition(), &cfg.rk, &cfg.leja, log)?
        }
    };
    Ok(SegmentOutcome {
        direct,
        adjoint,
        iterations,
    })
}

/// Per-segment record of one loop.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SegmentReport {
    pub index: usize,
    pub t0: f64,
    pub t1: f64,
    pub seconds: f64,
    pub direct_nodes: usize,
    pub adjoint_nodes: usize,
    pub iterations: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientReport {
    pub cost: f64,
    pub gradient: Vec<f64>,
    /// `q_adj(0)`, the gradient with respect to the initial condition.
    pub adjoint_initial: Vec<f64>,
    pub wall_seconds: f64,
    /// Time of the forward sweep that only stores checkpoint states.
    pub rough_seconds: f64,
    /// Largest number of trajectory nodes held at once.
    pub peak_resident_nodes: usize,
    /// Segments in backward processing order.
    pub segments: Vec<SegmentReport>,
}

impl GradientReport {
    /// Nonlinear iteration counts per segment, in backward order.
    pub fn iterations(&self) -> Vec<usize> {
        self.segments.iter().filter_map(|s| s.iterations).collect()
    }
}

/// One direct-adjoint loop for the current forcing of `problem`, measured
/// against `truth`.
pub fn direct_adjoint_loop(
    problem: &Problem,
    truth: &dyn History,
    cfg: &LoopConfig,
    log: Option<&RunLog>,
) -> Result<GradientReport> {
    cfg.validate()?;
    check_dim(problem.dim(), truth.dim())?;
    if cfg.algorithm == Algorithm::Linear {
        require_linear(problem)?;
    }
    run_checkpointed_loop(problem, truth, cfg, log)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DescentStep {
    pub step: usize,
    pub cost: f64,
    pub grad_norm: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DescentResult {
    pub control: Vec<f64>,
    /// One entry per evaluated control, the final one included.
    pub history: Vec<DescentStep>,
}

/// Fixed-step gradient descent `f <- f - lr grad`.
pub fn descend(
    problem: &Problem,
    truth: &dyn History,
    f_init: &[f64],
    steps: usize,
    lr: f64,
    cfg: &LoopConfig,
) -> Result<DescentResult> {
    if !(lr > 0.0) {
        return Err(Error::InvalidParameter(format!("learning rate must be positive, got {lr}")));
    }
    check_dim(problem.dim(), f_init.len())?;
    let mut f = f_init.to_vec();
    let mut history = Vec::with_capacity(steps + 1);
    for step in 0..=steps {
        let started = Instant::now();
        let report = direct_adjoint_loop(&problem.with_forcing(&f)?, truth, cfg, None)?;
        if !report.cost.is_finite() || !vecops::is_finite(&report.gradient) {
            return Err(Error::NonFiniteCost { step });
        }
        history.push(DescentStep {
            step,
            cost: report.cost,
            grad_norm: vecops::norm2(&report.gradient),
            seconds: started.elapsed().as_secs_f64(),
        });
        log::info!("descent step {step}: J = {:.6e}", report.cost);
        if step < steps {
            vecops::axpy(-lr, &report.gradient, &mut f);
        }
    }
    Ok(DescentResult { control: f, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timestepping::Trajectory;

    fn linear_traj(a: f64, b: f64) -> Trajectory {
        // q(t) = a + b t on [0, 2], two components.
        let mut tr = Trajectory::new(2);
        tr.push(0.0, &[a, a], &[b, b]);
        tr.push(2.0, &[a + 2.0 * b, a + 2.0 * b], &[b, b]);
        tr
    }

    #[test]
    fn probe_ranges_are_half_open() {
        let g = ProbeGrid::uniform(0.0, 1.0, 11).unwrap();
        assert_eq!(g.nodes_in(0.0, 0.5), 0..5);
        assert_eq!(g.nodes_in(0.5, 1.0), 5..11);
        assert!((g.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cost_of_constant_offset_is_its_square_norm() {
        let g = ProbeGrid::uniform(0.0, 2.0, 50).unwrap();
        let j = cost(&linear_traj(3.0, 0.0), &linear_traj(1.0, 0.0), &g).unwrap();
        assert!((j - 8.0).abs() < 1e-13);
        assert_eq!(cost(&linear_traj(1.0, 0.0), &linear_traj(1.0, 0.0), &g).unwrap(), 0.0);
    }

    #[test]
    fn cost_of_linear_mismatch_matches_integral() {
        // |q - q_true|^2 = 2 t^2, so J = (1/2) int_0^2 2 t^2 = 8/3.
        let g = ProbeGrid::uniform(0.0, 2.0, 2001).unwrap();
        let j = cost(&linear_traj(0.0, 1.0), &linear_traj(0.0, 0.0), &g).unwrap();
        assert!((j - 8.0 / 3.0).abs() < 1e-5);
    }

    #[test]
    fn adjoint_forcing_is_twice_the_mismatch() {
        let q = linear_traj(1.0, 0.5);
        let truth = linear_traj(0.0, 1.0);
        let f = adjoint_forcing(&q, &truth);
        let mut out = [0.0; 2];
        for t in [0.1, 0.77, 1.9] {
            f(t, &mut out);
            let expected = 2.0 * ((1.0 + 0.5 * t) - t);
            assert!((out[0] - expected).abs() < 1e-14);
        }
        let mut src = [0.0; 2];
        TrackingSource::new(&truth).eval(0.77, &q.eval(0.77), &mut src);
        f(0.77, &mut out);
        assert_eq!(src, out);
    }

    #[test]
    fn gradient_of_constant_adjoint_over_a_period_vanishes() {
        let period = 2.0 * std::f64::consts::PI;
        let g = ProbeGrid::uniform(0.0, period, 200).unwrap();
        let adj = Trajectory::constant(&[1.5, -2.0], 0.0, period);
        let grad = gradient_wrt_forcing(&adj, 1.0, &g);
        assert!(grad.iter().all(|x| x.abs() < 1e-14));
        let zero = Trajectory::constant(&[0.0, 0.0], 0.0, period);
        assert_eq!(gradient_wrt_forcing(&zero, 1.0, &g), vec![0.0, 0.0]);
    }

    #[test]
    fn config_validation() {
        assert!(LoopConfig::default().validate().is_ok());
        let bad = LoopConfig {
            workers: 0,
            ..LoopConfig::default()
        };
        assert!(bad.validate().is_err());
        let serial = LoopConfig {
            algorithm: Algorithm::Serial,
            workers: 4,
            ..LoopConfig::default()
        };
        assert!(serial.validate().is_err());
    }
}
