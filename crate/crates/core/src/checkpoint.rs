//! Equispaced checkpointing of the direct-adjoint loop.
//!
//! A rough forward sweep keeps only the states at the checkpoints. The
//! backward sweep then recomputes each segment densely from its checkpoint,
//! runs the adjoint over it seeded with the adjoint state of the later
//! segment and drops the dense data before moving on.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::adjoint_loop::{segment_direct, segment_loop, Algorithm, GradientReport, LoopConfig, ProbeGrid, SegmentReport};
use crate::dynamics::Dynamics;
use crate::error::{Error, Result};
use crate::mesh::Problem;
use crate::paraexp::RunLog;
use crate::solution::PiecewiseSolution;
use crate::timestepping::History;
use crate::vecops;

/// What the rough sweep keeps between checkpoints.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Storage {
    /// Only checkpoint states; segments are recomputed on the way back.
    #[default]
    Recompute,
    /// Every dense segment, so nothing is recomputed.
    KeepAll,
}

/// Segment boundaries `t_i = i T / (M + 1)`, `i = 0..=M+1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckpointSchedule {
    boundaries: Vec<f64>,
}

impl CheckpointSchedule {
    pub fn equispaced(t_final: f64, checkpoints: usize) -> Result<Self> {
        if !(t_final > 0.0) {
            return Err(Error::InvalidParameter(format!("final time must be positive, got {t_final}")));
        }
        let segments = checkpoints + 1;
        let mut boundaries: Vec<f64> = (0..=segments)
            .map(|i| i as f64 * t_final / segments as f64)
            .collect();
        boundaries[segments] = t_final;
        Ok(CheckpointSchedule { boundaries })
    }

    /// Interior checkpoint times `t_1..t_M`.
    pub fn checkpoints(&self) -> &[f64] {
        &self.boundaries[1..self.boundaries.len() - 1]
    }

    pub fn segments(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn segment(&self, i: usize) -> (f64, f64) {
        (self.boundaries[i], self.boundaries[i + 1])
    }
}

/// Counts trajectory nodes currently held and the largest total seen.
#[derive(Debug, Default)]
struct MemoryMeter {
    current: usize,
    peak: usize,
}

impl MemoryMeter {
    fn hold(&mut self, nodes: usize) {
        self.current += nodes;
        self.peak = self.peak.max(self.current);
    }

    fn release(&mut self, nodes: usize) {
        self.current -= nodes;
    }
}

pub(crate) fn run_checkpointed_loop(
    problem: &Problem,
    truth: &dyn History,
    cfg: &LoopConfig,
    log: Option<&RunLog>,
) -> Result<GradientReport> {
    let started = Instant::now();
    let t_final = problem.spec().final_time;
    let schedule = CheckpointSchedule::equispaced(t_final, cfg.checkpoints)?;
    let probe = ProbeGrid::uniform(0.0, t_final, cfg.probe_nodes)?;
    let omega = problem.spec().omega;
    let dim = problem.dim();
    let segments = schedule.segments();
    let mut meter = MemoryMeter::default();

    // Rough sweep up to the last checkpoint.
    let mut states: Vec<Vec<f64>> = vec![vec![0.0; dim]];
    let mut stored: Vec<Option<PiecewiseSolution>> = vec![None; segments];
    for i in 0..segments - 1 {
        let (t0, t1) = schedule.segment(i);
        let (sol, _) = segment_direct(problem, &states[i], t0, t1, cfg, log)?;
        meter.hold(sol.node_count());
        states.push(sol.final_state().to_vec());
        match cfg.storage {
            Storage::KeepAll => stored[i] = Some(sol),
            Storage::Recompute => meter.release(sol.node_count()),
        }
    }
    let rough_seconds = started.elapsed().as_secs_f64();

    let mut qdag = vec![0.0; dim];
    let mut cost = 0.0;
    let mut gradient = vec![0.0; dim];
    let mut reports = Vec::with_capacity(segments);
    for i in (0..segments).rev() {
        let seg_started = Instant::now();
        let (t0, t1) = schedule.segment(i);
        let kept = stored[i].take();
        let kept_nodes = kept.as_ref().map_or(0, PiecewiseSolution::node_count);
        let out = segment_loop(problem, truth, &states[i], kept, &qdag, t0, t1, cfg, log)?;
        let fresh_direct = if kept_nodes == 0 || cfg.algorithm == Algorithm::Hybrid {
            out.direct.node_count()
        } else {
            0
        };
        meter.hold(fresh_direct + out.adjoint.node_count());

        let range = probe.nodes_in(t0, t1);
        cost += probe.cost_terms(range.clone(), &out.direct, truth);
        probe.gradient_terms(range, &out.adjoint, omega, &mut gradient);
        qdag = out.adjoint.initial_state().to_vec();

        meter.release(fresh_direct + out.adjoint.node_count() + kept_nodes);
        reports.push(SegmentReport {
            index: i,
            t0,
            t1,
            seconds: seg_started.elapsed().as_secs_f64(),
            direct_nodes: out.direct.node_count(),
            adjoint_nodes: out.adjoint.node_count(),
            iterations: out.iterations,
        });
    }
    let span = probe.span();
    vecops::scale(1.0 / span, &mut gradient);
    Ok(GradientReport {
        cost: cost / span,
        gradient,
        adjoint_initial: qdag,
        wall_seconds: started.elapsed().as_secs_f64(),
        rough_seconds,
        peak_resident_nodes: meter.peak,
        segments: reports,
    })
}
