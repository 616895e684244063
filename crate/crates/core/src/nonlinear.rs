//! Iterative parallel direct solve for semi-linear systems.
//!
//! Each iteration linearizes `N` about the previous iterate with a Jacobian
//! averaged over every interval, solves the resulting linear problem with
//! the Paraexp chain, and stops once successive iterates agree to `eps`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dynamics::Dynamics;
use crate::error::{check_dim, Error, Result};
use crate::paraexp::{chain_solve, ChainSettings, RunLog, Stage};
use crate::par::parallel_map;
use crate::solution::{PiecewiseSolution, TimePartition};
use crate::sparse::{OperatorFamily, SparseOperator};
use crate::timestepping::{LejaConfig, RkConfig, Trajectory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IterationConfig {
    /// Convergence threshold on the relative change between iterates.
    pub eps: f64,
    pub max_iter: usize,
    /// Iterations always performed, so the first Jacobian update counts.
    pub min_iter: usize,
}

impl Default for IterationConfig {
    fn default() -> Self {
        IterationConfig {
            eps: 1e-3,
            max_iter: 25,
            min_iter: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub error: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct NonlinearSolution {
    pub solution: PiecewiseSolution,
    /// Number of linearized solves performed; the constant initial guess is
    /// not counted.
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
}

/// Relative discrete L2 change between two iterates, taken per interval on
/// the union of both node sets and maximized over intervals.
pub fn iteration_error(prev: &PiecewiseSolution, next: &PiecewiseSolution) -> Result<f64> {
    if prev.partition() != next.partition() {
        return Err(Error::InvalidParameter("iterates live on different partitions".into()));
    }
    check_dim(prev.dim(), next.dim())?;
    let errs = parallel_map(prev.pieces().len(), |p| {
        interval_error(prev.piece(p), next.piece(p))
    });
    Ok(errs.into_iter().fold(0.0, f64::max))
}

fn interval_error(a: &Trajectory, b: &Trajectory) -> f64 {
    let mut nodes: Vec<f64> = a.nodes().iter().chain(b.nodes()).copied().collect();
    nodes.sort_by(|x, y| x.total_cmp(y));
    nodes.dedup();
    let n = a.dim();
    let (mut ya, mut yb) = (vec![0.0; n], vec![0.0; n]);
    let (mut num, mut den_a, mut den_b) = (0.0, 0.0, 0.0);
    for t in nodes {
        a.eval_into(t, &mut ya);
        b.eval_into(t, &mut yb);
        for i in 0..n {
            let d = yb[i] - ya[i];
            num += d * d;
            den_a += ya[i] * ya[i];
            den_b += yb[i] * yb[i];
        }
    }
    if num == 0.0 {
        0.0
    } else if den_a > 0.0 {
        (num / den_a).sqrt()
    } else {
        (num / den_b).sqrt()
    }
}

/// Iterative parallel solve of `q' = A q + N(q) + f(t)`, `q(T_0) = q0`.
pub fn solve_direct_nonlinear<D: Dynamics + ?Sized>(
    dynamics: &D,
    q0: &[f64],
    partition: &TimePartition,
    rk: &RkConfig,
    leja: &LejaConfig,
    iteration: &IterationConfig,
    log: Option<&RunLog>,
) -> Result<NonlinearSolution> {
    check_dim(dynamics.dim(), q0.len())?;
    if iteration.max_iter == 0 || !(iteration.eps > 0.0) {
        return Err(Error::InvalidParameter(format!("iteration settings {iteration:?}")));
    }
    let n = partition.workers();
    let a = dynamics.linear_part();
    let aq0 = a.apply_vec(q0);
    let guess: Vec<Trajectory> = (0..n)
        .map(|p| {
            let (t0, t1) = partition.interval(p);
            Trajectory::constant(q0, t0, t1)
        })
        .collect();
    let mut prev = PiecewiseSolution::new(partition.clone(), guess)?;
    let mut history = Vec::new();
    let cfg = ChainSettings {
        rk,
        leja,
        log,
        label: "direct",
    };

    for it in 1..=iteration.max_iter {
        let started = Instant::now();
        let jacobians: Vec<SparseOperator> = parallel_map(n, |p| {
            dynamics.average_nonlinear_jacobian(prev.piece(p))
        })
        .into_iter()
        .collect::<Result<_>>()?;
        let ops: Vec<SparseOperator> = jacobians
            .iter()
            .map(|j| a.add(j))
            .collect::<Result<_>>()?;
        let prev_ref = &prev;
        let aq0 = &aq0;
        let stages: Vec<Stage<'_>> = (0..n)
            .map(|p| {
                let (t0, t1) = partition.interval(p);
                let jac = &jacobians[p];
                Stage {
                    worker: p,
                    len: t1 - t0,
                    handoff_time: t1,
                    op: Box::new(&ops[p]) as Box<dyn OperatorFamily>,
                    source: Box::new(move |s: f64, out: &mut [f64]| {
                        let t = t0 + s;
                        let dim = out.len();
                        let mut qi = vec![0.0; dim];
                        prev_ref.piece(p).eval_into(t, &mut qi);
                        let mut nl = vec![0.0; dim];
                        dynamics.nonlinear_part(&qi, &mut nl);
                        dynamics.forcing(t, out);
                        for i in 0..dim {
                            out[i] += aq0[i] + nl[i];
                            qi[i] -= q0[i];
                        }
                        jac.apply_add(-1.0, &qi, out);
                    }),
                }
            })
            .collect();
        let local = chain_solve(&stages, q0, &cfg)?;
        drop(stages);
        let pieces = local
            .into_iter()
            .enumerate()
            .map(|(p, tr)| {
                let (t0, t1) = partition.interval(p);
                tr.shifted(t0, t1)
            })
            .collect();
        let next = PiecewiseSolution::new(partition.clone(), pieces)?;
        let err = iteration_error(&prev, &next)?;
        history.push(IterationRecord {
            iteration: it,
            error: err,
            seconds: started.elapsed().as_secs_f64(),
        });
        log::debug!("nonlinear iteration {it}: change {err:.3e}");
        if !err.is_finite() {
            return Err(Error::NonConvergence {
                iterations: it,
                history: history.iter().map(|h| h.error).collect(),
            });
        }
        prev = next;
        if err < iteration.eps && it >= iteration.min_iter {
            log::info!("nonlinear solve converged: K = {it} solves, {} counting the initial guess", it + 1);
            return Ok(NonlinearSolution {
                solution: prev,
                iterations: it,
                history,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: iteration.max_iter,
        history: history.iter().map(|h| h.error).collect(),
    })
}
