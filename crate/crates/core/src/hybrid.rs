//! Serial direct sweep overlapped with a parallel adjoint.
//!
//! Worker `p` integrates its direct chunk as soon as `q(T_p)` arrives and
//! then immediately solves its adjoint inhomogeneous problem while later
//! workers are still busy with the direct sweep. Once every chunk is in,
//! the full direct solution is scattered and each worker carries one adjoint
//! boundary state back to the initial time. A geometric partition makes all
//! adjoint inhomogeneous solves finish together.

use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::dynamics::{AdjointOperator, AdjointSource, Dynamics};
use crate::error::{check_dim, Error, Result};
use crate::paraexp::{collect_results, RunLog};
use crate::solution::{PiecewiseSolution, TimePartition};
use crate::sparse::Reparametrized;
use crate::timestepping::{
    propagate_homogeneous, rk45_integrate, History, LejaConfig, OutputGrid, RkConfig, Trajectory,
};
use crate::vecops;

/// Pilots shorter than this are dominated by timer and cache noise.
pub const MIN_PILOT: Duration = Duration::from_millis(10);

/// Relative drift between planned and observed `k` that triggers a warning.
const K_DRIFT_WARNING: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HybridPlan {
    /// Adjoint to direct cost ratio per unit time.
    pub k: f64,
    pub partition: TimePartition,
}

impl HybridPlan {
    /// Geometric plan on `[0, t_final]`. Every interval must hold at least
    /// two minimal RK steps.
    pub fn new(t_final: f64, workers: usize, k: f64, rk: &RkConfig) -> Result<Self> {
        Self::on(0.0, t_final, workers, k, rk)
    }

    /// Geometric plan on `[t0, t1]`.
    pub fn on(t0: f64, t1: f64, workers: usize, k: f64, rk: &RkConfig) -> Result<Self> {
        let partition = TimePartition::geometric_on(t0, t1, workers, k)?;
        Self::from_partition(k, partition, rk)
    }

    pub fn from_partition(k: f64, partition: TimePartition, rk: &RkConfig) -> Result<Self> {
        let n = partition.workers();
        let narrowest = (0..n).map(|p| partition.length(p)).fold(f64::INFINITY, f64::min);
        if narrowest < 2.0 * rk.h_min {
            return Err(Error::InvalidParameter(format!(
                "interval width {narrowest:e} is below twice the minimal step {:e}",
                rk.h_min
            )));
        }
        Ok(HybridPlan { k, partition })
    }
}

/// `T_n = T (1 - r^n) / (1 - r^N)` with `r = k / (k + 1)`.
pub fn partition_geometric(t_final: f64, workers: usize, k: f64) -> Result<TimePartition> {
    TimePartition::geometric(t_final, workers, k)
}

/// Ratio of per-unit-time costs of two pilot computations, `adjoint / direct`.
pub fn pilot_cost_ratio(
    mut direct: impl FnMut() -> Result<()>,
    mut adjoint: impl FnMut() -> Result<()>,
) -> Result<f64> {
    let started = Instant::now();
    direct()?;
    let td = started.elapsed();
    let started = Instant::now();
    adjoint()?;
    let ta = started.elapsed();
    for elapsed in [td, ta] {
        if elapsed < MIN_PILOT {
            return Err(Error::PilotTooShort {
                elapsed,
                minimum: MIN_PILOT,
            });
        }
    }
    Ok(ta.as_secs_f64() / td.as_secs_f64())
}

/// Measures `k = tau_I_adj / tau_I` from a direct pilot over
/// `[0, pilot_fraction * t_final]` and the adjoint inhomogeneous solve on the
/// same span.
pub fn estimate_k<D: Dynamics + ?Sized, S: AdjointSource + ?Sized>(
    dynamics: &D,
    q0: &[f64],
    source: &S,
    t_final: f64,
    pilot_fraction: f64,
    rk: &RkConfig,
) -> Result<f64> {
    if !(pilot_fraction > 0.0 && pilot_fraction <= 0.1) {
        return Err(Error::InvalidParameter(format!(
            "pilot fraction must lie in (0, 0.1], got {pilot_fraction}"
        )));
    }
    check_dim(dynamics.dim(), q0.len())?;
    let span = pilot_fraction * t_final;
    let direct = std::cell::OnceCell::new();
    let k = pilot_cost_ratio(
        || {
            let d = rk45_integrate(|t, y, dy| dynamics.rhs(t, y, dy), q0, 0.0, span, rk)?;
            let _ = direct.set(d);
            Ok(())
        },
        || {
            let d = direct.get().expect("direct pilot ran first");
            adjoint_inhomogeneous(dynamics, source, d, rk).map(|_| ())
        },
    )?;
    log::info!("estimated adjoint/direct cost ratio k = {k:.3}");
    Ok(k)
}

#[derive(Clone, Debug)]
pub struct HybridSolution {
    pub direct: PiecewiseSolution,
    pub adjoint: PiecewiseSolution,
    /// `k` implied by the measured direct and adjoint inhomogeneous times.
    pub observed_k: f64,
}

/// Adjoint inhomogeneous solve on one direct chunk, zero at its end and
/// without the final condition term; returned in physical time.
fn adjoint_inhomogeneous<D: Dynamics + ?Sized, S: AdjointSource + ?Sized>(
    dynamics: &D,
    source: &S,
    direct: &Trajectory,
    rk: &RkConfig,
) -> Result<Trajectory> {
    let zero = vec![0.0; dynamics.dim()];
    serial_adjoint(dynamics, source, direct, direct.t_start(), direct.t_end(), &zero, rk)
}

/// Backward RK45 solve of `-dq/dt = L(t)^T q + s(t, q(t))` on `[t0, t1]`
/// from `q(t1) = terminal`, returned in physical time.
pub(crate) fn serial_adjoint<D, S, H>(
    dynamics: &D,
    source: &S,
    direct: &H,
    t0: f64,
    t1: f64,
    terminal: &[f64],
    rk: &RkConfig,
) -> Result<Trajectory>
where
    D: Dynamics + ?Sized,
    S: AdjointSource + ?Sized,
    H: History + ?Sized,
{
    let n = dynamics.dim();
    check_dim(n, terminal.len())?;
    let mut q = vec![0.0; n];
    let mut s = vec![0.0; n];
    let local = rk45_integrate(
        |sigma, y, dy| {
            let t = t1 - sigma;
            direct.eval_into(t, &mut q);
            dynamics.jacobian_transpose_apply(&q, y, dy);
            source.eval(t, &q, &mut s);
            vecops::add_assign(dy, &s);
        },
        terminal,
        0.0,
        t1 - t0,
        rk,
    )?;
    Ok(local.reflected(t1, t0))
}

/// Propagates `v` from `from` back to time zero along the full direct
/// solution, landing on every partition boundary on the way.
fn adjoint_homogeneous<D: Dynamics + ?Sized>(
    dynamics: &D,
    direct: &PiecewiseSolution,
    v: &[f64],
    from: f64,
    leja: &LejaConfig,
) -> Result<Trajectory> {
    let op = AdjointOperator::new(dynamics, direct);
    let reflected = Reparametrized::reflected(&op, from);
    let start = direct.partition().start();
    let breakpoints: Vec<f64> = direct
        .partition()
        .boundaries()
        .iter()
        .filter(|&&b| b > start && b < from)
        .map(|b| from - b)
        .collect();
    let local = propagate_homogeneous(&reflected, v, 0.0, from - start, leja, &breakpoints, OutputGrid::Adaptive)?;
    Ok(local.reflected(from, start))
}

struct WorkerOutput {
    inhomogeneous: Trajectory,
    homogeneous: Option<Trajectory>,
    direct_seconds: f64,
    adjoint_seconds: f64,
}

struct Links {
    direct_in: Option<Receiver<Vec<f64>>>,
    direct_out: Option<Sender<Vec<f64>>>,
    pieces: Sender<(usize, Trajectory)>,
    scatter: Receiver<Arc<PiecewiseSolution>>,
    adjoint_in: Option<Receiver<Vec<f64>>>,
    adjoint_out: Option<Sender<Vec<f64>>>,
}

struct Shared<'a, D: ?Sized, S: ?Sized> {
    dynamics: &'a D,
    source: &'a S,
    q0: &'a [f64],
    qdag_t: &'a [f64],
    partition: &'a TimePartition,
    rk: &'a RkConfig,
    leja: &'a LejaConfig,
    log: Option<&'a RunLog>,
}

fn run_worker<D: Dynamics + ?Sized, S: AdjointSource + ?Sized>(
    p: usize,
    ctx: &Shared<'_, D, S>,
    links: Links,
) -> Result<WorkerOutput> {
    let n = ctx.partition.workers();
    let (t0, t1) = ctx.partition.interval(p);
    let abort = || Error::Aborted { worker: p };

    let start_state = match &links.direct_in {
        None => ctx.q0.to_vec(),
        Some(rx) => rx.recv().map_err(|_| abort())?,
    };
    let direct_started = Instant::now();
    let direct = rk45_integrate(|t, y, dy| ctx.dynamics.rhs(t, y, dy), &start_state, t0, t1, ctx.rk)
        .map_err(|e| e.in_worker(p, "direct solve"))?;
    let direct_done = Instant::now();
    if let Some(log) = ctx.log {
        log.event(p, "direct", direct_started, direct_done);
    }
    if let Some(tx) = &links.direct_out {
        if let Some(log) = ctx.log {
            log.message(p, p + 1, "Q".into(), t1, direct.last_state(), 0);
        }
        let _ = tx.send(direct.last_state().to_vec());
    }
    drop(links.direct_out);

    let started = Instant::now();
    let inhomogeneous = adjoint_inhomogeneous(ctx.dynamics, ctx.source, &direct, ctx.rk)
        .map_err(|e| e.in_worker(p, "adjoint inhomogeneous solve"))?;
    let adjoint_done = Instant::now();
    if let Some(log) = ctx.log {
        log.event(p, "adjoint_inhomogeneous", started, adjoint_done);
    }
    let direct_seconds = (direct_done - direct_started).as_secs_f64();
    let adjoint_seconds = (adjoint_done - started).as_secs_f64();
    let _ = links.pieces.send((p, direct));
    drop(links.pieces);
    if let Some(tx) = &links.adjoint_out {
        if let Some(log) = ctx.log {
            log.message(p, p - 1, "I".into(), t0, inhomogeneous.first_state(), 1);
        }
        let _ = tx.send(inhomogeneous.first_state().to_vec());
    }
    drop(links.adjoint_out);

    let full = links.scatter.recv().map_err(|_| abort())?;
    let started = Instant::now();
    let homogeneous = if p + 1 < n {
        let rx = links.adjoint_in.as_ref().expect("inner workers have a successor");
        let v = rx.recv().map_err(|_| abort())?;
        Some(
            adjoint_homogeneous(ctx.dynamics, &full, &v, t1, ctx.leja)
                .map_err(|e| e.in_worker(p, "adjoint homogeneous solve"))?,
        )
    } else if vecops::norm_inf(ctx.qdag_t) > 0.0 {
        Some(
            adjoint_homogeneous(ctx.dynamics, &full, ctx.qdag_t, t1, ctx.leja)
                .map_err(|e| e.in_worker(p, "final condition solve"))?,
        )
    } else {
        None
    };
    if let (Some(log), Some(_)) = (ctx.log, &homogeneous) {
        log.event(p, "adjoint_homogeneous", started, Instant::now());
    }
    Ok(WorkerOutput {
        inhomogeneous,
        homogeneous,
        direct_seconds,
        adjoint_seconds,
    })
}

/// Hybrid direct-adjoint solve. `source` gives the adjoint forcing from the
/// direct state; `qdag_t` is the adjoint final condition.
#[allow(clippy::too_many_arguments)]
pub fn solve_hybrid<D: Dynamics + ?Sized, S: AdjointSource + ?Sized>(
    dynamics: &D,
    q0: &[f64],
    source: &S,
    qdag_t: &[f64],
    plan: &HybridPlan,
    rk: &RkConfig,
    leja: &LejaConfig,
    log: Option<&RunLog>,
) -> Result<HybridSolution> {
    check_dim(dynamics.dim(), q0.len())?;
    check_dim(dynamics.dim(), qdag_t.len())?;
    let partition = &plan.partition;
    let n = partition.workers();
    let ctx = Shared {
        dynamics,
        source,
        q0,
        qdag_t,
        partition,
        rk,
        leja,
        log,
    };

    let mut direct_in: Vec<Option<Receiver<Vec<f64>>>> = vec![None];
    let mut direct_out: Vec<Option<Sender<Vec<f64>>>> = Vec::new();
    let mut adjoint_in: Vec<Option<Receiver<Vec<f64>>>> = Vec::new();
    let mut adjoint_out: Vec<Option<Sender<Vec<f64>>>> = vec![None];
    for _ in 1..n {
        let (tx, rx) = channel();
        direct_out.push(Some(tx));
        direct_in.push(Some(rx));
        let (tx, rx) = channel();
        adjoint_out.push(Some(tx));
        adjoint_in.push(Some(rx));
    }
    direct_out.push(None);
    adjoint_in.push(None);
    let (piece_tx, piece_rx) = channel();
    let mut scatter_tx = Vec::with_capacity(n);

    let (direct, results) = thread::scope(|scope| {
        let handles: Vec<_> = (0..n)
            .map(|p| {
                let (tx, rx) = channel();
                scatter_tx.push(tx);
                let links = Links {
                    direct_in: direct_in[p].take(),
                    direct_out: direct_out[p].take(),
                    pieces: piece_tx.clone(),
                    scatter: rx,
                    adjoint_in: adjoint_in[p].take(),
                    adjoint_out: adjoint_out[p].take(),
                };
                let ctx = &ctx;
                scope.spawn(move || run_worker(p, ctx, links))
            })
            .collect();
        drop(piece_tx);

        // Coordinator: gather the direct chunks and scatter the whole.
        let mut chunks: Vec<Option<Trajectory>> = vec![None; n];
        for (p, tr) in piece_rx.iter().take(n) {
            chunks[p] = Some(tr);
        }
        let direct = if chunks.iter().all(Option::is_some) {
            let pieces = chunks.into_iter().map(Option::unwrap).collect();
            match PiecewiseSolution::new(partition.clone(), pieces) {
                Ok(sol) => {
                    let sol = Arc::new(sol);
                    for tx in &scatter_tx {
                        let _ = tx.send(Arc::clone(&sol));
                    }
                    Ok(sol)
                }
                Err(e) => Err(e),
            }
        } else {
            Err(Error::Aborted { worker: n })
        };
        scatter_tx.clear();
        let results: Vec<Result<WorkerOutput>> = handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|e| std::panic::resume_unwind(e)))
            .collect();
        (direct, results)
    });
    let outputs = collect_results(results)?;
    let direct = direct?;

    let started = Instant::now();
    let mut pieces = Vec::with_capacity(n);
    for q in 0..n {
        let (a, b) = partition.interval(q);
        let windows: Vec<Trajectory> = outputs[q..]
            .iter()
            .filter_map(|o| o.homogeneous.as_ref())
            .map(|h| h.window(a, b))
            .collect();
        let mut parts: Vec<&Trajectory> = vec![&outputs[q].inhomogeneous];
        parts.extend(windows.iter());
        pieces.push(Trajectory::sum_on_union(&parts, None)?);
    }
    if let Some(log) = log {
        log.event(0, "adjoint_assemble", started, Instant::now());
    }
    let adjoint = PiecewiseSolution::new(partition.clone(), pieces)?;

    let direct_total: f64 = outputs.iter().map(|o| o.direct_seconds).sum();
    let adjoint_total: f64 = outputs.iter().map(|o| o.adjoint_seconds).sum();
    let observed_k = if direct_total > 0.0 {
        adjoint_total / direct_total
    } else {
        f64::NAN
    };
    if observed_k.is_finite() && ((observed_k - plan.k) / plan.k).abs() > K_DRIFT_WARNING {
        log::warn!(
            "observed cost ratio {observed_k:.3} drifted from planned k = {:.3}; partition kept",
            plan.k
        );
    }
    let direct = Arc::try_unwrap(direct).unwrap_or_else(|shared| (*shared).clone());
    Ok(HybridSolution {
        direct,
        adjoint,
        observed_k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::LinearDynamics;
    use crate::paraexp::solve_adjoint_linear;
    use crate::sparse::SparseOperator;

    struct Tracking;

    impl AdjointSource for Tracking {
        fn eval(&self, t: f64, q: &[f64], out: &mut [f64]) {
            for (o, qi) in out.iter_mut().zip(q) {
                *o = 2.0 * (qi - t.sin());
            }
        }
    }

    struct Zero;

    impl AdjointSource for Zero {
        fn eval(&self, _t: f64, _q: &[f64], out: &mut [f64]) {
            out.fill(0.0);
        }
    }

    fn system() -> LinearDynamics<impl Fn(f64, &mut [f64]) + Sync> {
        let a = SparseOperator::from_triplets(
            3,
            3,
            vec![(0, 0, -1.0), (0, 1, 0.3), (1, 1, -2.0), (2, 0, 0.5), (2, 2, -0.5)],
        )
        .unwrap();
        LinearDynamics::new(a, |t: f64, o: &mut [f64]| o.fill(t.cos()))
    }

    #[test]
    fn geometric_partition_matches_high_precision_values() {
        // Closed form evaluated to 30 digits.
        let p = partition_geometric(1.0, 3, 2.11).unwrap();
        let expected = [0.0, 0.467_560_656_086_395_3, 0.784_780_265_199_673_2, 1.0];
        for (b, e) in p.boundaries().iter().zip(expected) {
            assert!((b - e).abs() < 1e-15, "{b} vs {e}");
        }
        assert_eq!(partition_geometric(2.0, 1, 2.11).unwrap().boundaries(), &[0.0, 2.0]);
    }

    #[test]
    fn zero_adjoint_data_gives_zero_adjoint() {
        let dynamics = system();
        let rk = RkConfig::with_rtol(1e-6);
        let plan = HybridPlan::new(2.0, 3, 2.11, &rk).unwrap();
        let sol = solve_hybrid(&dynamics, &[1.0, 0.0, 0.5], &Zero, &[0.0; 3], &plan, &rk, &LejaConfig::default(), None)
            .unwrap();
        for piece in sol.adjoint.pieces() {
            assert!((0..piece.len()).all(|i| vecops::norm_inf(piece.state(i)) == 0.0));
        }
        let serial = rk45_integrate(|t, y, dy| dynamics.rhs(t, y, dy), &[1.0, 0.0, 0.5], 0.0, 2.0, &rk).unwrap();
        assert!(vecops::dist_inf(sol.direct.final_state(), serial.last_state()) < 1e-5);
    }

    #[test]
    fn linear_adjoint_matches_paraexp_adjoint() {
        let dynamics = system();
        let rk = RkConfig::with_rtol(1e-7);
        let leja = LejaConfig::with_tol(1e-8);
        let plan = HybridPlan::new(2.0, 4, 2.11, &rk).unwrap();
        let qdag_t = [0.2, -0.1, 0.3];
        let hybrid = solve_hybrid(&dynamics, &[1.0, 0.0, 0.5], &Tracking, &qdag_t, &plan, &rk, &leja, None).unwrap();
        let direct = &hybrid.direct;
        let forcing = |t: f64, out: &mut [f64]| Tracking.eval(t, &direct.eval(t), out);
        let reference =
            solve_adjoint_linear(dynamics.linear_part(), &forcing, &qdag_t, &plan.partition, &rk, &leja, None).unwrap();
        for k in 0..=40 {
            let t = 0.05 * k as f64;
            let d = vecops::dist_inf(&hybrid.adjoint.eval(t), &reference.eval(t));
            assert!(d < 1e-5, "t = {t}: {d}");
        }
    }

    #[test]
    fn narrow_intervals_are_rejected() {
        let mut rk = RkConfig::default();
        rk.h_min = 0.1;
        assert!(HybridPlan::new(1.0, 8, 2.11, &rk).is_err());
    }

    #[test]
    fn pilot_ratio_rejects_short_pilots() {
        let r = pilot_cost_ratio(|| Ok(()), || Ok(()));
        assert!(matches!(r, Err(Error::PilotTooShort { .. })));
    }

    #[test]
    fn pilot_ratio_of_equal_work_is_near_one() {
        let work = || {
            thread::sleep(Duration::from_millis(30));
            Ok(())
        };
        let k = pilot_cost_ratio(work, work).unwrap();
        assert!((k - 1.0).abs() < 0.2, "{k}");
        let double = || {
            thread::sleep(Duration::from_millis(60));
            Ok(())
        };
        let k2 = pilot_cost_ratio(work, double).unwrap();
        assert!((k2 - 2.0).abs() < 0.4, "{k2}");
    }
}
