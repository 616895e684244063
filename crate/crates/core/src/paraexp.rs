//! Parallel-in-time direct and adjoint solves for linear operators.
//!
//! Every worker integrates an inhomogeneous problem with zero initial data on
//! its own interval, then a chain of homogeneous problems carries the
//! interval end states downstream. The solution on an interval is the offset
//! plus the inhomogeneous part plus all homogeneous parts that reach it.

use std::collections::HashMap;
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::Mutex;
use std::thread;
use std::time::Instant;

use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::solution::{PiecewiseSolution, TimePartition};
use crate::sparse::{OperatorFamily, Reparametrized, SparseOperator};
use crate::timestepping::{
    propagate_homogeneous, rk45_integrate, LejaConfig, OutputGrid, RkConfig, Trajectory,
};
use crate::vecops;

/// A state handed from one worker to the next.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Message {
    pub from: usize,
    pub to: usize,
    /// `"I"` for an inhomogeneous end state, `"H<j>"` for homogeneous problem `j`.
    pub tag: String,
    /// Boundary time the state belongs to.
    pub time: f64,
    pub norm: f64,
    #[serde(skip)]
    seq: usize,
}

/// Wall-clock span of one phase on one worker, in seconds since the log
/// was created.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseEvent {
    pub worker: usize,
    pub phase: String,
    pub start: f64,
    pub end: f64,
}

/// Thread-safe record of messages and phase timings.
#[derive(Debug)]
pub struct RunLog {
    origin: Instant,
    messages: Mutex<Vec<Message>>,
    events: Mutex<Vec<PhaseEvent>>,
}

impl Default for RunLog {
    fn default() -> Self {
        RunLog::new()
    }
}

impl RunLog {
    pub fn new() -> Self {
        RunLog {
            origin: Instant::now(),
            messages: Mutex::new(Vec::new()),
            events: Mutex::new(Vec::new()),
        }
    }

    pub(crate) fn message(&self, from: usize, to: usize, tag: String, time: f64, state: &[f64], seq: usize) {
        self.messages.lock().unwrap().push(Message {
            from,
            to,
            tag,
            time,
            norm: vecops::norm2(state),
            seq,
        });
    }

    pub(crate) fn event(&self, worker: usize, phase: impl Into<String>, start: Instant, end: Instant) {
        self.events.lock().unwrap().push(PhaseEvent {
            worker,
            phase: phase.into(),
            start: start.duration_since(self.origin).as_secs_f64(),
            end: end.duration_since(self.origin).as_secs_f64(),
        });
    }

    /// Messages ordered by sender and send order, independent of thread timing.
    pub fn messages(&self) -> Vec<Message> {
        let mut m = self.messages.lock().unwrap().clone();
        m.sort_by(|a, b| (a.from, a.seq).cmp(&(b.from, b.seq)));
        m
    }

    pub fn events(&self) -> Vec<PhaseEvent> {
        let mut e = self.events.lock().unwrap().clone();
        e.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.worker.cmp(&b.worker)));
        e
    }

    /// One JSON object per line.
    pub fn messages_json_lines(&self) -> String {
        self.messages()
            .iter()
            .map(|m| serde_json::to_string(m).expect("messages serialize"))
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Largest spread of finish times among the workers of one inhomogeneous
    /// round, in seconds. Rounds are matched by their order on each worker;
    /// `None` when no round ran on two or more workers.
    pub fn inhomogeneous_lag(&self) -> Option<f64> {
        let mut seen: HashMap<(String, usize), usize> = HashMap::new();
        let mut rounds: HashMap<(String, usize), (f64, f64, usize)> = HashMap::new();
        for e in self.events().into_iter().filter(|e| e.phase.ends_with("_inhomogeneous")) {
            let idx = seen.entry((e.phase.clone(), e.worker)).or_insert(0);
            let round = rounds.entry((e.phase, *idx)).or_insert((f64::INFINITY, f64::NEG_INFINITY, 0));
            *idx += 1;
            round.0 = round.0.min(e.end);
            round.1 = round.1.max(e.end);
            round.2 += 1;
        }
        rounds
            .values()
            .filter(|r| r.2 >= 2)
            .map(|r| r.1 - r.0)
            .reduce(f64::max)
    }

    pub fn clear(&self) {
        self.messages.lock().unwrap().clear();
        self.events.lock().unwrap().clear();
    }
}

type Source<'a> = Box<dyn Fn(f64, &mut [f64]) + Sync + 'a>;

/// One link of a forward chain, in local time `s` in `[0, len]`.
pub(crate) struct Stage<'a> {
    pub worker: usize,
    pub len: f64,
    /// Physical time of the state this stage hands on.
    pub handoff_time: f64,
    pub op: Box<dyn OperatorFamily + 'a>,
    pub source: Source<'a>,
}

struct Packet {
    index: usize,
    state: Vec<f64>,
}

fn tag(index: usize) -> String {
    if index == 0 {
        "I".to_string()
    } else {
        format!("H{}", index - 1)
    }
}

pub(crate) struct ChainSettings<'a> {
    pub rk: &'a RkConfig,
    pub leja: &'a LejaConfig,
    pub log: Option<&'a RunLog>,
    pub label: &'static str,
}

/// Solves the chain of stages in parallel, one thread per stage. Returns the
/// combined solution of every stage in its local time, offset included.
pub(crate) fn chain_solve(stages: &[Stage<'_>], offset: &[f64], cfg: &ChainSettings<'_>) -> Result<Vec<Trajectory>> {
    let n = stages.len();
    if n == 1 {
        return run_stage(0, &stages[0], None, None, None, offset, cfg).map(|t| vec![t]);
    }
    let mut txs: Vec<Option<Sender<Packet>>> = Vec::with_capacity(n);
    let mut rxs: Vec<Option<Receiver<Packet>>> = vec![None];
    for _ in 0..n - 1 {
        let (tx, rx) = channel();
        txs.push(Some(tx));
        rxs.push(Some(rx));
    }
    txs.push(None);

    let results: Vec<Result<Trajectory>> = thread::scope(|scope| {
        let handles: Vec<_> = stages
            .iter()
            .enumerate()
            .map(|(k, stage)| {
                let rx = rxs[k].take();
                let tx = txs[k].take();
                let next = stages.get(k + 1).map(|s| s.worker);
                scope.spawn(move || run_stage(k, stage, rx, tx, next, offset, cfg))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
            .collect()
    });
    collect_results(results)
}

/// Keeps the first genuine failure; aborts caused by it are secondary.
pub(crate) fn collect_results<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    let mut first_abort = None;
    let mut genuine = None;
    let mut ok = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e @ Error::Aborted { .. }) => {
                first_abort.get_or_insert(e);
            }
            Err(e) => {
                genuine.get_or_insert(e);
            }
        }
    }
    match (genuine, first_abort) {
        (Some(e), _) | (None, Some(e)) => Err(e),
        (None, None) => Ok(ok),
    }
}

fn run_stage(
    k: usize,
    stage: &Stage<'_>,
    inbox: Option<Receiver<Packet>>,
    outbox: Option<Sender<Packet>>,
    next_worker: Option<usize>,
    offset: &[f64],
    cfg: &ChainSettings<'_>,
) -> Result<Trajectory> {
    let dim = offset.len();
    let w = stage.worker;
    let mut seq = 0;
    let send = |index: usize, state: &[f64], seq: &mut usize| {
        if let Some(tx) = &outbox {
            if let (Some(log), Some(to)) = (cfg.log, next_worker) {
                log.message(w, to, tag(index), stage.handoff_time, state, *seq);
            }
            *seq += 1;
            // A closed channel means the receiver already failed; its error wins.
            let _ = tx.send(Packet {
                index,
                state: state.to_vec(),
            });
        }
    };

    let started = Instant::now();
    let mut tmp = vec![0.0; dim];
    let inh = rk45_integrate(
        |s, y, dy| {
            stage.op.apply_at(s, y, dy);
            (stage.source)(s, &mut tmp);
            vecops::add_assign(dy, &tmp);
        },
        &vec![0.0; dim],
        0.0,
        stage.len,
        cfg.rk,
    )
    .map_err(|e| e.in_worker(w, "inhomogeneous solve"))?;
    if let Some(log) = cfg.log {
        log.event(w, format!("{}_inhomogeneous", cfg.label), started, Instant::now());
    }
    send(0, inh.last_state(), &mut seq);

    let mut homs: Vec<Trajectory> = Vec::with_capacity(k);
    if let Some(rx) = inbox {
        let started = Instant::now();
        let mut grid: Option<Vec<f64>> = None;
        for _ in 0..k {
            let packet = rx.recv().map_err(|_| Error::Aborted { worker: w })?;
            let out = match &grid {
                None => OutputGrid::Adaptive,
                Some(nodes) => OutputGrid::At(nodes),
            };
            let h = propagate_homogeneous(stage.op.as_ref(), &packet.state, 0.0, stage.len, cfg.leja, &[], out)
                .map_err(|e| e.in_worker(w, "homogeneous solve"))?;
            send(packet.index + 1, h.last_state(), &mut seq);
            if grid.is_none() && h.len() > 2 {
                grid = Some(h.nodes().to_vec());
            }
            homs.push(h);
        }
        if let Some(log) = cfg.log {
            log.event(w, format!("{}_homogeneous", cfg.label), started, Instant::now());
        }
    }
    drop(outbox);

    let started = Instant::now();
    let combined = if homs.is_empty() {
        Trajectory::sum_on_union(&[&inh], Some(offset))?
    } else {
        let refs: Vec<&Trajectory> = homs.iter().collect();
        let hsum = Trajectory::sum_on_union(&refs, None)?;
        drop(homs);
        Trajectory::sum_on_union(&[&inh, &hsum], Some(offset))?
    };
    if let Some(log) = cfg.log {
        log.event(w, format!("{}_assemble", cfg.label), started, Instant::now());
    }
    Ok(combined)
}

/// Direct solve of `q' = A q + f(t)`, `q(T_0) = q0`, over the partition.
pub fn solve_direct_linear(
    a: &SparseOperator,
    q0: &[f64],
    forcing: &(dyn Fn(f64, &mut [f64]) + Sync),
    partition: &TimePartition,
    rk: &RkConfig,
    leja: &LejaConfig,
    log: Option<&RunLog>,
) -> Result<PiecewiseSolution> {
    check_dim(a.rows(), q0.len())?;
    let aq0 = a.apply_vec(q0);
    let aq0 = &aq0;
    let stages: Vec<Stage<'_>> = (0..partition.workers())
        .map(|p| {
            let (t0, t1) = partition.interval(p);
            Stage {
                worker: p,
                len: t1 - t0,
                handoff_time: t1,
                op: Box::new(a) as Box<dyn OperatorFamily>,
                source: Box::new(move |s: f64, out: &mut [f64]| {
                    forcing(t0 + s, out);
                    vecops::add_assign(out, aq0);
                }) as Source<'_>,
            }
        })
        .collect();
    let cfg = ChainSettings {
        rk,
        leja,
        log,
        label: "direct",
    };
    let local = chain_solve(&stages, q0, &cfg)?;
    let pieces = local
        .into_iter()
        .enumerate()
        .map(|(p, tr)| {
            let (t0, t1) = partition.interval(p);
            tr.shifted(t0, t1)
        })
        .collect();
    PiecewiseSolution::new(partition.clone(), pieces)
}

/// Adjoint solve of `-dq/dt = L(t) q + s(t)` backwards from `q(T_N) = qdag_t`,
/// where `adjoint_op` supplies `L(t)` (the transposed Jacobian) in physical
/// time. The final condition is absorbed into the source, so the chain runs
/// from the last worker towards the first.
pub fn solve_adjoint(
    adjoint_op: &dyn OperatorFamily,
    source: &(dyn Fn(f64, &mut [f64]) + Sync),
    qdag_t: &[f64],
    partition: &TimePartition,
    rk: &RkConfig,
    leja: &LejaConfig,
    log: Option<&RunLog>,
) -> Result<PiecewiseSolution> {
    check_dim(adjoint_op.dim(), qdag_t.len())?;
    let n = partition.workers();
    let has_final = vecops::norm_inf(qdag_t) > 0.0;
    // For a constant operator the absorbed term is a constant vector.
    let constant_term = if has_final && adjoint_op.is_constant() {
        let mut v = vec![0.0; qdag_t.len()];
        adjoint_op.apply_at(0.0, qdag_t, &mut v);
        Some(v)
    } else {
        None
    };
    let constant_term = &constant_term;
    let stages: Vec<Stage<'_>> = (0..n)
        .map(|k| {
            let p = n - 1 - k;
            let (t0, t1) = partition.interval(p);
            Stage {
                worker: p,
                len: t1 - t0,
                handoff_time: t0,
                op: Box::new(Reparametrized::reflected(adjoint_op, t1)) as Box<dyn OperatorFamily>,
                source: Box::new(move |s: f64, out: &mut [f64]| {
                    let t = t1 - s;
                    source(t, out);
                    if let Some(c) = constant_term {
                        vecops::add_assign(out, c);
                    } else if has_final {
                        let mut v = vec![0.0; out.len()];
                        adjoint_op.apply_at(t, qdag_t, &mut v);
                        vecops::add_assign(out, &v);
                    }
                }) as Source<'_>,
            }
        })
        .collect();
    let cfg = ChainSettings {
        rk,
        leja,
        log,
        label: "adjoint",
    };
    let local = chain_solve(&stages, qdag_t, &cfg)?;
    let mut pieces: Vec<Option<Trajectory>> = vec![None; n];
    for (k, tr) in local.into_iter().enumerate() {
        let p = n - 1 - k;
        let (t0, t1) = partition.interval(p);
        pieces[p] = Some(tr.reflected(t1, t0));
    }
    PiecewiseSolution::new(partition.clone(), pieces.into_iter().map(Option::unwrap).collect())
}

/// Adjoint of the linear system `q' = A q + f`: `-dq/dt = A^T q + s(t)`.
pub fn solve_adjoint_linear(
    a: &SparseOperator,
    adj_forcing: &(dyn Fn(f64, &mut [f64]) + Sync),
    qdag_t: &[f64],
    partition: &TimePartition,
    rk: &RkConfig,
    leja: &LejaConfig,
    log: Option<&RunLog>,
) -> Result<PiecewiseSolution> {
    let at = a.transpose();
    solve_adjoint(&at, adj_forcing, qdag_t, partition, rk, leja, log)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay() -> SparseOperator {
        SparseOperator::from_triplets(2, 2, vec![(0, 0, -1.0), (0, 1, 0.5), (1, 1, -3.0)]).unwrap()
    }

    #[test]
    fn zero_forcing_zero_state_stays_zero() {
        let part = TimePartition::equidistant(1.0, 3).unwrap();
        let sol = solve_direct_linear(
            &decay(),
            &[0.0, 0.0],
            &|_, out: &mut [f64]| out.fill(0.0),
            &part,
            &RkConfig::default(),
            &LejaConfig::default(),
            None,
        )
        .unwrap();
        assert!(sol.pieces().iter().all(|p| (0..p.len()).all(|i| vecops::norm_inf(p.state(i)) == 0.0)));
    }

    #[test]
    fn scalar_decay_matches_exponential() {
        let a = SparseOperator::from_diagonal(&[-2.0]);
        let part = TimePartition::equidistant(2.0, 4).unwrap();
        let rk = RkConfig::with_rtol(1e-8);
        let sol = solve_direct_linear(&a, &[1.0], &|_, o: &mut [f64]| o[0] = 0.0, &part, &rk, &LejaConfig::with_tol(1e-9), None)
            .unwrap();
        for k in 0..=20 {
            let t = 0.1 * k as f64;
            assert!((sol.eval(t)[0] - (-2.0 * t).exp()).abs() < 1e-7);
        }
        assert!(sol.continuity_gaps().iter().all(|g| *g < 1e-7));
    }

    #[test]
    fn adjoint_with_zero_operator_is_linear_in_time() {
        let a = SparseOperator::zeros(1, 1);
        let part = TimePartition::equidistant(2.0, 3).unwrap();
        let sol = solve_adjoint_linear(
            &a,
            &|_, o: &mut [f64]| o[0] = 0.5,
            &[1.0],
            &part,
            &RkConfig::default(),
            &LejaConfig::default(),
            None,
        )
        .unwrap();
        for k in 0..=20 {
            let t = 0.1 * k as f64;
            assert!((sol.eval(t)[0] - (1.0 + (2.0 - t) * 0.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn message_pattern_follows_worker_plans() {
        let part = TimePartition::equidistant(1.0, 4).unwrap();
        let log = RunLog::new();
        solve_direct_linear(
            &decay(),
            &[1.0, 1.0],
            &|t, o: &mut [f64]| o.fill(t.sin()),
            &part,
            &RkConfig::default(),
            &LejaConfig::default(),
            Some(&log),
        )
        .unwrap();
        let msgs = log.messages();
        for p in 0..3 {
            let sent: Vec<_> = msgs.iter().filter(|m| m.from == p).collect();
            assert_eq!(sent.len(), p + 1);
            assert!(sent.iter().all(|m| m.to == p + 1));
            assert_eq!(sent[0].tag, "I");
        }
        assert!(msgs.iter().all(|m| m.from != 3));
        let lag = log.inhomogeneous_lag().unwrap();
        assert!(lag >= 0.0 && lag.is_finite());
    }

    #[test]
    fn lag_is_undefined_for_a_single_worker() {
        let log = RunLog::new();
        solve_direct_linear(
            &decay(),
            &[1.0, 1.0],
            &|_, o: &mut [f64]| o.fill(1.0),
            &TimePartition::equidistant(1.0, 1).unwrap(),
            &RkConfig::default(),
            &LejaConfig::default(),
            Some(&log),
        )
        .unwrap();
        assert_eq!(log.inhomogeneous_lag(), None);
    }
}
