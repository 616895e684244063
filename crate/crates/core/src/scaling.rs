//! Cost model of the parallel loops.
//!
//! Costs are wall-clock seconds per simulated time unit of the four Paraexp
//! kernels and of the serial direct solve. The closed forms below give the
//! speedup of each algorithm, and [`simulate_schedule`] replays the same
//! worker timelines event by event as an independent check.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::adjoint_loop::TrackingSource;
use crate::dynamics::{AdjointOperator, Dynamics};
use crate::error::{Error, Result};
use crate::hybrid::{serial_adjoint, MIN_PILOT};
use crate::mesh::Problem;
use crate::solution::TimePartition;
use crate::sparse::{OperatorFamily, Reparametrized, SparseOperator};
use crate::timestepping::{propagate_homogeneous, rk45_integrate, LejaConfig, OutputGrid, RkConfig, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingProfile {
    /// Direct inhomogeneous solve.
    pub tau_i: f64,
    /// Direct homogeneous propagation.
    pub tau_h: f64,
    pub tau_i_adj: f64,
    pub tau_h_adj: f64,
    /// Direct solve of the full equation in series.
    pub tau_d_serial: f64,
}

impl TimingProfile {
    pub fn validate(&self) -> Result<()> {
        let all = [self.tau_i, self.tau_h, self.tau_i_adj, self.tau_h_adj, self.tau_d_serial];
        if all.iter().all(|t| *t > 0.0 && t.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("timing profile must be positive: {self:?}")))
        }
    }

    /// `k = tau_I_adj / tau_I`, the ratio behind the hybrid partition.
    pub fn hybrid_k(&self) -> f64 {
        self.tau_i_adj / self.tau_i
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpeedupPrediction {
    pub workers: usize,
    pub speedup: f64,
    /// Limit of the speedup for infinitely many workers.
    pub s_max: f64,
    /// Fewest workers with a speedup above one; nonlinear only, and `None`
    /// there when no worker count helps.
    pub n_min: Option<usize>,
    pub iterations: usize,
}

fn check_workers(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::InvalidParameter("at least one worker is required".into()))
    } else {
        Ok(())
    }
}

/// `1/s = 1/N + ((N-1)/N) (tau_H + tau_H_adj) / (tau_I + tau_I_adj)`
pub fn predict_linear(profile: &TimingProfile, n: usize) -> Result<SpeedupPrediction> {
    profile.validate()?;
    check_workers(n)?;
    let ratio = (profile.tau_h + profile.tau_h_adj) / (profile.tau_i + profile.tau_i_adj);
    let nf = n as f64;
    let inv = 1.0 / nf + (nf - 1.0) / nf * ratio;
    Ok(SpeedupPrediction {
        workers: n,
        speedup: 1.0 / inv,
        s_max: 1.0 / ratio,
        n_min: None,
        iterations: 1,
    })
}

/// Speedup of the iterative algorithm with `k_iter` direct iterations.
pub fn predict_nonlinear(profile: &TimingProfile, n: usize, k_iter: usize) -> Result<SpeedupPrediction> {
    profile.validate()?;
    check_workers(n)?;
    if k_iter == 0 {
        return Err(Error::InvalidParameter("iteration count must be positive".into()));
    }
    let p = profile;
    let k = k_iter as f64;
    let serial = p.tau_d_serial + p.tau_i_adj;
    let nf = n as f64;
    let inv = (k * p.tau_i + p.tau_i_adj) / (nf * serial) + (nf - 1.0) / nf * (k * p.tau_h + p.tau_h_adj) / serial;
    Ok(SpeedupPrediction {
        workers: n,
        speedup: 1.0 / inv,
        s_max: serial / (k * p.tau_h + p.tau_h_adj),
        n_min: minimum_workers(p, k_iter),
        iterations: k_iter,
    })
}

/// Smallest `N >= 2` with a nonlinear speedup above one, from `N Y > X`
/// where `X = K (tau_I - tau_H) + tau_I_adj - tau_H_adj` and
/// `Y = tau_D + tau_I_adj - K tau_H - tau_H_adj`.
pub fn minimum_workers(profile: &TimingProfile, k_iter: usize) -> Option<usize> {
    let p = profile;
    let k = k_iter as f64;
    let x = k * (p.tau_i - p.tau_h) + p.tau_i_adj - p.tau_h_adj;
    let y = p.tau_d_serial + p.tau_i_adj - k * p.tau_h - p.tau_h_adj;
    if y <= 0.0 {
        return None;
    }
    let bound = x / y;
    let n = if bound < 1.0 { 2 } else { bound.floor() as usize + 1 };
    Some(n.max(2))
}

/// `1/s = (T tau_I + (T_N - T_{N-1}) tau_I_adj + T_H tau_H_adj) / (T (tau_I + tau_I_adj))`
/// with `T_H = T` when the adjoint has a final condition and `T_{N-1}`
/// otherwise.
pub fn predict_hybrid(profile: &TimingProfile, partition: &TimePartition, has_final_condition: bool) -> Result<SpeedupPrediction> {
    profile.validate()?;
    let p = profile;
    let n = partition.workers();
    let b = partition.boundaries();
    let t = partition.end() - partition.start();
    let last = partition.length(n - 1);
    let t_h = if has_final_condition {
        t
    } else {
        b[n - 1] - partition.start()
    };
    let inv = (t * p.tau_i + last * p.tau_i_adj + t_h * p.tau_h_adj) / (t * (p.tau_i + p.tau_i_adj));
    Ok(SpeedupPrediction {
        workers: n,
        speedup: 1.0 / inv,
        s_max: (p.tau_i + p.tau_i_adj) / (p.tau_i + p.tau_h_adj),
        n_min: None,
        iterations: 1,
    })
}

/// Which worker timeline to replay.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ScheduleKind {
    Linear,
    Nonlinear { iterations: usize },
    Hybrid { has_final_condition: bool },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScheduleResult {
    pub makespan: f64,
    /// Time of the same loop in series.
    pub serial: f64,
    /// Completion time of each worker's adjoint inhomogeneous solve.
    pub adjoint_inhomogeneous_finish: Vec<f64>,
}

impl ScheduleResult {
    pub fn speedup(&self) -> f64 {
        self.serial / self.makespan
    }
}

/// Finish times of a task graph in which every task runs on one worker
/// after that worker's previous task and after its dependencies.
struct Dag {
    finish: Vec<f64>,
    worker_free: Vec<f64>,
}

impl Dag {
    fn new(workers: usize) -> Self {
        Dag {
            finish: Vec::new(),
            worker_free: vec![0.0; workers],
        }
    }

    /// Tasks are added in a topological order consistent with each worker's
    /// program order, so finish times are settled on insertion.
    fn add(&mut self, worker: usize, cost: f64, deps: &[usize]) -> usize {
        let ready = deps.iter().map(|&d| self.finish[d]).fold(self.worker_free[worker], f64::max);
        let end = ready + cost;
        self.worker_free[worker] = end;
        self.finish.push(end);
        self.finish.len() - 1
    }

    fn makespan(&self) -> f64 {
        self.finish.iter().copied().fold(0.0, f64::max)
    }

    fn barrier(&self) -> Vec<usize> {
        (0..self.finish.len()).collect()
    }
}

/// Adds one Paraexp chain and returns the ids of each worker's last task.
/// `order` lists workers from the start of the chain to its end.
fn paraexp_chain(dag: &mut Dag, partition: &TimePartition, order: &[usize], tau_i: f64, tau_h: f64, after: &[usize]) -> Vec<usize> {
    let n = order.len();
    // outputs[k][j]: task producing message j of stage k (0 = inhomogeneous).
    let mut outputs: Vec<Vec<usize>> = Vec::with_capacity(n);
    for (k, &w) in order.iter().enumerate() {
        let len = partition.length(w);
        let inh = dag.add(w, tau_i * len, after);
        let mut produced = vec![inh];
        for j in 0..k {
            let dep = outputs[k - 1][j];
            produced.push(dag.add(w, tau_h * len, &[dep]));
        }
        outputs.push(produced);
    }
    outputs.iter().map(|o| *o.last().unwrap()).collect()
}

/// Replays the worker timelines under exact per-time-unit costs.
pub fn simulate_schedule(kind: ScheduleKind, profile: &TimingProfile, partition: &TimePartition) -> Result<ScheduleResult> {
    profile.validate()?;
    let p = profile;
    let n = partition.workers();
    let span = partition.end() - partition.start();
    let forward: Vec<usize> = (0..n).collect();
    let backward: Vec<usize> = (0..n).rev().collect();
    let mut dag = Dag::new(n);
    match kind {
        ScheduleKind::Linear | ScheduleKind::Nonlinear { .. } => {
            let (iterations, serial) = match kind {
                ScheduleKind::Nonlinear { iterations } if iterations == 0 => {
                    return Err(Error::InvalidParameter("iteration count must be positive".into()))
                }
                ScheduleKind::Nonlinear { iterations } => (iterations, span * (p.tau_d_serial + p.tau_i_adj)),
                _ => (1, span * (p.tau_i + p.tau_i_adj)),
            };
            let mut last: Vec<usize> = Vec::new();
            for it in 0..iterations {
                // Each nonlinear iteration ends with a global error reduction.
                let after = if it == 0 { Vec::new() } else { dag.barrier() };
                last = paraexp_chain(&mut dag, partition, &forward, p.tau_i, p.tau_h, &after);
            }
            // A worker's adjoint needs the direct solution on its own interval.
            let mut adjoint_inh = vec![0.0; n];
            let mut outputs: Vec<Vec<usize>> = Vec::with_capacity(n);
            for (k, &w) in backward.iter().enumerate() {
                let len = partition.length(w);
                let inh = dag.add(w, p.tau_i_adj * len, &[last[w]]);
                adjoint_inh[w] = dag.finish[inh];
                let mut produced = vec![inh];
                for j in 0..k {
                    let dep = outputs[k - 1][j];
                    produced.push(dag.add(w, p.tau_h_adj * len, &[dep]));
                }
                outputs.push(produced);
            }
            Ok(ScheduleResult {
                makespan: dag.makespan(),
                serial,
                adjoint_inhomogeneous_finish: adjoint_inh,
            })
        }
        ScheduleKind::Hybrid { has_final_condition } => {
            let mut direct = Vec::with_capacity(n);
            let mut adjoint_inh = Vec::with_capacity(n);
            for w in 0..n {
                let len = partition.length(w);
                let deps: Vec<usize> = direct.last().copied().into_iter().collect();
                let d = dag.add(w, p.tau_i * len, &deps);
                direct.push(d);
                adjoint_inh.push(dag.add(w, p.tau_i_adj * len, &[d]));
            }
            let scatter = direct[n - 1];
            for w in 0..n {
                let reach = partition.boundaries()[w + 1] - partition.start();
                if w + 1 < n {
                    dag.add(w, p.tau_h_adj * reach, &[scatter, adjoint_inh[w + 1]]);
                } else if has_final_condition {
                    dag.add(w, p.tau_h_adj * reach, &[scatter]);
                }
            }
            Ok(ScheduleResult {
                makespan: dag.makespan(),
                serial: span * (p.tau_i + p.tau_i_adj),
                adjoint_inhomogeneous_finish: adjoint_inh.iter().map(|&t| dag.finish[t]).collect(),
            })
        }
    }
}

/// Checkpointed loop: a rough forward sweep over the first `checkpoints`
/// segments, then one loop per segment from last to first. Every segment
/// but the last carries an adjoint final condition. The serial reference
/// is checkpointed the same way.
pub fn simulate_checkpointed(
    kind: ScheduleKind,
    profile: &TimingProfile,
    t_final: f64,
    workers: usize,
    checkpoints: usize,
    hybrid_k: f64,
) -> Result<ScheduleResult> {
    check_workers(workers)?;
    let segments = checkpoints + 1;
    let seg_len = t_final / segments as f64;
    let bounds = |i: usize| (i as f64 * seg_len, (i + 1) as f64 * seg_len);
    let mut parallel = 0.0;
    let mut serial = 0.0;
    let mut finish = Vec::new();
    for i in (0..segments).rev() {
        let (t0, t1) = bounds(i);
        let (seg_kind, partition) = match kind {
            ScheduleKind::Hybrid { has_final_condition } => (
                ScheduleKind::Hybrid {
                    has_final_condition: has_final_condition || i + 1 < segments,
                },
                TimePartition::geometric_on(t0, t1, workers, hybrid_k)?,
            ),
            other => (other, TimePartition::equidistant_on(t0, t1, workers)?),
        };
        let r = simulate_schedule(seg_kind, profile, &partition)?;
        parallel += r.makespan;
        serial += r.serial;
        finish.extend(r.adjoint_inhomogeneous_finish);
    }

    let rough = checkpoints as f64 * seg_len;
    let (rough_parallel, rough_serial) = match kind {
        // The hybrid direct sweep is serial, so the rough sweep gains nothing.
        ScheduleKind::Hybrid { .. } => (rough * profile.tau_i, rough * profile.tau_i),
        ScheduleKind::Linear | ScheduleKind::Nonlinear { .. } => {
            let (iterations, tau_serial) = match kind {
                ScheduleKind::Nonlinear { iterations } => (iterations, profile.tau_d_serial),
                _ => (1, profile.tau_i),
            };
            let forward: Vec<usize> = (0..workers).collect();
            let mut par = 0.0;
            for i in 0..checkpoints {
                let (t0, t1) = bounds(i);
                let part = TimePartition::equidistant_on(t0, t1, workers)?;
                let mut dag = Dag::new(workers);
                for it in 0..iterations {
                    let after = if it == 0 { Vec::new() } else { dag.barrier() };
                    paraexp_chain(&mut dag, &part, &forward, profile.tau_i, profile.tau_h, &after);
                }
                par += dag.makespan();
            }
            (par, rough * tau_serial)
        }
    };
    Ok(ScheduleResult {
        makespan: parallel + rough_parallel,
        serial: serial + rough_serial,
        adjoint_inhomogeneous_finish: finish,
    })
}

/// The five timed kernels, each run over a span of simulated time.
pub trait Kernels {
    fn direct_inhomogeneous(&mut self, span: f64) -> Result<()>;
    fn direct_homogeneous(&mut self, span: f64) -> Result<()>;
    fn adjoint_inhomogeneous(&mut self, span: f64) -> Result<()>;
    fn adjoint_homogeneous(&mut self, span: f64) -> Result<()>;
    fn direct_serial(&mut self, span: f64) -> Result<()>;
}

/// Repetitions before a kernel that stays under the minimum pilot time is
/// declared untimeable.
const MAX_PILOT_REPEATS: u32 = 1 << 16;

/// Seconds per simulated time unit of one kernel. Fast kernels are
/// repeated until the batch lasts at least the minimum pilot time.
fn time_kernel(mut run: impl FnMut() -> Result<()>, span: f64) -> Result<f64> {
    let mut reps: u32 = 1;
    loop {
        let started = Instant::now();
        for _ in 0..reps {
            run()?;
        }
        let elapsed = started.elapsed();
        if elapsed >= MIN_PILOT {
            return Ok(elapsed.as_secs_f64() / (reps as f64 * span));
        }
        if reps >= MAX_PILOT_REPEATS {
            return Err(Error::PilotTooShort {
                elapsed,
                minimum: MIN_PILOT,
            });
        }
        let scale = (MIN_PILOT.as_secs_f64() / elapsed.as_secs_f64().max(1e-9)).ceil();
        reps = reps.saturating_mul((scale as u32).clamp(2, 64)).min(MAX_PILOT_REPEATS);
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Median over `repeats` pilots of each kernel run over `span`.
pub fn measure_profile(kernels: &mut dyn Kernels, span: f64, repeats: usize) -> Result<TimingProfile> {
    if !(span > 0.0) || repeats == 0 {
        return Err(Error::InvalidParameter(format!("pilot span {span} with {repeats} repeats")));
    }
    // Untimed pass so one-off setup such as the Leja point table stays out of the pilots.
    kernels.direct_inhomogeneous(span)?;
    kernels.direct_homogeneous(span)?;
    kernels.adjoint_inhomogeneous(span)?;
    kernels.adjoint_homogeneous(span)?;
    kernels.direct_serial(span)?;
    let mut samples = [(); 5].map(|_| Vec::with_capacity(repeats));
    for _ in 0..repeats {
        samples[0].push(time_kernel(|| kernels.direct_inhomogeneous(span), span)?);
        samples[1].push(time_kernel(|| kernels.direct_homogeneous(span), span)?);
        samples[2].push(time_kernel(|| kernels.adjoint_inhomogeneous(span), span)?);
        samples[3].push(time_kernel(|| kernels.adjoint_homogeneous(span), span)?);
        samples[4].push(time_kernel(|| kernels.direct_serial(span), span)?);
    }
    let [i, h, ia, ha, d] = samples.map(median);
    let profile = TimingProfile {
        tau_i: i,
        tau_h: h,
        tau_i_adj: ia,
        tau_h_adj: ha,
        tau_d_serial: d,
    };
    log::info!("measured profile {profile:?}");
    Ok(profile)
}

/// Pilot kernels of a testbed, linearized about a smooth reference state.
pub struct ProblemKernels<'a> {
    problem: &'a Problem,
    rk: RkConfig,
    leja: LejaConfig,
    /// `A + J(q_ref)`, the operator of an iterate's direct problems.
    augmented: SparseOperator,
    start: Vec<f64>,
    reference: Option<Trajectory>,
    zero: Trajectory,
}

impl<'a> ProblemKernels<'a> {
    pub fn new(problem: &'a Problem, rk: &RkConfig, leja: &LejaConfig) -> Result<Self> {
        let start = problem.sample_field(|x, y| x.sin() * y.sin() + 0.3 * (2.0 * x).cos());
        let augmented = if problem.is_linear() {
            problem.linear_part().clone()
        } else {
            problem.jacobian(&start)
        };
        let zero = Trajectory::constant(&vec![0.0; problem.dim()], 0.0, problem.spec().final_time);
        Ok(ProblemKernels {
            problem,
            rk: rk.clone(),
            leja: leja.clone(),
            augmented,
            start,
            reference: None,
            zero,
        })
    }

    fn reference(&mut self, span: f64) -> Result<&Trajectory> {
        let stale = self.reference.as_ref().map_or(true, |r| r.t_end() != span);
        if stale {
            let p = self.problem;
            self.reference = Some(rk45_integrate(|t, y, dy| p.rhs(t, y, dy), &self.start, 0.0, span, &self.rk)?);
        }
        Ok(self.reference.as_ref().unwrap())
    }
}

impl Kernels for ProblemKernels<'_> {
    fn direct_inhomogeneous(&mut self, span: f64) -> Result<()> {
        let a = &self.augmented;
        let p = self.problem;
        let aq = a.apply_vec(&self.start);
        let mut f = vec![0.0; p.dim()];
        rk45_integrate(
            |t, y, dy| {
                a.apply(y, dy);
                p.forcing(t, &mut f);
                for i in 0..dy.len() {
                    dy[i] += f[i] + aq[i];
                }
            },
            &vec![0.0; p.dim()],
            0.0,
            span,
            &self.rk,
        )?;
        Ok(())
    }

    fn direct_homogeneous(&mut self, span: f64) -> Result<()> {
        propagate_homogeneous(&self.augmented, &self.start, 0.0, span, &self.leja, &[], OutputGrid::Adaptive)?;
        Ok(())
    }

    fn adjoint_inhomogeneous(&mut self, span: f64) -> Result<()> {
        let rk = self.rk.clone();
        let p = self.problem;
        let zero = self.zero.clone();
        let reference = self.reference(span)?;
        let source = TrackingSource::new(&zero);
        serial_adjoint(p, &source, reference, 0.0, span, &vec![0.0; p.dim()], &rk)?;
        Ok(())
    }

    fn adjoint_homogeneous(&mut self, span: f64) -> Result<()> {
        let leja = self.leja.clone();
        let p = self.problem;
        let v = self.start.clone();
        let reference = self.reference(span)?;
        let op = AdjointOperator::new(p, reference);
        let reflected = Reparametrized::reflected(&op as &dyn OperatorFamily, span);
        propagate_homogeneous(&reflected, &v, 0.0, span, &leja, &[], OutputGrid::Adaptive)?;
        Ok(())
    }

    fn direct_serial(&mut self, span: f64) -> Result<()> {
        let p = self.problem;
        rk45_integrate(|t, y, dy| p.rhs(t, y, dy), &self.start, 0.0, span, &self.rk)?;
        Ok(())
    }
}

/// Sleeps for a fixed duration per simulated time unit of each kernel.
#[derive(Clone, Debug)]
pub struct SyntheticKernels {
    pub per_unit: [Duration; 5],
}

impl Kernels for SyntheticKernels {
    fn direct_inhomogeneous(&mut self, span: f64) -> Result<()> {
        std::thread::sleep(self.per_unit[0].mul_f64(span));
        Ok(())
    }

    fn direct_homogeneous(&mut self, span: f64) -> Result<()> {
        std::thread::sleep(self.per_unit[1].mul_f64(span));
        Ok(())
    }

    fn adjoint_inhomogeneous(&mut self, span: f64) -> Result<()> {
        std::thread::sleep(self.per_unit[2].mul_f64(span));
        Ok(())
    }

    fn adjoint_homogeneous(&mut self, span: f64) -> Result<()> {
        std::thread::sleep(self.per_unit[3].mul_f64(span));
        Ok(())
    }

    fn direct_serial(&mut self, span: f64) -> Result<()> {
        std::thread::sleep(self.per_unit[4].mul_f64(span));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile() -> TimingProfile {
        TimingProfile {
            tau_i: 4.0,
            tau_h: 1.0,
            tau_i_adj: 4.0,
            tau_h_adj: 1.0,
            tau_d_serial: 4.0,
        }
    }

    #[test]
    fn linear_prediction_arithmetic() {
        let p = profile();
        assert!((predict_linear(&p, 1).unwrap().speedup - 1.0).abs() < 1e-15);
        let s = predict_linear(&p, 4).unwrap();
        assert!((1.0 / s.speedup - 0.4375).abs() < 1e-15);
        assert_eq!(s.s_max, 4.0);
        let far = predict_linear(&p, 1_000_000).unwrap();
        assert!((far.speedup - 4.0).abs() / 4.0 < 1e-3);
    }

    #[test]
    fn nonlinear_minimum_workers() {
        let p = profile();
        // One iteration and a serial direct costing tau_I: any N > 1 helps.
        assert_eq!(minimum_workers(&p, 1), Some(2));
        let s2 = predict_nonlinear(&p, 2, 4).unwrap();
        let s8 = predict_nonlinear(&p, 8, 4).unwrap();
        assert!(s2.speedup < 1.0 && s8.speedup > 1.0);
        let n_min = s2.n_min.unwrap();
        assert!(predict_nonlinear(&p, n_min, 4).unwrap().speedup > 1.0);
        assert!(predict_nonlinear(&p, n_min - 1, 4).unwrap().speedup <= 1.0);
        let caps: Vec<f64> = (1..6).map(|k| predict_nonlinear(&p, 4, k).unwrap().s_max).collect();
        assert!(caps.windows(2).all(|w| w[1] < w[0]));
        let slow = TimingProfile { tau_h: 3.0, ..p };
        assert_eq!(minimum_workers(&slow, 4), None);
    }

    #[test]
    fn hybrid_single_worker_without_final_condition_is_serial() {
        let part = TimePartition::geometric(1.0, 1, 2.11).unwrap();
        let s = predict_hybrid(&profile(), &part, false).unwrap();
        assert!((s.speedup - 1.0).abs() < 1e-15);
    }

    #[test]
    fn schedules_match_closed_forms() {
        let p = TimingProfile {
            tau_i: 3.0,
            tau_h: 0.7,
            tau_i_adj: 5.0,
            tau_h_adj: 1.1,
            tau_d_serial: 2.5,
        };
        for n in [1, 2, 3, 5, 8] {
            let eq = TimePartition::equidistant(2.0, n).unwrap();
            let lin = simulate_schedule(ScheduleKind::Linear, &p, &eq).unwrap();
            assert!((lin.speedup() / predict_linear(&p, n).unwrap().speedup - 1.0).abs() < 1e-12);
            let nl = simulate_schedule(ScheduleKind::Nonlinear { iterations: 3 }, &p, &eq).unwrap();
            assert!((nl.speedup() / predict_nonlinear(&p, n, 3).unwrap().speedup - 1.0).abs() < 1e-12);
            let geo = TimePartition::geometric(2.0, n, p.hybrid_k()).unwrap();
            for fc in [false, true] {
                let hy = simulate_schedule(ScheduleKind::Hybrid { has_final_condition: fc }, &p, &geo).unwrap();
                let pred = predict_hybrid(&p, &geo, fc).unwrap().speedup;
                assert!((hy.speedup() / pred - 1.0).abs() < 1e-12, "n={n} fc={fc}");
            }
        }
    }

    #[test]
    fn synthetic_kernels_recover_cost_ratios() {
        let ms = Duration::from_millis;
        let mut k = SyntheticKernels {
            per_unit: [ms(40), ms(10), ms(80), ms(20), ms(40)],
        };
        let prof = measure_profile(&mut k, 0.5, 1).unwrap();
        assert!((prof.tau_i / prof.tau_h - 4.0).abs() < 0.4);
        assert!((prof.hybrid_k() - 2.0).abs() < 0.2);
    }
}
