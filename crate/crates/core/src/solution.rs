//! Time partitions and solutions stored piecewise per worker interval.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timestepping::{History, Trajectory};

/// Boundaries `T_0 < T_1 < ... < T_N` of the worker intervals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimePartition {
    boundaries: Vec<f64>,
}

/// The share of a parallel solve owned by one worker.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkerPlan {
    pub worker: usize,
    pub start: f64,
    pub end: f64,
    /// Homogeneous problems this worker solves in the direct sweep.
    pub direct_homogeneous: usize,
    /// Homogeneous problems this worker solves in the adjoint sweep.
    pub adjoint_homogeneous: usize,
}

impl TimePartition {
    pub fn from_boundaries(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.len() < 2 {
            return Err(Error::InvalidParameter("a partition needs at least one interval".into()));
        }
        if !boundaries.windows(2).all(|w| w[1] > w[0]) || !boundaries.iter().all(|b| b.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "partition boundaries must increase strictly: {boundaries:?}"
            )));
        }
        Ok(TimePartition { boundaries })
    }

    /// `N` intervals of equal length on `[0, t_final]`.
    pub fn equidistant(t_final: f64, n: usize) -> Result<Self> {
        Self::equidistant_on(0.0, t_final, n)
    }

    pub fn equidistant_on(t0: f64, t1: f64, n: usize) -> Result<Self> {
        if n == 0 || !(t1 > t0) {
            return Err(Error::InvalidParameter(format!(
                "equidistant partition of [{t0}, {t1}] into {n} intervals"
            )));
        }
        let mut b: Vec<f64> = (0..=n).map(|i| t0 + (t1 - t0) * i as f64 / n as f64).collect();
        b[n] = t1;
        Self::from_boundaries(b)
    }

    /// Geometric partition `T_n = T (1 - r^n) / (1 - r^N)` with
    /// `r = k / (k + 1)`, so that later intervals are shorter by `r`.
    pub fn geometric(t_final: f64, n: usize, k: f64) -> Result<Self> {
        Self::geometric_on(0.0, t_final, n, k)
    }

    pub fn geometric_on(t0: f64, t1: f64, n: usize, k: f64) -> Result<Self> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::InvalidParameter(format!("cost ratio k must be positive, got {k}")));
        }
        if n == 0 || !(t1 > t0) {
            return Err(Error::InvalidParameter(format!(
                "geometric partition of [{t0}, {t1}] into {n} intervals"
            )));
        }
        let r = k / (k + 1.0);
        let denom = 1.0 - r.powi(n as i32);
        let mut b: Vec<f64> = (0..=n)
            .map(|i| t0 + (t1 - t0) * (1.0 - r.powi(i as i32)) / denom)
            .collect();
        b[0] = t0;
        b[n] = t1;
        Self::from_boundaries(b)
    }

    pub fn workers(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn start(&self) -> f64 {
        self.boundaries[0]
    }

    pub fn end(&self) -> f64 {
        *self.boundaries.last().unwrap()
    }

    pub fn interval(&self, p: usize) -> (f64, f64) {
        (self.boundaries[p], self.boundaries[p + 1])
    }

    pub fn length(&self, p: usize) -> f64 {
        self.boundaries[p + 1] - self.boundaries[p]
    }

    /// Interval owning `t`; boundaries belong to the interval on their right,
    /// except the final time.
    pub fn locate(&self, t: f64) -> usize {
        let i = self.boundaries.partition_point(|&b| b <= t);
        i.saturating_sub(1).min(self.workers() - 1)
    }

    pub fn worker_plans(&self) -> Vec<WorkerPlan> {
        let n = self.workers();
        (0..n)
            .map(|p| WorkerPlan {
                worker: p,
                start: self.boundaries[p],
                end: self.boundaries[p + 1],
                direct_homogeneous: p,
                adjoint_homogeneous: n - 1 - p,
            })
            .collect()
    }
}

/// A solution made of one trajectory per partition interval.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseSolution {
    partition: TimePartition,
    pieces: Vec<Trajectory>,
}

impl PiecewiseSolution {
    pub fn new(partition: TimePartition, pieces: Vec<Trajectory>) -> Result<Self> {
        if pieces.len() != partition.workers() {
            return Err(Error::DimensionMismatch {
                expected: partition.workers(),
                found: pieces.len(),
            });
        }
        let dim = pieces[0].dim();
        for (p, piece) in pieces.iter().enumerate() {
            crate::error::check_dim(dim, piece.dim())?;
            let (a, b) = partition.interval(p);
            if piece.is_empty() || piece.t_start() != a || piece.t_end() != b {
                return Err(Error::InvalidParameter(format!(
                    "piece {p} does not span [{a}, {b}]"
                )));
            }
        }
        Ok(PiecewiseSolution { partition, pieces })
    }

    /// Single-interval solution wrapping one trajectory.
    pub fn single(traj: Trajectory) -> Result<Self> {
        let part = TimePartition::from_boundaries(vec![traj.t_start(), traj.t_end()])?;
        Self::new(part, vec![traj])
    }

    pub fn partition(&self) -> &TimePartition {
        &self.partition
    }

    pub fn pieces(&self) -> &[Trajectory] {
        &self.pieces
    }

    pub fn into_pieces(self) -> Vec<Trajectory> {
        self.pieces
    }

    pub fn piece(&self, p: usize) -> &Trajectory {
        &self.pieces[p]
    }

    pub fn dim(&self) -> usize {
        self.pieces[0].dim()
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        self.pieces[self.partition.locate(t)].eval_into(t, out)
    }

    pub fn initial_state(&self) -> &[f64] {
        self.pieces[0].first_state()
    }

    pub fn final_state(&self) -> &[f64] {
        self.pieces.last().unwrap().last_state()
    }

    pub fn node_count(&self) -> usize {
        self.pieces.iter().map(Trajectory::len).sum()
    }

    pub fn stored_values(&self) -> usize {
        self.pieces.iter().map(Trajectory::stored_values).sum()
    }

    /// Jump `|q_p(T_{p+1}) - q_{p+1}(T_{p+1})|_inf` at each interior boundary.
    pub fn continuity_gaps(&self) -> Vec<f64> {
        self.pieces
            .windows(2)
            .map(|w| crate::vecops::dist_inf(w[0].last_state(), w[1].first_state()))
            .collect()
    }
}

impl History for PiecewiseSolution {
    fn dim(&self) -> usize {
        PiecewiseSolution::dim(self)
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        PiecewiseSolution::eval_into(self, t, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equidistant_boundaries() {
        let p = TimePartition::equidistant(1.0, 4).unwrap();
        assert_eq!(p.boundaries(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(p.locate(0.25), 1);
        assert_eq!(p.locate(1.0), 3);
        assert_eq!(p.locate(0.0), 0);
        assert!(TimePartition::equidistant(1.0, 0).is_err());
    }

    #[test]
    fn worker_plans_count_homogeneous_problems() {
        let plans = TimePartition::equidistant(2.0, 3).unwrap().worker_plans();
        assert_eq!(plans.iter().map(|w| w.direct_homogeneous).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(plans.iter().map(|w| w.adjoint_homogeneous).collect::<Vec<_>>(), vec![2, 1, 0]);
    }

    #[test]
    fn geometric_lengths_shrink_by_ratio() {
        let k = 2.11;
        let p = TimePartition::geometric(1.0, 5, k).unwrap();
        let r = k / (k + 1.0);
        for i in 1..5 {
            assert!((p.length(i) / p.length(i - 1) - r).abs() < 1e-12);
        }
        assert_eq!(p.end(), 1.0);
        assert!(TimePartition::geometric(1.0, 3, 0.0).is_err());
    }

    #[test]
    fn piecewise_eval_uses_right_piece_at_boundaries() {
        let part = TimePartition::equidistant(2.0, 2).unwrap();
        let a = Trajectory::constant(&[1.0], 0.0, 1.0);
        let b = Trajectory::constant(&[2.0], 1.0, 2.0);
        let s = PiecewiseSolution::new(part, vec![a, b]).unwrap();
        assert_eq!(s.eval(1.0), vec![2.0]);
        assert_eq!(s.eval(0.5), vec![1.0]);
        assert_eq!(s.continuity_gaps(), vec![1.0]);
    }

    #[test]
    fn mismatched_pieces_are_rejected() {
        let part = TimePartition::equidistant(2.0, 2).unwrap();
        let a = Trajectory::constant(&[1.0], 0.0, 1.0);
        assert!(PiecewiseSolution::new(part.clone(), vec![a.clone()]).is_err());
        assert!(PiecewiseSolution::new(part, vec![a.clone(), a]).is_err());
    }
}
