//! Semi-linear systems `q' = A q + N(q) + f(t)`.

use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::sparse::{OperatorFamily, SparseOperator};
use crate::timestepping::{History, Trajectory};

/// A semi-linear ODE split into a constant linear part and a nonlinear part.
pub trait Dynamics: Sync {
    fn dim(&self) -> usize;

    /// The constant linear operator `A`.
    fn linear_part(&self) -> &SparseOperator;

    /// `A^T`, kept alongside `A` because adjoint solves use it repeatedly.
    fn linear_part_transpose(&self) -> &SparseOperator;

    /// True when `N` vanishes identically.
    fn is_linear(&self) -> bool;

    /// `out = N(q)`
    fn nonlinear_part(&self, q: &[f64], out: &mut [f64]);

    /// `dN/dq` at `q`, assembled on a pattern that does not depend on `q`.
    fn nonlinear_jacobian(&self, q: &[f64]) -> SparseOperator;

    /// `out = f(t)`
    fn forcing(&self, t: f64, out: &mut [f64]);

    /// Time average of `dN/dq` along a trajectory, by the trapezoid rule on
    /// its nodes.
    fn average_nonlinear_jacobian(&self, traj: &Trajectory) -> Result<SparseOperator> {
        if traj.len() < 2 {
            return Err(Error::InvalidParameter(
                "Jacobian averaging needs at least two samples".into(),
            ));
        }
        let w = traj.trapezoid_weights();
        let span = traj.t_end() - traj.t_start();
        let mats: Vec<SparseOperator> = (0..traj.len())
            .map(|i| self.nonlinear_jacobian(traj.state(i)))
            .collect();
        let terms: Vec<(f64, &SparseOperator)> =
            w.iter().zip(&mats).map(|(wi, m)| (wi / span, m)).collect();
        SparseOperator::weighted_sum(&terms)
    }

    /// `out = A q + N(q) + f(t)`
    fn rhs(&self, t: f64, q: &[f64], out: &mut [f64]) {
        self.forcing(t, out);
        self.linear_part().apply_add(1.0, q, out);
        if !self.is_linear() {
            let mut n = vec![0.0; q.len()];
            self.nonlinear_part(q, &mut n);
            crate::vecops::add_assign(out, &n);
        }
    }

    /// Full Jacobian `A + dN/dq`.
    fn jacobian(&self, q: &[f64]) -> SparseOperator {
        if self.is_linear() {
            self.linear_part().clone()
        } else {
            self.linear_part()
                .add(&self.nonlinear_jacobian(q))
                .expect("Jacobian parts share dimensions")
        }
    }

    /// `out = (A + dN/dq(q))^T w`
    fn jacobian_transpose_apply(&self, q: &[f64], w: &[f64], out: &mut [f64]) {
        if self.is_linear() {
            self.linear_part_transpose().apply(w, out);
        } else {
            self.jacobian(q).transpose_apply(w, out);
        }
    }
}

/// Linear system `q' = A q + g(t)` with a user supplied forcing.
pub struct LinearDynamics<F> {
    a: SparseOperator,
    at: SparseOperator,
    forcing: F,
}

impl<F: Fn(f64, &mut [f64]) + Sync> LinearDynamics<F> {
    pub fn new(a: SparseOperator, forcing: F) -> Self {
        let at = a.transpose();
        LinearDynamics { a, at, forcing }
    }
}

impl<F: Fn(f64, &mut [f64]) + Sync> Dynamics for LinearDynamics<F> {
    fn dim(&self) -> usize {
        self.a.rows()
    }

    fn linear_part(&self) -> &SparseOperator {
        &self.a
    }

    fn linear_part_transpose(&self) -> &SparseOperator {
        &self.at
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn nonlinear_part(&self, _q: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn nonlinear_jacobian(&self, _q: &[f64]) -> SparseOperator {
        SparseOperator::zeros(self.a.rows(), self.a.cols())
    }

    fn forcing(&self, t: f64, out: &mut [f64]) {
        (self.forcing)(t, out)
    }
}

/// Source term of an adjoint equation, given the time and the direct state.
pub trait AdjointSource: Sync {
    fn eval(&self, t: f64, q: &[f64], out: &mut [f64]);
}

/// `(A + dN/dq(q(t)))^T` along a stored direct solution, in physical time.
pub struct AdjointOperator<'a, D: ?Sized, H: ?Sized> {
    dynamics: &'a D,
    direct: &'a H,
}

impl<'a, D: Dynamics + ?Sized, H: History + ?Sized> AdjointOperator<'a, D, H> {
    pub fn new(dynamics: &'a D, direct: &'a H) -> Self {
        AdjointOperator { dynamics, direct }
    }

    fn state(&self, t: f64) -> Vec<f64> {
        let mut q = vec![0.0; self.direct.dim()];
        self.direct.eval_into(t, &mut q);
        q
    }
}

impl<D: Dynamics + ?Sized, H: History + ?Sized> OperatorFamily for AdjointOperator<'_, D, H> {
    fn dim(&self) -> usize {
        self.dynamics.dim()
    }

    fn apply_at(&self, t: f64, x: &[f64], y: &mut [f64]) {
        if self.dynamics.is_linear() {
            self.dynamics.linear_part_transpose().apply(x, y);
        } else {
            self.dynamics.jacobian_transpose_apply(&self.state(t), x, y);
        }
    }

    fn freeze(&self, t: f64) -> Cow<'_, SparseOperator> {
        if self.dynamics.is_linear() {
            Cow::Borrowed(self.dynamics.linear_part_transpose())
        } else {
            Cow::Owned(self.dynamics.jacobian(&self.state(t)).transpose())
        }
    }

    fn is_constant(&self) -> bool {
        self.dynamics.is_linear()
    }
}
