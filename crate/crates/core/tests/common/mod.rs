#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use paradjoint::timestepping::rk45::rk45_integrate;
use paradjoint::{
    AdjointSource, Dynamics, Grid2D, History, Problem, ProblemKind, ProblemSpec, RkConfig, SparseOperator,
    TrackingSource, Trajectory,
};
use rand::Rng;

pub fn advdiff(n: usize, diffusion: f64, final_time: f64) -> Problem {
    let spec = ProblemSpec {
        kind: ProblemKind::AdvectionDiffusion,
        advection: 1.0,
        diffusion,
        omega: 1.0,
        final_time,
        f_spatial: vec![0.0; n * n],
    };
    Problem::new(Grid2D::new(n, n).unwrap(), spec).unwrap()
}

pub fn burgers(n: usize, diffusion: f64, final_time: f64) -> Problem {
    let spec = ProblemSpec {
        kind: ProblemKind::Burgers,
        advection: 1.0,
        diffusion,
        omega: 1.0,
        final_time,
        f_spatial: vec![0.0; 2 * n * n],
    };
    Problem::new(Grid2D::new(n, n).unwrap(), spec).unwrap()
}

/// `sin(x) sin(y)` on every field.
pub fn f_true(p: &Problem) -> Vec<f64> {
    p.sample_field(|x, y| x.sin() * y.sin())
}

pub fn rel_l2(a: &[f64], reference: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(reference).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = reference.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

/// `max_t |a(t) - b(t)|_inf / max_t |b(t)|_inf` over `samples` uniform times.
pub fn rel_linf(a: &dyn History, b: &dyn History, t0: f64, t1: f64, samples: usize) -> f64 {
    let n = b.dim();
    let (mut x, mut y) = (vec![0.0; n], vec![0.0; n]);
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for i in 0..=samples {
        let t = t0 + (t1 - t0) * i as f64 / samples as f64;
        a.eval_into(t, &mut x);
        b.eval_into(t, &mut y);
        for k in 0..n {
            num = num.max((x[k] - y[k]).abs());
            den = den.max(y[k].abs());
        }
    }
    num / den
}

pub fn to_dense(a: &SparseOperator) -> DMatrix<f64> {
    let d = a.to_dense();
    DMatrix::from_fn(a.rows(), a.cols(), |i, j| d[i][j])
}

/// `exp(dt A) v` through a dense exponential.
pub fn dense_expm_apply(a: &SparseOperator, v: &[f64], dt: f64) -> Vec<f64> {
    let m = to_dense(a) * dt;
    let e = m.exp();
    (e * DVector::from_column_slice(v)).as_slice().to_vec()
}

/// Random sparse matrix with spectrum in `[-100, 0]`: either upper
/// triangular with the spectrum on the diagonal, or a negated weighted graph
/// Laplacian.
pub fn random_stiff(rng: &mut impl Rng, n: usize, triangular: bool) -> SparseOperator {
    let mut trip = Vec::new();
    if triangular {
        for i in 0..n {
            trip.push((i, i, -100.0 * rng.gen::<f64>()));
            for _ in 0..2 {
                let j = rng.gen_range(i..n);
                if j > i {
                    trip.push((i, j, rng.gen_range(-3.0..3.0)));
                }
            }
        }
    } else {
        let mut edges = Vec::new();
        for i in 0..n {
            edges.push((i, (i + 1) % n));
            edges.push((i, rng.gen_range(0..n)));
        }
        let mut diag = vec![0.0; n];
        let mut offdiag = Vec::new();
        for (i, j) in edges {
            if i == j {
                continue;
            }
            let w = rng.gen::<f64>();
            diag[i] += w;
            diag[j] += w;
            offdiag.push((i, j, w));
            offdiag.push((j, i, w));
        }
        // Gershgorin puts the spectrum in [-2 max_deg, 0]; rescale into [-100, 0].
        let bound = 2.0 * diag.iter().cloned().fold(0.0, f64::max);
        let s = 100.0 * rng.gen_range(0.2..1.0) / bound;
        for (i, d) in diag.iter().enumerate() {
            trip.push((i, i, -s * d));
        }
        for (i, j, w) in offdiag {
            trip.push((i, j, s * w));
        }
    }
    SparseOperator::from_triplets(n, n, trip).unwrap()
}

/// Serial reference of the direct problem over `[0, T]`.
pub fn serial_direct(problem: &Problem, q0: &[f64], rtol: f64) -> Trajectory {
    let t = problem.spec().final_time;
    rk45_integrate(|t, y, dy| problem.rhs(t, y, dy), q0, 0.0, t, &RkConfig::with_rtol(rtol)).unwrap()
}

/// Serial reference of `-dq/dt = J(q(t))^T q + 2 (q(t) - truth(t))`,
/// `q(T) = 0`, integrated in reversed time.
pub fn serial_adjoint(problem: &Problem, direct: &dyn History, truth: &dyn History, rtol: f64) -> Trajectory {
    let t_final = problem.spec().final_time;
    let n = problem.dim();
    let source = TrackingSource::new(truth);
    let rhs = |s: f64, y: &[f64], dy: &mut [f64]| {
        let t = t_final - s;
        let mut q = vec![0.0; n];
        direct.eval_into(t, &mut q);
        problem.jacobian_transpose_apply(&q, y, dy);
        let mut src = vec![0.0; n];
        source.eval(t, &q, &mut src);
        for (d, s) in dy.iter_mut().zip(&src) {
            *d += s;
        }
    };
    let back = rk45_integrate(rhs, &vec![0.0; n], 0.0, t_final, &RkConfig::with_rtol(rtol)).unwrap();
    back.reflected(t_final, 0.0)
}
