//! Shared fixtures for the criterion benchmarks.

use paradjoint::{synthesize_truth, Grid2D, LoopConfig, PiecewiseSolution, Problem, ProblemKind, ProblemSpec};

/// Testbed on an `n x n` grid, forced by ones.
pub fn testbed(kind: ProblemKind, n: usize, diffusion: f64, final_time: f64) -> Problem {
    let grid = Grid2D::new(n, n).expect("valid grid");
    let spec = ProblemSpec {
        kind,
        advection: 1.0,
        diffusion,
        omega: 1.0,
        final_time,
        f_spatial: vec![1.0; kind.fields() * grid.points()],
    };
    Problem::new(grid, spec).expect("valid testbed")
}

/// A testbed and the trajectory it is asked to track, generated by a
/// `sin(x) sin(y)` forcing.
pub fn tracking_case(kind: ProblemKind, n: usize, diffusion: f64, final_time: f64) -> (Problem, PiecewiseSolution) {
    let problem = testbed(kind, n, diffusion, final_time);
    let f_true = problem.sample_field(|x, y| x.sin() * y.sin());
    let cfg = LoopConfig {
        algorithm: paradjoint::Algorithm::Serial,
        ..LoopConfig::default()
    };
    let truth = synthesize_truth(&problem, &f_true, &cfg).expect("truth solves");
    (problem, truth)
}
