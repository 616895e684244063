//! Periodic finite-difference testbeds on `[0, 2pi]^2`.
//!
//! Grid point `(i, j)` sits at `(i hx, j hy)` and is stored at flat index
//! `i + nx j`. Burgers states stack the `U` field before the `V` field.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dynamics::Dynamics;
use crate::error::{check_dim, Error, Result};
use crate::sparse::{CsrBuilder, SparseOperator};
use crate::timestepping::Trajectory;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GridDims", into = "GridDims")]
pub struct Grid2D {
    nx: usize,
    ny: usize,
}

#[derive(Serialize, Deserialize)]
struct GridDims {
    nx: usize,
    ny: usize,
}

impl TryFrom<GridDims> for Grid2D {
    type Error = Error;
    fn try_from(d: GridDims) -> Result<Self> {
        Grid2D::new(d.nx, d.ny)
    }
}

impl From<Grid2D> for GridDims {
    fn from(g: Grid2D) -> Self {
        GridDims { nx: g.nx, ny: g.ny }
    }
}

impl Grid2D {
    /// Central differences on a periodic grid need at least three points per
    /// direction.
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::InvalidGrid { nx, ny });
        }
        Ok(Grid2D { nx, ny })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn points(&self) -> usize {
        self.nx * self.ny
    }

    pub fn hx(&self) -> f64 {
        2.0 * PI / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        2.0 * PI / self.ny as f64
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    pub fn position(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.hx(), j as f64 * self.hy())
    }

    /// Samples `f(x, y)` at every grid point.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.points());
        for j in 0..self.ny {
            for i in 0..self.nx {
                let (x, y) = self.position(i, j);
                out.push(f(x, y));
            }
        }
        out
    }

    /// Flat indices of the east, west, north and south neighbours of `(i, j)`.
    fn neighbours(&self, i: usize, j: usize) -> [usize; 4] {
        let (nx, ny) = (self.nx, self.ny);
        [
            self.index((i + 1) % nx, j),
            self.index((i + nx - 1) % nx, j),
            self.index(i, (j + 1) % ny),
            self.index(i, (j + ny - 1) % ny),
        ]
    }

    /// Central first derivatives of one field, `(d/dx u, d/dy u)`.
    pub fn gradient(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (ix, iy) = (0.5 / self.hx(), 0.5 / self.hy());
        let mut dx = vec![0.0; self.points()];
        let mut dy = vec![0.0; self.points()];
        for j in 0..self.ny {
            for i in 0..self.nx {
                let k = self.index(i, j);
                let [e, w, n, s] = self.neighbours(i, j);
                dx[k] = (u[e] - u[w]) * ix;
                dy[k] = (u[n] - u[s]) * iy;
            }
        }
        (dx, dy)
    }

    /// Five-point Laplacian of one field, accumulated as `out += d * lap(u)`.
    fn add_laplacian(&self, d: f64, u: &[f64], out: &mut [f64]) {
        let (cx, cy) = (d / (self.hx() * self.hx()), d / (self.hy() * self.hy()));
        for j in 0..self.ny {
            for i in 0..self.nx {
                let k = self.index(i, j);
                let [e, w, n, s] = self.neighbours(i, j);
                out[k] += cx * (u[e] - 2.0 * u[k] + u[w]) + cy * (u[n] - 2.0 * u[k] + u[s]);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    AdvectionDiffusion,
    Burgers,
}

impl ProblemKind {
    /// Number of scalar fields per grid point.
    pub fn fields(self) -> usize {
        match self {
            ProblemKind::AdvectionDiffusion => 1,
            ProblemKind::Burgers => 2,
        }
    }
}

fn one() -> f64 {
    1.0
}

/// Physical parameters of a forced testbed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    /// Advection speed `a` in both directions (advection-diffusion only).
    #[serde(default = "one")]
    pub advection: f64,
    /// Diffusion coefficient `D`.
    pub diffusion: f64,
    #[serde(default = "one")]
    pub omega: f64,
    pub final_time: f64,
    /// Spatial forcing amplitude, one value per state component.
    #[serde(default)]
    pub f_spatial: Vec<f64>,
}

impl ProblemSpec {
    pub fn validate(&self, grid: &Grid2D) -> Result<()> {
        let n = self.kind.fields() * grid.points();
        check_dim(n, self.f_spatial.len())?;
        if !(self.diffusion > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "diffusion must be positive, got {}",
                self.diffusion
            )));
        }
        if !(self.final_time > 0.0) || !self.omega.is_finite() || !self.advection.is_finite() {
            return Err(Error::InvalidParameter("final_time, omega and advection must be finite, final_time positive".into()));
        }
        Ok(())
    }
}

/// `A = -a d/dx - a d/dy + D (d2/dx2 + d2/dy2)` with periodic central
/// differences.
pub fn build_advdiff_operator(grid: &Grid2D, a: f64, d: f64) -> SparseOperator {
    let (hx, hy) = (grid.hx(), grid.hy());
    let (cx, cy) = (d / (hx * hx), d / (hy * hy));
    let (ax, ay) = (a / (2.0 * hx), a / (2.0 * hy));
    let mut b = CsrBuilder::new(grid.points(), grid.points(), 5 * grid.points());
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let k = grid.index(i, j);
            let [e, w, n, s] = grid.neighbours(i, j);
            b.push_row(&mut [
                (k, -2.0 * cx - 2.0 * cy),
                (e, cx - ax),
                (w, cx + ax),
                (n, cy - ay),
                (s, cy + ay),
            ]);
        }
    }
    b.finish()
}

/// Block-diagonal `D lap` acting on `fields` stacked copies of the grid.
pub fn build_diffusion_blocks(grid: &Grid2D, d: f64, fields: usize) -> SparseOperator {
    let (cx, cy) = (d / (grid.hx() * grid.hx()), d / (grid.hy() * grid.hy()));
    let np = grid.points();
    let mut b = CsrBuilder::new(fields * np, fields * np, 5 * fields * np);
    for f in 0..fields {
        let o = f * np;
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                let k = grid.index(i, j);
                let [e, w, n, s] = grid.neighbours(i, j);
                b.push_row(&mut [
                    (o + k, -2.0 * cx - 2.0 * cy),
                    (o + e, cx),
                    (o + w, cx),
                    (o + n, cy),
                    (o + s, cy),
                ]);
            }
        }
    }
    b.finish()
}

/// `f_spatial sin(omega t)`
pub fn eval_forcing(spec: &ProblemSpec, t: f64) -> Vec<f64> {
    let s = (spec.omega * t).sin();
    spec.f_spatial.iter().map(|f| f * s).collect()
}

/// Advection part of Burgers, `out = (-U Ux - V Uy, -U Vx - V Vy)`.
pub fn burgers_advection(grid: &Grid2D, q: &[f64], out: &mut [f64]) {
    let np = grid.points();
    let (u, v) = q.split_at(np);
    let (ux, uy) = grid.gradient(u);
    let (vx, vy) = grid.gradient(v);
    for k in 0..np {
        out[k] = -u[k] * ux[k] - v[k] * uy[k];
        out[np + k] = -u[k] * vx[k] - v[k] * vy[k];
    }
}

/// Full Burgers right-hand side.
pub fn burgers_rhs(grid: &Grid2D, spec: &ProblemSpec, q: &[f64], t: f64) -> Result<Vec<f64>> {
    let np = grid.points();
    check_dim(2 * np, q.len())?;
    check_dim(2 * np, spec.f_spatial.len())?;
    let mut out = vec![0.0; 2 * np];
    burgers_advection(grid, q, &mut out);
    let (u, v) = q.split_at(np);
    let (ou, ov) = out.split_at_mut(np);
    grid.add_laplacian(spec.diffusion, u, ou);
    grid.add_laplacian(spec.diffusion, v, ov);
    let s = (spec.omega * t).sin();
    for (o, f) in out.iter_mut().zip(&spec.f_spatial) {
        *o += f * s;
    }
    Ok(out)
}

/// Linear diffusion part and nonlinear advection part of Burgers.
pub fn burgers_nonlinear_split(
    grid: &Grid2D,
    spec: &ProblemSpec,
) -> (SparseOperator, impl Fn(&[f64]) -> Vec<f64>) {
    let a = build_diffusion_blocks(grid, spec.diffusion, 2);
    let g = *grid;
    let n = move |q: &[f64]| {
        let mut out = vec![0.0; q.len()];
        burgers_advection(&g, q, &mut out);
        out
    };
    (a, n)
}

/// Jacobian of the Burgers advection terms at `q`, on a fixed pattern.
pub fn burgers_advection_jacobian(grid: &Grid2D, q: &[f64]) -> SparseOperator {
    let np = grid.points();
    let (u, v) = q.split_at(np);
    let (ux, uy) = grid.gradient(u);
    let (vx, vy) = grid.gradient(v);
    let (ix, iy) = (0.5 / grid.hx(), 0.5 / grid.hy());
    let mut b = CsrBuilder::new(2 * np, 2 * np, 12 * np);
    for field in 0..2 {
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                let k = grid.index(i, j);
                let [e, w, n, s] = grid.neighbours(i, j);
                let o = field * np;
                let (own_x, own_y, cross, cross_col) = if field == 0 {
                    (ux[k], uy[k], uy[k], np + k)
                } else {
                    (vx[k], vy[k], vx[k], k)
                };
                // d/dU of the U row carries U_x, d/dV of the V row carries V_y.
                let diag = if field == 0 { -own_x } else { -own_y };
                b.push_row(&mut [
                    (o + k, diag),
                    (o + e, -u[k] * ix),
                    (o + w, u[k] * ix),
                    (o + n, -v[k] * iy),
                    (o + s, v[k] * iy),
                    (cross_col, -cross),
                ]);
            }
        }
    }
    b.finish()
}

/// Full linearized Burgers operator at `q`.
pub fn burgers_jacobian(grid: &Grid2D, spec: &ProblemSpec, q: &[f64]) -> Result<SparseOperator> {
    check_dim(2 * grid.points(), q.len())?;
    build_diffusion_blocks(grid, spec.diffusion, 2).add(&burgers_advection_jacobian(grid, q))
}

/// Matrix-free `J(q)^T w` for Burgers, using that the central difference
/// operators are skew-adjoint on the periodic grid.
pub fn burgers_jacobian_transpose_apply(grid: &Grid2D, d: f64, q: &[f64], w: &[f64], out: &mut [f64]) {
    let np = grid.points();
    let (u, v) = q.split_at(np);
    let (wu, wv) = w.split_at(np);
    let (ux, uy) = grid.gradient(u);
    let (vx, vy) = grid.gradient(v);
    let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).collect::<Vec<f64>>();
    let (uwu_x, _) = grid.gradient(&prod(u, wu));
    let (_, vwu_y) = grid.gradient(&prod(v, wu));
    let (uwv_x, _) = grid.gradient(&prod(u, wv));
    let (_, vwv_y) = grid.gradient(&prod(v, wv));
    for k in 0..np {
        out[k] = uwu_x[k] + vwu_y[k] - ux[k] * wu[k] - vx[k] * wv[k];
        out[np + k] = uwv_x[k] + vwv_y[k] - uy[k] * wu[k] - vy[k] * wv[k];
    }
    let (ou, ov) = out.split_at_mut(np);
    grid.add_laplacian(d, wu, ou);
    grid.add_laplacian(d, wv, ov);
}

/// Time average of the Burgers advection Jacobian along `traj`.
///
/// The advection Jacobian is linear in the state, so the trapezoid average
/// of the Jacobians equals the Jacobian of the trapezoid-averaged state.
pub fn average_jacobian(traj: &Trajectory, grid: &Grid2D, spec: &ProblemSpec) -> Result<SparseOperator> {
    if traj.len() < 2 {
        return Err(Error::InvalidParameter(
            "Jacobian averaging needs at least two samples".into(),
        ));
    }
    let n = spec.kind.fields() * grid.points();
    check_dim(n, traj.dim())?;
    match spec.kind {
        ProblemKind::AdvectionDiffusion => Ok(SparseOperator::zeros(n, n)),
        ProblemKind::Burgers => {
            let w = traj.trapezoid_weights();
            let span = traj.t_end() - traj.t_start();
            let mut mean = vec![0.0; n];
            for (i, wi) in w.iter().enumerate() {
                crate::vecops::axpy(wi / span, traj.state(i), &mut mean);
            }
            Ok(burgers_advection_jacobian(grid, &mean))
        }
    }
}

/// An assembled testbed: grid, parameters and the constant linear operator.
#[derive(Clone, Debug)]
pub struct Problem {
    grid: Grid2D,
    spec: ProblemSpec,
    a: SparseOperator,
    at: SparseOperator,
}

impl Problem {
    pub fn new(grid: Grid2D, spec: ProblemSpec) -> Result<Self> {
        spec.validate(&grid)?;
        let a = match spec.kind {
            ProblemKind::AdvectionDiffusion => build_advdiff_operator(&grid, spec.advection, spec.diffusion),
            ProblemKind::Burgers => build_diffusion_blocks(&grid, spec.diffusion, 2),
        };
        let at = a.transpose();
        Ok(Problem { grid, spec, a, at })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    /// Same problem with a different forcing amplitude field.
    pub fn with_forcing(&self, f_spatial: &[f64]) -> Result<Problem> {
        check_dim(self.dim(), f_spatial.len())?;
        let mut p = self.clone();
        p.spec.f_spatial = f_spatial.to_vec();
        Ok(p)
    }

    /// Forcing amplitude field sampled from `f(x, y)` on every field.
    pub fn sample_field(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let one = self.grid.sample(f);
        one.repeat(self.spec.kind.fields())
    }
}

impl Dynamics for Problem {
    fn dim(&self) -> usize {
        self.spec.kind.fields() * self.grid.points()
    }

    fn linear_part(&self) -> &SparseOperator {
        &self.a
    }

    fn linear_part_transpose(&self) -> &SparseOperator {
        &self.at
    }

    fn is_linear(&self) -> bool {
        self.spec.kind == ProblemKind::AdvectionDiffusion
    }

    fn nonlinear_part(&self, q: &[f64], out: &mut [f64]) {
        match self.spec.kind {
            ProblemKind::AdvectionDiffusion => out.fill(0.0),
            ProblemKind::Burgers => burgers_advection(&self.grid, q, out),
        }
    }

    fn nonlinear_jacobian(&self, q: &[f64]) -> SparseOperator {
        match self.spec.kind {
            ProblemKind::AdvectionDiffusion => SparseOperator::zeros(self.dim(), self.dim()),
            ProblemKind::Burgers => burgers_advection_jacobian(&self.grid, q),
        }
    }

    fn forcing(&self, t: f64, out: &mut [f64]) {
        let s = (self.spec.omega * t).sin();
        for (o, f) in out.iter_mut().zip(&self.spec.f_spatial) {
            *o = f * s;
        }
    }

    fn average_nonlinear_jacobian(&self, traj: &Trajectory) -> Result<SparseOperator> {
        average_jacobian(traj, &self.grid, &self.spec)
    }

    fn jacobian_transpose_apply(&self, q: &[f64], w: &[f64], out: &mut [f64]) {
        match self.spec.kind {
            ProblemKind::AdvectionDiffusion => self.at.apply(w, out),
            ProblemKind::Burgers => {
                burgers_jacobian_transpose_apply(&self.grid, self.spec.diffusion, q, w, out)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecops::dot;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    }

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n).map(|_| lcg(&mut s)).collect()
    }

    fn burgers_spec(grid: &Grid2D, d: f64) -> ProblemSpec {
        ProblemSpec {
            kind: ProblemKind::Burgers,
            advection: 1.0,
            diffusion: d,
            omega: 1.0,
            final_time: 1.0,
            f_spatial: vec![0.0; 2 * grid.points()],
        }
    }

    #[test]
    fn small_grids_are_rejected() {
        assert!(matches!(Grid2D::new(2, 8), Err(Error::InvalidGrid { nx: 2, ny: 8 })));
        assert!(Grid2D::new(3, 3).is_ok());
    }

    #[test]
    fn advdiff_annihilates_constants() {
        let g = Grid2D::new(5, 4).unwrap();
        let a = build_advdiff_operator(&g, 1.3, 0.7);
        let y = a.apply_vec(&vec![2.5; g.points()]);
        assert!(y.iter().all(|v| v.abs() < 1e-12));
        assert_eq!(build_advdiff_operator(&g, 0.0, 0.0).values().iter().filter(|v| **v != 0.0).count(), 0);
    }

    #[test]
    fn advdiff_on_three_by_three_matches_hand_stencil() {
        let g = Grid2D::new(3, 3).unwrap();
        let h = 2.0 * PI / 3.0;
        let (a, d) = (1.0, 0.5);
        let m = build_advdiff_operator(&g, a, d).to_dense();
        let k = g.index(1, 1);
        assert!((m[k][k] + 4.0 * d / (h * h)).abs() < 1e-14);
        assert!((m[k][g.index(2, 1)] - (d / (h * h) - a / (2.0 * h))).abs() < 1e-14);
        assert!((m[k][g.index(0, 1)] - (d / (h * h) + a / (2.0 * h))).abs() < 1e-14);
        assert!((m[k][g.index(1, 2)] - (d / (h * h) - a / (2.0 * h))).abs() < 1e-14);
    }

    #[test]
    fn advdiff_spectrum_bound_scales_with_diffusion() {
        let g = Grid2D::new(16, 16).unwrap();
        let lo1 = build_advdiff_operator(&g, 0.0, 1.0).gershgorin_interval().0;
        let lo10 = build_advdiff_operator(&g, 0.0, 10.0).gershgorin_interval().0;
        assert!((lo10 / lo1 - 10.0).abs() < 1e-12);
    }

    #[test]
    fn forcing_follows_harmonic() {
        let spec = ProblemSpec {
            kind: ProblemKind::AdvectionDiffusion,
            advection: 1.0,
            diffusion: 1.0,
            omega: 1.0,
            final_time: 1.0,
            f_spatial: vec![1.0, -2.0],
        };
        assert_eq!(eval_forcing(&spec, 0.0), vec![0.0, 0.0]);
        assert_eq!(eval_forcing(&spec, PI / 2.0), vec![1.0, -2.0]);
    }

    #[test]
    fn burgers_rhs_matches_stencil_loop() {
        let g = Grid2D::new(8, 8).unwrap();
        let mut spec = burgers_spec(&g, 0.3);
        spec.f_spatial = random(2 * g.points(), 7);
        let q = random(2 * g.points(), 3);
        let t = 0.4;
        let got = burgers_rhs(&g, &spec, &q, t).unwrap();
        let h = 2.0 * PI / 8.0;
        let at = |f: usize, i: isize, j: isize| {
            let (i, j) = (i.rem_euclid(8) as usize, j.rem_euclid(8) as usize);
            q[f * 64 + i + 8 * j]
        };
        for j in 0..8isize {
            for i in 0..8isize {
                let (u, v) = (at(0, i, j), at(1, i, j));
                for f in 0..2 {
                    let dx = (at(f, i + 1, j) - at(f, i - 1, j)) / (2.0 * h);
                    let dy = (at(f, i, j + 1) - at(f, i, j - 1)) / (2.0 * h);
                    let lap = (at(f, i + 1, j) + at(f, i - 1, j) + at(f, i, j + 1) + at(f, i, j - 1)
                        - 4.0 * at(f, i, j))
                        / (h * h);
                    let k = f * 64 + (i + 8 * j) as usize;
                    let expect = -u * dx - v * dy + 0.3 * lap + spec.f_spatial[k] * t.sin();
                    assert!((got[k] - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn burgers_constants_are_steady() {
        let g = Grid2D::new(6, 5).unwrap();
        let spec = burgers_spec(&g, 1.0);
        let mut q = vec![1.5; g.points()];
        q.extend(vec![-0.5; g.points()]);
        assert!(burgers_rhs(&g, &spec, &q, 0.3).unwrap().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn split_reproduces_rhs() {
        let g = Grid2D::new(7, 6).unwrap();
        let spec = burgers_spec(&g, 0.8);
        let (a, n) = burgers_nonlinear_split(&g, &spec);
        for seed in 0..100 {
            let q = random(2 * g.points(), seed);
            let mut lhs = a.apply_vec(&q);
            crate::vecops::add_assign(&mut lhs, &n(&q));
            let rhs = burgers_rhs(&g, &spec, &q, 0.0).unwrap();
            assert!(crate::vecops::dist_inf(&lhs, &rhs) < 1e-12);
        }
        assert!(n(&vec![0.0; 2 * g.points()]).iter().all(|v| *v == 0.0));
        let zero = burgers_spec(&g, 0.0);
        let (a0, _) = burgers_nonlinear_split(&g, &zero);
        assert!(a0.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn jacobian_matches_central_difference() {
        let g = Grid2D::new(8, 8).unwrap();
        let spec = burgers_spec(&g, 0.5);
        let q = random(2 * g.points(), 11);
        let dq = random(2 * g.points(), 12);
        let j = burgers_jacobian(&g, &spec, &q).unwrap();
        let eps = 1e-5;
        let plus: Vec<f64> = q.iter().zip(&dq).map(|(a, b)| a + eps * b).collect();
        let minus: Vec<f64> = q.iter().zip(&dq).map(|(a, b)| a - eps * b).collect();
        let fd: Vec<f64> = burgers_rhs(&g, &spec, &plus, 0.0)
            .unwrap()
            .iter()
            .zip(burgers_rhs(&g, &spec, &minus, 0.0).unwrap())
            .map(|(a, b)| (a - b) / (2.0 * eps))
            .collect();
        let jv = j.apply_vec(&dq);
        let rel = crate::vecops::dist2(&jv, &fd) / crate::vecops::norm2(&fd);
        assert!(rel < 1e-6, "{rel}");
    }

    #[test]
    fn jacobian_at_rest_is_diffusion() {
        let g = Grid2D::new(5, 5).unwrap();
        let spec = burgers_spec(&g, 1.0);
        let j = burgers_jacobian(&g, &spec, &vec![0.0; 50]).unwrap();
        assert_eq!(j.to_dense(), build_diffusion_blocks(&g, 1.0, 2).to_dense());
    }

    #[test]
    fn matrix_free_transpose_matches_assembled() {
        let g = Grid2D::new(6, 7).unwrap();
        let spec = burgers_spec(&g, 0.9);
        let q = random(2 * g.points(), 21);
        let w = random(2 * g.points(), 22);
        let x = random(2 * g.points(), 23);
        let j = burgers_jacobian(&g, &spec, &q).unwrap();
        let mut jt = vec![0.0; w.len()];
        j.transpose_apply(&w, &mut jt);
        let mut mf = vec![0.0; w.len()];
        burgers_jacobian_transpose_apply(&g, 0.9, &q, &w, &mut mf);
        assert!(crate::vecops::dist_inf(&jt, &mf) < 1e-12);
        let lhs = dot(&w, &j.apply_vec(&x));
        let rhs = dot(&jt, &x);
        assert!((lhs - rhs).abs() <= 1e-12 * crate::vecops::norm2(&w) * crate::vecops::norm2(&x));
    }

    #[test]
    fn average_jacobian_equals_entrywise_trapezoid() {
        let g = Grid2D::new(5, 4).unwrap();
        let spec = burgers_spec(&g, 1.0);
        let problem = Problem::new(g, spec.clone()).unwrap();
        let mut tr = Trajectory::new(40);
        let zero = vec![0.0; 40];
        for (k, &t) in [0.0, 0.1, 0.35, 0.6, 1.0].iter().enumerate() {
            tr.push(t, &random(40, 100 + k as u64), &zero);
        }
        let fast = average_jacobian(&tr, &g, &spec).unwrap();
        let generic = {
            let w = tr.trapezoid_weights();
            let mats: Vec<SparseOperator> =
                (0..tr.len()).map(|i| problem.nonlinear_jacobian(tr.state(i))).collect();
            let terms: Vec<(f64, &SparseOperator)> = w.iter().zip(&mats).map(|(w, m)| (*w, m)).collect();
            SparseOperator::weighted_sum(&terms).unwrap()
        };
        assert!(fast.same_pattern(&generic));
        for (a, b) in fast.values().iter().zip(generic.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        let single = Trajectory::constant(&random(40, 5), 0.0, 1.0);
        let avg = average_jacobian(&single, &g, &spec).unwrap();
        assert_eq!(avg, burgers_advection_jacobian(&g, single.state(0)));
        let mut short = Trajectory::new(40);
        short.push(0.0, &zero, &zero);
        assert!(average_jacobian(&short, &g, &spec).is_err());
    }

    #[test]
    fn spec_validation() {
        let g = Grid2D::new(4, 4).unwrap();
        let mut spec = burgers_spec(&g, 1.0);
        assert!(Problem::new(g, spec.clone()).is_ok());
        spec.diffusion = 0.0;
        assert!(Problem::new(g, spec.clone()).is_err());
        spec.diffusion = 1.0;
        spec.f_spatial.pop();
        assert!(Problem::new(g, spec).is_err());
    }
}
