//! Homogeneous linear propagation `y' = L(s) y` with exponential steps.

use super::leja::{relpm_propagate, LejaConfig};
use super::trajectory::Trajectory;
use crate::error::{Error, Result};
use crate::sparse::OperatorFamily;
use crate::vecops;

/// Where the homogeneous solver places its output nodes.
#[derive(Clone, Copy, Debug)]
pub enum OutputGrid<'a> {
    /// Step-doubling control of the Hermite interpolation error.
    Adaptive,
    /// Exactly the given increasing nodes, which must span the interval.
    At(&'a [f64]),
}

/// Propagates `v` from `t0` to `t1` and returns the sampled trajectory.
///
/// Time-dependent operators are frozen at step midpoints. `breakpoints`
/// are interior times the adaptive grid must land on.
pub fn propagate_homogeneous(
    op: &dyn OperatorFamily,
    v: &[f64],
    t0: f64,
    t1: f64,
    cfg: &LejaConfig,
    breakpoints: &[f64],
    grid: OutputGrid<'_>,
) -> Result<Trajectory> {
    crate::error::check_dim(op.dim(), v.len())?;
    if !(t1 >= t0) {
        return Err(Error::InvalidParameter(format!("propagation span [{t0}, {t1}]")));
    }
    let n = v.len();
    let mut dy = vec![0.0; n];
    op.apply_at(t0, v, &mut dy);
    let mut traj = Trajectory::new(n);
    traj.push(t0, v, &dy);
    if t1 == t0 {
        return Ok(traj);
    }
    if vecops::norm_inf(v) == 0.0 {
        traj.push(t1, v, &dy);
        return Ok(traj);
    }
    match grid {
        OutputGrid::At(nodes) => {
            let tol = 1e-12 * (t1 - t0).abs().max(1.0);
            if nodes.len() < 2
                || (nodes[0] - t0).abs() > tol
                || (nodes[nodes.len() - 1] - t1).abs() > tol
            {
                return Err(Error::InvalidParameter(
                    "output grid must start and end at the propagation span".into(),
                ));
            }
            let mut y = v.to_vec();
            for w in nodes.windows(2) {
                let (a, b) = (w[0], w[1]);
                y = step(op, &y, a, b - a, cfg)?;
                let t = if b == nodes[nodes.len() - 1] { t1 } else { b };
                op.apply_at(t, &y, &mut dy);
                traj.push(t, &y, &dy);
            }
            Ok(traj)
        }
        OutputGrid::Adaptive => adaptive(op, v, t0, t1, cfg, breakpoints, traj),
    }
}

fn step(op: &dyn OperatorFamily, y: &[f64], t: f64, h: f64, cfg: &LejaConfig) -> Result<Vec<f64>> {
    let frozen = op.freeze(t + 0.5 * h);
    relpm_propagate(&frozen, y, h, cfg)
}

fn adaptive(
    op: &dyn OperatorFamily,
    v: &[f64],
    t0: f64,
    t1: f64,
    cfg: &LejaConfig,
    breakpoints: &[f64],
    mut traj: Trajectory,
) -> Result<Trajectory> {
    let n = v.len();
    let span = t1 - t0;
    let tiny = 1e-12 * span.abs().max(t0.abs()).max(t1.abs());
    let scale = vecops::norm_inf(v);
    let constant = op.is_constant();
    let mut stops: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&b| b > t0 + tiny && b < t1 - tiny)
        .collect();
    stops.sort_by(|a, b| a.total_cmp(b));
    stops.push(t1);
    let mut stop_idx = 0;

    let mut t = t0;
    let mut y = v.to_vec();
    let mut dy = vec![0.0; n];
    op.apply_at(t0, &y, &mut dy);
    let mut d_half = vec![0.0; n];
    let mut d_full = vec![0.0; n];
    let mut h = 0.25 * span;

    while t < t1 {
        let target = stops[stop_idx];
        let landing = h >= target - t - tiny;
        let hh = if landing { target - t } else { h };

        let (y_half, y_full, freeze_err) = if constant {
            let a = op.freeze(t);
            let yh = relpm_propagate(&a, &y, 0.5 * hh, cfg)?;
            let yf = relpm_propagate(&a, &yh, 0.5 * hh, cfg)?;
            (yh, yf, 0.0)
        } else {
            let one = step(op, &y, t, hh, cfg)?;
            let yh = step(op, &y, t, 0.5 * hh, cfg)?;
            let yf = step(op, &yh, t + 0.5 * hh, 0.5 * hh, cfg)?;
            let e = vecops::dist_inf(&one, &yf) / 3.0;
            (yh, yf, e)
        };
        let t_new = if landing { target } else { t + hh };
        op.apply_at(t + 0.5 * hh, &y_half, &mut d_half);
        op.apply_at(t_new, &y_full, &mut d_full);

        // Hermite midpoint prediction from the end data only.
        let mut interp_err = 0.0f64;
        for i in 0..n {
            let pred = 0.5 * (y[i] + y_full[i]) + 0.125 * hh * (dy[i] - d_full[i]);
            interp_err = interp_err.max((pred - y_half[i]).abs());
        }
        if !vecops::is_finite(&y_full) {
            return Err(Error::NonFinite { t });
        }
        let bound = cfg.tol * scale;
        let err = interp_err.max(freeze_err) / bound;
        if err <= 1.0 {
            traj.push(t + 0.5 * hh, &y_half, &d_half);
            traj.push(t_new, &y_full, &d_full);
            t = t_new;
            y = y_full;
            std::mem::swap(&mut dy, &mut d_full);
            if landing {
                stop_idx += 1;
                if stop_idx == stops.len() {
                    break;
                }
            }
            if !landing {
                let expo = if constant { 0.25 } else { 1.0 / 3.0 };
                let grow = if err == 0.0 { 4.0 } else { (0.9 * err.powf(-expo)).clamp(0.2, 4.0) };
                h = (hh * grow).min(span);
            }
        } else {
            let expo = if constant { 0.25 } else { 1.0 / 3.0 };
            h = hh * (0.9 * err.powf(-expo)).max(0.2);
            if h < tiny {
                return Err(Error::StepUnderflow { t, h });
            }
        }
    }
    Ok(traj)
}
