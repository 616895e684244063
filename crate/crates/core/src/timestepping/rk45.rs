use serde::{Deserialize, Serialize};

use super::trajectory::Trajectory;
use crate::error::{Error, Result};

/// Step-size control settings for the Dormand-Prince 5(4) integrator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RkConfig {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub safety: f64,
}

impl Default for RkConfig {
    fn default() -> Self {
        RkConfig::with_rtol(1e-3)
    }
}

impl RkConfig {
    /// Absolute tolerance tied to the relative one, `atol = 1e-3 * rtol`.
    pub fn with_rtol(rtol: f64) -> Self {
        RkConfig {
            rtol,
            atol: 1e-3 * rtol,
            h_init: 1e-4,
            h_min: 1e-14,
            h_max: f64::MAX,
            safety: 0.9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.rtol > 0.0
            && self.atol >= 0.0
            && self.h_min > 0.0
            && self.h_min <= self.h_init
            && self.h_init <= self.h_max
            && self.safety > 0.0
            && self.safety <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("inconsistent RK settings {self:?}")))
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RkStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    /// Controller error norm of every accepted step.
    pub accepted_errors: Vec<f64>,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
// Difference between the fifth and embedded fourth order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

// Continuous extension of the same pair: `y(t + th) = y + h sum_j b_j(th) k_j`
// with `b_j(th) = sum_m P[j][m] th^(m+1)`.
const P: [[f64; 4]; 7] = [
    [1.0, -8048581381.0 / 2820520608.0, 8663915743.0 / 2820520608.0, -12715105075.0 / 11282082432.0],
    [0.0; 4],
    [0.0, 131558114200.0 / 32700410799.0, -68118460800.0 / 10900136933.0, 87487479700.0 / 32700410799.0],
    [0.0, -1754552775.0 / 470086768.0, 14199869525.0 / 1410260304.0, -10690763975.0 / 1880347072.0],
    [0.0, 127303824393.0 / 49829197408.0, -318862633887.0 / 49829197408.0, 701980252875.0 / 199316789632.0],
    [0.0, -282668133.0 / 205662961.0, 2019193451.0 / 616988883.0, -1453857185.0 / 822651844.0],
    [0.0, 40617522.0 / 29380423.0, -110615467.0 / 29380423.0, 69997945.0 / 29380423.0],
];

/// Weights of the continuous extension and of its derivative at mid-step.
fn midpoint_weights() -> ([f64; 7], [f64; 7]) {
    let mut value = [0.0; 7];
    let mut slope = [0.0; 7];
    for j in 0..7 {
        value[j] = P[j][0] * 0.5 + P[j][1] * 0.25 + P[j][2] * 0.125 + P[j][3] * 0.0625;
        slope[j] = P[j][0] + P[j][1] + P[j][2] * 0.75 + P[j][3] * 0.5;
    }
    (value, slope)
}

/// Integrates `y' = rhs(t, y)` from `t0` to `t1`, recording every accepted
/// node together with the mid-step value of the continuous extension, so
/// cubic Hermite interpolation on the half steps keeps pace with the
/// fifth-order nodes.
pub fn rk45_integrate<F>(rhs: F, y0: &[f64], t0: f64, t1: f64, cfg: &RkConfig) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    rk45_solve(rhs, y0, t0, t1, cfg).map(|(tr, _)| tr)
}

pub fn rk45_solve<F>(
    mut rhs: F,
    y0: &[f64],
    t0: f64,
    t1: f64,
    cfg: &RkConfig,
) -> Result<(Trajectory, RkStats)>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    cfg.validate()?;
    if !(t1 >= t0) {
        return Err(Error::InvalidParameter(format!("integration span [{t0}, {t1}]")));
    }
    let n = y0.len();
    let mut stats = RkStats::default();
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut ymid = vec![0.0; n];
    let mut dmid = vec![0.0; n];
    let (mid_value, mid_slope) = midpoint_weights();

    rhs(t0, &y, &mut k[0]);
    stats.rhs_evals += 1;
    let mut traj = Trajectory::new(n);
    traj.push(t0, &y, &k[0]);
    if t1 == t0 {
        return Ok((traj, stats));
    }

    let span = t1 - t0;
    let tiny = 1e-13 * span.abs().max(t0.abs()).max(t1.abs());
    let mut t = t0;
    let mut h = cfg.h_init.min(cfg.h_max).min(span);
    let mut last_rejected = false;

    loop {
        let remaining = t1 - t;
        let last = h >= remaining - tiny;
        if last {
            h = remaining;
        }

        let stage = |ytmp: &mut [f64], k: &[Vec<f64>], a: &[f64], y: &[f64]| {
            for i in 0..n {
                let mut s = 0.0;
                for (j, aj) in a.iter().enumerate() {
                    s += aj * k[j][i];
                }
                ytmp[i] = y[i] + h * s;
            }
        };
        for (si, a) in [&A2[..], &A3[..], &A4[..], &A5[..], &A6[..]].iter().enumerate() {
            stage(&mut ytmp, &k, a, &y);
            rhs(t + C[si + 1] * h, &ytmp, &mut k[si + 1]);
        }
        for i in 0..n {
            let mut s = 0.0;
            for (j, bj) in B.iter().enumerate() {
                s += bj * k[j][i];
            }
            ynew[i] = y[i] + h * s;
        }
        let t_new = if last { t1 } else { t + h };
        rhs(t_new, &ynew, &mut k[6]);
        stats.rhs_evals += 6;

        let mut acc = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for (j, ej) in E.iter().enumerate() {
                e += ej * k[j][i];
            }
            e *= h;
            let sc = cfg.atol + cfg.rtol * y[i].abs().max(ynew[i].abs());
            let r = e / sc;
            acc += r * r;
        }
        let err = if n == 0 { 0.0 } else { (acc / n as f64).sqrt() };
        if err <= 1.0 {
            stats.accepted += 1;
            stats.accepted_errors.push(err);
            for i in 0..n {
                let (mut v, mut d) = (0.0, 0.0);
                for j in 0..7 {
                    v += mid_value[j] * k[j][i];
                    d += mid_slope[j] * k[j][i];
                }
                ymid[i] = y[i] + h * v;
                dmid[i] = d;
            }
            traj.push(t + 0.5 * h, &ymid, &dmid);
            t = t_new;
            std::mem::swap(&mut y, &mut ynew);
            k.swap(0, 6);
            traj.push(t, &y, &k[0]);
            if last {
                return Ok((traj, stats));
            }
            let mut factor = if err == 0.0 {
                5.0
            } else {
                (cfg.safety * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if last_rejected {
                factor = factor.min(1.0);
            }
            last_rejected = false;
            h = (h * factor).min(cfg.h_max);
        } else {
            stats.rejected += 1;
            last_rejected = true;
            let factor = if err.is_finite() {
                (cfg.safety * err.powf(-0.2)).max(0.2)
            } else {
                0.2
            };
            h *= factor;
            if h < cfg.h_min {
                return Err(Error::StepUnderflow { t, h });
            }
        }
    }
}
