//! Real Leja point interpolation of the exponential (ReLPM).

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseOperator;
use crate::vecops;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LejaConfig {
    /// Relative tolerance on the Newton correction, per substep.
    pub tol: f64,
    /// Highest interpolation degree tried before splitting the step.
    pub max_degree: usize,
    /// Number of Leja points available to the interpolant.
    pub n_leja: usize,
    /// Largest number of substeps before giving up.
    pub substep_limit: usize,
    /// Target width of the scaled spectral interval per substep.
    pub width_per_substep: f64,
}

impl Default for LejaConfig {
    fn default() -> Self {
        LejaConfig {
            tol: 1e-3,
            max_degree: 120,
            n_leja: 128,
            substep_limit: 1 << 16,
            width_per_substep: 64.0,
        }
    }
}

impl LejaConfig {
    pub fn with_tol(tol: f64) -> Self {
        LejaConfig {
            tol,
            ..LejaConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tol > 0.0
            && self.max_degree >= 1
            && self.n_leja > self.max_degree
            && self.substep_limit >= 1
            && self.width_per_substep > 0.0
        {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("inconsistent Leja settings {self:?}")))
        }
    }
}

const CACHED_LEJA: usize = 256;
const CANDIDATES: usize = 40_001;

fn compute_leja(n: usize) -> Vec<f64> {
    let mut pts = Vec::with_capacity(n);
    if n == 0 {
        return pts;
    }
    let cand: Vec<f64> = (0..CANDIDATES)
        .map(|i| -2.0 + 4.0 * i as f64 / (CANDIDATES - 1) as f64)
        .collect();
    let mut logprod = vec![0.0f64; CANDIDATES];
    let mut taken = vec![false; CANDIDATES];
    for step in 0..n {
        let idx = match step {
            0 => 0,
            1 => CANDIDATES - 1,
            _ => {
                let mut best = usize::MAX;
                let mut best_val = f64::NEG_INFINITY;
                for (i, &v) in logprod.iter().enumerate() {
                    if !taken[i] && v > best_val {
                        best_val = v;
                        best = i;
                    }
                }
                best
            }
        };
        taken[idx] = true;
        let xi = cand[idx];
        pts.push(xi);
        for (i, lp) in logprod.iter_mut().enumerate() {
            if !taken[i] {
                *lp += (cand[i] - xi).abs().ln();
            }
        }
    }
    pts
}

/// First `n` Leja points of `[-2, 2]`, starting at -2 and 2.
///
/// The sequence is nested, so shorter requests are prefixes of longer ones.
pub fn leja_points(n: usize) -> Vec<f64> {
    if n <= CACHED_LEJA {
        cached_leja()[..n].to_vec()
    } else {
        compute_leja(n)
    }
}

fn cached_leja() -> &'static [f64] {
    static CACHE: OnceLock<Vec<f64>> = OnceLock::new();
    CACHE.get_or_init(|| compute_leja(CACHED_LEJA))
}

/// Gershgorin bound `[lo, hi]` on the real parts of the spectrum of `a`.
pub fn spectral_interval(a: &SparseOperator) -> (f64, f64) {
    a.gershgorin_interval()
}

/// Divided differences of `phi(z) = (e^z - 1)/z` at `c + gamma * xi_k`,
/// taken with respect to the reference variable `xi`.
///
/// Uses `phi[z_0..z_m] = exp[0, z_0..z_m]` and evaluates the first column of
/// the exponential of the bidiagonal Opitz matrix by scaled Taylor steps.
pub fn phi_divided_differences(c: f64, gamma: f64, xi: &[f64]) -> Vec<f64> {
    assert!(gamma > 0.0, "gamma must be positive");
    let m = xi.len();
    let size = m + 1;
    let mut diag = Vec::with_capacity(size);
    diag.push(0.0);
    diag.extend(xi.iter().map(|x| c + gamma * x));
    let norm = diag.iter().fold(0.0f64, |a, d| a.max(d.abs())) + gamma;
    let steps = (norm / 0.5).ceil().max(1.0) as usize;
    let inv = 1.0 / steps as f64;

    let mut y = vec![0.0; size];
    y[0] = 1.0;
    let mut term = vec![0.0; size];
    let mut next = vec![0.0; size];
    for _ in 0..steps {
        term.copy_from_slice(&y);
        for k in 1..=128 {
            next[0] = diag[0] * term[0];
            for i in 1..size {
                next[i] = diag[i] * term[i] + gamma * term[i - 1];
            }
            let f = inv / k as f64;
            let mut tn = 0.0f64;
            let mut yn = 0.0f64;
            for i in 0..size {
                term[i] = next[i] * f;
                y[i] += term[i];
                tn = tn.max(term[i].abs());
                yn = yn.max(y[i].abs());
            }
            if tn <= 1e-18 * yn {
                break;
            }
        }
    }
    y[1..].iter().map(|v| v / gamma).collect()
}

type DdKey = (u64, u64, usize);

fn dd_cache() -> &'static Mutex<HashMap<DdKey, Arc<Vec<f64>>>> {
    static CACHE: OnceLock<Mutex<HashMap<DdKey, Arc<Vec<f64>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn cached_divided_differences(c: f64, gamma: f64, count: usize) -> Arc<Vec<f64>> {
    let key = (c.to_bits(), gamma.to_bits(), count);
    if let Some(v) = dd_cache().lock().unwrap().get(&key) {
        return v.clone();
    }
    let xi = &cached_leja()[..count];
    let dd = Arc::new(phi_divided_differences(c, gamma, xi));
    let mut cache = dd_cache().lock().unwrap();
    if cache.len() > 4096 {
        cache.clear();
    }
    cache.insert(key, dd.clone());
    dd
}

/// Rounds `x` outward on a grid of eight steps per octave.
fn round_outward(x: f64, up: bool) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let mag = x.abs().log2() * 8.0;
    let grow = (x > 0.0) == up;
    let q = if grow { mag.ceil() } else { mag.floor() };
    x.signum() * (q / 8.0).exp2()
}

/// Widened interval `[lo, hi]` with endpoints on a coarse logarithmic grid,
/// so nearby step sizes share divided differences.
fn quantized_interval(lo: f64, hi: f64) -> (f64, f64) {
    let span = hi - lo;
    let floor = 1e-3 * span;
    let lo = match lo {
        l if l.abs() >= floor => l,
        l if l < 0.0 => -floor,
        _ => 0.0,
    };
    let hi = match hi {
        h if h.abs() >= floor => h,
        h if h > 0.0 => floor,
        _ => 0.0,
    };
    (round_outward(lo, false), round_outward(hi, true))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RelpmStats {
    pub substeps: usize,
    pub matvecs: usize,
}

/// Approximates `exp(dt * A) v` with Leja interpolation of `phi`.
pub fn relpm_propagate(a: &SparseOperator, v: &[f64], dt: f64, cfg: &LejaConfig) -> Result<Vec<f64>> {
    relpm_propagate_with_stats(a, v, dt, cfg).map(|(y, _)| y)
}

pub fn relpm_propagate_with_stats(
    a: &SparseOperator,
    v: &[f64],
    dt: f64,
    cfg: &LejaConfig,
) -> Result<(Vec<f64>, RelpmStats)> {
    cfg.validate()?;
    crate::error::check_dim(a.cols(), v.len())?;
    if !(dt >= 0.0) {
        return Err(Error::InvalidParameter(format!("negative step {dt}")));
    }
    let mut stats = RelpmStats::default();
    if dt == 0.0 || vecops::norm_inf(v) == 0.0 {
        return Ok((v.to_vec(), stats));
    }
    let (lo, hi) = spectral_interval(a);
    if hi - lo <= 1e-14 * lo.abs().max(hi.abs()) {
        // Zero Gershgorin radius means A is a multiple of the identity.
        let mut y = v.to_vec();
        vecops::scale((dt * lo).exp(), &mut y);
        stats.substeps = 1;
        return Ok((y, stats));
    }
    let width = dt * (hi - lo);
    let mut substeps = ((width / cfg.width_per_substep).ceil() as usize).max(1);
    loop {
        if substeps > cfg.substep_limit {
            return Err(Error::PropagationFailed {
                limit: cfg.substep_limit,
            });
        }
        if let Some(y) = try_propagate(a, v, dt, substeps, lo, hi, cfg, &mut stats) {
            stats.substeps = substeps;
            return Ok((y, stats));
        }
        substeps *= 2;
    }
}

#[allow(clippy::too_many_arguments)]
fn try_propagate(
    a: &SparseOperator,
    v: &[f64],
    dt: f64,
    substeps: usize,
    lo: f64,
    hi: f64,
    cfg: &LejaConfig,
    stats: &mut RelpmStats,
) -> Option<Vec<f64>> {
    let h = dt / substeps as f64;
    let (zlo, zhi) = quantized_interval(h * lo, h * hi);
    let c = 0.5 * (zlo + zhi);
    let gamma = 0.25 * (zhi - zlo);
    let count = (cfg.max_degree + 1).min(CACHED_LEJA);
    let dd = cached_divided_differences(c, gamma, count);
    let xi = &cached_leja()[..count];

    let n = v.len();
    let mut y = v.to_vec();
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut p = vec![0.0; n];
    for _ in 0..substeps {
        let scale = vecops::norm2(&y);
        if scale == 0.0 {
            return Some(y);
        }
        a.apply(&y, &mut r);
        vecops::scale(h, &mut r);
        stats.matvecs += 1;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = dd[0] * ri;
        }
        let mut prev = f64::INFINITY;
        let mut converged = false;
        for k in 1..count {
            a.apply(&r, &mut w);
            stats.matvecs += 1;
            let shift = xi[k - 1];
            let mut rn = 0.0;
            for i in 0..n {
                let ri = (h * w[i] - c * r[i]) / gamma - shift * r[i];
                r[i] = ri;
                p[i] += dd[k] * ri;
                rn += ri * ri;
            }
            let est = dd[k].abs() * rn.sqrt();
            if !est.is_finite() {
                return None;
            }
            if est + prev <= cfg.tol * scale {
                converged = true;
                break;
            }
            prev = est;
        }
        if !converged {
            return None;
        }
        vecops::add_assign(&mut y, &p);
    }
    Some(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leja_sequence_starts_at_endpoints_and_is_distinct() {
        let p = leja_points(30);
        assert_eq!(p[0], -2.0);
        assert_eq!(p[1], 2.0);
        for i in 0..p.len() {
            assert!(p[i].abs() <= 2.0);
            for j in 0..i {
                assert!(p[i] != p[j]);
            }
        }
        assert_eq!(leja_points(10), p[..10].to_vec());
        assert!(leja_points(0).is_empty());
    }

    #[test]
    fn divided_differences_at_one_point_are_phi() {
        for &z in &[-3.0f64, -0.5, 0.2] {
            let dd = phi_divided_differences(z, 1.0, &[0.0]);
            let phi = (z.exp() - 1.0) / z;
            assert!((dd[0] - phi).abs() < 1e-14, "{} vs {}", dd[0], phi);
        }
    }

    #[test]
    fn divided_differences_match_recursive_table() {
        let (c, g) = (-1.7, 0.75);
        let xi = [-2.0, 2.0, 0.3];
        let phi = |x: f64| {
            let z: f64 = c + g * x;
            (z.exp() - 1.0) / z
        };
        let d01 = (phi(xi[1]) - phi(xi[0])) / (xi[1] - xi[0]);
        let d12 = (phi(xi[2]) - phi(xi[1])) / (xi[2] - xi[1]);
        let d012 = (d12 - d01) / (xi[2] - xi[0]);
        let dd = phi_divided_differences(c, g, &xi);
        assert!((dd[1] - d01).abs() < 1e-13, "{dd:?} {d01} {d012}");
        assert!((dd[2] - d012).abs() < 1e-12);
    }

    #[test]
    fn scalar_operator_uses_exact_exponential() {
        let a = SparseOperator::from_diagonal(&[-2.0, -2.0]);
        let y = relpm_propagate(&a, &[1.0, 3.0], 0.5, &LejaConfig::default()).unwrap();
        assert!((y[1] - 3.0 * (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn diagonal_operator_matches_exponential() {
        let d = [-50.0, -10.0, -1.0, 0.0];
        let a = SparseOperator::from_diagonal(&d);
        let cfg = LejaConfig::with_tol(1e-8);
        let y = relpm_propagate(&a, &[1.0; 4], 0.3, &cfg).unwrap();
        for (yi, di) in y.iter().zip(d) {
            assert!((yi - (0.3 * di).exp()).abs() < 1e-7, "{yi}");
        }
    }

    #[test]
    fn zero_step_and_zero_vector_are_identity() {
        let a = SparseOperator::from_diagonal(&[-1.0, -4.0]);
        let cfg = LejaConfig::default();
        assert_eq!(relpm_propagate(&a, &[1.0, 2.0], 0.0, &cfg).unwrap(), vec![1.0, 2.0]);
        assert_eq!(relpm_propagate(&a, &[0.0, 0.0], 1.0, &cfg).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn substep_limit_is_reported() {
        let a = SparseOperator::from_diagonal(&[-1e6, 0.0]);
        let cfg = LejaConfig {
            substep_limit: 2,
            ..LejaConfig::default()
        };
        assert!(matches!(
            relpm_propagate(&a, &[1.0, 1.0], 1.0, &cfg),
            Err(Error::PropagationFailed { limit: 2 })
        ));
    }

    #[test]
    fn quantization_widens() {
        for &(lo, hi) in &[(-3.7, 0.0), (-100.0, 2.5), (-1e-3, 1e-3), (-5.0, -1.0)] {
            let (a, b) = quantized_interval(lo, hi);
            assert!(a <= lo && b >= hi, "{lo},{hi} -> {a},{b}");
        }
    }
}
