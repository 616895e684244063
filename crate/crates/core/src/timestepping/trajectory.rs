use crate::error::{Error, Result};

/// Time history of a state vector on an increasing sequence of nodes.
///
/// When slopes are stored the trajectory is evaluated with cubic Hermite
/// interpolation, otherwise piecewise linearly.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    dim: usize,
    nodes: Vec<f64>,
    states: Vec<f64>,
    slopes: Option<Vec<f64>>,
}

/// Read access to a state history, implemented by single and piecewise
/// trajectories.
pub trait History: Sync {
    fn dim(&self) -> usize;
    fn eval_into(&self, t: f64, out: &mut [f64]);
}

impl Trajectory {
    /// Empty trajectory that stores slopes (Hermite interpolation).
    pub fn new(dim: usize) -> Self {
        Trajectory {
            dim,
            nodes: Vec::new(),
            states: Vec::new(),
            slopes: Some(Vec::new()),
        }
    }

    /// Empty trajectory without slopes (linear interpolation).
    pub fn piecewise_linear(dim: usize) -> Self {
        Trajectory {
            slopes: None,
            ..Trajectory::new(dim)
        }
    }

    /// Constant state on `[t0, t1]`.
    pub fn constant(state: &[f64], t0: f64, t1: f64) -> Self {
        let mut tr = Trajectory::new(state.len());
        let zero = vec![0.0; state.len()];
        tr.push(t0, state, &zero);
        if t1 > t0 {
            tr.push(t1, state, &zero);
        }
        tr
    }

    pub fn with_capacity(dim: usize, nodes: usize) -> Self {
        Trajectory {
            dim,
            nodes: Vec::with_capacity(nodes),
            states: Vec::with_capacity(nodes * dim),
            slopes: Some(Vec::with_capacity(nodes * dim)),
        }
    }

    pub fn push(&mut self, t: f64, state: &[f64], slope: &[f64]) {
        debug_assert_eq!(state.len(), self.dim);
        debug_assert!(self.nodes.last().is_none_or(|&l| t > l), "nodes must increase");
        self.nodes.push(t);
        self.states.extend_from_slice(state);
        match &mut self.slopes {
            Some(s) => s.extend_from_slice(slope),
            None => panic!("push with slope on a piecewise-linear trajectory"),
        }
    }

    pub fn push_linear(&mut self, t: f64, state: &[f64]) {
        debug_assert_eq!(state.len(), self.dim);
        debug_assert!(self.nodes.last().is_none_or(|&l| t > l), "nodes must increase");
        assert!(self.slopes.is_none(), "trajectory stores slopes");
        self.nodes.push(t);
        self.states.extend_from_slice(state);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn has_slopes(&self) -> bool {
        self.slopes.is_some()
    }

    pub fn t_start(&self) -> f64 {
        self.nodes[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.nodes.last().expect("empty trajectory")
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn slope(&self, i: usize) -> Option<&[f64]> {
        self.slopes
            .as_ref()
            .map(|s| &s[i * self.dim..(i + 1) * self.dim])
    }

    pub fn first_state(&self) -> &[f64] {
        self.state(0)
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    /// Number of stored floating point values, states and slopes together.
    pub fn stored_values(&self) -> usize {
        self.states.len() + self.slopes.as_ref().map_or(0, Vec::len)
    }

    /// Index `i` of the interval `[t_i, t_{i+1}]` containing `t` (clamped).
    fn locate(&self, t: f64) -> usize {
        let n = self.nodes.len();
        if n < 2 || t <= self.nodes[0] {
            return 0;
        }
        if t >= self.nodes[n - 1] {
            return n - 2;
        }
        self.nodes.partition_point(|&x| x <= t) - 1
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }

    /// Interpolated state at `t`, clamped to the stored span.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        assert!(!self.is_empty(), "eval on an empty trajectory");
        if self.len() == 1 {
            out.copy_from_slice(self.state(0));
            return;
        }
        let i = self.locate(t);
        self.eval_in_interval(i, t, out);
    }

    fn eval_in_interval(&self, i: usize, t: f64, out: &mut [f64]) {
        let (t0, t1) = (self.nodes[i], self.nodes[i + 1]);
        let h = t1 - t0;
        let s = ((t - t0) / h).clamp(0.0, 1.0);
        let (y0, y1) = (self.state(i), self.state(i + 1));
        if s == 0.0 {
            out.copy_from_slice(y0);
            return;
        }
        if s == 1.0 {
            out.copy_from_slice(y1);
            return;
        }
        match &self.slopes {
            Some(sl) => {
                let d0 = &sl[i * self.dim..(i + 1) * self.dim];
                let d1 = &sl[(i + 1) * self.dim..(i + 2) * self.dim];
                let s2 = s * s;
                let s3 = s2 * s;
                let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
                let h10 = (s3 - 2.0 * s2 + s) * h;
                let h01 = -2.0 * s3 + 3.0 * s2;
                let h11 = (s3 - s2) * h;
                for k in 0..self.dim {
                    out[k] = h00 * y0[k] + h10 * d0[k] + h01 * y1[k] + h11 * d1[k];
                }
            }
            None => {
                for k in 0..self.dim {
                    out[k] = (1.0 - s) * y0[k] + s * y1[k];
                }
            }
        }
    }

    /// Time derivative of the interpolant at `t`.
    pub fn slope_into(&self, t: f64, out: &mut [f64]) {
        assert!(self.len() >= 2, "slope needs at least two nodes");
        let i = self.locate(t);
        self.slope_in_interval(i, t, out);
    }

    fn slope_in_interval(&self, i: usize, t: f64, out: &mut [f64]) {
        let (t0, t1) = (self.nodes[i], self.nodes[i + 1]);
        let h = t1 - t0;
        let (y0, y1) = (self.state(i), self.state(i + 1));
        match &self.slopes {
            Some(sl) => {
                let s = ((t - t0) / h).clamp(0.0, 1.0);
                let d0 = &sl[i * self.dim..(i + 1) * self.dim];
                let d1 = &sl[(i + 1) * self.dim..(i + 2) * self.dim];
                if s == 0.0 {
                    out.copy_from_slice(d0);
                    return;
                }
                if s == 1.0 {
                    out.copy_from_slice(d1);
                    return;
                }
                let s2 = s * s;
                let g00 = (6.0 * s2 - 6.0 * s) / h;
                let g10 = 3.0 * s2 - 4.0 * s + 1.0;
                let g11 = 3.0 * s2 - 2.0 * s;
                for k in 0..self.dim {
                    out[k] = g00 * (y0[k] - y1[k]) + g10 * d0[k] + g11 * d1[k];
                }
            }
            None => {
                for k in 0..self.dim {
                    out[k] = (y1[k] - y0[k]) / h;
                }
            }
        }
    }

    /// Same data on nodes `origin + s`, with the end node pinned to `end`.
    pub fn shifted(mut self, origin: f64, end: f64) -> Self {
        for t in self.nodes.iter_mut() {
            *t += origin;
        }
        self.nodes[0] = origin;
        *self.nodes.last_mut().unwrap() = end;
        self
    }

    /// Maps local time `s` to `t = pivot - s`, reversing the node order.
    /// The resulting span is pinned to `[start, pivot]`.
    pub fn reflected(&self, pivot: f64, start: f64) -> Self {
        let n = self.len();
        let mut out = Trajectory {
            dim: self.dim,
            nodes: Vec::with_capacity(n),
            states: Vec::with_capacity(self.states.len()),
            slopes: self.slopes.as_ref().map(|s| Vec::with_capacity(s.len())),
        };
        for i in (0..n).rev() {
            out.nodes.push(pivot - self.nodes[i]);
            out.states.extend_from_slice(self.state(i));
            if let (Some(dst), Some(src)) = (&mut out.slopes, self.slope(i)) {
                dst.extend(src.iter().map(|v| -v));
            }
        }
        out.nodes[0] = start;
        out.nodes[n - 1] = pivot;
        out
    }

    /// Restriction to `[t0, t1]`, adding interpolated end nodes if needed.
    pub fn window(&self, t0: f64, t1: f64) -> Self {
        let mut out = Trajectory {
            dim: self.dim,
            nodes: Vec::new(),
            states: Vec::new(),
            slopes: self.slopes.as_ref().map(|_| Vec::new()),
        };
        let tol = 1e-12 * (t1 - t0).abs().max(1.0);
        let mut buf = vec![0.0; self.dim];
        let mut dbuf = vec![0.0; self.dim];
        let mut push_interp = |out: &mut Trajectory, t: f64| {
            self.eval_into(t, &mut buf);
            if self.has_slopes() {
                self.slope_into(t, &mut dbuf);
                out.push(t, &buf, &dbuf);
            } else {
                out.push_linear(t, &buf);
            }
        };
        let inside: Vec<usize> = (0..self.len())
            .filter(|&i| self.nodes[i] > t0 + tol && self.nodes[i] < t1 - tol)
            .collect();
        let first_exact = (0..self.len()).find(|&i| (self.nodes[i] - t0).abs() <= tol);
        let last_exact = (0..self.len()).find(|&i| (self.nodes[i] - t1).abs() <= tol);
        let copy = |out: &mut Trajectory, i: usize, t: f64| {
            out.nodes.push(t);
            out.states.extend_from_slice(self.state(i));
            if let (Some(dst), Some(src)) = (&mut out.slopes, self.slope(i)) {
                dst.extend_from_slice(src);
            }
        };
        match first_exact {
            Some(i) => copy(&mut out, i, t0),
            None => push_interp(&mut out, t0),
        }
        for i in inside {
            copy(&mut out, i, self.nodes[i]);
        }
        if t1 > t0 {
            match last_exact {
                Some(i) => copy(&mut out, i, t1),
                None => push_interp(&mut out, t1),
            }
        }
        out
    }

    /// Sum of several trajectories on the union of their nodes, plus a
    /// constant offset. Stored values are used where a part has the node,
    /// interpolation elsewhere. All parts must cover the same span.
    pub fn sum_on_union(parts: &[&Trajectory], offset: Option<&[f64]>) -> Result<Trajectory> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidParameter("sum of zero trajectories".into()))?;
        let dim = first.dim;
        if let Some(o) = offset {
            crate::error::check_dim(dim, o.len())?;
        }
        for p in parts {
            crate::error::check_dim(dim, p.dim)?;
            if !p.has_slopes() {
                return Err(Error::InvalidParameter(
                    "union sums require trajectories with slopes".into(),
                ));
            }
        }
        let (t0, t1) = (first.t_start(), first.t_end());
        let tol = 1e-12 * (t1 - t0).abs().max(1.0);

        let mut union: Vec<f64> = parts.iter().flat_map(|p| p.nodes.iter().copied()).collect();
        union.sort_by(|a, b| a.total_cmp(b));
        let mut nodes: Vec<f64> = Vec::with_capacity(union.len());
        for t in union {
            if nodes.last().is_none_or(|&l| t - l > tol) {
                nodes.push(t);
            }
        }

        let mut out = Trajectory::with_capacity(dim, nodes.len());
        let mut cursors = vec![0usize; parts.len()];
        let mut y = vec![0.0; dim];
        let mut dy = vec![0.0; dim];
        let mut tmp = vec![0.0; dim];
        for &t in &nodes {
            match offset {
                Some(o) => y.copy_from_slice(o),
                None => y.iter_mut().for_each(|v| *v = 0.0),
            }
            dy.iter_mut().for_each(|v| *v = 0.0);
            for (p, c) in parts.iter().zip(cursors.iter_mut()) {
                while *c + 1 < p.len() && p.nodes[*c + 1] <= t + tol {
                    *c += 1;
                }
                if (p.nodes[*c] - t).abs() <= tol {
                    crate::vecops::add_assign(&mut y, p.state(*c));
                    crate::vecops::add_assign(&mut dy, p.slope(*c).unwrap());
                } else {
                    let i = (*c).min(p.len().saturating_sub(2));
                    if p.len() == 1 {
                        crate::vecops::add_assign(&mut y, p.state(0));
                        crate::vecops::add_assign(&mut dy, p.slope(0).unwrap());
                        continue;
                    }
                    p.eval_in_interval(i, t, &mut tmp);
                    crate::vecops::add_assign(&mut y, &tmp);
                    p.slope_in_interval(i, t, &mut tmp);
                    crate::vecops::add_assign(&mut dy, &tmp);
                }
            }
            out.push(t, &y, &dy);
        }
        Ok(out)
    }

    /// Trapezoid weights on the stored nodes.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let n = self.len();
        let mut w = vec![0.0; n];
        for i in 0..n.saturating_sub(1) {
            let h = self.nodes[i + 1] - self.nodes[i];
            w[i] += 0.5 * h;
            w[i + 1] += 0.5 * h;
        }
        w
    }
}

impl History for Trajectory {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        Trajectory::eval_into(self, t, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic(t: f64) -> (f64, f64) {
        (t * t * t - 2.0 * t + 1.0, 3.0 * t * t - 2.0)
    }

    fn cubic_traj(nodes: &[f64]) -> Trajectory {
        let mut tr = Trajectory::new(1);
        for &t in nodes {
            let (y, d) = cubic(t);
            tr.push(t, &[y], &[d]);
        }
        tr
    }

    #[test]
    fn linear_mode_interpolates_linearly() {
        let mut tr = Trajectory::piecewise_linear(2);
        tr.push_linear(0.0, &[0.0, 1.0]);
        tr.push_linear(2.0, &[4.0, -1.0]);
        assert_eq!(tr.eval(0.5), vec![1.0, 0.5]);
        assert_eq!(tr.eval(2.0), vec![4.0, -1.0]);
    }

    #[test]
    fn hermite_reproduces_cubics() {
        let tr = cubic_traj(&[0.0, 0.7, 1.3, 2.0]);
        for k in 0..=40 {
            let t = 0.05 * k as f64;
            assert!((tr.eval(t)[0] - cubic(t).0).abs() < 1e-13);
            let mut d = [0.0];
            tr.slope_into(t, &mut d);
            assert!((d[0] - cubic(t).1).abs() < 1e-12);
        }
    }

    #[test]
    fn eval_at_nodes_is_exact() {
        let tr = cubic_traj(&[0.0, 0.3, 1.0]);
        for i in 0..tr.len() {
            assert_eq!(tr.eval(tr.nodes()[i]), tr.state(i));
        }
    }

    #[test]
    fn reflection_and_shift_keep_values() {
        let tr = cubic_traj(&[0.0, 0.4, 1.0]);
        let r = tr.reflected(3.0, 2.0);
        assert_eq!(r.nodes(), &[2.0, 2.6, 3.0]);
        for &t in &[2.0, 2.2, 2.9] {
            assert!((r.eval(t)[0] - tr.eval(3.0 - t)[0]).abs() < 1e-14);
        }
        let s = tr.clone().shifted(5.0, 6.0);
        assert!((s.eval(5.5)[0] - tr.eval(0.5)[0]).abs() < 1e-14);
    }

    #[test]
    fn union_sum_matches_pointwise_sum() {
        let a = cubic_traj(&[0.0, 0.5, 1.0]);
        let b = cubic_traj(&[0.0, 0.25, 0.8, 1.0]);
        let s = Trajectory::sum_on_union(&[&a, &b], Some(&[1.0])).unwrap();
        assert_eq!(s.nodes(), &[0.0, 0.25, 0.5, 0.8, 1.0]);
        for k in 0..=20 {
            let t = 0.05 * k as f64;
            assert!((s.eval(t)[0] - (2.0 * cubic(t).0 + 1.0)).abs() < 1e-13);
        }
    }

    #[test]
    fn window_adds_interpolated_ends() {
        let tr = cubic_traj(&[0.0, 0.5, 1.0]);
        let w = tr.window(0.25, 0.5);
        assert_eq!(w.nodes(), &[0.25, 0.5]);
        assert!((w.eval(0.25)[0] - cubic(0.25).0).abs() < 1e-14);
    }

    #[test]
    fn trapezoid_weights_sum_to_span() {
        let tr = cubic_traj(&[0.0, 0.1, 0.5, 2.0]);
        let w: f64 = tr.trapezoid_weights().iter().sum();
        assert!((w - 2.0).abs() < 1e-15);
    }
}
