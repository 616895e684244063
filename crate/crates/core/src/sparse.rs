//! Compressed sparse row operators and time-dependent operator families.

use std::borrow::Cow;

use crate::error::{Error, Result};

/// Square or rectangular matrix in CSR layout with sorted column indices.
///
/// Explicit zeros are kept so that operators assembled on a fixed stencil
/// share one sparsity pattern regardless of the values.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

/// Row-by-row CSR assembly. Each row is sorted and duplicate columns summed.
pub(crate) struct CsrBuilder {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrBuilder {
    pub(crate) fn new(rows: usize, cols: usize, nnz_hint: usize) -> Self {
        let mut indptr = Vec::with_capacity(rows + 1);
        indptr.push(0);
        CsrBuilder {
            rows,
            cols,
            indptr,
            indices: Vec::with_capacity(nnz_hint),
            values: Vec::with_capacity(nnz_hint),
        }
    }

    pub(crate) fn push_row(&mut self, entries: &mut [(usize, f64)]) {
        entries.sort_unstable_by_key(|e| e.0);
        let row_start = self.indices.len();
        for &(c, v) in entries.iter() {
            debug_assert!(c < self.cols);
            if self.indices.len() > row_start && *self.indices.last().unwrap() == c {
                *self.values.last_mut().unwrap() += v;
            } else {
                self.indices.push(c);
                self.values.push(v);
            }
        }
        self.indptr.push(self.indices.len());
    }

    pub(crate) fn finish(self) -> SparseOperator {
        assert_eq!(self.indptr.len(), self.rows + 1, "row count mismatch");
        SparseOperator {
            rows: self.rows,
            cols: self.cols,
            indptr: self.indptr,
            indices: self.indices,
            values: self.values,
        }
    }
}

impl SparseOperator {
    /// Builds an operator from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); rows];
        for (r, c, v) in triplets {
            if r >= rows || c >= cols {
                return Err(Error::InvalidParameter(format!(
                    "triplet ({r}, {c}) outside a {rows}x{cols} operator"
                )));
            }
            per_row[r].push((c, v));
        }
        let nnz = per_row.iter().map(Vec::len).sum();
        let mut b = CsrBuilder::new(rows, cols, nnz);
        for row in per_row.iter_mut() {
            b.push_row(row);
        }
        Ok(b.finish())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        SparseOperator {
            rows,
            cols,
            indptr: vec![0; rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        SparseOperator {
            rows: n,
            cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn same_pattern(&self, other: &SparseOperator) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.indptr == other.indptr
            && self.indices == other.indices
    }

    /// `y = A x`
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        for (r, yr) in y.iter_mut().enumerate() {
            let (a, b) = (self.indptr[r], self.indptr[r + 1]);
            *yr = self.indices[a..b]
                .iter()
                .zip(&self.values[a..b])
                .map(|(&c, &v)| v * x[c])
                .sum();
        }
    }

    pub fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.apply(x, &mut y);
        y
    }

    /// `y += alpha * A x`
    pub fn apply_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        for (r, yr) in y.iter_mut().enumerate() {
            let (a, b) = (self.indptr[r], self.indptr[r + 1]);
            let s: f64 = self.indices[a..b]
                .iter()
                .zip(&self.values[a..b])
                .map(|(&c, &v)| v * x[c])
                .sum();
            *yr += alpha * s;
        }
    }

    /// `y = A^T x`
    pub fn transpose_apply(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.rows);
        assert_eq!(y.len(), self.cols);
        y.iter_mut().for_each(|v| *v = 0.0);
        for (r, &xr) in x.iter().enumerate() {
            for k in self.indptr[r]..self.indptr[r + 1] {
                y[self.indices[k]] += self.values[k] * xr;
            }
        }
    }

    pub fn transpose(&self) -> SparseOperator {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[k];
                indices[next[c]] = r;
                values[next[c]] = self.values[k];
                next[c] += 1;
            }
        }
        SparseOperator {
            rows: self.cols,
            cols: self.rows,
            indptr,
            indices,
            values,
        }
    }

    pub fn scaled(&self, s: f64) -> SparseOperator {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// Entrywise sum over the union of both patterns.
    pub fn add(&self, other: &SparseOperator) -> Result<SparseOperator> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                found: other.rows,
            });
        }
        let mut b = CsrBuilder::new(self.rows, self.cols, self.nnz() + other.nnz());
        let mut row = Vec::new();
        for r in 0..self.rows {
            row.clear();
            row.extend(self.row(r));
            row.extend(other.row(r));
            b.push_row(&mut row);
        }
        Ok(b.finish())
    }

    /// Weighted sum `sum_i w_i A_i` of operators sharing one pattern.
    pub fn weighted_sum(ops: &[(f64, &SparseOperator)]) -> Result<SparseOperator> {
        let (_, first) = ops
            .first()
            .ok_or_else(|| Error::InvalidParameter("empty operator sum".into()))?;
        let mut out = (*first).clone();
        out.values.iter_mut().for_each(|v| *v = 0.0);
        for (w, op) in ops {
            if !op.same_pattern(&out) {
                return Err(Error::InvalidParameter(
                    "operators in a weighted sum must share a pattern".into(),
                ));
            }
            for (o, v) in out.values.iter_mut().zip(&op.values) {
                *o += w * v;
            }
        }
        Ok(out)
    }

    /// Row-major dense copy, meant for small operators and tests.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.cols]; self.rows];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] += v;
            }
        }
        d
    }

    /// Real interval `[lo, hi]` containing every Gershgorin disc's real extent.
    pub fn gershgorin_interval(&self) -> (f64, f64) {
        if self.rows == 0 {
            return (0.0, 0.0);
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for r in 0..self.rows {
            let mut diag = 0.0;
            let mut radius = 0.0;
            for (c, v) in self.row(r) {
                if c == r {
                    diag += v;
                } else {
                    radius += v.abs();
                }
            }
            lo = lo.min(diag - radius);
            hi = hi.max(diag + radius);
        }
        (lo, hi)
    }
}

/// A linear operator that may depend on a scalar time parameter.
///
/// Constant operators ignore the parameter. Time-dependent ones also
/// provide a frozen sparse snapshot for exponential propagation.
pub trait OperatorFamily: Sync {
    fn dim(&self) -> usize;

    /// `y = L(s) x`
    fn apply_at(&self, s: f64, x: &[f64], y: &mut [f64]);

    fn freeze(&self, s: f64) -> Cow<'_, SparseOperator>;

    fn is_constant(&self) -> bool;
}

impl OperatorFamily for SparseOperator {
    fn dim(&self) -> usize {
        self.rows
    }

    fn apply_at(&self, _s: f64, x: &[f64], y: &mut [f64]) {
        self.apply(x, y);
    }

    fn freeze(&self, _s: f64) -> Cow<'_, SparseOperator> {
        Cow::Borrowed(self)
    }

    fn is_constant(&self) -> bool {
        true
    }
}

impl<T: OperatorFamily + ?Sized> OperatorFamily for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply_at(&self, s: f64, x: &[f64], y: &mut [f64]) {
        (**self).apply_at(s, x, y)
    }

    fn freeze(&self, s: f64) -> Cow<'_, SparseOperator> {
        (**self).freeze(s)
    }

    fn is_constant(&self) -> bool {
        (**self).is_constant()
    }
}

/// Affine reparametrization `L'(s) = L(origin + sign * s)`.
pub struct Reparametrized<'a> {
    inner: &'a dyn OperatorFamily,
    origin: f64,
    sign: f64,
}

impl<'a> Reparametrized<'a> {
    pub fn shifted(inner: &'a dyn OperatorFamily, origin: f64) -> Self {
        Reparametrized {
            inner,
            origin,
            sign: 1.0,
        }
    }

    /// Local time running backwards from `pivot`.
    pub fn reflected(inner: &'a dyn OperatorFamily, pivot: f64) -> Self {
        Reparametrized {
            inner,
            origin: pivot,
            sign: -1.0,
        }
    }

    fn map(&self, s: f64) -> f64 {
        self.origin + self.sign * s
    }
}

impl OperatorFamily for Reparametrized<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply_at(&self, s: f64, x: &[f64], y: &mut [f64]) {
        self.inner.apply_at(self.map(s), x, y)
    }

    fn freeze(&self, s: f64) -> Cow<'_, SparseOperator> {
        self.inner.freeze(self.map(s))
    }

    fn is_constant(&self) -> bool {
        self.inner.is_constant()
    }
}
