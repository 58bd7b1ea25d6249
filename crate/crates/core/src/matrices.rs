//! Error/memory matrices, observation masks and sampling schemes, plus the
//! rank and correlation diagnostics used to inspect them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixKind {
    /// Test errors, entries in `[0, 1]`.
    Error,
    /// Memory in bytes, entries `> 0`.
    Memory,
    /// Completed or predicted values; only finiteness is enforced.
    Estimate,
}

/// Dense `n × d` matrix with dataset (row) and configuration (column) labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMatrix<T: Real> {
    values: Matrix<T>,
    row_ids: Vec<String>,
    col_ids: Vec<String>,
    kind: MatrixKind,
}

impl<T: Real> MeasurementMatrix<T> {
    pub fn new(
        values: Matrix<T>,
        row_ids: Vec<String>,
        col_ids: Vec<String>,
        kind: MatrixKind,
    ) -> Result<Self> {
        if row_ids.len() != values.nrows() || col_ids.len() != values.ncols() {
            return Err(Error::shape(
                format!("{}×{} labels", values.nrows(), values.ncols()),
                format!("{}×{} labels", row_ids.len(), col_ids.len()),
            ));
        }
        for (idx, &v) in values.iter().enumerate() {
            let (j, i) = (idx / values.nrows(), idx % values.nrows());
            let ok = match kind {
                MatrixKind::Error => v.is_finite() && v >= T::zero() && v <= T::one(),
                MatrixKind::Memory => v.is_finite() && v > T::zero(),
                MatrixKind::Estimate => v.is_finite(),
            };
            if !ok {
                return Err(Error::InvalidMatrix(format!(
                    "{kind:?} matrix entry ({i}, {j}) = {v} is out of range"
                )));
            }
        }
        Ok(MeasurementMatrix {
            values,
            row_ids,
            col_ids,
            kind,
        })
    }

    /// Labels rows `0..n` and columns `0..d`.
    pub fn unlabeled(values: Matrix<T>, kind: MatrixKind) -> Result<Self> {
        let rows = (0..values.nrows()).map(|i| i.to_string()).collect();
        let cols = (0..values.ncols()).map(|j| j.to_string()).collect();
        Self::new(values, rows, cols, kind)
    }

    pub fn values(&self) -> &Matrix<T> {
        &self.values
    }

    pub fn into_values(self) -> Matrix<T> {
        self.values
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn col_ids(&self) -> &[String] {
        &self.col_ids
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    pub fn row(&self, i: usize) -> Vec<T> {
        self.values.row(i).iter().copied().collect()
    }

    pub fn row_index(&self, id: &str) -> Option<usize> {
        self.row_ids.iter().position(|r| r == id)
    }
}

/// Matrix with explicitly missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialMatrix<T: Real> {
    nrows: usize,
    ncols: usize,
    cells: Vec<Option<T>>,
}

impl<T: Real> PartialMatrix<T> {
    pub fn missing(nrows: usize, ncols: usize) -> Self {
        PartialMatrix {
            nrows,
            ncols,
            cells: vec![None; nrows * ncols],
        }
    }

    pub fn from_full(m: &Matrix<T>) -> Self {
        let (nrows, ncols) = m.shape();
        let mut out = Self::missing(nrows, ncols);
        for i in 0..nrows {
            for j in 0..ncols {
                out.cells[i * ncols + j] = Some(m[(i, j)]);
            }
        }
        out
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    pub fn get(&self, i: usize, j: usize) -> Option<T> {
        self.cells[i * self.ncols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Option<T>) {
        self.cells[i * self.ncols + j] = v;
    }

    pub fn observed_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    /// Observed cells in row-major order.
    pub fn observed(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter_map(move |(idx, c)| c.map(|v| (idx / self.ncols, idx % self.ncols, v)))
    }

    pub fn row_observed_count(&self, i: usize) -> usize {
        self.cells[i * self.ncols..(i + 1) * self.ncols]
            .iter()
            .filter(|c| c.is_some())
            .count()
    }

    /// Zero-filled projection `P_Ω(A)` together with the indicator of Ω.
    pub fn zero_filled(&self) -> (Matrix<T>, Matrix<bool>) {
        let mut values = Matrix::zeros(self.nrows, self.ncols);
        let mut mask = Matrix::from_element(self.nrows, self.ncols, false);
        for (i, j, v) in self.observed() {
            values[(i, j)] = v;
            mask[(i, j)] = true;
        }
        (values, mask)
    }

    /// Keeps only the given rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut out = Self::missing(rows.len(), self.ncols);
        for (dst, &src) in rows.iter().enumerate() {
            for j in 0..self.ncols {
                out.set(dst, j, self.get(src, j));
            }
        }
        out
    }
}

/// Set Ω of observed cells with optional per-cell sampling probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMask<T: Real> {
    nrows: usize,
    ncols: usize,
    observed: Vec<bool>,
    probs: Option<Matrix<T>>,
}

impl<T: Real> ObservationMask<T> {
    pub fn empty(nrows: usize, ncols: usize) -> Self {
        ObservationMask {
            nrows,
            ncols,
            observed: vec![false; nrows * ncols],
            probs: None,
        }
    }

    pub fn full(nrows: usize, ncols: usize) -> Self {
        ObservationMask {
            nrows,
            ncols,
            observed: vec![true; nrows * ncols],
            probs: None,
        }
    }

    pub fn from_cells(
        nrows: usize,
        ncols: usize,
        cells: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut mask = Self::empty(nrows, ncols);
        for (i, j) in cells {
            mask.insert(i, j)?;
        }
        Ok(mask)
    }

    pub fn insert(&mut self, i: usize, j: usize) -> Result<()> {
        if i >= self.nrows {
            return Err(Error::OutOfRange {
                index: i,
                len: self.nrows,
            });
        }
        if j >= self.ncols {
            return Err(Error::OutOfRange {
                index: j,
                len: self.ncols,
            });
        }
        self.observed[i * self.ncols + j] = true;
        Ok(())
    }

    /// Attaches sampling probabilities; every observed cell needs
    /// `P_ij ∈ (0, 1]`.
    pub fn with_probs(mut self, probs: Matrix<T>) -> Result<Self> {
        if probs.shape() != (self.nrows, self.ncols) {
            return Err(Error::shape(
                format!("{}×{}", self.nrows, self.ncols),
                format!("{}×{}", probs.nrows(), probs.ncols()),
            ));
        }
        for (i, j) in self.cells() {
            let p = probs[(i, j)];
            if !(p > T::zero() && p <= T::one()) {
                return Err(Error::InvalidArgument(format!(
                    "sampling probability at observed cell ({i}, {j}) is {p}, must be in (0, 1]"
                )));
            }
        }
        self.probs = Some(probs);
        Ok(self)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i < self.nrows && j < self.ncols && self.observed[i * self.ncols + j]
    }

    pub fn len(&self) -> usize {
        self.observed.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Observed cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.observed
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(idx, _)| (idx / self.ncols, idx % self.ncols))
    }

    pub fn probs(&self) -> Option<&Matrix<T>> {
        self.probs.as_ref()
    }

    /// Restricts the mask (and probabilities) to the given rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut out = Self::empty(rows.len(), self.ncols);
        for (dst, &src) in rows.iter().enumerate() {
            for j in 0..self.ncols {
                out.observed[dst * self.ncols + j] = self.contains(src, j);
            }
        }
        out.probs = self
            .probs
            .as_ref()
            .map(|p| Matrix::from_fn(rows.len(), self.ncols, |r, c| p[(rows[r], c)]));
        out
    }
}

/// Copies observed cells of `e`; all other cells are missing.
pub fn apply_mask<T: Real>(
    e: &MeasurementMatrix<T>,
    mask: &ObservationMask<T>,
) -> Result<PartialMatrix<T>> {
    apply_mask_values(e.values(), mask)
}

pub fn apply_mask_values<T: Real>(
    values: &Matrix<T>,
    mask: &ObservationMask<T>,
) -> Result<PartialMatrix<T>> {
    if values.shape() != mask.shape() {
        return Err(Error::shape(
            format!("{:?}", mask.shape()),
            format!("{:?}", values.shape()),
        ));
    }
    let (n, d) = values.shape();
    let mut out = PartialMatrix::missing(n, d);
    for (i, j) in mask.cells() {
        out.set(i, j, Some(values[(i, j)]));
    }
    Ok(out)
}

/// Independent Bernoulli(`probs[i, j]`) draws, row-major, from a ChaCha8
/// stream seeded with `seed`.
pub fn sample_mask<T: Real>(probs: &Matrix<T>, seed: u64) -> Result<ObservationMask<T>> {
    let (n, d) = probs.shape();
    for &p in probs.iter() {
        if !(p >= T::zero() && p <= T::one()) {
            return Err(Error::InvalidArgument(format!(
                "sampling probability {p} is outside [0, 1]"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = ObservationMask::empty(n, d);
    for i in 0..n {
        for j in 0..d {
            let u: f64 = rng.random();
            if u < probs[(i, j)].as_f64() {
                mask.observed[i * d + j] = true;
            }
        }
    }
    // a zero-probability cell can never be drawn, so the stored P is valid
    mask.probs = Some(probs.clone());
    Ok(mask)
}

/// Uniform sampling at Bernoulli rate `ratio`; identical to [`sample_mask`]
/// with a constant probability matrix.
pub fn uniform_mask<T: Real>(n: usize, d: usize, ratio: T, seed: u64) -> Result<ObservationMask<T>> {
    if !(ratio >= T::zero() && ratio <= T::one()) {
        return Err(Error::InvalidArgument(format!(
            "sampling ratio must be in [0, 1], got {ratio}"
        )));
    }
    sample_mask(&Matrix::from_element(n, d, ratio), seed)
}

/// `P_ij = p_max · F(1 / M_ij)` where `F` is the right-continuous empirical
/// CDF of all inverse memories. Lower memory gives higher probability.
pub fn nonuniform_probs<T: Real>(memory: &Matrix<T>, p_max: T) -> Result<Matrix<T>> {
    if !(p_max > T::zero() && p_max <= T::one()) {
        return Err(Error::InvalidArgument(format!(
            "p_max must be in (0, 1], got {p_max}"
        )));
    }
    if let Some(bad) = memory.iter().find(|&&m| !(m > T::zero() && m.is_finite())) {
        return Err(Error::InvalidMatrix(format!(
            "memory entries must be positive and finite, found {bad}"
        )));
    }
    let mut inv: Vec<T> = memory.iter().map(|&m| T::one() / m).collect();
    inv.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let total = T::lit(inv.len() as f64);
    Ok(memory.map(|m| {
        let x = T::one() / m;
        let rank = inv.partition_point(|&v| v <= x);
        p_max * (T::lit(rank as f64) / total)
    }))
}

/// Kendall's tau-a: `(concordant − discordant) / C(n, 2)`; tied pairs count
/// zero. Knight's `O(n log n)` merge-sort formulation.
pub fn kendall_tau<T: Real>(u: &[T], v: &[T]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::shape(u.len(), v.len()));
    }
    let n = u.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "kendall tau needs at least 2 observations, got {n}"
        )));
    }
    if u.iter().chain(v).any(|x| !x.is_finite()) {
        return Err(Error::Domain("kendall tau inputs must be finite".into()));
    }
    let cmp = |a: &T, b: &T| a.partial_cmp(b).expect("finite");

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| cmp(&u[a], &u[b]).then(cmp(&v[a], &v[b])));

    // pairs tied in u, and tied in both
    let mut ties_u = 0u64;
    let mut ties_joint = 0u64;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && u[idx[j]] == u[idx[i]] {
            j += 1;
        }
        ties_u += pairs(j - i);
        let mut a = i;
        while a < j {
            let mut b = a + 1;
            while b < j && v[idx[b]] == v[idx[a]] {
                b += 1;
            }
            ties_joint += pairs(b - a);
            a = b;
        }
        i = j;
    }

    let mut seq: Vec<T> = idx.iter().map(|&k| v[k]).collect();
    let mut buf = seq.clone();
    let swaps = merge_count(&mut seq, &mut buf, &cmp);

    let mut ties_v = 0u64;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && seq[j] == seq[i] {
            j += 1;
        }
        ties_v += pairs(j - i);
        i = j;
    }

    let total = pairs(n);
    let numer = total as i128 - ties_u as i128 - ties_v as i128 + ties_joint as i128
        - 2 * swaps as i128;
    Ok(numer as f64 / total as f64)
}

fn pairs(m: usize) -> u64 {
    let m = m as u64;
    m * m.saturating_sub(1) / 2
}

/// Stable merge sort returning the number of strictly inverted pairs.
fn merge_count<T: Copy>(
    xs: &mut [T],
    buf: &mut [T],
    cmp: &impl Fn(&T, &T) -> std::cmp::Ordering,
) -> u64 {
    let n = xs.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (left, right) = xs.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(left, bl, cmp) + merge_count(right, br, cmp)
    };
    let (mut a, mut b, mut k) = (0, mid, 0);
    while a < mid && b < n {
        if cmp(&xs[b], &xs[a]) == std::cmp::Ordering::Less {
            buf[k] = xs[b];
            swaps += (mid - a) as u64;
            b += 1;
        } else {
            buf[k] = xs[a];
            a += 1;
        }
        k += 1;
    }
    while a < mid {
        buf[k] = xs[a];
        a += 1;
        k += 1;
    }
    while b < n {
        buf[k] = xs[b];
        b += 1;
        k += 1;
    }
    xs.copy_from_slice(&buf[..n]);
    swaps
}

/// `‖v̂ − v‖ / ‖v‖`.
pub fn relative_error<T: Real>(estimate: &[T], reference: &[T]) -> Result<T> {
    if estimate.len() != reference.len() {
        return Err(Error::shape(reference.len(), estimate.len()));
    }
    let denom = crate::linalg::euclidean_norm(reference);
    if denom <= T::zero() {
        return Err(Error::Domain("reference vector has zero norm".into()));
    }
    let num = estimate
        .iter()
        .zip(reference)
        .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b))
        .sqrt();
    Ok(num / denom)
}

/// Fraction of squared singular-value mass in the leading `k` values.
pub fn explained_variance<T: Real>(singular_values: &[T], k: usize) -> Result<T> {
    if k == 0 || k > singular_values.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must be in 1..={}",
            singular_values.len()
        )));
    }
    let total = singular_values.iter().fold(T::zero(), |a, &s| a + s * s);
    if total <= T::zero() {
        return Ok(T::one());
    }
    let head = singular_values[..k].iter().fold(T::zero(), |a, &s| a + s * s);
    Ok(head / total)
}

/// Non-increasing singular values of a dense matrix.
pub fn singular_values<T: Real>(m: &Matrix<T>) -> Vec<T> {
    crate::linalg::singular_values(m)
}
