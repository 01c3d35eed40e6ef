//! Dense and compressed-sparse-column storage, block-column partitioning and
//! the transposed matrix-vector product `Mᵀx` used throughout the crate.

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixError {
    #[error("matrix must have at least one row and one column (got {rows}x{cols})")]
    EmptyShape { rows: usize, cols: usize },
    #[error("expected {expected} entries, got {actual}")]
    EntryCount { expected: usize, actual: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid sparse structure: {0}")]
    InvalidSparse(String),
    #[error("partition widths sum to {sum}, matrix has {cols} columns")]
    Partition { sum: usize, cols: usize },
    #[error("zero-width block at position {0}")]
    ZeroWidth(usize),
    #[error("cannot expand block {block}: width {width} is not {multiplier} x {base}")]
    Expansion {
        block: usize,
        width: usize,
        multiplier: usize,
        base: usize,
    },
    #[error("linear combination over an empty block list")]
    EmptyCombination,
}

pub type Result<T> = std::result::Result<T, MatrixError>;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(MatrixError::EmptyShape { rows, cols });
        }
        let expected = rows
            .checked_mul(cols)
            .ok_or_else(|| MatrixError::Dimension(format!("{rows}x{cols} overflows")))?;
        if data.len() != expected {
            return Err(MatrixError::EntryCount {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data)
    }

    /// Entries i.i.d. uniform on [-1, 1].
    pub fn random<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Result<Self> {
        Self::new(rows, cols, rng::uniform_vector(rng, rows * cols))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i)).expect("nonempty")
    }

    pub fn to_sparse(&self) -> SparseMatrix {
        let mut col_ptr = Vec::with_capacity(self.cols + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for j in 0..self.cols {
            for i in 0..self.rows {
                let v = self.get(i, j);
                if v != 0.0 {
                    row_idx.push(i);
                    values.push(v);
                }
            }
            col_ptr.push(row_idx.len());
        }
        SparseMatrix {
            rows: self.rows,
            cols: self.cols,
            col_ptr,
            row_idx,
            values,
        }
    }

    fn column_block(&self, start: usize, width: usize) -> DenseMatrix {
        let mut data = Vec::with_capacity(self.rows * width);
        for i in 0..self.rows {
            data.extend_from_slice(&self.row(i)[start..start + width]);
        }
        DenseMatrix {
            rows: self.rows,
            cols: width,
            data,
        }
    }

    fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (yj, &a) in y.iter_mut().zip(self.row(i)) {
                *yj += a * xi;
            }
        }
        y
    }

    /// `M x` for a row-major matrix.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(MatrixError::Dimension(format!(
                "vector has length {}, matrix has {} columns",
                x.len(),
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }
}

/// Compressed sparse column matrix.
///
/// Row indices are strictly increasing inside every column. Values produced by
/// parsing or conversion are nonzero; [`linear_combination`] keeps the union
/// pattern of its inputs, so an exact cancellation leaves an explicit zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from raw CSC arrays, validating the structure.
    pub fn from_csc(
        rows: usize,
        cols: usize,
        col_ptr: Vec<usize>,
        row_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(MatrixError::EmptyShape { rows, cols });
        }
        if col_ptr.len() != cols + 1 || col_ptr[0] != 0 {
            return Err(MatrixError::InvalidSparse(
                "bad column pointer array".into(),
            ));
        }
        if row_idx.len() != values.len() || *col_ptr.last().unwrap() != row_idx.len() {
            return Err(MatrixError::InvalidSparse("array lengths disagree".into()));
        }
        if let Some(j) = col_ptr.windows(2).position(|w| w[0] > w[1]) {
            return Err(MatrixError::InvalidSparse(format!(
                "column {j} pointer decreases"
            )));
        }
        for j in 0..cols {
            let (lo, hi) = (col_ptr[j], col_ptr[j + 1]);
            let col = &row_idx[lo..hi];
            if col.iter().any(|&r| r >= rows) {
                return Err(MatrixError::InvalidSparse(format!(
                    "row index out of range in column {j}"
                )));
            }
            if col.windows(2).any(|w| w[0] >= w[1]) {
                return Err(MatrixError::InvalidSparse(format!(
                    "row indices not strictly increasing in column {j}"
                )));
            }
        }
        Ok(Self {
            rows,
            cols,
            col_ptr,
            row_idx,
            values,
        })
    }

    /// Builds from (row, col, value) triplets. Duplicates are summed and zeros dropped.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(MatrixError::EmptyShape { rows, cols });
        }
        let mut sorted = triplets.to_vec();
        for &(r, c, _) in &sorted {
            if r >= rows || c >= cols {
                return Err(MatrixError::InvalidSparse(format!(
                    "entry ({r}, {c}) outside {rows}x{cols}"
                )));
            }
        }
        sorted.sort_by_key(|&(r, c, _)| (c, r));
        let mut col_ptr = vec![0usize; cols + 1];
        let mut row_idx: Vec<usize> = Vec::with_capacity(sorted.len());
        let mut col_of: Vec<usize> = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        for (r, c, v) in sorted {
            if col_of.last() == Some(&c) && row_idx.last() == Some(&r) {
                *values.last_mut().unwrap() += v;
            } else {
                row_idx.push(r);
                col_of.push(c);
                values.push(v);
            }
        }
        let mut kept_rows = Vec::with_capacity(row_idx.len());
        let mut kept_vals = Vec::with_capacity(values.len());
        for ((r, c), v) in row_idx.into_iter().zip(col_of).zip(values) {
            if v != 0.0 {
                kept_rows.push(r);
                kept_vals.push(v);
                col_ptr[c + 1] += 1;
            }
        }
        for j in 0..cols {
            col_ptr[j + 1] += col_ptr[j];
        }
        Ok(Self {
            rows,
            cols,
            col_ptr,
            row_idx: kept_rows,
            values: kept_vals,
        })
    }

    /// Random sparse matrix where each entry is zero with probability
    /// `zero_fraction`; nonzeros are uniform on [-1, 1].
    pub fn random<R: Rng + ?Sized>(
        rows: usize,
        cols: usize,
        zero_fraction: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(MatrixError::EmptyShape { rows, cols });
        }
        if !(0.0..=1.0).contains(&zero_fraction) {
            return Err(MatrixError::Dimension(format!(
                "zero fraction {zero_fraction} outside [0, 1]"
            )));
        }
        let density = 1.0 - zero_fraction;
        let mut col_ptr = Vec::with_capacity(cols + 1);
        col_ptr.push(0);
        let expected = (density * (rows * cols) as f64) as usize;
        let mut row_idx = Vec::with_capacity(expected + expected / 16);
        let mut values = Vec::with_capacity(expected + expected / 16);
        let gaps = (density > 0.0 && density < 1.0)
            .then(|| Geometric::new(density).expect("probability in (0, 1)"));
        for _ in 0..cols {
            match &gaps {
                _ if density <= 0.0 => {}
                None => {
                    for r in 0..rows {
                        row_idx.push(r);
                        values.push(rng::nonzero_entry(rng));
                    }
                }
                Some(gaps) => {
                    let mut r = gaps.sample(rng);
                    while r < rows as u64 {
                        row_idx.push(r as usize);
                        values.push(rng::nonzero_entry(rng));
                        r += 1 + gaps.sample(rng);
                    }
                }
            }
            col_ptr.push(row_idx.len());
        }
        Ok(Self {
            rows,
            cols,
            col_ptr,
            row_idx,
            values,
        })
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

    /// Row indices and values of column `j`.
    pub fn column(&self, j: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.col_ptr[j], self.col_ptr[j + 1]);
        (&self.row_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut data = vec![0.0; self.rows * self.cols];
        for j in 0..self.cols {
            let (rows, vals) = self.column(j);
            for (&i, &v) in rows.iter().zip(vals) {
                data[i * self.cols + j] = v;
            }
        }
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// Iterates (row, col, value) in column-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.cols).flat_map(move |j| {
            let (rows, vals) = self.column(j);
            rows.iter().zip(vals).map(move |(&i, &v)| (i, j, v))
        })
    }

    fn column_block(&self, start: usize, width: usize) -> SparseMatrix {
        let lo = self.col_ptr[start];
        let hi = self.col_ptr[start + width];
        SparseMatrix {
            rows: self.rows,
            cols: width,
            col_ptr: self.col_ptr[start..=start + width]
                .iter()
                .map(|p| p - lo)
                .collect(),
            row_idx: self.row_idx[lo..hi].to_vec(),
            values: self.values[lo..hi].to_vec(),
        }
    }

    fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        (0..self.cols)
            .map(|j| {
                let (rows, vals) = self.column(j);
                rows.iter().zip(vals).map(|(&i, &v)| v * x[i]).sum()
            })
            .collect()
    }
}

/// A matrix in either storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Matrix {
    Dense(DenseMatrix),
    Sparse(SparseMatrix),
}

impl From<DenseMatrix> for Matrix {
    fn from(m: DenseMatrix) -> Self {
        Matrix::Dense(m)
    }
}

impl From<SparseMatrix> for Matrix {
    fn from(m: SparseMatrix) -> Self {
        Matrix::Sparse(m)
    }
}

impl Matrix {
    pub fn rows(&self) -> usize {
        match self {
            Matrix::Dense(m) => m.rows,
            Matrix::Sparse(m) => m.rows,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Matrix::Dense(m) => m.cols,
            Matrix::Sparse(m) => m.cols,
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, Matrix::Sparse(_))
    }

    /// Stored nonzeros; for dense storage, the count of entries different from zero.
    pub fn nnz(&self) -> usize {
        match self {
            Matrix::Dense(m) => m.data.iter().filter(|v| **v != 0.0).count(),
            Matrix::Sparse(m) => m.nnz(),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            Matrix::Dense(m) => m.clone(),
            Matrix::Sparse(m) => m.to_dense(),
        }
    }

    /// Columns `start..start + width` as a new matrix of the same storage kind.
    pub fn column_block(&self, start: usize, width: usize) -> Result<Matrix> {
        if width == 0 || start + width > self.cols() {
            return Err(MatrixError::Dimension(format!(
                "column range {start}..{} outside {} columns",
                start + width,
                self.cols()
            )));
        }
        Ok(match self {
            Matrix::Dense(m) => Matrix::Dense(m.column_block(start, width)),
            Matrix::Sparse(m) => Matrix::Sparse(m.column_block(start, width)),
        })
    }

    /// `Mᵀx`.
    pub fn matvec_t(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows() {
            return Err(MatrixError::Dimension(format!(
                "vector has length {}, matrix has {} rows",
                x.len(),
                self.rows()
            )));
        }
        Ok(match self {
            Matrix::Dense(m) => m.matvec_t(x),
            Matrix::Sparse(m) => m.matvec_t(x),
        })
    }
}

/// `Mᵀx` as a free function.
pub fn matvec_t(m: &Matrix, x: &[f64]) -> Result<Vec<f64>> {
    m.matvec_t(x)
}

/// Stored nonzero count as a free function.
pub fn nnz(m: &Matrix) -> usize {
    m.nnz()
}

/// Entrywise `Σ coeffs[q] · blocks[q]`.
///
/// All-sparse input yields a sparse result whose pattern is the union of the
/// input patterns; any dense input makes the result dense.
pub fn linear_combination(blocks: &[&Matrix], coeffs: &[f64]) -> Result<Matrix> {
    let first = blocks.first().ok_or(MatrixError::EmptyCombination)?;
    if coeffs.len() != blocks.len() {
        return Err(MatrixError::Dimension(format!(
            "{} coefficients for {} blocks",
            coeffs.len(),
            blocks.len()
        )));
    }
    let (rows, cols) = (first.rows(), first.cols());
    if let Some(b) = blocks.iter().find(|b| b.rows() != rows || b.cols() != cols) {
        return Err(MatrixError::Dimension(format!(
            "block is {}x{}, expected {rows}x{cols}",
            b.rows(),
            b.cols()
        )));
    }

    if blocks.iter().all(|b| b.is_sparse()) {
        let sparse: Vec<&SparseMatrix> = blocks
            .iter()
            .map(|b| match b {
                Matrix::Sparse(s) => s,
                Matrix::Dense(_) => unreachable!(),
            })
            .collect();
        return Ok(Matrix::Sparse(sparse_combination(
            &sparse, coeffs, rows, cols,
        )));
    }

    let mut data = vec![0.0; rows * cols];
    for (block, &c) in blocks.iter().zip(coeffs) {
        match block {
            Matrix::Dense(m) => {
                for (d, &v) in data.iter_mut().zip(&m.data) {
                    *d += c * v;
                }
            }
            Matrix::Sparse(m) => {
                for (i, j, v) in m.triplets() {
                    data[i * cols + j] += c * v;
                }
            }
        }
    }
    Ok(Matrix::Dense(DenseMatrix { rows, cols, data }))
}

fn sparse_combination(
    blocks: &[&SparseMatrix],
    coeffs: &[f64],
    rows: usize,
    cols: usize,
) -> SparseMatrix {
    let capacity: usize = blocks.iter().map(|b| b.nnz()).sum();
    let mut col_ptr = Vec::with_capacity(cols + 1);
    let mut row_idx = Vec::with_capacity(capacity);
    let mut values = Vec::with_capacity(capacity);
    col_ptr.push(0);

    let mut acc = vec![0.0f64; rows];
    // Column (plus one) that last touched each row; 0 means never.
    let mut mark = vec![0usize; rows];
    let mut touched: Vec<usize> = Vec::new();
    for j in 0..cols {
        touched.clear();
        for (block, &c) in blocks.iter().zip(coeffs) {
            let (idx, vals) = block.column(j);
            for (&i, &v) in idx.iter().zip(vals) {
                if mark[i] != j + 1 {
                    mark[i] = j + 1;
                    acc[i] = 0.0;
                    touched.push(i);
                }
                acc[i] += c * v;
            }
        }
        touched.sort_unstable();
        for &i in &touched {
            row_idx.push(i);
            values.push(acc[i]);
        }
        col_ptr.push(row_idx.len());
    }
    SparseMatrix {
        rows,
        cols,
        col_ptr,
        row_idx,
        values,
    }
}

/// A matrix held as an ordered list of disjoint block-columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionedMatrix {
    blocks: Vec<Matrix>,
}

impl PartitionedMatrix {
    /// Wraps pre-built blocks; they must share a row count and storage kind.
    pub fn from_blocks(blocks: Vec<Matrix>) -> Result<Self> {
        let first = blocks.first().ok_or(MatrixError::EmptyCombination)?;
        let (rows, sparse) = (first.rows(), first.is_sparse());
        for (q, b) in blocks.iter().enumerate() {
            if b.rows() != rows {
                return Err(MatrixError::Dimension(format!(
                    "block {q} has {} rows, expected {rows}",
                    b.rows()
                )));
            }
            if b.is_sparse() != sparse {
                return Err(MatrixError::Dimension(format!(
                    "block {q} has a different storage kind"
                )));
            }
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[Matrix] {
        &self.blocks
    }

    pub fn block(&self, q: usize) -> &Matrix {
        &self.blocks[q]
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn rows(&self) -> usize {
        self.blocks[0].rows()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.blocks.iter().map(Matrix::cols).collect()
    }

    pub fn total_cols(&self) -> usize {
        self.blocks.iter().map(Matrix::cols).sum()
    }

    /// Common block width, if every block has the same one.
    pub fn uniform_width(&self) -> Option<usize> {
        let w = self.blocks[0].cols();
        self.blocks.iter().all(|b| b.cols() == w).then_some(w)
    }

    pub fn nnz(&self) -> usize {
        self.blocks.iter().map(Matrix::nnz).sum()
    }

    /// Splits every block `k` into `multipliers[k]` consecutive blocks of width
    /// `base_width`, preserving column order.
    pub fn subpartition(
        &self,
        multipliers: &[usize],
        base_width: usize,
    ) -> Result<PartitionedMatrix> {
        if multipliers.len() != self.blocks.len() {
            return Err(MatrixError::Dimension(format!(
                "{} multipliers for {} blocks",
                multipliers.len(),
                self.blocks.len()
            )));
        }
        let mut out = Vec::with_capacity(multipliers.iter().sum());
        for (k, (block, &m)) in self.blocks.iter().zip(multipliers).enumerate() {
            if m == 0 || base_width == 0 || block.cols() != m * base_width {
                return Err(MatrixError::Expansion {
                    block: k,
                    width: block.cols(),
                    multiplier: m,
                    base: base_width,
                });
            }
            if m == 1 {
                out.push(block.clone());
            } else {
                for p in 0..m {
                    out.push(block.column_block(p * base_width, base_width)?);
                }
            }
        }
        Ok(PartitionedMatrix { blocks: out })
    }

    /// Horizontal concatenation of all blocks.
    pub fn concat(&self) -> Matrix {
        let rows = self.rows();
        let cols = self.total_cols();
        match &self.blocks[0] {
            Matrix::Dense(_) => {
                let mut data = Vec::with_capacity(rows * cols);
                for i in 0..rows {
                    for b in &self.blocks {
                        if let Matrix::Dense(d) = b {
                            data.extend_from_slice(d.row(i));
                        }
                    }
                }
                Matrix::Dense(DenseMatrix { rows, cols, data })
            }
            Matrix::Sparse(_) => {
                let mut col_ptr = vec![0];
                let mut row_idx = Vec::with_capacity(self.nnz());
                let mut values = Vec::with_capacity(self.nnz());
                for b in &self.blocks {
                    if let Matrix::Sparse(s) = b {
                        for j in 0..s.cols {
                            let (idx, vals) = s.column(j);
                            row_idx.extend_from_slice(idx);
                            values.extend_from_slice(vals);
                            col_ptr.push(row_idx.len());
                        }
                    }
                }
                Matrix::Sparse(SparseMatrix {
                    rows,
                    cols,
                    col_ptr,
                    row_idx,
                    values,
                })
            }
        }
    }

    /// `[B_0ᵀx; B_1ᵀx; …]` concatenated, i.e. `Aᵀx` for the whole matrix.
    pub fn matvec_t(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.total_cols());
        for b in &self.blocks {
            out.extend(b.matvec_t(x)?);
        }
        Ok(out)
    }
}

/// Cuts `a` into consecutive block-columns of the given widths.
pub fn partition(a: &Matrix, widths: &[usize]) -> Result<PartitionedMatrix> {
    if let Some(k) = widths.iter().position(|&w| w == 0) {
        return Err(MatrixError::ZeroWidth(k));
    }
    let sum: usize = widths.iter().sum();
    if sum != a.cols() || widths.is_empty() {
        return Err(MatrixError::Partition {
            sum,
            cols: a.cols(),
        });
    }
    let mut start = 0;
    let mut blocks = Vec::with_capacity(widths.len());
    for &w in widths {
        blocks.push(a.column_block(start, w)?);
        start += w;
    }
    Ok(PartitionedMatrix { blocks })
}

/// Cuts `a` into `k` equal block-columns.
pub fn partition_even(a: &Matrix, k: usize) -> Result<PartitionedMatrix> {
    if k == 0 || !a.cols().is_multiple_of(k) {
        return Err(MatrixError::Partition {
            sum: a.cols().checked_div(k).map_or(0, |q| q * k),
            cols: a.cols(),
        });
    }
    partition(a, &vec![a.cols() / k; k])
}
