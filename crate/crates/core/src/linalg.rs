//! Matrix-free kernels for lower-triangular factors with block-banded sparsity.
//!
//! Factors are stored in half-vectorized form (`vech`: column-major, each
//! column read from the diagonal downwards), restricted to the positions of an
//! [`IndexMap`]. For a block-banded pattern every stored column is one
//! contiguous run of rows, so offsets are computed arithmetically and triangular
//! solves cost one pass over the stored entries.

use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Positions of the non-zero entries of a block-banded lower-triangular matrix.
///
/// The matrix has `n` row/column blocks of size `L`; block `(i, j)` may be
/// non-zero only when `0 <= i - j <= ell`. A dense lower triangle of order `r`
/// is the special case `n = 1, L = r, ell = 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexMap {
    n_blocks: usize,
    block_size: usize,
    bandwidth: usize,
    /// Storage offset of the diagonal entry of each column; `col_start[dim]` is the total size.
    col_start: Vec<usize>,
    /// One past the last stored row of each column.
    row_end: Vec<usize>,
}

impl IndexMap {
    pub fn banded(n: usize, block_size: usize, ell: usize) -> Result<Self> {
        if n == 0 || block_size == 0 {
            return Err(Error::invalid(format!(
                "pattern dimensions must be positive (n = {n}, L = {block_size})"
            )));
        }
        if ell >= n {
            return Err(Error::invalid(format!(
                "bandwidth {ell} must be smaller than the block count {n}"
            )));
        }
        let dim = n * block_size;
        let mut col_start = Vec::with_capacity(dim + 1);
        let mut row_end = Vec::with_capacity(dim);
        let mut offset = 0;
        for col in 0..dim {
            let last_block = (col / block_size + ell).min(n - 1);
            let end = (last_block + 1) * block_size;
            col_start.push(offset);
            row_end.push(end);
            offset += end - col;
        }
        col_start.push(offset);
        Ok(Self {
            n_blocks: n,
            block_size,
            bandwidth: ell,
            col_start,
            row_end,
        })
    }

    /// Full lower triangle of order `dim`.
    pub fn dense(dim: usize) -> Result<Self> {
        Self::banded(1, dim, 0)
    }

    pub fn dim(&self) -> usize {
        self.row_end.len()
    }

    /// Number of stored positions.
    pub fn len(&self) -> usize {
        self.col_start[self.dim()]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    /// Rows stored in column `col`, starting at the diagonal.
    pub fn column_rows(&self, col: usize) -> Range<usize> {
        col..self.row_end[col]
    }

    /// Storage offset of the diagonal entry of column `col`.
    pub fn column_offset(&self, col: usize) -> usize {
        self.col_start[col]
    }

    pub fn diag_offset(&self, i: usize) -> usize {
        self.col_start[i]
    }

    pub fn offset(&self, row: usize, col: usize) -> Option<usize> {
        if col >= self.dim() || row < col || row >= self.row_end[col] {
            return None;
        }
        Some(self.col_start[col] + row - col)
    }

    /// All stored `(row, col)` positions in storage order.
    pub fn positions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.dim()).flat_map(move |col| self.column_rows(col).map(move |row| (row, col)))
    }

    /// `true` at the storage offsets of diagonal entries.
    pub fn diagonal_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.len()];
        for i in 0..self.dim() {
            mask[self.col_start[i]] = true;
        }
        mask
    }

    /// `vech(I)` restricted to the pattern.
    pub fn vech_identity(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        for i in 0..self.dim() {
            v[self.col_start[i]] = 1.0;
        }
        v
    }
}

/// Index map of a block-banded pattern with `n` blocks of size `block_size`.
pub fn build_pattern(n: usize, block_size: usize, ell: usize) -> Result<IndexMap> {
    IndexMap::banded(n, block_size, ell)
}

/// A lower-triangular matrix stored on an [`IndexMap`].
///
/// The same type holds both a factor `C` and its unconstrained form `C*`
/// (log-diagonal); which one a value represents is up to the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTri {
    map: Arc<IndexMap>,
    values: Vec<f64>,
}

/// Dense lower triangle (the global factor `C1`).
pub type LowerTriDense = LowerTri;
/// Block-banded lower triangle (the local factor `C2`).
pub type BandedBlockLowerTri = LowerTri;

impl LowerTri {
    pub fn new(map: Arc<IndexMap>, values: Vec<f64>) -> Result<Self> {
        if values.len() != map.len() {
            return Err(Error::invalid(format!(
                "expected {} stored entries, got {}",
                map.len(),
                values.len()
            )));
        }
        Ok(Self { map, values })
    }

    pub fn zeros(map: Arc<IndexMap>) -> Self {
        let values = vec![0.0; map.len()];
        Self { map, values }
    }

    pub fn identity(map: Arc<IndexMap>) -> Self {
        let values = map.vech_identity();
        Self { map, values }
    }

    /// Builds a factor from a dense row-major square matrix, keeping pattern positions only.
    pub fn from_dense(map: Arc<IndexMap>, dense: &[f64]) -> Result<Self> {
        let dim = map.dim();
        if dense.len() != dim * dim {
            return Err(Error::invalid("dense matrix has the wrong size"));
        }
        let values = map.positions().map(|(i, j)| dense[i * dim + j]).collect();
        Ok(Self { map, values })
    }

    pub fn map(&self) -> &Arc<IndexMap> {
        &self.map
    }

    pub fn dim(&self) -> usize {
        self.map.dim()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.map.offset(row, col).map_or(0.0, |k| self.values[k])
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.values[self.map.diag_offset(i)]
    }

    /// Row-major dense copy (zeros outside the pattern).
    pub fn to_dense(&self) -> Vec<f64> {
        let dim = self.dim();
        let mut out = vec![0.0; dim * dim];
        for ((i, j), v) in self.map.positions().zip(&self.values) {
            out[i * dim + j] = *v;
        }
        out
    }

    /// Errors unless every diagonal entry is finite and strictly positive.
    pub fn check_factor(&self) -> Result<()> {
        for i in 0..self.dim() {
            let d = self.diag(i);
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::SingularFactor { index: i, value: d });
            }
        }
        Ok(())
    }

    /// Sum of the log diagonal, `log |C|`.
    pub fn log_det(&self) -> f64 {
        (0..self.dim()).map(|i| self.diag(i).ln()).sum()
    }

    /// Solves `T x = b` by forward substitution.
    pub fn solve_lower(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.check_len(b.len())?;
        self.check_factor()?;
        let mut x = b.to_vec();
        for col in 0..self.dim() {
            let start = self.map.column_offset(col);
            let xj = x[col] / self.values[start];
            x[col] = xj;
            for (k, row) in self.map.column_rows(col).enumerate().skip(1) {
                x[row] -= self.values[start + k] * xj;
            }
        }
        Ok(x)
    }

    /// Solves `Tᵀ x = b` by back substitution.
    pub fn solve_upper_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.check_len(b.len())?;
        self.check_factor()?;
        let mut x = b.to_vec();
        for col in (0..self.dim()).rev() {
            let start = self.map.column_offset(col);
            let mut acc = x[col];
            for (k, row) in self.map.column_rows(col).enumerate().skip(1) {
                acc -= self.values[start + k] * x[row];
            }
            x[col] = acc / self.values[start];
        }
        Ok(x)
    }

    /// `T x`.
    pub fn mul_lower(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        let mut out = vec![0.0; self.dim()];
        for (col, &xj) in x.iter().enumerate() {
            let start = self.map.column_offset(col);
            for (k, row) in self.map.column_rows(col).enumerate() {
                out[row] += self.values[start + k] * xj;
            }
        }
        Ok(out)
    }

    /// `Tᵀ x`.
    pub fn mul_upper_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        let out = (0..self.dim())
            .map(|col| {
                let start = self.map.column_offset(col);
                self.map
                    .column_rows(col)
                    .enumerate()
                    .map(|(k, row)| self.values[start + k] * x[row])
                    .sum()
            })
            .collect();
        Ok(out)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::invalid(format!(
                "vector of length {len} does not match factor dimension {}",
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Maps `C*` to `C` by exponentiating the diagonal. Overflow yields `+inf`,
/// which later solves report as a singular factor.
pub fn star_to_factor(cstar: &LowerTri) -> LowerTri {
    let mut out = cstar.clone();
    for i in 0..out.dim() {
        let k = out.map.diag_offset(i);
        out.values[k] = out.values[k].exp();
    }
    out
}

/// Inverse of [`star_to_factor`]; requires a positive diagonal.
pub fn factor_to_star(c: &LowerTri) -> Result<LowerTri> {
    c.check_factor()?;
    let mut out = c.clone();
    for i in 0..out.dim() {
        let k = out.map.diag_offset(i);
        out.values[k] = out.values[k].ln();
    }
    Ok(out)
}

/// Multiplies `v` by `D* = diag{vech(dg(C) + 11ᵀ - I)}`: diagonal positions
/// are scaled by `C_ii`, off-diagonal positions are left alone.
pub fn dstar_scale(c: &LowerTri, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != c.map.len() {
        return Err(Error::invalid(format!(
            "pattern vector of length {} does not match pattern size {}",
            v.len(),
            c.map.len()
        )));
    }
    let mut out = v.to_vec();
    dstar_scale_in_place(c, &mut out);
    Ok(out)
}

pub(crate) fn dstar_scale_in_place(c: &LowerTri, v: &mut [f64]) {
    for i in 0..c.dim() {
        let k = c.map.diag_offset(i);
        v[k] *= c.values[k];
    }
}

/// `vech(u vᵀ)` evaluated only on the positions of `map`.
pub fn pattern_outer_vech(u: &[f64], v: &[f64], map: &IndexMap) -> Result<Vec<f64>> {
    if u.len() != map.dim() || v.len() != map.dim() {
        return Err(Error::invalid(format!(
            "outer product operands of lengths {} and {} do not match dimension {}",
            u.len(),
            v.len(),
            map.dim()
        )));
    }
    Ok(map.positions().map(|(i, j)| u[i] * v[j]).collect())
}
