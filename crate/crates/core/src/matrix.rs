//! Dense matrices over an exact field.
//!
//! Everything here is generic over [`Scalar`]; the scheme instantiates it
//! with GF(2^m) elements and the tests also run it over exact rationals.
//! Indices are 0-based. Packet sets in the placement module are 1-based and
//! are converted at the call site.

use std::fmt;

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Sub-square budget for [`Matrix::is_superregular`].
pub const DEFAULT_SUPERREGULAR_BUDGET: u128 = 10_000_000;

#[derive(Clone, PartialEq)]
pub struct Matrix<T: Scalar> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
    ctx: T::Context,
}

/// Reduced row-echelon form together with the pivot columns.
#[derive(Clone, Debug)]
pub struct Rref<T: Scalar> {
    pub matrix: Matrix<T>,
    pub pivots: Vec<usize>,
}

/// Left null space basis plus whether the input had full column rank.
#[derive(Clone, Debug)]
pub struct LeftNullSpace<T: Scalar> {
    /// Rows form a basis of `{x : x * m = 0}`, in RREF.
    pub basis: Matrix<T>,
    /// `rows(m) - cols(m)`, the dimension for a full-column-rank input.
    pub expected_dim: usize,
    pub full_column_rank: bool,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize, ctx: T::Context) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero_in(ctx); rows * cols],
            ctx,
        }
    }

    pub fn identity(n: usize, ctx: T::Context) -> Self {
        let mut m = Self::zeros(n, n, ctx);
        for i in 0..n {
            m.data[i * n + i] = T::one_in(ctx);
        }
        m
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        ctx: T::Context,
        mut f: impl FnMut(usize, usize) -> T,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let v = f(r, c);
                check_ctx(ctx, &v)?;
                data.push(v);
            }
        }
        Ok(Matrix {
            rows,
            cols,
            data,
            ctx,
        })
    }

    /// Build from row vectors; all rows must have the same length.
    pub fn from_rows(ctx: T::Context, rows: Vec<Vec<T>>) -> Result<Self> {
        let n = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    op: "from_rows",
                    left: (n, cols),
                    right: (1, row.len()),
                });
            }
            for v in row {
                check_ctx(ctx, &v)?;
                data.push(v);
            }
        }
        Ok(Matrix {
            rows: n,
            cols,
            data,
            ctx,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn context(&self) -> T::Context {
        self.ctx
    }

    pub fn get(&self, r: usize, c: usize) -> &T {
        &self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        debug_assert!(v.context() == self.ctx);
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<T> {
        (0..self.rows).map(|r| self.get(r, c).clone()).collect()
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[T]> {
        (0..self.rows).map(move |r| self.row(r))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(Scalar::is_zero)
    }

    pub fn is_column_zero(&self, c: usize) -> bool {
        (0..self.rows).all(|r| self.get(r, c).is_zero())
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                data.push(self.get(r, c).clone());
            }
        }
        Matrix {
            rows: self.cols,
            cols: self.rows,
            data,
            ctx: self.ctx,
        }
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.ctx != rhs.ctx || self.cols != rhs.rows {
            return Err(Error::DimensionMismatch {
                op: "matmul",
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let zero = T::zero_in(self.ctx);
        let mut out = Self::zeros(self.rows, rhs.cols, self.ctx);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    let b = rhs.get(k, j);
                    if b.is_zero() {
                        continue;
                    }
                    let idx = i * rhs.cols + j;
                    let cur = std::mem::replace(&mut out.data[idx], zero.clone());
                    out.data[idx] = cur + a.clone() * b.clone();
                }
            }
        }
        Ok(out)
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        if self.ctx != rhs.ctx || self.shape() != rhs.shape() {
            return Err(Error::DimensionMismatch {
                op: "sub",
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| a.clone() - b.clone())
            .collect();
        Ok(Matrix {
            data,
            ..self.clone()
        })
    }

    /// Rows and columns picked in the given order (0-based).
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Result<Self> {
        for &r in rows {
            if r >= self.rows {
                return Err(Error::IndexOutOfRange {
                    index: r,
                    bound: self.rows,
                });
            }
        }
        for &c in cols {
            if c >= self.cols {
                return Err(Error::IndexOutOfRange {
                    index: c,
                    bound: self.cols,
                });
            }
        }
        let mut data = Vec::with_capacity(rows.len() * cols.len());
        for &r in rows {
            for &c in cols {
                data.push(self.get(r, c).clone());
            }
        }
        Ok(Matrix {
            rows: rows.len(),
            cols: cols.len(),
            data,
            ctx: self.ctx,
        })
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let cols: Vec<usize> = (0..self.cols).collect();
        self.submatrix(rows, &cols)
    }

    pub fn select_cols(&self, cols: &[usize]) -> Result<Self> {
        let rows: Vec<usize> = (0..self.rows).collect();
        self.submatrix(&rows, cols)
    }

    /// Rows `start..end`.
    pub fn row_range(&self, start: usize, end: usize) -> Result<Self> {
        let rows: Vec<usize> = (start..end).collect();
        self.select_rows(&rows)
    }

    /// Stack blocks vertically. An empty list has no defined width, so the
    /// caller passes it.
    pub fn vstack(blocks: &[Self], cols: usize, ctx: T::Context) -> Result<Self> {
        let mut data = Vec::new();
        let mut rows = 0;
        for b in blocks {
            if b.cols != cols || b.ctx != ctx {
                return Err(Error::DimensionMismatch {
                    op: "vstack",
                    left: (rows, cols),
                    right: b.shape(),
                });
            }
            data.extend_from_slice(&b.data);
            rows += b.rows;
        }
        Ok(Matrix {
            rows,
            cols,
            data,
            ctx,
        })
    }

    pub fn hstack(&self, rhs: &Self) -> Result<Self> {
        if self.rows != rhs.rows || self.ctx != rhs.ctx {
            return Err(Error::DimensionMismatch {
                op: "hstack",
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let mut data = Vec::with_capacity(self.data.len() + rhs.data.len());
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(rhs.row(r));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols + rhs.cols,
            data,
            ctx: self.ctx,
        })
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for c in 0..self.cols {
            self.data.swap(a * self.cols + c, b * self.cols + c);
        }
    }

    fn scale_row(&mut self, r: usize, factor: &T) {
        for c in 0..self.cols {
            let idx = r * self.cols + c;
            self.data[idx] = self.data[idx].clone() * factor.clone();
        }
    }

    /// `row[target] -= factor * row[source]`
    fn eliminate(&mut self, target: usize, source: usize, factor: &T) {
        for c in 0..self.cols {
            let s = self.data[source * self.cols + c].clone();
            if s.is_zero() {
                continue;
            }
            let idx = target * self.cols + c;
            self.data[idx] = self.data[idx].clone() - factor.clone() * s;
        }
    }

    /// Gauss-Jordan elimination restricted to the first `limit` columns;
    /// pivot is the first nonzero entry in each column.
    fn rref_in_place(&mut self, limit: usize) -> Vec<usize> {
        let mut pivots = Vec::new();
        let mut row = 0;
        for col in 0..limit {
            if row == self.rows {
                break;
            }
            let Some(p) = (row..self.rows).find(|&r| !self.get(r, col).is_zero()) else {
                continue;
            };
            self.swap_rows(row, p);
            let inv = self.get(row, col).try_inverse().expect("nonzero pivot");
            self.scale_row(row, &inv);
            for r in 0..self.rows {
                if r != row {
                    let factor = self.get(r, col).clone();
                    if !factor.is_zero() {
                        self.eliminate(r, row, &factor);
                    }
                }
            }
            pivots.push(col);
            row += 1;
        }
        pivots
    }

    pub fn rref(&self) -> Rref<T> {
        let mut m = self.clone();
        let pivots = m.rref_in_place(self.cols);
        Rref { matrix: m, pivots }
    }

    pub fn rank(&self) -> usize {
        self.rref().pivots.len()
    }

    pub fn inverse(&self) -> Result<Self> {
        if self.rows != self.cols {
            return Err(Error::DimensionMismatch {
                op: "inverse",
                left: self.shape(),
                right: self.shape(),
            });
        }
        let n = self.rows;
        let mut aug = self.hstack(&Self::identity(n, self.ctx))?;
        let pivots = aug.rref_in_place(n);
        if pivots.len() < n {
            return Err(Error::Singular {
                pivot_row: first_gap(&pivots),
            });
        }
        let right: Vec<usize> = (n..2 * n).collect();
        aug.select_cols(&right)
    }

    /// Solve `self * x = rhs` for square `self`.
    pub fn solve(&self, rhs: &Self) -> Result<Self> {
        if self.rows != self.cols || rhs.rows != self.rows {
            return Err(Error::DimensionMismatch {
                op: "solve",
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let n = self.rows;
        let mut aug = self.hstack(rhs)?;
        let pivots = aug.rref_in_place(n);
        if pivots.len() < n {
            return Err(Error::Singular {
                pivot_row: first_gap(&pivots),
            });
        }
        let right: Vec<usize> = (n..n + rhs.cols).collect();
        aug.select_cols(&right)
    }

    /// Basis (as rows) of `{x : self * x = 0}`, in RREF.
    pub fn right_null_space(&self) -> Self {
        let Rref { matrix, pivots } = self.rref();
        let free: Vec<usize> = (0..self.cols).filter(|c| !pivots.contains(c)).collect();
        let mut basis = Self::zeros(free.len(), self.cols, self.ctx);
        for (i, &f) in free.iter().enumerate() {
            basis.set(i, f, T::one_in(self.ctx));
            for (r, &p) in pivots.iter().enumerate() {
                basis.set(i, p, -matrix.get(r, f).clone());
            }
        }
        basis.rref().matrix
    }

    /// Basis (as rows) of `{x : x * self = 0}`, in RREF.
    pub fn left_null_space(&self) -> LeftNullSpace<T> {
        let basis = self.transpose().right_null_space();
        let expected_dim = self.rows.saturating_sub(self.cols);
        LeftNullSpace {
            full_column_rank: self.rows >= self.cols && basis.rows == expected_dim,
            basis,
            expected_dim,
        }
    }

    /// Number of square submatrices of all sizes.
    pub fn sub_square_count(&self) -> u128 {
        let k = self.rows.min(self.cols);
        (1..=k)
            .map(|s| binomial(self.rows, s).saturating_mul(binomial(self.cols, s)))
            .fold(0u128, u128::saturating_add)
    }

    /// True iff every square submatrix is invertible. Exhaustive; refuses
    /// inputs with more than `budget` sub-squares.
    pub fn is_superregular(&self, budget: u128) -> Result<bool> {
        let count = self.sub_square_count();
        if count > budget {
            return Err(Error::BudgetExceeded {
                count,
                limit: budget,
            });
        }
        if self.data.iter().any(Scalar::is_zero) {
            return Ok(false);
        }
        for size in 2..=self.rows.min(self.cols) {
            for rows in (0..self.rows).combinations(size) {
                for cols in (0..self.cols).combinations(size) {
                    let sq = self.submatrix(&rows, &cols)?;
                    if sq.rank() < size {
                        return Ok(false);
                    }
                }
            }
        }
        Ok(true)
    }
}

fn first_gap(pivots: &[usize]) -> usize {
    pivots
        .iter()
        .enumerate()
        .find(|(i, &p)| *i != p)
        .map_or(pivots.len(), |(i, _)| i)
}

fn check_ctx<T: Scalar>(ctx: T::Context, v: &T) -> Result<()> {
    if v.context() != ctx {
        return Err(Error::DimensionMismatch {
            op: "field context",
            left: (0, 0),
            right: (0, 0),
        });
    }
    Ok(())
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

impl<T: Scalar> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for row in self.iter_rows() {
            writeln!(f, "  {row:?}")?;
        }
        write!(f, "]")
    }
}
