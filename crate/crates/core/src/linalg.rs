//! Dense linear algebra for small phase spaces.
//!
//! Arrival-phase generators in this crate are dense and tiny (a handful of
//! phases), so everything here is written for clarity and verifiable error
//! control rather than asymptotic speed:
//!
//! * [`matrix_exponential`] evaluates `exp(A t)` for a subgenerator `A`
//!   (nonnegative off-diagonals, nonpositive diagonals, row sums <= 0) by
//!   uniformization: with `zeta = max |A_ii|` and `P = I + A / zeta`,
//!
//!   ```text
//!       exp(A t) = sum_{l >= 0} e^{-zeta t} (zeta t)^l / l!  *  P^l .
//!   ```
//!
//!   Every summand is entrywise nonnegative and `P` is substochastic, so the
//!   truncated series underestimates each entry by at most the leftover
//!   Poisson tail mass, which is driven below the requested tolerance. Large
//!   `zeta t` is split by exact halving, `exp(A t) = exp(A t/2)^2`, keeping
//!   the per-call series short.
//!
//! * [`perron_eigenpair`] finds the dominant eigenvalue and positive
//!   eigenvector of an entrywise nonnegative matrix by power iteration with
//!   Collatz–Wielandt quotients. Periodic matrices (which make the plain
//!   iteration oscillate) are handled by shifting to `B + cI`, which moves
//!   every eigenvalue by `c` and leaves eigenvectors untouched.
//!
//! Both routines report their achieved residuals so callers can enforce the
//! crate-wide tolerance policy instead of trusting convergence silently.

use thiserror::Error;

/// Errors from dense matrix routines, each naming the violated requirement.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum LinalgError {
    #[error("expected a square matrix or matching dimensions, got {rows}x{cols}")]
    InvalidShape { rows: usize, cols: usize },
    #[error("time argument must be nonnegative, got {0}")]
    NegativeTime(f64),
    #[error("diagonal entry {index} is positive ({value:.6e}); not a subgenerator")]
    PositiveDiagonal { index: usize, value: f64 },
    #[error("off-diagonal entry ({row},{col}) is negative ({value:.6e}); not a subgenerator")]
    NegativeOffDiagonal { row: usize, col: usize, value: f64 },
    #[error("row {row} sums to {sum:.6e} > 0; not a subgenerator")]
    PositiveRowSum { row: usize, sum: f64 },
    #[error("entry ({row},{col}) is negative ({value:.6e}); expected a nonnegative matrix")]
    NotNonnegative { row: usize, col: usize, value: f64 },
    #[error("power iteration stalled after {iters} iterations (residual {residual:.3e})")]
    NotConverged { iters: usize, residual: f64 },
    #[error("linear system is numerically singular at pivot {pivot}")]
    Singular { pivot: usize },
    #[error("exponential series exceeded {cap} terms (zeta*t = {zeta_t:.3e})")]
    SeriesOverflow { cap: usize, zeta_t: f64 },
}

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Zero matrix of the given shape.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Identity of order `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds a matrix from rows, requiring a nonempty rectangular layout.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, LinalgError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
            return Err(LinalgError::InvalidShape { rows: r, cols: c });
        }
        Ok(Self {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// Sum of row `i`.
    pub fn row_sum(&self, i: usize) -> f64 {
        self.data[i * self.cols..(i + 1) * self.cols].iter().sum()
    }

    /// Largest absolute entry (zero for the empty matrix).
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }

    /// `self * other`, requiring inner dimensions to match.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::InvalidShape {
                rows: other.rows,
                cols: other.cols,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    let v = out.get(i, j) + a * other.get(k, j);
                    out.set(i, j, v);
                }
            }
        }
        Ok(out)
    }

    /// `self * x` for a column vector `x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if self.cols != x.len() {
            return Err(LinalgError::InvalidShape {
                rows: x.len(),
                cols: 1,
            });
        }
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            out[i] = (0..self.cols).map(|j| self.get(i, j) * x[j]).sum();
        }
        Ok(out)
    }

    /// Entrywise `self + c * other`, requiring equal shapes.
    pub fn add_scaled(&self, c: f64, other: &Matrix) -> Result<Matrix, LinalgError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(LinalgError::InvalidShape {
                rows: other.rows,
                cols: other.cols,
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + c * b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Entrywise scaling.
    pub fn scaled(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }

    /// Transpose.
    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    /// Largest absolute entrywise difference, for convergence checks.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Dominant eigenpair of a nonnegative matrix, with the achieved residual
/// `max_i |(B u)_i - value * u_i|` under the normalization `max_i u_i = 1`.
#[derive(Debug, Clone)]
pub struct PerronPair {
    /// Spectral radius estimate.
    pub value: f64,
    /// Entrywise positive eigenvector, renormalized so its maximum entry is
    /// exactly `1.0`.
    pub vector: Vec<f64>,
    /// Residual rechecked after the final renormalization.
    pub residual: f64,
}

/// Hard cap on uniformization series length; `zeta t` is halved long before
/// this is reachable, so hitting it indicates a logic error or absurd input.
const SERIES_CAP: usize = 1_000_000;

/// Threshold on `zeta t` beyond which the interval is halved instead of
/// lengthening the series; keeps Poisson weights well inside normal range.
const SPLIT_THRESHOLD: f64 = 200.0;

fn validate_subgenerator(a: &Matrix) -> Result<(), LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::InvalidShape {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            let v = a.get(i, j);
            if i == j && v > 0.0 {
                return Err(LinalgError::PositiveDiagonal { index: i, value: v });
            }
            if i != j && v < 0.0 {
                return Err(LinalgError::NegativeOffDiagonal {
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
        let sum = a.row_sum(i);
        // Row sums may carry rounding from user input; anything clearly
        // positive breaks the substochastic truncation argument.
        if sum > 1e-9 * a.max_abs().max(1.0) {
            return Err(LinalgError::PositiveRowSum { row: i, sum });
        }
    }
    Ok(())
}

/// Evaluates `exp(A t)` for a subgenerator `A` by uniformization.
///
/// `tol` bounds the Poisson tail mass left out of the series, hence the
/// entrywise truncation error of the result. The output is entrywise
/// nonnegative with row sums at most one; for a proper generator (zero row
/// sums) the row sums equal one up to `tol`.
pub fn matrix_exponential(a: &Matrix, t: f64, tol: f64) -> Result<Matrix, LinalgError> {
    validate_subgenerator(a)?;
    if !(t >= 0.0) {
        return Err(LinalgError::NegativeTime(t));
    }
    let n = a.rows();
    if t == 0.0 {
        return Ok(Matrix::identity(n));
    }
    let zeta = (0..n).fold(0.0_f64, |m, i| m.max(a.get(i, i).abs()));
    if zeta == 0.0 {
        // Zero diagonal plus subgenerator rows forces A = 0.
        return Ok(Matrix::identity(n));
    }

    // Halve t until zeta * t is modest, then square back up. Squaring a
    // substochastic nonnegative matrix neither amplifies rounding nor leaves
    // the admissible set.
    let mut halvings = 0u32;
    let mut step = t;
    while zeta * step > SPLIT_THRESHOLD {
        step *= 0.5;
        halvings += 1;
    }
    // Tail tolerance is spent on the shortest interval; squaring at most
    // doubles the entrywise error per level, so pre-divide it out. Flooring
    // at a few epsilon keeps the target reachable in floating point.
    let per_step_tol = (tol / f64::powi(2.0, halvings as i32)).max(4.0 * f64::EPSILON);

    let zt = zeta * step;
    let p = Matrix::identity(n).add_scaled(1.0 / zeta, a)?;
    let mut power = Matrix::identity(n);
    let mut weight = (-zt).exp();
    let mut acc = power.scaled(weight);
    let mut mass = weight;
    let mut l = 0usize;
    while 1.0 - mass > per_step_tol {
        l += 1;
        if l > SERIES_CAP {
            return Err(LinalgError::SeriesOverflow {
                cap: SERIES_CAP,
                zeta_t: zt,
            });
        }
        power = power.matmul(&p)?;
        weight *= zt / l as f64;
        acc = acc.add_scaled(weight, &power)?;
        mass += weight;
        // Past the Poisson mode the weights decay geometrically; once they
        // fall below the resolution of `mass` the accumulated total cannot
        // move further and the tail left out is below that resolution too.
        if l as f64 > zt && weight < f64::EPSILON * 1e-3 {
            break;
        }
    }

    let mut result = acc;
    for _ in 0..halvings {
        result = result.matmul(&result)?;
    }
    Ok(result)
}

/// Dominant eigenpair of an entrywise nonnegative square matrix by power
/// iteration from the all-ones vector.
///
/// Convergence is declared when the residual `max_i |(B u)_i - value u_i|`
/// (with `max u = 1`) falls to `tol`; the residual is rechecked after the
/// final renormalization and reported in the result. Matrices whose
/// iteration collapses onto a nonpositive vector (possible when the matrix
/// is reducible) are reported as [`LinalgError::NotConverged`] rather than
/// returning a vector that violates positivity.
pub fn perron_eigenpair(b: &Matrix, tol: f64, max_iter: usize) -> Result<PerronPair, LinalgError> {
    if !b.is_square() {
        return Err(LinalgError::InvalidShape {
            rows: b.rows(),
            cols: b.cols(),
        });
    }
    let n = b.rows();
    for i in 0..n {
        for j in 0..n {
            let v = b.get(i, j);
            if v < 0.0 {
                return Err(LinalgError::NotNonnegative {
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
    }

    // A zero or deficient diagonal admits periodic classes, on which the
    // plain iteration oscillates; shift by c to break periodicity. The shift
    // moves every eigenvalue by c and preserves eigenvectors exactly.
    let min_diag = (0..n).fold(f64::INFINITY, |m, i| m.min(b.get(i, i)));
    let shift = if min_diag > 0.0 {
        0.0
    } else {
        b.max_abs().max(1.0)
    };
    let m = if shift == 0.0 {
        b.clone()
    } else {
        b.add_scaled(shift, &Matrix::identity(n))?
    };

    let mut u = vec![1.0; n];
    let mut residual = f64::INFINITY;
    let mut value = 0.0;
    for iter in 0..max_iter {
        let y = m.matvec(&u)?;
        let norm = y.iter().fold(0.0_f64, |mx, &v| mx.max(v));
        if norm == 0.0 {
            // B annihilates the positive cone only if B = 0.
            return Ok(PerronPair {
                value: 0.0,
                vector: vec![1.0; n],
                residual: 0.0,
            });
        }
        for (ui, yi) in u.iter_mut().zip(&y) {
            *ui = yi / norm;
        }
        value = norm - shift;
        let bu = b.matvec(&u)?;
        residual = bu
            .iter()
            .zip(&u)
            .fold(0.0_f64, |mx, (bv, uv)| mx.max((bv - value * uv).abs()));
        if residual <= tol {
            let _ = iter;
            break;
        }
    }
    if residual > tol {
        return Err(LinalgError::NotConverged {
            iters: max_iter,
            residual,
        });
    }

    // Renormalize so the maximum entry is exactly 1, then recheck.
    let max_u = u.iter().fold(0.0_f64, |mx, &v| mx.max(v));
    for v in &mut u {
        *v /= max_u;
    }
    let bu = b.matvec(&u)?;
    let residual = bu
        .iter()
        .zip(&u)
        .fold(0.0_f64, |mx, (bv, uv)| mx.max((bv - value * uv).abs()));
    if residual > tol {
        return Err(LinalgError::NotConverged {
            iters: max_iter,
            residual,
        });
    }
    if u.iter().any(|&v| v <= 0.0) {
        // The limit left the positive cone: dominant class unreachable from
        // some coordinate, i.e. the matrix is reducible for our purposes.
        return Err(LinalgError::NotConverged {
            iters: max_iter,
            residual: f64::NAN,
        });
    }
    Ok(PerronPair {
        value,
        vector: u,
        residual,
    })
}

/// Solves `A x = rhs` by Gaussian elimination with partial pivoting.
///
/// Used for the tiny phase-stationary systems; pivot collapse is reported as
/// [`LinalgError::Singular`].
pub(crate) fn solve_linear(a: &Matrix, rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
    if !a.is_square() || a.rows() != rhs.len() {
        return Err(LinalgError::InvalidShape {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.rows();
    let mut m = a.clone();
    let mut b = rhs.to_vec();
    let scale = m.max_abs().max(1.0);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r1, &r2| m.get(r1, col).abs().total_cmp(&m.get(r2, col).abs()))
            .unwrap();
        if m.get(pivot_row, col).abs() <= 1e-14 * scale {
            return Err(LinalgError::Singular { pivot: col });
        }
        if pivot_row != col {
            for j in 0..n {
                let tmp = m.get(col, j);
                m.set(col, j, m.get(pivot_row, j));
                m.set(pivot_row, j, tmp);
            }
            b.swap(col, pivot_row);
        }
        for row in col + 1..n {
            let factor = m.get(row, col) / m.get(col, col);
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                let v = m.get(row, j) - factor * m.get(col, j);
                m.set(row, j, v);
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for j in row + 1..n {
            acc -= m.get(row, j) * x[j];
        }
        x[row] = acc / m.get(row, row);
    }
    Ok(x)
}
