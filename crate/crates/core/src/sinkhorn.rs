//! Sinkhorn-Knopp projection of a nonnegative square matrix onto the
//! doubly stochastic polytope, by alternately normalizing rows and columns.

use core::fmt;

use nalgebra::DMatrix;

/// Default tolerance on the worst absolute marginal deviation from 1.
pub const DEFAULT_TOL: f64 = 1e-6;

/// Default iteration cap (one iteration = one row pass + one column pass).
pub const DEFAULT_MAX_ITERS: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub enum SinkhornError {
    NotSquare { rows: usize, cols: usize },
    NegativeEntry { row: usize, col: usize, value: f64 },
    /// A row or column sums to zero and cannot be normalized.
    ZeroLine { row: bool, index: usize },
    /// Tolerance not reached within the iteration cap.
    NoConvergence { iters: usize, deviation: f64 },
}

impl fmt::Display for SinkhornError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SinkhornError::NotSquare { rows, cols } => {
                write!(f, "matrix is {rows}x{cols}, expected square")
            }
            SinkhornError::NegativeEntry { row, col, value } => {
                write!(f, "negative entry {value} at ({row}, {col})")
            }
            SinkhornError::ZeroLine { row, index } => {
                let kind = if *row { "row" } else { "column" };
                write!(f, "{kind} {index} sums to zero")
            }
            SinkhornError::NoConvergence { iters, deviation } => write!(
                f,
                "no convergence after {iters} iterations (worst marginal deviation {deviation:.3e})"
            ),
        }
    }
}

/// Project `m` to a doubly stochastic matrix.
///
/// Iterates row normalization followed by column normalization until every
/// row and column sum is within `tol` of 1, returning after the column
/// half-step. Entries must be nonnegative with no all-zero row or column.
pub fn sinkhorn_knopp(
    m: &DMatrix<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<DMatrix<f64>, SinkhornError> {
    let (x, deviation) = sinkhorn_project(m, tol, max_iters)?;
    if deviation <= tol {
        Ok(x)
    } else {
        Err(SinkhornError::NoConvergence {
            iters: max_iters,
            deviation,
        })
    }
}

/// Best-effort Sinkhorn projection: like [`sinkhorn_knopp`] but returns the
/// iterate and its worst marginal deviation even when the tolerance was not
/// reached within the iteration cap.
///
/// Matrices whose mass is forced through near-zero entries (the limit
/// sits on the support boundary) converge only like O(1/iterations), so
/// callers embedding the projection in an outer loop cap the budget and
/// continue with the partial result.
pub fn sinkhorn_project(
    m: &DMatrix<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<(DMatrix<f64>, f64), SinkhornError> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(SinkhornError::NotSquare {
            rows: n,
            cols: m.ncols(),
        });
    }
    for i in 0..n {
        for j in 0..n {
            let v = m[(i, j)];
            if !(v >= 0.0) {
                return Err(SinkhornError::NegativeEntry {
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
    }

    let mut x = m.clone();
    let mut deviation = f64::INFINITY;
    for _ in 0..max_iters {
        for i in 0..n {
            let sum: f64 = x.row(i).iter().sum();
            if sum <= 0.0 {
                return Err(SinkhornError::ZeroLine { row: true, index: i });
            }
            let inv = 1.0 / sum;
            for j in 0..n {
                x[(i, j)] *= inv;
            }
        }
        for j in 0..n {
            let sum: f64 = x.column(j).iter().sum();
            if sum <= 0.0 {
                return Err(SinkhornError::ZeroLine { row: false, index: j });
            }
            let inv = 1.0 / sum;
            for i in 0..n {
                x[(i, j)] *= inv;
            }
        }
        deviation = marginal_deviation(&x);
        if deviation <= tol {
            break;
        }
    }
    Ok((x, deviation))
}

/// Worst absolute deviation of any row or column sum from 1.
pub fn marginal_deviation(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        let s: f64 = m.row(i).iter().sum();
        worst = worst.max((s - 1.0).abs());
    }
    for j in 0..m.ncols() {
        let s: f64 = m.column(j).iter().sum();
        worst = worst.max((s - 1.0).abs());
    }
    worst
}
