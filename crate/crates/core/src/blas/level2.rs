use super::Op;
use crate::error::{Error, Result};

fn check_vector(name: &str, len: usize, n: usize, inc: usize) -> Result<()> {
    if inc == 0 {
        return Err(Error::arg(format!("inc{name} must be positive")));
    }
    if n > 0 && (n - 1) * inc >= len {
        return Err(Error::arg(format!("vector {name} of length {len} too short for n={n} inc={inc}")));
    }
    Ok(())
}

fn check_matrix(m: usize, n: usize, len: usize, lda: usize) -> Result<()> {
    if n > 1 && lda < m {
        return Err(Error::arg(format!("lda = {lda} is smaller than m = {m}")));
    }
    if m > 0 && n > 0 && (m - 1) + (n - 1) * lda >= len {
        return Err(Error::arg("matrix buffer too short"));
    }
    Ok(())
}

/// `y = alpha * op(A) x + beta * y` with `A` stored `m x n`.
#[allow(clippy::too_many_arguments)]
pub fn gemv(
    op: Op,
    m: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    lda: usize,
    x: &[f64],
    incx: usize,
    beta: f64,
    y: &mut [f64],
    incy: usize,
) -> Result<()> {
    let (rows, cols) = match op {
        Op::Normal => (m, n),
        Op::Transpose => (n, m),
        _ => return Err(Error::arg("gemv accepts only Normal or Transpose")),
    };
    check_matrix(m, n, a.len(), lda)?;
    check_vector("x", x.len(), cols, incx)?;
    check_vector("y", y.len(), rows, incy)?;
    for r in 0..rows {
        let mut s = 0.0;
        if alpha != 0.0 {
            for l in 0..cols {
                let aij = if op == Op::Normal { a[r + l * lda] } else { a[l + r * lda] };
                s += aij * x[l * incx];
            }
        }
        let dst = &mut y[r * incy];
        *dst = match (alpha == 0.0, beta == 0.0) {
            (true, true) => 0.0,
            (true, false) => beta * *dst,
            (false, true) => alpha * s,
            (false, false) => alpha * s + beta * *dst,
        };
    }
    Ok(())
}

/// Rank-one update `A += alpha * x y^T` with `A` stored `m x n`.
#[allow(clippy::too_many_arguments)]
pub fn ger(
    m: usize,
    n: usize,
    alpha: f64,
    x: &[f64],
    incx: usize,
    y: &[f64],
    incy: usize,
    a: &mut [f64],
    lda: usize,
) -> Result<()> {
    check_matrix(m, n, a.len(), lda)?;
    check_vector("x", x.len(), m, incx)?;
    check_vector("y", y.len(), n, incy)?;
    if alpha == 0.0 {
        return Ok(());
    }
    for j in 0..n {
        let yj = alpha * y[j * incy];
        for i in 0..m {
            a[i + j * lda] += x[i * incx] * yj;
        }
    }
    Ok(())
}

/// `sum_i x_i y_i`, accumulated in ascending order.
pub fn dot(n: usize, x: &[f64], incx: usize, y: &[f64], incy: usize) -> Result<f64> {
    check_vector("x", x.len(), n, incx)?;
    check_vector("y", y.len(), n, incy)?;
    Ok((0..n).map(|i| x[i * incx] * y[i * incy]).fold(0.0, |s, v| s + v))
}
