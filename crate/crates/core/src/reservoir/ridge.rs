//! Ridge regression via Cholesky factorization of the regularized normal
//! matrix `HᵀH + λ²I`.

use crate::error::{Error, Result};

/// Solves `(HᵀH + λ²I) w = HᵀU` for row-major `h` of shape `rows × cols`.
pub fn solve_ridge(h: &[f64], rows: usize, cols: usize, u: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if h.len() != rows * cols || u.len() != rows {
        return Err(Error::DimensionMismatch {
            expected: format!("{rows}x{cols} design and {rows} targets"),
            found: format!("{} design entries and {} targets", h.len(), u.len()),
        });
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("ridge lambda must be > 0, got {lambda}")));
    }
    let mut gram = vec![0.0; cols * cols];
    let mut rhs = vec![0.0; cols];
    for (row, &target) in h.chunks_exact(cols).zip(u) {
        for i in 0..cols {
            let ri = row[i];
            if ri == 0.0 {
                continue;
            }
            rhs[i] += ri * target;
            let g = &mut gram[i * cols..(i + 1) * cols];
            for j in i..cols {
                g[j] += ri * row[j];
            }
        }
    }
    let reg = lambda * lambda;
    for i in 0..cols {
        gram[i * cols + i] += reg;
        for j in 0..i {
            gram[i * cols + j] = gram[j * cols + i];
        }
    }
    let w = cholesky_solve(gram, cols, rhs)?;
    if let Some(i) = w.iter().position(|v| !v.is_finite()) {
        return Err(Error::Solve(format!("non-finite coefficient at {i}")));
    }
    Ok(w)
}

/// In-place Cholesky `A = LLᵀ` followed by two triangular solves.
pub(crate) fn cholesky_solve(mut a: Vec<f64>, n: usize, mut b: Vec<f64>) -> Result<Vec<f64>> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) {
            return Err(Error::Solve(format!("normal matrix not positive definite at pivot {j}")));
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    Ok(b)
}
