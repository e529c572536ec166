//! Small dense helpers shared by the filters and the metrics.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub fn symmetrize(p: &DMatrix<f64>) -> DMatrix<f64> {
    (p + p.transpose()) * 0.5
}

/// Cholesky factorization of the symmetrized matrix, or a numerical error
/// naming `what`.
pub fn spd_cholesky(p: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if !p.is_square() {
        return Err(Error::dim(format!("{what} is {}x{}, expected square", p.nrows(), p.ncols())));
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("{what} has non-finite entries")));
    }
    Cholesky::new(symmetrize(p))
        .ok_or_else(|| Error::Numerical(format!("{what} is not positive definite")))
}

pub fn is_spd(p: &DMatrix<f64>) -> bool {
    spd_cholesky(p, "matrix").is_ok()
}

/// Lower-triangular `L` with `L Lᵀ = P` for symmetric positive semi-definite
/// `P`. Columns whose pivot falls below `tol` are zeroed, so singular
/// covariances such as `diag(0, q)` are accepted.
pub fn psd_sqrt_lower(p: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let n = p.nrows();
    if !p.is_square() {
        return Err(Error::dim("covariance must be square"));
    }
    let a = symmetrize(p);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -tol {
            return Err(Error::Numerical(format!(
                "covariance is not positive semi-definite (pivot {d:e} at {j})"
            )));
        }
        if d <= tol {
            continue;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Checks symmetry and that the smallest eigenvalue is at least `-tol`.
pub fn check_psd(p: &DMatrix<f64>, what: &str, tol: f64) -> Result<()> {
    if !p.is_square() {
        return Err(Error::dim(format!("{what} must be square")));
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("{what} has non-finite entries")));
    }
    let scale = p.amax().max(1.0);
    if (p - p.transpose()).amax() > 1e-10 * scale {
        return Err(Error::Validation(format!("{what} is not symmetric")));
    }
    let eig = symmetrize(p).symmetric_eigenvalues();
    if eig.iter().any(|&e| e < -tol) {
        return Err(Error::Validation(format!("{what} is not positive semi-definite")));
    }
    Ok(())
}

pub fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::dim("ragged matrix rows"));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn vector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Row-major flattening.
pub fn flatten_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psd_sqrt_handles_singular_covariance() {
        let q = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1e-4]);
        let l = psd_sqrt_lower(&q, 1e-15).unwrap();
        assert!((&l * l.transpose() - &q).amax() < 1e-18);
        assert_eq!(l[(0, 0)], 0.0);
    }

    #[test]
    fn psd_sqrt_rejects_indefinite() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(psd_sqrt_lower(&q, 1e-12).is_err());
    }

    #[test]
    fn cholesky_of_zero_fails() {
        assert!(spd_cholesky(&DMatrix::zeros(1, 1), "S").is_err());
    }
}
