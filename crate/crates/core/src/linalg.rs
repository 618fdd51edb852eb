//! Dense symmetric-matrix helpers shared by the estimators and the oracle.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use ndarray_linalg::{Cholesky, Diag, Eigh, SolveTriangular, UPLO};

use crate::error::{Error, Result};

/// Eigenvalues below this fraction of the largest eigenvalue are treated as zero.
pub const EIG_CLAMP_REL: f64 = 1e-12;

pub fn ensure_square(m: &ArrayView2<f64>) -> Result<usize> {
    let (rows, cols) = m.dim();
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    Ok(rows)
}

pub fn ensure_finite(m: &ArrayView2<f64>, context: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(context))
    }
}

pub fn max_abs(m: &ArrayView2<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn max_asymmetry(m: &ArrayView2<f64>) -> f64 {
    let p = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..p {
        for j in (i + 1)..p {
            worst = worst.max((m[[i, j]] - m[[j, i]]).abs());
        }
    }
    worst
}

/// Rejects matrices whose asymmetry exceeds `rel_tol * max(1, max|entry|)`.
pub fn ensure_symmetric(m: &ArrayView2<f64>, rel_tol: f64) -> Result<()> {
    ensure_square(m)?;
    let asym = max_asymmetry(m);
    if asym > rel_tol * max_abs(m).max(1.0) {
        return Err(Error::NotSymmetric {
            max_asymmetry: asym,
        });
    }
    Ok(())
}

pub fn symmetrize(m: &ArrayView2<f64>) -> Array2<f64> {
    let mut out = m.to_owned();
    let p = out.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            let v = 0.5 * (out[[i, j]] + out[[j, i]]);
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    out
}

pub fn trace(m: &ArrayView2<f64>) -> f64 {
    m.diag().sum()
}

/// Symmetric eigendecomposition with eigenvalues in ascending order.
pub fn sym_eigh(m: &ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let (w, u) = m.eigh(UPLO::Lower)?;
    Ok((w, u))
}

/// Eigendecomposition of a matrix that must be PSD up to `-rel_tol * trace`.
pub fn psd_eigh(m: &ArrayView2<f64>, rel_tol: f64) -> Result<(Array1<f64>, Array2<f64>)> {
    let (w, u) = sym_eigh(m)?;
    let tolerance = rel_tol * trace(m).abs();
    let min = w.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -tolerance {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
            tolerance,
        });
    }
    Ok((clamp_eigenvalues(w), u))
}

/// Zeroes eigenvalues below `EIG_CLAMP_REL * max` (including small negatives).
pub fn clamp_eigenvalues(mut w: Array1<f64>) -> Array1<f64> {
    let max = w.iter().cloned().fold(0.0_f64, f64::max);
    let floor = EIG_CLAMP_REL * max;
    w.mapv_inplace(|v| if v < floor { 0.0 } else { v });
    w
}

/// Subtracts each column's mean, i.e. returns `H_p * C`.
pub fn center_columns(c: &ArrayView2<f64>) -> Array2<f64> {
    let means = c.mean_axis(Axis(0)).expect("non-empty matrix");
    c - &means
}

/// Solves `A X = B` for symmetric positive definite `A` via Cholesky.
pub fn spd_solve(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let l = a.cholesky(UPLO::Lower)?;
    let y = l.solve_triangular(UPLO::Lower, Diag::NonUnit, &b.to_owned())?;
    let x = l
        .t()
        .to_owned()
        .solve_triangular(UPLO::Upper, Diag::NonUnit, &y)?;
    Ok(x)
}

/// Pivoted Cholesky factor `F` (`p x r`) with `F F^T ~= g` for PSD `g`.
///
/// Stops once the trace of the residual drops below `rel_tol * trace(g)`.
/// Returns `None` if that needs more than `max_rank` columns.
pub fn pivoted_cholesky(g: &ArrayView2<f64>, rel_tol: f64, max_rank: usize) -> Option<Array2<f64>> {
    let p = g.nrows();
    let mut d: Vec<f64> = g.diag().to_vec();
    let total: f64 = d.iter().map(|v| v.max(0.0)).sum();
    let stop = rel_tol * total;
    let mut cols: Vec<Array1<f64>> = Vec::new();
    loop {
        let residual: f64 = d.iter().map(|v| v.max(0.0)).sum();
        if residual <= stop {
            break;
        }
        if cols.len() == max_rank {
            return None;
        }
        let (i, &pivot) = d
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty");
        if pivot <= 0.0 {
            break;
        }
        let mut col = g.column(i).to_owned();
        for c in &cols {
            col.scaled_add(-c[i], c);
        }
        col /= pivot.sqrt();
        for (dj, cj) in d.iter_mut().zip(col.iter()) {
            *dj -= cj * cj;
        }
        d[i] = 0.0;
        cols.push(col);
    }
    let mut f = Array2::zeros((p, cols.len()));
    for (k, c) in cols.iter().enumerate() {
        f.column_mut(k).assign(c);
    }
    Some(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn spd_solve_recovers_identity_inverse() {
        let a = array![[4.0, 1.0], [1.0, 3.0]];
        let x = spd_solve(&a.view(), &Array2::eye(2).view()).unwrap();
        let prod = a.dot(&x);
        for ((i, j), v) in prod.indexed_iter() {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-14);
        }
    }

    #[test]
    fn clamp_zeroes_tiny_and_negative() {
        let w = clamp_eigenvalues(array![-1e-18, 1e-15, 2.0]);
        assert_eq!(w, array![0.0, 0.0, 2.0]);
    }

    #[test]
    fn pivoted_cholesky_recovers_low_rank() {
        let a = array![[1.0, 2.0], [0.0, 1.0], [-1.0, 0.5], [2.0, 2.0]];
        let g = a.dot(&a.t());
        let f = pivoted_cholesky(&g.view(), 1e-14, 3).unwrap();
        assert_eq!(f.ncols(), 2);
        let err = (&f.dot(&f.t()) - &g)
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-12);
        assert!(pivoted_cholesky(&g.view(), 1e-14, 1).is_none());
    }

    #[test]
    fn psd_eigh_rejects_indefinite() {
        let m = array![[1.0, 0.0], [0.0, -0.5]];
        assert!(matches!(
            psd_eigh(&m.view(), 1e-8),
            Err(Error::NotPsd { .. })
        ));
    }
}
