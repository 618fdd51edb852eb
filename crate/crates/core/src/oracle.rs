//! Explicit-covariance reference for the conditional metric under linear
//! kernels.
//!
//! With linear feature and label kernels the operators are ordinary
//! matrices, so the conditional covariance can be formed directly and fed to
//! the finite-dimensional Bures distance. The kernel-trick estimator must
//! agree with this to rounding error.

use ndarray::{Array2, ArrayView2};

use crate::datagen::LabeledDataset;
use crate::discrepancy::{self, DiscrepancyReport, MetricKind};
use crate::error::Result;
use crate::linalg;

/// Empirical covariance operators of one domain (feature dim `d`, label dim `K`).
#[derive(Debug, Clone)]
pub struct PrimalOperators {
    /// `d x d`
    pub r_xx: Array2<f64>,
    /// `d x K`
    pub r_xy: Array2<f64>,
    /// `K x K`
    pub r_yy: Array2<f64>,
    /// `R_XX - R_XY (R_YY + eps I)^{-1} R_YX`
    pub r_xx_given_y: Array2<f64>,
}

fn centered_rows(m: &ArrayView2<f64>) -> Array2<f64> {
    // samples are columns; subtract the per-feature mean
    linalg::center_columns(&m.t()).reversed_axes()
}

/// Centered feature covariance `X_c X_c^T / p`.
pub fn feature_covariance(ds: &LabeledDataset) -> Array2<f64> {
    let xc = centered_rows(&ds.features());
    linalg::symmetrize(&(xc.dot(&xc.t()) / ds.len() as f64).view())
}

pub fn primal_operators(ds: &LabeledDataset, eps: f64) -> Result<PrimalOperators> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(crate::Error::InvalidEpsilon(eps));
    }
    let y = ds.require_labels()?;
    let p = ds.len() as f64;
    let xc = centered_rows(&ds.features());
    let yc = centered_rows(&y);
    let r_xx = linalg::symmetrize(&(xc.dot(&xc.t()) / p).view());
    let r_xy = xc.dot(&yc.t()) / p;
    let r_yy = linalg::symmetrize(&(yc.dot(&yc.t()) / p).view());
    let k = r_yy.nrows();
    let reg = &r_yy + &(Array2::<f64>::eye(k) * eps);
    let solved = linalg::spd_solve(&reg.view(), &r_xy.t())?;
    let r_xx_given_y = linalg::symmetrize(&(&r_xx - &r_xy.dot(&solved)).view());
    Ok(PrimalOperators {
        r_xx,
        r_xy,
        r_yy,
        r_xx_given_y,
    })
}

/// Bures distance between the two explicit conditional covariances.
pub fn ckb_sq_primal(
    ds: &LabeledDataset,
    dt: &LabeledDataset,
    eps: f64,
) -> Result<DiscrepancyReport> {
    let ps = primal_operators(ds, eps)?;
    let pt = primal_operators(dt, eps)?;
    if ps.r_xx.dim() != pt.r_xx.dim() {
        return Err(crate::Error::DimensionMismatch {
            context: "feature dimension across domains",
            expected: ps.r_xx.nrows(),
            found: pt.r_xx.nrows(),
        });
    }
    let mut report = discrepancy::bures_sq(&ps.r_xx_given_y.view(), &pt.r_xx_given_y.view())?;
    report.metric_kind = MetricKind::Ckb;
    report.epsilon = Some(eps);
    report.n = ds.len();
    report.m = dt.len();
    Ok(report)
}
