//! Bures-type discrepancies between (conditional) covariance operators.
//!
//! All estimators here work from Gram matrices only. For the conditional
//! metric each domain contributes a regularized conditioning matrix
//! `B = eps*p (G_Y + eps*p I)^{-1}` with a factor `C C^T = B`, and the metric
//! splits into two trace terms and one nuclear-norm cross term:
//!
//! ```text
//! d^2 = eps tr[G_X^s (eps n I + G_Y^s)^{-1}] + eps tr[G_X^t (eps m I + G_Y^t)^{-1}]
//!       - 2/sqrt(nm) || (H_m C_t)^T K_ts (H_n C_s) ||_*
//! ```

use ndarray::{Array1, Array2, ArrayView2, Axis};
use ndarray_linalg::{Cholesky, SVD, UPLO};
use serde::{Deserialize, Serialize};

use crate::datagen::LabeledDataset;
use crate::error::{Error, Result};
use crate::kernels::{self, Bandwidths, GramBundle, KernelSpec};
use crate::linalg;

/// Regularization used when none is given.
pub const DEFAULT_EPSILON: f64 = 1e-2;

/// Relative tolerance on symmetry of matrix inputs.
const SYM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Bures,
    KernelBures,
    Ckb,
    MmdLabel,
}

/// How the conditioning matrix `B` is split into `C C^T`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factorization {
    #[default]
    Evd,
    Cholesky,
    /// Symmetric square root of `B` built from a pivoted-Cholesky factor of
    /// `G_Y` and the Woodbury identity, in `O(p^2 r)` for a rank-`r` label
    /// Gram. Falls back to [`Factorization::Cholesky`] when `G_Y` is not of
    /// low rank.
    LowRank,
}

/// Per-term breakdown; `value = trace_source + trace_target - 2 * cross_term`.
///
/// For the label MMD the "trace" slots hold the mean within-domain kernel
/// values and `cross_term` the mean cross-domain kernel value. For the
/// finite-dimensional Bures metric `n` and `m` are the matrix orders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscrepancyReport {
    pub metric_kind: MetricKind,
    pub trace_source: f64,
    pub trace_target: f64,
    pub cross_term: f64,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factorization: Option<Factorization>,
    pub bandwidths: Bandwidths,
    pub n: usize,
    pub m: usize,
}

impl DiscrepancyReport {
    fn assemble(
        metric_kind: MetricKind,
        trace_source: f64,
        trace_target: f64,
        cross_term: f64,
        n: usize,
        m: usize,
    ) -> Result<Self> {
        let value = trace_source + trace_target - 2.0 * cross_term;
        if !value.is_finite() {
            return Err(Error::NonFinite("discrepancy value"));
        }
        Ok(Self {
            metric_kind,
            trace_source,
            trace_target,
            cross_term,
            value,
            epsilon: None,
            factorization: None,
            bandwidths: Bandwidths::default(),
            n,
            m,
        })
    }

    /// Scale used by the tolerance checks: `trace_source + trace_target + 1`.
    pub fn scale(&self) -> f64 {
        self.trace_source.abs() + self.trace_target.abs() + 1.0
    }
}

fn check_epsilon(eps: f64) -> Result<()> {
    if eps.is_finite() && eps > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidEpsilon(eps))
    }
}

fn from_eigen(w: &Array1<f64>, u: &Array2<f64>, f: impl Fn(f64) -> f64) -> Array2<f64> {
    let scaled = u * &w.mapv(f);
    let out = scaled.dot(&u.t());
    linalg::symmetrize(&out.view())
}

/// Unique PSD square root via symmetric EVD with eigenvalue clamping.
pub fn psd_sqrt(m: &ArrayView2<f64>) -> Result<Array2<f64>> {
    linalg::ensure_symmetric(m, SYM_TOL)?;
    linalg::ensure_finite(m, "psd_sqrt input")?;
    let (w, u) = linalg::psd_eigh(m, 1e-8)?;
    Ok(from_eigen(&w, &u, f64::sqrt))
}

/// Sum of singular values.
pub fn nuclear_norm(m: &ArrayView2<f64>) -> Result<f64> {
    linalg::ensure_finite(m, "nuclear_norm input")?;
    if m.is_empty() {
        return Ok(0.0);
    }
    let (_, s, _) = m.svd(false, false)?;
    Ok(s.sum())
}

/// Squared Bures distance `tr(A + B - 2 (A^{1/2} B A^{1/2})^{1/2})`.
pub fn bures_sq(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Result<DiscrepancyReport> {
    for m in [a, b] {
        linalg::ensure_symmetric(m, SYM_TOL)?;
        linalg::ensure_finite(m, "bures input")?;
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            context: "bures_sq",
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    let (wa, ua) = linalg::psd_eigh(a, 1e-10)?;
    linalg::psd_eigh(b, 1e-10)?;
    let sqrt_a = from_eigen(&wa, &ua, f64::sqrt);
    let inner = linalg::symmetrize(&sqrt_a.dot(b).dot(&sqrt_a).view());
    let (wi, _) = linalg::psd_eigh(&inner.view(), 1e-8)?;
    let cross = wi.iter().map(|v| v.sqrt()).sum();
    let d = a.nrows();
    DiscrepancyReport::assemble(
        MetricKind::Bures,
        linalg::trace(a),
        linalg::trace(b),
        cross,
        d,
        d,
    )
}

/// `B = eps*p (G_Y + eps*p I)^{-1}` via a Cholesky solve.
pub fn b_matrix(gy: &ArrayView2<f64>, eps: f64) -> Result<Array2<f64>> {
    check_epsilon(eps)?;
    let p = linalg::ensure_square(gy)?;
    linalg::ensure_symmetric(gy, SYM_TOL)?;
    let reg = eps * p as f64;
    let a = gy + &(Array2::<f64>::eye(p) * reg);
    let rhs = Array2::<f64>::eye(p) * reg;
    let b = linalg::spd_solve(&a.view(), &rhs.view())?;
    Ok(linalg::symmetrize(&b.view()))
}

/// `B = I - (1/(p eps)) [G_Y - G_Y (G_Y + eps*p I)^{-1} G_Y]`, the defining
/// expression of the conditioning matrix. Used to cross-check [`b_matrix`].
pub fn b_matrix_defining(gy: &ArrayView2<f64>, eps: f64) -> Result<Array2<f64>> {
    check_epsilon(eps)?;
    let p = linalg::ensure_square(gy)?;
    linalg::ensure_symmetric(gy, SYM_TOL)?;
    let reg = eps * p as f64;
    let a = gy + &(Array2::<f64>::eye(p) * reg);
    let solved = linalg::spd_solve(&a.view(), gy)?;
    let inner = gy - &gy.dot(&solved);
    let b = Array2::<f64>::eye(p) - inner / reg;
    Ok(linalg::symmetrize(&b.view()))
}

/// `C = U sqrt(D)` from the EVD of `B`; columns whose eigenvalue is clamped
/// to zero are dropped.
pub fn c_factor(b: &ArrayView2<f64>) -> Result<Array2<f64>> {
    linalg::ensure_symmetric(b, SYM_TOL)?;
    let (w, u) = linalg::psd_eigh(b, 1e-8)?;
    let keep: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 0.0).collect();
    let u = u.select(Axis(1), &keep);
    let w = w.select(Axis(0), &keep);
    Ok(u * &w.mapv(f64::sqrt))
}

/// Lower Cholesky factor of `B`.
pub fn c_factor_cholesky(b: &ArrayView2<f64>) -> Result<Array2<f64>> {
    linalg::ensure_symmetric(b, SYM_TOL)?;
    Ok(b.cholesky(UPLO::Lower)?)
}

fn factor(b: &ArrayView2<f64>, how: Factorization) -> Result<Array2<f64>> {
    match how {
        Factorization::Evd => c_factor(b),
        Factorization::Cholesky | Factorization::LowRank => c_factor_cholesky(b),
    }
}

/// Residual trace (relative) accepted when factoring a label Gram.
const LOW_RANK_TOL: f64 = 1e-13;

/// `B = I - R D R^T` and its symmetric square root `I - R W R^T` for one
/// domain, with `R = F V` from `F F^T = G_Y` and `F^T F = V diag(lambda) V^T`.
struct LowRankB {
    r: Array2<f64>,
    /// `1 / (lambda + eps p)`
    d: Array1<f64>,
    /// `1 / ((lambda + c)(1 + sqrt(c / (lambda + c))))` with `c = eps p`
    w: Array1<f64>,
}

fn low_rank_b(gy: &ArrayView2<f64>, eps: f64) -> Result<Option<LowRankB>> {
    let p = linalg::ensure_square(gy)?;
    linalg::ensure_symmetric(gy, SYM_TOL)?;
    let Some(f) = linalg::pivoted_cholesky(gy, LOW_RANK_TOL, (p / 8).max(1)) else {
        return Ok(None);
    };
    let c = eps * p as f64;
    let (lambda, v) = linalg::sym_eigh(&f.t().dot(&f).view())?;
    let lambda = lambda.mapv(|l| l.max(0.0));
    let d = lambda.mapv(|l| 1.0 / (l + c));
    let w = lambda.mapv(|l| 1.0 / ((l + c) * (1.0 + (c / (l + c)).sqrt())));
    Ok(Some(LowRankB { r: f.dot(&v), d, w }))
}

fn low_rank_trace(gx: &ArrayView2<f64>, lr: &LowRankB) -> f64 {
    let p = gx.nrows() as f64;
    let gr = gx.dot(&lr.r);
    let correction: f64 = (0..lr.d.len())
        .map(|i| lr.d[i] * lr.r.column(i).dot(&gr.column(i)))
        .sum();
    (linalg::trace(gx) - correction) / p
}

/// Trace and cross terms via low-rank label Grams, or `None` if either
/// label Gram is not of low rank.
fn low_rank_terms(
    gx_s: &ArrayView2<f64>,
    gy_s: &ArrayView2<f64>,
    gx_t: &ArrayView2<f64>,
    gy_t: &ArrayView2<f64>,
    k_ts: &ArrayView2<f64>,
    eps: f64,
) -> Result<Option<(f64, f64, f64)>> {
    check_epsilon(eps)?;
    let (n, m) = (gx_s.nrows(), gx_t.nrows());
    let (Some(bs), Some(bt)) = (low_rank_b(gy_s, eps)?, low_rank_b(gy_t, eps)?) else {
        return Ok(None);
    };
    let trace_s = low_rank_trace(gx_s, &bs);
    let trace_t = low_rank_trace(gx_t, &bt);
    // H C = H - (H L) R^T with L = R diag(w)
    let hl_s = linalg::center_columns(&(&bs.r * &bs.w).view());
    let hl_t = linalg::center_columns(&(&bt.r * &bt.w).view());
    let a_s = k_ts.dot(&hl_s);
    let a_t = hl_t.t().dot(k_ts);
    let core = a_t.dot(&hl_s);
    let mut inner = double_center(k_ts);
    inner -= &linalg::center_columns(&a_s.view()).dot(&bs.r.t());
    inner -= &bt.r.dot(&linalg::center_columns(&a_t.t()).t());
    inner += &bt.r.dot(&core).dot(&bs.r.t());
    let cross = nuclear_norm(&inner.view())? / ((n * m) as f64).sqrt();
    Ok(Some((trace_s, trace_t, cross)))
}

/// Intermediate quantities of the conditional estimator, kept for gradients.
#[derive(Debug, Clone)]
pub(crate) struct CkbParts {
    pub b_s: Array2<f64>,
    pub b_t: Array2<f64>,
    /// `H_n C_s`
    pub hc_s: Array2<f64>,
    /// `H_m C_t`
    pub hc_t: Array2<f64>,
    /// `(H_m C_t)^T K_ts (H_n C_s)`
    pub inner: Array2<f64>,
    pub trace_s: f64,
    pub trace_t: f64,
    pub cross: f64,
}

pub(crate) fn ckb_parts(
    gx_s: &ArrayView2<f64>,
    gy_s: &ArrayView2<f64>,
    gx_t: &ArrayView2<f64>,
    gy_t: &ArrayView2<f64>,
    k_ts: &ArrayView2<f64>,
    eps: f64,
    how: Factorization,
) -> Result<CkbParts> {
    check_epsilon(eps)?;
    let (n, m) = (gx_s.nrows(), gx_t.nrows());
    if k_ts.dim() != (m, n) {
        return Err(Error::DimensionMismatch {
            context: "cross gram",
            expected: m,
            found: k_ts.nrows(),
        });
    }
    let b_s = b_matrix(gy_s, eps)?;
    let b_t = b_matrix(gy_t, eps)?;
    // eps tr[G_X (eps p I + G_Y)^{-1}] = tr(G_X B) / p
    let trace_s = (gx_s * &b_s).sum() / n as f64;
    let trace_t = (gx_t * &b_t).sum() / m as f64;
    let hc_s = linalg::center_columns(&factor(&b_s.view(), how)?.view());
    let hc_t = linalg::center_columns(&factor(&b_t.view(), how)?.view());
    let inner = hc_t.t().dot(&k_ts.dot(&hc_s));
    let cross = nuclear_norm(&inner.view())? / ((n * m) as f64).sqrt();
    Ok(CkbParts {
        b_s,
        b_t,
        hc_s,
        hc_t,
        inner,
        trace_s,
        trace_t,
        cross,
    })
}

pub fn ckb_from_bundle(
    bundle: &GramBundle,
    eps: f64,
    how: Factorization,
) -> Result<DiscrepancyReport> {
    if how == Factorization::LowRank {
        if let Some((ts, tt, cross)) = low_rank_terms(
            &bundle.gx_s.view(),
            &bundle.gy_s.view(),
            &bundle.gx_t.view(),
            &bundle.gy_t.view(),
            &bundle.k_ts.view(),
            eps,
        )? {
            let mut report =
                DiscrepancyReport::assemble(MetricKind::Ckb, ts, tt, cross, bundle.n, bundle.m)?;
            report.epsilon = Some(eps);
            report.factorization = Some(how);
            report.bandwidths = bundle.bandwidths;
            return Ok(report);
        }
    }
    let parts = ckb_parts(
        &bundle.gx_s.view(),
        &bundle.gy_s.view(),
        &bundle.gx_t.view(),
        &bundle.gy_t.view(),
        &bundle.k_ts.view(),
        eps,
        how,
    )?;
    let mut report = DiscrepancyReport::assemble(
        MetricKind::Ckb,
        parts.trace_s,
        parts.trace_t,
        parts.cross,
        bundle.n,
        bundle.m,
    )?;
    report.epsilon = Some(eps);
    report.factorization = Some(how);
    report.bandwidths = bundle.bandwidths;
    Ok(report)
}

/// Empirical conditional kernel Bures metric with EVD factors.
pub fn ckb_sq(
    ds: &LabeledDataset,
    dt: &LabeledDataset,
    spec_x: &KernelSpec,
    spec_y: &KernelSpec,
    eps: f64,
) -> Result<DiscrepancyReport> {
    ckb_sq_with(ds, dt, spec_x, spec_y, eps, Factorization::Evd)
}

pub fn ckb_sq_with(
    ds: &LabeledDataset,
    dt: &LabeledDataset,
    spec_x: &KernelSpec,
    spec_y: &KernelSpec,
    eps: f64,
    how: Factorization,
) -> Result<DiscrepancyReport> {
    check_epsilon(eps)?;
    let bundle = kernels::build_gram_bundle(ds, dt, spec_x, spec_y)?;
    ckb_from_bundle(&bundle, eps, how)
}

/// `H_m K H_n` for a rectangular matrix.
fn double_center(k: &ArrayView2<f64>) -> Array2<f64> {
    let row_means = k.mean_axis(Axis(1)).expect("non-empty");
    let col_means = k.mean_axis(Axis(0)).expect("non-empty");
    let grand = row_means.mean().expect("non-empty");
    let mut out = k.to_owned();
    for ((i, j), v) in out.indexed_iter_mut() {
        *v = (*v - (row_means[i] + col_means[j])) + grand;
    }
    out
}

/// Kernel Bures metric between the marginal feature covariance operators.
pub fn kernel_bures_sq(
    ds: &LabeledDataset,
    dt: &LabeledDataset,
    spec_x: &KernelSpec,
) -> Result<DiscrepancyReport> {
    let fg = kernels::feature_grams(ds, dt, spec_x)?;
    let (n, m) = (fg.n(), fg.m());
    let trace_s = linalg::trace(&fg.gx_s.view()) / n as f64;
    let trace_t = linalg::trace(&fg.gx_t.view()) / m as f64;
    let cross = nuclear_norm(&double_center(&fg.k_ts.view()).view())? / ((n * m) as f64).sqrt();
    let mut report =
        DiscrepancyReport::assemble(MetricKind::KernelBures, trace_s, trace_t, cross, n, m)?;
    report.bandwidths = Bandwidths {
        x_source: fg.kernel_source.sigma2(),
        x_target: fg.kernel_target.sigma2(),
        x_cross: fg.kernel_cross.sigma2(),
        ..Bandwidths::default()
    };
    Ok(report)
}

/// Squared MMD between the label mean embeddings of two domains.
pub fn label_mmd_sq(
    ys: &ArrayView2<f64>,
    yt: &ArrayView2<f64>,
    spec_y: &KernelSpec,
) -> Result<DiscrepancyReport> {
    if ys.nrows() != yt.nrows() {
        return Err(Error::DimensionMismatch {
            context: "label dimension across domains",
            expected: ys.nrows(),
            found: yt.nrows(),
        });
    }
    for y in [ys, yt] {
        if y.ncols() == 0 {
            return Err(Error::TooFewSamples {
                context: "label_mmd_sq",
                needed: 1,
                found: 0,
            });
        }
        crate::datagen::validate_label_columns(y)?;
    }
    spec_y.validate()?;
    let k_s = spec_y.resolve_or_unit(ys, ys)?;
    let k_t = spec_y.resolve_or_unit(yt, yt)?;
    let k_ts = spec_y.resolve_or_unit(yt, ys)?;
    let mean_s = kernels::gram(ys, ys, &k_s)?.mean().expect("non-empty");
    let mean_t = kernels::gram(yt, yt, &k_t)?.mean().expect("non-empty");
    let mean_ts = kernels::gram(yt, ys, &k_ts)?.mean().expect("non-empty");
    let mut report = DiscrepancyReport::assemble(
        MetricKind::MmdLabel,
        mean_s,
        mean_t,
        mean_ts,
        ys.ncols(),
        yt.ncols(),
    )?;
    report.bandwidths = Bandwidths {
        y_source: k_s.sigma2(),
        y_target: k_t.sigma2(),
        y_cross: k_ts.sigma2(),
        ..Bandwidths::default()
    };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn psd_sqrt_examples() {
        let r = psd_sqrt(&array![[4.0, 0.0], [0.0, 9.0]].view()).unwrap();
        assert!(close(r[[0, 0]], 2.0, 1e-14) && close(r[[1, 1]], 3.0, 1e-14));
        assert!(r[[0, 1]].abs() < 1e-14);
        let eye = Array2::<f64>::eye(3);
        let r = psd_sqrt(&eye.view()).unwrap();
        assert!((&r - &eye).iter().all(|v| v.abs() < 1e-14));
        assert!(matches!(
            psd_sqrt(&array![[1.0, 0.0], [0.0, -1.0]].view()),
            Err(Error::NotPsd { .. })
        ));
    }

    #[test]
    fn bures_examples() {
        let a = array![[2.0, 0.0], [0.0, 3.0]];
        assert!(bures_sq(&a.view(), &a.view()).unwrap().value.abs() < 1e-12);
        let r = bures_sq(&array![[4.0]].view(), &array![[1.0]].view()).unwrap();
        assert!(close(r.value, 1.0, 1e-14));
        assert!(matches!(
            bures_sq(&array![[1.0, 0.5], [0.0, 1.0]].view(), &a.view()),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn nuclear_norm_examples() {
        assert!(close(
            nuclear_norm(&array![[3.0, 0.0], [0.0, -4.0]].view()).unwrap(),
            7.0,
            1e-14
        ));
        assert_eq!(
            nuclear_norm(&Array2::<f64>::zeros((3, 2)).view()).unwrap(),
            0.0
        );
        assert!(matches!(
            nuclear_norm(&array![[f64::NAN]].view()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn b_matrix_examples() {
        let b = b_matrix(&Array2::<f64>::zeros((3, 3)).view(), 0.3).unwrap();
        assert!((&b - &Array2::<f64>::eye(3))
            .iter()
            .all(|v| v.abs() < 1e-15));
        let b = b_matrix(&Array2::<f64>::eye(2).view(), 1.0).unwrap();
        let want = Array2::<f64>::eye(2) * (2.0 / 3.0);
        assert!((&b - &want).iter().all(|v| v.abs() < 1e-15));
        for eps in [0.0, -1.0, f64::INFINITY] {
            assert!(matches!(
                b_matrix(&Array2::<f64>::eye(2).view(), eps),
                Err(Error::InvalidEpsilon(_))
            ));
        }
    }

    #[test]
    fn c_factor_examples() {
        let eye = Array2::<f64>::eye(3);
        let c = c_factor(&eye.view()).unwrap();
        assert!((&c.dot(&c.t()) - &eye).iter().all(|v| v.abs() < 1e-14));
        let b = array![[4.0, 0.0], [0.0, 1.0]];
        for c in [
            c_factor(&b.view()).unwrap(),
            c_factor_cholesky(&b.view()).unwrap(),
        ] {
            assert!((&c.dot(&c.t()) - &b).iter().all(|v| v.abs() < 1e-14));
        }
    }

    #[test]
    fn factorizations_agree() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let spec = KernelSpec::gaussian_adaptive();
        for _ in 0..3 {
            let ds = crate::datagen::random_labeled(&mut rng, "s", 3, 2, 40).unwrap();
            let dt = crate::datagen::random_labeled(&mut rng, "t", 3, 2, 33).unwrap();
            let values: Vec<f64> = [
                Factorization::Evd,
                Factorization::Cholesky,
                Factorization::LowRank,
            ]
            .into_iter()
            .map(|f| ckb_sq_with(&ds, &dt, &spec, &spec, 0.05, f).unwrap().value)
            .collect();
            assert!(close(values[1], values[0], 1e-9), "{values:?}");
            assert!(close(values[2], values[0], 1e-9), "{values:?}");
            let b = kernels::build_gram_bundle(&ds, &dt, &spec, &spec).unwrap();
            let terms = low_rank_terms(
                &b.gx_s.view(),
                &b.gy_s.view(),
                &b.gx_t.view(),
                &b.gy_t.view(),
                &b.k_ts.view(),
                0.05,
            )
            .unwrap();
            assert!(terms.is_some());
        }
    }

    #[test]
    fn one_hot_mmd_between_disjoint_classes() {
        let ys = array![[1.0, 1.0, 1.0], [0.0, 0.0, 0.0]];
        let yt = array![[0.0, 0.0], [1.0, 1.0]];
        let r = label_mmd_sq(&ys.view(), &yt.view(), &KernelSpec::linear()).unwrap();
        assert!(close(r.value, 2.0, 1e-15));
        let r = label_mmd_sq(&ys.view(), &ys.view(), &KernelSpec::gaussian_adaptive()).unwrap();
        assert!(r.value.abs() < 1e-15);
        let bad = array![[0.7, 1.0], [0.7, 0.0]];
        assert!(matches!(
            label_mmd_sq(&bad.view(), &yt.view(), &KernelSpec::linear()),
            Err(Error::InvalidLabels(_))
        ));
    }

    #[test]
    fn ckb_requires_labels() {
        let x = array![[0.0, 1.0, 2.0], [1.0, 0.0, 2.0]];
        let ds = LabeledDataset::from_class_indices("s", x.clone(), &[0, 1, 0], 2).unwrap();
        let dt = LabeledDataset::unlabeled("t", x).unwrap();
        let spec = KernelSpec::gaussian_adaptive();
        assert!(matches!(
            ckb_sq(&ds, &dt, &spec, &spec, DEFAULT_EPSILON),
            Err(Error::MissingLabels(_))
        ));
        assert!(kernel_bures_sq(&ds, &dt, &spec).is_ok());
    }
}
