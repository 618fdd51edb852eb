//! Kernel evaluation, Gram matrices, centering and adaptive bandwidths.
//!
//! Samples are matrix columns: a `d x p` matrix holds `p` points in `R^d`.
//! The Gaussian kernel is `k(x, x') = exp(-|x - x'|^2 / sigma2)`; with the
//! adaptive policy `sigma2` is the mean squared distance over exactly the
//! pairs that populate the matrix being built, so the source, target and
//! cross matrices each get their own value.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::datagen::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Gaussian,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// Fixed `sigma2 > 0`.
    Fixed(f64),
    /// Mean squared pairwise distance of the matrix being built.
    AdaptiveMean,
}

/// Kernel family plus bandwidth policy. The linear family ignores the bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub bandwidth: Bandwidth,
}

impl KernelSpec {
    pub const fn gaussian_adaptive() -> Self {
        Self {
            family: KernelFamily::Gaussian,
            bandwidth: Bandwidth::AdaptiveMean,
        }
    }

    pub fn gaussian(sigma2: f64) -> Result<Self> {
        check_sigma2(sigma2)?;
        Ok(Self {
            family: KernelFamily::Gaussian,
            bandwidth: Bandwidth::Fixed(sigma2),
        })
    }

    pub const fn linear() -> Self {
        Self {
            family: KernelFamily::Linear,
            bandwidth: Bandwidth::AdaptiveMean,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.family, self.bandwidth) {
            (KernelFamily::Gaussian, Bandwidth::Fixed(s)) => check_sigma2(s),
            _ => Ok(()),
        }
    }

    /// Resolves the bandwidth for a Gram matrix between the columns of `a` and `b`.
    pub fn resolve(&self, a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Result<Kernel> {
        match (self.family, self.bandwidth) {
            (KernelFamily::Linear, _) => Ok(Kernel::Linear),
            (KernelFamily::Gaussian, Bandwidth::Fixed(sigma2)) => {
                check_sigma2(sigma2)?;
                Ok(Kernel::Gaussian { sigma2 })
            }
            (KernelFamily::Gaussian, Bandwidth::AdaptiveMean) => Ok(Kernel::Gaussian {
                sigma2: adaptive_bandwidth(a, b)?,
            }),
        }
    }

    /// Like [`KernelSpec::resolve`], but a degenerate adaptive bandwidth
    /// (all points identical) falls back to `sigma2 = 1`.
    pub fn resolve_or_unit(&self, a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Result<Kernel> {
        match self.resolve(a, b) {
            Err(Error::DegenerateBandwidth) => Ok(Kernel::Gaussian { sigma2: 1.0 }),
            other => other,
        }
    }
}

/// A kernel with every parameter fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Gaussian { sigma2: f64 },
    Linear,
}

impl Kernel {
    pub fn sigma2(&self) -> Option<f64> {
        match self {
            Kernel::Gaussian { sigma2 } => Some(*sigma2),
            Kernel::Linear => None,
        }
    }
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if sigma2.is_finite() && sigma2 > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidBandwidth(sigma2))
    }
}

fn sq_dist(x: &ArrayView1<f64>, y: &ArrayView1<f64>) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn dot(x: &ArrayView1<f64>, y: &ArrayView1<f64>) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| a * b).sum()
}

pub fn kernel_eval(x: &ArrayView1<f64>, y: &ArrayView1<f64>, kernel: &Kernel) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "kernel_eval",
            expected: x.len(),
            found: y.len(),
        });
    }
    match *kernel {
        Kernel::Gaussian { sigma2 } => {
            check_sigma2(sigma2)?;
            Ok((-sq_dist(x, y) / sigma2).exp())
        }
        Kernel::Linear => Ok(dot(x, y)),
    }
}

/// Mean of `|a_i - b_j|^2` over all `p * q` column pairs.
///
/// Computed as `tr Cov(A) + tr Cov(B) + |mean(A) - mean(B)|^2`, which equals
/// the pairwise mean exactly and is translation invariant by construction.
pub fn adaptive_bandwidth(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Result<f64> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch {
            context: "adaptive_bandwidth",
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    let (p, q) = (a.ncols(), b.ncols());
    if p == 0 || q == 0 || p + q < 2 {
        return Err(Error::TooFewSamples {
            context: "adaptive_bandwidth",
            needed: 2,
            found: p + q,
        });
    }
    let first = a.column(0);
    let all_identical = a
        .axis_iter(Axis(1))
        .chain(b.axis_iter(Axis(1)))
        .all(|c| c == first);
    if all_identical {
        return Err(Error::DegenerateBandwidth);
    }
    let mean_a = a.mean_axis(Axis(1)).expect("non-empty");
    let mean_b = b.mean_axis(Axis(1)).expect("non-empty");
    let spread = |m: &ArrayView2<f64>, mean: &Array1<f64>| -> f64 {
        m.axis_iter(Axis(1))
            .map(|c| sq_dist(&c, &mean.view()))
            .sum::<f64>()
            / m.ncols() as f64
    };
    let value = spread(a, &mean_a) + spread(b, &mean_b) + sq_dist(&mean_a.view(), &mean_b.view());
    if value > 0.0 {
        Ok(value)
    } else {
        Err(Error::DegenerateBandwidth)
    }
}

/// `p x q` matrix of `k(a_i, b_j)`.
pub fn gram(a: &ArrayView2<f64>, b: &ArrayView2<f64>, kernel: &Kernel) -> Result<Array2<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch {
            context: "gram",
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    if let Kernel::Gaussian { sigma2 } = kernel {
        check_sigma2(*sigma2)?;
    }
    // sample-major copies keep the inner loop contiguous
    let at = a.t().as_standard_layout().into_owned();
    let bt = b.t().as_standard_layout().into_owned();
    let mut k = Array2::zeros((a.ncols(), b.ncols()));
    for (i, ai) in at.axis_iter(Axis(0)).enumerate() {
        for (j, bj) in bt.axis_iter(Axis(0)).enumerate() {
            k[[i, j]] = match *kernel {
                Kernel::Gaussian { sigma2 } => (-sq_dist(&ai, &bj) / sigma2).exp(),
                Kernel::Linear => dot(&ai, &bj),
            };
        }
    }
    Ok(k)
}

/// `H K H` with `H = I - 11^T/p`, computed by subtracting row and column means.
pub fn center(k: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let p = linalg::ensure_square(k)?;
    if p == 0 {
        return Ok(Array2::zeros((0, 0)));
    }
    let row_means: Vec<f64> = k.axis_iter(Axis(0)).map(|r| r.sum() / p as f64).collect();
    let col_means: Vec<f64> = k.axis_iter(Axis(1)).map(|c| c.sum() / p as f64).collect();
    let grand = row_means.iter().sum::<f64>() / p as f64;
    let mut g = Array2::zeros((p, p));
    for i in 0..p {
        for j in 0..p {
            g[[i, j]] = (k[[i, j]] - (row_means[i] + col_means[j])) + grand;
        }
    }
    Ok(g)
}

/// Bandwidths actually used for each matrix (`None` for linear kernels).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bandwidths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_source: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_target: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_cross: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_source: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_target: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_cross: Option<f64>,
}

/// Centered feature Grams of both domains plus the uncentered cross Gram
/// (`m x n`, rows target, columns source).
#[derive(Debug, Clone)]
pub struct FeatureGrams {
    pub gx_s: Array2<f64>,
    pub gx_t: Array2<f64>,
    pub k_ts: Array2<f64>,
    pub kernel_source: Kernel,
    pub kernel_target: Kernel,
    pub kernel_cross: Kernel,
}

impl FeatureGrams {
    pub fn n(&self) -> usize {
        self.gx_s.nrows()
    }

    pub fn m(&self) -> usize {
        self.gx_t.nrows()
    }
}

/// Everything the conditional estimator consumes.
#[derive(Debug, Clone)]
pub struct GramBundle {
    pub gx_s: Array2<f64>,
    pub gy_s: Array2<f64>,
    pub gx_t: Array2<f64>,
    pub gy_t: Array2<f64>,
    pub k_ts: Array2<f64>,
    pub n: usize,
    pub m: usize,
    pub bandwidths: Bandwidths,
}

fn ensure_pair(ds: &LabeledDataset, dt: &LabeledDataset) -> Result<()> {
    if ds.dim() != dt.dim() {
        return Err(Error::DimensionMismatch {
            context: "feature dimension across domains",
            expected: ds.dim(),
            found: dt.dim(),
        });
    }
    for d in [ds, dt] {
        if d.len() < 2 {
            return Err(Error::TooFewSamples {
                context: "gram bundle",
                needed: 2,
                found: d.len(),
            });
        }
    }
    Ok(())
}

/// Feature-side matrices only; labels are not read.
pub fn feature_grams(
    ds: &LabeledDataset,
    dt: &LabeledDataset,
    spec_x: &KernelSpec,
) -> Result<FeatureGrams> {
    ensure_pair(ds, dt)?;
    feature_grams_from(&ds.features(), &dt.features(), spec_x)
}

pub(crate) fn feature_grams_from(
    xs: &ArrayView2<f64>,
    xt: &ArrayView2<f64>,
    spec_x: &KernelSpec,
) -> Result<FeatureGrams> {
    spec_x.validate()?;
    let kernel_source = spec_x.resolve_or_unit(xs, xs)?;
    let kernel_target = spec_x.resolve_or_unit(xt, xt)?;
    let kernel_cross = spec_x.resolve_or_unit(xt, xs)?;
    Ok(FeatureGrams {
        gx_s: center(&gram(xs, xs, &kernel_source)?.view())?,
        gx_t: center(&gram(xt, xt, &kernel_target)?.view())?,
        k_ts: gram(xt, xs, &kernel_cross)?,
        kernel_source,
        kernel_target,
        kernel_cross,
    })
}

pub fn build_gram_bundle(
    ds: &LabeledDataset,
    dt: &LabeledDataset,
    spec_x: &KernelSpec,
    spec_y: &KernelSpec,
) -> Result<GramBundle> {
    ensure_pair(ds, dt)?;
    let ys = ds.require_labels()?;
    let yt = dt.require_labels()?;
    if ys.nrows() != yt.nrows() {
        return Err(Error::DimensionMismatch {
            context: "label dimension across domains",
            expected: ys.nrows(),
            found: yt.nrows(),
        });
    }
    spec_y.validate()?;
    let fg = feature_grams(ds, dt, spec_x)?;
    let ky_s = spec_y.resolve_or_unit(&ys, &ys)?;
    let ky_t = spec_y.resolve_or_unit(&yt, &yt)?;
    Ok(GramBundle {
        gy_s: center(&gram(&ys, &ys, &ky_s)?.view())?,
        gy_t: center(&gram(&yt, &yt, &ky_t)?.view())?,
        n: fg.n(),
        m: fg.m(),
        bandwidths: Bandwidths {
            x_source: fg.kernel_source.sigma2(),
            x_target: fg.kernel_target.sigma2(),
            x_cross: fg.kernel_cross.sigma2(),
            y_source: ky_s.sigma2(),
            y_target: ky_t.sigma2(),
            y_cross: None,
        },
        gx_s: fg.gx_s,
        gx_t: fg.gx_t,
        k_ts: fg.k_ts,
    })
}

impl GramBundle {
    /// Checks symmetry, centering and PSD-ness of the four square blocks.
    pub fn check_invariants(&self) -> Result<()> {
        if self.k_ts.dim() != (self.m, self.n) {
            return Err(Error::DimensionMismatch {
                context: "cross gram rows",
                expected: self.m,
                found: self.k_ts.nrows(),
            });
        }
        for g in [&self.gx_s, &self.gy_s, &self.gx_t, &self.gy_t] {
            let v = g.view();
            let p = linalg::ensure_square(&v)?;
            let asym = linalg::max_asymmetry(&v);
            if asym > 1e-10 {
                return Err(Error::NotSymmetric {
                    max_asymmetry: asym,
                });
            }
            let bound = 1e-8 * p as f64 * linalg::max_abs(&v).max(f64::MIN_POSITIVE);
            let worst_row = g
                .axis_iter(Axis(0))
                .map(|r| r.sum().abs())
                .fold(0.0_f64, f64::max);
            if worst_row > bound {
                return Err(Error::InvalidConfig(format!(
                    "centered block has row sum {worst_row:e} above {bound:e}"
                )));
            }
            linalg::psd_eigh(&v, 1e-8)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn gaussian_eval_examples() {
        let x = array![1.0, -2.0];
        let k = Kernel::Gaussian { sigma2: 2.5 };
        assert_eq!(kernel_eval(&x.view(), &x.view(), &k).unwrap(), 1.0);
        // |x - y|^2 = 2.5 = sigma2
        let y = array![1.5, -0.5];
        let v = kernel_eval(&x.view(), &y.view(), &k).unwrap();
        assert!((v - (-1.0_f64).exp()).abs() < 1e-15);
        assert!((v - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn linear_eval_is_dot_product() {
        let v = kernel_eval(
            &array![1.0, 2.0].view(),
            &array![3.0, 4.0].view(),
            &Kernel::Linear,
        );
        assert_eq!(v.unwrap(), 11.0);
    }

    #[test]
    fn eval_errors() {
        let a = array![1.0, 2.0];
        let b = array![1.0];
        assert!(matches!(
            kernel_eval(&a.view(), &b.view(), &Kernel::Linear),
            Err(Error::DimensionMismatch { .. })
        ));
        for s in [0.0, -1.0, f64::NAN] {
            assert!(matches!(
                kernel_eval(&a.view(), &a.view(), &Kernel::Gaussian { sigma2: s }),
                Err(Error::InvalidBandwidth(_))
            ));
        }
        assert!(KernelSpec::gaussian(0.0).is_err());
    }

    #[test]
    fn bandwidth_examples() {
        let a = array![[0.0, 2.0]];
        assert_eq!(adaptive_bandwidth(&a.view(), &a.view()).unwrap(), 2.0);
        let a = array![[0.0]];
        let b = array![[3.0]];
        assert_eq!(adaptive_bandwidth(&a.view(), &b.view()).unwrap(), 9.0);
        let same = array![[0.1, 0.1, 0.1], [4.0, 4.0, 4.0]];
        assert!(matches!(
            adaptive_bandwidth(&same.view(), &same.view()),
            Err(Error::DegenerateBandwidth)
        ));
        // callers fall back to unit bandwidth
        let k = KernelSpec::gaussian_adaptive()
            .resolve_or_unit(&same.view(), &same.view())
            .unwrap();
        assert_eq!(k, Kernel::Gaussian { sigma2: 1.0 });
    }

    #[test]
    fn gram_examples() {
        let eye = Array2::<f64>::eye(2);
        assert_eq!(
            gram(&eye.view(), &eye.view(), &Kernel::Linear).unwrap(),
            eye
        );
        let a = array![[0.0, 1.0, 3.0], [1.0, -1.0, 0.5]];
        let k = gram(&a.view(), &a.view(), &Kernel::Gaussian { sigma2: 1.3 }).unwrap();
        for i in 0..3 {
            assert_eq!(k[[i, i]], 1.0);
        }
        assert!(gram(&a.view(), &eye.slice(ndarray::s![..1, ..]), &Kernel::Linear).is_err());
    }

    #[test]
    fn center_examples() {
        assert_eq!(center(&array![[5.0]].view()).unwrap(), array![[0.0]]);
        let ones = Array2::<f64>::ones((4, 4));
        assert!(center(&ones.view())
            .unwrap()
            .iter()
            .all(|v| v.abs() < 1e-15));
        let g = center(&Array2::<f64>::eye(2).view()).unwrap();
        assert_eq!(g, array![[0.5, -0.5], [-0.5, 0.5]]);
        assert!(matches!(
            center(&Array2::<f64>::zeros((2, 3)).view()),
            Err(Error::NotSquare { .. })
        ));
    }

    #[test]
    fn bundle_of_identical_domains() {
        let x = array![[0.0, 1.0, 2.5, -1.0], [1.0, 0.0, 0.5, 2.0]];
        let ds = LabeledDataset::from_class_indices("s", x, &[0, 1, 1, 0], 2).unwrap();
        let b = build_gram_bundle(
            &ds,
            &ds,
            &KernelSpec::gaussian_adaptive(),
            &KernelSpec::linear(),
        )
        .unwrap();
        assert_eq!(b.gx_s, b.gx_t);
        assert_eq!(b.k_ts, b.k_ts.t());
        b.check_invariants().unwrap();

        let ky = gram(
            &ds.labels().unwrap(),
            &ds.labels().unwrap(),
            &Kernel::Linear,
        )
        .unwrap();
        let cls = ds.class_indices().unwrap();
        for ((i, j), v) in ky.indexed_iter() {
            assert_eq!(*v, if cls[i] == cls[j] { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn bundle_errors() {
        let x = array![[0.0], [1.0]];
        let one = LabeledDataset::from_class_indices("one", x, &[0], 2).unwrap();
        let x2 = array![[0.0, 1.0], [1.0, 0.0]];
        let two = LabeledDataset::from_class_indices("two", x2.clone(), &[0, 1], 2).unwrap();
        let spec = KernelSpec::gaussian_adaptive();
        assert!(matches!(
            build_gram_bundle(&one, &two, &spec, &spec),
            Err(Error::TooFewSamples { .. })
        ));
        let unl = LabeledDataset::unlabeled("u", x2).unwrap();
        assert!(matches!(
            build_gram_bundle(&two, &unl, &spec, &spec),
            Err(Error::MissingLabels(_))
        ));
        assert!(feature_grams(&two, &unl, &spec).is_ok());
    }
}
