//! Shallow conditional alignment: a linear feature extractor and a softmax
//! classifier trained on labeled source and unlabeled target batches.
//!
//! The per-batch objective is
//!
//! ```text
//! L = L_CE + lambda1 * L_Ent + lambda2 * (L_CKB [+ L_MMD])
//! ```
//!
//! where `L_CKB` is the conditional kernel Bures metric between the
//! extracted source and target features, conditioned on source labels and on
//! hard target pseudo-labels, and `L_MMD` compares source label embeddings
//! with the soft target predictions. Gradients are analytic. Pseudo-labels,
//! the conditioning matrices built from them and every adaptive bandwidth are
//! held constant when differentiating.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use ndarray_linalg::{JobSvd, SVD, SVDDC};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datagen::{argmax_columns, one_hot, LabeledDataset};
use crate::discrepancy::{self, Factorization, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::kernels::{self, Kernel, KernelSpec};
use crate::linalg;

/// Floor applied to probabilities inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Ckb,
    CkbPlusMmd,
}

/// How the cross-entropy and entropy sums are scaled within a batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// Divide by the number of samples in the batch.
    #[default]
    Mean,
    Sum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignmentConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub epsilon: f64,
    pub variant: Variant,
    pub feature_dim_out: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Total batch size; half comes from each domain.
    pub batch_size: usize,
    pub warmup_epochs: usize,
    pub seed: u64,
    pub reduction: Reduction,
    pub kernel_x: KernelSpec,
    pub kernel_y: KernelSpec,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.5,
            lambda2: 1.0,
            epsilon: DEFAULT_EPSILON,
            variant: Variant::Ckb,
            feature_dim_out: 16,
            learning_rate: 1e-2,
            epochs: 60,
            batch_size: 64,
            warmup_epochs: 5,
            seed: 0,
            reduction: Reduction::Mean,
            kernel_x: KernelSpec::gaussian_adaptive(),
            kernel_y: KernelSpec::gaussian_adaptive(),
        }
    }
}

impl AlignmentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.lambda1.is_finite() && self.lambda1 >= 0.0) {
            return bad(format!(
                "lambda1 must be finite and >= 0, got {}",
                self.lambda1
            ));
        }
        if !(self.lambda2.is_finite() && self.lambda2 >= 0.0) {
            return bad(format!(
                "lambda2 must be finite and >= 0, got {}",
                self.lambda2
            ));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidEpsilon(self.epsilon));
        }
        if self.feature_dim_out == 0 {
            return bad("feature_dim_out must be positive".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            ));
        }
        if self.batch_size < 4 {
            return bad(format!("batch_size must be >= 4, got {}", self.batch_size));
        }
        self.kernel_x.validate()?;
        self.kernel_y.validate()
    }

    fn scale(&self, p: usize) -> f64 {
        match self.reduction {
            Reduction::Mean => 1.0 / p as f64,
            Reduction::Sum => 1.0,
        }
    }
}

/// Loss terms of one step. `ce` and `ent` are already scaled per
/// [`Reduction`], so `total = ce + lambda1 * ent + lambda_align * (ckb + mmd)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossRecord {
    pub step: u64,
    pub epoch: usize,
    pub ce: f64,
    pub ent: f64,
    pub ckb: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mmd: Option<f64>,
    pub total: f64,
    /// `lambda2`, or 0 during warmup.
    pub lambda_align: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentState {
    /// `d_out x d_in`
    pub w_f: Array2<f64>,
    pub b_f: Array1<f64>,
    /// `K x d_out`
    pub w_c: Array2<f64>,
    pub b_c: Array1<f64>,
    pub step: u64,
    pub loss_history: Vec<LossRecord>,
}

impl AlignmentState {
    /// Gaussian initialization scaled by fan-in, zero biases.
    pub fn init(d_in: usize, d_out: usize, n_classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |rows: usize, cols: usize| {
            let scale = 1.0 / (cols as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                v * scale
            })
        };
        let w_f = draw(d_out, d_in);
        let w_c = draw(n_classes, d_out);
        Self {
            w_f,
            b_f: Array1::zeros(d_out),
            w_c,
            b_c: Array1::zeros(n_classes),
            step: 0,
            loss_history: Vec::new(),
        }
    }

    pub fn zeros(d_in: usize, d_out: usize, n_classes: usize) -> Self {
        Self {
            w_f: Array2::zeros((d_out, d_in)),
            b_f: Array1::zeros(d_out),
            w_c: Array2::zeros((n_classes, d_out)),
            b_c: Array1::zeros(n_classes),
            step: 0,
            loss_history: Vec::new(),
        }
    }

    pub fn d_in(&self) -> usize {
        self.w_f.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.w_c.nrows()
    }

    /// Parameters flattened in the order `w_f, b_f, w_c, b_c`.
    pub fn params(&self) -> Vec<f64> {
        self.w_f
            .iter()
            .chain(self.b_f.iter())
            .chain(self.w_c.iter())
            .chain(self.b_c.iter())
            .copied()
            .collect()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let mut it = p.iter().copied();
        for v in self
            .w_f
            .iter_mut()
            .chain(self.b_f.iter_mut())
            .chain(self.w_c.iter_mut())
            .chain(self.b_c.iter_mut())
        {
            *v = it.next().expect("parameter vector too short");
        }
    }
}

/// Gradients with the same shapes as the state parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w_f: Array2<f64>,
    pub b_f: Array1<f64>,
    pub w_c: Array2<f64>,
    pub b_c: Array1<f64>,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        self.w_f
            .iter()
            .chain(self.b_f.iter())
            .chain(self.w_c.iter())
            .chain(self.b_c.iter())
            .copied()
            .collect()
    }

    fn is_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }
}

fn softmax_columns(logits: &mut Array2<f64>) {
    for mut col in logits.columns_mut() {
        let max = col.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        col.mapv_inplace(|v| (v - max).exp());
        let sum = col.sum();
        col /= sum;
    }
}

/// Returns the features `Z = W_f X + b_f` and softmax predictions.
pub fn forward(state: &AlignmentState, x: &ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
    if x.nrows() != state.d_in() {
        return Err(Error::DimensionMismatch {
            context: "forward input dimension",
            expected: state.d_in(),
            found: x.nrows(),
        });
    }
    let z = state.w_f.dot(x) + state.b_f.view().insert_axis(Axis(1));
    let mut y = state.w_c.dot(&z) + state.b_c.view().insert_axis(Axis(1));
    softmax_columns(&mut y);
    Ok((z, y))
}

/// `sum -y log(max(y_hat, floor))` over all entries.
pub fn loss_ce(y_hat: &ArrayView2<f64>, y: &ArrayView2<f64>) -> Result<f64> {
    if y_hat.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            context: "cross-entropy inputs",
            expected: y.ncols(),
            found: y_hat.ncols(),
        });
    }
    Ok(y_hat
        .iter()
        .zip(y.iter())
        .map(|(&p, &t)| {
            if t == 0.0 {
                0.0
            } else {
                -t * p.max(PROB_FLOOR).ln()
            }
        })
        .sum())
}

/// `sum -y_hat log(max(y_hat, floor))` over all entries.
pub fn loss_entropy(y_hat: &ArrayView2<f64>) -> f64 {
    y_hat
        .iter()
        .map(|&p| {
            if p == 0.0 {
                0.0
            } else {
                -p * p.max(PROB_FLOOR).ln()
            }
        })
        .sum()
}

/// Quantities frozen for one step: pseudo-labels and every resolved kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct StepContext {
    pub pseudo_labels: Vec<usize>,
    pub z_source: Kernel,
    pub z_target: Kernel,
    pub z_cross: Kernel,
    pub y_source: Kernel,
    pub y_target: Kernel,
    pub mmd_source: Kernel,
    pub mmd_target: Kernel,
    pub mmd_cross: Kernel,
}

/// One batch from each domain. Source labels are one-hot or soft columns.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub xs: ArrayView2<'a, f64>,
    pub ys: ArrayView2<'a, f64>,
    pub xt: ArrayView2<'a, f64>,
}

impl Batch<'_> {
    fn check(&self, state: &AlignmentState) -> Result<()> {
        for (p, ctx) in [
            (self.xs.ncols(), "source batch"),
            (self.xt.ncols(), "target batch"),
        ] {
            if p < 2 {
                return Err(Error::TooFewSamples {
                    context: ctx,
                    needed: 2,
                    found: p,
                });
            }
        }
        if self.ys.ncols() != self.xs.ncols() {
            return Err(Error::DimensionMismatch {
                context: "source batch labels",
                expected: self.xs.ncols(),
                found: self.ys.ncols(),
            });
        }
        if self.ys.nrows() != state.n_classes() {
            return Err(Error::DimensionMismatch {
                context: "number of classes",
                expected: state.n_classes(),
                found: self.ys.nrows(),
            });
        }
        if self.xt.nrows() != self.xs.nrows() {
            return Err(Error::DimensionMismatch {
                context: "feature dimension across domains",
                expected: self.xs.nrows(),
                found: self.xt.nrows(),
            });
        }
        Ok(())
    }
}

/// Derives pseudo-labels and adaptive bandwidths from the current state.
pub fn capture_context(
    state: &AlignmentState,
    batch: &Batch<'_>,
    cfg: &AlignmentConfig,
) -> Result<StepContext> {
    batch.check(state)?;
    let (zs, _) = forward(state, &batch.xs)?;
    let (zt, yt_hat) = forward(state, &batch.xt)?;
    let pseudo_labels = argmax_columns(&yt_hat.view());
    let yt_hard = one_hot(&pseudo_labels, state.n_classes())?;
    let kx = &cfg.kernel_x;
    let ky = &cfg.kernel_y;
    let ys = batch.ys;
    Ok(StepContext {
        z_source: kx.resolve_or_unit(&zs.view(), &zs.view())?,
        z_target: kx.resolve_or_unit(&zt.view(), &zt.view())?,
        z_cross: kx.resolve_or_unit(&zt.view(), &zs.view())?,
        y_source: ky.resolve_or_unit(&ys, &ys)?,
        y_target: ky.resolve_or_unit(&yt_hard.view(), &yt_hard.view())?,
        mmd_source: ky.resolve_or_unit(&ys, &ys)?,
        mmd_target: ky.resolve_or_unit(&yt_hat.view(), &yt_hat.view())?,
        mmd_cross: ky.resolve_or_unit(&yt_hat.view(), &ys)?,
        pseudo_labels,
    })
}

struct Forward {
    zs: Array2<f64>,
    zt: Array2<f64>,
    ys_hat: Array2<f64>,
    yt_hat: Array2<f64>,
    parts: discrepancy::CkbParts,
    mmd: Option<f64>,
    ce: f64,
    ent: f64,
}

fn run_forward(
    state: &AlignmentState,
    batch: &Batch<'_>,
    ctx: &StepContext,
    cfg: &AlignmentConfig,
) -> Result<Forward> {
    batch.check(state)?;
    if ctx.pseudo_labels.len() != batch.xt.ncols() {
        return Err(Error::DimensionMismatch {
            context: "pseudo-labels",
            expected: batch.xt.ncols(),
            found: ctx.pseudo_labels.len(),
        });
    }
    let (n, m) = (batch.xs.ncols(), batch.xt.ncols());
    let (zs, ys_hat) = forward(state, &batch.xs)?;
    let (zt, yt_hat) = forward(state, &batch.xt)?;
    let ce = loss_ce(&ys_hat.view(), &batch.ys)? * cfg.scale(n);
    let ent = loss_entropy(&yt_hat.view()) * cfg.scale(m);

    let yt_hard = one_hot(&ctx.pseudo_labels, state.n_classes())?;
    let gx_s = kernels::center(&kernels::gram(&zs.view(), &zs.view(), &ctx.z_source)?.view())?;
    let gx_t = kernels::center(&kernels::gram(&zt.view(), &zt.view(), &ctx.z_target)?.view())?;
    let k_ts = kernels::gram(&zt.view(), &zs.view(), &ctx.z_cross)?;
    let gy_s = kernels::center(&kernels::gram(&batch.ys, &batch.ys, &ctx.y_source)?.view())?;
    let gy_t =
        kernels::center(&kernels::gram(&yt_hard.view(), &yt_hard.view(), &ctx.y_target)?.view())?;
    let parts = discrepancy::ckb_parts(
        &gx_s.view(),
        &gy_s.view(),
        &gx_t.view(),
        &gy_t.view(),
        &k_ts.view(),
        cfg.epsilon,
        Factorization::Evd,
    )?;

    let mmd = match cfg.variant {
        Variant::Ckb => None,
        Variant::CkbPlusMmd => {
            let ks = kernels::gram(&batch.ys, &batch.ys, &ctx.mmd_source)?;
            let kt = kernels::gram(&yt_hat.view(), &yt_hat.view(), &ctx.mmd_target)?;
            let kts = kernels::gram(&yt_hat.view(), &batch.ys, &ctx.mmd_cross)?;
            let mean = |k: &Array2<f64>| k.mean().expect("non-empty");
            Some(mean(&ks) + mean(&kt) - 2.0 * mean(&kts))
        }
    };
    Ok(Forward {
        zs,
        zt,
        ys_hat,
        yt_hat,
        parts,
        mmd,
        ce,
        ent,
    })
}

fn assemble(fwd: &Forward, cfg: &AlignmentConfig, lambda_align: f64) -> LossRecord {
    let ckb = fwd.parts.trace_s + fwd.parts.trace_t - 2.0 * fwd.parts.cross;
    let align = ckb + fwd.mmd.unwrap_or(0.0);
    LossRecord {
        step: 0,
        epoch: 0,
        ce: fwd.ce,
        ent: fwd.ent,
        ckb,
        mmd: fwd.mmd,
        total: fwd.ce + cfg.lambda1 * fwd.ent + lambda_align * align,
        lambda_align,
    }
}

/// Loss terms at a frozen context, with the alignment weight `lambda_align`.
pub fn objective_with(
    state: &AlignmentState,
    batch: &Batch<'_>,
    ctx: &StepContext,
    cfg: &AlignmentConfig,
    lambda_align: f64,
) -> Result<LossRecord> {
    let fwd = run_forward(state, batch, ctx, cfg)?;
    Ok(assemble(&fwd, cfg, lambda_align))
}

/// Loss terms with pseudo-labels and bandwidths taken from the current state.
pub fn objective(
    state: &AlignmentState,
    batch: &Batch<'_>,
    cfg: &AlignmentConfig,
) -> Result<LossRecord> {
    let ctx = capture_context(state, batch, cfg)?;
    objective_with(state, batch, &ctx, cfg, cfg.lambda2)
}

/// Backward pass of a Gram matrix `K(A, B)` weighted by `w = dL/dK`.
/// Returns the gradients with respect to the columns of `A` and `B`.
fn gram_backward(
    a: &Array2<f64>,
    b: &Array2<f64>,
    k: &Array2<f64>,
    w: &Array2<f64>,
    kernel: &Kernel,
) -> (Array2<f64>, Array2<f64>) {
    match kernel {
        Kernel::Linear => (b.dot(&w.t()), a.dot(w)),
        Kernel::Gaussian { sigma2 } => {
            let q = w * k;
            let c = 2.0 / sigma2;
            let row = q.sum_axis(Axis(1));
            let col = q.sum_axis(Axis(0));
            let da = (a * &row - b.dot(&q.t())) * (-c);
            let db = (a.dot(&q) - b * &col) * c;
            (da, db)
        }
    }
}

fn square_gram_backward(z: &Array2<f64>, w: &Array2<f64>, kernel: &Kernel) -> Result<Array2<f64>> {
    let k = kernels::gram(&z.view(), &z.view(), kernel)?;
    let (da, db) = gram_backward(z, z, &k, w, kernel);
    Ok(da + db)
}

/// `H W H` for a square matrix.
fn center_weight(w: &Array2<f64>) -> Result<Array2<f64>> {
    kernels::center(&w.view())
}

fn softmax_backward(y_hat: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let inner = (y_hat * dy).sum_axis(Axis(0));
    y_hat * &(dy - &inner)
}

/// Analytic gradient of [`objective_with`] at a frozen context.
pub fn gradient_with(
    state: &AlignmentState,
    batch: &Batch<'_>,
    ctx: &StepContext,
    cfg: &AlignmentConfig,
    lambda_align: f64,
) -> Result<(LossRecord, Gradients)> {
    let fwd = run_forward(state, batch, ctx, cfg)?;
    let record = assemble(&fwd, cfg, lambda_align);
    let (n, m) = (batch.xs.ncols(), batch.xt.ncols());

    // classification terms with respect to the predictions
    let ce_scale = cfg.scale(n);
    let mut dys = Array2::<f64>::zeros(fwd.ys_hat.dim());
    for ((g, &p), &t) in dys.iter_mut().zip(fwd.ys_hat.iter()).zip(batch.ys.iter()) {
        if t != 0.0 && p > PROB_FLOOR {
            *g = -t / p * ce_scale;
        }
    }
    let ent_scale = cfg.lambda1 * cfg.scale(m);
    let mut dyt = fwd.yt_hat.mapv(|p| {
        if p > PROB_FLOOR {
            -(p.ln() + 1.0) * ent_scale
        } else {
            -PROB_FLOOR.ln() * ent_scale
        }
    });

    let mut dzs = Array2::<f64>::zeros(fwd.zs.dim());
    let mut dzt = Array2::<f64>::zeros(fwd.zt.dim());
    if lambda_align != 0.0 {
        let p = &fwd.parts;
        // trace terms: tr(G B)/p with G = H K H
        let ws = center_weight(&(&p.b_s / n as f64))? * lambda_align;
        let wt = center_weight(&(&p.b_t / m as f64))? * lambda_align;
        dzs += &square_gram_backward(&fwd.zs, &ws, &ctx.z_source)?;
        dzt += &square_gram_backward(&fwd.zt, &wt, &ctx.z_target)?;

        // cross term: -2/sqrt(nm) ||P^T K_ts Q||_*, subgradient P U V^T Q^T
        let (u, s, vt) = p.inner.svddc(JobSvd::Some)?;
        let (u, vt) = (u.expect("requested"), vt.expect("requested"));
        let smax = s.iter().cloned().fold(0.0_f64, f64::max);
        let keep: Vec<usize> = (0..s.len())
            .filter(|&i| s[i] > linalg::EIG_CLAMP_REL * smax)
            .collect();
        let uv = u.select(Axis(1), &keep).dot(&vt.select(Axis(0), &keep));
        let w_ts =
            p.hc_t.dot(&uv).dot(&p.hc_s.t()) * (-2.0 * lambda_align / ((n * m) as f64).sqrt());
        let k_ts = kernels::gram(&fwd.zt.view(), &fwd.zs.view(), &ctx.z_cross)?;
        let (dt_part, ds_part) = gram_backward(&fwd.zt, &fwd.zs, &k_ts, &w_ts, &ctx.z_cross);
        dzt += &dt_part;
        dzs += &ds_part;

        if fwd.mmd.is_some() {
            let wt = Array2::from_elem((m, m), lambda_align / (m * m) as f64);
            dyt += &square_gram_backward(&fwd.yt_hat, &wt, &ctx.mmd_target)?;
            let ys = batch.ys.to_owned();
            let kts = kernels::gram(&fwd.yt_hat.view(), &batch.ys, &ctx.mmd_cross)?;
            let w = Array2::from_elem((m, n), -2.0 * lambda_align / (n * m) as f64);
            let (d_yt, _) = gram_backward(&fwd.yt_hat, &ys, &kts, &w, &ctx.mmd_cross);
            dyt += &d_yt;
        }
    }

    let dls = softmax_backward(&fwd.ys_hat, &dys);
    let dlt = softmax_backward(&fwd.yt_hat, &dyt);
    let w_c = dls.dot(&fwd.zs.t()) + dlt.dot(&fwd.zt.t());
    let b_c = dls.sum_axis(Axis(1)) + dlt.sum_axis(Axis(1));
    dzs += &state.w_c.t().dot(&dls);
    dzt += &state.w_c.t().dot(&dlt);
    let w_f = dzs.dot(&batch.xs.t()) + dzt.dot(&batch.xt.t());
    let b_f = dzs.sum_axis(Axis(1)) + dzt.sum_axis(Axis(1));
    let grads = Gradients { w_f, b_f, w_c, b_c };
    if !grads.is_finite() {
        return Err(Error::NonFiniteGradient { step: state.step });
    }
    Ok((record, grads))
}

/// Gradient of the full objective with pseudo-labels and bandwidths frozen at
/// the current state.
pub fn gradient(
    state: &AlignmentState,
    batch: &Batch<'_>,
    cfg: &AlignmentConfig,
) -> Result<Gradients> {
    let ctx = capture_context(state, batch, cfg)?;
    Ok(gradient_with(state, batch, &ctx, cfg, cfg.lambda2)?.1)
}

/// Singular values of the inner matrix of the CKB cross term at a frozen
/// context; near-ties make the nuclear norm non-smooth.
pub fn cross_singular_values(
    state: &AlignmentState,
    batch: &Batch<'_>,
    ctx: &StepContext,
    cfg: &AlignmentConfig,
) -> Result<Array1<f64>> {
    let fwd = run_forward(state, batch, ctx, cfg)?;
    let (_, s, _) = fwd.parts.inner.svd(false, false)?;
    Ok(s)
}

/// Classification accuracy of the current state on integer labels.
pub fn accuracy(state: &AlignmentState, x: &ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    if labels.len() != x.ncols() {
        return Err(Error::DimensionMismatch {
            context: "accuracy labels",
            expected: x.ncols(),
            found: labels.len(),
        });
    }
    if labels.is_empty() {
        return Ok(0.0);
    }
    let (_, y_hat) = forward(state, x)?;
    let pred = argmax_columns(&y_hat.view());
    let hits = pred.iter().zip(labels).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Accuracies {
    pub source: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainReport {
    pub before: Accuracies,
    pub after: Accuracies,
    pub steps: u64,
    pub steps_per_epoch: usize,
}

/// Source indices interleaved across classes so that every consecutive
/// chunk holds (nearly) equal class counts.
fn stratified_order(classes: &[usize], n_classes: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &c) in classes.iter().enumerate() {
        buckets[c].push(i);
    }
    for b in &mut buckets {
        b.shuffle(rng);
    }
    let mut class_order: Vec<usize> = (0..n_classes).collect();
    let mut out = Vec::with_capacity(classes.len());
    let longest = buckets.iter().map(Vec::len).max().unwrap_or(0);
    for round in 0..longest {
        class_order.shuffle(rng);
        for &c in &class_order {
            if let Some(&i) = buckets[c].get(round) {
                out.push(i);
            }
        }
    }
    out
}

/// Trains on labeled `source` and target features `target_x`. Target labels,
/// when given, are read only to report accuracies.
pub fn train(
    source: &LabeledDataset,
    target_x: &ArrayView2<f64>,
    target_eval: Option<&[usize]>,
    cfg: &AlignmentConfig,
) -> Result<(AlignmentState, TrainReport)> {
    cfg.validate()?;
    let ys = source.require_labels()?;
    let k = ys.nrows();
    let state = AlignmentState::init(source.dim(), cfg.feature_dim_out, k, cfg.seed);
    train_from(state, source, target_x, target_eval, cfg)
}

/// Like [`train`], starting from a given state.
pub fn train_from(
    mut state: AlignmentState,
    source: &LabeledDataset,
    target_x: &ArrayView2<f64>,
    target_eval: Option<&[usize]>,
    cfg: &AlignmentConfig,
) -> Result<(AlignmentState, TrainReport)> {
    cfg.validate()?;
    let xs = source.features();
    let ys = source.require_labels()?;
    let (n, m) = (xs.ncols(), target_x.ncols());
    if target_x.nrows() != xs.nrows() {
        return Err(Error::DimensionMismatch {
            context: "feature dimension across domains",
            expected: xs.nrows(),
            found: target_x.nrows(),
        });
    }
    let half = (cfg.batch_size / 2).min(n).min(m);
    if half < 2 {
        return Err(Error::TooFewSamples {
            context: "training domain",
            needed: 2,
            found: n.min(m),
        });
    }
    let classes = argmax_columns(&ys);
    let k = ys.nrows();
    let source_labels = source.class_indices().expect("labels present");
    let measure = |st: &AlignmentState| -> Result<Accuracies> {
        Ok(Accuracies {
            source: accuracy(st, &xs, &source_labels)?,
            target: target_eval.map(|l| accuracy(st, target_x, l)).transpose()?,
        })
    };
    let before = measure(&state)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let steps_per_epoch = (n / half).max(1);
    let mut target_order: Vec<usize> = (0..m).collect();
    let mut target_pos = m;
    for epoch in 0..cfg.epochs {
        let order = stratified_order(&classes, k, &mut rng);
        let lambda_align = if epoch < cfg.warmup_epochs {
            0.0
        } else {
            cfg.lambda2
        };
        for s in 0..steps_per_epoch {
            let src_idx = &order[s * half..(s + 1) * half];
            let mut tgt_idx = Vec::with_capacity(half);
            while tgt_idx.len() < half {
                if target_pos == m {
                    target_order.shuffle(&mut rng);
                    target_pos = 0;
                }
                tgt_idx.push(target_order[target_pos]);
                target_pos += 1;
            }
            let bxs = xs.select(Axis(1), src_idx);
            let bys = ys.select(Axis(1), src_idx);
            let bxt = target_x.select(Axis(1), &tgt_idx);
            let batch = Batch {
                xs: bxs.view(),
                ys: bys.view(),
                xt: bxt.view(),
            };
            let ctx = capture_context(&state, &batch, cfg)?;
            let (mut record, g) = gradient_with(&state, &batch, &ctx, cfg, lambda_align)?;
            if !record.total.is_finite() {
                return Err(Error::NonFinite("training loss"));
            }
            record.step = state.step;
            record.epoch = epoch;
            state.loss_history.push(record);
            let lr = cfg.learning_rate;
            state.w_f.scaled_add(-lr, &g.w_f);
            state.b_f.scaled_add(-lr, &g.b_f);
            state.w_c.scaled_add(-lr, &g.w_c);
            state.b_c.scaled_add(-lr, &g.b_c);
            state.step += 1;
        }
    }
    let after = measure(&state)?;
    let steps = state.step;
    Ok((
        state,
        TrainReport {
            before,
            after,
            steps,
            steps_per_epoch,
        },
    ))
}
