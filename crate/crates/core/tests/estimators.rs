use ckb_core::datagen::{self, LabeledDataset, ShiftConfig};
use ckb_core::discrepancy::{self, Factorization};
use ckb_core::kernels::{self, KernelSpec};
use ckb_core::oracle;
use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pair(seed: u64, d: usize, k: usize, n: usize, m: usize) -> (LabeledDataset, LabeledDataset) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = datagen::random_labeled(&mut rng, "s", d, k, n).unwrap();
    let t = datagen::random_labeled(&mut rng, "t", d, k, m).unwrap();
    (s, t)
}

fn one_class(ds: &LabeledDataset) -> LabeledDataset {
    LabeledDataset::from_class_indices("one", ds.features().to_owned(), &vec![0; ds.len()], 1)
        .unwrap()
}

#[test]
fn linear_ckb_matches_primal_across_factorizations() {
    let lin = KernelSpec::linear();
    for (i, &eps) in [1e-3, 1e-2, 1e-1, 1.0].iter().enumerate() {
        let (ds, dt) = pair(i as u64, 3, 3, 40, 27);
        let primal = oracle::ckb_sq_primal(&ds, &dt, eps).unwrap();
        for how in [
            Factorization::Evd,
            Factorization::Cholesky,
            Factorization::LowRank,
        ] {
            let dual = discrepancy::ckb_sq_with(&ds, &dt, &lin, &lin, eps, how).unwrap();
            let dev = (dual.value - primal.value).abs() / primal.scale();
            assert!(dev < 1e-8, "eps {eps} {how:?}: deviation {dev:e}");
        }
    }
}

#[test]
fn linear_kernel_bures_is_bures_of_covariances() {
    for seed in 0..5 {
        let (ds, dt) = pair(seed, 4, 2, 30, 45);
        let want = discrepancy::bures_sq(
            &oracle::feature_covariance(&ds).view(),
            &oracle::feature_covariance(&dt).view(),
        )
        .unwrap();
        let got = discrepancy::kernel_bures_sq(&ds, &dt, &KernelSpec::linear()).unwrap();
        assert!((got.value - want.value).abs() < 1e-9 * want.scale());
        assert!((got.trace_source - want.trace_source).abs() < 1e-10 * want.scale());
    }
}

#[test]
fn large_epsilon_approaches_kernel_bures() {
    let spec = KernelSpec::gaussian_adaptive();
    let (ds, dt) = pair(11, 2, 3, 35, 35);
    let kb = discrepancy::kernel_bures_sq(&ds, &dt, &spec).unwrap();
    let mut last = f64::INFINITY;
    for eps in [1e2, 1e4, 1e6] {
        let ckb = discrepancy::ckb_sq(&ds, &dt, &spec, &spec, eps).unwrap();
        let gap = (ckb.value - kb.value).abs() / kb.scale();
        assert!(gap < last);
        last = gap;
    }
    assert!(last < 1e-5, "gap at eps=1e6: {last:e}");
}

#[test]
fn single_class_labels_reduce_to_kernel_bures() {
    let (ds, dt) = pair(3, 3, 2, 30, 30);
    let (ds, dt) = (one_class(&ds), one_class(&dt));

    let ops = oracle::primal_operators(&ds, 1e-2).unwrap();
    assert!(ops.r_xy.iter().all(|v| v.abs() < 1e-12));
    assert!((&ops.r_xx_given_y - &ops.r_xx)
        .iter()
        .all(|v| v.abs() < 1e-12));

    let spec = KernelSpec::gaussian_adaptive();
    let ckb = discrepancy::ckb_sq(&ds, &dt, &spec, &spec, 1e-2).unwrap();
    let kb = discrepancy::kernel_bures_sq(&ds, &dt, &spec).unwrap();
    assert!((ckb.value - kb.value).abs() < 1e-10 * kb.scale());
}

#[test]
fn identical_domains_give_zero() {
    let spec = KernelSpec::gaussian_adaptive();
    let (ds, _) = pair(5, 2, 3, 50, 10);
    let r = discrepancy::ckb_sq(&ds, &ds.clone().with_name("t"), &spec, &spec, 1e-2).unwrap();
    assert!(r.value.abs() < 1e-8 * r.scale(), "{}", r.value);
}

#[test]
fn ckb_reads_labels_only_through_within_domain_grams() {
    // swapping class names in one domain leaves every label Gram unchanged
    let spec = KernelSpec::gaussian_adaptive();
    let (ds, dt) = pair(8, 2, 2, 40, 40);
    let flipped: Vec<usize> = dt.class_indices().unwrap().iter().map(|c| 1 - c).collect();
    let dt2 =
        LabeledDataset::from_class_indices("t", dt.features().to_owned(), &flipped, 2).unwrap();
    let a = discrepancy::ckb_sq(&ds, &dt, &spec, &spec, 1e-2).unwrap();
    let b = discrepancy::ckb_sq(&ds, &dt2, &spec, &spec, 1e-2).unwrap();
    assert!((a.value - b.value).abs() < 1e-10 * a.scale());
}

#[test]
fn estimate_shrinks_with_sample_size_without_shift() {
    let spec = KernelSpec::gaussian_adaptive();
    let median_at = |per_class: usize| {
        let mut v: Vec<f64> = (0..7)
            .map(|s| {
                let p = datagen::synth_conditional_shift(&ShiftConfig::no_shift(2, per_class, s))
                    .unwrap();
                discrepancy::ckb_sq(&p.source, &p.target, &spec, &spec, 1e-2)
                    .unwrap()
                    .value
                    .abs()
            })
            .collect();
        v.sort_by(f64::total_cmp);
        v[3]
    };
    let small = median_at(20);
    let large = median_at(160);
    assert!(large < small, "{large} !< {small}");
}

#[test]
fn gram_bundle_satisfies_invariants() {
    for seed in 0..4 {
        let (ds, dt) = pair(seed, 3, 4, 25, 33);
        let spec = KernelSpec::gaussian_adaptive();
        let b = kernels::build_gram_bundle(&ds, &dt, &spec, &spec).unwrap();
        b.check_invariants().unwrap();
        assert_eq!(b.k_ts.dim(), (33, 25));
        assert!(b.bandwidths.x_cross.is_some());
    }
}

#[test]
fn b_matrix_forms_agree() {
    let (ds, _) = pair(2, 2, 3, 30, 5);
    let y = ds.labels().unwrap();
    let ky = kernels::gram(&y, &y, &kernels::Kernel::Linear).unwrap();
    let gy = kernels::center(&ky.view()).unwrap();
    for eps in [1e-3, 1e-1] {
        let a = discrepancy::b_matrix(&gy.view(), eps).unwrap();
        let b = discrepancy::b_matrix_defining(&gy.view(), eps).unwrap();
        assert!((&a - &b).iter().all(|v| v.abs() < 1e-10));
        let c = discrepancy::c_factor(&a.view()).unwrap();
        assert!((c.dot(&c.t()) - &a).iter().all(|v| v.abs() < 1e-10));
    }
}

#[test]
fn nuclear_norm_is_invariant_to_orthogonal_factors() {
    let q = {
        let t: f64 = 0.7;
        ndarray::arr2(&[[t.cos(), -t.sin()], [t.sin(), t.cos()]])
    };
    let m: Array2<f64> = ndarray::arr2(&[[3.0, 1.0], [0.5, -2.0]]);
    let a = discrepancy::nuclear_norm(&m.view()).unwrap();
    let b = discrepancy::nuclear_norm(&q.dot(&m).dot(&q.t()).view()).unwrap();
    assert!((a - b).abs() < 1e-12);
    // ||M||_* = tr sqrt(M^T M)
    let root = discrepancy::psd_sqrt(&m.t().dot(&m).view()).unwrap();
    assert!((root.diag().sum() - a).abs() < 1e-12);
}

#[test]
fn label_mmd_vanishes_for_matching_class_proportions() {
    let (ds, dt) = pair(4, 2, 3, 30, 60);
    let r = discrepancy::label_mmd_sq(
        &ds.labels().unwrap(),
        &dt.labels().unwrap(),
        &KernelSpec::gaussian_adaptive(),
    )
    .unwrap();
    assert!(r.value.abs() < 1e-12, "{}", r.value);
    let props = dt.labels().unwrap().mean_axis(Axis(1)).unwrap();
    assert!(props.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-12));
}
