use ckb_core::datagen::{self, LabeledDataset};
use ckb_core::discrepancy;
use ckb_core::kernels::{self, Kernel, KernelSpec};
use ndarray::{Array2, Axis};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-3.0..3.0_f64, rows * cols)
        .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

fn points() -> impl Strategy<Value = Array2<f64>> {
    (1usize..5, 3usize..20).prop_flat_map(|(d, p)| matrix(d, p))
}

fn labeled_pair() -> impl Strategy<Value = (LabeledDataset, LabeledDataset)> {
    (any::<u64>(), 1usize..4, 2usize..4, 6usize..25, 6usize..25).prop_map(|(seed, d, k, n, m)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (
            datagen::random_labeled(&mut rng, "s", d, k, n).unwrap(),
            datagen::random_labeled(&mut rng, "t", d, k, m).unwrap(),
        )
    })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn centering_is_idempotent_and_kills_row_sums(x in points()) {
        let k = kernels::gram(&x.view(), &x.view(), &Kernel::Linear).unwrap();
        let g = kernels::center(&k.view()).unwrap();
        let gg = kernels::center(&g.view()).unwrap();
        let scale = g.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        for (a, b) in g.iter().zip(gg.iter()) {
            prop_assert!((a - b).abs() <= 1e-12 * scale);
        }
        for s in g.sum_axis(Axis(1)).iter() {
            prop_assert!(s.abs() <= 1e-10 * scale * g.nrows() as f64);
        }
        for (a, b) in g.iter().zip(g.t().iter()) {
            prop_assert!((a - b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn adaptive_bandwidth_is_translation_invariant_and_scales_quadratically(
        x in points(), shift in -5.0..5.0_f64, c in 0.1..4.0_f64,
    ) {
        let base = kernels::adaptive_bandwidth(&x.view(), &x.view());
        prop_assume!(base.is_ok());
        let base = base.unwrap();
        let moved = &x + shift;
        let scaled = &x * c;
        let t = kernels::adaptive_bandwidth(&moved.view(), &moved.view()).unwrap();
        let s = kernels::adaptive_bandwidth(&scaled.view(), &scaled.view()).unwrap();
        prop_assert!(rel(t, base) < 1e-9);
        prop_assert!(rel(s, c * c * base) < 1e-9);
    }

    #[test]
    fn adaptive_bandwidth_matches_pairwise_mean(a in matrix(2, 6), b in matrix(2, 4)) {
        let mut total = 0.0;
        for i in 0..6 {
            for j in 0..4 {
                let d = &a.column(i) - &b.column(j);
                total += d.dot(&d);
            }
        }
        let want = total / 24.0;
        prop_assume!(want > 1e-9);
        let got = kernels::adaptive_bandwidth(&a.view(), &b.view()).unwrap();
        prop_assert!(rel(got, want) < 1e-12);
    }

    #[test]
    fn gaussian_gram_is_symmetric_with_unit_diagonal(x in points(), s2 in 0.1..10.0_f64) {
        let k = kernels::gram(&x.view(), &x.view(), &Kernel::Gaussian { sigma2: s2 }).unwrap();
        prop_assert_eq!(&k, &k.t());
        prop_assert!(k.diag().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn ckb_is_invariant_to_sample_order((ds, dt) in labeled_pair(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..ds.len()).collect();
        perm.shuffle(&mut rng);
        let spec = KernelSpec::gaussian_adaptive();
        let a = discrepancy::ckb_sq(&ds, &dt, &spec, &spec, 1e-2).unwrap();
        let b = discrepancy::ckb_sq(&ds.select(&perm), &dt, &spec, &spec, 1e-2).unwrap();
        prop_assert!((a.value - b.value).abs() <= 1e-10 * a.scale());
    }

    #[test]
    fn linear_label_mmd_is_squared_mean_gap((ds, dt) in labeled_pair()) {
        let ys = ds.labels().unwrap();
        let yt = dt.labels().unwrap();
        let gap = ys.mean_axis(Axis(1)).unwrap() - yt.mean_axis(Axis(1)).unwrap();
        let r = discrepancy::label_mmd_sq(&ys, &yt, &KernelSpec::linear()).unwrap();
        prop_assert!((r.value - gap.dot(&gap)).abs() < 1e-12);
    }

    #[test]
    fn bures_of_commuting_matrices(a in prop::collection::vec(0.0..5.0_f64, 1..6), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = a.iter().map(|_| rand::Rng::random_range(&mut rng, 0.0..5.0)).collect();
        let want: f64 = a.iter().zip(&b).map(|(x, y)| (x.sqrt() - y.sqrt()).powi(2)).sum();
        let r = discrepancy::bures_sq(
            &Array2::from_diag(&ndarray::arr1(&a)).view(),
            &Array2::from_diag(&ndarray::arr1(&b)).view(),
        )
        .unwrap();
        prop_assert!((r.value - want).abs() < 1e-10 * r.scale());
    }

    #[test]
    fn b_matrix_spectrum_lies_in_unit_interval(x in points(), eps in 1e-3..1.0_f64) {
        use ndarray_linalg::{Eigh, UPLO};
        let k = kernels::gram(&x.view(), &x.view(), &Kernel::Linear).unwrap();
        let g = kernels::center(&k.view()).unwrap();
        let b = discrepancy::b_matrix(&g.view(), eps).unwrap();
        let (w, _) = b.eigh(UPLO::Lower).unwrap();
        prop_assert!(w.iter().all(|&v| v > 0.0 && v <= 1.0 + 1e-12));
    }
}
