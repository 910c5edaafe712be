use proptest::prelude::*;

use adios::eval::{clustering_scores, multilabel_f1, Averaging};
use adios::masks::{apply_mask, init_occluder, occlusion_forward, penalty_from_coverage, OccluderConfig};
use adios::numerics::{warmup_cosine_lr, Tape, Tensor};
use adios::ssl::{loss_simclr, normalized_mse};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, rows * cols)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn occluder_masks_partition_unity(seed in 0u64..1000, n in 1usize..5) {
        let cfg = OccluderConfig::tiny(n);
        let params = init_occluder(&cfg, 8, seed).unwrap();
        let x: Vec<f32> = (0..2 * 3 * 64).map(|i| ((i as u64 * 2654435761 + seed) % 997) as f32 / 997.0).collect();
        let m = occlusion_forward(&cfg, &params, &Tensor::new(&[2, 3, 8, 8], x).unwrap()).unwrap().as_batch().unwrap();
        for b in 0..2 {
            for q in 0..64 {
                let s: f32 = (0..n).map(|k| m.data()[(b * n + k) * 64 + q]).sum();
                prop_assert!((s - 1.0).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn penalty_symmetric_positive(c in 0.0f64..1.0) {
        let (a, b) = (penalty_from_coverage(c), penalty_from_coverage(1.0 - c));
        prop_assert!(a >= 1.0 - 1e-12 && a.is_finite());
        prop_assert!((a - b).abs() <= 1e-9 * a);
    }

    #[test]
    fn all_ones_mask_is_identity(x in prop::collection::vec(0.0f32..1.0, 2 * 3 * 16)) {
        let img = Tensor::new(&[2, 3, 4, 4], x).unwrap();
        let out = apply_mask(&img, &Tensor::ones(&[2, 1, 4, 4])).unwrap();
        prop_assert_eq!(out, img);
    }

    #[test]
    fn schedule_bounded(total in 2usize..500, frac in 0.0f64..1.0, at in 0.0f64..1.0) {
        let warmup = ((total - 1) as f64 * frac) as usize;
        let step = (total as f64 * at) as usize;
        let lr = warmup_cosine_lr(step, total, warmup, 0.3).unwrap();
        prop_assert!((0.0..=0.3 + 1e-12).contains(&lr));
    }

    #[test]
    fn cosine_losses_scale_invariant(a in matrix(4, 3), b in matrix(4, 3), c in prop_oneof![Just(0.5), Just(3.0)]) {
        prop_assume!(a.chunks(3).chain(b.chunks(3)).all(|r| r.iter().map(|v| v * v).sum::<f64>() > 1e-3));
        let tape = Tape::new();
        let (za, zb) = (Tensor::new(&[4, 3], a).unwrap(), Tensor::new(&[4, 3], b).unwrap());
        let scaled = za.map(|v| v * c);
        let l = loss_simclr(tape.constant(za.clone()), tape.constant(zb.clone()), 0.2).unwrap().item();
        let ls = loss_simclr(tape.constant(scaled.clone()), tape.constant(zb.clone()), 0.2).unwrap().item();
        prop_assert!((l - ls).abs() <= 1e-5);
        let m = normalized_mse(tape.constant(za), tape.constant(zb.clone())).item();
        let ms = normalized_mse(tape.constant(scaled), tape.constant(zb)).item();
        prop_assert!((m - ms).abs() <= 1e-5);
    }

    #[test]
    fn cluster_scores_ignore_label_names(
        pred in prop::collection::vec(0usize..4, 2..12),
        shift in 1usize..4,
    ) {
        let truth: Vec<usize> = pred.iter().enumerate().map(|(i, &p)| (p + i) % 3).collect();
        let renamed: Vec<usize> = pred.iter().map(|&p| (p + shift) % 4).collect();
        let (a, b) = (clustering_scores(&pred, &truth).unwrap(), clustering_scores(&renamed, &truth).unwrap());
        prop_assert!((a.ari - b.ari).abs() < 1e-12 && (a.nmi - b.nmi).abs() < 1e-12 && (a.fmi - b.fmi).abs() < 1e-12);
        let sym = clustering_scores(&truth, &pred).unwrap();
        prop_assert!((a.ari - sym.ari).abs() < 1e-12 && (a.nmi - sym.nmi).abs() < 1e-12);
    }

    #[test]
    fn perfect_multilabel_scores_one(t in prop::collection::vec(prop::collection::vec(any::<bool>(), 5), 1..10)) {
        prop_assume!(t.iter().flatten().any(|&v| v));
        for avg in Averaging::ALL {
            prop_assert!((multilabel_f1(&t, &t, avg).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
