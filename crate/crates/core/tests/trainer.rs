use adios::datasets::generate_shapes_dataset;
use adios::datasets::augment_two_views;
use adios::masks::occlusion_forward;
use adios::numerics::{sgd_momentum_step, warmup_cosine_lr, Binding, Tape};
use adios::ssl::{average, mask_objectives};
use rand::seq::SliceRandom;
use rand::Rng;
use adios::trainer::*;
use adios::ssl::Objective;

fn small_config() -> TrainConfig {
    let mut c = TrainConfig::default();
    c.trainer.epochs = 2;
    c.trainer.batch_size = 16;
    c.trainer.warmup_epochs = 1;
    c.occluder.n_masks = 2;
    c
}

#[test]
fn two_epochs_write_metrics_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let data = generate_shapes_dataset(64, 32, 3, 1).unwrap();
    let out = train_on(&cfg, &data, Some(dir.path())).unwrap();
    assert_eq!(out.records.len(), 8);
    let text = std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "step,epoch,objective_loss,penalty_mean,mask_cov_0,mask_cov_1,lr_encoder,lr_occluder,wall_ms"
    );
    assert_eq!(lines.count(), 8);
    let ck = load_checkpoint(&final_checkpoint_path(dir.path())).unwrap();
    assert_eq!(ck.state, out.state);
    assert_eq!(ck.config, cfg);

    // Same seed, same bytes.
    let dir2 = tempfile::tempdir().unwrap();
    train_on(&cfg, &data, Some(dir2.path())).unwrap();
    for f in [checkpoint::WEIGHTS, checkpoint::MANIFEST] {
        let a = std::fs::read(final_checkpoint_path(dir.path()).join(f)).unwrap();
        let b = std::fs::read(final_checkpoint_path(dir2.path()).join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn frozen_occluder_matches_fixed_initial_masks() {
    let mut cfg = small_config();
    cfg.trainer.epochs = 1;
    cfg.trainer.lr_occluder = 0.0;
    let data = generate_shapes_dataset(32, 32, 3, 2).unwrap();
    let a = train_on(&cfg, &data, None).unwrap();
    assert_eq!(a.state.occluder, TrainState::new(&cfg).unwrap().occluder);

    // Replay: masks from the initial occluder enter as constants.
    let init = TrainState::new(&cfg).unwrap();
    let occ0 = init.occluder.clone().unwrap();
    let (mut enc, mut mom) = (init.encoder.clone(), adios::numerics::ParamSet::new());
    let spe = data.len() / cfg.trainer.batch_size;
    let total = cfg.trainer.epochs * spe;
    let warmup = cfg.warmup_steps(spe, total);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut adios::rng::indexed(cfg.seed, "data.shuffle", 0));
    for (step, chunk) in order.chunks_exact(cfg.trainer.batch_size).enumerate() {
        let batch = data.batch(chunk).unwrap();
        let seed: u64 = adios::rng::indexed(cfg.seed, "augment", step as u64).random();
        let (va, vb) = augment_two_views(&batch, &cfg.augment, seed);
        let masks = occlusion_forward(&cfg.occluder, &occ0, &va.images).unwrap().as_batch().unwrap();
        let lr = warmup_cosine_lr(step, total, warmup, cfg.trainer.lr_encoder).unwrap();
        let tape = Tape::new();
        let b = enc.bind(&tape, Binding::Train);
        let m = tape.constant(masks);
        let slots: Vec<_> = (0..cfg.occluder.n_masks).map(|k| m.select_channel(k)).collect();
        let terms =
            mask_objectives(&cfg.ssl, &b, tape.constant(va.images.clone()), tape.constant(vb.images.clone()), &slots, None)
                .unwrap();
        let g = b.grads(&tape.backward(average(&terms)));
        sgd_momentum_step(&mut enc, &g, lr, cfg.trainer.momentum, &mut mom).unwrap();
    }
    assert!(enc == a.state.encoder, "trajectories differ");
}

#[test]
fn reported_total_is_mask_average() {
    let cfg = small_config();
    let data = generate_shapes_dataset(16, 32, 3, 3).unwrap();
    let batch = data.batch(&(0..16).collect::<Vec<_>>()).unwrap();
    let state = TrainState::new(&cfg).unwrap();
    let tape = Tape::new();
    let enc = state.encoder.bind(&tape, Binding::Frozen);
    let occ = state.occluder.as_ref().unwrap().bind(&tape, Binding::Frozen);
    let (va, vb) = (tape.constant(batch.images.clone()), tape.constant(batch.images.clone()));
    let t = adios_terms(&cfg.ssl, &cfg.occluder, &enc, &occ, va, vb, None).unwrap();
    let mean: f64 = t.terms.iter().map(|v| v.item() as f64).sum::<f64>() / t.terms.len() as f64;
    assert!((t.objective.item() as f64 - mean).abs() < 1e-6);
    let mut s = state.clone();
    let m = adios_step(&cfg, &mut s, &batch, &batch, 0.0, 0.0).unwrap();
    assert!((m.objective_loss - mean).abs() < 1e-6);
}

#[test]
fn every_scheme_and_objective_steps() {
    let data = generate_shapes_dataset(8, 32, 3, 4).unwrap();
    let batch = data.batch(&(0..4).collect::<Vec<_>>()).unwrap();
    for scheme in Scheme::ALL {
        for obj in [Objective::SimClr, Objective::Byol] {
            let mut cfg = small_config();
            cfg.trainer.scheme = scheme;
            cfg.ssl.objective = obj;
            let mut state = TrainState::new(&cfg).unwrap();
            let m = run_step(&cfg, &mut state, &batch, 10, 2).unwrap();
            assert!(m.objective_loss.is_finite(), "{scheme}/{obj}");
        }
    }
}
