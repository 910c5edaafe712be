//! The adversarial training loop and its checkpoints.

pub mod checkpoint;
pub mod config;
pub mod steps;

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::Rng;

pub use checkpoint::{load_checkpoint, read_manifest, save_checkpoint, Checkpoint, Manifest};
pub use config::{apply_override, DataConfig, DataSource, EvalConfig, Scheme, TrainConfig, TrainerConfig};
pub use steps::{
    adios_s_step, adios_step, adios_step_with_slot, adios_terms, fixed_mask_step, occluder_loss, scheme_masks,
    StepMetrics, TrainState,
};

use crate::datasets::{augment_two_views, generate_shapes_dataset, load_image_folder, Dataset};
use crate::error::{AdiosError, Result};
use crate::numerics::warmup_cosine_lr;
use crate::rng;

pub const METRICS_FILE: &str = "metrics.csv";
pub const FINAL_CHECKPOINT: &str = "checkpoint";

/// Coverage band and run length of the collapse warning.
pub const COLLAPSE_BAND: (f64, f64) = (0.02, 0.98);
pub const COLLAPSE_STEPS: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub metrics: StepMetrics,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub records: Vec<StepRecord>,
    pub collapse_warnings: usize,
    pub skipped_steps: usize,
}

/// Train and held-out splits. Shapes data is generated once and split, so
/// both come from the same distribution.
pub fn load_datasets(cfg: &DataConfig, data_seed: u64) -> Result<(Dataset, Option<Dataset>)> {
    match cfg.source {
        DataSource::Shapes => {
            let mut all = generate_shapes_dataset(cfg.count + cfg.test_count, cfg.image_size, cfg.max_objects, data_seed)?;
            let test = all.samples.split_off(cfg.count);
            Ok((all, (!test.is_empty()).then_some(Dataset { samples: test })))
        }
        DataSource::Folder => {
            let path = cfg.path.as_ref().ok_or_else(|| AdiosError::Config("data.path is not set".into()))?;
            let train = load_image_folder(path)?;
            let test = cfg.test_path.as_ref().map(|p| load_image_folder(p)).transpose()?;
            Ok((train, test))
        }
    }
}

/// Number of mask columns in the metrics file.
pub fn metric_slots(cfg: &TrainConfig) -> usize {
    if cfg.trainer.scheme.is_learned() {
        cfg.occluder.n_masks
    } else {
        1
    }
}

pub fn metrics_header(slots: usize) -> Vec<String> {
    let mut h: Vec<String> = ["step", "epoch", "objective_loss", "penalty_mean"].iter().map(|s| s.to_string()).collect();
    h.extend((0..slots).map(|k| format!("mask_cov_{k}")));
    h.extend(["lr_encoder", "lr_occluder", "wall_ms"].iter().map(|s| s.to_string()));
    h
}

fn metrics_row(r: &StepRecord) -> Vec<String> {
    let m = &r.metrics;
    let mut row = vec![r.step.to_string(), r.epoch.to_string(), m.objective_loss.to_string(), m.penalty_mean.to_string()];
    row.extend(m.mask_coverage.iter().map(|c| c.to_string()));
    row.extend([m.lr_encoder.to_string(), m.lr_occluder.to_string(), format!("{:.3}", m.wall_ms)]);
    row
}

struct CollapseGuard {
    runs: Vec<usize>,
    warnings: usize,
}

impl CollapseGuard {
    fn observe(&mut self, step: usize, coverage: &[f64]) {
        self.runs.resize(coverage.len(), 0);
        for (k, &c) in coverage.iter().enumerate() {
            if c < COLLAPSE_BAND.0 || c > COLLAPSE_BAND.1 {
                self.runs[k] += 1;
                if self.runs[k] == COLLAPSE_STEPS {
                    self.warnings += 1;
                    warn!("step {step}: mask slot {k} coverage {c:.4} outside {COLLAPSE_BAND:?} for {COLLAPSE_STEPS} steps (possible collapse)");
                }
            } else {
                self.runs[k] = 0;
            }
        }
    }
}

/// Runs one step of whichever scheme the config selects.
pub fn run_step(cfg: &TrainConfig, state: &mut TrainState, batch: &crate::datasets::ImageBatch, total: usize, warmup: usize) -> Result<StepMetrics> {
    let step = state.step as u64;
    let seed = cfg.seed;
    let aug_seed: u64 = rng::indexed(seed, "augment", step).random();
    let (va, vb) = augment_two_views(batch, &cfg.augment, aug_seed);
    let t = &cfg.trainer;
    let lr_e = warmup_cosine_lr(state.step, total, warmup, t.lr_encoder)?;
    let lr_o = warmup_cosine_lr(state.step, total, warmup, t.lr_occluder)?;
    match t.scheme {
        Scheme::Adios => adios_step(cfg, state, &va, &vb, lr_e, lr_o),
        Scheme::AdiosS => adios_s_step(cfg, state, &va, &vb, lr_e, lr_o, &mut rng::indexed(seed, "adios_s", step)),
        s => fixed_mask_step(cfg, state, &va, &vb, s, lr_e, rng::indexed(seed, "mask", step).random()),
    }
}

/// Trains on `data`, writing `metrics.csv` and checkpoints under `out` when given.
pub fn train_on(cfg: &TrainConfig, data: &Dataset, out: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.trainer.scheme.gt_variant().is_some() && !data.has_masks() {
        return Err(AdiosError::Config(format!("scheme {} needs a dataset with instance masks", cfg.trainer.scheme)));
    }
    let bs = cfg.trainer.batch_size;
    let spe = data.len() / bs;
    if spe == 0 {
        return Err(AdiosError::Config(format!("{} samples do not fill one batch of {bs}", data.len())));
    }
    let total = cfg.trainer.epochs * spe;
    let warmup = cfg.warmup_steps(spe, total);
    let mut state = TrainState::new(cfg)?;

    let mut writer = match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| AdiosError::io(dir, e))?;
            let path = dir.join(METRICS_FILE);
            let mut w = csv::Writer::from_path(&path).map_err(|e| AdiosError::Data(format!("{}: {e}", path.display())))?;
            w.write_record(metrics_header(metric_slots(cfg))).map_err(|e| AdiosError::Data(e.to_string()))?;
            Some(w)
        }
        None => None,
    };

    let mut records = Vec::with_capacity(total);
    let mut guard = CollapseGuard { runs: Vec::new(), warnings: 0 };
    let (mut consecutive_bad, mut skipped) = (0usize, 0usize);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.trainer.epochs {
        state.epoch = epoch;
        order.sort_unstable();
        order.shuffle(&mut rng::indexed(cfg.seed, "data.shuffle", epoch as u64));
        for chunk in order.chunks_exact(bs) {
            let batch = data.batch(chunk)?;
            let before = state.clone();
            match run_step(cfg, &mut state, &batch, total, warmup) {
                Ok(m) => {
                    consecutive_bad = 0;
                    guard.observe(state.step, &m.mask_coverage);
                    let rec = StepRecord { step: state.step, epoch, metrics: m };
                    if let Some(w) = writer.as_mut() {
                        w.write_record(metrics_row(&rec)).map_err(|e| AdiosError::Data(e.to_string()))?;
                        w.flush().map_err(|e| AdiosError::Data(e.to_string()))?;
                    }
                    records.push(rec);
                    state.step += 1;
                }
                Err(AdiosError::NonFinite(msg)) => {
                    state = before;
                    state.step += 1;
                    consecutive_bad += 1;
                    skipped += 1;
                    warn!("step {}: skipped, {msg}", state.step - 1);
                    if consecutive_bad >= 2 {
                        return Err(AdiosError::NonFinite(format!(
                            "halted at step {} after two consecutive non-finite steps; last: {msg}",
                            state.step - 1
                        )));
                    }
                }
                Err(e) => return Err(e),
            }
        }
        state.epoch = epoch + 1;
        info!("epoch {}/{} done, step {}", epoch + 1, cfg.trainer.epochs, state.step);
        if let Some(dir) = out {
            let every = cfg.trainer.checkpoint_every;
            if every > 0 && (epoch + 1) % every == 0 && epoch + 1 < cfg.trainer.epochs {
                save_checkpoint(&state, cfg, &dir.join(format!("checkpoint_epoch{}", epoch + 1)))?;
            }
        }
    }
    if let Some(dir) = out {
        save_checkpoint(&state, cfg, &dir.join(FINAL_CHECKPOINT))?;
    }
    Ok(TrainOutcome { state, records, collapse_warnings: guard.warnings, skipped_steps: skipped })
}

/// Loads the configured dataset and trains on its training split.
pub fn train(cfg: &TrainConfig, out: Option<&Path>) -> Result<TrainOutcome> {
    let (data, _) = load_datasets(&cfg.data, cfg.data_seed())?;
    train_on(cfg, &data, out)
}

pub fn final_checkpoint_path(out: &Path) -> PathBuf {
    out.join(FINAL_CHECKPOINT)
}
