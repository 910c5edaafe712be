//! Single optimisation steps: full ADIOS, the single-mask ADIOS-s variant,
//! and encoder-only training under fixed masks.

use std::time::Instant;

use rand::Rng;

use crate::datasets::ImageBatch;
use crate::error::{AdiosError, Result};
use crate::masks::{
    beit_blockwise_mask, gt_batch_masks, mae_random_mask, mean_penalty, occluder_forward, penalty_per_slot,
    schemes::shuffle_permutation, MaskOrigin, MaskSet, OccluderConfig,
};
use crate::numerics::{ema_update, sgd_momentum_step, Binding, Bound, ParamSet, Real, Tape, Tensor, Var};
use crate::rng;
use crate::ssl::{average, mask_objectives, Objective, SslConfig, TARGET_PREFIX};
use crate::trainer::config::{Scheme, TrainConfig};

/// Bookkeeping for one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepMetrics {
    /// Encoder-side objective, averaged over the mask terms that were used.
    pub objective_loss: f64,
    /// `L⁽ⁿ⁾` for each mask term that was evaluated.
    pub per_mask_losses: Vec<f64>,
    /// Batch-mean penalty of every slot.
    pub penalties: Vec<f64>,
    pub penalty_mean: f64,
    /// Batch-mean coverage of every slot (view A).
    pub mask_coverage: Vec<f64>,
    pub lr_encoder: f64,
    pub lr_occluder: f64,
    pub wall_ms: f64,
    /// Slot used by ADIOS-s.
    pub sampled_slot: Option<usize>,
}

/// Mutable model state carried across steps.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub encoder: ParamSet<f32>,
    pub encoder_momentum: ParamSet<f32>,
    pub occluder: Option<ParamSet<f32>>,
    pub occluder_momentum: ParamSet<f32>,
    pub step: usize,
    pub epoch: usize,
}

impl TrainState {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        let size = cfg.model_size();
        let encoder = crate::ssl::init_bundle(&cfg.ssl.encoder, cfg.ssl.objective, size, cfg.seed)?;
        let occluder = if cfg.trainer.scheme.is_learned() {
            Some(crate::masks::init_occluder(&cfg.occluder, size, cfg.seed)?)
        } else {
            None
        };
        Ok(Self { encoder, encoder_momentum: ParamSet::new(), occluder, occluder_momentum: ParamSet::new(), step: 0, epoch: 0 })
    }
}

/// Terms of the min-max objective for one batch.
pub struct AdiosTerms<'t, T: Real> {
    /// `L⁽ⁿ⁾` per evaluated slot.
    pub terms: Vec<Var<'t, T>>,
    /// Average of `terms`.
    pub objective: Var<'t, T>,
    /// `(1/N)Σₙ pₙ`, batch-averaged, over all `N` slots.
    pub penalty: Var<'t, T>,
    /// `B×N` per-slot penalties.
    pub penalties: Var<'t, T>,
    /// `B×N×H×W` masks of view A.
    pub masks_a: Var<'t, T>,
}

/// Builds the ADIOS objective. `slot = Some(k)` evaluates only mask `k`.
pub fn adios_terms<'t, T: Real>(
    ssl: &SslConfig,
    occ_cfg: &OccluderConfig,
    enc: &Bound<'t, T>,
    occ: &Bound<'t, T>,
    view_a: Var<'t, T>,
    view_b: Var<'t, T>,
    slot: Option<usize>,
) -> Result<AdiosTerms<'t, T>> {
    let n = occ_cfg.n_masks;
    let masks_a = occluder_forward(occ_cfg, occ, view_a)?;
    let slots: Vec<usize> = match slot {
        Some(k) if k >= n => return Err(AdiosError::Config(format!("slot {k} out of {n}"))),
        Some(k) => vec![k],
        None => (0..n).collect(),
    };
    let sel_a: Vec<_> = slots.iter().map(|&k| masks_a.select_channel(k)).collect();
    let masks_b =
        if ssl.objective.masks_both_views() { Some(occluder_forward(occ_cfg, occ, view_b)?) } else { None };
    let sel_b: Option<Vec<_>> = masks_b.map(|m| slots.iter().map(|&k| m.select_channel(k)).collect());
    let terms = mask_objectives(ssl, enc, view_a, view_b, &sel_a, sel_b.as_deref())?;
    let objective = average(&terms);
    let penalties = penalty_per_slot(masks_a);
    // With both views masked, both views' masks are penalised.
    let penalty = match masks_b {
        Some(mb) => mean_penalty(masks_a).add(mean_penalty(mb)).scale(T::c(0.5)),
        None => mean_penalty(masks_a),
    };
    Ok(AdiosTerms { terms, objective, penalty, penalties, masks_a })
}

/// The occluder's descent objective `−L + λ·p`.
pub fn occluder_loss<'t, T: Real>(terms: &AdiosTerms<'t, T>, lambda: f64) -> Var<'t, T> {
    terms.objective.neg().add(terms.penalty.scale(T::c(lambda)))
}

fn finite_or(what: &str, v: f64, coverage: &[f64], lr_e: f64, lr_o: f64) -> Result<()> {
    if v.is_finite() {
        return Ok(());
    }
    Err(AdiosError::NonFinite(format!(
        "{what} is {v}; mask coverage {coverage:?}, lr encoder {lr_e}, lr occluder {lr_o}"
    )))
}

fn coverage_of(masks: &Tensor<f32>) -> Vec<f64> {
    let (b, n, hw) = (masks.dim(0), masks.dim(1), masks.dim(2) * masks.dim(3));
    (0..n)
        .map(|k| {
            let s: f64 = (0..b).map(|i| masks.data()[(i * n + k) * hw..(i * n + k + 1) * hw].iter().map(|&v| v as f64).sum::<f64>()).sum();
            s / (b * hw) as f64
        })
        .collect()
}

fn column_means(t: &Tensor<f32>) -> Vec<f64> {
    let (b, n) = (t.dim(0), t.dim(1));
    (0..n).map(|k| (0..b).map(|i| t.data()[i * n + k] as f64).sum::<f64>() / b as f64).collect()
}

fn byol_ema(cfg: &SslConfig, params: &mut ParamSet<f32>) -> Result<()> {
    if cfg.objective != Objective::Byol {
        return Ok(());
    }
    let mut online = params.filter_prefix("backbone.");
    online.extend(params.filter_prefix("projector."));
    let mut target = params.strip_prefix(TARGET_PREFIX);
    ema_update(&mut target, &online, cfg.ema_tau)?;
    for (name, p) in target.iter() {
        *params.get_mut(&format!("{TARGET_PREFIX}{name}")).expect("target entry") = p.tensor.clone();
    }
    Ok(())
}

fn encoder_update(cfg: &TrainConfig, state: &mut TrainState, grads: &ParamSet<f32>, lr: f64) -> Result<()> {
    sgd_momentum_step(&mut state.encoder, grads, lr, cfg.trainer.momentum, &mut state.encoder_momentum)?;
    byol_ema(&cfg.ssl, &mut state.encoder)
}

/// One ADIOS step: encoder descent on `(1/N)ΣL⁽ⁿ⁾`, then occluder descent on
/// `−(1/N)ΣL⁽ⁿ⁾ + λ·p` against the updated, frozen encoder. `slot` restricts
/// the objective to one mask (ADIOS-s).
pub fn adios_step_with_slot(
    cfg: &TrainConfig,
    state: &mut TrainState,
    view_a: &ImageBatch,
    view_b: &ImageBatch,
    lr_e: f64,
    lr_o: f64,
    slot: Option<usize>,
) -> Result<StepMetrics> {
    let start = Instant::now();
    if state.occluder.is_none() {
        return Err(AdiosError::Config("scheme needs an occluder".into()));
    }

    // Encoder update with the occluder frozen.
    let (objective, per_mask, penalties, penalty_mean, coverage, enc_grads) = {
        let tape = Tape::new();
        let enc = state.encoder.bind(&tape, Binding::Train);
        let occ = state.occluder.as_ref().expect("checked").bind(&tape, Binding::Frozen);
        let (va, vb) = (tape.constant(view_a.images.clone()), tape.constant(view_b.images.clone()));
        let t = adios_terms(&cfg.ssl, &cfg.occluder, &enc, &occ, va, vb, slot)?;
        let coverage = coverage_of(&t.masks_a.value());
        let objective = t.objective.item() as f64;
        finite_or("objective", objective, &coverage, lr_e, lr_o)?;
        let grads = tape.backward(t.objective);
        (
            objective,
            t.terms.iter().map(|v| v.item() as f64).collect::<Vec<_>>(),
            column_means(&t.penalties.value()),
            t.penalty.item() as f64,
            coverage,
            enc.grads(&grads),
        )
    };
    encoder_update(cfg, state, &enc_grads, lr_e)?;

    // Occluder update with the freshly updated encoder frozen.
    let occ_grads = {
        let tape = Tape::new();
        let enc = state.encoder.bind(&tape, Binding::Frozen);
        let occ = state.occluder.as_ref().expect("checked").bind(&tape, Binding::Train);
        let (va, vb) = (tape.constant(view_a.images.clone()), tape.constant(view_b.images.clone()));
        let t = adios_terms(&cfg.ssl, &cfg.occluder, &enc, &occ, va, vb, slot)?;
        let loss = occluder_loss(&t, cfg.trainer.lambda);
        finite_or("occluder loss", loss.item() as f64, &coverage, lr_e, lr_o)?;
        occ.grads(&tape.backward(loss))
    };
    let occ_params = state.occluder.as_mut().expect("checked above");
    sgd_momentum_step(occ_params, &occ_grads, lr_o, cfg.trainer.momentum, &mut state.occluder_momentum)?;

    Ok(StepMetrics {
        objective_loss: objective,
        per_mask_losses: per_mask,
        penalties,
        penalty_mean,
        mask_coverage: coverage,
        lr_encoder: lr_e,
        lr_occluder: lr_o,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        sampled_slot: slot,
    })
}

pub fn adios_step(
    cfg: &TrainConfig,
    state: &mut TrainState,
    view_a: &ImageBatch,
    view_b: &ImageBatch,
    lr_e: f64,
    lr_o: f64,
) -> Result<StepMetrics> {
    adios_step_with_slot(cfg, state, view_a, view_b, lr_e, lr_o, None)
}

/// ADIOS-s: one slot `k ~ U{0..N−1}` per batch for the objective; the penalty
/// still averages all `N` slots.
pub fn adios_s_step(
    cfg: &TrainConfig,
    state: &mut TrainState,
    view_a: &ImageBatch,
    view_b: &ImageBatch,
    lr_e: f64,
    lr_o: f64,
    r: &mut rng::Rng,
) -> Result<StepMetrics> {
    let k = r.random_range(0..cfg.occluder.n_masks);
    adios_step_with_slot(cfg, state, view_a, view_b, lr_e, lr_o, Some(k))
}

/// Masks of a non-learned scheme for one view.
pub fn scheme_masks(cfg: &TrainConfig, scheme: Scheme, view: &ImageBatch, seed: u64, perm: Option<&[usize]>) -> Result<MaskSet> {
    let (b, (h, w)) = (view.len(), view.image_size());
    let t = &cfg.trainer;
    let mut r = rng::stream(seed, "mask.seeds");
    let masks: Vec<Tensor<f32>> = match scheme {
        Scheme::None => (0..b).map(|_| Tensor::ones(&[1, h, w])).collect(),
        Scheme::Mae => (0..b).map(|_| mae_random_mask(h, t.mae_patch, t.mae_ratio, r.random())).collect::<Result<_>>()?,
        Scheme::Beit => {
            (0..b).map(|_| beit_blockwise_mask(h, t.beit_patch, t.beit_ratio, r.random())).collect::<Result<_>>()?
        }
        Scheme::GtObject | Scheme::FgBg | Scheme::Box | Scheme::ShuffledGt => {
            let inst = view
                .masks
                .as_ref()
                .ok_or_else(|| AdiosError::Config(format!("scheme {scheme} needs ground-truth instance masks")))?;
            gt_batch_masks(inst, scheme.gt_variant().expect("gt scheme"), perm)?
        }
        Scheme::Adios | Scheme::AdiosS => {
            return Err(AdiosError::Config(format!("{scheme} masks come from the occluder")));
        }
    };
    let origin = match scheme {
        Scheme::None => MaskOrigin::None,
        Scheme::Mae => MaskOrigin::Mae,
        Scheme::Beit => MaskOrigin::Beit,
        Scheme::GtObject => MaskOrigin::GtObject,
        Scheme::FgBg => MaskOrigin::FgBg,
        Scheme::Box => MaskOrigin::Box,
        _ => MaskOrigin::ShuffledGt,
    };
    MaskSet::new(masks, origin)
}

/// One uniformly drawn slot per sample, as `B×1×H×W`.
fn sample_slots(set: &MaskSet, r: &mut rng::Rng) -> Result<Tensor<f32>> {
    let slots: Vec<usize> = (0..set.len()).map(|i| r.random_range(0..set.slots(i))).collect();
    set.select(&slots)
}

/// Encoder-only step under a fixed masking scheme. Every sample uses one
/// mask slot drawn uniformly from its own stack.
pub fn fixed_mask_step(
    cfg: &TrainConfig,
    state: &mut TrainState,
    view_a: &ImageBatch,
    view_b: &ImageBatch,
    scheme: Scheme,
    lr_e: f64,
    seed: u64,
) -> Result<StepMetrics> {
    let start = Instant::now();
    let perm = (scheme == Scheme::ShuffledGt).then(|| shuffle_permutation(view_a.len(), seed));
    let mut r = rng::stream(seed, "mask.slots");
    let set_a = scheme_masks(cfg, scheme, view_a, rng::indexed(seed, "mask.a", 0).random(), perm.as_deref())?;
    let mask_a = sample_slots(&set_a, &mut r)?;
    let mask_b = if cfg.ssl.objective.masks_both_views() {
        let set_b = scheme_masks(cfg, scheme, view_b, rng::indexed(seed, "mask.b", 0).random(), perm.as_deref())?;
        Some(sample_slots(&set_b, &mut r)?)
    } else {
        None
    };
    let coverage = coverage_of(&mask_a);
    let penalty = {
        let hw = mask_a.dim(2) * mask_a.dim(3);
        let b = mask_a.dim(0);
        (0..b)
            .map(|i| {
                let m: Vec<f64> = mask_a.data()[i * hw..(i + 1) * hw].iter().map(|&v| v as f64).collect();
                crate::masks::sparsity_penalty(&m)
            })
            .sum::<f64>()
            / b as f64
    };

    let (objective, grads) = {
        let tape = Tape::new();
        let enc = state.encoder.bind(&tape, Binding::Train);
        let (va, vb) = (tape.constant(view_a.images.clone()), tape.constant(view_b.images.clone()));
        let ma = [tape.constant(mask_a)];
        let mb = mask_b.map(|m| [tape.constant(m)]);
        let terms = mask_objectives(&cfg.ssl, &enc, va, vb, &ma, mb.as_ref().map(|m| &m[..]))?;
        let obj = terms[0];
        let value = obj.item() as f64;
        finite_or("objective", value, &coverage, lr_e, 0.0)?;
        (value, enc.grads(&tape.backward(obj)))
    };
    encoder_update(cfg, state, &grads, lr_e)?;
    Ok(StepMetrics {
        objective_loss: objective,
        per_mask_losses: vec![objective],
        penalties: vec![penalty],
        penalty_mean: penalty,
        mask_coverage: coverage,
        lr_encoder: lr_e,
        lr_occluder: 0.0,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        sampled_slot: None,
    })
}
