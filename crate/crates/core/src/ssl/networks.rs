//! Backbone, projector, predictor and pixel decoder.
//!
//! Parameter names inside a bundle: `backbone.*`, `projector.*`,
//! `predictor.*`, `decoder.*`, and for BYOL the frozen copies
//! `target.backbone.*` and `target.projector.*`.

use serde::{Deserialize, Serialize};

use crate::error::{AdiosError, Result};
use crate::nn;
use crate::numerics::{Bound, ParamSet, Real, Var};
use crate::rng;
use crate::ssl::Objective;

pub const TARGET_PREFIX: &str = "target.";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    /// Stage widths; each stage halves the resolution.
    pub widths: Vec<usize>,
    pub groups: usize,
    pub proj_hidden: usize,
    pub proj_dim: usize,
    pub pred_hidden: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { widths: vec![16, 32, 64, 128], groups: 4, proj_hidden: 128, proj_dim: 64, pred_hidden: 128 }
    }
}

impl EncoderConfig {
    pub fn tiny() -> Self {
        Self { widths: vec![2, 3], groups: 1, proj_hidden: 4, proj_dim: 3, pred_hidden: 4 }
    }

    pub fn feature_dim(&self) -> usize {
        *self.widths.last().expect("validated")
    }

    pub fn validate(&self, image_size: usize) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(AdiosError::Config("encoder.widths must be non-empty and positive".into()));
        }
        if self.groups == 0 || self.proj_hidden == 0 || self.proj_dim == 0 || self.pred_hidden == 0 {
            return Err(AdiosError::Config("encoder sizes must be positive".into()));
        }
        let factor = 1usize << self.widths.len();
        if image_size == 0 || !image_size.is_multiple_of(factor) {
            return Err(AdiosError::Config(format!(
                "image size {image_size} is not divisible by {factor}, required by {} encoder stages",
                self.widths.len()
            )));
        }
        Ok(())
    }

    /// Output dim of the predictor: SimSiam compares it with `h`, BYOL with `z`.
    pub fn predictor_out(&self, objective: Objective) -> usize {
        match objective {
            Objective::SimSiam => self.feature_dim(),
            _ => self.proj_dim,
        }
    }
}

fn init_backbone(p: &mut ParamSet<f32>, cfg: &EncoderConfig, r: &mut rng::Rng) {
    let mut cin = 3;
    for (s, &w) in cfg.widths.iter().enumerate() {
        nn::init_conv(p, &format!("backbone.s{s}.conv1"), w, cin, 3, r);
        nn::init_group_norm(p, &format!("backbone.s{s}.gn1"), w);
        nn::init_conv(p, &format!("backbone.s{s}.conv2"), w, w, 3, r);
        nn::init_group_norm(p, &format!("backbone.s{s}.gn2"), w);
        cin = w;
    }
}

fn init_projector(p: &mut ParamSet<f32>, cfg: &EncoderConfig, r: &mut rng::Rng) {
    nn::init_linear(p, "projector.l0", cfg.proj_hidden, cfg.feature_dim(), r);
    nn::init_linear(p, "projector.l1", cfg.proj_dim, cfg.proj_hidden, r);
}

fn init_decoder(p: &mut ParamSet<f32>, cfg: &EncoderConfig, image_size: usize, r: &mut rng::Rng) {
    let side = image_size >> cfg.widths.len();
    let top = cfg.feature_dim();
    nn::init_linear(p, "decoder.fc", top * side * side, top, r);
    let mut cin = top;
    for (i, s) in (0..cfg.widths.len()).rev().enumerate() {
        let cout = cfg.widths[s.saturating_sub(1)];
        nn::init_conv_transpose(p, &format!("decoder.up{i}"), cin, cout, 2, r);
        cin = cout;
    }
    nn::init_conv(p, "decoder.out", 3, cin, 3, r);
}

/// All networks the objective needs, freshly initialised.
pub fn init_bundle(cfg: &EncoderConfig, objective: Objective, image_size: usize, seed: u64) -> Result<ParamSet<f32>> {
    cfg.validate(image_size)?;
    let mut r = rng::stream(seed, "init.encoder");
    let mut p = ParamSet::new();
    init_backbone(&mut p, cfg, &mut r);
    init_projector(&mut p, cfg, &mut r);
    match objective {
        Objective::SimSiam | Objective::Byol => {
            nn::init_linear(&mut p, "predictor.l0", cfg.pred_hidden, cfg.proj_dim, &mut r);
            nn::init_linear(&mut p, "predictor.l1", cfg.predictor_out(objective), cfg.pred_hidden, &mut r);
        }
        Objective::Ae => init_decoder(&mut p, cfg, image_size, &mut r),
        Objective::SimClr | Objective::Enc => {}
    }
    if objective == Objective::Byol {
        let mut target = p.filter_prefix("backbone.");
        target.extend(p.filter_prefix("projector."));
        let mut target = target.prefixed(TARGET_PREFIX);
        target.set_trainable(false);
        p.extend(target);
    }
    Ok(p)
}

/// `B×3×S×S` images to `B×d_h` features. `prefix` selects online or target weights.
pub fn backbone<'t, T: Real>(cfg: &EncoderConfig, b: &Bound<'t, T>, prefix: &str, x: Var<'t, T>) -> Var<'t, T> {
    let mut x = x;
    for (s, &w) in cfg.widths.iter().enumerate() {
        let g = nn::fit_groups(w, cfg.groups);
        let n = |part: &str| format!("{prefix}backbone.s{s}.{part}");
        let y = nn::conv(b, &n("conv1"), x, 2, 1);
        let y = nn::group_norm(b, &n("gn1"), y, g).relu();
        let z = nn::conv(b, &n("conv2"), y, 1, 1);
        let z = nn::group_norm(b, &n("gn2"), z, g);
        x = z.add(y).relu();
    }
    x.spatial_mean()
}

pub fn projector<'t, T: Real>(b: &Bound<'t, T>, prefix: &str, h: Var<'t, T>) -> Var<'t, T> {
    let a = nn::linear(b, &format!("{prefix}projector.l0"), h).relu();
    nn::linear(b, &format!("{prefix}projector.l1"), a)
}

pub fn predictor<'t, T: Real>(b: &Bound<'t, T>, z: Var<'t, T>) -> Var<'t, T> {
    let a = nn::linear(b, "predictor.l0", z).relu();
    nn::linear(b, "predictor.l1", a)
}

/// `B×d_h` features back to `B×3×S×S` pixels.
pub fn decoder<'t, T: Real>(cfg: &EncoderConfig, b: &Bound<'t, T>, h: Var<'t, T>, image_size: usize) -> Var<'t, T> {
    let side = image_size >> cfg.widths.len();
    let bsz = h.shape()[0];
    let mut x = nn::linear(b, "decoder.fc", h).relu().reshape(&[bsz, cfg.feature_dim(), side, side]);
    for i in 0..cfg.widths.len() {
        x = nn::conv_transpose(b, &format!("decoder.up{i}"), x, 2, 0).relu();
    }
    nn::conv(b, "decoder.out", x, 1, 1)
}
