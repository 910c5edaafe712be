//! Encoder networks and self-supervised objectives, including how each
//! objective consumes a mask.

pub mod losses;
pub mod networks;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use losses::{loss_ae, loss_byol, loss_enc, loss_simclr, loss_simsiam, neg_cosine, neg_cosine_rows, normalized_mse};
pub use networks::{backbone, decoder, init_bundle, predictor, projector, EncoderConfig, TARGET_PREFIX};

use crate::error::{AdiosError, Result};
use crate::numerics::{Binding, Bound, ParamSet, Real, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    SimClr,
    SimSiam,
    Byol,
    Enc,
    Ae,
}

impl Objective {
    pub const ALL: [Objective; 5] = [Objective::SimClr, Objective::SimSiam, Objective::Byol, Objective::Enc, Objective::Ae];

    pub fn has_predictor(self) -> bool {
        matches!(self, Objective::SimSiam | Objective::Byol)
    }

    /// Whether view B is also masked (on the gradient branch).
    pub fn masks_both_views(self) -> bool {
        self.has_predictor()
    }

    pub fn is_contrastive(self) -> bool {
        self == Objective::SimClr
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::SimClr => "simclr",
            Objective::SimSiam => "simsiam",
            Objective::Byol => "byol",
            Objective::Enc => "enc",
            Objective::Ae => "ae",
        })
    }
}

impl FromStr for Objective {
    type Err = AdiosError;
    fn from_str(s: &str) -> Result<Self> {
        Objective::ALL
            .into_iter()
            .find(|o| o.to_string() == s)
            .ok_or_else(|| AdiosError::Config(format!("unknown objective {s:?} (simclr, simsiam, byol, enc, ae)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SslConfig {
    pub objective: Objective,
    /// Contrastive temperature.
    pub temperature: f64,
    /// EMA coefficient of the BYOL target.
    pub ema_tau: f64,
    pub encoder: EncoderConfig,
}

impl Default for SslConfig {
    fn default() -> Self {
        Self { objective: Objective::SimClr, temperature: 0.2, ema_tau: 0.99, encoder: EncoderConfig::default() }
    }
}

impl SslConfig {
    pub fn validate(&self, image_size: usize) -> Result<()> {
        if self.temperature <= 0.0 || !self.temperature.is_finite() {
            return Err(AdiosError::Config(format!("ssl.temperature {} must be positive", self.temperature)));
        }
        if !(0.0..1.0).contains(&self.ema_tau) {
            return Err(AdiosError::Config(format!("ssl.ema_tau {} outside [0, 1)", self.ema_tau)));
        }
        self.encoder.validate(image_size)
    }
}

/// Encoder outputs for a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingBatch {
    pub h: Tensor<f32>,
    pub z: Tensor<f32>,
    pub y: Option<Tensor<f32>>,
}

/// Inference pass: backbone features, projections and (if present) predictions.
pub fn encode_project(cfg: &SslConfig, params: &ParamSet<f32>, images: &Tensor<f32>) -> Result<EmbeddingBatch> {
    check_images(cfg, images.shape())?;
    let tape = Tape::new();
    let b = params.bind(&tape, Binding::Frozen);
    let h = backbone(&cfg.encoder, &b, "", tape.constant(images.clone()));
    let z = projector(&b, "", h);
    let y = cfg.objective.has_predictor().then(|| predictor(&b, z).value().as_ref().clone());
    Ok(EmbeddingBatch { h: h.value().as_ref().clone(), z: z.value().as_ref().clone(), y })
}

/// Backbone features only, in chunks to bound memory.
pub fn extract_h(cfg: &EncoderConfig, params: &ParamSet<f32>, images: &Tensor<f32>, chunk: usize) -> Tensor<f32> {
    let n = images.dim(0);
    let mut out = Vec::with_capacity(n * cfg.feature_dim());
    let mut start = 0;
    while start < n {
        let end = (start + chunk.max(1)).min(n);
        let tape = Tape::new();
        let b = params.bind(&tape, Binding::Frozen);
        let h = backbone(cfg, &b, "", tape.constant(images.slice_outer(start, end)));
        out.extend_from_slice(h.value().data());
        start = end;
    }
    Tensor::new(&[n, cfg.feature_dim()], out).expect("sizes agree")
}

fn check_images(cfg: &SslConfig, shape: &[usize]) -> Result<()> {
    if shape.len() != 4 || shape[1] != 3 || shape[2] != shape[3] || shape[0] == 0 {
        return Err(AdiosError::Shape(format!("expected B×3×S×S images, got {shape:?}")));
    }
    cfg.encoder.validate(shape[2])
}

/// Online `z` (or `h` for the backbone only) of a batch.
fn embed<'t, T: Real>(cfg: &SslConfig, b: &Bound<'t, T>, x: Var<'t, T>) -> (Var<'t, T>, Var<'t, T>) {
    let h = backbone(&cfg.encoder, b, "", x);
    (h, projector(b, "", h))
}

/// The objective value `L⁽ⁿ⁾` for every mask slot `n`.
///
/// `masks_a[n]` (and `masks_b[n]` for objectives that mask both views) are
/// `B×1×H×W`. All masked copies go through the encoder as one stacked batch.
pub fn mask_objectives<'t, T: Real>(
    cfg: &SslConfig,
    b: &Bound<'t, T>,
    view_a: Var<'t, T>,
    view_b: Var<'t, T>,
    masks_a: &[Var<'t, T>],
    masks_b: Option<&[Var<'t, T>]>,
) -> Result<Vec<Var<'t, T>>> {
    let shape = view_a.shape();
    check_images(cfg, &shape)?;
    if view_b.shape() != shape {
        return Err(AdiosError::Shape(format!("views differ: {:?} vs {:?}", shape, view_b.shape())));
    }
    let n = masks_a.len();
    if n == 0 {
        return Err(AdiosError::Config("at least one mask slot is required".into()));
    }
    let bsz = shape[0];
    let masked_a: Vec<_> = masks_a.iter().map(|m| view_a.apply_mask(*m)).collect();
    let rows = |v: Var<'t, T>, k: usize| v.slice_outer(k * bsz, (k + 1) * bsz);
    match cfg.objective {
        Objective::SimClr => {
            let (_, z_b) = embed(cfg, b, view_b);
            let (_, z_am) = embed(cfg, b, Var::concat_outer(&masked_a));
            (0..n).map(|k| loss_simclr(rows(z_am, k), z_b, cfg.temperature)).collect()
        }
        Objective::Enc => {
            let (_, z_a) = embed(cfg, b, view_a);
            let (_, z_am) = embed(cfg, b, Var::concat_outer(&masked_a));
            Ok((0..n).map(|k| loss_enc(z_a, rows(z_am, k))).collect())
        }
        Objective::Ae => {
            let h = backbone(&cfg.encoder, b, "", Var::concat_outer(&masked_a));
            let rec = decoder(&cfg.encoder, b, h, shape[2]);
            Ok((0..n).map(|k| loss_ae(rows(rec, k), view_a)).collect())
        }
        Objective::SimSiam | Objective::Byol => {
            let masks_b = masks_b.ok_or_else(|| {
                AdiosError::Config(format!("{} masks both views but no view-B masks were given", cfg.objective))
            })?;
            if masks_b.len() != n {
                return Err(AdiosError::Shape(format!("{} view-A masks vs {} view-B masks", n, masks_b.len())));
            }
            let mut all = masked_a;
            all.extend(masks_b.iter().map(|m| view_b.apply_mask(*m)));
            let (_, z_m) = embed(cfg, b, Var::concat_outer(&all));
            let p_m = predictor(b, z_m);
            if cfg.objective == Objective::SimSiam {
                let h_a = backbone(&cfg.encoder, b, "", view_a);
                let h_b = backbone(&cfg.encoder, b, "", view_b);
                Ok((0..n).map(|k| loss_simsiam(rows(p_m, k), rows(p_m, n + k), h_a, h_b)).collect())
            } else {
                let zt = |x: Var<'t, T>| projector(b, TARGET_PREFIX, backbone(&cfg.encoder, b, TARGET_PREFIX, x));
                let (zt_a, zt_b) = (zt(view_a), zt(view_b));
                Ok((0..n).map(|k| loss_byol(rows(p_m, k), rows(p_m, n + k), zt_a, zt_b)).collect())
            }
        }
    }
}

/// `(1/N) Σₙ L⁽ⁿ⁾`.
pub fn average<'t, T: Real>(terms: &[Var<'t, T>]) -> Var<'t, T> {
    let mut acc = terms[0];
    for t in &terms[1..] {
        acc = acc.add(*t);
    }
    acc.scale(T::c(1.0 / terms.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn images(b: usize, s: usize, seed: u64) -> Tensor<f32> {
        let mut r = crate::rng::stream(seed, "test");
        Tensor::new(&[b, 3, s, s], (0..b * 3 * s * s).map(|_| r.random::<f32>()).collect()).unwrap()
    }

    #[test]
    fn embedding_contract() {
        let cfg = SslConfig::default();
        let p = init_bundle(&cfg.encoder, cfg.objective, 32, 1).unwrap();
        let mut x = images(3, 32, 2);
        let copy = x.slice_outer(0, 1).into_data();
        x.data_mut()[2 * 3072..].copy_from_slice(&copy);
        let e = encode_project(&cfg, &p, &x).unwrap();
        assert_eq!(e.h.shape(), &[3, 128]);
        assert_eq!(e.z.shape(), &[3, 64]);
        assert_eq!(e.h.data()[..128], e.h.data()[256..]);
        assert_eq!(e.z.data()[..64], e.z.data()[128..]);
        let zero = encode_project(&cfg, &p, &Tensor::zeros(&[1, 3, 32, 32])).unwrap();
        assert!(zero.h.all_finite() && zero.z.all_finite());
    }

    #[test]
    fn every_objective_builds() {
        for obj in Objective::ALL {
            let cfg = SslConfig { objective: obj, ..Default::default() };
            let p = init_bundle(&cfg.encoder, obj, 32, 1).unwrap();
            let tape = Tape::new();
            let b = p.bind(&tape, Binding::Train);
            let (va, vb) = (tape.constant(images(2, 32, 3)), tape.constant(images(2, 32, 4)));
            let m: Vec<_> = (0..2).map(|_| tape.constant(Tensor::full(&[2, 1, 32, 32], 0.5f32))).collect();
            let terms = mask_objectives(&cfg, &b, va, vb, &m, Some(&m)).unwrap();
            assert_eq!(terms.len(), 2);
            assert!(terms.iter().all(|t| t.item().is_finite()), "{obj}");
        }
    }
}
