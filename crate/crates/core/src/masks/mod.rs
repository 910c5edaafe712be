//! Occlusion masks: the learned U-Net occluder, its sparsity penalty, the
//! fixed masking schemes, and mask application. Mask value 0 occludes a pixel,
//! 1 keeps it.

pub mod occluder;
pub mod render;
pub mod schemes;

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use occluder::{init_occluder, occluder_forward, occlusion_forward, OccluderConfig};
pub use render::{render_composite, SLOT_PALETTE};
pub use schemes::{beit_blockwise_mask, gt_batch_masks, gt_masks, mae_random_mask, GtVariant};

use crate::error::{AdiosError, Result};
use crate::numerics::{Real, Tensor, Var};

/// Coverage clamp inside the penalty.
pub const PENALTY_EPS: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskOrigin {
    Learned,
    None,
    Mae,
    Beit,
    GtObject,
    FgBg,
    Box,
    ShuffledGt,
}

impl MaskOrigin {
    pub fn is_binary(self) -> bool {
        self != MaskOrigin::Learned
    }
}

impl fmt::Display for MaskOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MaskOrigin::Learned => "learned",
            MaskOrigin::None => "none",
            MaskOrigin::Mae => "mae",
            MaskOrigin::Beit => "beit",
            MaskOrigin::GtObject => "gt_object",
            MaskOrigin::FgBg => "fg_bg",
            MaskOrigin::Box => "box",
            MaskOrigin::ShuffledGt => "shuffled_gt",
        };
        f.write_str(s)
    }
}

/// Masks for a batch. Each sample has its own `N_i×H×W` stack because ground
/// truth schemes yield one slot per object.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskSet {
    pub masks: Vec<Tensor<f32>>,
    pub origin: MaskOrigin,
}

impl MaskSet {
    pub fn new(masks: Vec<Tensor<f32>>, origin: MaskOrigin) -> Result<Self> {
        let Some(first) = masks.first() else {
            return Err(AdiosError::Shape("empty mask set".into()));
        };
        let hw = (first.dim(1), first.dim(2));
        for (i, m) in masks.iter().enumerate() {
            if m.ndim() != 3 || (m.dim(1), m.dim(2)) != hw || m.dim(0) == 0 {
                return Err(AdiosError::Shape(format!("mask {i} has shape {:?}", m.shape())));
            }
        }
        Ok(Self { masks, origin })
    }

    /// Splits a `B×N×H×W` tensor into per-sample stacks.
    pub fn from_batch(t: &Tensor<f32>, origin: MaskOrigin) -> Result<Self> {
        if t.ndim() != 4 {
            return Err(AdiosError::Shape(format!("expected B×N×H×W masks, got {:?}", t.shape())));
        }
        let b = t.dim(0);
        let per: Vec<_> = (0..b).map(|i| t.slice_outer(i, i + 1).reshape(&t.shape()[1..]).expect("same size")).collect();
        Self::new(per, origin)
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn slots(&self, sample: usize) -> usize {
        self.masks[sample].dim(0)
    }

    /// `B×N×H×W` when every sample has the same number of slots.
    pub fn as_batch(&self) -> Result<Tensor<f32>> {
        let n = self.slots(0);
        if self.masks.iter().any(|m| m.dim(0) != n) {
            return Err(AdiosError::Shape("mask set has varying slot counts".into()));
        }
        Tensor::stack(&self.masks)
    }

    /// One slot per sample as a `B×1×H×W` tensor.
    pub fn select(&self, slots: &[usize]) -> Result<Tensor<f32>> {
        if slots.len() != self.len() {
            return Err(AdiosError::Shape(format!("{} slot indices for {} samples", slots.len(), self.len())));
        }
        let (h, w) = (self.masks[0].dim(1), self.masks[0].dim(2));
        let mut data = Vec::with_capacity(self.len() * h * w);
        for (i, (&s, m)) in slots.iter().zip(&self.masks).enumerate() {
            if s >= m.dim(0) {
                return Err(AdiosError::Shape(format!("sample {i} has {} slots, asked for {s}", m.dim(0))));
            }
            data.extend_from_slice(&m.data()[s * h * w..(s + 1) * h * w]);
        }
        Tensor::new(&[self.len(), 1, h, w], data)
    }
}

/// `1/sin(π·clamp(c, ε, 1−ε))` for a coverage `c`.
pub fn penalty_from_coverage(c: f64) -> f64 {
    1.0 / (PI * c.clamp(PENALTY_EPS, 1.0 - PENALTY_EPS)).sin()
}

/// Sparsity penalty of one `H×W` mask.
pub fn sparsity_penalty(mask: &[f64]) -> f64 {
    if mask.is_empty() {
        return penalty_from_coverage(0.0);
    }
    penalty_from_coverage(mask.iter().sum::<f64>() / mask.len() as f64)
}

/// Per-slot penalties of `B×N×H×W` masks, as a `B×N` variable.
pub fn penalty_per_slot<'t, T: Real>(masks: Var<'t, T>) -> Var<'t, T> {
    masks
        .spatial_mean()
        .clamp(T::c(PENALTY_EPS), T::c(1.0 - PENALTY_EPS))
        .scale(T::c(PI))
        .sin()
        .recip()
}

/// Mean over slots and images of the per-slot penalty: `(1/N)Σₙ pₙ`, batch-averaged.
pub fn mean_penalty<'t, T: Real>(masks: Var<'t, T>) -> Var<'t, T> {
    penalty_per_slot(masks).mean()
}

/// `x ⊙ m` for one mask per sample. `masks` is `B×1×H×W`.
pub fn apply_mask(images: &Tensor<f32>, masks: &Tensor<f32>) -> Result<Tensor<f32>> {
    let s = images.shape();
    if s.len() != 4 || masks.shape() != [s[0], 1, s[2], s[3]] {
        return Err(AdiosError::Shape(format!(
            "mask shape {:?} does not match images {:?}",
            masks.shape(),
            images.shape()
        )));
    }
    let (c, hw) = (s[1], s[2] * s[3]);
    let mut out = images.clone();
    for (i, chunk) in out.data_mut().chunks_mut(c * hw).enumerate() {
        let m = &masks.data()[i * hw..(i + 1) * hw];
        for plane in chunk.chunks_mut(hw) {
            for (v, &mv) in plane.iter_mut().zip(m) {
                *v *= mv;
            }
        }
    }
    Ok(out)
}

/// Applies slot `slot` of `set` to every image.
pub fn apply_mask_slot(images: &Tensor<f32>, set: &MaskSet, slot: usize) -> Result<Tensor<f32>> {
    apply_mask(images, &set.select(&vec![slot; set.len()])?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tape;

    #[test]
    fn penalty_values() {
        assert!((penalty_from_coverage(0.5) - 1.0).abs() < 1e-12);
        assert!((penalty_from_coverage(1.0 / 6.0) - 2.0).abs() < 1e-9);
        let top = penalty_from_coverage(1.0);
        assert!((top - 1.0 / (PI * (1.0 - 1e-4)).sin()).abs() < 1e-9);
        assert!((top - 3183.1).abs() < 0.1);
        assert!(penalty_from_coverage(0.0).is_finite());
        for c in [0.1, 0.27, 0.4] {
            assert!((penalty_from_coverage(c) - penalty_from_coverage(1.0 - c)).abs() < 1e-9);
        }
        assert_eq!(sparsity_penalty(&[0.0, 1.0]), 1.0);
    }

    #[test]
    fn var_penalty_matches_scalar() {
        let tape = Tape::<f64>::new();
        let data: Vec<f64> = (0..2 * 2 * 4).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let m = tape.constant(Tensor::new(&[2, 2, 2, 2], data.clone()).unwrap());
        let p = penalty_per_slot(m).value();
        for k in 0..4 {
            assert!((p.data()[k] - sparsity_penalty(&data[k * 4..(k + 1) * 4])).abs() < 1e-12);
        }
    }

    #[test]
    fn mask_application() {
        let x = Tensor::new(&[1, 3, 2, 2], (0..12).map(|v| v as f32 * 0.1).collect()).unwrap();
        assert_eq!(apply_mask(&x, &Tensor::ones(&[1, 1, 2, 2])).unwrap(), x);
        assert!(apply_mask(&x, &Tensor::zeros(&[1, 1, 2, 2])).unwrap().data().iter().all(|&v| v == 0.0));
        let checker = Tensor::new(&[1, 1, 2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let y = apply_mask(&x, &checker).unwrap();
        for c in 0..3 {
            for q in 0..4 {
                let expect = if q == 1 || q == 2 { 0.0 } else { x.data()[c * 4 + q] };
                assert_eq!(y.data()[c * 4 + q], expect);
            }
        }
        assert!(apply_mask(&x, &Tensor::ones(&[1, 1, 3, 3])).is_err());
    }
}
