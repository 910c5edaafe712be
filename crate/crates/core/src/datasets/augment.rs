//! Two-view augmentation: random resized crop, horizontal flip, colour jitter
//! and random grayscale. Geometric transforms are mirrored onto instance masks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::ImageBatch;
use crate::error::{AdiosError, Result};
use crate::numerics::Tensor;
use crate::rng;

const CROP_ATTEMPTS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationPolicy {
    /// Output side length.
    pub crop_size: usize,
    /// Crop area as a fraction of the image, `[lo, hi]`.
    pub crop_scale: [f64; 2],
    /// Crop aspect ratio range (width / height).
    pub crop_ratio: [f64; 2],
    pub flip_prob: f64,
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub jitter_prob: f64,
    pub grayscale_prob: f64,
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        Self {
            crop_size: 32,
            crop_scale: [0.3, 1.0],
            crop_ratio: [3.0 / 4.0, 4.0 / 3.0],
            flip_prob: 0.5,
            brightness: 0.4,
            contrast: 0.4,
            saturation: 0.2,
            jitter_prob: 0.8,
            grayscale_prob: 0.1,
        }
    }
}

impl AugmentationPolicy {
    /// No randomness at all: the whole image, resized to `crop_size`.
    pub fn identity(crop_size: usize) -> Self {
        Self {
            crop_size,
            crop_scale: [1.0, 1.0],
            crop_ratio: [1.0, 1.0],
            flip_prob: 0.0,
            brightness: 0.0,
            contrast: 0.0,
            saturation: 0.0,
            jitter_prob: 0.0,
            grayscale_prob: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AdiosError::Config(format!("augment: {m}")));
        if self.crop_size == 0 {
            return bad("crop_size must be positive".into());
        }
        let [lo, hi] = self.crop_scale;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return bad(format!("crop_scale {:?} must satisfy 0 < lo <= hi <= 1", self.crop_scale));
        }
        let [rlo, rhi] = self.crop_ratio;
        if !(rlo > 0.0 && rlo <= rhi && rhi.is_finite()) {
            return bad(format!("crop_ratio {:?} must satisfy 0 < lo <= hi", self.crop_ratio));
        }
        for (name, p) in [
            ("flip_prob", self.flip_prob),
            ("jitter_prob", self.jitter_prob),
            ("grayscale_prob", self.grayscale_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} {p} outside [0,1]"));
            }
        }
        for (name, s) in [("brightness", self.brightness), ("contrast", self.contrast), ("saturation", self.saturation)] {
            if !(0.0..=1.0).contains(&s) {
                return bad(format!("{name} strength {s} outside [0,1]"));
            }
        }
        Ok(())
    }
}

/// Source window in pixel units.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Window {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
}

fn sample_window(r: &mut rng::Rng, h: usize, w: usize, p: &AugmentationPolicy) -> Window {
    let area = (h * w) as f64;
    let (llo, lhi) = (p.crop_ratio[0].ln(), p.crop_ratio[1].ln());
    for _ in 0..CROP_ATTEMPTS {
        let s = if p.crop_scale[0] < p.crop_scale[1] { r.random_range(p.crop_scale[0]..p.crop_scale[1]) } else { p.crop_scale[0] };
        let lr = if llo < lhi { r.random_range(llo..lhi) } else { llo };
        let ratio = lr.exp();
        let cw = (s * area * ratio).sqrt();
        let ch = (s * area / ratio).sqrt();
        if cw <= w as f64 && ch <= h as f64 {
            let x0 = if cw < w as f64 { r.random_range(0.0..w as f64 - cw) } else { 0.0 };
            let y0 = if ch < h as f64 { r.random_range(0.0..h as f64 - ch) } else { 0.0 };
            return Window { x0, y0, w: cw, h: ch };
        }
    }
    // Fallback: the largest centred window with the clamped aspect ratio.
    let ratio = (w as f64 / h as f64).clamp(p.crop_ratio[0], p.crop_ratio[1]);
    let (cw, ch) = if (w as f64 / h as f64) > ratio {
        (h as f64 * ratio, h as f64)
    } else {
        (w as f64, w as f64 / ratio)
    };
    Window { x0: (w as f64 - cw) / 2.0, y0: (h as f64 - ch) / 2.0, w: cw, h: ch }
}

/// Source coordinate of output pixel `i` (pixel-centre convention).
fn source_coord(i: usize, out: usize, start: f64, len: f64) -> f64 {
    start + (i as f64 + 0.5) * (len / out as f64) - 0.5
}

fn resample_bilinear(src: &[f32], c: usize, h: usize, w: usize, win: Window, out: usize, flip: bool) -> Vec<f32> {
    let mut dst = vec![0.0f32; c * out * out];
    for oy in 0..out {
        let sy = source_coord(oy, out, win.y0, win.h).clamp(0.0, (h - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = (sy - y0 as f64) as f32;
        for ox in 0..out {
            let sx = source_coord(ox, out, win.x0, win.w).clamp(0.0, (w - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = (sx - x0 as f64) as f32;
            let dx = if flip { out - 1 - ox } else { ox };
            for ch in 0..c {
                let p = &src[ch * h * w..(ch + 1) * h * w];
                let top = p[y0 * w + x0] * (1.0 - fx) + p[y0 * w + x1] * fx;
                let bot = p[y1 * w + x0] * (1.0 - fx) + p[y1 * w + x1] * fx;
                dst[(ch * out + oy) * out + dx] = (top * (1.0 - fy) + bot * fy).clamp(0.0, 1.0);
            }
        }
    }
    dst
}

fn resample_nearest(src: &[f32], c: usize, h: usize, w: usize, win: Window, out: usize, flip: bool) -> Vec<f32> {
    let mut dst = vec![0.0f32; c * out * out];
    for oy in 0..out {
        let sy = (source_coord(oy, out, win.y0, win.h).round().max(0.0) as usize).min(h - 1);
        for ox in 0..out {
            let sx = (source_coord(ox, out, win.x0, win.w).round().max(0.0) as usize).min(w - 1);
            let dx = if flip { out - 1 - ox } else { ox };
            for ch in 0..c {
                dst[(ch * out + oy) * out + dx] = src[(ch * h + sy) * w + sx];
            }
        }
    }
    dst
}

fn luminance(px: &[f32], hw: usize, p: usize) -> f32 {
    0.299 * px[p] + 0.587 * px[hw + p] + 0.114 * px[2 * hw + p]
}

fn colour_transforms(r: &mut rng::Rng, img: &mut [f32], hw: usize, p: &AugmentationPolicy) {
    let jitter = r.random::<f64>() < p.jitter_prob;
    // Factors are drawn unconditionally so the stream layout does not depend on the coin.
    let factor = |s: f64, r: &mut rng::Rng| if s > 0.0 { r.random_range(1.0 - s..1.0 + s) as f32 } else { 1.0 };
    let b = factor(p.brightness, r);
    let c = factor(p.contrast, r);
    let s = factor(p.saturation, r);
    let gray = r.random::<f64>() < p.grayscale_prob;
    if jitter {
        for v in img.iter_mut() {
            *v = (*v * b).clamp(0.0, 1.0);
        }
        let mean = (0..hw).map(|q| luminance(img, hw, q)).sum::<f32>() / hw as f32;
        for v in img.iter_mut() {
            *v = ((*v - mean) * c + mean).clamp(0.0, 1.0);
        }
        for q in 0..hw {
            let l = luminance(img, hw, q);
            for ch in 0..3 {
                let v = &mut img[ch * hw + q];
                *v = ((*v - l) * s + l).clamp(0.0, 1.0);
            }
        }
    }
    if gray {
        for q in 0..hw {
            let l = luminance(img, hw, q).clamp(0.0, 1.0);
            for ch in 0..3 {
                img[ch * hw + q] = l;
            }
        }
    }
}

fn augment_view(batch: &ImageBatch, policy: &AugmentationPolicy, seed: u64, name: &str) -> ImageBatch {
    let (b, h, w) = (batch.len(), batch.images.dim(2), batch.images.dim(3));
    let out = policy.crop_size;
    let mut images = Vec::with_capacity(b * 3 * out * out);
    let mut masks = batch.masks.as_ref().map(|_| Vec::with_capacity(b));
    for i in 0..b {
        let mut r = rng::indexed(seed, name, i as u64);
        let win = sample_window(&mut r, h, w, policy);
        let flip = r.random::<f64>() < policy.flip_prob;
        let src = &batch.images.data()[i * 3 * h * w..(i + 1) * 3 * h * w];
        let mut img = resample_bilinear(src, 3, h, w, win, out, flip);
        colour_transforms(&mut r, &mut img, out * out, policy);
        images.extend(img);
        if let (Some(dst), Some(src)) = (masks.as_mut(), batch.masks.as_ref()) {
            let m = &src[i];
            let k = m.dim(0);
            dst.push(Tensor::from_parts(vec![k, out, out], resample_nearest(m.data(), k, h, w, win, out, flip)));
        }
    }
    ImageBatch {
        images: Tensor::from_parts(vec![b, 3, out, out], images),
        masks,
        labels: batch.labels.clone(),
        multilabels: batch.multilabels.clone(),
        ids: batch.ids.clone(),
    }
}

/// Returns views A and B, each drawn independently per image from `seed`.
///
/// Panics if `policy` is invalid; call [`AugmentationPolicy::validate`] first.
pub fn augment_two_views(batch: &ImageBatch, policy: &AugmentationPolicy, seed: u64) -> (ImageBatch, ImageBatch) {
    debug_assert!(policy.validate().is_ok());
    (augment_view(batch, policy, seed, "augment.A"), augment_view(batch, policy, seed, "augment.B"))
}

/// Deterministic preprocessing for evaluation: whole image resized to `size`.
pub fn centre_view(batch: &ImageBatch, size: usize) -> ImageBatch {
    augment_view(batch, &AugmentationPolicy::identity(size), 0, "centre")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::generate_shapes_dataset;

    fn batch() -> ImageBatch {
        let d = generate_shapes_dataset(4, 32, 3, 2).unwrap();
        d.batch(&[0, 1, 2, 3]).unwrap()
    }

    #[test]
    fn identity_policy_returns_input() {
        let b = batch();
        let (a, v) = augment_two_views(&b, &AugmentationPolicy::identity(32), 5);
        assert_eq!(a.images, b.images);
        assert_eq!(v.images, b.images);
        assert_eq!(a.masks, b.masks);
    }

    #[test]
    fn same_seed_same_views() {
        let b = batch();
        let p = AugmentationPolicy::default();
        let (a1, b1) = augment_two_views(&b, &p, 9);
        let (a2, b2) = augment_two_views(&b, &p, 9);
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
        assert_ne!(a1.images, b1.images);
        assert!(a1.images.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn flip_mirrors_the_crop() {
        let b = batch();
        let p = AugmentationPolicy { flip_prob: 1.0, ..AugmentationPolicy::identity(32) };
        let (a, _) = augment_two_views(&b, &p, 1);
        for i in 0..4 {
            for c in 0..3 {
                for y in 0..32 {
                    for x in 0..32 {
                        let src = b.images.data()[((i * 3 + c) * 32 + y) * 32 + x];
                        let dst = a.images.data()[((i * 3 + c) * 32 + y) * 32 + (31 - x)];
                        assert_eq!(src, dst);
                    }
                }
            }
        }
    }

    #[test]
    fn masks_follow_geometry_and_stay_binary() {
        let b = batch();
        let p = AugmentationPolicy { crop_size: 24, ..AugmentationPolicy::default() };
        let (a, _) = augment_two_views(&b, &p, 3);
        assert_eq!(a.images.shape(), &[4, 3, 24, 24]);
        for m in a.masks.as_ref().unwrap() {
            assert_eq!(m.dim(1), 24);
            let hw = 24 * 24;
            for q in 0..hw {
                let s: f32 = (0..m.dim(0)).map(|k| m.data()[k * hw + q]).sum();
                assert_eq!(s, 1.0);
            }
        }
    }

    #[test]
    fn validation() {
        assert!(AugmentationPolicy::default().validate().is_ok());
        assert!(AugmentationPolicy { flip_prob: 1.5, ..Default::default() }.validate().is_err());
        assert!(AugmentationPolicy { crop_scale: [0.0, 1.0], ..Default::default() }.validate().is_err());
        assert!(AugmentationPolicy { crop_scale: [0.5, 1.2], ..Default::default() }.validate().is_err());
    }
}
