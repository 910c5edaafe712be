//! Non-parametric masking schemes: uniform random patches, blockwise patches,
//! and masks derived from ground-truth instance segmentations.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AdiosError, Result};
use crate::numerics::Tensor;
use crate::rng;

/// Consecutive rejected block draws before falling back to single patches.
const BLOCK_REJECTS: usize = 64;

fn patch_grid(image_size: usize, patch: usize) -> Result<usize> {
    if patch == 0 || image_size == 0 || !image_size.is_multiple_of(patch) {
        return Err(AdiosError::Config(format!("image size {image_size} not divisible by patch {patch}")));
    }
    Ok(image_size / patch)
}

fn expand_patches(occluded: &[bool], grid: usize, patch: usize) -> Tensor<f32> {
    let s = grid * patch;
    let mut data = vec![1.0f32; s * s];
    for y in 0..s {
        for x in 0..s {
            if occluded[(y / patch) * grid + x / patch] {
                data[y * s + x] = 0.0;
            }
        }
    }
    Tensor::from_parts(vec![1, s, s], data)
}

/// Zeroes exactly `round(ratio·P)` of the `P` patches, chosen uniformly
/// without replacement. Returns a `1×S×S` mask.
pub fn mae_random_mask(image_size: usize, patch: usize, ratio: f64, seed: u64) -> Result<Tensor<f32>> {
    let grid = patch_grid(image_size, patch)?;
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(AdiosError::Config(format!("mae ratio {ratio} outside (0, 1)")));
    }
    let p = grid * grid;
    let count = (ratio * p as f64).round() as usize;
    let mut r = rng::stream(seed, "mask.mae");
    let mut idx: Vec<usize> = (0..p).collect();
    idx.shuffle(&mut r);
    let mut occluded = vec![false; p];
    for &i in &idx[..count] {
        occluded[i] = true;
    }
    Ok(expand_patches(&occluded, grid, patch))
}

/// Blockwise masking: rectangles of patches with log-uniform aspect ratio in
/// `[0.3, 1/0.3]` and area between one patch and the remaining budget, until
/// the occluded fraction reaches `target_ratio`. Draws that would overshoot
/// `target_ratio + 0.1` are rejected. Returns a `1×S×S` mask.
pub fn beit_blockwise_mask(image_size: usize, patch: usize, target_ratio: f64, seed: u64) -> Result<Tensor<f32>> {
    let grid = patch_grid(image_size, patch)?;
    if !(target_ratio > 0.0 && target_ratio <= 1.0) {
        return Err(AdiosError::Config(format!("beit target ratio {target_ratio} outside (0, 1]")));
    }
    let p = grid * grid;
    let target = ((target_ratio * p as f64).ceil() as usize).min(p);
    let upper = (((target_ratio + 0.1) * p as f64).floor() as usize).clamp(target, p);
    let mut r = rng::stream(seed, "mask.beit");
    let mut occluded = vec![false; p];
    let mut count = 0;
    let (alo, ahi) = (0.3f64.ln(), (1.0f64 / 0.3).ln());
    let mut rejects = 0;
    while count < target {
        if rejects >= BLOCK_REJECTS {
            let free: Vec<usize> = (0..p).filter(|&i| !occluded[i]).collect();
            occluded[free[r.random_range(0..free.len())]] = true;
            count += 1;
            continue;
        }
        let budget = upper - count;
        let area = if budget > 1 { r.random_range(1.0..budget as f64) } else { 1.0 };
        let aspect = r.random_range(alo..ahi).exp();
        let bh = ((area * aspect).sqrt().round() as usize).clamp(1, grid);
        let bw = ((area / aspect).sqrt().round() as usize).clamp(1, grid);
        let top = r.random_range(0..=grid - bh);
        let left = r.random_range(0..=grid - bw);
        let fresh: Vec<usize> = (top..top + bh)
            .flat_map(|y| (left..left + bw).map(move |x| y * grid + x))
            .filter(|&i| !occluded[i])
            .collect();
        if fresh.is_empty() || count + fresh.len() > upper {
            rejects += 1;
            continue;
        }
        rejects = 0;
        count += fresh.len();
        for i in fresh {
            occluded[i] = true;
        }
    }
    Ok(expand_patches(&occluded, grid, patch))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GtVariant {
    /// One mask per object, zero on that object.
    Object,
    /// Two complementary masks: zero on the objects' union, zero on the background.
    FgBg,
    /// One mask per object, zero on its bounding box.
    Box,
    /// Object masks taken from another sample.
    Shuffled,
}

/// Masks from one sample's `(K+1)×H×W` instance maps (background last).
///
/// `shuffle_source` supplies the partner sample's instance maps for
/// [`GtVariant::Shuffled`]. A sample without objects yields one all-ones mask
/// for the per-object variants.
pub fn gt_masks(instances: &Tensor<f32>, variant: GtVariant, shuffle_source: Option<&Tensor<f32>>) -> Result<Tensor<f32>> {
    if instances.ndim() != 3 || instances.dim(0) == 0 {
        return Err(AdiosError::Shape(format!("instance masks must be (K+1)×H×W, got {:?}", instances.shape())));
    }
    let (k1, h, w) = (instances.dim(0), instances.dim(1), instances.dim(2));
    let hw = h * w;
    let objects = |t: &Tensor<f32>| -> Vec<Vec<f32>> {
        (0..t.dim(0) - 1).map(|k| t.data()[k * hw..(k + 1) * hw].to_vec()).collect()
    };
    let stack = |maps: Vec<Vec<f32>>| -> Tensor<f32> {
        if maps.is_empty() {
            return Tensor::ones(&[1, h, w]);
        }
        let n = maps.len();
        Tensor::from_parts(vec![n, h, w], maps.concat())
    };
    let invert = |m: &[f32]| -> Vec<f32> { m.iter().map(|&v| 1.0 - v).collect() };
    match variant {
        GtVariant::Object => Ok(stack(objects(instances).iter().map(|m| invert(m)).collect())),
        GtVariant::FgBg => {
            let bg = instances.data()[(k1 - 1) * hw..].to_vec();
            let fg = invert(&bg);
            // First mask hides the foreground, second hides the background.
            Ok(stack(vec![bg, fg]))
        }
        GtVariant::Box => Ok(stack(
            objects(instances)
                .iter()
                .map(|m| {
                    let mut out = vec![1.0f32; hw];
                    let on: Vec<(usize, usize)> =
                        (0..hw).filter(|&q| m[q] > 0.5).map(|q| (q / w, q % w)).collect();
                    if let (Some(y0), Some(y1), Some(x0), Some(x1)) = (
                        on.iter().map(|p| p.0).min(),
                        on.iter().map(|p| p.0).max(),
                        on.iter().map(|p| p.1).min(),
                        on.iter().map(|p| p.1).max(),
                    ) {
                        for y in y0..=y1 {
                            for x in x0..=x1 {
                                out[y * w + x] = 0.0;
                            }
                        }
                    }
                    out
                })
                .collect(),
        )),
        GtVariant::Shuffled => {
            let src = shuffle_source
                .ok_or_else(|| AdiosError::Config("shuffled ground-truth masks need a permutation".into()))?;
            if (src.dim(1), src.dim(2)) != (h, w) {
                return Err(AdiosError::Shape("shuffle partner has a different image size".into()));
            }
            gt_masks(src, GtVariant::Object, None)
        }
    }
}

/// [`gt_masks`] over a batch; `perm[i]` names the partner of sample `i` for
/// the shuffled variant.
pub fn gt_batch_masks(instances: &[Tensor<f32>], variant: GtVariant, perm: Option<&[usize]>) -> Result<Vec<Tensor<f32>>> {
    if variant == GtVariant::Shuffled {
        let perm = perm.ok_or_else(|| AdiosError::Config("shuffled ground-truth masks need a permutation".into()))?;
        if perm.len() != instances.len() || perm.iter().any(|&j| j >= instances.len()) {
            return Err(AdiosError::Config(format!("permutation {perm:?} does not fit {} samples", instances.len())));
        }
        return instances.iter().zip(perm).map(|(m, &j)| gt_masks(m, variant, Some(&instances[j]))).collect();
    }
    instances.iter().map(|m| gt_masks(m, variant, None)).collect()
}

/// Random permutation of `0..n`, moved one step if it would fix every point.
pub fn shuffle_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut rng::stream(seed, "mask.shuffle"));
    if n > 1 && p.iter().enumerate().all(|(i, &j)| i == j) {
        p.rotate_left(1);
    }
    p
}
