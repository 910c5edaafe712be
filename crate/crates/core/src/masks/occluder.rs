//! The learned occlusion model: a small U-Net whose last layer is a 1×1
//! convolution to `N` channels followed by a per-pixel softmax.

use serde::{Deserialize, Serialize};

use crate::error::{AdiosError, Result};
use crate::masks::{MaskOrigin, MaskSet};
use crate::nn;
use crate::numerics::{Binding, Bound, ParamSet, Real, Tape, Tensor, Var};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OccluderConfig {
    pub n_masks: usize,
    /// Widths of the down blocks, one 2×2 max-pool between consecutive blocks.
    pub down: Vec<usize>,
    /// Hidden widths of the bottleneck MLP. Its output layer always matches the
    /// flattened bottleneck so the result can be reshaped back.
    pub mlp: Vec<usize>,
    /// Widths of the up blocks, mirrored against `down`.
    pub up: Vec<usize>,
    pub groups: usize,
}

impl Default for OccluderConfig {
    fn default() -> Self {
        Self { n_masks: 4, down: vec![8, 8, 16, 16, 16], mlp: vec![128, 128], up: vec![16, 16, 8, 8, 8], groups: 4 }
    }
}

impl OccluderConfig {
    /// A reduced network for 64-bit gradient checks on tiny images.
    pub fn tiny(n_masks: usize) -> Self {
        Self { n_masks, down: vec![2, 2], mlp: vec![4], up: vec![2, 2], groups: 1 }
    }

    pub fn validate(&self, image_size: usize) -> Result<()> {
        if self.n_masks == 0 {
            return Err(AdiosError::Config("occluder.n_masks must be at least 1".into()));
        }
        if self.down.is_empty() || self.down.len() != self.up.len() {
            return Err(AdiosError::Config(format!(
                "occluder needs matching non-empty down/up lists, got {} and {}",
                self.down.len(),
                self.up.len()
            )));
        }
        if self.down.iter().chain(&self.up).chain(&self.mlp).any(|&w| w == 0) || self.groups == 0 {
            return Err(AdiosError::Config("occluder widths and groups must be positive".into()));
        }
        let factor = 1usize << (self.down.len() - 1);
        if image_size == 0 || !image_size.is_multiple_of(factor) {
            return Err(AdiosError::Config(format!(
                "image size {image_size} is not divisible by {factor}, required by {} down blocks",
                self.down.len()
            )));
        }
        Ok(())
    }

    fn bottleneck(&self, image_size: usize) -> (usize, usize) {
        let side = image_size >> (self.down.len() - 1);
        (*self.down.last().expect("validated"), side)
    }
}

/// Freshly initialised occluder parameters for `image_size²` RGB inputs.
pub fn init_occluder(cfg: &OccluderConfig, image_size: usize, seed: u64) -> Result<ParamSet<f32>> {
    cfg.validate(image_size)?;
    let mut r = rng::stream(seed, "init.occluder");
    let mut p = ParamSet::new();
    let mut cin = 3;
    for (i, &w) in cfg.down.iter().enumerate() {
        nn::init_conv(&mut p, &format!("down{i}.conv"), w, cin, 3, &mut r);
        nn::init_group_norm(&mut p, &format!("down{i}.gn"), w);
        cin = w;
    }
    let (c, side) = cfg.bottleneck(image_size);
    let flat = c * side * side;
    let mut fin = flat;
    for (i, &w) in cfg.mlp.iter().enumerate() {
        nn::init_linear(&mut p, &format!("mlp{i}"), w, fin, &mut r);
        fin = w;
    }
    nn::init_linear(&mut p, &format!("mlp{}", cfg.mlp.len()), flat, fin, &mut r);
    let depth = cfg.down.len();
    let mut cin = c;
    for (j, &w) in cfg.up.iter().enumerate() {
        let skip = cfg.down[depth - 1 - j];
        nn::init_conv(&mut p, &format!("up{j}.conv"), w, cin + skip, 3, &mut r);
        nn::init_group_norm(&mut p, &format!("up{j}.gn"), w);
        cin = w;
    }
    nn::init_conv(&mut p, "head", cfg.n_masks, cin, 1, &mut r);
    Ok(p)
}

fn block<'t, T: Real>(b: &Bound<'t, T>, name: &str, x: Var<'t, T>, groups: usize, width: usize) -> Var<'t, T> {
    let y = nn::conv(b, &format!("{name}.conv"), x, 1, 1);
    nn::group_norm(b, &format!("{name}.gn"), y, nn::fit_groups(width, groups)).relu()
}

/// Differentiable forward pass: `B×3×H×W` images to `B×N×H×W` soft masks.
pub fn occluder_forward<'t, T: Real>(
    cfg: &OccluderConfig,
    params: &Bound<'t, T>,
    images: Var<'t, T>,
) -> Result<Var<'t, T>> {
    let shape = images.shape();
    if shape.len() != 4 || shape[1] != 3 || shape[2] != shape[3] {
        return Err(AdiosError::Shape(format!("occluder expects B×3×S×S images, got {shape:?}")));
    }
    let (bsz, size) = (shape[0], shape[2]);
    cfg.validate(size)?;
    let (c, side) = cfg.bottleneck(size);
    let flat = c * side * side;
    let expected = params.get(&format!("mlp{}.w", cfg.mlp.len())).shape();
    if expected[0] != flat {
        return Err(AdiosError::Config(format!(
            "occluder was built for a {}-wide bottleneck, image size {size} gives {flat}",
            expected[0]
        )));
    }
    let mut x = images;
    let mut skips = Vec::with_capacity(cfg.down.len());
    for (i, &w) in cfg.down.iter().enumerate() {
        if i > 0 {
            x = x.max_pool2();
        }
        x = block(params, &format!("down{i}"), x, cfg.groups, w);
        skips.push(x);
    }
    let mut h = x.reshape(&[bsz, flat]);
    for i in 0..cfg.mlp.len() {
        h = nn::linear(params, &format!("mlp{i}"), h).relu();
    }
    h = nn::linear(params, &format!("mlp{}", cfg.mlp.len()), h);
    x = h.reshape(&[bsz, c, side, side]);
    for (j, &w) in cfg.up.iter().enumerate() {
        if j > 0 {
            x = x.upsample_bilinear2();
        }
        x = x.concat_channels(skips[cfg.down.len() - 1 - j]);
        x = block(params, &format!("up{j}"), x, cfg.groups, w);
    }
    Ok(nn::conv(params, "head", x, 1, 0).softmax_channels())
}

/// Inference-only forward pass on 32-bit parameters.
pub fn occlusion_forward(cfg: &OccluderConfig, params: &ParamSet<f32>, images: &Tensor<f32>) -> Result<MaskSet> {
    let tape = Tape::new();
    let bound = params.bind(&tape, Binding::Frozen);
    let out = occluder_forward(cfg, &bound, tape.constant(images.clone()))?;
    MaskSet::from_batch(&out.value(), MaskOrigin::Learned)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_images(b: usize, s: usize, seed: u64) -> Tensor<f32> {
        let mut r = rng::stream(seed, "test.images");
        Tensor::new(&[b, 3, s, s], (0..b * 3 * s * s).map(|_| r.random::<f32>()).collect()).unwrap()
    }

    #[test]
    fn softmax_masks_partition_each_pixel() {
        for n in [1, 2, 4] {
            let cfg = OccluderConfig { n_masks: n, ..Default::default() };
            let p = init_occluder(&cfg, 32, 1).unwrap();
            let m = occlusion_forward(&cfg, &p, &random_images(2, 32, n as u64)).unwrap();
            let t = m.as_batch().unwrap();
            assert_eq!(t.shape(), &[2, n, 32, 32]);
            for b in 0..2 {
                for q in 0..1024 {
                    let s: f32 = (0..n).map(|k| t.data()[(b * n + k) * 1024 + q]).sum();
                    assert!((s - 1.0).abs() < 1e-5);
                }
            }
            if n == 1 {
                assert!(t.data().iter().all(|&v| v == 1.0));
            } else {
                assert!(t.data().iter().all(|&v| v > 0.0 && v < 1.0));
            }
        }
    }

    #[test]
    fn incompatible_size_is_a_config_error() {
        let cfg = OccluderConfig::default();
        assert!(matches!(init_occluder(&cfg, 36, 1), Err(AdiosError::Config(_))));
        let p = init_occluder(&cfg, 32, 1).unwrap();
        assert!(occlusion_forward(&cfg, &p, &random_images(1, 48, 0)).is_err());
    }
}
