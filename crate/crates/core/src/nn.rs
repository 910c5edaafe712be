//! Parameter initialisers and layer helpers shared by the encoder and occluder.
//!
//! Layers are addressed by name inside a [`ParamSet`]: a convolution `name`
//! owns `name.w` and `name.b`, a group norm owns `name.g` and `name.b`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::numerics::{Bound, ParamSet, Real, Tensor, Var};
use crate::rng;

fn he_normal(shape: &[usize], fan_in: usize, r: &mut rng::Rng) -> Tensor<f32> {
    let std = (2.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| (r.sample::<f64, _>(StandardNormal) * std) as f32).collect();
    Tensor::new(shape, data).expect("shape matches")
}

/// `cout×cin×k×k` weight with He-normal init and zero bias.
pub fn init_conv(p: &mut ParamSet<f32>, name: &str, cout: usize, cin: usize, k: usize, r: &mut rng::Rng) {
    p.insert(format!("{name}.w"), he_normal(&[cout, cin, k, k], cin * k * k, r), true);
    p.insert(format!("{name}.b"), Tensor::zeros(&[cout]), true);
}

/// Transposed convolution weight, `cin×cout×k×k`.
pub fn init_conv_transpose(p: &mut ParamSet<f32>, name: &str, cin: usize, cout: usize, k: usize, r: &mut rng::Rng) {
    p.insert(format!("{name}.w"), he_normal(&[cin, cout, k, k], cin * k * k / 4, r), true);
    p.insert(format!("{name}.b"), Tensor::zeros(&[cout]), true);
}

/// `out×in` weight with He-normal init and zero bias.
pub fn init_linear(p: &mut ParamSet<f32>, name: &str, out: usize, inp: usize, r: &mut rng::Rng) {
    p.insert(format!("{name}.w"), he_normal(&[out, inp], inp, r), true);
    p.insert(format!("{name}.b"), Tensor::zeros(&[out]), true);
}

pub fn init_group_norm(p: &mut ParamSet<f32>, name: &str, c: usize) {
    p.insert(format!("{name}.g"), Tensor::ones(&[c]), true);
    p.insert(format!("{name}.b"), Tensor::zeros(&[c]), true);
}

pub fn conv<'t, T: Real>(b: &Bound<'t, T>, name: &str, x: Var<'t, T>, stride: usize, pad: usize) -> Var<'t, T> {
    x.conv2d(b.get(&format!("{name}.w")), b.get(&format!("{name}.b")), stride, pad)
}

pub fn conv_transpose<'t, T: Real>(b: &Bound<'t, T>, name: &str, x: Var<'t, T>, stride: usize, pad: usize) -> Var<'t, T> {
    x.conv_transpose2d(b.get(&format!("{name}.w")), b.get(&format!("{name}.b")), stride, pad)
}

pub fn linear<'t, T: Real>(b: &Bound<'t, T>, name: &str, x: Var<'t, T>) -> Var<'t, T> {
    x.linear(b.get(&format!("{name}.w")), b.get(&format!("{name}.b")))
}

pub fn group_norm<'t, T: Real>(b: &Bound<'t, T>, name: &str, x: Var<'t, T>, groups: usize) -> Var<'t, T> {
    x.group_norm(b.get(&format!("{name}.g")), b.get(&format!("{name}.b")), groups)
}

/// Pick the largest divisor of `channels` not above `groups`.
pub fn fit_groups(channels: usize, groups: usize) -> usize {
    (1..=groups.max(1).min(channels)).rev().find(|g| channels.is_multiple_of(*g)).unwrap_or(1)
}
