//! Representation-distance losses on tape variables.

use log::warn;

use crate::error::{AdiosError, Result};
use crate::numerics::{Real, Var};

/// Rowwise `−cos(u_i, v_i)` of two `B×d` matrices, giving `B`.
pub fn neg_cosine_rows<'t, T: Real>(u: Var<'t, T>, v: Var<'t, T>) -> Var<'t, T> {
    u.normalize_rows().rowwise_dot(v.normalize_rows()).neg()
}

/// `−(u·v)/(‖u‖‖v‖)`; a zero vector gives 0 and a warning.
pub fn neg_cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        warn!("neg_cosine of a zero vector (degenerate embedding), returning 0");
        return 0.0;
    }
    -dot / (nu * nv)
}

/// Contrastive loss with masked view A against unmasked view B, negatives
/// drawn from view B only:
/// `mean_i [ D_ii/τ + log Σ_{j≠i} exp(−D_ij/τ) ]`, `D_ij = −cos(zAm_i, zB_j)`.
///
/// With `exp(D_ij/τ)` in the denominator instead, the minimiser only pushes
/// the farthest negative away and training collapses to `−log(B−1)`.
pub fn loss_simclr<'t, T: Real>(z_am: Var<'t, T>, z_b: Var<'t, T>, temperature: f64) -> Result<Var<'t, T>> {
    let b = z_am.shape()[0];
    if b < 2 {
        return Err(AdiosError::Config(format!("contrastive loss needs at least 2 samples, got {b}")));
    }
    if temperature <= 0.0 {
        return Err(AdiosError::Config(format!("temperature {temperature} must be positive")));
    }
    let s = z_am.normalize_rows().matmul_nt(z_b.normalize_rows()).scale(T::c(1.0 / temperature));
    Ok(s.logsumexp_rows(true).sub(s.diag()).mean())
}

/// `½[mean D(pA_m, sg(hB)) + mean D(pB_m, sg(hA))]` with `D = −cos`.
pub fn loss_simsiam<'t, T: Real>(p_am: Var<'t, T>, p_bm: Var<'t, T>, h_a: Var<'t, T>, h_b: Var<'t, T>) -> Var<'t, T> {
    let t1 = neg_cosine_rows(p_am, h_b.detach()).mean();
    let t2 = neg_cosine_rows(p_bm, h_a.detach()).mean();
    t1.add(t2).scale(T::c(0.5))
}

/// `‖u/‖u‖ − v/‖v‖‖²` summed over features and averaged over the batch.
pub fn normalized_mse<'t, T: Real>(u: Var<'t, T>, v: Var<'t, T>) -> Var<'t, T> {
    let b = u.shape()[0];
    u.normalize_rows().sub(v.normalize_rows()).square().sum().scale(T::c(1.0 / b as f64))
}

/// `½[D(yA_m, zφB) + D(yB_m, zφA)]` with `D` the normalised MSE; the target
/// outputs are treated as constants.
pub fn loss_byol<'t, T: Real>(y_am: Var<'t, T>, y_bm: Var<'t, T>, zt_a: Var<'t, T>, zt_b: Var<'t, T>) -> Var<'t, T> {
    normalized_mse(y_am, zt_b.detach()).add(normalized_mse(y_bm, zt_a.detach())).scale(T::c(0.5))
}

/// `mean_i −cos(z_i, zm_i)`.
pub fn loss_enc<'t, T: Real>(z: Var<'t, T>, zm: Var<'t, T>) -> Var<'t, T> {
    neg_cosine_rows(z, zm).mean()
}

/// Pixel MSE between a reconstruction and the unmasked image.
pub fn loss_ae<'t, T: Real>(reconstruction: Var<'t, T>, images: Var<'t, T>) -> Var<'t, T> {
    reconstruction.mse(images)
}
