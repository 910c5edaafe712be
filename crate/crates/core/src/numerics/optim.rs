//! SGD with momentum, warmup-cosine learning rate, and EMA target updates.

use std::f64::consts::PI;

use crate::error::{AdiosError, Result};
use crate::numerics::params::ParamSet;
use crate::numerics::real::Real;
use crate::numerics::tensor::Tensor;

/// One step of classic (heavy-ball) momentum SGD on every trainable parameter:
/// `v ← momentum·v + g`, `p ← p − lr·v`. Missing `state` entries start at zero.
pub fn sgd_momentum_step<T: Real>(
    params: &mut ParamSet<T>,
    grads: &ParamSet<T>,
    lr: f64,
    momentum: f64,
    state: &mut ParamSet<T>,
) -> Result<()> {
    if !(0.0..1.0).contains(&momentum) {
        return Err(AdiosError::Config(format!("momentum {momentum} outside [0, 1)")));
    }
    let (lr, mu) = (T::c(lr), T::c(momentum));
    for (name, p) in params.iter_mut() {
        if !p.trainable {
            continue;
        }
        let g = grads
            .get(name)
            .ok_or_else(|| AdiosError::Config(format!("no gradient for trainable parameter {name}")))?;
        if g.shape() != p.tensor.shape() {
            return Err(AdiosError::Config(format!(
                "gradient for {name} has shape {:?}, parameter {:?}",
                g.shape(),
                p.tensor.shape()
            )));
        }
        if !state.contains(name) {
            state.insert(name, Tensor::zeros(g.shape()), false);
        }
        let v = state.get_mut(name).expect("inserted above");
        if v.shape() != g.shape() {
            return Err(AdiosError::Config(format!("momentum state for {name} has wrong shape")));
        }
        for ((pv, vv), &gv) in p.tensor.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
            *vv = mu * *vv + gv;
            *pv -= lr * *vv;
        }
    }
    Ok(())
}

/// Linear warmup from 0 to `base_lr` over `warmup_steps`, then half-cosine decay to 0 at `total_steps`.
pub fn warmup_cosine_lr(step: usize, total_steps: usize, warmup_steps: usize, base_lr: f64) -> Result<f64> {
    if total_steps == 0 {
        return Err(AdiosError::Config("total_steps must be positive".into()));
    }
    if warmup_steps >= total_steps {
        return Err(AdiosError::Config(format!(
            "warmup_steps {warmup_steps} must be below total_steps {total_steps}"
        )));
    }
    let step = step.min(total_steps);
    if step < warmup_steps {
        return Ok(base_lr * step as f64 / warmup_steps as f64);
    }
    let progress = (step - warmup_steps) as f64 / (total_steps - warmup_steps) as f64;
    Ok((base_lr * 0.5 * (1.0 + (PI * progress).cos())).max(0.0))
}

/// `target ← tau·target + (1−tau)·online`, elementwise.
pub fn ema_update<T: Real>(target: &mut ParamSet<T>, online: &ParamSet<T>, tau: f64) -> Result<()> {
    if !(0.0..1.0).contains(&tau) {
        return Err(AdiosError::Config(format!("ema tau {tau} outside [0, 1)")));
    }
    target.check_aligned(online, "ema_update")?;
    let (a, b) = (T::c(tau), T::c(1.0 - tau));
    for ((_, t), (_, o)) in target.iter_mut().zip(online.iter()) {
        for (tv, &ov) in t.tensor.data_mut().iter_mut().zip(o.tensor.data()) {
            *tv = a * *tv + b * ov;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(v: f64) -> ParamSet<f64> {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::new(&[1], vec![v]).unwrap(), true);
        p
    }

    #[test]
    fn first_momentum_step_is_plain_sgd() {
        let mut p = single(1.0);
        let mut state = ParamSet::new();
        sgd_momentum_step(&mut p, &single(0.5), 0.1, 0.9, &mut state).unwrap();
        assert!((state.get("w").unwrap().item() - 0.5).abs() < 1e-15);
        assert!((p.get("w").unwrap().item() - 0.95).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = single(1.25);
        let mut state = ParamSet::new();
        sgd_momentum_step(&mut p, &single(0.0), 0.1, 0.9, &mut state).unwrap();
        assert_eq!(p.get("w").unwrap().item(), 1.25);
    }

    #[test]
    fn two_steps_follow_recurrence() {
        let mut p = single(0.0);
        let mut state = ParamSet::new();
        for _ in 0..2 {
            sgd_momentum_step(&mut p, &single(1.0), 0.1, 0.9, &mut state).unwrap();
        }
        assert!((p.get("w").unwrap().item() + 0.29).abs() < 1e-12);
        assert!((state.get("w").unwrap().item() - 1.9).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_config_error() {
        let mut p = single(0.0);
        let mut g = ParamSet::new();
        g.insert("w", Tensor::<f64>::zeros(&[2]), true);
        let err = sgd_momentum_step(&mut p, &g, 0.1, 0.9, &mut ParamSet::new()).unwrap_err();
        assert!(matches!(err, AdiosError::Config(_)));
    }

    #[test]
    fn frozen_params_are_skipped() {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::<f64>::ones(&[1]), false);
        sgd_momentum_step(&mut p, &ParamSet::new(), 0.1, 0.9, &mut ParamSet::new()).unwrap();
        assert_eq!(p.get("w").unwrap().item(), 1.0);
    }

    #[test]
    fn schedule_endpoints() {
        assert_eq!(warmup_cosine_lr(0, 100, 10, 0.3).unwrap(), 0.0);
        assert!((warmup_cosine_lr(10, 100, 10, 0.3).unwrap() - 0.3).abs() < 1e-15);
        assert!(warmup_cosine_lr(100, 100, 10, 0.3).unwrap().abs() < 1e-9);
        assert!(warmup_cosine_lr(5, 0, 0, 0.3).is_err());
        assert!(warmup_cosine_lr(5, 10, 10, 0.3).is_err());
        // No warmup starts at the base rate.
        assert_eq!(warmup_cosine_lr(0, 10, 0, 0.3).unwrap(), 0.3);
    }

    #[test]
    fn ema_rules() {
        let mut t = single(1.0);
        ema_update(&mut t, &single(0.0), 0.99).unwrap();
        assert!((t.get("w").unwrap().item() - 0.99).abs() < 1e-15);

        let mut t = single(3.7);
        let online = single(-1.3);
        ema_update(&mut t, &online, 0.0).unwrap();
        assert_eq!(t, online);

        let mut t = single(3.7);
        ema_update(&mut t, &single(-1.3), 1.0 - 1e-12).unwrap();
        assert!((t.get("w").unwrap().item() - 3.7).abs() < 1e-10);

        let mut mismatched = ParamSet::new();
        mismatched.insert("v", Tensor::<f64>::zeros(&[1]), true);
        assert!(ema_update(&mut single(0.0), &mismatched, 0.5).is_err());
    }
}
