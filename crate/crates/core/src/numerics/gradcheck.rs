//! Central finite-difference gradients and the comparison harness that checks
//! tape gradients against them.

use crate::error::{AdiosError, Result};
use crate::numerics::params::ParamSet;
use crate::numerics::tensor::Tensor;

/// Floor for the relative-error denominator.
pub const REL_ERR_FLOOR: f64 = 1e-12;

/// A scalar loss over 64-bit parameters with a tape-computed gradient.
pub trait CheckedLoss {
    fn name(&self) -> &str;
    fn loss(&self, params: &ParamSet<f64>) -> Result<f64>;
    fn gradient(&self, params: &ParamSet<f64>) -> Result<ParamSet<f64>>;
}

/// `(f(p+eps) − f(p−eps)) / 2eps` for every scalar of every trainable parameter.
pub fn finite_diff_grad<F>(loss_fn: F, params: &ParamSet<f64>, eps: f64) -> Result<ParamSet<f64>>
where
    F: Fn(&ParamSet<f64>) -> Result<f64>,
{
    if eps <= 0.0 {
        return Err(AdiosError::Config(format!("finite-difference eps must be positive, got {eps}")));
    }
    let mut work = params.clone();
    let mut out = ParamSet::new();
    let names: Vec<String> =
        params.iter().filter(|(_, p)| p.trainable).map(|(n, _)| n.to_string()).collect();
    for name in names {
        let n = params.get(&name).expect("listed").numel();
        let mut grad = vec![0.0; n];
        for (i, g) in grad.iter_mut().enumerate() {
            let orig = params.get(&name).expect("listed").data()[i];
            work.get_mut(&name).expect("listed").data_mut()[i] = orig + eps;
            let plus = loss_fn(&work)?;
            work.get_mut(&name).expect("listed").data_mut()[i] = orig - eps;
            let minus = loss_fn(&work)?;
            work.get_mut(&name).expect("listed").data_mut()[i] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(AdiosError::NonFinite(format!(
                    "loss at perturbed point of {name}[{i}] is {plus} / {minus}"
                )));
            }
            *g = (plus - minus) / (2.0 * eps);
        }
        let shape = params.get(&name).expect("listed").shape().to_vec();
        out.insert(name, Tensor::new(&shape, grad)?, true);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamError {
    pub name: String,
    pub rel_err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub name: String,
    pub per_param: Vec<ParamError>,
    pub max_rel_err: f64,
    pub pass: bool,
    pub eps: f64,
    pub tol: f64,
    /// Set when the loss or a gradient could not be evaluated.
    pub failure: Option<String>,
}

/// Relative error of one parameter tensor:
/// `max|a−n| / max(max|a|, max|n|, 1e-12)`.
pub fn relative_error(analytic: &Tensor<f64>, numeric: &Tensor<f64>) -> f64 {
    let diff = analytic
        .data()
        .iter()
        .zip(numeric.data())
        .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    diff / analytic.max_abs().max(numeric.max_abs()).max(REL_ERR_FLOOR)
}

/// Compares the tape gradient of `model` against central differences.
pub fn grad_check(model: &dyn CheckedLoss, params: &ParamSet<f64>, eps: f64, tol: f64) -> GradCheckReport {
    let mut report = GradCheckReport {
        name: model.name().to_string(),
        per_param: Vec::new(),
        max_rel_err: f64::INFINITY,
        pass: false,
        eps,
        tol,
        failure: None,
    };
    let analytic = match model.gradient(params) {
        Ok(g) => g,
        Err(e) => {
            report.failure = Some(format!("gradient: {e}"));
            return report;
        }
    };
    let numeric = match finite_diff_grad(|p| model.loss(p), params, eps) {
        Ok(g) => g,
        Err(e) => {
            report.failure = Some(format!("finite differences: {e}"));
            return report;
        }
    };
    let mut max_err = 0.0f64;
    for (name, n) in numeric.iter() {
        let rel = match analytic.get(name) {
            Some(a) if a.shape() == n.tensor.shape() => relative_error(a, &n.tensor),
            _ => f64::INFINITY,
        };
        max_err = max_err.max(rel);
        report.per_param.push(ParamError { name: name.to_string(), rel_err: rel });
    }
    report.max_rel_err = max_err;
    report.pass = max_err <= tol;
    report
}
