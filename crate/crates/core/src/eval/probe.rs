//! Linear probes on frozen features: softmax regression for class labels and
//! independent logistic outputs for multi-label targets.

use std::collections::BTreeMap;

use log::warn;
use rand::seq::SliceRandom;

use crate::error::{AdiosError, Result};
use crate::eval::{accuracy, FeatureTable};
use crate::nn;
use crate::numerics::{sgd_momentum_step, warmup_cosine_lr, Binding, ParamSet, Tape, Tensor};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { epochs: 100, lr: 0.1, batch: 64, momentum: 0.9, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeResult {
    pub lr: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Test rows per class; classes with no training rows are listed too.
    pub test_support: BTreeMap<usize, usize>,
    pub classes_missing_from_train: Vec<usize>,
}

/// Mean and standard deviation per feature, taken from `train`; a constant
/// feature keeps scale 1.
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(t: &FeatureTable) -> Self {
        let (m, d) = (t.len().max(1) as f64, t.dim());
        let mut mean = vec![0.0; d];
        for i in 0..t.len() {
            for (a, v) in mean.iter_mut().zip(t.row(i)) {
                *a += v / m;
            }
        }
        let mut var = vec![0.0; d];
        for i in 0..t.len() {
            for ((a, v), mu) in var.iter_mut().zip(t.row(i)).zip(&mean) {
                *a += (v - mu) * (v - mu) / m;
            }
        }
        let scale = var.iter().map(|&v| if v > 1e-12 { v.sqrt() } else { 1.0 }).collect();
        Self { mean, scale }
    }

    pub fn apply(&self, t: &FeatureTable) -> Tensor<f64> {
        let d = t.dim();
        let data =
            (0..t.len()).flat_map(|i| t.row(i).iter().enumerate().map(|(j, v)| (v - self.mean[j]) / self.scale[j]).collect::<Vec<_>>()).collect();
        Tensor::new(&[t.len(), d], data).expect("rows × dim")
    }
}

fn logits(p: &ParamSet<f64>, x: &Tensor<f64>) -> Tensor<f64> {
    let tape = Tape::new();
    let b = p.bind(&tape, Binding::Frozen);
    nn::linear(&b, "probe", tape.constant(x.clone())).value().as_ref().clone()
}

fn argmax_rows(t: &Tensor<f64>) -> Vec<usize> {
    let k = t.dim(1);
    t.data()
        .chunks(k)
        .map(|r| r.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (j, &v)| if v > b.1 { (j, v) } else { b }).0)
        .collect()
}

/// Generic minibatch SGD over a linear layer with the given per-batch loss.
fn fit_linear(
    x: &Tensor<f64>,
    outputs: usize,
    cfg: &ProbeConfig,
    loss: impl for<'t> Fn(&crate::numerics::Var<'t, f64>, &[usize]) -> crate::numerics::Var<'t, f64>,
) -> Result<ParamSet<f64>> {
    let (m, d) = (x.dim(0), x.dim(1));
    let mut p = ParamSet::new();
    p.insert("probe.w", Tensor::zeros(&[outputs, d]), true);
    p.insert("probe.b", Tensor::zeros(&[outputs]), true);
    let mut state = ParamSet::new();
    let bs = cfg.batch.clamp(1, m);
    let steps_per_epoch = m.div_ceil(bs);
    let total = cfg.epochs * steps_per_epoch;
    let mut order: Vec<usize> = (0..m).collect();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng::indexed(cfg.seed, "probe.shuffle", epoch as u64));
        for idx in order.chunks(bs) {
            let lr = warmup_cosine_lr(step, total, 0, cfg.lr)?;
            let tape = Tape::new();
            let b = p.bind(&tape, Binding::Train);
            let xb = tape.constant(x.select_outer(idx));
            let out = nn::linear(&b, "probe", xb);
            let l = loss(&out, idx);
            if !l.item().is_finite() {
                return Err(AdiosError::NonFinite(format!("probe loss at lr {}", cfg.lr)));
            }
            let g = b.grads(&tape.backward(l));
            sgd_momentum_step(&mut p, &g, lr, cfg.momentum, &mut state)?;
            step += 1;
        }
    }
    Ok(p)
}

/// Softmax regression on standardised features; returns train and test top-1.
pub fn linear_probe(train: &FeatureTable, test: &FeatureTable, cfg: &ProbeConfig) -> Result<ProbeResult> {
    if train.is_empty() {
        return Err(AdiosError::Data("linear probe needs training rows".into()));
    }
    let present: std::collections::BTreeSet<usize> = train.labels.iter().copied().collect();
    if present.len() < 2 {
        return Err(AdiosError::Data(format!("linear probe needs at least 2 classes, train has {}", present.len())));
    }
    let classes = train.labels.iter().chain(&test.labels).max().map_or(0, |m| m + 1);
    let mut support = BTreeMap::new();
    for &l in &test.labels {
        *support.entry(l).or_insert(0) += 1;
    }
    let missing: Vec<usize> = support.keys().copied().filter(|l| !present.contains(l)).collect();
    if !missing.is_empty() {
        warn!("classes {missing:?} appear in test but not in train; test support {support:?}");
    }
    let st = Standardizer::fit(train);
    let (xtr, xte) = (st.apply(train), st.apply(test));
    let labels = &train.labels;
    let p = fit_linear(&xtr, classes, cfg, |out, idx| {
        let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        out.cross_entropy(&y)
    })?;
    let train_accuracy = accuracy(&argmax_rows(&logits(&p, &xtr)), &train.labels);
    let test_accuracy = if test.is_empty() { 0.0 } else { accuracy(&argmax_rows(&logits(&p, &xte)), &test.labels) };
    Ok(ProbeResult { lr: cfg.lr, train_accuracy, test_accuracy, test_support: support, classes_missing_from_train: missing })
}

/// Runs the probe for every learning rate and returns all results plus the
/// index of the best test accuracy.
pub fn linear_probe_sweep(train: &FeatureTable, test: &FeatureTable, base: &ProbeConfig, lrs: &[f64]) -> Result<(Vec<ProbeResult>, usize)> {
    if lrs.is_empty() {
        return Err(AdiosError::Config("empty learning-rate list".into()));
    }
    let all = lrs.iter().map(|&lr| linear_probe(train, test, &ProbeConfig { lr, ..base.clone() })).collect::<Result<Vec<_>>>()?;
    let best = (0..all.len()).fold(0, |b, i| if all[i].test_accuracy > all[b].test_accuracy { i } else { b });
    Ok((all, best))
}

/// One logistic output per label; returns thresholded test predictions.
pub fn multilabel_probe(train: &FeatureTable, test: &FeatureTable, cfg: &ProbeConfig) -> Result<Vec<Vec<bool>>> {
    let (ytr, _) = match (&train.multilabels, &test.multilabels) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(AdiosError::Data("multi-label probe needs multi-label annotations".into())),
    };
    if train.is_empty() {
        return Err(AdiosError::Data("multi-label probe needs training rows".into()));
    }
    let l = ytr[0].len();
    let st = Standardizer::fit(train);
    let (xtr, xte) = (st.apply(train), st.apply(test));
    let p = fit_linear(&xtr, l, cfg, |out, idx| {
        let t: Vec<f64> = idx.iter().flat_map(|&i| ytr[i].iter().map(|&b| if b { 1.0 } else { 0.0 })).collect();
        out.bce_with_logits(&Tensor::new(&[idx.len(), l], t).expect("batch × labels"))
    })?;
    let z = logits(&p, &xte);
    Ok(z.data().chunks(l).map(|r| r.iter().map(|&v| v > 0.0).collect()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_and_zero_features() {
        let data: Vec<f64> = (0..20).flat_map(|i| if i < 10 { [1.0 + i as f64 * 0.1, 0.0] } else { [-1.0 - i as f64 * 0.1, 0.5] }).collect();
        let labels: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
        let t = FeatureTable::new(data, 2, labels, None).unwrap();
        let cfg = ProbeConfig { epochs: 30, batch: 8, ..Default::default() };
        let (all, best) = linear_probe_sweep(&t, &t, &cfg, &[0.3, 0.1]).unwrap();
        assert_eq!(all[best].train_accuracy, 1.0);

        let labels = vec![0, 0, 0, 1, 1, 0, 0, 1];
        let z = FeatureTable::new(vec![0.0; 8 * 3], 3, labels, None).unwrap();
        let r = linear_probe(&z, &z, &cfg).unwrap();
        assert_eq!(r.test_accuracy, 5.0 / 8.0);
        assert_eq!(linear_probe(&z, &z, &cfg).unwrap(), r);
    }
}
