//! Frozen-feature evaluation: k-NN, linear probes, k-means clustering scores,
//! multi-label F1, and the masking-scheme comparison driver.

pub mod compare;
pub mod kmeans;
pub mod knn;
pub mod probe;
pub mod scores;

pub use compare::{compare_mask_schemes, CellResult, CompareReport};
pub use kmeans::{inertia, kmeans, ClusteringResult};
pub use knn::{knn_classify, knn_predict, knn_sweep};
pub use probe::{linear_probe, linear_probe_sweep, multilabel_probe, ProbeConfig, ProbeResult};
pub use scores::{clustering_scores, label_counts, multilabel_f1, Averaging, ClusterScores};

use serde::{Deserialize, Serialize};

use crate::datasets::{augment::centre_view, Dataset};
use crate::error::{AdiosError, Result};
use crate::numerics::{ParamSet, Tensor};
use crate::ssl::extract_h;
use crate::trainer::{EvalConfig, TrainConfig};

/// Row-aligned features, labels and optional multi-labels.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    /// `M×d`.
    pub features: Tensor<f64>,
    pub labels: Vec<usize>,
    pub multilabels: Option<Vec<Vec<bool>>>,
}

impl FeatureTable {
    pub fn new(data: Vec<f64>, dim: usize, labels: Vec<usize>, multilabels: Option<Vec<Vec<bool>>>) -> Result<Self> {
        let m = labels.len();
        let features = Tensor::new(&[m, dim], data)?;
        if !features.all_finite() {
            return Err(AdiosError::NonFinite("feature table contains NaN or infinity".into()));
        }
        if multilabels.as_ref().is_some_and(|ml| ml.len() != m) {
            return Err(AdiosError::Shape("multi-label rows do not match feature rows".into()));
        }
        Ok(Self { features, labels, multilabels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.dim(1)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.features.data()[i * d..(i + 1) * d]
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

/// Backbone features `h` of every sample, in dataset order, from deterministic
/// whole-image views at the model's input size.
pub fn extract_features(cfg: &TrainConfig, encoder: &ParamSet<f32>, data: &Dataset) -> Result<FeatureTable> {
    if data.is_empty() {
        return Err(AdiosError::Data("cannot extract features of an empty dataset".into()));
    }
    let want = cfg.data.image_size;
    if let Some(s) = data.samples.iter().find(|s| s.size() != (want, want)) {
        return Err(AdiosError::Shape(format!(
            "sample {} is {}×{}, configured image size is {want}×{want}",
            s.id,
            s.size().0,
            s.size().1
        )));
    }
    let d = cfg.ssl.encoder.feature_dim();
    let mut feats = Vec::with_capacity(data.len() * d);
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(64) {
        let view = centre_view(&data.batch(chunk)?, cfg.model_size());
        let h = extract_h(&cfg.ssl.encoder, encoder, &view.images, 64);
        feats.extend(h.data().iter().map(|&v| v as f64));
    }
    let multilabels =
        data.has_multilabels().then(|| data.samples.iter().map(|s| s.multilabel.expect("checked").to_vec()).collect());
    FeatureTable::new(feats, d, data.labels(), multilabels)
}

/// One named evaluation number.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub protocol: String,
    pub metric: String,
    pub value: f64,
}

fn mv(protocol: &str, metric: impl Into<String>, value: f64) -> MetricValue {
    MetricValue { protocol: protocol.into(), metric: metric.into(), value }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Protocols {
    pub knn: bool,
    pub linear: bool,
    pub clustering: bool,
    pub multilabel: bool,
}

impl Protocols {
    pub const ALL: Protocols = Protocols { knn: true, linear: true, clustering: true, multilabel: true };

    pub fn parse(s: &str) -> Result<Self> {
        let mut p = Protocols { knn: false, linear: false, clustering: false, multilabel: false };
        for part in s.split(',').map(str::trim) {
            match part {
                "all" => return Ok(Self::ALL),
                "knn" => p.knn = true,
                "linear" => p.linear = true,
                "clustering" => p.clustering = true,
                "multilabel" => p.multilabel = true,
                other => {
                    return Err(AdiosError::Config(format!(
                        "unknown protocol {other:?} (knn, linear, clustering, multilabel, all)"
                    )))
                }
            }
        }
        Ok(p)
    }
}

/// The selected protocols on train/test feature tables. Multi-label F1 is
/// skipped when annotations are absent.
pub fn evaluate(train: &FeatureTable, test: &FeatureTable, eval: &EvalConfig, seed: u64, protocols: Protocols) -> Result<Vec<MetricValue>> {
    let mut out = Vec::new();
    if protocols.knn {
        let (all, best) = knn_sweep(train, test, &eval.knn_k)?;
        for (k, acc) in all {
            out.push(mv("knn", format!("knn_acc_k{k}"), acc));
        }
        out.push(mv("knn", "knn_acc", best.1));
    }
    let probe = ProbeConfig { epochs: eval.probe_epochs, batch: eval.probe_batch, seed, ..Default::default() };
    if protocols.linear {
        let (all, best) = linear_probe_sweep(train, test, &probe, &eval.probe_lrs)?;
        out.push(mv("linear", "linear_acc", all[best].test_accuracy));
        out.push(mv("linear", "linear_best_lr", all[best].lr));
    }
    if protocols.clustering {
        let k = train.num_classes().max(test.num_classes()).clamp(1, test.len());
        let c = kmeans(&test.features, k, seed, eval.kmeans_iters)?;
        let s = clustering_scores(&c.assignments, &test.labels)?;
        out.extend([mv("clustering", "ari", s.ari), mv("clustering", "nmi", s.nmi), mv("clustering", "fmi", s.fmi)]);
    }
    if let (true, Some(_), Some(truth)) = (protocols.multilabel, &train.multilabels, &test.multilabels) {
        let pred = multilabel_probe(train, test, &ProbeConfig { lr: eval.probe_lrs[0], ..probe })?;
        for avg in Averaging::ALL {
            out.push(mv("multilabel", format!("f1_{}", avg.name()), multilabel_f1(&pred, truth, avg)?));
        }
    }
    Ok(out)
}
