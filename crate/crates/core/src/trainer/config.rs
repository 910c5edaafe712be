//! Experiment configuration: JSON with nested sections, unknown keys rejected,
//! dotted `section.key=value` overrides applied before parsing.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::datasets::AugmentationPolicy;
use crate::error::{AdiosError, Result};
use crate::masks::{GtVariant, OccluderConfig};
use crate::ssl::SslConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Adios,
    AdiosS,
    None,
    Mae,
    Beit,
    GtObject,
    FgBg,
    Box,
    ShuffledGt,
}

impl Scheme {
    pub const ALL: [Scheme; 9] = [
        Scheme::Adios,
        Scheme::AdiosS,
        Scheme::None,
        Scheme::Mae,
        Scheme::Beit,
        Scheme::GtObject,
        Scheme::FgBg,
        Scheme::Box,
        Scheme::ShuffledGt,
    ];

    pub fn is_learned(self) -> bool {
        matches!(self, Scheme::Adios | Scheme::AdiosS)
    }

    pub fn gt_variant(self) -> Option<GtVariant> {
        match self {
            Scheme::GtObject => Some(GtVariant::Object),
            Scheme::FgBg => Some(GtVariant::FgBg),
            Scheme::Box => Some(GtVariant::Box),
            Scheme::ShuffledGt => Some(GtVariant::Shuffled),
            _ => None,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = serde_json::to_value(self).expect("unit variant");
        f.write_str(v.as_str().expect("string"))
    }
}

impl FromStr for Scheme {
    type Err = AdiosError;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(Value::String(s.to_string()))
            .map_err(|_| AdiosError::Config(format!("unknown mask scheme {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Shapes,
    Folder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    /// Image folder for `source = folder`.
    pub path: Option<PathBuf>,
    /// Held-out image folder for evaluation.
    pub test_path: Option<PathBuf>,
    /// Shapes: training and held-out sample counts.
    pub count: usize,
    pub test_count: usize,
    pub image_size: usize,
    pub max_objects: usize,
    /// Overrides the data sub-stream seed; by default it follows the top-level seed.
    pub seed: Option<u64>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Shapes,
            path: None,
            test_path: None,
            count: 1024,
            test_count: 256,
            image_size: 32,
            max_objects: 4,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub scheme: Scheme,
    /// Penalty scale.
    pub lambda: f64,
    pub lr_encoder: f64,
    pub lr_occluder: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub warmup_epochs: usize,
    /// Extra checkpoint every this many epochs; 0 keeps only the final one.
    pub checkpoint_every: usize,
    pub mae_patch: usize,
    pub mae_ratio: f64,
    pub beit_patch: usize,
    pub beit_ratio: f64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Adios,
            lambda: 0.5,
            lr_encoder: 0.2,
            lr_occluder: 0.1,
            momentum: 0.9,
            epochs: 30,
            batch_size: 32,
            warmup_epochs: 10,
            checkpoint_every: 0,
            mae_patch: 4,
            mae_ratio: 0.75,
            beit_patch: 4,
            beit_ratio: 0.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub knn_k: Vec<usize>,
    pub probe_lrs: Vec<f64>,
    pub probe_epochs: usize,
    pub probe_batch: usize,
    pub kmeans_iters: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { knn_k: vec![5, 10, 20], probe_lrs: vec![0.3, 0.1, 0.03], probe_epochs: 100, probe_batch: 64, kmeans_iters: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct TrainConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub augment: AugmentationPolicy,
    pub ssl: SslConfig,
    pub occluder: OccluderConfig,
    pub trainer: TrainerConfig,
    pub eval: EvalConfig,
}


/// Sets `a.b.c = value` inside a JSON object, creating intermediate objects.
/// The value is parsed as JSON and taken as a plain string if that fails.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| AdiosError::Config(format!("override {assignment:?} is not key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(AdiosError::Config(format!("override key {key:?} is malformed")));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| AdiosError::Config(format!("override {key}: {} is not a section", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("key has at least one part")
}

fn config_error(e: serde_json::Error) -> AdiosError {
    AdiosError::Config(format!("invalid config: {e}"))
}

impl TrainConfig {
    pub fn from_value(mut value: Value, overrides: &[String]) -> Result<Self> {
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: TrainConfig = serde_json::from_value(value).map_err(config_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str, overrides: &[String]) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(config_error)?;
        Self::from_value(value, overrides)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AdiosError::io(path, e))?;
        Self::from_json_str(&text, overrides)
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serialises")
    }

    /// Side length of the views the networks see.
    pub fn model_size(&self) -> usize {
        self.augment.crop_size
    }

    pub fn data_seed(&self) -> u64 {
        self.data.seed.unwrap_or(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.trainer;
        let bad = |m: String| Err(AdiosError::Config(m));
        if !(t.lambda >= 0.0 && t.lambda.is_finite()) {
            return bad(format!("trainer.lambda {} must be non-negative", t.lambda));
        }
        if t.lr_encoder < 0.0 || t.lr_occluder < 0.0 {
            return bad("learning rates must be non-negative".into());
        }
        if !(0.0..1.0).contains(&t.momentum) {
            return bad(format!("trainer.momentum {} outside [0, 1)", t.momentum));
        }
        if t.epochs == 0 {
            return bad("trainer.epochs must be at least 1".into());
        }
        let min_batch = if self.ssl.objective.is_contrastive() { 2 } else { 1 };
        if t.batch_size < min_batch {
            return bad(format!("trainer.batch_size {} below {min_batch} for {}", t.batch_size, self.ssl.objective));
        }
        if !(t.mae_ratio > 0.0 && t.mae_ratio < 1.0) || !(t.beit_ratio > 0.0 && t.beit_ratio <= 1.0) {
            return bad("mask ratios must lie in (0, 1)".into());
        }
        let size = self.model_size();
        for (name, p) in [("mae_patch", t.mae_patch), ("beit_patch", t.beit_patch)] {
            if p == 0 || !size.is_multiple_of(p) {
                return bad(format!("trainer.{name} {p} does not divide image size {size}"));
            }
        }
        if self.data.source == DataSource::Folder && self.data.path.is_none() {
            return bad("data.path is required for folder datasets".into());
        }
        if self.data.source == DataSource::Shapes && (self.data.count == 0 || self.data.image_size < 16) {
            return bad("shapes data needs count >= 1 and image_size >= 16".into());
        }
        self.augment.validate()?;
        self.ssl.validate(size)?;
        if t.scheme.is_learned() {
            self.occluder.validate(size)?;
        }
        if self.eval.knn_k.contains(&0) || self.eval.probe_lrs.iter().any(|&l| l <= 0.0) {
            return bad("eval.knn_k and eval.probe_lrs must be positive".into());
        }
        Ok(())
    }

    /// Warmup steps for a run of `total` steps, clamped below `total`.
    pub fn warmup_steps(&self, steps_per_epoch: usize, total: usize) -> usize {
        let w = self.trainer.warmup_epochs * steps_per_epoch;
        if w >= total {
            warn!("warmup of {w} steps does not fit in {total}; using {}", total.saturating_sub(1));
            return total.saturating_sub(1);
        }
        w
    }
}
