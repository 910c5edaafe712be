//! Train-and-evaluate grid over masking schemes, objectives and seeds.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use log::{info, warn};

use crate::datasets::Dataset;
use crate::error::{AdiosError, Result};
use crate::eval::{evaluate, extract_features, MetricValue, Protocols};
use crate::ssl::Objective;
use crate::trainer::{load_datasets, train_on, Scheme, TrainConfig};

pub const LONG_FILE: &str = "report_long.csv";
pub const AGGREGATE_FILE: &str = "report_aggregate.csv";

#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub scheme: Scheme,
    pub objective: Objective,
    pub seed: u64,
    /// `Err` holds the failure message.
    pub outcome: std::result::Result<Vec<MetricValue>, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub scheme: Scheme,
    pub objective: Objective,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareReport {
    pub cells: Vec<CellResult>,
    pub aggregate: Vec<AggregateRow>,
}

impl CompareReport {
    /// Mean of `metric` for a `(scheme, objective)` cell.
    pub fn mean(&self, scheme: Scheme, objective: Objective, metric: &str) -> Option<f64> {
        self.aggregate
            .iter()
            .find(|r| r.scheme == scheme && r.objective == objective && r.metric == metric)
            .map(|r| r.mean)
    }

    /// Per-seed values of `metric` for a cell, in seed order.
    pub fn values(&self, scheme: Scheme, objective: Objective, metric: &str) -> Vec<(u64, f64)> {
        self.cells
            .iter()
            .filter(|c| c.scheme == scheme && c.objective == objective)
            .filter_map(|c| {
                let m = c.outcome.as_ref().ok()?;
                m.iter().find(|v| v.metric == metric).map(|v| (c.seed, v.value))
            })
            .collect()
    }

    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| AdiosError::io(dir, e))?;
        let err = |e: csv::Error| AdiosError::Data(e.to_string());
        let mut w = csv::Writer::from_path(dir.join(LONG_FILE)).map_err(err)?;
        w.write_record(["scheme", "objective", "seed", "metric", "value"]).map_err(err)?;
        for c in &self.cells {
            let (s, o, seed) = (c.scheme.to_string(), c.objective.to_string(), c.seed.to_string());
            match &c.outcome {
                Ok(ms) => {
                    for m in ms {
                        w.write_record([&s, &o, &seed, &m.metric, &m.value.to_string()]).map_err(err)?;
                    }
                }
                Err(_) => w.write_record([&s, &o, &seed, "failed", "NaN"]).map_err(err)?,
            }
        }
        w.flush().map_err(|e| AdiosError::io(dir.join(LONG_FILE), e))?;
        let mut w = csv::Writer::from_path(dir.join(AGGREGATE_FILE)).map_err(err)?;
        w.write_record(["scheme", "objective", "metric", "mean", "std"]).map_err(err)?;
        for r in &self.aggregate {
            w.write_record([r.scheme.to_string(), r.objective.to_string(), r.metric.clone(), r.mean.to_string(), r.std.to_string()])
                .map_err(err)?;
        }
        w.flush().map_err(|e| AdiosError::io(dir.join(AGGREGATE_FILE), e))
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn aggregate(cells: &[CellResult]) -> Vec<AggregateRow> {
    let mut keys: Vec<(Scheme, Objective)> = Vec::new();
    for c in cells {
        if !keys.contains(&(c.scheme, c.objective)) {
            keys.push((c.scheme, c.objective));
        }
    }
    let mut out = Vec::new();
    for (s, o) in keys {
        let group: Vec<&CellResult> = cells.iter().filter(|c| c.scheme == s && c.objective == o).collect();
        let failed = group.iter().filter(|c| c.outcome.is_err()).count();
        let mut per_metric: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        let mut order: Vec<&str> = Vec::new();
        for c in &group {
            if let Ok(ms) = &c.outcome {
                for m in ms {
                    if !per_metric.contains_key(m.metric.as_str()) {
                        order.push(&m.metric);
                    }
                    per_metric.entry(&m.metric).or_default().push(m.value);
                }
            }
        }
        for metric in order {
            let xs = &per_metric[metric];
            let (mean, std) = mean_std(xs);
            out.push(AggregateRow { scheme: s, objective: o, metric: metric.into(), mean, std, runs: xs.len(), failed });
        }
        if failed > 0 {
            let frac = failed as f64 / group.len() as f64;
            out.push(AggregateRow { scheme: s, objective: o, metric: "failed".into(), mean: frac, std: 0.0, runs: group.len(), failed });
        }
    }
    out
}

fn run_cell(cfg: &TrainConfig, train: &Dataset, test: &Dataset) -> Result<Vec<MetricValue>> {
    let outcome = train_on(cfg, train, None)?;
    let ftr = extract_features(cfg, &outcome.state.encoder, train)?;
    let fte = extract_features(cfg, &outcome.state.encoder, test)?;
    let protocols = Protocols { knn: true, linear: true, clustering: false, multilabel: true };
    evaluate(&ftr, &fte, &cfg.eval, cfg.seed, protocols)
}

/// Trains and evaluates every `(scheme, objective, seed)` cell. A failing
/// cell is recorded and the grid continues.
pub fn compare_mask_schemes(
    base: &TrainConfig,
    schemes: &[Scheme],
    objectives: &[Objective],
    seeds: &[u64],
    out_dir: Option<&Path>,
) -> Result<CompareReport> {
    if schemes.is_empty() || objectives.is_empty() || seeds.is_empty() {
        return Err(AdiosError::Config("schemes, objectives and seeds must be non-empty".into()));
    }
    let mut data_cache: BTreeMap<u64, (Dataset, Dataset)> = BTreeMap::new();
    let mut cells = Vec::new();
    for &scheme in schemes {
        for &objective in objectives {
            for &seed in seeds {
                let mut cfg = base.clone();
                cfg.seed = seed;
                cfg.trainer.scheme = scheme;
                cfg.ssl.objective = objective;
                let outcome = cfg.validate().and_then(|()| {
                    let ds = cfg.data_seed();
                    if let std::collections::btree_map::Entry::Vacant(e) = data_cache.entry(ds) {
                        let (train, test) = load_datasets(&cfg.data, ds)?;
                        let test = test.unwrap_or_else(|| {
                            warn!("no held-out split; evaluating on the training data");
                            train.clone()
                        });
                        e.insert((train, test));
                    }
                    let (train, test) = &data_cache[&ds];
                    run_cell(&cfg, train, test)
                });
                match &outcome {
                    Ok(ms) => info!("{scheme}/{objective}/seed {seed}: {:?}", ms.iter().map(|m| (&m.metric, m.value)).collect::<Vec<_>>()),
                    Err(e) => warn!("{scheme}/{objective}/seed {seed} failed: {e}"),
                }
                cells.push(CellResult { scheme, objective, seed, outcome: outcome.map_err(|e| e.to_string()) });
            }
        }
    }
    let report = CompareReport { aggregate: aggregate(&cells), cells };
    if let Some(dir) = out_dir {
        report.write_csv(dir)?;
    }
    Ok(report)
}
