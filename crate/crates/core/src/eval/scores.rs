//! Partition agreement (ARI, NMI, FMI) and multi-label F1.

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{AdiosError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterScores {
    pub ari: f64,
    pub nmi: f64,
    pub fmi: f64,
}

fn comb2(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

fn relabel(xs: &[usize]) -> (Vec<usize>, usize) {
    let mut map = BTreeMap::new();
    let out = xs
        .iter()
        .map(|x| {
            let next = map.len();
            *map.entry(*x).or_insert(next)
        })
        .collect();
    (out, map.len())
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    counts.iter().filter(|&&c| c > 0).map(|&c| c as f64 / n).map(|p| -p * p.ln()).sum()
}

/// ARI, NMI (arithmetic-mean normalisation) and FMI from the contingency table.
///
/// Degenerate partitions: identical single-cluster labelings score ARI = NMI = 1;
/// FMI with no same-cluster pairs on either side is 0 unless both sides agree.
pub fn clustering_scores(pred: &[usize], truth: &[usize]) -> Result<ClusterScores> {
    if pred.len() != truth.len() {
        return Err(AdiosError::Shape(format!("{} predictions vs {} labels", pred.len(), truth.len())));
    }
    if pred.is_empty() {
        return Err(AdiosError::Data("cannot score an empty partition".into()));
    }
    let n = pred.len();
    let (p, kp) = relabel(pred);
    let (t, kt) = relabel(truth);
    let mut table = vec![0usize; kp * kt];
    for (&a, &b) in p.iter().zip(&t) {
        table[a * kt + b] += 1;
    }
    let rows: Vec<usize> = (0..kp).map(|i| table[i * kt..(i + 1) * kt].iter().sum()).collect();
    let cols: Vec<usize> = (0..kt).map(|j| (0..kp).map(|i| table[i * kt + j]).sum()).collect();

    let same_both: f64 = table.iter().map(|&c| comb2(c)).sum();
    let same_pred: f64 = rows.iter().map(|&c| comb2(c)).sum();
    let same_true: f64 = cols.iter().map(|&c| comb2(c)).sum();
    let pairs = comb2(n);

    let identical = same_both == same_pred && same_both == same_true;
    let ari = {
        let expected = if pairs > 0.0 { same_pred * same_true / pairs } else { 0.0 };
        let max = 0.5 * (same_pred + same_true);
        if (max - expected).abs() < 1e-12 {
            if identical { 1.0 } else { 0.0 }
        } else {
            (same_both - expected) / (max - expected)
        }
    };
    let fmi = if same_pred > 0.0 && same_true > 0.0 {
        same_both / (same_pred * same_true).sqrt()
    } else if identical {
        1.0
    } else {
        0.0
    };
    let nf = n as f64;
    let (hp, ht) = (entropy(&rows, nf), entropy(&cols, nf));
    let mut mi = 0.0;
    for i in 0..kp {
        for j in 0..kt {
            let c = table[i * kt + j];
            if c > 0 {
                let c = c as f64;
                mi += c / nf * (c * nf / (rows[i] as f64 * cols[j] as f64)).ln();
            }
        }
    }
    let nmi = if hp + ht == 0.0 { 1.0 } else { (2.0 * mi / (hp + ht)).clamp(0.0, 1.0) };
    Ok(ClusterScores { ari, nmi, fmi })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    Micro,
    Macro,
    Weighted,
}

impl Averaging {
    pub const ALL: [Averaging; 3] = [Averaging::Micro, Averaging::Macro, Averaging::Weighted];

    pub fn name(self) -> &'static str {
        match self {
            Averaging::Micro => "micro",
            Averaging::Macro => "macro",
            Averaging::Weighted => "weighted",
        }
    }
}

/// Per-label confusion counts `(tp, fp, fn)`.
pub fn label_counts<P: AsRef<[bool]>>(pred: &[P], truth: &[P]) -> Result<Vec<(usize, usize, usize)>> {
    if pred.len() != truth.len() {
        return Err(AdiosError::Shape(format!("{} predicted rows vs {} true rows", pred.len(), truth.len())));
    }
    let l = truth.first().map_or(0, |r| r.as_ref().len());
    let mut counts = vec![(0, 0, 0); l];
    for (p, t) in pred.iter().zip(truth) {
        let (p, t) = (p.as_ref(), t.as_ref());
        if p.len() != l || t.len() != l {
            return Err(AdiosError::Shape(format!("rows must all have {l} labels")));
        }
        for j in 0..l {
            match (p[j], t[j]) {
                (true, true) => counts[j].0 += 1,
                (true, false) => counts[j].1 += 1,
                (false, true) => counts[j].2 += 1,
                (false, false) => {}
            }
        }
    }
    Ok(counts)
}

fn f1(tp: usize, fp: usize, fne: usize) -> f64 {
    let denom = 2 * tp + fp + fne;
    if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 }
}

/// Multi-label F1. Labels with no support and no predictions score 0 and are
/// left out of the macro mean; with nothing to score at all the result is 0.
pub fn multilabel_f1<P: AsRef<[bool]>>(pred: &[P], truth: &[P], averaging: Averaging) -> Result<f64> {
    let counts = label_counts(pred, truth)?;
    let value = match averaging {
        Averaging::Micro => {
            let (tp, fp, fne) = counts.iter().fold((0, 0, 0), |a, c| (a.0 + c.0, a.1 + c.1, a.2 + c.2));
            f1(tp, fp, fne)
        }
        Averaging::Macro => {
            let active: Vec<f64> = counts.iter().filter(|c| c.0 + c.1 + c.2 > 0).map(|c| f1(c.0, c.1, c.2)).collect();
            if active.is_empty() { 0.0 } else { active.iter().sum::<f64>() / active.len() as f64 }
        }
        Averaging::Weighted => {
            let support: usize = counts.iter().map(|c| c.0 + c.2).sum();
            if support == 0 {
                0.0
            } else {
                counts.iter().map(|c| (c.0 + c.2) as f64 * f1(c.0, c.1, c.2)).sum::<f64>() / support as f64
            }
        }
    };
    if counts.iter().all(|c| c.0 + c.1 + c.2 == 0) {
        warn!("multilabel_f1: no positive labels or predictions, F1 reported as 0");
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cluster_against_balanced_truth() {
        let s = clustering_scores(&[0; 8], &[0, 0, 0, 0, 1, 1, 1, 1]).unwrap();
        assert!((s.fmi - (3.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert!(s.ari.abs() < 1e-12);
        assert_eq!(s.nmi, 0.0);
        let one = clustering_scores(&[3; 5], &[1; 5]).unwrap();
        assert_eq!((one.ari, one.nmi, one.fmi), (1.0, 1.0, 1.0));
    }

    #[test]
    fn identical_and_permuted() {
        let t = [0, 0, 1, 1, 2, 2, 2];
        let s = clustering_scores(&t, &t).unwrap();
        assert!((s.ari - 1.0).abs() < 1e-12 && (s.nmi - 1.0).abs() < 1e-12 && (s.fmi - 1.0).abs() < 1e-12);
        let p = [5, 5, 9, 9, 1, 1, 1];
        assert_eq!(clustering_scores(&p, &t).unwrap(), s);
    }

    #[test]
    fn f1_fixture() {
        let pred = [vec![true, true], vec![true, false], vec![false, false]];
        let truth = [vec![true, true], vec![false, false], vec![false, true]];
        for (avg, want) in [(Averaging::Micro, 2.0 / 3.0), (Averaging::Macro, 2.0 / 3.0), (Averaging::Weighted, 2.0 / 3.0)] {
            assert!((multilabel_f1(&pred, &truth, avg).unwrap() - want).abs() < 1e-12);
        }
        for avg in Averaging::ALL {
            assert_eq!(multilabel_f1(&truth, &truth, avg).unwrap(), 1.0);
        }
    }
}
