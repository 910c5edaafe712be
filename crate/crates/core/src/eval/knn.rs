//! Cosine k-nearest-neighbour classification.

use log::warn;

use crate::error::{AdiosError, Result};
use crate::eval::FeatureTable;

fn unit_rows(t: &FeatureTable) -> Vec<Vec<f64>> {
    (0..t.len())
        .map(|i| {
            let r = t.row(i);
            let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n == 0.0 { r.to_vec() } else { r.iter().map(|v| v / n).collect() }
        })
        .collect()
}

/// Predicted label of every test row. Neighbours are ordered by cosine
/// distance, then by train index; a vote tie goes to the tied label whose
/// neighbour ranks first.
pub fn knn_predict(train: &FeatureTable, test: &FeatureTable, k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(AdiosError::Config("k must be at least 1".into()));
    }
    if train.is_empty() {
        return Err(AdiosError::Data("k-NN needs a non-empty training table".into()));
    }
    if train.dim() != test.dim() {
        return Err(AdiosError::Shape(format!("feature dims differ: {} vs {}", train.dim(), test.dim())));
    }
    let k = if k > train.len() {
        warn!("k = {k} exceeds {} training rows; clamping", train.len());
        train.len()
    } else {
        k
    };
    let classes = train.labels.iter().chain(&test.labels).max().map_or(0, |m| m + 1);
    let (tr, te) = (unit_rows(train), unit_rows(test));
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(train.len());
    let mut votes = vec![0usize; classes];
    Ok(te
        .iter()
        .map(|q| {
            order.clear();
            order.extend(tr.iter().enumerate().map(|(j, r)| (1.0 - q.iter().zip(r).map(|(a, b)| a * b).sum::<f64>(), j)));
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            votes.iter_mut().for_each(|v| *v = 0);
            for &(_, j) in &order[..k] {
                votes[train.labels[j]] += 1;
            }
            let top = *votes.iter().max().expect("classes > 0");
            order[..k].iter().map(|&(_, j)| train.labels[j]).find(|&l| votes[l] == top).expect("a neighbour has the top vote")
        })
        .collect())
}

/// Top-1 accuracy of k-NN.
pub fn knn_classify(train: &FeatureTable, test: &FeatureTable, k: usize) -> Result<f64> {
    let pred = knn_predict(train, test, k)?;
    Ok(super::accuracy(&pred, &test.labels))
}

/// Accuracy for each `k`, and the best `(k, accuracy)`.
pub fn knn_sweep(train: &FeatureTable, test: &FeatureTable, ks: &[usize]) -> Result<(Vec<(usize, f64)>, (usize, f64))> {
    if ks.is_empty() {
        return Err(AdiosError::Config("empty k list".into()));
    }
    let all = ks.iter().map(|&k| Ok((k, knn_classify(train, test, k)?))).collect::<Result<Vec<_>>>()?;
    let best = all.iter().copied().fold((0, f64::NEG_INFINITY), |b, x| if x.1 > b.1 { x } else { b });
    Ok((all, best))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tie_goes_to_first_nearest() {
        let train = FeatureTable::new(vec![1.0, 0.0, 0.0, 1.0], 2, vec![1, 0], None).unwrap();
        let q = FeatureTable::new(vec![1.0, 1.0], 2, vec![0], None).unwrap();
        assert_eq!(knn_predict(&train, &q, 2).unwrap(), vec![1]);
        assert_eq!(knn_classify(&train, &train, 1).unwrap(), 1.0);
        assert_eq!(knn_predict(&train, &q, 9).unwrap(), vec![1]);
    }
}
