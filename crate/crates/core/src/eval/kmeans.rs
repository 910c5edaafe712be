//! Seeded k-means++ with Lloyd iterations.

use rand::Rng;

use crate::error::{AdiosError, Result};
use crate::numerics::Tensor;
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct ClusteringResult {
    pub assignments: Vec<usize>,
    /// `K×d`.
    pub centroids: Tensor<f64>,
    pub inertia: f64,
    /// Inertia after every assignment pass.
    pub history: Vec<f64>,
    pub iterations: usize,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `Σᵢ ‖xᵢ − c_{a(i)}‖²`.
pub fn inertia(features: &Tensor<f64>, centroids: &Tensor<f64>, assignments: &[usize]) -> f64 {
    let d = features.dim(1);
    assignments
        .iter()
        .enumerate()
        .map(|(i, &a)| dist2(&features.data()[i * d..(i + 1) * d], &centroids.data()[a * d..(a + 1) * d]))
        .sum()
}

/// Clusters the rows of an `M×d` matrix. An empty cluster is re-seeded at the
/// point farthest from its current centroid.
pub fn kmeans(features: &Tensor<f64>, k: usize, seed: u64, max_iter: usize) -> Result<ClusteringResult> {
    if features.ndim() != 2 {
        return Err(AdiosError::Shape(format!("kmeans expects M×d, got {:?}", features.shape())));
    }
    let (m, d) = (features.dim(0), features.dim(1));
    if k == 0 || k > m {
        return Err(AdiosError::Config(format!("kmeans needs 1 <= K <= M, got K={k}, M={m}")));
    }
    let row = |i: usize| &features.data()[i * d..(i + 1) * d];
    let mut r = rng::stream(seed, "kmeans");

    // k-means++ seeding.
    let mut centres: Vec<usize> = vec![r.random_range(0..m)];
    let mut nearest: Vec<f64> = (0..m).map(|i| dist2(row(i), row(centres[0]))).collect();
    while centres.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total <= 0.0 {
            (0..m).find(|i| !centres.contains(i)).expect("k <= m")
        } else {
            let mut u = r.random::<f64>() * total;
            let mut pick = m - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        };
        centres.push(next);
        for i in 0..m {
            nearest[i] = nearest[i].min(dist2(row(i), row(next)));
        }
    }
    let mut c: Vec<f64> = centres.iter().flat_map(|&i| row(i).to_vec()).collect();

    let assign = |c: &[f64]| -> Vec<usize> {
        (0..m)
            .map(|i| {
                let mut best = (f64::INFINITY, 0);
                for j in 0..k {
                    let dj = dist2(row(i), &c[j * d..(j + 1) * d]);
                    if dj < best.0 {
                        best = (dj, j);
                    }
                }
                best.1
            })
            .collect()
    };

    let mut a = assign(&c);
    let mut history = Vec::new();
    let mut iterations = 0;
    let ctensor = |c: &[f64]| Tensor::new(&[k, d], c.to_vec()).expect("k×d");
    history.push(inertia(features, &ctensor(&c), &a));
    while iterations < max_iter {
        iterations += 1;
        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (i, &ai) in a.iter().enumerate() {
            counts[ai] += 1;
            for (s, v) in sums[ai * d..(ai + 1) * d].iter_mut().zip(row(i)) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                for t in 0..d {
                    c[j * d + t] = sums[j * d + t] / counts[j] as f64;
                }
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                let far = (0..m)
                    .max_by(|&x, &y| {
                        let dx = dist2(row(x), &c[a[x] * d..(a[x] + 1) * d]);
                        let dy = dist2(row(y), &c[a[y] * d..(a[y] + 1) * d]);
                        dx.total_cmp(&dy).then(y.cmp(&x))
                    })
                    .expect("m >= 1");
                c[j * d..(j + 1) * d].copy_from_slice(row(far));
                a[far] = j;
            }
        }
        let next = assign(&c);
        history.push(inertia(features, &ctensor(&c), &next));
        if next == a {
            break;
        }
        a = next;
    }
    let centroids = ctensor(&c);
    let value = inertia(features, &centroids, &a);
    Ok(ClusteringResult { assignments: a, centroids, inertia: value, history, iterations })
}
