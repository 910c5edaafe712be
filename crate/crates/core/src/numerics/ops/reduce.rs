use crate::numerics::real::Real;
use crate::numerics::tape::Var;
use crate::numerics::tensor::Tensor;

fn dims4(shape: &[usize], op: &str) -> (usize, usize, usize, usize) {
    assert_eq!(shape.len(), 4, "{op}: expected B×C×H×W, got {shape:?}");
    (shape[0], shape[1], shape[2], shape[3])
}

impl<'t, T: Real> Var<'t, T> {
    /// Mean over the spatial dims of `B×C×H×W`, giving `B×C`.
    pub fn spatial_mean(&self) -> Var<'t, T> {
        let x = self.value();
        let (b, c, h, w) = dims4(x.shape(), "spatial_mean");
        let hw = h * w;
        let inv = T::one() / T::c(hw as f64);
        let out: Vec<T> = x.data().chunks(hw).map(|p| p.iter().copied().sum::<T>() * inv).collect();
        self.tape().op(Tensor::from_parts(vec![b, c], out), &[*self], move |g, _| {
            let mut d = vec![T::zero(); b * c * hw];
            for (chunk, &gv) in d.chunks_mut(hw).zip(g.data()) {
                chunk.fill(gv * inv);
            }
            vec![Some(Tensor::from_parts(vec![b, c, h, w], d))]
        })
    }

    /// Channel `c` of `B×C×H×W` as `B×1×H×W`.
    pub fn select_channel(&self, ch: usize) -> Var<'t, T> {
        let x = self.value();
        let (b, c, h, w) = dims4(x.shape(), "select_channel");
        assert!(ch < c, "select_channel: {ch} out of {c}");
        let hw = h * w;
        let mut out = Vec::with_capacity(b * hw);
        for bi in 0..b {
            let off = (bi * c + ch) * hw;
            out.extend_from_slice(&x.data()[off..off + hw]);
        }
        self.tape().op(Tensor::from_parts(vec![b, 1, h, w], out), &[*self], move |g, _| {
            let mut d = vec![T::zero(); b * c * hw];
            for bi in 0..b {
                let off = (bi * c + ch) * hw;
                d[off..off + hw].copy_from_slice(&g.data()[bi * hw..(bi + 1) * hw]);
            }
            vec![Some(Tensor::from_parts(vec![b, c, h, w], d))]
        })
    }

    /// Column `j` of a `B×M` matrix, giving `B`.
    pub fn select_column(&self, j: usize) -> Var<'t, T> {
        let x = self.value();
        assert_eq!(x.ndim(), 2, "select_column: expected 2-D");
        let (b, m) = (x.dim(0), x.dim(1));
        assert!(j < m);
        let out: Vec<T> = (0..b).map(|i| x.data()[i * m + j]).collect();
        self.tape().op(Tensor::from_parts(vec![b], out), &[*self], move |g, _| {
            let mut d = vec![T::zero(); b * m];
            for i in 0..b {
                d[i * m + j] = g.data()[i];
            }
            vec![Some(Tensor::from_parts(vec![b, m], d))]
        })
    }

    /// Concatenates two `B×C×H×W` tensors along channels.
    pub fn concat_channels(&self, other: Var<'t, T>) -> Var<'t, T> {
        let (a, o) = (self.value(), other.value());
        let (b, ca, h, w) = dims4(a.shape(), "concat_channels");
        let (b2, cb, h2, w2) = dims4(o.shape(), "concat_channels");
        assert_eq!((b, h, w), (b2, h2, w2), "concat_channels: batch/spatial mismatch");
        let hw = h * w;
        let mut out = Vec::with_capacity(b * (ca + cb) * hw);
        for bi in 0..b {
            out.extend_from_slice(&a.data()[bi * ca * hw..(bi + 1) * ca * hw]);
            out.extend_from_slice(&o.data()[bi * cb * hw..(bi + 1) * cb * hw]);
        }
        self.tape().op(Tensor::from_parts(vec![b, ca + cb, h, w], out), &[*self, other], move |g, need| {
            let c = ca + cb;
            let ga = need[0].then(|| {
                let mut d = Vec::with_capacity(b * ca * hw);
                for bi in 0..b {
                    d.extend_from_slice(&g.data()[bi * c * hw..(bi * c + ca) * hw]);
                }
                Tensor::from_parts(vec![b, ca, h, w], d)
            });
            let gb = need[1].then(|| {
                let mut d = Vec::with_capacity(b * cb * hw);
                for bi in 0..b {
                    d.extend_from_slice(&g.data()[(bi * c + ca) * hw..(bi + 1) * c * hw]);
                }
                Tensor::from_parts(vec![b, cb, h, w], d)
            });
            vec![ga, gb]
        })
    }

    /// Softmax across the channel dim of `B×C×H×W`, independently per pixel.
    pub fn softmax_channels(&self) -> Var<'t, T> {
        let x = self.value();
        let (b, c, h, w) = dims4(x.shape(), "softmax_channels");
        let hw = h * w;
        let mut y = vec![T::zero(); x.numel()];
        for bi in 0..b {
            let base = bi * c * hw;
            for p in 0..hw {
                let mut mx = T::neg_infinity();
                for ci in 0..c {
                    mx = mx.max(x.data()[base + ci * hw + p]);
                }
                let mut s = T::zero();
                for ci in 0..c {
                    let e = (x.data()[base + ci * hw + p] - mx).exp();
                    y[base + ci * hw + p] = e;
                    s += e;
                }
                for ci in 0..c {
                    y[base + ci * hw + p] /= s;
                }
            }
        }
        let y = Tensor::from_parts(vec![b, c, h, w], y);
        let ys = y.clone();
        self.tape().op(y, &[*self], move |g, _| {
            let mut d = vec![T::zero(); ys.numel()];
            for bi in 0..b {
                let base = bi * c * hw;
                for p in 0..hw {
                    let mut dot = T::zero();
                    for ci in 0..c {
                        let i = base + ci * hw + p;
                        dot += g.data()[i] * ys.data()[i];
                    }
                    for ci in 0..c {
                        let i = base + ci * hw + p;
                        d[i] = ys.data()[i] * (g.data()[i] - dot);
                    }
                }
            }
            vec![Some(Tensor::from_parts(vec![b, c, h, w], d))]
        })
    }

    /// Diagonal of a square matrix.
    pub fn diag(&self) -> Var<'t, T> {
        let x = self.value();
        assert!(x.ndim() == 2 && x.dim(0) == x.dim(1), "diag: expected square matrix");
        let n = x.dim(0);
        let out: Vec<T> = (0..n).map(|i| x.data()[i * n + i]).collect();
        self.tape().op(Tensor::from_parts(vec![n], out), &[*self], move |g, _| {
            let mut d = vec![T::zero(); n * n];
            for i in 0..n {
                d[i * n + i] = g.data()[i];
            }
            vec![Some(Tensor::from_parts(vec![n, n], d))]
        })
    }

    /// Row-wise log-sum-exp of a `B×M` matrix; with `exclude_diag` the entry
    /// `(i, i)` is left out of row `i`.
    pub fn logsumexp_rows(&self, exclude_diag: bool) -> Var<'t, T> {
        let x = self.value();
        assert_eq!(x.ndim(), 2, "logsumexp_rows: expected 2-D");
        let (b, m) = (x.dim(0), x.dim(1));
        let keep = move |i: usize, j: usize| !(exclude_diag && i == j);
        let mut out = vec![T::zero(); b];
        let mut soft = vec![T::zero(); b * m];
        for i in 0..b {
            let row = &x.data()[i * m..(i + 1) * m];
            let mx = (0..m).filter(|&j| keep(i, j)).fold(T::neg_infinity(), |a, j| a.max(row[j]));
            let mut s = T::zero();
            for j in (0..m).filter(|&j| keep(i, j)) {
                let e = (row[j] - mx).exp();
                soft[i * m + j] = e;
                s += e;
            }
            for j in 0..m {
                soft[i * m + j] /= s;
            }
            out[i] = mx + s.ln();
        }
        self.tape().op(Tensor::from_parts(vec![b], out), &[*self], move |g, _| {
            let mut d = soft.clone();
            for i in 0..b {
                for v in &mut d[i * m..(i + 1) * m] {
                    *v *= g.data()[i];
                }
            }
            vec![Some(Tensor::from_parts(vec![b, m], d))]
        })
    }

    /// Mean softmax cross-entropy of `B×K` logits against integer labels.
    pub fn cross_entropy(&self, labels: &[usize]) -> Var<'t, T> {
        let x = self.value();
        assert_eq!(x.ndim(), 2, "cross_entropy: expected 2-D logits");
        let (b, k) = (x.dim(0), x.dim(1));
        assert_eq!(labels.len(), b, "cross_entropy: label count");
        let labels = labels.to_vec();
        let mut probs = vec![T::zero(); b * k];
        let mut loss = T::zero();
        for i in 0..b {
            assert!(labels[i] < k, "label {} out of {k} classes", labels[i]);
            let row = &x.data()[i * k..(i + 1) * k];
            let mx = row.iter().fold(T::neg_infinity(), |a, &v| a.max(v));
            let s: T = row.iter().map(|&v| (v - mx).exp()).sum();
            for j in 0..k {
                probs[i * k + j] = (row[j] - mx).exp() / s;
            }
            loss += mx + s.ln() - row[labels[i]];
        }
        let inv_b = T::one() / T::c(b as f64);
        self.tape().op(Tensor::scalar(loss * inv_b), &[*self], move |g, _| {
            let scale = g.item() * inv_b;
            let mut d = probs.clone();
            for i in 0..b {
                d[i * k + labels[i]] -= T::one();
            }
            for v in &mut d {
                *v *= scale;
            }
            vec![Some(Tensor::from_parts(vec![b, k], d))]
        })
    }

    /// Mean binary cross-entropy with logits against 0/1 targets of the same shape.
    pub fn bce_with_logits(&self, targets: &Tensor<T>) -> Var<'t, T> {
        let x = self.value();
        assert_eq!(x.shape(), targets.shape(), "bce_with_logits: shape mismatch");
        let n = T::c(x.numel() as f64);
        let loss: T = x
            .data()
            .iter()
            .zip(targets.data())
            .map(|(&z, &t)| z.max(T::zero()) - z * t + (T::one() + (-z.abs()).exp()).ln())
            .sum::<T>()
            / n;
        let t = targets.clone();
        self.tape().op(Tensor::scalar(loss), &[*self], move |g, _| {
            let s = g.item() / n;
            vec![Some(x.zip_map(&t, |z, t| (T::one() / (T::one() + (-z).exp()) - t) * s))]
        })
    }

    /// Mean squared error over all elements.
    pub fn mse(&self, target: Var<'t, T>) -> Var<'t, T> {
        self.sub(target).square().mean()
    }
}
