use crate::numerics::real::Real;
use crate::numerics::tape::Var;
use crate::numerics::tensor::{gemm, Tensor};

fn dims2<T: Real>(t: &Tensor<T>, op: &str) -> (usize, usize) {
    assert_eq!(t.ndim(), 2, "{op}: expected 2-D, got {:?}", t.shape());
    (t.dim(0), t.dim(1))
}

impl<'t, T: Real> Var<'t, T> {
    /// `self (M×K) · other (K×N)`.
    pub fn matmul(&self, other: Var<'t, T>) -> Var<'t, T> {
        let (a, b) = (self.value(), other.value());
        let (m, k) = dims2(&a, "matmul");
        let (k2, n) = dims2(&b, "matmul");
        assert_eq!(k, k2, "matmul: inner dims");
        let mut out = vec![T::zero(); m * n];
        gemm(false, false, m, k, n, T::one(), a.data(), b.data(), T::zero(), &mut out);
        self.tape().op(Tensor::from_parts(vec![m, n], out), &[*self, other], move |g, need| {
            let ga = need[0].then(|| {
                let mut d = vec![T::zero(); m * k];
                gemm(false, true, m, n, k, T::one(), g.data(), b.data(), T::zero(), &mut d);
                Tensor::from_parts(vec![m, k], d)
            });
            let gb = need[1].then(|| {
                let mut d = vec![T::zero(); k * n];
                gemm(true, false, k, m, n, T::one(), a.data(), g.data(), T::zero(), &mut d);
                Tensor::from_parts(vec![k, n], d)
            });
            vec![ga, gb]
        })
    }

    /// `self (M×K) · otherᵀ` where `other` is `N×K`.
    pub fn matmul_nt(&self, other: Var<'t, T>) -> Var<'t, T> {
        let (a, b) = (self.value(), other.value());
        let (m, k) = dims2(&a, "matmul_nt");
        let (n, k2) = dims2(&b, "matmul_nt");
        assert_eq!(k, k2, "matmul_nt: inner dims");
        let mut out = vec![T::zero(); m * n];
        gemm(false, true, m, k, n, T::one(), a.data(), b.data(), T::zero(), &mut out);
        self.tape().op(Tensor::from_parts(vec![m, n], out), &[*self, other], move |g, need| {
            let ga = need[0].then(|| {
                let mut d = vec![T::zero(); m * k];
                gemm(false, false, m, n, k, T::one(), g.data(), b.data(), T::zero(), &mut d);
                Tensor::from_parts(vec![m, k], d)
            });
            let gb = need[1].then(|| {
                let mut d = vec![T::zero(); n * k];
                gemm(true, false, n, m, k, T::one(), g.data(), a.data(), T::zero(), &mut d);
                Tensor::from_parts(vec![n, k], d)
            });
            vec![ga, gb]
        })
    }

    /// Fully connected layer: `x (B×I) · wᵀ + b` with `w: O×I`, `b: O`.
    pub fn linear(&self, weight: Var<'t, T>, bias: Var<'t, T>) -> Var<'t, T> {
        let (x, w, bv) = (self.value(), weight.value(), bias.value());
        let (bsz, din) = dims2(&x, "linear");
        let (dout, din2) = dims2(&w, "linear");
        assert_eq!(din, din2, "linear: input dim {din} vs weight {din2}");
        assert_eq!(bv.shape(), &[dout], "linear: bias shape");
        let mut out = vec![T::zero(); bsz * dout];
        for row in out.chunks_mut(dout) {
            row.copy_from_slice(bv.data());
        }
        gemm(false, true, bsz, din, dout, T::one(), x.data(), w.data(), T::one(), &mut out);
        self.tape().op(Tensor::from_parts(vec![bsz, dout], out), &[*self, weight, bias], move |g, need| {
            let gx = need[0].then(|| {
                let mut d = vec![T::zero(); bsz * din];
                gemm(false, false, bsz, dout, din, T::one(), g.data(), w.data(), T::zero(), &mut d);
                Tensor::from_parts(vec![bsz, din], d)
            });
            let gw = need[1].then(|| {
                let mut d = vec![T::zero(); dout * din];
                gemm(true, false, dout, bsz, din, T::one(), g.data(), x.data(), T::zero(), &mut d);
                Tensor::from_parts(vec![dout, din], d)
            });
            let gb = need[2].then(|| {
                let mut d = vec![T::zero(); dout];
                for row in g.data().chunks(dout) {
                    for (o, &v) in d.iter_mut().zip(row) {
                        *o += v;
                    }
                }
                Tensor::from_parts(vec![dout], d)
            });
            vec![gx, gw, gb]
        })
    }

    /// Scales each row of a `B×D` matrix to unit L2 norm. Zero rows stay zero
    /// and pass no gradient.
    pub fn normalize_rows(&self) -> Var<'t, T> {
        let x = self.value();
        let (b, d) = dims2(&x, "normalize_rows");
        let norms: Vec<T> =
            x.data().chunks(d).map(|r| r.iter().map(|&v| v * v).sum::<T>().sqrt()).collect();
        let mut out = vec![T::zero(); b * d];
        for ((o, r), &n) in out.chunks_mut(d).zip(x.data().chunks(d)).zip(&norms) {
            if n > T::zero() {
                for (ov, &v) in o.iter_mut().zip(r) {
                    *ov = v / n;
                }
            }
        }
        let y = Tensor::from_parts(vec![b, d], out);
        let y_saved = y.clone();
        self.tape().op(y, &[*self], move |g, _| {
            let mut gx = vec![T::zero(); b * d];
            for i in 0..b {
                let n = norms[i];
                if n <= T::zero() {
                    continue;
                }
                let yr = &y_saved.data()[i * d..(i + 1) * d];
                let gr = &g.data()[i * d..(i + 1) * d];
                let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                for j in 0..d {
                    gx[i * d + j] = (gr[j] - yr[j] * dot) / n;
                }
            }
            vec![Some(Tensor::from_parts(vec![b, d], gx))]
        })
    }

    /// Row-wise inner products of two `B×D` matrices, giving `B`.
    pub fn rowwise_dot(&self, other: Var<'t, T>) -> Var<'t, T> {
        let (a, b) = (self.value(), other.value());
        assert_eq!(a.shape(), b.shape(), "rowwise_dot: shape mismatch");
        let (n, d) = dims2(&a, "rowwise_dot");
        let out: Vec<T> = a
            .data()
            .chunks(d)
            .zip(b.data().chunks(d))
            .map(|(r, s)| r.iter().zip(s).map(|(&x, &y)| x * y).sum())
            .collect();
        self.tape().op(Tensor::from_parts(vec![n], out), &[*self, other], move |g, need| {
            let scale_rows = |src: &Tensor<T>| {
                let mut o = vec![T::zero(); n * d];
                for i in 0..n {
                    for j in 0..d {
                        o[i * d + j] = g.data()[i] * src.data()[i * d + j];
                    }
                }
                Tensor::from_parts(vec![n, d], o)
            };
            vec![need[0].then(|| scale_rows(&b)), need[1].then(|| scale_rows(&a))]
        })
    }
}
