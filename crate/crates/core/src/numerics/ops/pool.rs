use crate::numerics::real::Real;
use crate::numerics::tape::Var;
use crate::numerics::tensor::Tensor;

/// Source coordinate pair and interpolation weight for 2× bilinear upsampling
/// with half-pixel centres (`align_corners = false`).
fn upsample_taps(out_len: usize, in_len: usize) -> Vec<(usize, usize, f64)> {
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(in_len - 1);
            let i1 = (i0 + 1).min(in_len - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

impl<'t, T: Real> Var<'t, T> {
    /// 2×2 max pooling with stride 2; odd trailing rows/columns are dropped.
    pub fn max_pool2(&self) -> Var<'t, T> {
        let x = self.value();
        let s = x.shape().to_vec();
        assert_eq!(s.len(), 4, "max_pool2: expected B×C×H×W");
        let (bc, h, w) = (s[0] * s[1], s[2], s[3]);
        let (ho, wo) = (h / 2, w / 2);
        assert!(ho > 0 && wo > 0, "max_pool2: input {h}×{w} too small");
        let mut out = vec![T::zero(); bc * ho * wo];
        let mut arg = vec![0usize; bc * ho * wo];
        for p in 0..bc {
            let plane = &x.data()[p * h * w..(p + 1) * h * w];
            for i in 0..ho {
                for j in 0..wo {
                    let mut best = 2 * i * w + 2 * j;
                    for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = (2 * i + di) * w + 2 * j + dj;
                        if plane[idx] > plane[best] {
                            best = idx;
                        }
                    }
                    out[(p * ho + i) * wo + j] = plane[best];
                    arg[(p * ho + i) * wo + j] = p * h * w + best;
                }
            }
        }
        let out = Tensor::from_parts(vec![s[0], s[1], ho, wo], out);
        self.tape().op(out, &[*self], move |g, _| {
            let mut d = vec![T::zero(); bc * h * w];
            for (&a, &gv) in arg.iter().zip(g.data()) {
                d[a] += gv;
            }
            vec![Some(Tensor::from_parts(s.clone(), d))]
        })
    }

    /// Bilinear 2× upsampling.
    pub fn upsample_bilinear2(&self) -> Var<'t, T> {
        let x = self.value();
        let s = x.shape().to_vec();
        assert_eq!(s.len(), 4, "upsample_bilinear2: expected B×C×H×W");
        let (bc, h, w) = (s[0] * s[1], s[2], s[3]);
        let (ho, wo) = (2 * h, 2 * w);
        let rows = upsample_taps(ho, h);
        let cols = upsample_taps(wo, w);
        let mut out = vec![T::zero(); bc * ho * wo];
        for p in 0..bc {
            let plane = &x.data()[p * h * w..(p + 1) * h * w];
            for (i, &(r0, r1, fr)) in rows.iter().enumerate() {
                let (fr, gr) = (T::c(fr), T::c(1.0 - fr));
                for (j, &(c0, c1, fc)) in cols.iter().enumerate() {
                    let (fc, gc) = (T::c(fc), T::c(1.0 - fc));
                    out[(p * ho + i) * wo + j] = gr * (gc * plane[r0 * w + c0] + fc * plane[r0 * w + c1])
                        + fr * (gc * plane[r1 * w + c0] + fc * plane[r1 * w + c1]);
                }
            }
        }
        let out = Tensor::from_parts(vec![s[0], s[1], ho, wo], out);
        self.tape().op(out, &[*self], move |g, _| {
            let mut d = vec![T::zero(); bc * h * w];
            for p in 0..bc {
                let plane = &mut d[p * h * w..(p + 1) * h * w];
                for (i, &(r0, r1, fr)) in rows.iter().enumerate() {
                    let (fr, gr) = (T::c(fr), T::c(1.0 - fr));
                    for (j, &(c0, c1, fc)) in cols.iter().enumerate() {
                        let (fc, gc) = (T::c(fc), T::c(1.0 - fc));
                        let gv = g.data()[(p * ho + i) * wo + j];
                        plane[r0 * w + c0] += gv * gr * gc;
                        plane[r0 * w + c1] += gv * gr * fc;
                        plane[r1 * w + c0] += gv * fr * gc;
                        plane[r1 * w + c1] += gv * fr * fc;
                    }
                }
            }
            vec![Some(Tensor::from_parts(s.clone(), d))]
        })
    }
}
