use crate::numerics::real::Real;
use crate::numerics::tape::Var;
use crate::numerics::tensor::Tensor;

pub const GROUP_NORM_EPS: f64 = 1e-5;

impl<'t, T: Real> Var<'t, T> {
    /// Group normalization of `B×C×H×W` with per-channel affine `gamma`, `beta`.
    pub fn group_norm(&self, gamma: Var<'t, T>, beta: Var<'t, T>, groups: usize) -> Var<'t, T> {
        let (x, gm, bt) = (self.value(), gamma.value(), beta.value());
        let s = x.shape().to_vec();
        assert_eq!(s.len(), 4, "group_norm: expected B×C×H×W");
        let (b, c, hw) = (s[0], s[1], s[2] * s[3]);
        assert!(groups > 0 && c % groups == 0, "group_norm: {groups} groups do not divide {c} channels");
        assert!(gm.shape() == [c] && bt.shape() == [c], "group_norm: affine shape");
        let cpg = c / groups;
        let n = cpg * hw;
        let inv_n = T::one() / T::c(n as f64);
        let eps = T::c(GROUP_NORM_EPS);
        let mut xhat = vec![T::zero(); x.numel()];
        let mut rstd = vec![T::zero(); b * groups];
        let mut out = vec![T::zero(); x.numel()];
        for bi in 0..b {
            for gi in 0..groups {
                let off = (bi * c + gi * cpg) * hw;
                let seg = &x.data()[off..off + n];
                let mean = seg.iter().copied().sum::<T>() * inv_n;
                let var = seg.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_n;
                let r = T::one() / (var + eps).sqrt();
                rstd[bi * groups + gi] = r;
                for (i, &v) in seg.iter().enumerate() {
                    let ch = gi * cpg + i / hw;
                    let xh = (v - mean) * r;
                    xhat[off + i] = xh;
                    out[off + i] = gm.data()[ch] * xh + bt.data()[ch];
                }
            }
        }
        let out = Tensor::from_parts(s.clone(), out);
        self.tape().op(out, &[*self, gamma, beta], move |g, need| {
            let gd = g.data();
            let gx = need[0].then(|| {
                let mut d = vec![T::zero(); gd.len()];
                for bi in 0..b {
                    for gi in 0..groups {
                        let off = (bi * c + gi * cpg) * hw;
                        let r = rstd[bi * groups + gi];
                        let mut mean_dxh = T::zero();
                        let mut mean_dxh_xh = T::zero();
                        for i in 0..n {
                            let dxh = gd[off + i] * gm.data()[gi * cpg + i / hw];
                            mean_dxh += dxh;
                            mean_dxh_xh += dxh * xhat[off + i];
                        }
                        mean_dxh *= inv_n;
                        mean_dxh_xh *= inv_n;
                        for i in 0..n {
                            let dxh = gd[off + i] * gm.data()[gi * cpg + i / hw];
                            d[off + i] = r * (dxh - mean_dxh - xhat[off + i] * mean_dxh_xh);
                        }
                    }
                }
                Tensor::from_parts(s.clone(), d)
            });
            let (gg, gb) = if need[1] || need[2] {
                let mut dg = vec![T::zero(); c];
                let mut db = vec![T::zero(); c];
                for bi in 0..b {
                    for ch in 0..c {
                        let off = (bi * c + ch) * hw;
                        for i in off..off + hw {
                            dg[ch] += gd[i] * xhat[i];
                            db[ch] += gd[i];
                        }
                    }
                }
                (Some(Tensor::from_parts(vec![c], dg)), Some(Tensor::from_parts(vec![c], db)))
            } else {
                (None, None)
            };
            vec![gx, gg, gb]
        })
    }
}
