use crate::numerics::real::Real;
use crate::numerics::tape::Var;
use crate::numerics::tensor::{gemm, Tensor};

#[derive(Clone, Copy, Debug)]
struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn new(c: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize) -> Self {
        assert!(h + 2 * pad >= k && w + 2 * pad >= k, "kernel {k} larger than padded input {h}×{w}");
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (w + 2 * pad - k) / stride + 1;
        Self { c, h, w, k, stride, pad, ho, wo }
    }

    fn patch(&self) -> usize {
        self.ho * self.wo
    }

    fn rows(&self) -> usize {
        self.c * self.k * self.k
    }
}

/// Unfolds one `C×H×W` image into columns `(C·k·k) × (Ho·Wo)` written at
/// `dst[row * row_stride + col_offset + p]`.
fn im2col<T: Real>(src: &[T], g: &Geometry, dst: &mut [T], row_stride: usize, col_offset: usize) {
    let (k, s, pad) = (g.k, g.stride as isize, g.pad as isize);
    for c in 0..g.c {
        let plane = &src[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let base = row * row_stride + col_offset;
                for oi in 0..g.ho {
                    let ii = oi as isize * s + ki as isize - pad;
                    let out = &mut dst[base + oi * g.wo..base + (oi + 1) * g.wo];
                    if ii < 0 || ii >= g.h as isize {
                        out.fill(T::zero());
                        continue;
                    }
                    let src_row = &plane[ii as usize * g.w..(ii as usize + 1) * g.w];
                    for (oj, o) in out.iter_mut().enumerate() {
                        let jj = oj as isize * s + kj as isize - pad;
                        *o = if jj < 0 || jj >= g.w as isize { T::zero() } else { src_row[jj as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates columns back into a `C×H×W` image.
fn col2im<T: Real>(src: &[T], g: &Geometry, row_stride: usize, col_offset: usize, dst: &mut [T]) {
    let (k, s, pad) = (g.k, g.stride as isize, g.pad as isize);
    for c in 0..g.c {
        let plane = &mut dst[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let base = row * row_stride + col_offset;
                for oi in 0..g.ho {
                    let ii = oi as isize * s + ki as isize - pad;
                    if ii < 0 || ii >= g.h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[ii as usize * g.w..(ii as usize + 1) * g.w];
                    let cols = &src[base + oi * g.wo..base + (oi + 1) * g.wo];
                    for (oj, &v) in cols.iter().enumerate() {
                        let jj = oj as isize * s + kj as isize - pad;
                        if jj >= 0 && jj < g.w as isize {
                            dst_row[jj as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

/// `B×C×P` → `C×(B·P)`.
fn to_channel_major<T: Real>(x: &[T], b: usize, c: usize, p: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for bi in 0..b {
        for ci in 0..c {
            out[ci * b * p + bi * p..ci * b * p + (bi + 1) * p]
                .copy_from_slice(&x[(bi * c + ci) * p..(bi * c + ci + 1) * p]);
        }
    }
    out
}

/// `C×(B·P)` → `B×C×P`.
fn to_batch_major<T: Real>(x: &[T], b: usize, c: usize, p: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for ci in 0..c {
        for bi in 0..b {
            out[(bi * c + ci) * p..(bi * c + ci + 1) * p]
                .copy_from_slice(&x[ci * b * p + bi * p..ci * b * p + (bi + 1) * p]);
        }
    }
    out
}

fn bias_grad<T: Real>(g: &[T], b: usize, c: usize, p: usize) -> Tensor<T> {
    let mut d = vec![T::zero(); c];
    for bi in 0..b {
        for (ci, dv) in d.iter_mut().enumerate() {
            *dv += g[(bi * c + ci) * p..(bi * c + ci + 1) * p].iter().copied().sum::<T>();
        }
    }
    Tensor::from_parts(vec![c], d)
}

impl<'t, T: Real> Var<'t, T> {
    /// 2-D convolution with square kernel: `x: B×C×H×W`, `w: O×C×k×k`, `b: O`.
    pub fn conv2d(&self, weight: Var<'t, T>, bias: Var<'t, T>, stride: usize, pad: usize) -> Var<'t, T> {
        let (x, w) = (self.value(), weight.value());
        let bv = bias.value();
        let xs = x.shape();
        let ws = w.shape();
        assert_eq!(xs.len(), 4, "conv2d: input must be B×C×H×W, got {xs:?}");
        assert!(ws.len() == 4 && ws[1] == xs[1] && ws[2] == ws[3], "conv2d: weight {ws:?} vs input {xs:?}");
        let (b, o) = (xs[0], ws[0]);
        assert_eq!(bv.shape(), &[o], "conv2d: bias shape");
        let geo = Geometry::new(xs[1], xs[2], xs[3], ws[2], stride, pad);
        let (rows, p) = (geo.rows(), geo.patch());
        let chw = geo.c * geo.h * geo.w;
        let stride_cols = b * p;
        let mut cols = vec![T::zero(); rows * stride_cols];
        for bi in 0..b {
            im2col(&x.data()[bi * chw..(bi + 1) * chw], &geo, &mut cols, stride_cols, bi * p);
        }
        let mut out_cm = vec![T::zero(); o * stride_cols];
        gemm(false, false, o, rows, stride_cols, T::one(), w.data(), &cols, T::zero(), &mut out_cm);
        let mut out = to_batch_major(&out_cm, b, o, p);
        for bi in 0..b {
            for oi in 0..o {
                let bias_v = bv.data()[oi];
                for v in &mut out[(bi * o + oi) * p..(bi * o + oi + 1) * p] {
                    *v += bias_v;
                }
            }
        }
        let out = Tensor::from_parts(vec![b, o, geo.ho, geo.wo], out);
        let x_shape = xs.to_vec();
        let w_shape = ws.to_vec();
        self.tape().op(out, &[*self, weight, bias], move |g, need| {
            let g_cm = to_channel_major(g.data(), b, o, p);
            let gw = need[1].then(|| {
                let mut d = vec![T::zero(); o * rows];
                gemm(false, true, o, stride_cols, rows, T::one(), &g_cm, &cols, T::zero(), &mut d);
                Tensor::from_parts(w_shape.clone(), d)
            });
            let gx = need[0].then(|| {
                let mut gcols = vec![T::zero(); rows * stride_cols];
                gemm(true, false, rows, o, stride_cols, T::one(), w.data(), &g_cm, T::zero(), &mut gcols);
                let mut d = vec![T::zero(); b * chw];
                for bi in 0..b {
                    col2im(&gcols, &geo, stride_cols, bi * p, &mut d[bi * chw..(bi + 1) * chw]);
                }
                Tensor::from_parts(x_shape.clone(), d)
            });
            let gb = need[2].then(|| bias_grad(g.data(), b, o, p));
            vec![gx, gw, gb]
        })
    }

    /// Transposed 2-D convolution: `x: B×Cin×H×W`, `w: Cin×Cout×k×k`, `b: Cout`;
    /// output spatial size `(H−1)·stride − 2·pad + k`.
    pub fn conv_transpose2d(&self, weight: Var<'t, T>, bias: Var<'t, T>, stride: usize, pad: usize) -> Var<'t, T> {
        let (x, w) = (self.value(), weight.value());
        let bv = bias.value();
        let xs = x.shape();
        let ws = w.shape();
        assert_eq!(xs.len(), 4, "conv_transpose2d: input must be B×C×H×W");
        assert!(ws.len() == 4 && ws[0] == xs[1] && ws[2] == ws[3], "conv_transpose2d: weight {ws:?} vs input {xs:?}");
        let (b, cin, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        let (cout, k) = (ws[1], ws[2]);
        assert_eq!(bv.shape(), &[cout], "conv_transpose2d: bias shape");
        let ho = (h - 1) * stride + k - 2 * pad;
        let wo = (wd - 1) * stride + k - 2 * pad;
        // The output image, viewed as a conv input, unfolds to exactly H×W columns.
        let geo = Geometry::new(cout, ho, wo, k, stride, pad);
        assert_eq!((geo.ho, geo.wo), (h, wd), "conv_transpose2d: inconsistent geometry");
        let (rows, p) = (geo.rows(), h * wd);
        let stride_cols = b * p;
        let x_cm = to_channel_major(x.data(), b, cin, p);
        let mut cols = vec![T::zero(); rows * stride_cols];
        gemm(true, false, rows, cin, stride_cols, T::one(), w.data(), &x_cm, T::zero(), &mut cols);
        let out_chw = cout * ho * wo;
        let mut out = vec![T::zero(); b * out_chw];
        for bi in 0..b {
            col2im(&cols, &geo, stride_cols, bi * p, &mut out[bi * out_chw..(bi + 1) * out_chw]);
            for co in 0..cout {
                let bias_v = bv.data()[co];
                for v in &mut out[bi * out_chw + co * ho * wo..bi * out_chw + (co + 1) * ho * wo] {
                    *v += bias_v;
                }
            }
        }
        let out = Tensor::from_parts(vec![b, cout, ho, wo], out);
        let x_shape = xs.to_vec();
        let w_shape = ws.to_vec();
        self.tape().op(out, &[*self, weight, bias], move |g, need| {
            let mut gcols = vec![T::zero(); rows * stride_cols];
            for bi in 0..b {
                im2col(&g.data()[bi * out_chw..(bi + 1) * out_chw], &geo, &mut gcols, stride_cols, bi * p);
            }
            let gx = need[0].then(|| {
                let mut d = vec![T::zero(); cin * stride_cols];
                gemm(false, false, cin, rows, stride_cols, T::one(), w.data(), &gcols, T::zero(), &mut d);
                Tensor::from_parts(x_shape.clone(), to_batch_major(&d, b, cin, p))
            });
            let gw = need[1].then(|| {
                let mut d = vec![T::zero(); cin * rows];
                gemm(false, true, cin, stride_cols, rows, T::one(), &x_cm, &gcols, T::zero(), &mut d);
                Tensor::from_parts(w_shape.clone(), d)
            });
            let gb = need[2].then(|| bias_grad(g.data(), b, cout, ho * wo));
            vec![gx, gw, gb]
        })
    }
}
