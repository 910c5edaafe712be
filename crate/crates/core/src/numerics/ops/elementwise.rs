use std::rc::Rc;

use crate::numerics::real::Real;
use crate::numerics::tape::Var;
use crate::numerics::tensor::Tensor;

fn same_shape<T: Real>(a: &Tensor<T>, b: &Tensor<T>, op: &str) {
    assert_eq!(a.shape(), b.shape(), "{op}: shape mismatch");
}

impl<'t, T: Real> Var<'t, T> {
    pub fn add(&self, other: Var<'t, T>) -> Var<'t, T> {
        let (a, b) = (self.value(), other.value());
        same_shape(&a, &b, "add");
        let out = a.zip_map(&b, |x, y| x + y);
        self.tape().op(out, &[*self, other], |g, _| vec![Some(g.clone()), Some(g.clone())])
    }

    pub fn sub(&self, other: Var<'t, T>) -> Var<'t, T> {
        let (a, b) = (self.value(), other.value());
        same_shape(&a, &b, "sub");
        let out = a.zip_map(&b, |x, y| x - y);
        self.tape().op(out, &[*self, other], |g, _| vec![Some(g.clone()), Some(g.map(|v| -v))])
    }

    pub fn mul(&self, other: Var<'t, T>) -> Var<'t, T> {
        let (a, b) = (self.value(), other.value());
        same_shape(&a, &b, "mul");
        let out = a.zip_map(&b, |x, y| x * y);
        self.tape().op(out, &[*self, other], move |g, need| {
            vec![
                need[0].then(|| g.zip_map(&b, |g, y| g * y)),
                need[1].then(|| g.zip_map(&a, |g, x| g * x)),
            ]
        })
    }

    pub fn scale(&self, s: T) -> Var<'t, T> {
        let out = self.value().scale(s);
        self.tape().op(out, &[*self], move |g, _| vec![Some(g.scale(s))])
    }

    pub fn neg(&self) -> Var<'t, T> {
        self.scale(-T::one())
    }

    pub fn add_scalar(&self, s: T) -> Var<'t, T> {
        let out = self.value().map(|v| v + s);
        self.tape().op(out, &[*self], |g, _| vec![Some(g.clone())])
    }

    pub fn relu(&self) -> Var<'t, T> {
        let x = self.value();
        let out = x.map(|v| v.max(T::zero()));
        self.tape().op(out, &[*self], move |g, _| {
            vec![Some(g.zip_map(&x, |g, v| if v > T::zero() { g } else { T::zero() }))]
        })
    }

    pub fn sigmoid(&self) -> Var<'t, T> {
        let y = Rc::new(self.value().map(|v| T::one() / (T::one() + (-v).exp())));
        let out = (*y).clone();
        self.tape().op(out, &[*self], move |g, _| {
            vec![Some(g.zip_map(&y, |g, y| g * y * (T::one() - y)))]
        })
    }

    pub fn sin(&self) -> Var<'t, T> {
        let x = self.value();
        let out = x.map(|v| v.sin());
        self.tape().op(out, &[*self], move |g, _| vec![Some(g.zip_map(&x, |g, v| g * v.cos()))])
    }

    pub fn recip(&self) -> Var<'t, T> {
        let x = self.value();
        let out = x.map(|v| T::one() / v);
        self.tape().op(out, &[*self], move |g, _| vec![Some(g.zip_map(&x, |g, v| -g / (v * v)))])
    }

    pub fn square(&self) -> Var<'t, T> {
        let x = self.value();
        let out = x.map(|v| v * v);
        self.tape().op(out, &[*self], move |g, _| {
            vec![Some(g.zip_map(&x, |g, v| g * (v + v)))]
        })
    }

    /// Clamp to `[lo, hi]`; zero gradient where the clamp is active.
    pub fn clamp(&self, lo: T, hi: T) -> Var<'t, T> {
        let x = self.value();
        let out = x.map(|v| v.max(lo).min(hi));
        self.tape().op(out, &[*self], move |g, _| {
            vec![Some(g.zip_map(&x, |g, v| if v < lo || v > hi { T::zero() } else { g }))]
        })
    }

    /// Multiplies each channel of `B×C×H×W` by a `B×1×H×W` mask.
    pub fn apply_mask(&self, mask: Var<'t, T>) -> Var<'t, T> {
        let (x, m) = (self.value(), mask.value());
        let s = x.shape().to_vec();
        assert_eq!(s.len(), 4, "apply_mask: expected 4-D image");
        assert_eq!(m.shape(), &[s[0], 1, s[2], s[3]], "apply_mask: mask shape");
        let (b, c, hw) = (s[0], s[1], s[2] * s[3]);
        let mut out = vec![T::zero(); x.numel()];
        for bi in 0..b {
            let mrow = &m.data()[bi * hw..(bi + 1) * hw];
            for ci in 0..c {
                let off = (bi * c + ci) * hw;
                for ((o, &xv), &mv) in out[off..off + hw].iter_mut().zip(&x.data()[off..off + hw]).zip(mrow) {
                    *o = xv * mv;
                }
            }
        }
        let out = Tensor::from_parts(s.clone(), out);
        self.tape().op(out, &[*self, mask], move |g, need| {
            let gx = need[0].then(|| {
                let mut d = vec![T::zero(); g.numel()];
                for bi in 0..b {
                    let mrow = &m.data()[bi * hw..(bi + 1) * hw];
                    for ci in 0..c {
                        let off = (bi * c + ci) * hw;
                        for ((o, &gv), &mv) in d[off..off + hw].iter_mut().zip(&g.data()[off..off + hw]).zip(mrow) {
                            *o = gv * mv;
                        }
                    }
                }
                Tensor::from_parts(s.clone(), d)
            });
            let gm = need[1].then(|| {
                let mut d = vec![T::zero(); b * hw];
                for bi in 0..b {
                    let drow = &mut d[bi * hw..(bi + 1) * hw];
                    for ci in 0..c {
                        let off = (bi * c + ci) * hw;
                        for ((o, &gv), &xv) in drow.iter_mut().zip(&g.data()[off..off + hw]).zip(&x.data()[off..off + hw]) {
                            *o += gv * xv;
                        }
                    }
                }
                Tensor::from_parts(vec![b, 1, s[2], s[3]], d)
            });
            vec![gx, gm]
        })
    }

    pub fn sum(&self) -> Var<'t, T> {
        let x = self.value();
        let shape = x.shape().to_vec();
        self.tape().op(Tensor::scalar(x.sum()), &[*self], move |g, _| {
            vec![Some(Tensor::full(&shape, g.item()))]
        })
    }

    pub fn mean(&self) -> Var<'t, T> {
        let n = T::c(self.value().numel() as f64);
        self.sum().scale(T::one() / n)
    }

    pub fn reshape(&self, shape: &[usize]) -> Var<'t, T> {
        let x = self.value();
        let old = x.shape().to_vec();
        let out = (*x).clone().reshape(shape).expect("reshape");
        self.tape().op(out, &[*self], move |g, _| vec![Some(g.clone().reshape(&old).expect("reshape"))])
    }
}
