use crate::numerics::real::Real;
use crate::numerics::tape::Var;
use crate::numerics::tensor::Tensor;

impl<'t, T: Real> Var<'t, T> {
    /// Rows `start..end` of the outermost dimension.
    pub fn slice_outer(&self, start: usize, end: usize) -> Var<'t, T> {
        let x = self.value();
        let shape = x.shape().to_vec();
        assert!(start < end && end <= shape[0], "slice_outer: {start}..{end} of {}", shape[0]);
        let row = x.numel() / shape[0];
        let out = x.slice_outer(start, end);
        self.tape().op(out, &[*self], move |g, _| {
            let mut d = vec![T::zero(); shape[0] * row];
            d[start * row..end * row].copy_from_slice(g.data());
            vec![Some(Tensor::from_parts(shape.clone(), d))]
        })
    }

    /// Concatenates along the outermost dimension; inner dims must agree.
    pub fn concat_outer(parts: &[Var<'t, T>]) -> Var<'t, T> {
        assert!(!parts.is_empty(), "concat_outer: nothing to concatenate");
        let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let inner = values[0].shape()[1..].to_vec();
        let mut rows = Vec::with_capacity(parts.len());
        let mut data = Vec::new();
        for v in &values {
            assert_eq!(&v.shape()[1..], &inner[..], "concat_outer: inner shape mismatch");
            rows.push(v.dim(0));
            data.extend_from_slice(v.data());
        }
        let mut shape = vec![rows.iter().sum()];
        shape.extend_from_slice(&inner);
        let row: usize = inner.iter().product();
        let inner2 = inner.clone();
        parts[0].tape().op(Tensor::from_parts(shape, data), parts, move |g, need| {
            let mut off = 0;
            rows.iter()
                .zip(need)
                .map(|(&r, &n)| {
                    let piece = n.then(|| {
                        let mut s = vec![r];
                        s.extend_from_slice(&inner2);
                        Tensor::from_parts(s, g.data()[off * row..(off + r) * row].to_vec())
                    });
                    off += r;
                    piece
                })
                .collect()
        })
    }
}
