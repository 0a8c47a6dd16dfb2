use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

impl Graph {
    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let y = self.value(a).clone().reshape(shape);
        self.op(
            y,
            &[a],
            Box::new(|g, p, _| vec![g.clone().reshape(p[0].shape())]),
        )
    }

    /// Swaps the last two axes of a `[B, M, N]` tensor.
    pub fn transpose_last2(&mut self, a: Var) -> Var {
        let av = self.value(a);
        assert_eq!(av.ndim(), 3, "transpose_last2 expects [B, M, N]");
        let (b, m, n) = (av.shape()[0], av.shape()[1], av.shape()[2]);
        let y = transpose3(av, b, m, n);
        self.op(y, &[a], Box::new(move |g, _, _| vec![transpose3(g, b, n, m)]))
    }

    /// Concatenates along axis `axis` (0 or 1). All other axes must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Var {
        assert!(!parts.is_empty(), "concat of zero tensors");
        let shapes: Vec<Vec<usize>> = parts.iter().map(|&p| self.shape(p).to_vec()).collect();
        let ndim = shapes[0].len();
        assert!(axis < ndim);
        for s in &shapes {
            assert_eq!(s.len(), ndim);
            for (d, (&a, &b)) in s.iter().zip(&shapes[0]).enumerate() {
                assert!(d == axis || a == b, "concat shape mismatch {s:?} vs {:?}", shapes[0]);
            }
        }
        let outer: usize = shapes[0][..axis].iter().product();
        let inner: usize = shapes[0][axis + 1..].iter().product();
        let sizes: Vec<usize> = shapes.iter().map(|s| s[axis]).collect();
        let total: usize = sizes.iter().sum();
        let mut out_shape = shapes[0].clone();
        out_shape[axis] = total;
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (&p, &sz) in parts.iter().zip(&sizes) {
                let src = self.value(p).data();
                data.extend_from_slice(&src[o * sz * inner..(o + 1) * sz * inner]);
            }
        }
        self.op(
            Tensor::new(&out_shape, data),
            parts,
            Box::new(move |g, p, _| {
                let mut grads: Vec<Vec<f64>> =
                    p.iter().map(|t| Vec::with_capacity(t.numel())).collect();
                let mut off = 0;
                for _ in 0..outer {
                    for (k, &sz) in sizes.iter().enumerate() {
                        grads[k].extend_from_slice(&g.data()[off..off + sz * inner]);
                        off += sz * inner;
                    }
                }
                grads
                    .into_iter()
                    .zip(p)
                    .map(|(d, t)| Tensor::new(t.shape(), d))
                    .collect()
            }),
        )
    }

    /// Picks elements of the flattened input: `y[i] = x.flat[idx[i]]`.
    pub fn gather(&mut self, a: Var, idx: &[usize]) -> Var {
        let av = self.value(a);
        let y = Tensor::new(&[idx.len()], idx.iter().map(|&i| av.data()[i]).collect());
        let idx = idx.to_vec();
        self.op(
            y,
            &[a],
            Box::new(move |g, p, _| {
                let mut ga = Tensor::zeros(p[0].shape());
                for (k, &i) in idx.iter().enumerate() {
                    ga.data_mut()[i] += g.data()[k];
                }
                vec![ga]
            }),
        )
    }

    /// Selects entries along axis 0.
    pub fn index_select0(&mut self, a: Var, rows: &[usize]) -> Var {
        let av = self.value(a);
        let inner: usize = av.shape()[1..].iter().product();
        let mut shape = av.shape().to_vec();
        shape[0] = rows.len();
        let mut data = Vec::with_capacity(rows.len() * inner);
        for &r in rows {
            data.extend_from_slice(&av.data()[r * inner..(r + 1) * inner]);
        }
        let rows = rows.to_vec();
        self.op(
            Tensor::new(&shape, data),
            &[a],
            Box::new(move |g, p, _| {
                let mut ga = Tensor::zeros(p[0].shape());
                for (k, &r) in rows.iter().enumerate() {
                    let dst = &mut ga.data_mut()[r * inner..(r + 1) * inner];
                    for (d, s) in dst.iter_mut().zip(&g.data()[k * inner..(k + 1) * inner]) {
                        *d += s;
                    }
                }
                vec![ga]
            }),
        )
    }
}

fn transpose3(t: &Tensor, b: usize, m: usize, n: usize) -> Tensor {
    let src = t.data();
    let mut out = vec![0.0; b * m * n];
    for bi in 0..b {
        let base = bi * m * n;
        for i in 0..m {
            for j in 0..n {
                out[base + j * m + i] = src[base + i * n + j];
            }
        }
    }
    Tensor::new(&[b, n, m], out)
}
