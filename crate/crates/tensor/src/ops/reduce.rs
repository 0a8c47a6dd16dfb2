use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

impl Graph {
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.op(
            Tensor::scalar(s),
            &[a],
            Box::new(|g, p, _| vec![Tensor::full(p[0].shape(), g.item())]),
        )
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).numel() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Sum over the spatial axes of `[N, C, H, W]`, giving `[N, C]`.
    pub fn sum_spatial(&mut self, a: Var) -> Var {
        let (n, c, h, w) = self.value(a).dims4();
        let hw = h * w;
        let av = self.value(a);
        let y = Tensor::from_fn(&[n, c], |i| av.data()[i * hw..(i + 1) * hw].iter().sum());
        self.op(
            y,
            &[a],
            Box::new(move |g, p, _| {
                vec![Tensor::from_fn(p[0].shape(), |i| g.data()[i / hw])]
            }),
        )
    }

    /// Sum of several single-element vars, added left to right.
    pub fn add_scalars(&mut self, terms: &[Var]) -> Var {
        assert!(!terms.is_empty());
        let mut acc = terms[0];
        for &t in &terms[1..] {
            acc = self.add(acc, t);
        }
        acc
    }
}
