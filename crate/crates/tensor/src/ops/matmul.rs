use crate::exec;
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// `C (+)= op(A) · op(B)` for row-major buffers, where `op(A)` is `[m, k]`
/// and `op(B)` is `[k, n]`. A transposed operand is stored in the transposed
/// row-major layout (`[k, m]` or `[n, k]`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c.fill(0.0);
        }
        return;
    }
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: strides describe exactly the buffers checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Graph {
    /// `[M, K] x [K, N] -> [M, N]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = dims2(self.value(a));
        let (k2, n) = dims2(self.value(b));
        assert_eq!(k, k2, "matmul inner dimension mismatch");
        let mut y = Tensor::zeros(&[m, n]);
        gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), false, y.data_mut(), false);
        self.op(
            y,
            &[a, b],
            Box::new(move |g, p, _| {
                let mut ga = Tensor::zeros(&[m, k]);
                gemm(m, n, k, g.data(), false, p[1].data(), true, ga.data_mut(), false);
                let mut gb = Tensor::zeros(&[k, n]);
                gemm(k, m, n, p[0].data(), true, g.data(), false, gb.data_mut(), false);
                vec![ga, gb]
            }),
        )
    }

    /// Batched `[B, M, K] x [B, K, N] -> [B, M, N]`.
    pub fn bmm(&mut self, a: Var, b: Var) -> Var {
        let (bs, m, k) = dims3(self.value(a));
        let (bs2, k2, n) = dims3(self.value(b));
        assert_eq!((bs, k), (bs2, k2), "bmm shape mismatch");
        let mut y = Tensor::zeros(&[bs, m, n]);
        {
            let av = self.value(a).data();
            let bv = self.value(b).data();
            exec::for_each_chunk(y.data_mut(), m * n, |i, c| {
                gemm(m, k, n, &av[i * m * k..(i + 1) * m * k], false, &bv[i * k * n..(i + 1) * k * n], false, c, false);
            });
        }
        self.op(
            y,
            &[a, b],
            Box::new(move |g, p, _| {
                let (av, bv, gv) = (p[0].data(), p[1].data(), g.data());
                let mut ga = Tensor::zeros(&[bs, m, k]);
                exec::for_each_chunk(ga.data_mut(), m * k, |i, c| {
                    gemm(m, n, k, &gv[i * m * n..(i + 1) * m * n], false, &bv[i * k * n..(i + 1) * k * n], true, c, false);
                });
                let mut gb = Tensor::zeros(&[bs, k, n]);
                exec::for_each_chunk(gb.data_mut(), k * n, |i, c| {
                    gemm(k, m, n, &av[i * m * k..(i + 1) * m * k], true, &gv[i * m * n..(i + 1) * m * n], false, c, false);
                });
                vec![ga, gb]
            }),
        )
    }

    /// Fully connected layer: `x [R, K] · w[O, K]^T + bias[O] -> [R, O]`.
    pub fn linear(&mut self, x: Var, w: Var, bias: Option<Var>) -> Var {
        let (r, k) = dims2(self.value(x));
        let (o, k2) = dims2(self.value(w));
        assert_eq!(k, k2, "linear input width mismatch");
        let mut y = Tensor::zeros(&[r, o]);
        gemm(r, k, o, self.value(x).data(), false, self.value(w).data(), true, y.data_mut(), false);
        if let Some(b) = bias {
            let bv = self.value(b).data();
            assert_eq!(bv.len(), o, "linear bias length mismatch");
            for row in y.data_mut().chunks_mut(o) {
                for (v, b) in row.iter_mut().zip(bv) {
                    *v += b;
                }
            }
        }
        let mut parents = vec![x, w];
        parents.extend(bias);
        self.op(
            y,
            &parents,
            Box::new(move |g, p, _| {
                let mut gx = Tensor::zeros(&[r, k]);
                gemm(r, o, k, g.data(), false, p[1].data(), false, gx.data_mut(), false);
                let mut gw = Tensor::zeros(&[o, k]);
                gemm(o, r, k, g.data(), true, p[0].data(), false, gw.data_mut(), false);
                let mut out = vec![gx, gw];
                if p.len() == 3 {
                    let mut gb = Tensor::zeros(&[o]);
                    for row in g.data().chunks(o) {
                        for (b, v) in gb.data_mut().iter_mut().zip(row) {
                            *b += v;
                        }
                    }
                    out.push(gb);
                }
                out
            }),
        )
    }

    /// Softmax over the last axis.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let cols = *av.shape().last().expect("softmax of a 0-d tensor");
        let mut y = av.clone();
        for row in y.data_mut().chunks_mut(cols) {
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        self.op(
            y,
            &[a],
            Box::new(move |g, _, out| {
                let mut ga = Tensor::zeros(out.shape());
                for ((gr, yr), dst) in g
                    .data()
                    .chunks(cols)
                    .zip(out.data().chunks(cols))
                    .zip(ga.data_mut().chunks_mut(cols))
                {
                    let dot: f64 = gr.iter().zip(yr).map(|(g, y)| g * y).sum();
                    for ((d, g), y) in dst.iter_mut().zip(gr).zip(yr) {
                        *d = y * (g - dot);
                    }
                }
                vec![ga]
            }),
        )
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let cols = *av.shape().last().expect("log_softmax of a 0-d tensor");
        let mut y = av.clone();
        for row in y.data_mut().chunks_mut(cols) {
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        self.op(
            y,
            &[a],
            Box::new(move |g, _, out| {
                let mut ga = Tensor::zeros(out.shape());
                for ((gr, yr), dst) in g
                    .data()
                    .chunks(cols)
                    .zip(out.data().chunks(cols))
                    .zip(ga.data_mut().chunks_mut(cols))
                {
                    let gs: f64 = gr.iter().sum();
                    for ((d, g), y) in dst.iter_mut().zip(gr).zip(yr) {
                        *d = g - y.exp() * gs;
                    }
                }
                vec![ga]
            }),
        )
    }
}

fn dims2(t: &Tensor) -> (usize, usize) {
    assert_eq!(t.ndim(), 2, "expected a matrix, got {:?}", t.shape());
    (t.shape()[0], t.shape()[1])
}

fn dims3(t: &Tensor) -> (usize, usize, usize) {
    assert_eq!(t.ndim(), 3, "expected [B, M, N], got {:?}", t.shape());
    (t.shape()[0], t.shape()[1], t.shape()[2])
}
