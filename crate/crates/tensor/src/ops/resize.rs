use crate::exec;
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// One output coordinate's two source taps and weights (align-corners off).
#[derive(Clone, Copy, Debug)]
struct Tap {
    i0: usize,
    i1: usize,
    w0: f64,
    w1: f64,
}

fn taps(input: usize, output: usize) -> Vec<Tap> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            let l = src - i0 as f64;
            Tap { i0, i1, w0: 1.0 - l, w1: l }
        })
        .collect()
}

fn resize_planes(x: &Tensor, oh: usize, ow: usize) -> Tensor {
    let (n, c, h, w) = x.dims4();
    let (ty, tx) = (taps(h, oh), taps(w, ow));
    let mut y = Tensor::zeros(&[n, c, oh, ow]);
    let xv = x.data();
    exec::for_each_chunk(y.data_mut(), oh * ow, |p, out| {
        let src = &xv[p * h * w..(p + 1) * h * w];
        for (oy, a) in ty.iter().enumerate() {
            for (ox, b) in tx.iter().enumerate() {
                out[oy * ow + ox] = a.w0 * (b.w0 * src[a.i0 * w + b.i0] + b.w1 * src[a.i0 * w + b.i1])
                    + a.w1 * (b.w0 * src[a.i1 * w + b.i0] + b.w1 * src[a.i1 * w + b.i1]);
            }
        }
    });
    y
}

fn resize_planes_backward(g: &Tensor, h: usize, w: usize) -> Tensor {
    let (n, c, oh, ow) = g.dims4();
    let (ty, tx) = (taps(h, oh), taps(w, ow));
    let mut gx = Tensor::zeros(&[n, c, h, w]);
    let gv = g.data();
    exec::for_each_chunk(gx.data_mut(), h * w, |p, dst| {
        let src = &gv[p * oh * ow..(p + 1) * oh * ow];
        for (oy, a) in ty.iter().enumerate() {
            for (ox, b) in tx.iter().enumerate() {
                let v = src[oy * ow + ox];
                dst[a.i0 * w + b.i0] += a.w0 * b.w0 * v;
                dst[a.i0 * w + b.i1] += a.w0 * b.w1 * v;
                dst[a.i1 * w + b.i0] += a.w1 * b.w0 * v;
                dst[a.i1 * w + b.i1] += a.w1 * b.w1 * v;
            }
        }
    });
    gx
}

/// Bilinear resampling of every `[H, W]` plane of an NCHW tensor
/// (half-pixel centres, align-corners off). Not recorded on any graph.
pub fn resize_bilinear(x: &Tensor, oh: usize, ow: usize) -> Tensor {
    resize_planes(x, oh, ow)
}

impl Graph {
    /// Differentiable bilinear resize, see [`resize_bilinear`].
    pub fn resize_bilinear(&mut self, x: Var, oh: usize, ow: usize) -> Var {
        let (_, _, h, w) = self.value(x).dims4();
        if (h, w) == (oh, ow) {
            return x;
        }
        let y = resize_planes(self.value(x), oh, ow);
        self.op(y, &[x], Box::new(move |g, _, _| vec![resize_planes_backward(g, h, w)]))
    }
}
