use crate::exec;
use crate::graph::{Graph, Var};
use crate::ops::matmul::gemm;
use crate::tensor::Tensor;

/// Stride / zero-padding / dilation of a square 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl Conv2dSpec {
    pub const fn new(stride: usize, padding: usize, dilation: usize) -> Self {
        Self { stride, padding, dilation }
    }

    /// Stride-1 convolution that keeps the spatial size for odd kernel `k`.
    pub const fn same(k: usize, dilation: usize) -> Self {
        Self { stride: 1, padding: dilation * (k - 1) / 2, dilation }
    }

    pub fn out_size(&self, input: usize, k: usize) -> usize {
        let span = self.dilation * (k - 1) + 1;
        assert!(
            input + 2 * self.padding >= span,
            "kernel span {span} exceeds padded input {}",
            input + 2 * self.padding
        );
        (input + 2 * self.padding - span) / self.stride + 1
    }
}

#[derive(Clone, Copy)]
struct Geometry {
    ci: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
    spec: Conv2dSpec,
}

impl Geometry {
    fn k(&self) -> usize {
        self.ci * self.kh * self.kw
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.spec.stride == 1 && self.spec.padding == 0
    }

    /// Source pixel index for output `(oy, ox)` and kernel tap `(ky, kx)`, if inside the image.
    #[inline]
    fn src(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<usize> {
        let s = self.spec;
        let iy = (oy * s.stride + ky * s.dilation) as isize - s.padding as isize;
        let ix = (ox * s.stride + kx * s.dilation) as isize - s.padding as isize;
        if iy < 0 || ix < 0 || iy >= self.h as isize || ix >= self.w as isize {
            None
        } else {
            Some(iy as usize * self.w + ix as usize)
        }
    }
}

fn im2col(x: &[f64], g: &Geometry) -> Vec<f64> {
    let hw_out = g.ho * g.wo;
    let mut col = vec![0.0; g.k() * hw_out];
    for c in 0..g.ci {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let dst = &mut col[row * hw_out..(row + 1) * hw_out];
                for oy in 0..g.ho {
                    for ox in 0..g.wo {
                        if let Some(s) = g.src(oy, ox, ky, kx) {
                            dst[oy * g.wo + ox] = plane[s];
                        }
                    }
                }
            }
        }
    }
    col
}

fn col2im(col: &[f64], g: &Geometry, dx: &mut [f64]) {
    let hw_out = g.ho * g.wo;
    for c in 0..g.ci {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let src = &col[row * hw_out..(row + 1) * hw_out];
                for oy in 0..g.ho {
                    for ox in 0..g.wo {
                        if let Some(s) = g.src(oy, ox, ky, kx) {
                            plane[s] += src[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

impl Graph {
    /// 2-D cross-correlation of `x [N, Ci, H, W]` with `w [Co, Ci, kh, kw]`.
    pub fn conv2d(&mut self, x: Var, w: Var, bias: Option<Var>, spec: Conv2dSpec) -> Var {
        let (n, ci, h, wd) = self.value(x).dims4();
        let (co, ci2, kh, kw) = self.value(w).dims4();
        assert_eq!(ci, ci2, "conv2d channel mismatch: input {ci}, weight {ci2}");
        let geo = Geometry {
            ci,
            h,
            w: wd,
            kh,
            kw,
            ho: spec.out_size(h, kh),
            wo: spec.out_size(wd, kw),
            spec,
        };
        let hw_out = geo.ho * geo.wo;
        let k = geo.k();
        let mut y = Tensor::zeros(&[n, co, geo.ho, geo.wo]);
        {
            let xv = self.value(x).data();
            let wv = self.value(w).data();
            let bv = bias.map(|b| self.value(b).data().to_vec());
            exec::for_each_chunk(y.data_mut(), co * hw_out, |i, out| {
                let xi = &xv[i * ci * h * wd..(i + 1) * ci * h * wd];
                if geo.is_pointwise() {
                    gemm(co, k, hw_out, wv, false, xi, false, out, false);
                } else {
                    let col = im2col(xi, &geo);
                    gemm(co, k, hw_out, wv, false, &col, false, out, false);
                }
                if let Some(bv) = &bv {
                    for (oc, plane) in out.chunks_mut(hw_out).enumerate() {
                        for v in plane {
                            *v += bv[oc];
                        }
                    }
                }
            });
        }
        let mut parents = vec![x, w];
        parents.extend(bias);
        self.op(
            y,
            &parents,
            Box::new(move |g, p, _| {
                let (xv, wv, gv) = (p[0].data(), p[1].data(), g.data());
                let in_plane = ci * h * wd;
                let out_plane = co * hw_out;
                let per_image: Vec<(Vec<f64>, Vec<f64>)> = exec::map_range(n, |i| {
                    let gi = &gv[i * out_plane..(i + 1) * out_plane];
                    let xi = &xv[i * in_plane..(i + 1) * in_plane];
                    let mut dw = vec![0.0; co * k];
                    let mut dx = vec![0.0; in_plane];
                    if geo.is_pointwise() {
                        gemm(co, hw_out, k, gi, false, xi, true, &mut dw, false);
                        gemm(k, co, hw_out, wv, true, gi, false, &mut dx, false);
                    } else {
                        let col = im2col(xi, &geo);
                        gemm(co, hw_out, k, gi, false, &col, true, &mut dw, false);
                        let mut dcol = vec![0.0; k * hw_out];
                        gemm(k, co, hw_out, wv, true, gi, false, &mut dcol, false);
                        col2im(&dcol, &geo, &mut dx);
                    }
                    (dw, dx)
                });
                let mut gx = Tensor::zeros(p[0].shape());
                let mut gw = Tensor::zeros(p[1].shape());
                for (i, (dw, dx)) in per_image.into_iter().enumerate() {
                    gx.data_mut()[i * in_plane..(i + 1) * in_plane].copy_from_slice(&dx);
                    for (a, b) in gw.data_mut().iter_mut().zip(&dw) {
                        *a += b;
                    }
                }
                let mut out = vec![gx, gw];
                if p.len() == 3 {
                    let mut gb = Tensor::zeros(&[co]);
                    for i in 0..n {
                        for oc in 0..co {
                            let base = i * out_plane + oc * hw_out;
                            gb.data_mut()[oc] += gv[base..base + hw_out].iter().sum::<f64>();
                        }
                    }
                    out.push(gb);
                }
                out
            }),
        )
    }
}
