use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let y = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.op(y, &[a, b], Box::new(|g, _, _| vec![g.clone(), g.clone()]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let y = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.op(y, &[a, b], Box::new(|g, _, _| vec![g.clone(), g.map(|v| -v)]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let y = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.op(
            y,
            &[a, b],
            Box::new(|g, p, _| vec![g.zip_map(p[1], |g, b| g * b), g.zip_map(p[0], |g, a| g * a)]),
        )
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let y = self.value(a).zip_map(self.value(b), |x, y| x / y);
        self.op(
            y,
            &[a, b],
            Box::new(|g, p, out| {
                let ga = g.zip_map(p[1], |g, b| g / b);
                let gb = Tensor::from_fn(g.shape(), |i| {
                    -g.data()[i] * out.data()[i] / p[1].data()[i]
                });
                vec![ga, gb]
            }),
        )
    }

    /// `mul * x + add`, elementwise.
    pub fn affine(&mut self, a: Var, mul: f64, add: f64) -> Var {
        let y = self.value(a).map(|x| mul * x + add);
        self.op(y, &[a], Box::new(move |g, _, _| vec![g.map(|v| v * mul)]))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.affine(a, k, 0.0)
    }

    /// `1 - x`.
    pub fn one_minus(&mut self, a: Var) -> Var {
        self.affine(a, -1.0, 1.0)
    }

    /// Multiplies every element of `a` by the single-element `s`.
    pub fn mul_scalar_var(&mut self, a: Var, s: Var) -> Var {
        assert_eq!(self.value(s).numel(), 1, "mul_scalar_var expects a scalar");
        let k = self.value(s).item();
        let y = self.value(a).map(|x| x * k);
        self.op(
            y,
            &[a, s],
            Box::new(|g, p, _| {
                let k = p[1].item();
                let gs: f64 = g.data().iter().zip(p[0].data()).map(|(g, a)| g * a).sum();
                vec![g.map(|v| v * k), Tensor::new(p[1].shape(), vec![gs])]
            }),
        )
    }

    pub fn relu(&mut self, a: Var) -> Var {
        // not `max`, which would turn NaN into 0
        let y = self.value(a).map(|x| if x < 0.0 { 0.0 } else { x });
        self.op(
            y,
            &[a],
            Box::new(|g, p, _| vec![g.zip_map(p[0], |g, x| if x > 0.0 { g } else { 0.0 })]),
        )
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let y = self.value(a).map(sigmoid);
        self.op(y, &[a], Box::new(|g, _, out| vec![g.zip_map(out, |g, s| g * s * (1.0 - s))]))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let y = self.value(a).map(|x| x * x);
        self.op(y, &[a], Box::new(|g, p, _| vec![g.zip_map(p[0], |g, x| 2.0 * g * x)]))
    }

    /// `ln(max(x, eps))`; the gradient is zero where the clamp is active.
    pub fn ln_clamped(&mut self, a: Var, eps: f64) -> Var {
        let y = self.value(a).map(|x| floor(x, eps).ln());
        self.op(
            y,
            &[a],
            Box::new(move |g, p, _| vec![g.zip_map(p[0], |g, x| if x > eps { g / x } else { 0.0 })]),
        )
    }

    /// Elementwise binary cross-entropy of probabilities `p` against soft
    /// targets `t`, with both logs clamped at `eps`.
    pub fn bce_prob(&mut self, p: Var, target: &Tensor, eps: f64) -> Var {
        let pv = self.value(p);
        assert_eq!(pv.shape(), target.shape(), "bce_prob shape mismatch");
        let y = pv.zip_map(target, |p, t| -(t * floor(p, eps).ln() + (1.0 - t) * floor(1.0 - p, eps).ln()));
        let target = target.clone();
        self.op(
            y,
            &[p],
            Box::new(move |g, pv, _| {
                let gp = Tensor::from_fn(g.shape(), |i| {
                    let p = pv[0].data()[i];
                    let t = target.data()[i];
                    let mut d = 0.0;
                    if p > eps {
                        d -= t / p;
                    }
                    if 1.0 - p > eps {
                        d += (1.0 - t) / (1.0 - p);
                    }
                    g.data()[i] * d
                });
                vec![gp]
            }),
        )
    }

    /// Elementwise, numerically stable binary cross-entropy on logits.
    pub fn bce_with_logits(&mut self, logits: Var, target: &Tensor) -> Var {
        let x = self.value(logits);
        assert_eq!(x.shape(), target.shape(), "bce_with_logits shape mismatch");
        let y = x.zip_map(target, |x, t| x.max(0.0) - x * t + (-x.abs()).exp().ln_1p());
        let target = target.clone();
        self.op(
            y,
            &[logits],
            Box::new(move |g, p, _| {
                vec![Tensor::from_fn(g.shape(), |i| {
                    g.data()[i] * (sigmoid(p[0].data()[i]) - target.data()[i])
                })]
            }),
        )
    }

    /// Elementwise smooth-L1 (Huber with transition `beta`) of `a - target`.
    pub fn smooth_l1(&mut self, a: Var, target: &Tensor, beta: f64) -> Var {
        let av = self.value(a);
        assert_eq!(av.shape(), target.shape(), "smooth_l1 shape mismatch");
        let y = av.zip_map(target, |a, t| {
            let d = (a - t).abs();
            if d < beta {
                0.5 * d * d / beta
            } else {
                d - 0.5 * beta
            }
        });
        let target = target.clone();
        self.op(
            y,
            &[a],
            Box::new(move |g, p, _| {
                vec![Tensor::from_fn(g.shape(), |i| {
                    let d = p[0].data()[i] - target.data()[i];
                    let s = if d.abs() < beta { d / beta } else { d.signum() };
                    g.data()[i] * s
                })]
            }),
        )
    }

    /// Multiplies `[N, C, H, W]` by a `[N, 1, H, W]` map broadcast over channels.
    pub fn mul_channel_broadcast(&mut self, x: Var, m: Var) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        assert_eq!(self.value(m).shape(), &[n, 1, h, w], "broadcast map shape mismatch");
        let hw = h * w;
        let xv = self.value(x);
        let mv = self.value(m);
        let y = Tensor::from_fn(xv.shape(), |i| {
            let b = i / (c * hw);
            xv.data()[i] * mv.data()[b * hw + i % hw]
        });
        self.op(
            y,
            &[x, m],
            Box::new(move |g, p, _| {
                let (xv, mv) = (p[0], p[1]);
                let gx = Tensor::from_fn(g.shape(), |i| {
                    let b = i / (c * hw);
                    g.data()[i] * mv.data()[b * hw + i % hw]
                });
                let mut gm = Tensor::zeros(mv.shape());
                for b in 0..n {
                    for ch in 0..c {
                        let base = (b * c + ch) * hw;
                        for k in 0..hw {
                            gm.data_mut()[b * hw + k] += g.data()[base + k] * xv.data()[base + k];
                        }
                    }
                }
                vec![gx, gm]
            }),
        )
    }
}

/// `max(x, eps)` that keeps NaN, so a poisoned input still shows in the loss.
fn floor(x: f64, eps: f64) -> f64 {
    if x < eps { eps } else { x }
}
