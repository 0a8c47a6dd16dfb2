//! Dual residual attention and reverse-attention gating.

use camrank_tensor::{resize_bilinear, Graph, ParamStore, Tensor, Var};

use super::layers::{conv, Init, POINT};
use crate::error::{Error, Result};

pub(crate) fn init_dra(init: &mut Init, prefix: &str, c: usize, reduction: usize, gamma: f64) {
    let qk = (c / reduction).max(1);
    init.conv(&format!("{prefix}.query"), c, qk, 1, None);
    init.conv(&format!("{prefix}.key"), c, qk, 1, None);
    init.conv(&format!("{prefix}.value"), c, c, 1, None);
    init.scalar(&format!("{prefix}.gamma_p"), gamma);
    init.scalar(&format!("{prefix}.gamma_c"), gamma);
}

/// Position attention: every pixel aggregates values from all pixels,
/// weighted by a softmax over query-key affinities.
pub fn position_attention(g: &mut Graph, p: &ParamStore, prefix: &str, x: Var) -> Var {
    let (n, c, h, w) = g.value(x).dims4();
    let hw = h * w;
    let q = conv(g, p, &format!("{prefix}.query"), x, POINT);
    let qk = g.shape(q)[1];
    let q = g.reshape(q, &[n, qk, hw]);
    let q = g.transpose_last2(q);
    let k = conv(g, p, &format!("{prefix}.key"), x, POINT);
    let k = g.reshape(k, &[n, qk, hw]);
    let energy = g.bmm(q, k);
    let attn = g.softmax_rows(energy);
    let v = conv(g, p, &format!("{prefix}.value"), x, POINT);
    let v = g.reshape(v, &[n, c, hw]);
    let attn_t = g.transpose_last2(attn);
    let out = g.bmm(v, attn_t);
    g.reshape(out, &[n, c, h, w])
}

/// Channel attention: every channel aggregates all channels, weighted by a
/// softmax over their Gram matrix.
pub fn channel_attention(g: &mut Graph, x: Var) -> Var {
    let (n, c, h, w) = g.value(x).dims4();
    let flat = g.reshape(x, &[n, c, h * w]);
    let flat_t = g.transpose_last2(flat);
    let energy = g.bmm(flat, flat_t);
    let attn = g.softmax_rows(energy);
    let out = g.bmm(attn, flat);
    g.reshape(out, &[n, c, h, w])
}

/// `x + gamma_p * PAM(x) + gamma_c * CAM(x)`.
pub fn dual_residual_attention(g: &mut Graph, p: &ParamStore, prefix: &str, x: Var) -> Var {
    let pam = position_attention(g, p, prefix, x);
    let cam = channel_attention(g, x);
    let gp = g.param(p, &format!("{prefix}.gamma_p"));
    let gc = g.param(p, &format!("{prefix}.gamma_c"));
    let pam = g.mul_scalar_var(pam, gp);
    let cam = g.mul_scalar_var(cam, gc);
    let y = g.add(x, pam);
    g.add(y, cam)
}

/// Gates one stage feature `[N, C, h, w]` by `1 - F`, with `F` `[N, 1, H, W]`
/// bilinearly resampled to the stage resolution.
pub fn reverse_gate(g: &mut Graph, stage: Var, f: Var) -> Var {
    let (_, _, h, w) = g.value(stage).dims4();
    let rev = g.one_minus(f);
    let rev = g.resize_bilinear(rev, h, w);
    g.mul_channel_broadcast(stage, rev)
}

/// Tensor-level reverse attention for every stage. `f` must be a
/// `[N, 1, H, W]` probability map.
pub fn reverse_attention(stages: &[Tensor], f: &Tensor) -> Result<Vec<Tensor>> {
    if f.ndim() != 4 || f.shape()[1] != 1 {
        return Err(Error::invalid(format!("F must be [N, 1, H, W], got {:?}", f.shape())));
    }
    if f.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid("F must lie in [0, 1]"));
    }
    let rev = f.map(|v| 1.0 - v);
    stages
        .iter()
        .map(|s| {
            let (n, c, h, w) = s.dims4();
            if n != f.shape()[0] {
                return Err(Error::invalid("batch size of F and stage features differ"));
            }
            let r = resize_bilinear(&rev, h, w);
            let hw = h * w;
            Ok(Tensor::from_fn(s.shape(), |i| s.data()[i] * r.data()[(i / (c * hw)) * hw + i % hw]))
        })
        .collect()
}
