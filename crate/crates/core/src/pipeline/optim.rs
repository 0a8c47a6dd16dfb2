use camrank_tensor::{ParamStore, Tensor};

use super::config::{AdamConfig, LrMultipliers};

/// Adam with bias correction and a per-parameter learning-rate scale.
#[derive(Clone, Debug)]
pub struct Adam {
    cfg: AdamConfig,
    lr: f64,
    scale: Vec<f64>,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: i32,
}

impl Adam {
    pub fn new(params: &ParamStore, lr: f64, cfg: AdamConfig, multipliers: &LrMultipliers) -> Self {
        let zeros = |i| Tensor::zeros(params.tensor(i).shape());
        Self {
            cfg,
            lr,
            scale: (0..params.len()).map(|i| multipliers.for_param(params.name(i))).collect(),
            m: (0..params.len()).map(zeros).collect(),
            v: (0..params.len()).map(zeros).collect(),
            t: 0,
        }
    }

    /// One update. Parameters without a gradient keep their moments and values.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Option<Tensor>]) {
        assert_eq!(grads.len(), params.len());
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for (i, g) in grads.iter().enumerate() {
            let Some(g) = g else { continue };
            let lr = self.lr * self.scale[i];
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            let p = params.tensor_mut(i).data_mut();
            for k in 0..p.len() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g.data()[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g.data()[k] * g.data()[k];
                p[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
            }
        }
    }
}
