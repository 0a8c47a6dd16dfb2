//! Parameter creation and the two parameterised primitives (conv, linear).

use camrank_tensor::{Conv2dSpec, Graph, ParamStore, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub(crate) struct Init<'a> {
    store: &'a mut ParamStore,
    rng: ChaCha8Rng,
}

impl<'a> Init<'a> {
    pub fn new(store: &'a mut ParamStore, seed: u64) -> Self {
        Self { store, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    fn normal(&mut self, shape: &[usize], std: f64) -> Tensor {
        let dist = Normal::new(0.0, std).expect("finite std");
        Tensor::from_fn(shape, |_| dist.sample(&mut self.rng))
    }

    /// Conv weight `[cout, cin, k, k]` plus zero bias. `std = None` means He init.
    pub fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, std: Option<f64>) {
        let std = std.unwrap_or_else(|| (2.0 / (cin * k * k) as f64).sqrt());
        let w = self.normal(&[cout, cin, k, k], std);
        self.store.insert(format!("{name}.weight"), w);
        self.store.insert(format!("{name}.bias"), Tensor::zeros(&[cout]));
    }

    /// Linear weight `[out, in]` plus zero bias.
    pub fn linear(&mut self, name: &str, fan_in: usize, out: usize, std: Option<f64>) {
        let std = std.unwrap_or_else(|| (2.0 / fan_in as f64).sqrt());
        let w = self.normal(&[out, fan_in], std);
        self.store.insert(format!("{name}.weight"), w);
        self.store.insert(format!("{name}.bias"), Tensor::zeros(&[out]));
    }

    pub fn scalar(&mut self, name: &str, value: f64) {
        self.store.insert(name, Tensor::new(&[1], vec![value]));
    }
}

pub(crate) fn conv(g: &mut Graph, p: &ParamStore, name: &str, x: Var, spec: Conv2dSpec) -> Var {
    let w = g.param(p, &format!("{name}.weight"));
    let b = g.param(p, &format!("{name}.bias"));
    g.conv2d(x, w, Some(b), spec)
}

pub(crate) fn conv_relu(g: &mut Graph, p: &ParamStore, name: &str, x: Var, spec: Conv2dSpec) -> Var {
    let y = conv(g, p, name, x, spec);
    g.relu(y)
}

pub(crate) fn linear(g: &mut Graph, p: &ParamStore, name: &str, x: Var) -> Var {
    let w = g.param(p, &format!("{name}.weight"));
    let b = g.param(p, &format!("{name}.bias"));
    g.linear(x, w, Some(b))
}

pub(crate) const SAME3: Conv2dSpec = Conv2dSpec::same(3, 1);
pub(crate) const POINT: Conv2dSpec = Conv2dSpec::same(1, 1);
