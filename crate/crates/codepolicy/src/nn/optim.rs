//! Named parameters, decoupled-weight-decay Adam, and weight EMA.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, NodeId};
use super::tensor::Tensor;

/// A trainable tensor with gradient accumulator, Adam moments, and an
/// exponential moving average of its value.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub m: Tensor,
    pub v: Tensor,
    pub ema: Tensor,
}

impl Parameter {
    fn new(name: String, value: Tensor) -> Self {
        let zeros = Tensor::zeros(&value.shape);
        Self { name, grad: zeros.clone(), m: zeros.clone(), v: zeros.clone(), ema: value.clone(), value }
    }
}

pub type ParamId = usize;

/// Which weights to read when a parameter enters a graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamView {
    Live,
    Ema,
}

/// AdamW hyperparameters. Defaults: lr 1e-4, betas (0.95, 0.999),
/// eps 1e-8, weight decay 1e-6.
#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub weight_decay: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.95, beta2: 0.999, eps: 1e-8, weight_decay: 1e-6 }
    }
}

/// Registry of all parameters of one model.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    pub params: Vec<Parameter>,
    pub step: u64,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> ParamId {
        assert!(
            self.params.iter().all(|p| p.name != name),
            "duplicate parameter name {name}"
        );
        self.params.push(Parameter::new(name.to_string(), value));
        self.params.len() - 1
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init.
    pub fn add_uniform(
        &mut self,
        name: &str,
        shape: &[usize],
        fan_in: usize,
        rng: &mut ChaCha8Rng,
    ) -> ParamId {
        let bound = 1.0 / (fan_in as f32).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        self.add(name, Tensor::new(shape.to_vec(), data))
    }

    pub fn add_zeros(&mut self, name: &str, shape: &[usize]) -> ParamId {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn add_ones(&mut self, name: &str, shape: &[usize]) -> ParamId {
        self.add(name, Tensor::full(shape, 1.0))
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id]
    }

    /// Insert the parameter into a graph as a leaf. Live views record a
    /// binding so `absorb_grads` can route gradients back.
    pub fn leaf(&self, g: &mut Graph, id: ParamId, view: ParamView) -> NodeId {
        let t = match view {
            ParamView::Live => self.params[id].value.clone(),
            ParamView::Ema => self.params[id].ema.clone(),
        };
        let node = g.leaf(t);
        if view == ParamView::Live {
            g.bindings.push((id, node));
        }
        node
    }

    /// Accumulate graph gradients into parameter gradients. Repeated
    /// backward/absorb cycles without `zero_grads` keep accumulating.
    pub fn absorb_grads(&mut self, g: &Graph) {
        for &(pid, node) in &g.bindings {
            let gt = g.grad(node);
            for (a, b) in self.params[pid].grad.data.iter_mut().zip(&gt.data) {
                *a += *b;
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.data.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// One AdamW step over every parameter (no-op on an empty set).
    pub fn adamw_step(&mut self, cfg: &AdamConfig) {
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - (cfg.beta1 as f64).powf(t);
        let bc2 = 1.0 - (cfg.beta2 as f64).powf(t);
        for p in &mut self.params {
            for i in 0..p.value.data.len() {
                let g = p.grad.data[i];
                p.m.data[i] = cfg.beta1 * p.m.data[i] + (1.0 - cfg.beta1) * g;
                p.v.data[i] = cfg.beta2 * p.v.data[i] + (1.0 - cfg.beta2) * g * g;
                let mhat = p.m.data[i] / bc1 as f32;
                let vhat = p.v.data[i] / bc2 as f32;
                p.value.data[i] -=
                    cfg.lr * (mhat / (vhat.sqrt() + cfg.eps) + cfg.weight_decay * p.value.data[i]);
            }
        }
    }

    /// `ema <- decay * ema + (1 - decay) * value`.
    ///
    /// Accepts decay 1.0 as well: values like `1 - 1e-9` round to exactly 1.0
    /// in f32, and the update is then an identity.
    pub fn ema_update(&mut self, decay: f32) {
        assert!((0.0..=1.0).contains(&decay), "decay must be in [0,1]");
        for p in &mut self.params {
            for i in 0..p.value.data.len() {
                p.ema.data[i] = decay * p.ema.data[i] + (1.0 - decay) * p.value.data[i];
            }
        }
    }

    pub fn ema_from_value(&mut self) {
        for p in &mut self.params {
            p.ema = p.value.clone();
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.data.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_zero_grad_zero_decay_is_identity() {
        let mut ps = ParamSet::new();
        ps.add("p", Tensor::new(vec![2], vec![1.0, -2.0]));
        let cfg = AdamConfig { weight_decay: 0.0, ..Default::default() };
        ps.adamw_step(&cfg);
        assert_eq!(ps.get(0).value.data, vec![1.0, -2.0]);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        // Bias-corrected first step: mhat = g, vhat = g^2,
        // so delta = lr * g / (|g| + eps) ~ lr * sign(g).
        let mut ps = ParamSet::new();
        ps.add("p", Tensor::new(vec![1], vec![1.0]));
        ps.params[0].grad.data[0] = 1.0;
        let cfg = AdamConfig { weight_decay: 0.0, ..Default::default() };
        ps.adamw_step(&cfg);
        let moved = 1.0 - ps.get(0).value.data[0];
        assert!((moved - cfg.lr).abs() < 1e-6, "moved {moved}");
    }

    #[test]
    fn adam_pure_decay() {
        let mut ps = ParamSet::new();
        ps.add("p", Tensor::new(vec![1], vec![1.0]));
        let cfg = AdamConfig::default();
        ps.adamw_step(&cfg);
        let expected = 1.0 - cfg.lr * cfg.weight_decay;
        assert!((ps.get(0).value.data[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn adam_empty_set_is_noop() {
        let mut ps = ParamSet::new();
        ps.adamw_step(&AdamConfig::default());
        assert_eq!(ps.step, 1);
    }

    #[test]
    fn ema_boundary_decays() {
        let mut ps = ParamSet::new();
        ps.add("p", Tensor::new(vec![1], vec![1.0]));
        ps.params[0].ema.data[0] = 0.5;
        ps.ema_update(0.0);
        assert_eq!(ps.get(0).ema.data[0], 1.0);

        ps.params[0].ema.data[0] = 0.5;
        ps.ema_update(1.0 - 1e-9);
        assert!((ps.get(0).ema.data[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn ema_geometric_series() {
        // ema_0 = 0, constant value 1, decay 0.999:
        // after n steps ema = 1 - 0.999^n.
        let mut ps = ParamSet::new();
        ps.add("p", Tensor::new(vec![1], vec![1.0]));
        ps.params[0].ema.data[0] = 0.0;
        for _ in 0..1000 {
            ps.ema_update(0.999);
        }
        let expected = 1.0 - 0.999f64.powi(1000);
        assert!(
            (ps.get(0).ema.data[0] as f64 - expected).abs() < 2e-3,
            "got {} want {}",
            ps.get(0).ema.data[0],
            expected
        );
        assert!(ps.get(0).ema.all_finite());
    }
}
