//! The code-conditioned diffusion policy: conditioning encoder, FiLM UNet
//! epsilon-predictor, and DDPM/DDIM samplers over H=8 action chunks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::nn::graph::Graph;
use crate::nn::layers::{timestep_embedding, Linear};
use crate::nn::optim::{ParamSet, ParamView};
use crate::nn::tensor::Tensor;

use super::encoder::{CondEncoder, CondSample, OBS_TOKENS};
use super::schedule::{add_noise, loss_weight, NoiseSchedule};
use super::unet::UNet1d;

pub const H_CHUNK: usize = 8;
pub const ACTION_DIM: usize = 4;
pub const CHUNK_LEN: usize = H_CHUNK * ACTION_DIM;
const TIME_EMB: usize = 32;

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error("training loss became non-finite at step {step} (k={k:?})")]
    NonFiniteLoss { step: usize, k: Vec<usize> },
}

/// An H x D_a block of actions, flattened channel-major: `data[c*H + t]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionChunk {
    pub data: [f32; CHUNK_LEN],
}

impl ActionChunk {
    pub fn action(&self, t: usize) -> [f32; ACTION_DIM] {
        let mut a = [0f32; ACTION_DIM];
        for (c, slot) in a.iter_mut().enumerate() {
            *slot = self.data[c * H_CHUNK + t];
        }
        a
    }

    pub fn from_actions(actions: &[[f32; ACTION_DIM]]) -> ActionChunk {
        assert!(!actions.is_empty());
        let mut data = [0f32; CHUNK_LEN];
        for t in 0..H_CHUNK {
            // chunks shorter than H pad by repeating the last action
            let a = actions[t.min(actions.len() - 1)];
            for c in 0..ACTION_DIM {
                data[c * H_CHUNK + t] = a[c];
            }
        }
        ActionChunk { data }
    }

    pub fn clipped(mut self) -> ActionChunk {
        for v in self.data.iter_mut() {
            *v = v.clamp(-1.0, 1.0);
        }
        self
    }
}

pub struct DiffusionPolicy {
    pub params: ParamSet,
    pub schedule: NoiseSchedule,
    pub dim: usize,
    pub cond_dim: usize,
    encoder: CondEncoder,
    unet: UNet1d,
    pooled_proj: Linear,
    time_proj: Linear,
}

impl DiffusionPolicy {
    pub fn new(seed: u64, dim: usize, cond_dim: usize) -> DiffusionPolicy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        let encoder = CondEncoder::new(&mut ps, "enc", dim, &mut rng);
        let unet = UNet1d::new(&mut ps, "unet", ACTION_DIM, cond_dim, &mut rng);
        let pooled_proj = Linear::new(&mut ps, "cond.pooled", OBS_TOKENS * dim, cond_dim, &mut rng);
        let time_proj = Linear::new(&mut ps, "cond.time", TIME_EMB, cond_dim, &mut rng);
        DiffusionPolicy { params: ps, schedule: NoiseSchedule::default(), dim, cond_dim, encoder, unet, pooled_proj, time_proj }
    }

    /// Pooled conditioning vector for a batch, `[bsz, 4*dim]`.
    pub fn encode_batch(&self, g: &mut Graph, view: ParamView, batch: &[&CondSample]) -> crate::nn::graph::NodeId {
        self.encoder.forward(g, &self.params, view, batch)
    }

    /// Encode one sample into a reusable conditioning vector.
    pub fn encode(&self, view: ParamView, sample: &CondSample) -> Tensor {
        let mut g = Graph::new();
        let pooled = self.encode_batch(&mut g, view, &[sample]);
        g.value(pooled).clone()
    }

    /// Epsilon prediction from a precomputed pooled conditioning vector.
    pub fn eps_from_pooled(&self, view: ParamView, pooled: &Tensor, x: &[f32], k: usize) -> Vec<f32> {
        let mut g = Graph::new();
        let ps = &self.params;
        let pooled = g.leaf(pooled.clone());
        let cond = self.film_cond(&mut g, view, pooled, &[k]);
        let noisy = g.leaf(Tensor::new(vec![1, ACTION_DIM, H_CHUNK], x.to_vec()));
        let out = self.unet.forward(&mut g, ps, view, noisy, cond);
        g.value(out).data.clone()
    }

    fn film_cond(
        &self,
        g: &mut Graph,
        view: ParamView,
        pooled: crate::nn::graph::NodeId,
        ks: &[usize],
    ) -> crate::nn::graph::NodeId {
        let ps = &self.params;
        let p = self.pooled_proj.forward(g, ps, view, pooled);
        let temb = g.leaf(timestep_embedding(ks, TIME_EMB));
        let t = self.time_proj.forward(g, ps, view, temb);
        let c = g.add(p, t);
        g.silu(c)
    }

    /// One weighted epsilon-prediction training step over a batch of
    /// (conditioning, ground-truth chunk) pairs.
    pub fn train_step(
        &mut self,
        batch: &[(&CondSample, ActionChunk)],
        adam: &crate::nn::optim::AdamConfig,
        ema_decay: f32,
        step: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<f32, DiffusionError> {
        let bsz = batch.len();
        let mut ks = Vec::with_capacity(bsz);
        let mut noisy = Vec::with_capacity(bsz * CHUNK_LEN);
        let mut eps_true = Vec::with_capacity(bsz * CHUNK_LEN);
        let mut weights = Vec::with_capacity(bsz);
        for (_, chunk) in batch {
            let k = rng.gen_range(1..=self.schedule.k_steps);
            let eps: Vec<f32> = (0..CHUNK_LEN).map(|_| rng.sample(StandardNormal)).collect();
            let xk = add_noise(&self.schedule, &chunk.data, k, &eps);
            ks.push(k);
            noisy.extend_from_slice(&xk);
            eps_true.extend_from_slice(&eps);
            weights.push(loss_weight(self.schedule.lambda(k)));
        }

        let mut g = Graph::new();
        let samples: Vec<&CondSample> = batch.iter().map(|(s, _)| *s).collect();
        let pooled = self.encode_batch(&mut g, ParamView::Live, &samples);
        let cond = self.film_cond(&mut g, ParamView::Live, pooled, &ks);
        let x = g.leaf(Tensor::new(vec![bsz, ACTION_DIM, H_CHUNK], noisy));
        let eps_hat = self.unet.forward(&mut g, &self.params, ParamView::Live, x, cond);
        let eps_t = g.leaf(Tensor::new(vec![bsz, ACTION_DIM, H_CHUNK], eps_true));
        let diff = g.sub(eps_hat, eps_t);
        let sq = g.mul(diff, diff);
        let w = g.leaf(Tensor::new(vec![bsz], weights));
        let weighted = g.mul_rows(sq, w);
        let loss = g.mean_all(weighted);
        let loss_val = g.value(loss).item();
        if g.backward(loss).is_err() {
            return Err(DiffusionError::NonFiniteLoss { step, k: ks });
        }
        self.params.zero_grads();
        self.params.absorb_grads(&g);
        self.params.adamw_step(adam);
        self.params.ema_update(ema_decay);
        Ok(loss_val)
    }
}

/// Ancestral DDPM sampling with the small posterior variance and per-step
/// clipping of the predicted clean chunk. `eps_fn(x, k)` supplies the
/// epsilon prediction (a trained network in production, analytic oracles in
/// tests).
pub fn ddpm_sample_with(
    schedule: &NoiseSchedule,
    eps_fn: impl Fn(&[f32], usize) -> Vec<f32>,
    rng: &mut ChaCha8Rng,
) -> ActionChunk {
    let mut x: Vec<f32> = (0..CHUNK_LEN).map(|_| rng.sample(StandardNormal)).collect();
    for k in (1..=schedule.k_steps).rev() {
        let eps = eps_fn(&x, k);
        let ab = schedule.alpha_bar(k);
        let ab_prev = schedule.alpha_bar_prev(k);
        let alpha = schedule.alpha(k);
        let beta = schedule.beta(k);
        // predicted clean chunk, clipped each step
        let x0: Vec<f32> = x
            .iter()
            .zip(&eps)
            .map(|(&xv, &e)| ((xv - (1.0 - ab).sqrt() * e) / ab.sqrt()).clamp(-1.0, 1.0))
            .collect();
        let c0 = ab_prev.sqrt() * beta / (1.0 - ab);
        let ck = alpha.sqrt() * (1.0 - ab_prev) / (1.0 - ab);
        let sigma = schedule.posterior_variance(k).sqrt();
        for i in 0..CHUNK_LEN {
            let mean = c0 * x0[i] + ck * x[i];
            x[i] = if k > 1 {
                let z: f32 = rng.sample(StandardNormal);
                mean + sigma * z
            } else {
                mean
            };
        }
    }
    ActionChunk { data: x.try_into().expect("chunk length") }.clipped()
}

/// Deterministic DDIM (eta = 0) over `steps` evenly spaced timesteps,
/// starting from the given terminal noise.
pub fn ddim_sample_with(
    schedule: &NoiseSchedule,
    eps_fn: impl Fn(&[f32], usize) -> Vec<f32>,
    x_terminal: &[f32],
    steps: usize,
) -> ActionChunk {
    assert!(steps >= 1 && schedule.k_steps % steps == 0, "steps must divide the schedule");
    let stride = schedule.k_steps / steps;
    let mut x = x_terminal.to_vec();
    let mut k = schedule.k_steps;
    while k >= 1 {
        let eps = eps_fn(&x, k);
        let ab = schedule.alpha_bar(k);
        let k_prev = k.saturating_sub(stride);
        let ab_prev = if k_prev == 0 { 1.0 } else { schedule.alpha_bar(k_prev) };
        for i in 0..CHUNK_LEN {
            let x0 = ((x[i] - (1.0 - ab).sqrt() * eps[i]) / ab.sqrt()).clamp(-1.0, 1.0);
            x[i] = ab_prev.sqrt() * x0 + (1.0 - ab_prev).sqrt() * eps[i];
        }
        if k_prev == 0 {
            break;
        }
        k = k_prev;
    }
    ActionChunk { data: x.try_into().expect("chunk length") }.clipped()
}

impl DiffusionPolicy {
    /// Sample a chunk by full ancestral DDPM.
    pub fn ddpm_sample(&self, view: ParamView, pooled: &Tensor, rng: &mut ChaCha8Rng) -> ActionChunk {
        ddpm_sample_with(&self.schedule, |x, k| self.eps_from_pooled(view, pooled, x, k), rng)
    }

    /// Sample a chunk by 10-step deterministic DDIM (terminal noise from the
    /// given rng).
    pub fn ddim_sample(
        &self,
        view: ParamView,
        pooled: &Tensor,
        steps: usize,
        rng: &mut ChaCha8Rng,
    ) -> ActionChunk {
        let x_t: Vec<f32> = (0..CHUNK_LEN).map(|_| rng.sample(StandardNormal)).collect();
        ddim_sample_with(&self.schedule, |x, k| self.eps_from_pooled(view, pooled, x, k), &x_t, steps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Analytic epsilon for diagonal-Gaussian data N(mu, sigma^2):
    /// eps*(x, k) = (x - sqrt(ab) mu) sqrt(1-ab) / (ab sigma^2 + 1 - ab).
    fn analytic_eps(schedule: &NoiseSchedule, mu: &[f32], sigma: &[f32], x: &[f32], k: usize) -> Vec<f32> {
        let ab = schedule.alpha_bar(k);
        x.iter()
            .enumerate()
            .map(|(i, &xv)| {
                let d = i % mu.len();
                (xv - ab.sqrt() * mu[d]) * (1.0 - ab).sqrt() / (ab * sigma[d] * sigma[d] + 1.0 - ab)
            })
            .collect()
    }

    /// With a linear epsilon predictor the whole ancestral chain stays
    /// Gaussian, so its output moments have a closed form. This f64
    /// recursion is the independent oracle the Monte-Carlo run is checked
    /// against (it shares no code with the sampler).
    pub(super) fn gaussian_chain_moments(
        schedule: &NoiseSchedule,
        mu: f64,
        sigma2: f64,
    ) -> (f64, f64) {
        let mut m = 0.0f64;
        let mut v = 1.0f64;
        for k in (1..=schedule.k_steps).rev() {
            let ab = schedule.alpha_bar(k) as f64;
            let abp = schedule.alpha_bar_prev(k) as f64;
            let al = schedule.alpha(k) as f64;
            let be = schedule.beta(k) as f64;
            let denom = ab * sigma2 + 1.0 - ab;
            // x0_hat = A x + B (posterior mean of the clean value)
            let a_coef = (1.0 - (1.0 - ab) / denom) / ab.sqrt();
            let b_coef = mu * (1.0 - ab) / denom;
            let c0 = abp.sqrt() * be / (1.0 - ab);
            let ck = al.sqrt() * (1.0 - abp) / (1.0 - ab);
            let btilde = be * (1.0 - abp) / (1.0 - ab);
            let coef = c0 * a_coef + ck;
            m = coef * m + c0 * b_coef;
            v = coef * coef * v + btilde;
        }
        (m, v)
    }

    #[test]
    fn ddpm_matches_gaussian_oracle_moments() {
        // Dual route: closed-form moments of the analytic-eps chain versus
        // 10k Monte-Carlo samples from the actual sampler. The mean is
        // unbiased (within 0.02 of the data mean); the variance must match
        // the closed form within 5%. Note the chain's variance sits below
        // the raw data variance: the small fixed posterior variance drops
        // the clean-value uncertainty term, which at 100 steps costs
        // roughly 7-14% depending on sigma. The recursion predicts that
        // exactly, so calibration of the sampler is still fully checked.
        let schedule = NoiseSchedule::default();
        let mu = [0.3f32, -0.2, 0.1, -0.35];
        let sigma = [0.2f32, 0.15, 0.25, 0.1];
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 10_000;
        let mut sum = vec![0f64; 4];
        let mut sumsq = vec![0f64; 4];
        for _ in 0..n {
            let chunk = ddpm_sample_with(
                &schedule,
                |x, k| analytic_eps(&schedule, &mu, &sigma, x, k),
                &mut rng,
            );
            for (i, &v) in chunk.data.iter().enumerate() {
                let d = i % 4;
                sum[d] += v as f64;
                sumsq[d] += (v as f64) * (v as f64);
            }
        }
        let per_dim = (n * CHUNK_LEN / 4) as f64;
        for d in 0..4 {
            let mean = sum[d] / per_dim;
            let var = sumsq[d] / per_dim - mean * mean;
            let (om, ov) =
                gaussian_chain_moments(&schedule, mu[d] as f64, (sigma[d] as f64).powi(2));
            assert!(
                (mean - mu[d] as f64).abs() < 0.02,
                "dim {d}: mean {mean} vs data mean {}",
                mu[d]
            );
            assert!((mean - om).abs() < 0.02, "dim {d}: mean {mean} vs oracle {om}");
            assert!(
                (var - ov).abs() / ov < 0.05,
                "dim {d}: var {var} vs oracle {ov}"
            );
        }
    }

    #[test]
    fn ddim_deterministic_given_terminal_noise() {
        let schedule = NoiseSchedule::default();
        let mu = [0.1f32, 0.0, -0.1, 0.2];
        let sigma = [0.3f32, 0.2, 0.2, 0.25];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x_t: Vec<f32> = (0..CHUNK_LEN).map(|_| rng.sample(StandardNormal)).collect();
        let a = ddim_sample_with(&schedule, |x, k| analytic_eps(&schedule, &mu, &sigma, x, k), &x_t, 10);
        let b = ddim_sample_with(&schedule, |x, k| analytic_eps(&schedule, &mu, &sigma, x, k), &x_t, 10);
        assert_eq!(a, b, "eta=0 sampling is bit-deterministic");
    }

    #[test]
    fn samples_stay_in_bounds() {
        let schedule = NoiseSchedule::default();
        // a wild epsilon predictor cannot push samples out of [-1, 1]
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..5u64 {
            let mut r2 = ChaCha8Rng::seed_from_u64(seed);
            let chunk = ddpm_sample_with(
                &schedule,
                |x, _| x.iter().map(|v| v * 3.0 - 1.7).collect(),
                &mut r2,
            );
            for &v in &chunk.data {
                assert!((-1.0..=1.0).contains(&v));
            }
            let x_t: Vec<f32> = (0..CHUNK_LEN).map(|_| rng.sample(StandardNormal)).collect();
            let chunk = ddim_sample_with(&schedule, |x, _| x.to_vec(), &x_t, 10);
            for &v in &chunk.data {
                assert!((-1.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn perfect_epsilon_stub_gives_zero_loss_direction() {
        // If eps_hat == eps the weighted loss is exactly zero; here we just
        // check the loss formula path by computing it host-side.
        let schedule = NoiseSchedule::default();
        let w = loss_weight(schedule.lambda(50));
        assert!(w > 0.0 && w < 1.0);
        let eps = vec![0.3f32; CHUNK_LEN];
        let mse: f32 = eps.iter().map(|e| (e - e) * (e - e)).sum::<f32>();
        assert_eq!(w * mse, 0.0);
    }

    #[test]
    fn chunk_padding_repeats_last_action() {
        let actions = vec![[0.1, 0.2, 0.3, 0.4], [0.5, 0.6, 0.7, 0.8]];
        let chunk = ActionChunk::from_actions(&actions);
        assert_eq!(chunk.action(0), [0.1, 0.2, 0.3, 0.4]);
        assert_eq!(chunk.action(1), [0.5, 0.6, 0.7, 0.8]);
        for t in 2..H_CHUNK {
            assert_eq!(chunk.action(t), [0.5, 0.6, 0.7, 0.8]);
        }
    }
}
