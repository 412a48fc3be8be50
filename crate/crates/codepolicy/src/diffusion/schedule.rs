//! Cosine noise schedule, forward noising, and the ELBO loss weighting.

use serde::{Deserialize, Serialize};

/// Diffusion steps.
pub const K_STEPS: usize = 100;

/// Squared-cosine schedule with capped betas. Indexing is 1-based through
/// the accessors: `k` in `1..=K`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub k_steps: usize,
    betas: Vec<f32>,
    alphas: Vec<f32>,
    alpha_bars: Vec<f32>,
    lambdas: Vec<f32>,
}

fn alpha_bar_fn(t: f64) -> f64 {
    ((t + 0.008) / 1.008 * std::f64::consts::FRAC_PI_2).cos().powi(2)
}

impl NoiseSchedule {
    pub fn new(k_steps: usize) -> NoiseSchedule {
        let mut betas = Vec::with_capacity(k_steps);
        for i in 0..k_steps {
            let t1 = i as f64 / k_steps as f64;
            let t2 = (i + 1) as f64 / k_steps as f64;
            let beta = (1.0 - alpha_bar_fn(t2) / alpha_bar_fn(t1)).min(0.999);
            betas.push(beta as f32);
        }
        let alphas: Vec<f32> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(k_steps);
        let mut prod = 1.0f64;
        for &a in &alphas {
            prod *= a as f64;
            alpha_bars.push(prod as f32);
        }
        let lambdas = alpha_bars.iter().map(|&ab| (ab / (1.0 - ab)).ln()).collect();
        NoiseSchedule { k_steps, betas, alphas, alpha_bars, lambdas }
    }

    pub fn beta(&self, k: usize) -> f32 {
        self.betas[k - 1]
    }

    pub fn alpha(&self, k: usize) -> f32 {
        self.alphas[k - 1]
    }

    pub fn alpha_bar(&self, k: usize) -> f32 {
        self.alpha_bars[k - 1]
    }

    /// `alpha_bar` of the previous step; 1 at the start of the chain.
    pub fn alpha_bar_prev(&self, k: usize) -> f32 {
        if k >= 2 {
            self.alpha_bars[k - 2]
        } else {
            1.0
        }
    }

    /// Log signal-to-noise ratio.
    pub fn lambda(&self, k: usize) -> f32 {
        self.lambdas[k - 1]
    }

    /// Ancestral posterior variance, the small (beta-tilde) choice:
    /// `beta_k * (1 - alpha_bar_{k-1}) / (1 - alpha_bar_k)`.
    pub fn posterior_variance(&self, k: usize) -> f32 {
        self.beta(k) * (1.0 - self.alpha_bar_prev(k)) / (1.0 - self.alpha_bar(k))
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::new(K_STEPS)
    }
}

/// Closed-form forward marginal:
/// `A^k = sqrt(alpha_bar_k) A^0 + sqrt(1 - alpha_bar_k) eps`.
pub fn add_noise(schedule: &NoiseSchedule, chunk: &[f32], k: usize, eps: &[f32]) -> Vec<f32> {
    assert!((1..=schedule.k_steps).contains(&k), "diffusion step {k} out of range");
    assert_eq!(chunk.len(), eps.len());
    let ab = schedule.alpha_bar(k);
    let sa = ab.sqrt();
    let sn = (1.0 - ab).sqrt();
    chunk.iter().zip(eps).map(|(&a, &e)| sa * a + sn * e).collect()
}

/// ELBO weighting `sigmoid(-lambda + 2)`.
pub fn loss_weight(lambda: f32) -> f32 {
    1.0 / (1.0 + (lambda - 2.0).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn schedule_shape_invariants() {
        let s = NoiseSchedule::default();
        assert!(s.alpha_bar(1) > 0.99, "first alpha_bar {}", s.alpha_bar(1));
        for k in 2..=s.k_steps {
            assert!(s.alpha_bar(k) < s.alpha_bar(k - 1), "alpha_bar strictly decreasing");
            assert!(s.lambda(k) < s.lambda(k - 1), "lambda strictly decreasing");
        }
        for k in 1..=s.k_steps {
            let b = s.beta(k);
            assert!(b > 0.0 && b <= 0.999, "beta cap at step {k}: {b}");
        }
    }

    #[test]
    fn alpha_bar_midpoint_regression() {
        // Independent evaluation of the closed form at k=50, K=100:
        // alpha_bar(50) = f(0.5)/f(0) with f(t) = cos^2(((t+0.008)/1.008) pi/2),
        // frozen here as a regression constant.
        let s = NoiseSchedule::default();
        let expected = 0.493_843_6;
        assert!(
            (s.alpha_bar(50) - expected).abs() < 2e-6,
            "alpha_bar(50) = {}, expected {expected}",
            s.alpha_bar(50)
        );
    }

    #[test]
    fn add_noise_limits() {
        let s = NoiseSchedule::default();
        let chunk = vec![0.5f32; 32];
        let eps = vec![1.0f32; 32];
        // low-noise limit: k=1 keeps the chunk within 5%
        let a1 = add_noise(&s, &chunk, 1, &eps);
        for v in &a1 {
            assert!((v - 0.5).abs() < 0.05 + 0.05, "k=1 output {v}");
        }
        // pure-noise limit: k=K is essentially eps
        let ak = add_noise(&s, &chunk, s.k_steps, &eps);
        let ab = s.alpha_bar(s.k_steps);
        assert!(ab < 1e-3, "terminal alpha_bar {ab}");
        for v in &ak {
            assert!((v - 1.0).abs() < 0.06, "k=K output {v}");
        }
    }

    #[test]
    fn add_noise_variance_matches_marginal() {
        // Monte-Carlo moment oracle: Var(A^k) = alpha_bar Var(A^0) + (1-alpha_bar).
        let s = NoiseSchedule::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for &k in &[10usize, 50, 90] {
            let n = 10_000;
            let mut sum = 0.0f64;
            let mut sumsq = 0.0f64;
            for _ in 0..n {
                let a0: f32 = rng.sample::<f32, _>(StandardNormal) * 0.5;
                let e: f32 = rng.sample(StandardNormal);
                let v = add_noise(&s, &[a0], k, &[e])[0] as f64;
                sum += v;
                sumsq += v * v;
            }
            let mean = sum / n as f64;
            let var = sumsq / n as f64 - mean * mean;
            let ab = s.alpha_bar(k) as f64;
            let expected = ab * 0.25 + (1.0 - ab);
            assert!(
                (var - expected).abs() / expected < 0.03,
                "k={k}: var {var} vs expected {expected}"
            );
        }
    }

    #[test]
    fn add_noise_rejects_out_of_range() {
        let s = NoiseSchedule::default();
        let r = std::panic::catch_unwind(|| add_noise(&s, &[0.0], 0, &[0.0]));
        assert!(r.is_err());
        let r = std::panic::catch_unwind(|| add_noise(&s, &[0.0], s.k_steps + 1, &[0.0]));
        assert!(r.is_err());
    }

    #[test]
    fn epsilon_reconstruction_consistency() {
        // (A^k - sqrt(1-ab) eps)/sqrt(ab) recovers A^0. The division by
        // sqrt(alpha_bar) amplifies f32 rounding near the end of the chain,
        // so the tolerance scales with that factor (1e-5 where it matters).
        let s = NoiseSchedule::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for k in [1usize, 25, 75, 100] {
            let a0: Vec<f32> = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let eps: Vec<f32> = (0..32).map(|_| rng.sample(StandardNormal)).collect();
            let ak = add_noise(&s, &a0, k, &eps);
            let ab = s.alpha_bar(k);
            let tol = (4e-7 / ab.sqrt()).max(1e-5);
            for i in 0..32 {
                let rec = (ak[i] - (1.0 - ab).sqrt() * eps[i]) / ab.sqrt();
                assert!((rec - a0[i]).abs() < tol, "k={k} coord {i}: {rec} vs {}", a0[i]);
            }
        }
    }

    #[test]
    fn loss_weight_values() {
        assert!((loss_weight(2.0) - 0.5).abs() < 1e-6);
        assert!(loss_weight(-30.0) > 0.999);
        assert!(loss_weight(30.0) < 1e-6);
        // lambda = 0 evaluates the logistic directly
        let expected = 1.0 / (1.0 + (-2.0f32).exp());
        assert!((loss_weight(0.0) - expected).abs() < 1e-6);
    }
}
