use codepolicy::diffusion::train::{train_dp, CondMode, DpData, DpTrainConfig};
use codepolicy::diffusion::DiffusionPolicy;
use codepolicy::nn::optim::{AdamConfig, ParamView};
use codepolicy::oracle::generate_dataset;
use codepolicy::sim::task::TaskKind;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let ds = generate_dataset(TaskKind::Pick, 1, 12000).unwrap();
    let data = DpData::prepare(&[&ds], CondMode::Hier);
    println!("windows: {}", data.len());
    let mut policy = DiffusionPolicy::new(11, 24, 48);
    let t0 = std::time::Instant::now();
    for round in 1..=4 {
        let cfg = DpTrainConfig {
            steps: 400,
            batch: 16,
            adam: AdamConfig { lr: 2e-3, ..Default::default() },
            ema_decay: 0.995,
            seed: round,
            log_every: 0,
        };
        let losses = train_dp(&mut policy, &data, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut worst = 0f32;
        let mut avg = 0f32;
        for (sample, chunk) in data.samples.iter() {
            let pooled = policy.encode(ParamView::Live, sample);
            let out = policy.ddim_sample(ParamView::Live, &pooled, 10, &mut rng);
            let mse: f32 = out.data.iter().zip(&chunk.data).map(|(a, b)| (a - b) * (a - b)).sum::<f32>() / chunk.data.len() as f32;
            worst = worst.max(mse);
            avg += mse / data.len() as f32;
        }
        println!("after {} steps: loss {:.4} worst mse {:.4} avg {:.4} ({:.0?})",
            round * 400, losses.last().unwrap(), worst, avg, t0.elapsed());
    }
}
