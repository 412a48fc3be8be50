use codepolicy::nn::optim::AdamConfig;
use codepolicy::oracle::{generate_dataset, Dataset};
use codepolicy::planner::train::{train_codegen, TrainConfig};
use codepolicy::planner::{keystep_sequence_match, location_accuracy, per_step_exact_match, PlannerModel};
use codepolicy::sim::task::TaskKind;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let per_task: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(30);
    let steps: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(3000);
    let dim: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(32);

    let t0 = std::time::Instant::now();
    let mut train_sets: Vec<Dataset> = Vec::new();
    let mut heldout_sets: Vec<Dataset> = Vec::new();
    for kind in TaskKind::ALL {
        train_sets.push(generate_dataset(kind, per_task, 12000).unwrap());
        heldout_sets.push(generate_dataset(kind, 8, 14000).unwrap());
    }
    println!("datasets ready ({:.1?})", t0.elapsed());

    let mut model = PlannerModel::new(42, dim);
    println!("params: {}", model.params.num_scalars());
    let cfg = TrainConfig {
        steps,
        batch_code: 16,
        batch_aux: 8,
        adam: AdamConfig { lr: 1e-3, ..Default::default() },
        ema_decay: 0.999,
        seed: 1,
        log_every: 500,
    };
    let refs: Vec<&Dataset> = train_sets.iter().collect();
    let stats = train_codegen(&mut model, &refs, &cfg);
    println!("trained {} steps, last loss {:.4} ({:.1?})", steps, stats.losses.last().unwrap(), t0.elapsed());

    for (kind, ho) in TaskKind::ALL.iter().zip(&heldout_sets) {
        let recs: Vec<_> = ho.records.iter().collect();
        let psm = per_step_exact_match(&model, &recs);
        let ksm = keystep_sequence_match(&model, &recs);
        println!("{:14} per-step {:5.1}%  keystep-seq {:5.1}%", kind.name(), psm * 100.0, ksm * 100.0);
    }
    let all_ho: Vec<_> = heldout_sets.iter().flat_map(|d| d.records.iter()).collect();
    println!("OVERALL per-step {:.2}%  keystep-seq {:.2}%  loc-acc {:.2}%  total {:.1?}",
        per_step_exact_match(&model, &all_ho) * 100.0,
        keystep_sequence_match(&model, &all_ho) * 100.0,
        location_accuracy(&model, &all_ho) * 100.0,
        t0.elapsed());
}
