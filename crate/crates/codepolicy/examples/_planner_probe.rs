use codepolicy::nn::optim::{AdamConfig, ParamView};
use codepolicy::oracle::generate_dataset;
use codepolicy::planner::train::{memory_before, prepare, train_codegen, TrainConfig};
use codepolicy::planner::{predict_step, PlannerModel};
use codepolicy::sim::task::TaskKind;

fn main() {
    let ds = generate_dataset(TaskKind::Pick, 1, 12000).unwrap();
    let mut model = PlannerModel::new(7, 32);
    let t0 = std::time::Instant::now();
    for round in 0..4 {
        let cfg = TrainConfig {
            steps: 250,
            batch_code: 8,
            batch_aux: 4,
            adam: AdamConfig { lr: 3e-3, ..Default::default() },
            log_every: 0,
            seed: round,
            ..Default::default()
        };
        train_codegen(&mut model, &[&ds], &cfg);
        let recs = prepare(&ds.records.iter().collect::<Vec<_>>());
        let rec = &recs[0];
        let mut wrong = Vec::new();
        for t in 0..rec.bases.len() {
            let m = memory_before(rec, t);
            let pred = predict_step(&model, ParamView::Live, &rec.bases[t], &rec.observations[t].proprio, rec.kind, &rec.roles, rec.direction, &m);
            if pred.render() != ds.records[0].steps[t].instruction {
                wrong.push(t);
            }
        }
        println!("after {} steps: wrong at {:?} / {} total  ({:.1?})",
                 (round + 1) * 250, wrong, rec.bases.len(), t0.elapsed());
        if wrong.is_empty() { break; }
        if round == 3 {
            for &t in &wrong {
                let m = memory_before(rec, t);
                let pred = predict_step(&model, ParamView::Live, &rec.bases[t], &rec.observations[t].proprio, rec.kind, &rec.roles, rec.direction, &m);
                println!("t={} want {:?}", t, ds.records[0].steps[t].instruction);
                println!("     got {:?}", pred.render());
            }
        }
    }
}
