use codepolicy::oracle::{oracle_success_rate, run_oracle_rollout};
use codepolicy::sim::task::TaskKind;

fn main() {
    for kind in TaskKind::ALL {
        let t0 = std::time::Instant::now();
        let rate = oracle_success_rate(kind, 12000, 100);
        let mut lens = Vec::new();
        for seed in 12000..12020 {
            if let Ok(r) = run_oracle_rollout(kind, seed) {
                if r.success { lens.push(r.actions.len()); }
            }
        }
        let avg = lens.iter().sum::<usize>() as f64 / lens.len().max(1) as f64;
        println!("{:14} success {:5.1}%  avg len {:6.1}  horizon {:4}  ({:.2?})",
            kind.name(), rate * 100.0, avg, kind.horizon(), t0.elapsed());
    }
}
