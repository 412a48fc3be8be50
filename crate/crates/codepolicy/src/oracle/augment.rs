//! Label-timing augmentation: jitter subtask boundaries.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dsl::parser::parse;

use super::dataset::{LabelSource, TrajectoryRecord};

/// Shift every key-step boundary except the first by up to `max_shift`
/// steps, then repair ordering with a minimum gap of one step. Instruction
/// labels are re-derived from the shifted boundaries; observations and
/// actions stay untouched, and the key-step instruction sequence is
/// preserved exactly.
pub fn time_shift_augment(
    record: &TrajectoryRecord,
    max_shift: i64,
    rng: &mut ChaCha8Rng,
) -> TrajectoryRecord {
    let t_len = record.steps.len() as i64;
    let keysteps = record.keystep_indices();
    let keystep_instrs: Vec<String> = keysteps
        .iter()
        .map(|&k| record.steps[k].instruction.clone())
        .collect();
    if keysteps.len() < 2 || max_shift == 0 {
        let mut out = record.clone();
        out.label_source = LabelSource::OracleShifted;
        return out;
    }

    let mut shifted: Vec<i64> = keysteps.iter().map(|&k| k as i64).collect();
    for s in shifted.iter_mut().skip(1) {
        *s += rng.gen_range(-max_shift..=max_shift);
    }
    // forward pass: strictly increasing with gap >= 1, starting at 0
    shifted[0] = 0;
    for i in 1..shifted.len() {
        shifted[i] = shifted[i].max(shifted[i - 1] + 1);
    }
    // backward pass: keep every boundary inside the trajectory
    let n = shifted.len() as i64;
    for i in (1..shifted.len()).rev() {
        let cap = t_len - (n - i as i64);
        shifted[i] = shifted[i].min(cap);
    }
    for i in 1..shifted.len() {
        debug_assert!(shifted[i] > shifted[i - 1], "boundaries stay strictly ordered");
    }

    let mut out = record.clone();
    out.label_source = LabelSource::OracleShifted;
    let mut ki = 0usize;
    for (t, step) in out.steps.iter_mut().enumerate() {
        while ki + 1 < shifted.len() && t as i64 >= shifted[ki + 1] {
            ki += 1;
        }
        let live = shifted[ki] == t as i64;
        let instr = parse(&keystep_instrs[ki]).expect("stored instruction parses");
        let instr = if live { instr.live() } else { instr.commented() };
        step.instruction = instr.render();
        step.is_keystep = live;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::generate_dataset;
    use crate::sim::task::TaskKind;
    use rand::SeedableRng;

    #[test]
    fn zero_shift_is_identity_up_to_source() {
        let ds = generate_dataset(TaskKind::PlaceOnTop, 1, 12000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let shifted = time_shift_augment(&ds.records[0], 0, &mut rng);
        assert_eq!(shifted.label_source, LabelSource::OracleShifted);
        for (a, b) in ds.records[0].steps.iter().zip(&shifted.steps) {
            assert_eq!(a.instruction, b.instruction);
            assert_eq!(a.is_keystep, b.is_keystep);
        }
    }

    #[test]
    fn keystep_sequence_preserved_and_ordered() {
        let ds = generate_dataset(TaskKind::Swap, 2, 12000).unwrap();
        for record in &ds.records {
            for rng_seed in 0..20 {
                let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
                let shifted = time_shift_augment(record, 3, &mut rng);
                let orig: Vec<&String> = record
                    .steps
                    .iter()
                    .filter(|s| s.is_keystep)
                    .map(|s| &s.instruction)
                    .collect();
                let new: Vec<&String> = shifted
                    .steps
                    .iter()
                    .filter(|s| s.is_keystep)
                    .map(|s| &s.instruction)
                    .collect();
                assert_eq!(orig, new, "order and multiset of key-steps preserved");
                let ks = shifted.keystep_indices();
                for w in ks.windows(2) {
                    assert!(w[1] > w[0]);
                }
                assert_eq!(ks[0], 0);
                // actions and observations untouched
                for (a, b) in record.steps.iter().zip(&shifted.steps) {
                    assert_eq!(a.action, b.action);
                    assert_eq!(a.obs, b.obs);
                }
            }
        }
    }

    #[test]
    fn adjacent_boundaries_clamp_instead_of_crossing() {
        // Construct a tight record: boundaries 2 apart; a +3 shift on the
        // first must clamp so ordering holds.
        let ds = generate_dataset(TaskKind::Pick, 1, 12005).unwrap();
        let record = &ds.records[0];
        for rng_seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            let shifted = time_shift_augment(record, 3, &mut rng);
            let ks = shifted.keystep_indices();
            assert_eq!(ks.len(), record.keystep_indices().len());
            for w in ks.windows(2) {
                assert!(w[1] - w[0] >= 1);
            }
            assert!(*ks.last().unwrap() < record.steps.len());
        }
    }

    #[test]
    fn deterministic_given_rng_seed() {
        let ds = generate_dataset(TaskKind::PlaceNextTo, 1, 12001).unwrap();
        let a = time_shift_augment(&ds.records[0], 3, &mut ChaCha8Rng::seed_from_u64(7));
        let b = time_shift_augment(&ds.records[0], 3, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);
    }
}
