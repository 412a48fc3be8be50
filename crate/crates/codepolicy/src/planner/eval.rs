//! Teacher-forced evaluation of the planner on stored trajectories.

use crate::nn::optim::ParamView;
use crate::oracle::dataset::TrajectoryRecord;

use super::infer::{predict_keystep, predict_location, predict_step};
use super::model::PlannerModel;
use super::train::{memory_before, prepare};

/// Fraction of steps whose predicted text equals the stored label, with the
/// memory teacher-forced from the record.
pub fn per_step_exact_match(model: &PlannerModel, records: &[&TrajectoryRecord]) -> f64 {
    let recs = prepare(records);
    let mut hits = 0usize;
    let mut total = 0usize;
    for (rec, record) in recs.iter().zip(records) {
        for t in 0..rec.bases.len() {
            let m = memory_before(rec, t);
            let pred = predict_step(
                model,
                ParamView::Ema,
                &rec.bases[t],
                &rec.observations[t].proprio,
                rec.kind,
                &rec.roles,
                rec.direction,
                &m,
            );
            if pred.render() == record.steps[t].instruction {
                hits += 1;
            }
            total += 1;
        }
    }
    hits as f64 / total.max(1) as f64
}

/// Fraction of records whose full key-step sequence decodes exactly
/// (key-step mode, teacher-forced memory).
pub fn keystep_sequence_match(model: &PlannerModel, records: &[&TrajectoryRecord]) -> f64 {
    let recs = prepare(records);
    let mut hits = 0usize;
    for rec in &recs {
        let mut ok = true;
        for (ix, &k) in rec.keysteps.iter().enumerate() {
            let m = memory_before(rec, k);
            let pred = predict_keystep(
                model,
                ParamView::Ema,
                &rec.bases[k],
                &rec.observations[k].proprio,
                rec.kind,
                &rec.roles,
                rec.direction,
                &m,
            );
            if pred.render() != rec.keystep_instrs[ix].render() {
                ok = false;
                break;
            }
        }
        if ok {
            hits += 1;
        }
    }
    hits as f64 / recs.len().max(1) as f64
}

/// Location-head accuracy over actors whose descriptor is unique in the
/// scene (first observation of each record).
pub fn location_accuracy(model: &PlannerModel, records: &[&TrajectoryRecord]) -> f64 {
    let recs = prepare(records);
    let mut hits = 0usize;
    let mut total = 0usize;
    for rec in &recs {
        let obs = &rec.observations[0];
        for &(color, shape) in &rec.roles {
            let cells = obs.descriptor_cells(color, shape);
            if cells.len() != 1 {
                continue;
            }
            let pred = predict_location(model, ParamView::Ema, &rec.bases[0], color, shape);
            if pred == cells[0] {
                hits += 1;
            }
            total += 1;
        }
    }
    hits as f64 / total.max(1) as f64
}
