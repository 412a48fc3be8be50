//! Training: two-branch instruction generation loss (uniform timestep and
//! key-step request) mixed with object presence/location auxiliaries.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsl::ast::Instruction;
use crate::dsl::memory::MemoryBuffer;
use crate::dsl::parser::parse;
use crate::nn::graph::{Graph, NodeId};
use crate::nn::optim::{AdamConfig, ParamView};
use crate::oracle::dataset::{Dataset, TrajectoryRecord};
use crate::sim::obs::Observation;
use crate::sim::task::TaskKind;
use crate::sim::types::{Color, Direction, Shape};

use super::coding::{encode, CodeTargets};
use super::model::{build_tokens, ee_features, HeadNodes, PlannerInput, PlannerModel, PlannerQuery};

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub steps: usize,
    /// Codegen samples per batch (split evenly between the per-step branch
    /// and the key-step branch).
    pub batch_code: usize,
    /// Auxiliary samples per batch (split between presence and location).
    pub batch_aux: usize,
    pub adam: AdamConfig,
    pub ema_decay: f32,
    pub seed: u64,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 3000,
            batch_code: 16,
            batch_aux: 8,
            adam: AdamConfig::default(),
            ema_decay: 0.999,
            seed: 0,
            log_every: 200,
        }
    }
}

/// A record pre-parsed for fast sampling.
pub struct PreparedRecord {
    pub kind: TaskKind,
    pub roles: Vec<(Color, Shape)>,
    pub direction: Option<Direction>,
    pub bases: Vec<Vec<f32>>,
    pub targets: Vec<CodeTargets>,
    pub keysteps: Vec<usize>,
    pub keystep_instrs: Vec<Instruction>,
    pub observations: Vec<Observation>,
}

pub fn prepare(records: &[&TrajectoryRecord]) -> Vec<PreparedRecord> {
    records
        .iter()
        .map(|r| {
            let mut keysteps = Vec::new();
            let mut keystep_instrs = Vec::new();
            let mut targets = Vec::new();
            let mut bases = Vec::new();
            let mut observations = Vec::new();
            for (t, s) in r.steps.iter().enumerate() {
                let instr = parse(&s.instruction).expect("stored instruction parses");
                if s.is_keystep {
                    keysteps.push(t);
                    keystep_instrs.push(instr.clone());
                }
                targets.push(encode(&instr).expect("stored instruction encodable"));
                bases.push(s.obs.base.clone());
                observations.push(s.obs.to_observation());
            }
            PreparedRecord {
                kind: r.task.kind,
                roles: r.task.descriptors.clone(),
                direction: r.task.direction,
                bases,
                targets,
                keysteps,
                keystep_instrs,
                observations,
            }
        })
        .collect()
}

/// Memory buffer before step `t`: all key-steps at earlier indices.
pub fn memory_before(rec: &PreparedRecord, t: usize) -> MemoryBuffer {
    let mut m = MemoryBuffer::new();
    for (ix, &k) in rec.keysteps.iter().enumerate() {
        if k < t {
            m = crate::dsl::memory::update_memory(&m, &rec.keystep_instrs[ix]);
        } else {
            break;
        }
    }
    m
}

fn code_query(rec: &PreparedRecord, t: usize, keystep_request: bool) -> PlannerQuery {
    PlannerQuery::Code {
        kind: rec.kind,
        roles: rec.roles.clone(),
        direction: rec.direction,
        memory: memory_before(rec, t),
        keystep_request,
    }
}

/// One training sample: input plus active-head targets.
struct Sample {
    input: PlannerInput,
    targets: CodeTargets,
}

fn sample_code_step(recs: &[PreparedRecord], rng: &mut ChaCha8Rng) -> Sample {
    // uniform over pooled steps
    let total: usize = recs.iter().map(|r| r.bases.len()).sum();
    let mut pick = rng.gen_range(0..total);
    for r in recs {
        if pick < r.bases.len() {
            let t = pick;
            let q = code_query(r, t, false);
            return Sample {
                input: PlannerInput {
                    base: r.bases[t].clone(),
                    tokens: build_tokens(&q),
                    ee_feats: Some(ee_features(&r.observations[t].proprio)),
                },
                targets: r.targets[t].clone(),
            };
        }
        pick -= r.bases.len();
    }
    unreachable!("non-empty dataset");
}

fn sample_code_keystep(recs: &[PreparedRecord], rng: &mut ChaCha8Rng) -> Sample {
    let total: usize = recs.iter().map(|r| r.keysteps.len()).sum();
    let mut pick = rng.gen_range(0..total);
    for r in recs {
        if pick < r.keysteps.len() {
            let k = r.keysteps[pick];
            let q = code_query(r, k, true);
            let mut targets = r.targets[k].clone();
            targets.commented = Some(0); // key-step branch always answers live
            return Sample {
                input: PlannerInput {
                    base: r.bases[k].clone(),
                    tokens: build_tokens(&q),
                    ee_feats: Some(ee_features(&r.observations[k].proprio)),
                },
                targets,
            };
        }
        pick -= r.keysteps.len();
    }
    unreachable!("dataset has key-steps");
}

/// Actors known to inhabit a record's scene.
fn scene_descriptors(rec: &PreparedRecord) -> Vec<(Color, Shape)> {
    rec.roles.clone()
}

fn sample_aux(recs: &[PreparedRecord], presence: bool, rng: &mut ChaCha8Rng) -> Option<Sample> {
    for _ in 0..10 {
        let r = &recs[rng.gen_range(0..recs.len())];
        let t = rng.gen_range(0..r.observations.len());
        let obs = &r.observations[t];
        let descs = scene_descriptors(r);
        let (color, shape) = descs[rng.gen_range(0..descs.len())];
        let cells = obs.descriptor_cells(color, shape);
        if cells.is_empty() {
            continue;
        }
        if presence {
            let positive = rng.gen_bool(0.5);
            let cell = if positive {
                cells[rng.gen_range(0..cells.len())]
            } else {
                // a random non-matching cell
                let mut c;
                loop {
                    c = (rng.gen_range(0..10), rng.gen_range(0..10));
                    if !cells.contains(&c) {
                        break;
                    }
                }
                c
            };
            let q = PlannerQuery::Presence { color, shape, cell };
            return Some(Sample {
                input: PlannerInput {
                    base: r.bases[t].clone(),
                    tokens: build_tokens(&q),
                    ee_feats: None,
                },
                targets: CodeTargets { presence: Some(positive as usize), ..Default::default() },
            });
        } else {
            let cell = cells[rng.gen_range(0..cells.len())];
            let q = PlannerQuery::Location { color, shape };
            return Some(Sample {
                input: PlannerInput {
                    base: r.bases[t].clone(),
                    tokens: build_tokens(&q),
                    ee_feats: None,
                },
                targets: CodeTargets {
                    lit_i: Some(cell.0),
                    lit_j: Some(cell.1),
                    ..Default::default()
                },
            });
        }
    }
    None
}

fn head_loss(
    g: &mut Graph,
    losses: &mut Vec<NodeId>,
    logits: NodeId,
    picks: &[(usize, usize)],
) {
    if picks.is_empty() {
        return;
    }
    let rows: Vec<usize> = picks.iter().map(|&(r, _)| r).collect();
    let targets: Vec<usize> = picks.iter().map(|&(_, t)| t).collect();
    let sel = g.gather_rows(logits, &rows);
    let ce = g.cross_entropy(sel, &targets);
    losses.push(ce);
}

fn batch_loss(g: &mut Graph, heads: &HeadNodes, targets: &[CodeTargets]) -> NodeId {
    let mut losses = Vec::new();
    macro_rules! collect {
        ($field:ident, $node:expr) => {{
            let picks: Vec<(usize, usize)> = targets
                .iter()
                .enumerate()
                .filter_map(|(i, t)| t.$field.map(|v| (i, v)))
                .collect();
            head_loss(g, &mut losses, $node, &picks);
        }};
    }
    collect!(commented, heads.commented);
    collect!(template, heads.template);
    collect!(color_a, heads.color_a);
    collect!(shape_a, heads.shape_a);
    collect!(has_pos_a, heads.has_pos_a);
    collect!(pos_a_i, heads.pos_a_i);
    collect!(pos_a_j, heads.pos_a_j);
    collect!(color_b, heads.color_b);
    collect!(shape_b, heads.shape_b);
    collect!(has_pos_b, heads.has_pos_b);
    collect!(pos_b_i, heads.pos_b_i);
    collect!(pos_b_j, heads.pos_b_j);
    collect!(direction, heads.direction);
    collect!(key_ref, heads.key_ref);
    collect!(lit_i, heads.lit_i);
    collect!(lit_j, heads.lit_j);
    collect!(presence, heads.presence);
    let mut total = losses[0];
    for &l in &losses[1..] {
        total = g.add(total, l);
    }
    total
}

#[derive(Clone, Debug, Default)]
pub struct TrainStats {
    pub losses: Vec<f32>,
}

/// Train in place over the pooled records of the given datasets.
pub fn train_codegen(
    model: &mut PlannerModel,
    datasets: &[&Dataset],
    cfg: &TrainConfig,
) -> TrainStats {
    let records: Vec<&TrajectoryRecord> =
        datasets.iter().flat_map(|d| d.records.iter()).collect();
    assert!(!records.is_empty(), "training needs at least one record");
    let total_keysteps: usize = records.iter().map(|r| r.keystep_indices().len()).sum();
    assert!(total_keysteps > 0, "dataset has no key-steps");
    let recs = prepare(&records);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e3779b9));
    let mut stats = TrainStats::default();

    for step in 0..cfg.steps {
        let mut samples = Vec::with_capacity(cfg.batch_code + cfg.batch_aux);
        for i in 0..cfg.batch_code {
            if i % 2 == 0 {
                samples.push(sample_code_step(&recs, &mut rng));
            } else {
                samples.push(sample_code_keystep(&recs, &mut rng));
            }
        }
        for i in 0..cfg.batch_aux {
            if let Some(s) = sample_aux(&recs, i % 2 == 0, &mut rng) {
                samples.push(s);
            }
        }
        samples.shuffle(&mut rng);

        let inputs: Vec<PlannerInput> = samples
            .iter()
            .map(|s| PlannerInput {
                base: s.input.base.clone(),
                tokens: s.input.tokens.clone(),
                ee_feats: s.input.ee_feats.clone(),
            })
            .collect();
        let targets: Vec<CodeTargets> = samples.iter().map(|s| s.targets.clone()).collect();

        let mut g = Graph::new();
        let heads = model.forward(&mut g, ParamView::Live, &inputs);
        let loss = batch_loss(&mut g, &heads, &targets);
        let loss_val = g.value(loss).item();
        g.backward(loss).expect("finite scalar loss");
        model.params.zero_grads();
        model.params.absorb_grads(&g);
        // cosine learning-rate decay over the run
        let mut adam = cfg.adam;
        adam.lr = cfg.adam.lr
            * 0.5
            * (1.0 + (std::f32::consts::PI * step as f32 / cfg.steps as f32).cos());
        model.params.adamw_step(&adam);
        model.params.ema_update(cfg.ema_decay);
        stats.losses.push(loss_val);
        if cfg.log_every > 0 && step % cfg.log_every == 0 {
            eprintln!("planner step {step}/{}: loss {loss_val:.4}", cfg.steps);
        }
    }
    stats
}
