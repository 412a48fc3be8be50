//! Composing the planner and the diffusion policy: per-step planner
//! queries, memory and cache maintenance, chunk regeneration, and the
//! solver-backed and flat variants.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::api::exec::{begin_instruction, PoseDict};
use crate::api::solver::Solver;
use crate::diffusion::encoder::{CondSample, CondText};
use crate::diffusion::policy::{ActionChunk, DiffusionPolicy, H_CHUNK};
use crate::diffusion::train::oracle_cache_text_from_scene;
use crate::dsl::ast::Command;
use crate::dsl::memory::{update_memory, CacheInfo, MemoryBuffer};
use crate::nn::optim::ParamView;
use crate::planner::infer::{predict_keystep, predict_step};
use crate::planner::model::PlannerModel;
use crate::sim::obs::Observation;
use crate::sim::scene::Scene;
use crate::sim::task::TaskKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Diffusion policy conditioned on the natural-language prompt only.
    FlatDp,
    /// Planner-generated code conditioning the diffusion policy.
    HierVlmDp,
    /// Planner key-steps executed by the scripted solvers.
    VlmOracle,
    /// Flat policy with oracle-computed initial positions as cache text
    /// (only meaningful for the swap task).
    DpOracle,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::FlatDp => "flat",
            Mode::HierVlmDp => "hier",
            Mode::VlmOracle => "vlm-oracle",
            Mode::DpOracle => "dp-oracle",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "flat" | "flat_dp" => Some(Mode::FlatDp),
            "hier" | "hier_vlm_dp" => Some(Mode::HierVlmDp),
            "vlm-oracle" | "vlm_oracle" => Some(Mode::VlmOracle),
            "dp-oracle" | "dp_oracle" => Some(Mode::DpOracle),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    Ddim { steps: usize },
    Ddpm,
}

impl Default for Sampler {
    fn default() -> Self {
        Sampler::Ddim { steps: 10 }
    }
}

#[derive(Clone, Debug)]
pub struct RolloutConfig {
    pub mode: Mode,
    pub regen_on_keystep: bool,
    pub sampler: Sampler,
    /// Base seed mixed with (task, scene seed, run) for the sampler rng.
    pub sampler_seed: u64,
}

impl RolloutConfig {
    pub fn new(mode: Mode) -> RolloutConfig {
        RolloutConfig { mode, regen_on_keystep: true, sampler: Sampler::default(), sampler_seed: 0 }
    }
}

/// One row of the rollout trace log.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub instruction: String,
    pub is_keystep: bool,
    pub cache: String,
    pub action: [f32; 4],
    pub regen: bool,
}

#[derive(Clone, Debug, Default)]
pub struct RolloutResult {
    pub success: bool,
    pub steps: usize,
    pub log: Vec<TraceRow>,
    /// Planner exec failures observed (instruction could not be grounded).
    pub exec_errors: usize,
}

fn sampler_rng(cfg: &RolloutConfig, kind: TaskKind, seed: u64, run: u64) -> ChaCha8Rng {
    let mix = cfg
        .sampler_seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(kind.index() as u64)
        .wrapping_mul(0x2545_f491_4f6c_dd1d)
        .wrapping_add(seed)
        .wrapping_mul(0xd134_2543_de82_ef95)
        .wrapping_add(run);
    ChaCha8Rng::seed_from_u64(mix)
}

fn sample_chunk(
    dp: &DiffusionPolicy,
    sampler: Sampler,
    cond: &CondSample,
    rng: &mut ChaCha8Rng,
) -> ActionChunk {
    let pooled = dp.encode(ParamView::Ema, cond);
    match sampler {
        Sampler::Ddim { steps } => dp.ddim_sample(ParamView::Ema, &pooled, steps, rng),
        Sampler::Ddpm => dp.ddpm_sample(ParamView::Ema, &pooled, rng),
    }
}

fn cond_sample(obs: &Observation, task_text: &str, cache_text: &str) -> CondSample {
    CondSample {
        base: obs.base.clone(),
        wrist: obs.wrist.clone(),
        proprio: obs.proprio.clone(),
        extra: obs.extra.clone(),
        text: CondText::new(task_text, cache_text),
    }
}

fn hold_action(scene: &Scene) -> [f32; 4] {
    [0.0, 0.0, 0.0, if scene.ee.gripper_on { 1.0 } else { -1.0 }]
}

/// Run one episode. The planner and policy must match the mode:
/// flat/dp-oracle need the policy, vlm-oracle needs the planner, the
/// hierarchical mode needs both.
pub fn rollout(
    kind: TaskKind,
    seed: u64,
    run: u64,
    planner: Option<&PlannerModel>,
    dp: Option<&DiffusionPolicy>,
    cfg: &RolloutConfig,
) -> RolloutResult {
    match cfg.mode {
        Mode::HierVlmDp => rollout_hier(kind, seed, run, planner.expect("planner"), dp.expect("policy"), cfg),
        Mode::FlatDp => rollout_flat(kind, seed, run, dp.expect("policy"), cfg, false),
        Mode::DpOracle => rollout_flat(kind, seed, run, dp.expect("policy"), cfg, true),
        Mode::VlmOracle => rollout_vlm_oracle(kind, seed, planner.expect("planner")),
    }
}

fn rollout_hier(
    kind: TaskKind,
    seed: u64,
    run: u64,
    planner: &PlannerModel,
    dp: &DiffusionPolicy,
    cfg: &RolloutConfig,
) -> RolloutResult {
    let mut rng = sampler_rng(cfg, kind, seed, run);
    let (mut scene, mut obs) = match Scene::reset(kind, seed) {
        Ok(v) => v,
        Err(_) => return RolloutResult::default(),
    };
    let spec = scene.spec.clone();
    let mut memory = MemoryBuffer::new();
    let mut result = RolloutResult::default();
    let mut chunk: Option<ActionChunk> = None;
    let mut consumed = 0usize;

    for t in 0..spec.horizon {
        let instr = predict_step(
            planner,
            ParamView::Ema,
            &obs.base,
            &obs.proprio,
            kind,
            &spec.descriptors,
            spec.direction,
            &memory,
        );
        let live = !instr.commented;
        memory = update_memory(&memory, &instr);
        let cache = CacheInfo::from_memory(&memory);
        let task_text = instr.render();

        let action;
        let mut regen = false;
        if matches!(instr.command, Command::Done) {
            // terminal prediction: hold still
            action = hold_action(&scene);
            chunk = None;
            consumed = 0;
        } else {
            let exhausted = chunk.is_none() || consumed >= H_CHUNK;
            let regen_trigger = cfg.regen_on_keystep && live && chunk.is_some() && consumed > 0;
            if exhausted || regen_trigger {
                regen = !exhausted && regen_trigger;
                let cond = cond_sample(&obs, &task_text, &cache.cache_text);
                chunk = Some(sample_chunk(dp, cfg.sampler, &cond, &mut rng));
                consumed = 0;
            }
            action = chunk.as_ref().unwrap().action(consumed);
            consumed += 1;
        }

        result.log.push(TraceRow {
            t,
            instruction: task_text,
            is_keystep: live,
            cache: cache.cache_text.clone(),
            action,
            regen,
        });
        obs = scene.step(action);
        result.steps = t + 1;
        if scene.check_success() {
            result.success = true;
            break;
        }
    }
    result
}

fn rollout_flat(
    kind: TaskKind,
    seed: u64,
    run: u64,
    dp: &DiffusionPolicy,
    cfg: &RolloutConfig,
    oracle_cache: bool,
) -> RolloutResult {
    let mut rng = sampler_rng(cfg, kind, seed, run);
    let (mut scene, mut obs) = match Scene::reset(kind, seed) {
        Ok(v) => v,
        Err(_) => return RolloutResult::default(),
    };
    let spec = scene.spec.clone();
    let cache_text = if oracle_cache {
        oracle_cache_text_from_scene(&scene)
    } else {
        spec.prompt.clone()
    };
    let mut result = RolloutResult::default();
    let mut chunk: Option<ActionChunk> = None;
    let mut consumed = 0usize;

    for t in 0..spec.horizon {
        if chunk.is_none() || consumed >= H_CHUNK {
            let cond = cond_sample(&obs, &spec.prompt, &cache_text);
            chunk = Some(sample_chunk(dp, cfg.sampler, &cond, &mut rng));
            consumed = 0;
        }
        let action = chunk.as_ref().unwrap().action(consumed);
        consumed += 1;
        result.log.push(TraceRow {
            t,
            instruction: spec.prompt.clone(),
            is_keystep: false,
            cache: cache_text.clone(),
            action,
            regen: false,
        });
        obs = scene.step(action);
        result.steps = t + 1;
        if scene.check_success() {
            result.success = true;
            break;
        }
    }
    result
}

/// Key-step predictions executed directly by solvers. Every executed
/// instruction is a live key-step; the loop ends on a done prediction,
/// success, or horizon.
fn rollout_vlm_oracle(kind: TaskKind, seed: u64, planner: &PlannerModel) -> RolloutResult {
    let (mut scene, mut obs) = match Scene::reset(kind, seed) {
        Ok(v) => v,
        Err(_) => return RolloutResult::default(),
    };
    let spec = scene.spec.clone();
    let mut memory = MemoryBuffer::new();
    let mut dict = PoseDict::new();
    let mut result = RolloutResult::default();
    let max_instructions = 32;

    'outer: for _ in 0..max_instructions {
        if scene.t >= spec.horizon {
            break;
        }
        let instr = predict_keystep(
            planner,
            ParamView::Ema,
            &obs.base,
            &obs.proprio,
            kind,
            &spec.descriptors,
            spec.direction,
            &memory,
        );
        debug_assert!(!instr.commented, "key-step mode output is live");
        if matches!(instr.command, Command::Done) {
            break;
        }
        memory = update_memory(&memory, &instr);
        let cache = CacheInfo::from_memory(&memory);
        let mut solver = match begin_instruction(&scene, &mut dict, &instr) {
            Ok(s) => s,
            Err(_) => {
                result.exec_errors += 1;
                break;
            }
        };
        let text = instr.render();
        let mut first = true;
        while !solver.check_done(&scene) && scene.t < spec.horizon {
            let action = solver.next_action(&scene);
            result.log.push(TraceRow {
                t: scene.t,
                instruction: text.clone(),
                is_keystep: first,
                cache: cache.cache_text.clone(),
                action,
                regen: false,
            });
            first = false;
            obs = scene.step(action);
            result.steps = scene.t;
            if scene.check_success() {
                result.success = true;
                break 'outer;
            }
        }
        if solver.failed {
            break;
        }
    }
    result.success = result.success || scene.check_success();
    result
}
