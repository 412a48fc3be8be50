//! The high-level policy: encodes the base grid plus structured context
//! tokens (prompt, key-step memory, optional queries) and decodes one
//! instruction through categorical heads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dsl::memory::MemoryBuffer;
use crate::nn::graph::{Graph, NodeId};
use crate::nn::layers::{padding_mask, Conv2d, CrossAttentionBlock, Embedding, LayerNorm, Linear};
use crate::nn::optim::{ParamSet, ParamView};
use crate::nn::tensor::Tensor;
use crate::sim::obs::CHANNELS;
use crate::sim::task::TaskKind;
use crate::sim::types::{Color, Direction, Shape, GRID};

use super::coding::{self, CodeTargets, N_CELLS, N_DIRECTIONS, N_KEYS, N_TEMPLATES};

/// Embedding tables for context-token fields. A token is the sum of its
/// field embeddings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Table {
    TaskKind,
    RoleSlot,
    RoleColor,
    RoleShape,
    PromptDir,
    KeystepFlag,
    QueryKind,
    QueryColor,
    QueryShape,
    QueryCellI,
    QueryCellJ,
    MemPos,
    MemTemplate,
    MemColorA,
    MemShapeA,
    MemColorB,
    MemShapeB,
    MemDir,
    MemKeyNew,
    MemKeyRef,
    MemLitI,
    MemLitJ,
    MemPosAI,
    MemPosAJ,
    MemPosBI,
    MemPosBJ,
    DecodeQuery,
}

impl Table {
    pub const ALL: [Table; 27] = [
        Table::TaskKind,
        Table::RoleSlot,
        Table::RoleColor,
        Table::RoleShape,
        Table::PromptDir,
        Table::KeystepFlag,
        Table::QueryKind,
        Table::QueryColor,
        Table::QueryShape,
        Table::QueryCellI,
        Table::QueryCellJ,
        Table::MemPos,
        Table::MemTemplate,
        Table::MemColorA,
        Table::MemShapeA,
        Table::MemColorB,
        Table::MemShapeB,
        Table::MemDir,
        Table::MemKeyNew,
        Table::MemKeyRef,
        Table::MemLitI,
        Table::MemLitJ,
        Table::MemPosAI,
        Table::MemPosAJ,
        Table::MemPosBI,
        Table::MemPosBJ,
        Table::DecodeQuery,
    ];

    fn rows(self) -> usize {
        match self {
            Table::TaskKind => TaskKind::ALL.len(),
            Table::RoleSlot => 3,
            Table::RoleColor | Table::QueryColor | Table::MemColorA | Table::MemColorB => {
                Color::ALL.len()
            }
            Table::RoleShape | Table::QueryShape | Table::MemShapeA | Table::MemShapeB => {
                Shape::ALL.len()
            }
            Table::PromptDir | Table::MemDir => N_DIRECTIONS,
            Table::KeystepFlag | Table::DecodeQuery => 1,
            Table::QueryKind => 2,
            Table::QueryCellI
            | Table::QueryCellJ
            | Table::MemLitI
            | Table::MemLitJ
            | Table::MemPosAI
            | Table::MemPosAJ
            | Table::MemPosBI
            | Table::MemPosBJ => N_CELLS,
            Table::MemPos => MAX_MEMORY_TOKENS,
            Table::MemTemplate => N_TEMPLATES,
            Table::MemKeyNew | Table::MemKeyRef => N_KEYS,
        }
    }
}

/// Longest encodable memory (swapping needs 13 entries).
pub const MAX_MEMORY_TOKENS: usize = 16;

/// One context token: field contributions summed into a single vector.
pub type TokenFields = Vec<(Table, usize)>;

/// Width of the end-effector feature vector: raw (x, y, z, grip, held) plus
/// sin/cos Fourier features of each coordinate at five frequencies.
pub const EE_FEAT_DIM: usize = 5 + 3 * 10;

/// Frequencies (cycles per table unit) deliberately off the harmonics of
/// the 0.05 motion lattice: lattice-aligned frequencies would alias
/// positions one grid step apart into identical features. The highest one
/// resolves differences near the solvers' 0.01 arrival tolerance.
const EE_FREQS: [f32; 5] = [1.3, 3.1, 7.7, 17.9, 41.3];

/// Smooth high-resolution encoding of the arm state for the base view.
pub fn ee_features(proprio: &[f32]) -> Vec<f32> {
    let mut f = Vec::with_capacity(EE_FEAT_DIM);
    f.extend_from_slice(&proprio[..5]);
    for &coord in &proprio[..3] {
        for &freq in &EE_FREQS {
            let phase = std::f32::consts::TAU * freq * coord;
            f.push(phase.sin());
            f.push(phase.cos());
        }
    }
    f
}

/// What the planner is asked at one forward pass.
#[derive(Clone, Debug)]
pub enum PlannerQuery {
    /// Generate the next instruction given prompt and memory.
    Code {
        kind: TaskKind,
        roles: Vec<(Color, Shape)>,
        direction: Option<Direction>,
        memory: MemoryBuffer,
        keystep_request: bool,
    },
    /// Is an object with this descriptor at this cell?
    Presence { color: Color, shape: Shape, cell: (usize, usize) },
    /// Where is the object with this descriptor?
    Location { color: Color, shape: Shape },
}

/// Build the context-token field lists for a query.
pub fn build_tokens(query: &PlannerQuery) -> Vec<TokenFields> {
    let mut tokens: Vec<TokenFields> = Vec::new();
    match query {
        PlannerQuery::Code { kind, roles, direction, memory, keystep_request } => {
            let mut task_tok: TokenFields = vec![(Table::TaskKind, kind.index())];
            if let Some(d) = direction {
                task_tok.push((Table::PromptDir, d.index()));
            }
            tokens.push(task_tok);
            for (slot, (c, s)) in roles.iter().enumerate().take(3) {
                tokens.push(vec![
                    (Table::RoleSlot, slot),
                    (Table::RoleColor, c.index()),
                    (Table::RoleShape, s.index()),
                ]);
            }
            let mut assign_count = 0usize;
            for (pos, instr) in memory.entries().iter().take(MAX_MEMORY_TOKENS).enumerate() {
                let mut tok: TokenFields = vec![(Table::MemPos, pos)];
                if let Some(t) = coding::encode(instr) {
                    if let Some(ti) = t.template {
                        tok.push((Table::MemTemplate, ti));
                    }
                    if let Some(c) = t.color_a {
                        tok.push((Table::MemColorA, c));
                    }
                    if let Some(s) = t.shape_a {
                        tok.push((Table::MemShapeA, s));
                    }
                    if let Some(c) = t.color_b {
                        tok.push((Table::MemColorB, c));
                    }
                    if let Some(s) = t.shape_b {
                        tok.push((Table::MemShapeB, s));
                    }
                    if let Some(d) = t.direction {
                        tok.push((Table::MemDir, d));
                    }
                    if let Some(k) = t.key_ref {
                        tok.push((Table::MemKeyRef, k));
                    }
                    if let (Some(i), Some(j)) = (t.lit_i, t.lit_j) {
                        tok.push((Table::MemLitI, i));
                        tok.push((Table::MemLitJ, j));
                    }
                    if let (Some(i), Some(j)) = (t.pos_a_i, t.pos_a_j) {
                        tok.push((Table::MemPosAI, i));
                        tok.push((Table::MemPosAJ, j));
                    }
                    if let (Some(i), Some(j)) = (t.pos_b_i, t.pos_b_j) {
                        tok.push((Table::MemPosBI, i));
                        tok.push((Table::MemPosBJ, j));
                    }
                }
                if instr.assign.is_some() {
                    tok.push((Table::MemKeyNew, assign_count.min(N_KEYS - 1)));
                    assign_count += 1;
                }
                tokens.push(tok);
            }
            if *keystep_request {
                tokens.push(vec![(Table::KeystepFlag, 0)]);
            }
        }
        PlannerQuery::Presence { color, shape, cell } => {
            tokens.push(vec![
                (Table::QueryKind, 0),
                (Table::QueryColor, color.index()),
                (Table::QueryShape, shape.index()),
                (Table::QueryCellI, cell.0),
                (Table::QueryCellJ, cell.1),
            ]);
        }
        PlannerQuery::Location { color, shape } => {
            tokens.push(vec![
                (Table::QueryKind, 1),
                (Table::QueryColor, color.index()),
                (Table::QueryShape, shape.index()),
            ]);
        }
    }
    tokens
}

/// Head logits for one batch.
pub struct HeadNodes {
    pub commented: NodeId,
    pub template: NodeId,
    pub color_a: NodeId,
    pub shape_a: NodeId,
    pub has_pos_a: NodeId,
    pub pos_a_i: NodeId,
    pub pos_a_j: NodeId,
    pub color_b: NodeId,
    pub shape_b: NodeId,
    pub has_pos_b: NodeId,
    pub pos_b_i: NodeId,
    pub pos_b_j: NodeId,
    pub direction: NodeId,
    pub key_ref: NodeId,
    pub lit_i: NodeId,
    pub lit_j: NodeId,
    pub presence: NodeId,
}

pub struct PlannerModel {
    pub params: ParamSet,
    pub dim: usize,
    conv1: Conv2d,
    conv2: Conv2d,
    grid_pos: usize, // param id of the [100, dim] positional table
    ee_linear: Linear,
    tables: Vec<Embedding>,
    ctx_block1: CrossAttentionBlock,
    grid_block1: CrossAttentionBlock,
    ctx_block2: CrossAttentionBlock,
    grid_block2: CrossAttentionBlock,
    ee_proj: Linear,
    fuse_norm: LayerNorm,
    fuse_fc1: Linear,
    fuse_fc2: Linear,
    out_norm: LayerNorm,
    heads: Heads,
}

struct Heads {
    commented: Linear,
    template: Linear,
    color_a: Linear,
    shape_a: Linear,
    has_pos_a: Linear,
    pos_a_i: Linear,
    pos_a_j: Linear,
    color_b: Linear,
    shape_b: Linear,
    has_pos_b: Linear,
    pos_b_i: Linear,
    pos_b_j: Linear,
    direction: Linear,
    key_ref: Linear,
    lit_i: Linear,
    lit_j: Linear,
    presence: Linear,
}

/// Input of one forward pass: the base grid plus context tokens and, for
/// code queries, the arm-state features (appended as one extra token).
pub struct PlannerInput {
    pub base: Vec<f32>,
    pub tokens: Vec<TokenFields>,
    pub ee_feats: Option<Vec<f32>>,
}

impl PlannerInput {
    fn token_count(&self) -> usize {
        self.tokens.len() + self.ee_feats.is_some() as usize
    }
}

impl PlannerModel {
    pub fn new(seed: u64, dim: usize) -> PlannerModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        let ch = 32;
        let conv1 = Conv2d::new(&mut ps, "scene.conv1", CHANNELS, ch, 3, 1, 1, &mut rng);
        let conv2 = Conv2d::new(&mut ps, "scene.conv2", ch, dim, 3, 1, 1, &mut rng);
        let grid_pos = ps.add_uniform("scene.pos", &[GRID * GRID, dim], dim, &mut rng);
        let ee_linear = Linear::new(&mut ps, "ctx.ee", EE_FEAT_DIM, dim, &mut rng);
        let tables = Table::ALL
            .iter()
            .map(|t| Embedding::new(&mut ps, &format!("ctx.{t:?}"), t.rows(), dim, &mut rng))
            .collect();
        let ctx_block1 = CrossAttentionBlock::new(&mut ps, "dec.ctx1", dim, &mut rng);
        let grid_block1 = CrossAttentionBlock::new(&mut ps, "dec.grid1", dim, &mut rng);
        let ctx_block2 = CrossAttentionBlock::new(&mut ps, "dec.ctx2", dim, &mut rng);
        let grid_block2 = CrossAttentionBlock::new(&mut ps, "dec.grid2", dim, &mut rng);
        let ee_proj = Linear::new(&mut ps, "dec.ee_proj", EE_FEAT_DIM, dim, &mut rng);
        let fuse_norm = LayerNorm::new(&mut ps, "dec.fuse_norm", dim);
        let fuse_fc1 = Linear::new(&mut ps, "dec.fuse_fc1", dim, 2 * dim, &mut rng);
        let fuse_fc2 = Linear::new(&mut ps, "dec.fuse_fc2", 2 * dim, dim, &mut rng);
        let out_norm = LayerNorm::new(&mut ps, "dec.out_norm", dim);
        let heads = Heads {
            commented: Linear::new(&mut ps, "head.commented", dim, 2, &mut rng),
            template: Linear::new(&mut ps, "head.template", dim, N_TEMPLATES, &mut rng),
            color_a: Linear::new(&mut ps, "head.color_a", dim, Color::ALL.len(), &mut rng),
            shape_a: Linear::new(&mut ps, "head.shape_a", dim, Shape::ALL.len(), &mut rng),
            has_pos_a: Linear::new(&mut ps, "head.has_pos_a", dim, 2, &mut rng),
            pos_a_i: Linear::new(&mut ps, "head.pos_a_i", dim, N_CELLS, &mut rng),
            pos_a_j: Linear::new(&mut ps, "head.pos_a_j", dim, N_CELLS, &mut rng),
            color_b: Linear::new(&mut ps, "head.color_b", dim, Color::ALL.len(), &mut rng),
            shape_b: Linear::new(&mut ps, "head.shape_b", dim, Shape::ALL.len(), &mut rng),
            has_pos_b: Linear::new(&mut ps, "head.has_pos_b", dim, 2, &mut rng),
            pos_b_i: Linear::new(&mut ps, "head.pos_b_i", dim, N_CELLS, &mut rng),
            pos_b_j: Linear::new(&mut ps, "head.pos_b_j", dim, N_CELLS, &mut rng),
            direction: Linear::new(&mut ps, "head.direction", dim, N_DIRECTIONS, &mut rng),
            key_ref: Linear::new(&mut ps, "head.key_ref", dim, N_KEYS, &mut rng),
            lit_i: Linear::new(&mut ps, "head.lit_i", dim, N_CELLS, &mut rng),
            lit_j: Linear::new(&mut ps, "head.lit_j", dim, N_CELLS, &mut rng),
            presence: Linear::new(&mut ps, "head.presence", dim, 2, &mut rng),
        };
        PlannerModel {
            params: ps,
            dim,
            conv1,
            conv2,
            grid_pos,
            ee_linear,
            tables,
            ctx_block1,
            grid_block1,
            ctx_block2,
            grid_block2,
            ee_proj,
            fuse_norm,
            fuse_fc1,
            fuse_fc2,
            out_norm,
            heads,
        }
    }

    pub fn forward(&self, g: &mut Graph, view: ParamView, batch: &[PlannerInput]) -> HeadNodes {
        let bsz = batch.len();
        let d = self.dim;
        let ps = &self.params;

        // scene tokens
        let mut base_data = Vec::with_capacity(bsz * CHANNELS * GRID * GRID);
        for inp in batch {
            debug_assert_eq!(inp.base.len(), CHANNELS * GRID * GRID);
            base_data.extend_from_slice(&inp.base);
        }
        let base = g.leaf(Tensor::new(vec![bsz, CHANNELS, GRID, GRID], base_data));
        let h = self.conv1.forward(g, ps, view, base);
        let h = g.relu(h);
        let h = self.conv2.forward(g, ps, view, h);
        let h = g.relu(h);
        let h = g.reshape(h, &[bsz, d, GRID * GRID]);
        let grid_tokens = g.transpose_12(h); // [bsz, 100, d]
        let pos_table = ps.leaf(g, self.grid_pos, view);
        let pos_idx: Vec<usize> = (0..bsz * GRID * GRID).map(|i| i % (GRID * GRID)).collect();
        let pos = g.gather_rows(pos_table, &pos_idx);
        let pos = g.reshape(pos, &[bsz, GRID * GRID, d]);
        let grid_tokens = g.add(grid_tokens, pos);

        // context tokens: sum of field embeddings, padded to the batch max
        let n_max = batch.iter().map(|i| i.token_count()).max().unwrap_or(1).max(1);
        let mut ctx = {
            let zeros = g.leaf(Tensor::zeros(&[bsz * n_max, d]));
            zeros
        };
        for (ti, table) in Table::ALL.iter().enumerate() {
            let mut positions = Vec::new();
            let mut rows = Vec::new();
            for (bi, inp) in batch.iter().enumerate() {
                for (tok_i, tok) in inp.tokens.iter().enumerate() {
                    for &(t, row) in tok {
                        if t == *table {
                            positions.push(bi * n_max + tok_i);
                            rows.push(row);
                        }
                    }
                }
            }
            if rows.is_empty() {
                continue;
            }
            let emb = self.tables[ti].forward(g, ps, view, &rows);
            let placed = g.place_rows(emb, &positions, bsz * n_max);
            ctx = g.add(ctx, placed);
        }
        // arm-state tokens go in the slot after each sample's last token
        let ee_rows: Vec<(usize, &Vec<f32>)> = batch
            .iter()
            .enumerate()
            .filter_map(|(bi, inp)| {
                inp.ee_feats.as_ref().map(|f| (bi * n_max + inp.tokens.len(), f))
            })
            .collect();
        if !ee_rows.is_empty() {
            let mut feats = Vec::with_capacity(ee_rows.len() * EE_FEAT_DIM);
            let mut positions = Vec::with_capacity(ee_rows.len());
            for (pos, f) in &ee_rows {
                debug_assert_eq!(f.len(), EE_FEAT_DIM);
                feats.extend_from_slice(f);
                positions.push(*pos);
            }
            let feats = g.leaf(Tensor::new(vec![ee_rows.len(), EE_FEAT_DIM], feats));
            let emb = self.ee_linear.forward(g, ps, view, feats);
            let placed = g.place_rows(emb, &positions, bsz * n_max);
            ctx = g.add(ctx, placed);
        }
        let ctx = g.reshape(ctx, &[bsz, n_max, d]);
        let valid: Vec<usize> = batch.iter().map(|i| i.token_count().max(1)).collect();
        let mask = g.leaf(padding_mask(bsz, 1, n_max, &valid));

        // decode query attends context / grid / context / grid
        let qrow = ps.leaf(g, self.tables[Table::ALL.len() - 1].table, view);
        debug_assert_eq!(Table::ALL[Table::ALL.len() - 1], Table::DecodeQuery);
        let q_idx = vec![0usize; bsz];
        let q = g.gather_rows(qrow, &q_idx);
        let q = g.reshape(q, &[bsz, 1, d]);
        let q = self.ctx_block1.forward(g, ps, view, q, ctx, Some(mask));
        let q = self.grid_block1.forward(g, ps, view, q, grid_tokens, None);
        let q = self.ctx_block2.forward(g, ps, view, q, ctx, Some(mask));
        let q = self.grid_block2.forward(g, ps, view, q, grid_tokens, None);
        let h = g.reshape(q, &[bsz, d]);

        // inject arm-state features right before the heads: timing decisions
        // are near-threshold functions of the arm pose, so they get a short
        // credit path instead of relying on attention alone
        let mut all_feats = vec![0f32; bsz * EE_FEAT_DIM];
        for (bi, inp) in batch.iter().enumerate() {
            if let Some(f) = &inp.ee_feats {
                all_feats[bi * EE_FEAT_DIM..(bi + 1) * EE_FEAT_DIM].copy_from_slice(f);
            }
        }
        let feats = g.leaf(Tensor::new(vec![bsz, EE_FEAT_DIM], all_feats));
        let ee = self.ee_proj.forward(g, ps, view, feats);
        let h = g.add(h, ee);
        let hn = self.fuse_norm.forward(g, ps, view, h);
        let m = self.fuse_fc1.forward(g, ps, view, hn);
        let m = g.silu(m);
        let m = self.fuse_fc2.forward(g, ps, view, m);
        let h = g.add(h, m);
        let h = self.out_norm.forward(g, ps, view, h);

        HeadNodes {
            commented: self.heads.commented.forward(g, ps, view, h),
            template: self.heads.template.forward(g, ps, view, h),
            color_a: self.heads.color_a.forward(g, ps, view, h),
            shape_a: self.heads.shape_a.forward(g, ps, view, h),
            has_pos_a: self.heads.has_pos_a.forward(g, ps, view, h),
            pos_a_i: self.heads.pos_a_i.forward(g, ps, view, h),
            pos_a_j: self.heads.pos_a_j.forward(g, ps, view, h),
            color_b: self.heads.color_b.forward(g, ps, view, h),
            shape_b: self.heads.shape_b.forward(g, ps, view, h),
            has_pos_b: self.heads.has_pos_b.forward(g, ps, view, h),
            pos_b_i: self.heads.pos_b_i.forward(g, ps, view, h),
            pos_b_j: self.heads.pos_b_j.forward(g, ps, view, h),
            direction: self.heads.direction.forward(g, ps, view, h),
            key_ref: self.heads.key_ref.forward(g, ps, view, h),
            lit_i: self.heads.lit_i.forward(g, ps, view, h),
            lit_j: self.heads.lit_j.forward(g, ps, view, h),
            presence: self.heads.presence.forward(g, ps, view, h),
        }
    }
}

/// Pair (head logits node, per-sample targets) used by the loss.
pub struct HeadTargets {
    pub targets: Vec<CodeTargets>,
}

pub fn argmax_row(t: &Tensor, row: usize) -> usize {
    let k = t.last_dim();
    let slice = &t.data[row * k..(row + 1) * k];
    let mut best = 0;
    for (i, &v) in slice.iter().enumerate() {
        if v > slice[best] {
            best = i;
        }
    }
    best
}
