//! Conditioning encoder: code/prompt token embeddings plus observation
//! tokens pooled by stacked cross-attention into a fixed-width vector.

use rand_chacha::ChaCha8Rng;

use crate::dsl::vocab::{self, TokenId};
use crate::nn::graph::{Graph, NodeId};
use crate::nn::layers::{padding_mask, Conv2d, CrossAttentionBlock, Embedding, Linear};
use crate::nn::optim::{ParamSet, ParamView};
use crate::nn::tensor::Tensor;
use crate::sim::obs::{CHANNELS, EXTRA_DIM, PROPRIO_DIM, WRIST};
use crate::sim::types::GRID;

/// Token budget per (task, cache) pair; longer text truncates.
pub const MAX_TOKENS: usize = 120;
/// Observation query tokens: base, wrist, proprioception, gripper extra.
pub const OBS_TOKENS: usize = 4;

/// Text conditioning of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct CondText {
    pub task_tokens: Vec<TokenId>,
    pub cache_tokens: Vec<TokenId>,
}

impl CondText {
    pub fn new(task_text: &str, cache_text: &str) -> CondText {
        CondText {
            task_tokens: vocab::tokenize(task_text),
            cache_tokens: vocab::tokenize(cache_text),
        }
    }
}

/// One conditioning sample: raw observation arrays plus tokenized text.
#[derive(Clone, Debug)]
pub struct CondSample {
    pub base: Vec<f32>,
    pub wrist: Vec<f32>,
    pub proprio: Vec<f32>,
    pub extra: Vec<f32>,
    pub text: CondText,
}

pub struct CondEncoder {
    pub dim: usize,
    tok_emb: Embedding,
    pos_emb: Embedding,
    seg_emb: Embedding,
    conv1: Conv2d,
    conv2: Conv2d,
    base_lin: Linear,
    wrist_lin: Linear,
    prop_lin: Linear,
    extra_lin: Linear,
    block1: CrossAttentionBlock,
    block2: CrossAttentionBlock,
}

impl CondEncoder {
    pub fn new(ps: &mut ParamSet, name: &str, dim: usize, rng: &mut ChaCha8Rng) -> CondEncoder {
        let ch1 = 24;
        let ch2 = 32;
        CondEncoder {
            dim,
            tok_emb: Embedding::new(ps, &format!("{name}.tok"), vocab::vocab_size(), dim, rng),
            pos_emb: Embedding::new(ps, &format!("{name}.pos"), MAX_TOKENS, dim, rng),
            seg_emb: Embedding::new(ps, &format!("{name}.seg"), 2, dim, rng),
            conv1: Conv2d::new(ps, &format!("{name}.conv1"), CHANNELS, ch1, 3, 1, 1, rng),
            conv2: Conv2d::new(ps, &format!("{name}.conv2"), ch1, ch2, 3, 2, 1, rng),
            base_lin: Linear::new(ps, &format!("{name}.base"), ch2 * 5 * 5, dim, rng),
            wrist_lin: Linear::new(ps, &format!("{name}.wrist"), CHANNELS * WRIST * WRIST, dim, rng),
            prop_lin: Linear::new(ps, &format!("{name}.prop"), PROPRIO_DIM, dim, rng),
            extra_lin: Linear::new(ps, &format!("{name}.extra"), EXTRA_DIM, dim, rng),
            block1: CrossAttentionBlock::new(ps, &format!("{name}.pool1"), dim, rng),
            block2: CrossAttentionBlock::new(ps, &format!("{name}.pool2"), dim, rng),
        }
    }

    /// Pooled conditioning `[bsz, 4*dim]`: the four observation tokens after
    /// cross-attending over the concatenated task and cache token sequences.
    pub fn forward(
        &self,
        g: &mut Graph,
        ps: &ParamSet,
        view: ParamView,
        batch: &[&CondSample],
    ) -> NodeId {
        let bsz = batch.len();
        let d = self.dim;

        // language tokens: embedding + position + segment, padded per batch
        let mut seqs: Vec<Vec<(TokenId, usize, usize)>> = Vec::with_capacity(bsz);
        for s in batch {
            let mut seq = Vec::new();
            for (i, &t) in s.text.task_tokens.iter().take(MAX_TOKENS).enumerate() {
                seq.push((t, i, 0));
            }
            let remaining = MAX_TOKENS.saturating_sub(seq.len());
            for (i, &t) in s.text.cache_tokens.iter().take(remaining).enumerate() {
                seq.push((t, i, 1));
            }
            seqs.push(seq);
        }
        let n_max = seqs.iter().map(|s| s.len()).max().unwrap_or(1).max(1);

        let mut tok_rows = Vec::new();
        let mut pos_rows = Vec::new();
        let mut seg_rows = Vec::new();
        let mut positions = Vec::new();
        for (bi, seq) in seqs.iter().enumerate() {
            for (ti, &(tok, pos, seg)) in seq.iter().enumerate() {
                positions.push(bi * n_max + ti);
                tok_rows.push(tok);
                pos_rows.push(pos);
                seg_rows.push(seg);
            }
        }
        let lang = if positions.is_empty() {
            g.leaf(Tensor::zeros(&[bsz * n_max, d]))
        } else {
            let te = self.tok_emb.forward(g, ps, view, &tok_rows);
            let pe = self.pos_emb.forward(g, ps, view, &pos_rows);
            let se = self.seg_emb.forward(g, ps, view, &seg_rows);
            let sum = g.add(te, pe);
            let sum = g.add(sum, se);
            g.place_rows(sum, &positions, bsz * n_max)
        };
        let lang = g.reshape(lang, &[bsz, n_max, d]);
        let valid: Vec<usize> = seqs.iter().map(|s| s.len().max(1)).collect();
        let mask = g.leaf(padding_mask(bsz, OBS_TOKENS, n_max, &valid));

        // observation tokens
        let mut base_data = Vec::with_capacity(bsz * CHANNELS * GRID * GRID);
        let mut wrist_data = Vec::with_capacity(bsz * CHANNELS * WRIST * WRIST);
        let mut prop_data = Vec::with_capacity(bsz * PROPRIO_DIM);
        let mut extra_data = Vec::with_capacity(bsz * EXTRA_DIM);
        for s in batch {
            base_data.extend_from_slice(&s.base);
            wrist_data.extend_from_slice(&s.wrist);
            prop_data.extend_from_slice(&s.proprio);
            extra_data.extend_from_slice(&s.extra);
        }
        let base = g.leaf(Tensor::new(vec![bsz, CHANNELS, GRID, GRID], base_data));
        let h = self.conv1.forward(g, ps, view, base);
        let h = g.relu(h);
        let h = self.conv2.forward(g, ps, view, h);
        let h = g.relu(h);
        let h = g.reshape(h, &[bsz, 32 * 5 * 5]);
        let base_tok = self.base_lin.forward(g, ps, view, h);

        let wrist = g.leaf(Tensor::new(vec![bsz, CHANNELS * WRIST * WRIST], wrist_data));
        let wrist_tok = self.wrist_lin.forward(g, ps, view, wrist);
        let prop = g.leaf(Tensor::new(vec![bsz, PROPRIO_DIM], prop_data));
        let prop_tok = self.prop_lin.forward(g, ps, view, prop);
        let extra = g.leaf(Tensor::new(vec![bsz, EXTRA_DIM], extra_data));
        let extra_tok = self.extra_lin.forward(g, ps, view, extra);

        // interleave the four tokens into [bsz, 4, d]
        let obs_flat = {
            let bt = g.reshape(base_tok, &[bsz, 1, d]);
            let wt = g.reshape(wrist_tok, &[bsz, 1, d]);
            let pt = g.reshape(prop_tok, &[bsz, 1, d]);
            let et = g.reshape(extra_tok, &[bsz, 1, d]);
            // concat along rows after flattening to [bsz, d], then place
            let bt = g.reshape(bt, &[bsz, d]);
            let wt = g.reshape(wt, &[bsz, d]);
            let pt = g.reshape(pt, &[bsz, d]);
            let et = g.reshape(et, &[bsz, d]);
            let toks = [bt, wt, pt, et];
            let mut acc = g.leaf(Tensor::zeros(&[bsz * OBS_TOKENS, d]));
            for (slot, &tok) in toks.iter().enumerate() {
                let positions: Vec<usize> =
                    (0..bsz).map(|bi| bi * OBS_TOKENS + slot).collect();
                let placed = g.place_rows(tok, &positions, bsz * OBS_TOKENS);
                acc = g.add(acc, placed);
            }
            acc
        };
        let queries = g.reshape(obs_flat, &[bsz, OBS_TOKENS, d]);

        let q = self.block1.forward(g, ps, view, queries, lang, Some(mask));
        let q = self.block2.forward(g, ps, view, q, lang, Some(mask));
        g.reshape(q, &[bsz, OBS_TOKENS * d])
    }
}
