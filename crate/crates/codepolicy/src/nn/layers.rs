//! Layer modules: thin bundles of parameter ids plus a forward method.

use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, NodeId};
use super::optim::{ParamId, ParamSet, ParamView};
use super::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(ps: &mut ParamSet, name: &str, din: usize, dout: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = ps.add_uniform(&format!("{name}.w"), &[din, dout], din, rng);
        let b = ps.add_zeros(&format!("{name}.b"), &[dout]);
        Self { w, b }
    }

    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, view: ParamView, x: NodeId) -> NodeId {
        let w = ps.leaf(g, self.w, view);
        let b = ps.leaf(g, self.b, view);
        let h = g.matmul(x, w);
        g.add_bias(h, b)
    }
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    pub fn new(
        ps: &mut ParamSet,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = cin * k * k;
        let w = ps.add_uniform(&format!("{name}.w"), &[cout, cin, k, k], fan_in, rng);
        let b = ps.add_zeros(&format!("{name}.b"), &[cout]);
        Self { w, b, stride, pad }
    }

    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, view: ParamView, x: NodeId) -> NodeId {
        let w = ps.leaf(g, self.w, view);
        let b = ps.leaf(g, self.b, view);
        g.conv2d(x, w, b, self.stride, self.pad)
    }
}

#[derive(Clone, Debug)]
pub struct Conv1d {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl Conv1d {
    pub fn new(
        ps: &mut ParamSet,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = cin * k;
        let w = ps.add_uniform(&format!("{name}.w"), &[cout, cin, k], fan_in, rng);
        let b = ps.add_zeros(&format!("{name}.b"), &[cout]);
        Self { w, b, stride, pad }
    }

    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, view: ParamView, x: NodeId) -> NodeId {
        let w = ps.leaf(g, self.w, view);
        let b = ps.leaf(g, self.b, view);
        g.conv1d(x, w, b, self.stride, self.pad)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(ps: &mut ParamSet, name: &str, d: usize) -> Self {
        let gamma = ps.add_ones(&format!("{name}.gamma"), &[d]);
        let beta = ps.add_zeros(&format!("{name}.beta"), &[d]);
        Self { gamma, beta }
    }

    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, view: ParamView, x: NodeId) -> NodeId {
        let gamma = ps.leaf(g, self.gamma, view);
        let beta = ps.leaf(g, self.beta, view);
        g.layer_norm(x, gamma, beta, 1e-5)
    }
}

/// Token embedding table.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub table: ParamId,
    pub dim: usize,
}

impl Embedding {
    pub fn new(ps: &mut ParamSet, name: &str, vocab: usize, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let table = ps.add_uniform(&format!("{name}.table"), &[vocab, dim], dim, rng);
        Self { table, dim }
    }

    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, view: ParamView, idx: &[usize]) -> NodeId {
        let table = ps.leaf(g, self.table, view);
        g.gather_rows(table, idx)
    }
}

/// Pre-layernorm single-head cross attention plus MLP, both residual.
///
/// Queries `[bsz, nq, d]` attend over keys/values `[bsz, nk, d]`. An optional
/// additive mask `[bsz, nq, nk]` (0 or -1e9) hides padding tokens.
#[derive(Clone, Debug)]
pub struct CrossAttentionBlock {
    pub ln_q: LayerNorm,
    pub ln_kv: LayerNorm,
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub ln_mlp: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
    pub dim: usize,
}

impl CrossAttentionBlock {
    pub fn new(ps: &mut ParamSet, name: &str, d: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            ln_q: LayerNorm::new(ps, &format!("{name}.ln_q"), d),
            ln_kv: LayerNorm::new(ps, &format!("{name}.ln_kv"), d),
            wq: Linear::new(ps, &format!("{name}.wq"), d, d, rng),
            wk: Linear::new(ps, &format!("{name}.wk"), d, d, rng),
            wv: Linear::new(ps, &format!("{name}.wv"), d, d, rng),
            wo: Linear::new(ps, &format!("{name}.wo"), d, d, rng),
            ln_mlp: LayerNorm::new(ps, &format!("{name}.ln_mlp"), d),
            fc1: Linear::new(ps, &format!("{name}.fc1"), d, 2 * d, rng),
            fc2: Linear::new(ps, &format!("{name}.fc2"), 2 * d, d, rng),
            dim: d,
        }
    }

    /// The attention sub-layer alone (no residual), exposed for tests.
    pub fn attend(
        &self,
        g: &mut Graph,
        ps: &ParamSet,
        view: ParamView,
        queries: NodeId,
        keys_values: NodeId,
        mask: Option<NodeId>,
    ) -> NodeId {
        let d = self.dim;
        assert_eq!(g.shape(queries).len(), 3, "queries must be [bsz, nq, d]");
        assert_eq!(g.shape(keys_values).len(), 3, "keys_values must be [bsz, nk, d]");
        assert_eq!(g.shape(queries)[2], d, "query dim mismatch");
        assert_eq!(g.shape(keys_values)[2], d, "key dim mismatch");
        let (bsz, nq) = (g.shape(queries)[0], g.shape(queries)[1]);
        let nk = g.shape(keys_values)[1];

        let qn = self.ln_q.forward(g, ps, view, queries);
        let kn = self.ln_kv.forward(g, ps, view, keys_values);
        let q = self.wq.forward(g, ps, view, qn);
        let k = self.wk.forward(g, ps, view, kn);
        let v = self.wv.forward(g, ps, view, kn);
        let q = g.reshape(q, &[bsz, nq, d]);
        let k = g.reshape(k, &[bsz, nk, d]);
        let v = g.reshape(v, &[bsz, nk, d]);
        let scores = g.bmm_nt(q, k);
        let scores = g.scale(scores, 1.0 / (d as f32).sqrt());
        let scores = match mask {
            Some(m) => g.add(scores, m),
            None => scores,
        };
        let attn = g.softmax_rows(scores);
        let mixed = g.bmm(attn, v);
        self.wo.forward(g, ps, view, mixed)
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        ps: &ParamSet,
        view: ParamView,
        queries: NodeId,
        keys_values: NodeId,
        mask: Option<NodeId>,
    ) -> NodeId {
        let shape = g.shape(queries).to_vec();
        let att = self.attend(g, ps, view, queries, keys_values, mask);
        let att = g.reshape(att, &shape);
        let h = g.add(queries, att);
        let hn = self.ln_mlp.forward(g, ps, view, h);
        let m = self.fc1.forward(g, ps, view, hn);
        let m = g.silu(m);
        let m = self.fc2.forward(g, ps, view, m);
        let m = g.reshape(m, &shape);
        g.add(h, m)
    }
}

/// Sinusoidal embedding of diffusion timesteps, `[bsz, dim]`.
pub fn timestep_embedding(steps: &[usize], dim: usize) -> Tensor {
    assert!(dim % 2 == 0, "timestep embedding dim must be even");
    let half = dim / 2;
    let mut data = Vec::with_capacity(steps.len() * dim);
    for &s in steps {
        for i in 0..half {
            let freq = (-(i as f64) * (10000f64.ln()) / (half as f64 - 1.0).max(1.0)).exp();
            data.push(((s as f64) * freq).sin() as f32);
        }
        for i in 0..half {
            let freq = (-(i as f64) * (10000f64.ln()) / (half as f64 - 1.0).max(1.0)).exp();
            data.push(((s as f64) * freq).cos() as f32);
        }
    }
    Tensor::new(vec![steps.len(), dim], data)
}

/// Additive attention mask for ragged KV sequences padded to `nk`:
/// 0 where valid, -1e9 where padded.
pub fn padding_mask(bsz: usize, nq: usize, nk: usize, valid: &[usize]) -> Tensor {
    assert_eq!(valid.len(), bsz);
    let mut data = vec![0f32; bsz * nq * nk];
    for (bi, &nvalid) in valid.iter().enumerate() {
        for qi in 0..nq {
            for ki in nvalid..nk {
                data[bi * nq * nk + qi * nk + ki] = -1e9;
            }
        }
    }
    Tensor::new(vec![bsz, nq, nk], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn setup() -> (ParamSet, ChaCha8Rng) {
        (ParamSet::new(), ChaCha8Rng::seed_from_u64(7))
    }

    #[test]
    fn attention_single_key_returns_projected_value() {
        let (mut ps, mut rng) = setup();
        let d = 8;
        let block = CrossAttentionBlock::new(&mut ps, "blk", d, &mut rng);
        let mut g = Graph::new();
        let q = g.leaf(Tensor::new(
            vec![1, 4, d],
            (0..4 * d).map(|i| (i as f32 * 0.13).sin()).collect(),
        ));
        let kv = g.leaf(Tensor::new(vec![1, 1, d], (0..d).map(|i| i as f32 * 0.1).collect()));
        let out = block.attend(&mut g, &ps, ParamView::Live, q, kv, None);
        let ov = g.value(out).data.clone();
        // With a single key the softmax weight is 1, so every query row gets
        // the same projected value token.
        for r in 1..4 {
            for c in 0..d {
                assert!((ov[r * d + c] - ov[c]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn attention_duplicated_identical_keys_match_single_key() {
        let (mut ps, mut rng) = setup();
        let d = 8;
        let block = CrossAttentionBlock::new(&mut ps, "blk", d, &mut rng);
        let kvdata: Vec<f32> = (0..d).map(|i| (i as f32 * 0.31).cos()).collect();
        let qdata: Vec<f32> = (0..2 * d).map(|i| (i as f32 * 0.17).sin()).collect();

        let mut g1 = Graph::new();
        let q1 = g1.leaf(Tensor::new(vec![1, 2, d], qdata.clone()));
        let kv1 = g1.leaf(Tensor::new(vec![1, 1, d], kvdata.clone()));
        let out1 = block.attend(&mut g1, &ps, ParamView::Live, q1, kv1, None);
        let v1 = g1.value(out1).data.clone();

        let mut g2 = Graph::new();
        let q2 = g2.leaf(Tensor::new(vec![1, 2, d], qdata));
        let mut dup = kvdata.clone();
        dup.extend_from_slice(&kvdata);
        let kv2 = g2.leaf(Tensor::new(vec![1, 2, d], dup));
        let out2 = block.attend(&mut g2, &ps, ParamView::Live, q2, kv2, None);
        let v2 = g2.value(out2).data.clone();

        for (a, b) in v1.iter().zip(&v2) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn attention_block_shapes_and_finite() {
        let (mut ps, mut rng) = setup();
        let d = 8;
        let block = CrossAttentionBlock::new(&mut ps, "blk", d, &mut rng);
        let mut g = Graph::new();
        let q = g.leaf(Tensor::new(
            vec![1, 4, d],
            (0..4 * d).map(|i| (i as f32 * 0.7).sin()).collect(),
        ));
        let kv = g.leaf(Tensor::new(
            vec![1, 3, d],
            (0..3 * d).map(|i| (i as f32 * 0.3).cos()).collect(),
        ));
        let out = block.forward(&mut g, &ps, ParamView::Live, q, kv, None);
        assert_eq!(g.shape(out), &[1, 4, d]);
        assert!(g.value(out).all_finite());
    }

    #[test]
    fn padding_mask_hides_padded_keys() {
        let (mut ps, mut rng) = setup();
        let d = 8;
        let block = CrossAttentionBlock::new(&mut ps, "blk", d, &mut rng);
        let kv_valid: Vec<f32> = (0..2 * d).map(|i| (i as f32 * 0.11).sin()).collect();
        let q: Vec<f32> = (0..d).map(|i| (i as f32 * 0.23).cos()).collect();

        // Padded to 4 keys with garbage in the padding slots.
        let mut kv_padded = kv_valid.clone();
        kv_padded.extend(std::iter::repeat(7.0).take(2 * d));

        let mut g1 = Graph::new();
        let qa = g1.leaf(Tensor::new(vec![1, 1, d], q.clone()));
        let kva = g1.leaf(Tensor::new(vec![1, 2, d], kv_valid));
        let o1 = block.forward(&mut g1, &ps, ParamView::Live, qa, kva, None);
        let v1 = g1.value(o1).data.clone();

        let mut g2 = Graph::new();
        let qb = g2.leaf(Tensor::new(vec![1, 1, d], q));
        let kvb = g2.leaf(Tensor::new(vec![1, 4, d], kv_padded));
        let mask = g2.leaf(padding_mask(1, 1, 4, &[2]));
        let o2 = block.forward(&mut g2, &ps, ParamView::Live, qb, kvb, Some(mask));
        let v2 = g2.value(o2).data.clone();

        for (a, b) in v1.iter().zip(&v2) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn timestep_embedding_shape() {
        let t = timestep_embedding(&[1, 50, 100], 16);
        assert_eq!(t.shape, vec![3, 16]);
        assert!(t.all_finite());
    }
}
