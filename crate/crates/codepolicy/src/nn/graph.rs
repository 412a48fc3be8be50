//! Reverse-mode autodiff over a flat tape.
//!
//! Nodes are appended in forward order, so the tape is already topologically
//! sorted and `backward` is a single reverse sweep. The graph is generic over
//! the element type: production code instantiates `f32`, while gradient-check
//! oracles instantiate the same op implementations with `f64`.

use rayon::prelude::*;
use thiserror::Error;

use super::tensor::{Scalar, TensorT};

pub type NodeId = usize;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, T),
    AddBias(NodeId, NodeId),
    Relu(NodeId),
    Silu(NodeId),
    Sigmoid(NodeId),
    SoftmaxRows(NodeId),
    LayerNorm { x: NodeId, gamma: NodeId, beta: NodeId, eps: T },
    Matmul(NodeId, NodeId),
    BmmNt(NodeId, NodeId),
    Bmm(NodeId, NodeId),
    Conv2d { x: NodeId, w: NodeId, b: NodeId, stride: usize, pad: usize },
    Conv1d { x: NodeId, w: NodeId, b: NodeId, stride: usize, pad: usize },
    Upsample1d(NodeId),
    Transpose12(NodeId),
    GatherRows { table: NodeId, idx: Vec<usize> },
    PlaceRows { src: NodeId, positions: Vec<usize> },
    ConcatRows(Vec<NodeId>),
    SliceRows { x: NodeId, start: usize },
    Reshape(NodeId),
    MeanAll(NodeId),
    SumAll(NodeId),
    MulRows { x: NodeId, w: NodeId },
    Film { x: NodeId, scale: NodeId, shift: NodeId },
    CrossEntropy { logits: NodeId, targets: Vec<usize> },
}

struct Node<T: Scalar> {
    value: TensorT<T>,
    op: Op<T>,
}

pub struct GraphT<T: Scalar> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<TensorT<T>>>,
    /// (parameter index, leaf node) pairs recorded when live parameters enter
    /// the graph; the optimizer reads these after `backward`.
    pub(crate) bindings: Vec<(usize, NodeId)>,
}

pub type Graph = GraphT<f32>;

/// Threshold (in output elements) above which matmul-family ops parallelize
/// over independent output rows. Each output element keeps a fixed summation
/// order, so parallel and serial execution are bit-identical.
const PAR_THRESHOLD: usize = 16 * 1024;

impl<T: Scalar> Default for GraphT<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> GraphT<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), grads: Vec::new(), bindings: Vec::new() }
    }

    fn push(&mut self, value: TensorT<T>, op: Op<T>) -> NodeId {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    pub fn leaf(&mut self, t: TensorT<T>) -> NodeId {
        self.push(t, Op::Leaf)
    }

    pub fn value(&self, id: NodeId) -> &TensorT<T> {
        &self.nodes[id].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id].value.shape
    }

    /// Gradient of the last `backward` call w.r.t. node `id` (zeros if the
    /// node was unreachable from the loss).
    pub fn grad(&self, id: NodeId) -> TensorT<T> {
        match &self.grads[id] {
            Some(g) => g.clone(),
            None => TensorT::zeros(&self.nodes[id].value.shape),
        }
    }

    // ---- elementwise ----

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.shape(a), self.shape(b), "add shape mismatch");
        let data = self.nodes[a]
            .value
            .data
            .iter()
            .zip(&self.nodes[b].value.data)
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = self.nodes[a].value.shape.clone();
        self.push(TensorT { shape, data }, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.shape(a), self.shape(b), "sub shape mismatch");
        let data = self.nodes[a]
            .value
            .data
            .iter()
            .zip(&self.nodes[b].value.data)
            .map(|(&x, &y)| x - y)
            .collect();
        let shape = self.nodes[a].value.shape.clone();
        self.push(TensorT { shape, data }, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.shape(a), self.shape(b), "mul shape mismatch");
        let data = self.nodes[a]
            .value
            .data
            .iter()
            .zip(&self.nodes[b].value.data)
            .map(|(&x, &y)| x * y)
            .collect();
        let shape = self.nodes[a].value.shape.clone();
        self.push(TensorT { shape, data }, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: NodeId, c: T) -> NodeId {
        let out = self.nodes[x].value.map(|v| v * c);
        self.push(out, Op::Scale(x, c))
    }

    /// `x[..., d] + b[d]`, broadcasting the bias over all leading dims.
    pub fn add_bias(&mut self, x: NodeId, b: NodeId) -> NodeId {
        let d = self.nodes[b].value.len();
        assert_eq!(self.nodes[x].value.last_dim(), d, "add_bias dim mismatch");
        let xv = &self.nodes[x].value;
        let bv = &self.nodes[b].value.data;
        let mut data = xv.data.clone();
        for row in data.chunks_mut(d) {
            for (o, &bb) in row.iter_mut().zip(bv) {
                *o += bb;
            }
        }
        let shape = xv.shape.clone();
        self.push(TensorT { shape, data }, Op::AddBias(x, b))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let out = self.nodes[x].value.map(|v| if v > T::ZERO { v } else { T::ZERO });
        self.push(out, Op::Relu(x))
    }

    pub fn silu(&mut self, x: NodeId) -> NodeId {
        let out = self.nodes[x].value.map(|v| v * sigmoid_s(v));
        self.push(out, Op::Silu(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let out = self.nodes[x].value.map(sigmoid_s);
        self.push(out, Op::Sigmoid(x))
    }

    // ---- reductions / losses ----

    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        let n = self.nodes[x].value.len();
        let mut acc = T::ZERO;
        for &v in &self.nodes[x].value.data {
            acc += v;
        }
        let out = TensorT::scalar(acc / T::from_f64(n as f64));
        self.push(out, Op::MeanAll(x))
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let mut acc = T::ZERO;
        for &v in &self.nodes[x].value.data {
            acc += v;
        }
        self.push(TensorT::scalar(acc), Op::SumAll(x))
    }

    /// Multiply each batch row `x[i, ...]` by `w[i]`.
    pub fn mul_rows(&mut self, x: NodeId, w: NodeId) -> NodeId {
        let b = self.nodes[x].value.shape[0];
        assert_eq!(self.nodes[w].value.len(), b, "mul_rows batch mismatch");
        let chunk = self.nodes[x].value.len() / b;
        let xv = &self.nodes[x].value;
        let wv = &self.nodes[w].value.data;
        let mut data = xv.data.clone();
        for (i, row) in data.chunks_mut(chunk).enumerate() {
            for o in row.iter_mut() {
                *o = *o * wv[i];
            }
        }
        let shape = xv.shape.clone();
        self.push(TensorT { shape, data }, Op::MulRows { x, w })
    }

    /// Mean over rows of `logsumexp(row) - row[target]`.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[usize]) -> NodeId {
        let c = self.nodes[logits].value.last_dim();
        let rows = self.nodes[logits].value.rows();
        assert_eq!(rows, targets.len(), "cross_entropy target count mismatch");
        let lv = &self.nodes[logits].value.data;
        let mut acc = T::ZERO;
        for (i, row) in lv.chunks(c).enumerate() {
            let m = row.iter().fold(row[0], |a, &b| a.max_s(b));
            let mut z = T::ZERO;
            for &v in row {
                z += (v - m).exp();
            }
            acc += z.ln() + m - row[targets[i]];
        }
        let out = TensorT::scalar(acc / T::from_f64(rows as f64));
        self.push(out, Op::CrossEntropy { logits, targets: targets.to_vec() })
    }

    // ---- normalization / softmax ----

    pub fn softmax_rows(&mut self, x: NodeId) -> NodeId {
        let d = self.nodes[x].value.last_dim();
        let xv = &self.nodes[x].value;
        let mut data = vec![T::ZERO; xv.len()];
        for (orow, xrow) in data.chunks_mut(d).zip(xv.data.chunks(d)) {
            let m = xrow.iter().fold(xrow[0], |a, &b| a.max_s(b));
            let mut z = T::ZERO;
            for (o, &v) in orow.iter_mut().zip(xrow) {
                *o = (v - m).exp();
                z += *o;
            }
            for o in orow.iter_mut() {
                *o = *o / z;
            }
        }
        let shape = xv.shape.clone();
        self.push(TensorT { shape, data }, Op::SoftmaxRows(x))
    }

    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, eps: T) -> NodeId {
        let d = self.nodes[x].value.last_dim();
        assert_eq!(self.nodes[gamma].value.len(), d, "layer_norm gamma dim");
        assert_eq!(self.nodes[beta].value.len(), d, "layer_norm beta dim");
        let xv = &self.nodes[x].value;
        let g = &self.nodes[gamma].value.data;
        let bt = &self.nodes[beta].value.data;
        let mut data = vec![T::ZERO; xv.len()];
        let dn = T::from_f64(d as f64);
        for (orow, xrow) in data.chunks_mut(d).zip(xv.data.chunks(d)) {
            let mut mean = T::ZERO;
            for &v in xrow {
                mean += v;
            }
            mean = mean / dn;
            let mut var = T::ZERO;
            for &v in xrow {
                var += (v - mean) * (v - mean);
            }
            var = var / dn;
            let inv = T::ONE / (var + eps).sqrt();
            for i in 0..d {
                orow[i] = (xrow[i] - mean) * inv * g[i] + bt[i];
            }
        }
        let shape = xv.shape.clone();
        self.push(TensorT { shape, data }, Op::LayerNorm { x, gamma, beta, eps })
    }

    // ---- matmul family ----

    /// `a[m,k] @ b[k,n]` (leading dims of `a` beyond the last are flattened
    /// into rows, so `[b, t, k] @ [k, n]` works directly).
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let k = self.nodes[a].value.last_dim();
        let bshape = &self.nodes[b].value.shape;
        assert_eq!(bshape.len(), 2, "matmul rhs must be 2-d");
        assert_eq!(bshape[0], k, "matmul inner dim mismatch");
        let n = bshape[1];
        let m = self.nodes[a].value.rows();
        let av = &self.nodes[a].value.data;
        let bv = &self.nodes[b].value.data;
        let data = matmul_raw(av, bv, m, k, n);
        let mut shape = self.nodes[a].value.shape.clone();
        *shape.last_mut().unwrap() = n;
        self.push(TensorT { shape, data }, Op::Matmul(a, b))
    }

    /// Batched `a[bsz,m,d] @ b[bsz,n,d]^T -> [bsz,m,n]` (attention scores).
    pub fn bmm_nt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ba, m, d) = dims3(self.shape(a));
        let (bb, n, d2) = dims3(self.shape(b));
        assert_eq!(ba, bb, "bmm_nt batch mismatch");
        assert_eq!(d, d2, "bmm_nt feature dim mismatch");
        let av = &self.nodes[a].value.data;
        let bv = &self.nodes[b].value.data;
        let mut data = vec![T::ZERO; ba * m * n];
        let run = |(bi, ob): (usize, &mut [T])| {
            let ab = &av[bi * m * d..(bi + 1) * m * d];
            let bbk = &bv[bi * n * d..(bi + 1) * n * d];
            for i in 0..m {
                let arow = &ab[i * d..(i + 1) * d];
                for j in 0..n {
                    let brow = &bbk[j * d..(j + 1) * d];
                    let mut s = T::ZERO;
                    for p in 0..d {
                        s += arow[p] * brow[p];
                    }
                    ob[i * n + j] = s;
                }
            }
        };
        if ba * m * n >= PAR_THRESHOLD {
            data.par_chunks_mut(m * n).enumerate().for_each(run);
        } else {
            data.chunks_mut(m * n).enumerate().for_each(run);
        }
        self.push(TensorT { shape: vec![ba, m, n], data }, Op::BmmNt(a, b))
    }

    /// Batched `a[bsz,m,n] @ b[bsz,n,d] -> [bsz,m,d]` (attention values).
    pub fn bmm(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ba, m, n) = dims3(self.shape(a));
        let (bb, n2, d) = dims3(self.shape(b));
        assert_eq!(ba, bb, "bmm batch mismatch");
        assert_eq!(n, n2, "bmm inner dim mismatch");
        let av = &self.nodes[a].value.data;
        let bv = &self.nodes[b].value.data;
        let mut data = vec![T::ZERO; ba * m * d];
        let run = |(bi, ob): (usize, &mut [T])| {
            let ab = &av[bi * m * n..(bi + 1) * m * n];
            let bbk = &bv[bi * n * d..(bi + 1) * n * d];
            for i in 0..m {
                let orow = &mut ob[i * d..(i + 1) * d];
                for p in 0..n {
                    let c = ab[i * n + p];
                    let brow = &bbk[p * d..(p + 1) * d];
                    for q in 0..d {
                        orow[q] += c * brow[q];
                    }
                }
            }
        };
        if ba * m * d >= PAR_THRESHOLD {
            data.par_chunks_mut(m * d).enumerate().for_each(run);
        } else {
            data.chunks_mut(m * d).enumerate().for_each(run);
        }
        self.push(TensorT { shape: vec![ba, m, d], data }, Op::Bmm(a, b))
    }

    // ---- convolutions ----

    /// `x[bsz,c,h,w] * w[o,c,kh,kw] + b[o]`, zero padding.
    pub fn conv2d(&mut self, x: NodeId, w: NodeId, b: NodeId, stride: usize, pad: usize) -> NodeId {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        assert_eq!(xs.len(), 4, "conv2d input must be 4-d");
        assert_eq!(ws.len(), 4, "conv2d weight must be 4-d");
        assert_eq!(xs[1], ws[1], "conv2d channel mismatch");
        let (bsz, c, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        let (o, _, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
        assert_eq!(self.nodes[b].value.len(), o, "conv2d bias mismatch");
        let ho = (h + 2 * pad - kh) / stride + 1;
        let wo = (wd + 2 * pad - kw) / stride + 1;
        let xv = &self.nodes[x].value.data;
        let wv = &self.nodes[w].value.data;
        let bv = &self.nodes[b].value.data;
        let mut data = vec![T::ZERO; bsz * o * ho * wo];
        let run = |(bi, ob): (usize, &mut [T])| {
            let xb = &xv[bi * c * h * wd..(bi + 1) * c * h * wd];
            for oc in 0..o {
                let wk = &wv[oc * c * kh * kw..(oc + 1) * c * kh * kw];
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut s = bv[oc];
                        for ic in 0..c {
                            for ky in 0..kh {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for kx in 0..kw {
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if ix < 0 || ix >= wd as isize {
                                        continue;
                                    }
                                    s += xb[ic * h * wd + iy as usize * wd + ix as usize]
                                        * wk[ic * kh * kw + ky * kw + kx];
                                }
                            }
                        }
                        ob[oc * ho * wo + oy * wo + ox] = s;
                    }
                }
            }
        };
        if bsz > 1 {
            data.par_chunks_mut(o * ho * wo).enumerate().for_each(run);
        } else {
            data.chunks_mut(o * ho * wo).enumerate().for_each(run);
        }
        self.push(TensorT { shape: vec![bsz, o, ho, wo], data }, Op::Conv2d { x, w, b, stride, pad })
    }

    /// `x[bsz,c,l] * w[o,c,k] + b[o]`, zero padding.
    pub fn conv1d(&mut self, x: NodeId, w: NodeId, b: NodeId, stride: usize, pad: usize) -> NodeId {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        assert_eq!(xs.len(), 3, "conv1d input must be 3-d");
        assert_eq!(ws.len(), 3, "conv1d weight must be 3-d");
        assert_eq!(xs[1], ws[1], "conv1d channel mismatch");
        let (bsz, c, l) = (xs[0], xs[1], xs[2]);
        let (o, _, k) = (ws[0], ws[1], ws[2]);
        let lo = (l + 2 * pad - k) / stride + 1;
        let xv = &self.nodes[x].value.data;
        let wv = &self.nodes[w].value.data;
        let bv = &self.nodes[b].value.data;
        let mut data = vec![T::ZERO; bsz * o * lo];
        let run = |(bi, ob): (usize, &mut [T])| {
            let xb = &xv[bi * c * l..(bi + 1) * c * l];
            for oc in 0..o {
                let wk = &wv[oc * c * k..(oc + 1) * c * k];
                for op in 0..lo {
                    let mut s = bv[oc];
                    for ic in 0..c {
                        for kk in 0..k {
                            let ip = (op * stride + kk) as isize - pad as isize;
                            if ip < 0 || ip >= l as isize {
                                continue;
                            }
                            s += xb[ic * l + ip as usize] * wk[ic * k + kk];
                        }
                    }
                    ob[oc * lo + op] = s;
                }
            }
        };
        if bsz * o * lo >= PAR_THRESHOLD {
            data.par_chunks_mut(o * lo).enumerate().for_each(run);
        } else {
            data.chunks_mut(o * lo).enumerate().for_each(run);
        }
        self.push(TensorT { shape: vec![bsz, o, lo], data }, Op::Conv1d { x, w, b, stride, pad })
    }

    /// Nearest-neighbor 2x upsample along the last axis of `x[bsz,c,l]`.
    pub fn upsample1d(&mut self, x: NodeId) -> NodeId {
        let (bsz, c, l) = dims3(self.shape(x));
        let xv = &self.nodes[x].value.data;
        let mut data = vec![T::ZERO; bsz * c * 2 * l];
        for (orow, xrow) in data.chunks_mut(2 * l).zip(xv.chunks(l)) {
            for i in 0..l {
                orow[2 * i] = xrow[i];
                orow[2 * i + 1] = xrow[i];
            }
        }
        self.push(TensorT { shape: vec![bsz, c, 2 * l], data }, Op::Upsample1d(x))
    }

    // ---- gather / scatter / shape ----

    /// `[b, c, n] -> [b, n, c]`.
    pub fn transpose_12(&mut self, x: NodeId) -> NodeId {
        let (bsz, c, n) = dims3(self.shape(x));
        let xv = &self.nodes[x].value.data;
        let mut data = vec![T::ZERO; xv.len()];
        for bi in 0..bsz {
            for ci in 0..c {
                for ni in 0..n {
                    data[(bi * n + ni) * c + ci] = xv[(bi * c + ci) * n + ni];
                }
            }
        }
        self.push(TensorT { shape: vec![bsz, n, c], data }, Op::Transpose12(x))
    }

    pub fn gather_rows(&mut self, table: NodeId, idx: &[usize]) -> NodeId {
        let d = self.nodes[table].value.last_dim();
        let v = self.nodes[table].value.rows();
        let tv = &self.nodes[table].value.data;
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            assert!(i < v, "gather_rows index {} out of {} rows", i, v);
            data.extend_from_slice(&tv[i * d..(i + 1) * d]);
        }
        self.push(
            TensorT { shape: vec![idx.len(), d], data },
            Op::GatherRows { table, idx: idx.to_vec() },
        )
    }

    /// Scatter rows of `src[n,d]` into a zero tensor of `rows_out` rows at
    /// the given row positions (duplicates accumulate).
    pub fn place_rows(&mut self, src: NodeId, positions: &[usize], rows_out: usize) -> NodeId {
        let d = self.nodes[src].value.last_dim();
        assert_eq!(self.nodes[src].value.rows(), positions.len(), "place_rows count mismatch");
        let sv = &self.nodes[src].value.data;
        let mut data = vec![T::ZERO; rows_out * d];
        for (i, &p) in positions.iter().enumerate() {
            assert!(p < rows_out, "place_rows position out of range");
            for q in 0..d {
                data[p * d + q] += sv[i * d + q];
            }
        }
        self.push(
            TensorT { shape: vec![rows_out, d], data },
            Op::PlaceRows { src, positions: positions.to_vec() },
        )
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let d = self.nodes[parts[0]].value.last_dim();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            assert_eq!(self.nodes[p].value.last_dim(), d, "concat_rows trailing dim mismatch");
            rows += self.nodes[p].value.rows();
            data.extend_from_slice(&self.nodes[p].value.data);
        }
        self.push(TensorT { shape: vec![rows, d], data }, Op::ConcatRows(parts.to_vec()))
    }

    /// Slice `len` rows starting at `start` along axis 0.
    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let shape = self.shape(x).to_vec();
        let cols: usize = shape[1..].iter().product();
        assert!(start + len <= shape[0], "slice_rows out of range");
        let data = self.nodes[x].value.data[start * cols..(start + len) * cols].to_vec();
        let mut oshape = shape.clone();
        oshape[0] = len;
        self.push(TensorT { shape: oshape, data }, Op::SliceRows { x, start })
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> NodeId {
        let n: usize = shape.iter().product();
        assert_eq!(n, self.nodes[x].value.len(), "reshape element count mismatch");
        let data = self.nodes[x].value.data.clone();
        self.push(TensorT { shape: shape.to_vec(), data }, Op::Reshape(x))
    }

    /// FiLM: `x[bsz,c,l] * (1 + scale[bsz,c]) + shift[bsz,c]`.
    pub fn film(&mut self, x: NodeId, scale: NodeId, shift: NodeId) -> NodeId {
        let (bsz, c, l) = dims3(self.shape(x));
        assert_eq!(self.nodes[scale].value.len(), bsz * c, "film scale mismatch");
        assert_eq!(self.nodes[shift].value.len(), bsz * c, "film shift mismatch");
        let xv = &self.nodes[x].value.data;
        let sv = &self.nodes[scale].value.data;
        let tv = &self.nodes[shift].value.data;
        let mut data = vec![T::ZERO; xv.len()];
        for bc in 0..bsz * c {
            let s = T::ONE + sv[bc];
            let t = tv[bc];
            for i in 0..l {
                data[bc * l + i] = xv[bc * l + i] * s + t;
            }
        }
        let shape = self.shape(x).to_vec();
        self.push(TensorT { shape, data }, Op::Film { x, scale, shift })
    }

    // ---- backward ----

    /// Reverse sweep from a scalar loss. Gradients for every reachable node
    /// are stored on the graph; parameter leaves are harvested separately.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), NnError> {
        let lv = &self.nodes[loss].value;
        if !lv.is_scalar() {
            return Err(NnError::NonScalarLoss(lv.shape.clone()));
        }
        if !lv.item().is_finite() {
            return Err(NnError::NonFinite("loss".into()));
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss] = Some(TensorT::scalar(T::ONE));

        for id in (0..=loss).rev() {
            let g = match self.grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            self.accumulate_parents(id, &g);
            self.grads[id] = Some(g);
        }
        Ok(())
    }

    fn add_grad(&mut self, id: NodeId, g: TensorT<T>) {
        match &mut self.grads[id] {
            Some(acc) => {
                for (a, b) in acc.data.iter_mut().zip(&g.data) {
                    *a += *b;
                }
            }
            None => self.grads[id] = Some(g),
        }
    }

    #[allow(clippy::too_many_lines)]
    fn accumulate_parents(&mut self, id: NodeId, g: &TensorT<T>) {
        let op = self.nodes[id].op.clone();
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.add_grad(a, g.clone());
                self.add_grad(b, g.clone());
            }
            Op::Sub(a, b) => {
                self.add_grad(a, g.clone());
                self.add_grad(b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let ga = mul_tensors(g, &self.nodes[b].value);
                let gb = mul_tensors(g, &self.nodes[a].value);
                self.add_grad(a, ga);
                self.add_grad(b, gb);
            }
            Op::Scale(x, c) => self.add_grad(x, g.map(|v| v * c)),
            Op::AddBias(x, b) => {
                let d = self.nodes[b].value.len();
                let mut gb = TensorT::zeros(&[d]);
                for row in g.data.chunks(d) {
                    for (o, &v) in gb.data.iter_mut().zip(row) {
                        *o += v;
                    }
                }
                self.add_grad(x, g.clone());
                self.add_grad(b, gb);
            }
            Op::Relu(x) => {
                let mut gx = g.clone();
                for (o, &v) in gx.data.iter_mut().zip(&self.nodes[x].value.data) {
                    if v <= T::ZERO {
                        *o = T::ZERO;
                    }
                }
                self.add_grad(x, gx);
            }
            Op::Silu(x) => {
                let mut gx = g.clone();
                for (o, &v) in gx.data.iter_mut().zip(&self.nodes[x].value.data) {
                    let s = sigmoid_s(v);
                    *o = *o * (s + v * s * (T::ONE - s));
                }
                self.add_grad(x, gx);
            }
            Op::Sigmoid(x) => {
                let mut gx = g.clone();
                for (o, &y) in gx.data.iter_mut().zip(&self.nodes[id].value.data) {
                    *o = *o * y * (T::ONE - y);
                }
                self.add_grad(x, gx);
            }
            Op::SoftmaxRows(x) => {
                let d = self.nodes[id].value.last_dim();
                let y = &self.nodes[id].value.data;
                let mut gx = vec![T::ZERO; y.len()];
                for ((gxrow, yrow), grow) in gx.chunks_mut(d).zip(y.chunks(d)).zip(g.data.chunks(d)) {
                    let mut dot = T::ZERO;
                    for i in 0..d {
                        dot += grow[i] * yrow[i];
                    }
                    for i in 0..d {
                        gxrow[i] = yrow[i] * (grow[i] - dot);
                    }
                }
                let shape = self.nodes[x].value.shape.clone();
                self.add_grad(x, TensorT { shape, data: gx });
            }
            Op::LayerNorm { x, gamma, beta, eps } => {
                let d = self.nodes[x].value.last_dim();
                let dn = T::from_f64(d as f64);
                let xv = self.nodes[x].value.data.clone();
                let gm = self.nodes[gamma].value.data.clone();
                let mut gx = vec![T::ZERO; xv.len()];
                let mut gg = vec![T::ZERO; d];
                let mut gb = vec![T::ZERO; d];
                for ((gxrow, xrow), grow) in
                    gx.chunks_mut(d).zip(xv.chunks(d)).zip(g.data.chunks(d))
                {
                    let mut mean = T::ZERO;
                    for &v in xrow {
                        mean += v;
                    }
                    mean = mean / dn;
                    let mut var = T::ZERO;
                    for &v in xrow {
                        var += (v - mean) * (v - mean);
                    }
                    var = var / dn;
                    let inv = T::ONE / (var + eps).sqrt();
                    // xhat = (x - mean) * inv; dxhat = g * gamma
                    let mut sum_dxhat = T::ZERO;
                    let mut sum_dxhat_xhat = T::ZERO;
                    for i in 0..d {
                        let xhat = (xrow[i] - mean) * inv;
                        let dxhat = grow[i] * gm[i];
                        sum_dxhat += dxhat;
                        sum_dxhat_xhat += dxhat * xhat;
                        gg[i] += grow[i] * xhat;
                        gb[i] += grow[i];
                    }
                    for i in 0..d {
                        let xhat = (xrow[i] - mean) * inv;
                        let dxhat = grow[i] * gm[i];
                        gxrow[i] = inv * (dxhat - sum_dxhat / dn - xhat * sum_dxhat_xhat / dn);
                    }
                }
                let shape = self.nodes[x].value.shape.clone();
                self.add_grad(x, TensorT { shape, data: gx });
                self.add_grad(gamma, TensorT { shape: vec![d], data: gg });
                self.add_grad(beta, TensorT { shape: vec![d], data: gb });
            }
            Op::Matmul(a, b) => {
                let k = self.nodes[a].value.last_dim();
                let n = self.nodes[b].value.shape[1];
                let m = self.nodes[a].value.rows();
                let av = &self.nodes[a].value.data;
                let bv = &self.nodes[b].value.data;
                // dA = g @ B^T
                let mut ga = vec![T::ZERO; m * k];
                ga.chunks_mut(k).enumerate().for_each(|(i, garow)| {
                    let grow = &g.data[i * n..(i + 1) * n];
                    for p in 0..k {
                        let brow = &bv[p * n..(p + 1) * n];
                        let mut s = T::ZERO;
                        for j in 0..n {
                            s += grow[j] * brow[j];
                        }
                        garow[p] = s;
                    }
                });
                // dB[p, :] = sum_i A[i, p] * g[i, :]
                let mut gb = vec![T::ZERO; k * n];
                if k * n >= PAR_THRESHOLD {
                    gb.par_chunks_mut(n).enumerate().for_each(|(p, gbrow)| {
                        for i in 0..m {
                            let c = av[i * k + p];
                            let grow = &g.data[i * n..(i + 1) * n];
                            for j in 0..n {
                                gbrow[j] += c * grow[j];
                            }
                        }
                    });
                } else {
                    for (p, gbrow) in gb.chunks_mut(n).enumerate() {
                        for i in 0..m {
                            let c = av[i * k + p];
                            let grow = &g.data[i * n..(i + 1) * n];
                            for j in 0..n {
                                gbrow[j] += c * grow[j];
                            }
                        }
                    }
                }
                let ashape = self.nodes[a].value.shape.clone();
                self.add_grad(a, TensorT { shape: ashape, data: ga });
                self.add_grad(b, TensorT { shape: vec![k, n], data: gb });
            }
            Op::BmmNt(a, b) => {
                let (bsz, m, d) = dims3(&self.nodes[a].value.shape);
                let n = self.nodes[b].value.shape[1];
                let av = &self.nodes[a].value.data;
                let bv = &self.nodes[b].value.data;
                let mut ga = vec![T::ZERO; bsz * m * d];
                let mut gb = vec![T::ZERO; bsz * n * d];
                for bi in 0..bsz {
                    let gblk = &g.data[bi * m * n..(bi + 1) * m * n];
                    let ab = &av[bi * m * d..(bi + 1) * m * d];
                    let bb = &bv[bi * n * d..(bi + 1) * n * d];
                    let gab = &mut ga[bi * m * d..(bi + 1) * m * d];
                    for i in 0..m {
                        for j in 0..n {
                            let c = gblk[i * n + j];
                            for p in 0..d {
                                gab[i * d + p] += c * bb[j * d + p];
                            }
                        }
                    }
                    let gbb = &mut gb[bi * n * d..(bi + 1) * n * d];
                    for i in 0..m {
                        for j in 0..n {
                            let c = gblk[i * n + j];
                            for p in 0..d {
                                gbb[j * d + p] += c * ab[i * d + p];
                            }
                        }
                    }
                }
                let ashape = self.nodes[a].value.shape.clone();
                let bshape = self.nodes[b].value.shape.clone();
                self.add_grad(a, TensorT { shape: ashape, data: ga });
                self.add_grad(b, TensorT { shape: bshape, data: gb });
            }
            Op::Bmm(a, b) => {
                let (bsz, m, n) = dims3(&self.nodes[a].value.shape);
                let d = self.nodes[b].value.shape[2];
                let av = &self.nodes[a].value.data;
                let bv = &self.nodes[b].value.data;
                let mut ga = vec![T::ZERO; bsz * m * n];
                let mut gb = vec![T::ZERO; bsz * n * d];
                for bi in 0..bsz {
                    let gblk = &g.data[bi * m * d..(bi + 1) * m * d];
                    let ab = &av[bi * m * n..(bi + 1) * m * n];
                    let bb = &bv[bi * n * d..(bi + 1) * n * d];
                    let gab = &mut ga[bi * m * n..(bi + 1) * m * n];
                    for i in 0..m {
                        for j in 0..n {
                            let brow = &bb[j * d..(j + 1) * d];
                            let grow = &gblk[i * d..(i + 1) * d];
                            let mut s = T::ZERO;
                            for q in 0..d {
                                s += grow[q] * brow[q];
                            }
                            gab[i * n + j] = s;
                        }
                    }
                    let gbb = &mut gb[bi * n * d..(bi + 1) * n * d];
                    for i in 0..m {
                        for j in 0..n {
                            let c = ab[i * n + j];
                            let grow = &gblk[i * d..(i + 1) * d];
                            for q in 0..d {
                                gbb[j * d + q] += c * grow[q];
                            }
                        }
                    }
                }
                let ashape = self.nodes[a].value.shape.clone();
                let bshape = self.nodes[b].value.shape.clone();
                self.add_grad(a, TensorT { shape: ashape, data: ga });
                self.add_grad(b, TensorT { shape: bshape, data: gb });
            }
            Op::Conv2d { x, w, b, stride, pad } => {
                let xs = self.nodes[x].value.shape.clone();
                let ws = self.nodes[w].value.shape.clone();
                let (bsz, c, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
                let (o, _, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
                let ho = (h + 2 * pad - kh) / stride + 1;
                let wo = (wd + 2 * pad - kw) / stride + 1;
                let xv = &self.nodes[x].value.data;
                let wv = &self.nodes[w].value.data;
                let mut gx = vec![T::ZERO; xv.len()];
                // input gradients: each batch element independent
                let gx_run = |(bi, gxb): (usize, &mut [T])| {
                    let gob = &g.data[bi * o * ho * wo..(bi + 1) * o * ho * wo];
                    for oc in 0..o {
                        let wk = &wv[oc * c * kh * kw..(oc + 1) * c * kh * kw];
                        for oy in 0..ho {
                            for ox in 0..wo {
                                let go = gob[oc * ho * wo + oy * wo + ox];
                                for ic in 0..c {
                                    for ky in 0..kh {
                                        let iy = (oy * stride + ky) as isize - pad as isize;
                                        if iy < 0 || iy >= h as isize {
                                            continue;
                                        }
                                        for kx in 0..kw {
                                            let ix = (ox * stride + kx) as isize - pad as isize;
                                            if ix < 0 || ix >= wd as isize {
                                                continue;
                                            }
                                            let xi = ic * h * wd + iy as usize * wd + ix as usize;
                                            gxb[xi] += go * wk[ic * kh * kw + ky * kw + kx];
                                        }
                                    }
                                }
                            }
                        }
                    }
                };
                if bsz > 1 {
                    gx.par_chunks_mut(c * h * wd).enumerate().for_each(gx_run);
                } else {
                    gx.chunks_mut(c * h * wd).enumerate().for_each(gx_run);
                }
                // weight/bias gradients: each output channel independent,
                // batch summed in fixed order
                let mut gw = vec![T::ZERO; wv.len()];
                let mut gb = vec![T::ZERO; o];
                gw.par_chunks_mut(c * kh * kw)
                    .zip(gb.par_iter_mut())
                    .enumerate()
                    .for_each(|(oc, (gwk, gbo))| {
                        for bi in 0..bsz {
                            let xb = &xv[bi * c * h * wd..(bi + 1) * c * h * wd];
                            let gob = &g.data[bi * o * ho * wo..(bi + 1) * o * ho * wo];
                            for oy in 0..ho {
                                for ox in 0..wo {
                                    let go = gob[oc * ho * wo + oy * wo + ox];
                                    *gbo += go;
                                    for ic in 0..c {
                                        for ky in 0..kh {
                                            let iy = (oy * stride + ky) as isize - pad as isize;
                                            if iy < 0 || iy >= h as isize {
                                                continue;
                                            }
                                            for kx in 0..kw {
                                                let ix =
                                                    (ox * stride + kx) as isize - pad as isize;
                                                if ix < 0 || ix >= wd as isize {
                                                    continue;
                                                }
                                                let xi = ic * h * wd
                                                    + iy as usize * wd
                                                    + ix as usize;
                                                gwk[ic * kh * kw + ky * kw + kx] += go * xb[xi];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    });
                self.add_grad(x, TensorT { shape: xs, data: gx });
                self.add_grad(w, TensorT { shape: ws, data: gw });
                self.add_grad(b, TensorT { shape: vec![o], data: gb });
            }
            Op::Conv1d { x, w, b, stride, pad } => {
                let xs = self.nodes[x].value.shape.clone();
                let ws = self.nodes[w].value.shape.clone();
                let (bsz, c, l) = (xs[0], xs[1], xs[2]);
                let (o, _, k) = (ws[0], ws[1], ws[2]);
                let lo = (l + 2 * pad - k) / stride + 1;
                let xv = &self.nodes[x].value.data;
                let wv = &self.nodes[w].value.data;
                let mut gx = vec![T::ZERO; xv.len()];
                let mut gw = vec![T::ZERO; wv.len()];
                let mut gb = vec![T::ZERO; o];
                for bi in 0..bsz {
                    let xb = &xv[bi * c * l..(bi + 1) * c * l];
                    let gxb = &mut gx[bi * c * l..(bi + 1) * c * l];
                    let gob = &g.data[bi * o * lo..(bi + 1) * o * lo];
                    for oc in 0..o {
                        let wk = &wv[oc * c * k..(oc + 1) * c * k];
                        for op in 0..lo {
                            let go = gob[oc * lo + op];
                            gb[oc] += go;
                            for ic in 0..c {
                                for kk in 0..k {
                                    let ip = (op * stride + kk) as isize - pad as isize;
                                    if ip < 0 || ip >= l as isize {
                                        continue;
                                    }
                                    let xi = ic * l + ip as usize;
                                    gxb[xi] += go * wk[ic * k + kk];
                                    gw[oc * c * k + ic * k + kk] += go * xb[xi];
                                }
                            }
                        }
                    }
                }
                self.add_grad(x, TensorT { shape: xs, data: gx });
                self.add_grad(w, TensorT { shape: ws, data: gw });
                self.add_grad(b, TensorT { shape: vec![o], data: gb });
            }
            Op::Upsample1d(x) => {
                let (bsz, c, l2) = dims3(&self.nodes[id].value.shape);
                let l = l2 / 2;
                let mut gx = vec![T::ZERO; bsz * c * l];
                for (gxrow, grow) in gx.chunks_mut(l).zip(g.data.chunks(l2)) {
                    for i in 0..l {
                        gxrow[i] = grow[2 * i] + grow[2 * i + 1];
                    }
                }
                let shape = self.nodes[x].value.shape.clone();
                self.add_grad(x, TensorT { shape, data: gx });
            }
            Op::Transpose12(x) => {
                let (bsz, n, c) = dims3(&self.nodes[id].value.shape);
                let mut gx = vec![T::ZERO; g.data.len()];
                for bi in 0..bsz {
                    for ci in 0..c {
                        for ni in 0..n {
                            gx[(bi * c + ci) * n + ni] = g.data[(bi * n + ni) * c + ci];
                        }
                    }
                }
                let shape = self.nodes[x].value.shape.clone();
                self.add_grad(x, TensorT { shape, data: gx });
            }
            Op::GatherRows { table, idx } => {
                let d = self.nodes[table].value.last_dim();
                let mut gt = TensorT::zeros(&self.nodes[table].value.shape);
                for (i, &row) in idx.iter().enumerate() {
                    for q in 0..d {
                        gt.data[row * d + q] += g.data[i * d + q];
                    }
                }
                self.add_grad(table, gt);
            }
            Op::PlaceRows { src, positions } => {
                let d = self.nodes[src].value.last_dim();
                let mut gs = TensorT::zeros(&self.nodes[src].value.shape);
                for (i, &p) in positions.iter().enumerate() {
                    for q in 0..d {
                        gs.data[i * d + q] = g.data[p * d + q];
                    }
                }
                self.add_grad(src, gs);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let n = self.nodes[p].value.len();
                    let shape = self.nodes[p].value.shape.clone();
                    let data = g.data[offset..offset + n].to_vec();
                    offset += n;
                    self.add_grad(p, TensorT { shape, data });
                }
            }
            Op::SliceRows { x, start } => {
                let shape = self.nodes[x].value.shape.clone();
                let cols: usize = shape[1..].iter().product();
                let mut gx = TensorT::zeros(&shape);
                gx.data[start * cols..start * cols + g.data.len()].copy_from_slice(&g.data);
                self.add_grad(x, gx);
            }
            Op::Reshape(x) => {
                let shape = self.nodes[x].value.shape.clone();
                self.add_grad(x, TensorT { shape, data: g.data.clone() });
            }
            Op::MeanAll(x) => {
                let n = self.nodes[x].value.len();
                let c = g.item() / T::from_f64(n as f64);
                self.add_grad(x, TensorT::full(&self.nodes[x].value.shape, c));
            }
            Op::SumAll(x) => {
                let c = g.item();
                self.add_grad(x, TensorT::full(&self.nodes[x].value.shape, c));
            }
            Op::MulRows { x, w } => {
                let b = self.nodes[x].value.shape[0];
                let chunk = self.nodes[x].value.len() / b;
                let xv = &self.nodes[x].value.data;
                let wv = &self.nodes[w].value.data;
                let mut gx = vec![T::ZERO; xv.len()];
                let mut gw = vec![T::ZERO; b];
                for i in 0..b {
                    for q in 0..chunk {
                        gx[i * chunk + q] = g.data[i * chunk + q] * wv[i];
                        gw[i] += g.data[i * chunk + q] * xv[i * chunk + q];
                    }
                }
                let shape = self.nodes[x].value.shape.clone();
                self.add_grad(x, TensorT { shape, data: gx });
                let wshape = self.nodes[w].value.shape.clone();
                self.add_grad(w, TensorT { shape: wshape, data: gw });
            }
            Op::Film { x, scale, shift } => {
                let (bsz, c, l) = dims3(&self.nodes[x].value.shape);
                let xv = &self.nodes[x].value.data;
                let sv = &self.nodes[scale].value.data;
                let mut gx = vec![T::ZERO; xv.len()];
                let mut gs = vec![T::ZERO; bsz * c];
                let mut gt = vec![T::ZERO; bsz * c];
                for bc in 0..bsz * c {
                    let s = T::ONE + sv[bc];
                    for i in 0..l {
                        let go = g.data[bc * l + i];
                        gx[bc * l + i] = go * s;
                        gs[bc] += go * xv[bc * l + i];
                        gt[bc] += go;
                    }
                }
                let xshape = self.nodes[x].value.shape.clone();
                self.add_grad(x, TensorT { shape: xshape, data: gx });
                let sshape = self.nodes[scale].value.shape.clone();
                self.add_grad(scale, TensorT { shape: sshape.clone(), data: gs });
                self.add_grad(shift, TensorT { shape: sshape, data: gt });
            }
            Op::CrossEntropy { logits, targets } => {
                let c = self.nodes[logits].value.last_dim();
                let rows = targets.len();
                let lv = &self.nodes[logits].value.data;
                let gl = g.item() / T::from_f64(rows as f64);
                let mut gx = vec![T::ZERO; lv.len()];
                for (i, row) in lv.chunks(c).enumerate() {
                    let m = row.iter().fold(row[0], |a, &b| a.max_s(b));
                    let mut z = T::ZERO;
                    for &v in row {
                        z += (v - m).exp();
                    }
                    for j in 0..c {
                        let p = (row[j] - m).exp() / z;
                        let onehot = if j == targets[i] { T::ONE } else { T::ZERO };
                        gx[i * c + j] = gl * (p - onehot);
                    }
                }
                let shape = self.nodes[logits].value.shape.clone();
                self.add_grad(logits, TensorT { shape, data: gx });
            }
        }
    }
}

fn sigmoid_s<T: Scalar>(v: T) -> T {
    T::ONE / (T::ONE + (-v).exp())
}

fn mul_tensors<T: Scalar>(a: &TensorT<T>, b: &TensorT<T>) -> TensorT<T> {
    let data = a.data.iter().zip(&b.data).map(|(&x, &y)| x * y).collect();
    TensorT { shape: a.shape.clone(), data }
}

fn dims3(shape: &[usize]) -> (usize, usize, usize) {
    assert_eq!(shape.len(), 3, "expected 3-d tensor, got {:?}", shape);
    (shape[0], shape[1], shape[2])
}

/// `a[m,k] @ b[k,n]` in axpy order; rows parallelize when large.
fn matmul_raw<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::ZERO; m * n];
    let row_job = |(i, orow): (usize, &mut [T])| {
        let arow = &a[i * k..(i + 1) * k];
        for p in 0..k {
            let c = arow[p];
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] += c * brow[j];
            }
        }
    };
    if m * n >= PAR_THRESHOLD {
        out.par_chunks_mut(n).enumerate().for_each(row_job);
    } else {
        out.chunks_mut(n).enumerate().for_each(row_job);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type G64 = GraphT<f64>;

    fn randt(rng: &mut ChaCha8Rng, shape: &[usize]) -> TensorT<f64> {
        let n: usize = shape.iter().product();
        TensorT::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    /// Central finite differences against the analytic gradient for an
    /// arbitrary graph builder. Checks every coordinate of every input.
    fn gradcheck(inputs: &[TensorT<f64>], build: impl Fn(&mut G64, &[NodeId]) -> NodeId) {
        let mut g = G64::new();
        let ids: Vec<_> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
        let loss = build(&mut g, &ids);
        g.backward(loss).unwrap();
        let analytic: Vec<_> = ids.iter().map(|&i| g.grad(i)).collect();

        let h = 1e-3;
        for (ii, input) in inputs.iter().enumerate() {
            for j in 0..input.len() {
                let eval = |delta: f64| {
                    let mut g = G64::new();
                    let ids: Vec<_> = inputs
                        .iter()
                        .enumerate()
                        .map(|(q, t)| {
                            let mut t = t.clone();
                            if q == ii {
                                t.data[j] += delta;
                            }
                            g.leaf(t)
                        })
                        .collect();
                    let loss = build(&mut g, &ids);
                    g.value(loss).item()
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let an = analytic[ii].data[j];
                let denom = an.abs().max(fd.abs()).max(1e-4);
                let rel = (an - fd).abs() / denom;
                assert!(
                    rel <= 1e-4,
                    "input {} coord {}: analytic {} vs fd {} (rel {})",
                    ii,
                    j,
                    an,
                    fd,
                    rel
                );
            }
        }
    }

    #[test]
    fn grad_sum_is_ones() {
        let mut g = G64::new();
        let p = g.leaf(TensorT::new(vec![3], vec![1.0, 2.0, 3.0]));
        let loss = g.sum_all(p);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(p).data, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn grad_quadratic() {
        let mut g = G64::new();
        let p = g.leaf(TensorT::new(vec![2], vec![2.0, -1.0]));
        let sq = g.mul(p, p);
        let loss = g.sum_all(sq);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(p).data, vec![4.0, -2.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = G64::new();
        let p = g.leaf(TensorT::new(vec![2], vec![1.0, 2.0]));
        assert!(matches!(g.backward(p), Err(NnError::NonScalarLoss(_))));
    }

    #[test]
    fn backward_rejects_non_finite_loss() {
        let mut g = G64::new();
        let p = g.leaf(TensorT::scalar(f64::NAN));
        assert!(matches!(g.backward(p), Err(NnError::NonFinite(_))));
    }

    #[test]
    fn gradcheck_matmul_bias_relu() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = randt(&mut rng, &[4, 5]);
        let w = randt(&mut rng, &[5, 3]);
        let b = randt(&mut rng, &[3]);
        gradcheck(&[x, w, b], |g, ids| {
            let h = g.matmul(ids[0], ids[1]);
            let h = g.add_bias(h, ids[2]);
            let h = g.relu(h);
            g.mean_all(h)
        });
    }

    #[test]
    fn gradcheck_silu_sigmoid_mulrows() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = randt(&mut rng, &[3, 4]);
        let w = randt(&mut rng, &[3]);
        gradcheck(&[x, w], |g, ids| {
            let h = g.silu(ids[0]);
            let h = g.sigmoid(h);
            let h = g.mul_rows(h, ids[1]);
            g.sum_all(h)
        });
    }

    #[test]
    fn gradcheck_softmax_layernorm() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = randt(&mut rng, &[3, 6]);
        let gamma = randt(&mut rng, &[6]);
        let beta = randt(&mut rng, &[6]);
        let probe = randt(&mut rng, &[3, 6]);
        gradcheck(&[x, gamma, beta, probe], |g, ids| {
            let h = g.layer_norm(ids[0], ids[1], ids[2], 1e-5);
            let h = g.softmax_rows(h);
            let h = g.mul(h, ids[3]);
            g.sum_all(h)
        });
    }

    #[test]
    fn gradcheck_conv2d() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = randt(&mut rng, &[2, 3, 5, 5]);
        let w = randt(&mut rng, &[4, 3, 3, 3]);
        let b = randt(&mut rng, &[4]);
        gradcheck(&[x, w, b], |g, ids| {
            let h = g.conv2d(ids[0], ids[1], ids[2], 1, 1);
            let h = g.relu(h);
            g.mean_all(h)
        });
        // strided
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = randt(&mut rng, &[1, 2, 6, 6]);
        let w = randt(&mut rng, &[3, 2, 3, 3]);
        let b = randt(&mut rng, &[3]);
        gradcheck(&[x, w, b], |g, ids| {
            let h = g.conv2d(ids[0], ids[1], ids[2], 2, 1);
            g.mean_all(h)
        });
    }

    #[test]
    fn gradcheck_conv1d_upsample() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = randt(&mut rng, &[2, 3, 8]);
        let w = randt(&mut rng, &[4, 3, 3]);
        let b = randt(&mut rng, &[4]);
        gradcheck(&[x, w, b], |g, ids| {
            let h = g.conv1d(ids[0], ids[1], ids[2], 2, 1);
            let h = g.upsample1d(h);
            g.mean_all(h)
        });
    }

    #[test]
    fn gradcheck_attention_core() {
        // softmax(q k^T / sqrt(d)) v with batched matmuls.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let q = randt(&mut rng, &[2, 3, 4]);
        let k = randt(&mut rng, &[2, 5, 4]);
        let v = randt(&mut rng, &[2, 5, 4]);
        gradcheck(&[q, k, v], |g, ids| {
            let scores = g.bmm_nt(ids[0], ids[1]);
            let scores = g.scale(scores, 0.5);
            let attn = g.softmax_rows(scores);
            let out = g.bmm(attn, ids[2]);
            g.mean_all(out)
        });
    }

    #[test]
    fn gradcheck_gather_place_concat_slice() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let table = randt(&mut rng, &[6, 4]);
        let extra = randt(&mut rng, &[2, 4]);
        gradcheck(&[table, extra], |g, ids| {
            let got = g.gather_rows(ids[0], &[1, 1, 4]);
            let placed = g.place_rows(got, &[0, 2, 2], 4);
            let cat = g.concat_rows(&[placed, ids[1]]);
            let sl = g.slice_rows(cat, 1, 3);
            let sq = g.mul(sl, sl);
            g.sum_all(sq)
        });
    }

    #[test]
    fn gradcheck_film_reshape() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = randt(&mut rng, &[2, 3, 4]);
        let s = randt(&mut rng, &[2, 3]);
        let t = randt(&mut rng, &[2, 3]);
        gradcheck(&[x, s, t], |g, ids| {
            let h = g.film(ids[0], ids[1], ids[2]);
            let h = g.reshape(h, &[2, 12]);
            let h = g.silu(h);
            g.mean_all(h)
        });
    }

    #[test]
    fn gradcheck_transpose12() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = randt(&mut rng, &[2, 3, 4]);
        let probe = randt(&mut rng, &[2, 4, 3]);
        gradcheck(&[x, probe], |g, ids| {
            let t = g.transpose_12(ids[0]);
            let m = g.mul(t, ids[1]);
            g.sum_all(m)
        });
    }

    #[test]
    fn gradcheck_cross_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let logits = randt(&mut rng, &[4, 5]);
        gradcheck(&[logits], |g, ids| g.cross_entropy(ids[0], &[0, 2, 4, 1]));
    }

    #[test]
    fn gradcheck_two_layer_mlp_many_points() {
        // Random 2-layer MLPs at several random points.
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let x = randt(&mut rng, &[2, 4]);
            let w1 = randt(&mut rng, &[4, 6]);
            let b1 = randt(&mut rng, &[6]);
            let w2 = randt(&mut rng, &[6, 2]);
            let b2 = randt(&mut rng, &[2]);
            gradcheck(&[x, w1, b1, w2, b2], |g, ids| {
                let h = g.matmul(ids[0], ids[1]);
                let h = g.add_bias(h, ids[2]);
                let h = g.silu(h);
                let h = g.matmul(h, ids[3]);
                let h = g.add_bias(h, ids[4]);
                let sq = g.mul(h, h);
                g.mean_all(sq)
            });
        }
    }

    #[test]
    fn forward_deterministic() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            let mut g = GraphT::<f32>::new();
            let x = g.leaf(randt(&mut rng, &[3, 4]).cast::<f32>());
            let w = g.leaf(randt(&mut rng, &[4, 4]).cast::<f32>());
            let h = g.matmul(x, w);
            let h = g.softmax_rows(h);
            g.value(h).data.clone()
        };
        assert_eq!(run(), run());
    }
}
