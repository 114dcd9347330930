//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! Values are computed eagerly as nodes are added; [`Graph::backward`] then
//! walks the tape in reverse and accumulates adjoints. The op set is exactly
//! what the encoder, adapter, heads and losses need.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    MatMulTransposed(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    MulRow(NodeId, NodeId),
    Add(NodeId, NodeId),
    Scale(NodeId, f64),
    MulScalar(NodeId, NodeId),
    Exp(NodeId),
    Relu(NodeId),
    LayerNorm { input: NodeId, inv_std: Vec<f64> },
    NormalizeRows { input: NodeId, norms: Vec<f64> },
    ConcatCols(NodeId, NodeId),
    GroupMean { input: NodeId, groups: Vec<u32>, counts: Vec<u32> },
    SegmentMean { input: NodeId, segments: Vec<Vec<u32>> },
    SoftmaxXent { logits: NodeId, targets: Vec<Option<usize>>, probs: Matrix, count: usize },
    BceLogits { logits: NodeId, targets: Vec<Option<f64>>, count: usize },
}

impl Op {
    fn inputs(&self) -> [Option<NodeId>; 2] {
        match self {
            Op::Leaf => [None, None],
            Op::MatMul(a, b)
            | Op::MatMulTransposed(a, b)
            | Op::AddRow(a, b)
            | Op::MulRow(a, b)
            | Op::Add(a, b)
            | Op::MulScalar(a, b)
            | Op::ConcatCols(a, b) => [Some(*a), Some(*b)],
            Op::Scale(a, _) | Op::Exp(a) | Op::Relu(a) => [Some(*a), None],
            Op::LayerNorm { input, .. }
            | Op::NormalizeRows { input, .. }
            | Op::GroupMean { input, .. }
            | Op::SegmentMean { input, .. } => [Some(*input), None],
            Op::SoftmaxXent { logits, .. } | Op::BceLogits { logits, .. } => [Some(*logits), None],
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    /// Some trainable leaf lies upstream.
    needs_grad: bool,
}

/// Lower bound on row norms in [`Graph::normalize_rows`].
pub const NORM_FLOOR: f64 = 1e-12;
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Adjoint of leaf `id`; `None` when it does not influence the output.
    /// Interior adjoints are consumed during the sweep.
    pub fn get(&self, id: NodeId) -> Option<&Matrix> {
        self.grads[id.0].as_ref()
    }

    pub fn take(&mut self, id: NodeId) -> Option<Matrix> {
        self.grads[id.0].take()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Matrix, op: Op) -> NodeId {
        let needs_grad = op.inputs().iter().flatten().any(|i| self.nodes[i.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable input; its adjoint is kept by [`Graph::backward`].
    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: true });
        NodeId(self.nodes.len() - 1)
    }

    /// Input that receives no adjoint.
    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: false });
        NodeId(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_transposed(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul_transposed(self.value(b));
        self.push(v, Op::MatMulTransposed(a, b))
    }

    /// Adds the `1 × m` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let b = self.value(bias);
        assert_eq!((1, self.value(a).cols()), b.shape(), "add_row shape");
        let mut v = self.value(a).clone();
        let cols = v.cols();
        for (i, x) in v.as_mut_slice().iter_mut().enumerate() {
            *x += b.as_slice()[i % cols];
        }
        self.push(v, Op::AddRow(a, bias))
    }

    /// Multiplies every row of `a` elementwise by the `1 × m` row `gain`.
    pub fn mul_row(&mut self, a: NodeId, gain: NodeId) -> NodeId {
        let g = self.value(gain);
        assert_eq!((1, self.value(a).cols()), g.shape(), "mul_row shape");
        let mut v = self.value(a).clone();
        let cols = v.cols();
        for (i, x) in v.as_mut_slice().iter_mut().enumerate() {
            *x *= g.as_slice()[i % cols];
        }
        self.push(v, Op::MulRow(a, gain))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(v, Op::Add(a, b))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).map(|x| x * c);
        self.push(v, Op::Scale(a, c))
    }

    /// `a * s` for a `1 × 1` node `s`.
    pub fn mul_scalar(&mut self, a: NodeId, s: NodeId) -> NodeId {
        let sv = self.value(s).item();
        let v = self.value(a).map(|x| x * sv);
        self.push(v, Op::MulScalar(a, s))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(libm::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(v, Op::Relu(a))
    }

    /// Per-row standardization (no affine part).
    pub fn layer_norm(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let (rows, cols) = x.shape();
        let mut v = Matrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / libm::sqrt(var + LAYER_NORM_EPS);
            for (o, t) in v.row_mut(r).iter_mut().zip(row) {
                *o = (t - mean) * inv;
            }
            inv_std.push(inv);
        }
        self.push(v, Op::LayerNorm { input: a, inv_std })
    }

    /// Scales each row to unit L2 norm.
    pub fn normalize_rows(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let mut v = x.clone();
        let mut norms = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            let n = libm::sqrt(x.row(r).iter().map(|t| t * t).sum::<f64>()).max(NORM_FLOOR);
            v.row_mut(r).iter_mut().for_each(|t| *t /= n);
            norms.push(n);
        }
        self.push(v, Op::NormalizeRows { input: a, norms })
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.rows(), vb.rows(), "concat_cols rows");
        let mut data = Vec::with_capacity(va.rows() * (va.cols() + vb.cols()));
        for r in 0..va.rows() {
            data.extend_from_slice(va.row(r));
            data.extend_from_slice(vb.row(r));
        }
        let v = Matrix::from_vec(va.rows(), va.cols() + vb.cols(), data).expect("concat shape");
        self.push(v, Op::ConcatCols(a, b))
    }

    /// Replaces each row by the mean of all rows sharing its group id.
    pub fn group_mean(&mut self, a: NodeId, groups: Vec<u32>, num_groups: usize) -> NodeId {
        let x = self.value(a);
        assert_eq!(groups.len(), x.rows(), "group_mean ids");
        let cols = x.cols();
        let mut sums = Matrix::zeros(num_groups, cols);
        let mut counts = vec![0u32; num_groups];
        for (r, &g) in groups.iter().enumerate() {
            counts[g as usize] += 1;
            for (s, t) in sums.row_mut(g as usize).iter_mut().zip(x.row(r)) {
                *s += t;
            }
        }
        let mut v = Matrix::zeros(x.rows(), cols);
        for (r, &g) in groups.iter().enumerate() {
            let c = counts[g as usize] as f64;
            for (o, s) in v.row_mut(r).iter_mut().zip(sums.row(g as usize)) {
                *o = s / c;
            }
        }
        self.push(v, Op::GroupMean { input: a, groups, counts })
    }

    /// One output row per segment: the mean of the listed input rows.
    pub fn segment_mean(&mut self, a: NodeId, segments: Vec<Vec<u32>>) -> NodeId {
        let x = self.value(a);
        let cols = x.cols();
        let mut v = Matrix::zeros(segments.len(), cols);
        for (s, members) in segments.iter().enumerate() {
            assert!(!members.is_empty(), "segment_mean over an empty segment");
            let out = v.row_mut(s);
            for &m in members {
                for (o, t) in out.iter_mut().zip(x.row(m as usize)) {
                    *o += t;
                }
            }
            let inv = 1.0 / members.len() as f64;
            out.iter_mut().for_each(|o| *o *= inv);
        }
        self.push(v, Op::SegmentMean { input: a, segments })
    }

    /// Mean over non-ignored rows of `-log softmax(logits_i)[target_i]`; 0 if all ignored.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, targets: Vec<Option<usize>>) -> NodeId {
        let x = self.value(logits);
        assert_eq!(targets.len(), x.rows(), "softmax_cross_entropy targets");
        let probs = softmax_rows(x);
        let mut total = 0.0;
        let mut count = 0;
        for (r, t) in targets.iter().enumerate() {
            if let Some(t) = *t {
                let row = x.row(r);
                total += log_sum_exp(row) - row[t];
                count += 1;
            }
        }
        let loss = if count == 0 { 0.0 } else { total / count as f64 };
        self.push(Matrix::scalar(loss), Op::SoftmaxXent { logits, targets, probs, count })
    }

    /// Mean stable binary cross-entropy with logits over non-ignored entries
    /// of an `n × 1` column; 0 if all ignored.
    pub fn bce_with_logits(&mut self, logits: NodeId, targets: Vec<Option<f64>>) -> NodeId {
        let x = self.value(logits);
        assert_eq!(x.cols(), 1, "bce_with_logits expects a column");
        assert_eq!(targets.len(), x.rows(), "bce_with_logits targets");
        let mut total = 0.0;
        let mut count = 0;
        for (r, t) in targets.iter().enumerate() {
            if let Some(y) = *t {
                let z = x.as_slice()[r];
                total += z.max(0.0) - z * y + libm::log1p(libm::exp(-libm::fabs(z)));
                count += 1;
            }
        }
        let loss = if count == 0 { 0.0 } else { total / count as f64 };
        self.push(Matrix::scalar(loss), Op::BceLogits { logits, targets, count })
    }

    /// Adjoints of every node with respect to the scalar node `output`.
    pub fn backward(&self, output: NodeId) -> Gradients {
        assert_eq!(self.value(output).shape(), (1, 1), "backward from a non-scalar");
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            // leaf adjoints stay in place for the caller; interior ones are consumed
            if matches!(node.op, Op::Leaf) || !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g.matmul_transposed(vb));
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, va.transposed_matmul(&g));
                    }
                }
                Op::MatMulTransposed(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g.matmul(vb));
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, g.transposed_matmul(va));
                    }
                }
                Op::AddRow(a, bias) => {
                    if self.needs(*bias) {
                        accumulate(&mut grads, *bias, column_sums(&g));
                    }
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::MulRow(a, gain) => {
                    let (va, vg) = (self.value(*a), self.value(*gain));
                    let cols = va.cols();
                    let mut dg = Matrix::zeros(1, cols);
                    let mut da = g.clone();
                    for (i, (d, x)) in da.as_mut_slice().iter_mut().zip(va.as_slice()).enumerate() {
                        dg.as_mut_slice()[i % cols] += *d * x;
                        *d *= vg.as_slice()[i % cols];
                    }
                    accumulate(&mut grads, *gain, dg);
                    accumulate(&mut grads, *a, da);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::Scale(a, c) => accumulate(&mut grads, *a, g.map(|d| d * c)),
                Op::MulScalar(a, s) => {
                    let va = self.value(*a);
                    let sv = self.value(*s).item();
                    let ds: f64 = g.as_slice().iter().zip(va.as_slice()).map(|(d, x)| d * x).sum();
                    accumulate(&mut grads, *s, Matrix::scalar(ds));
                    accumulate(&mut grads, *a, g.map(|d| d * sv));
                }
                Op::Exp(a) => {
                    let mut da = g;
                    for (d, y) in da.as_mut_slice().iter_mut().zip(node.value.as_slice()) {
                        *d *= y;
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::Relu(a) => {
                    let mut da = g;
                    for (d, x) in da.as_mut_slice().iter_mut().zip(self.value(*a).as_slice()) {
                        if *x <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::LayerNorm { input, inv_std } => {
                    let y = &node.value;
                    let cols = y.cols() as f64;
                    let mut dx = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let (gr, yr) = (g.row(r), y.row(r));
                        let mean_g = gr.iter().sum::<f64>() / cols;
                        let mean_gy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / cols;
                        for ((o, gi), yi) in dx.row_mut(r).iter_mut().zip(gr).zip(yr) {
                            *o = inv_std[r] * (gi - mean_g - yi * mean_gy);
                        }
                    }
                    accumulate(&mut grads, *input, dx);
                }
                Op::NormalizeRows { input, norms } => {
                    let y = &node.value;
                    let mut dx = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let (gr, yr) = (g.row(r), y.row(r));
                        let proj: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for ((o, gi), yi) in dx.row_mut(r).iter_mut().zip(gr).zip(yr) {
                            *o = (gi - yi * proj) / norms[r];
                        }
                    }
                    accumulate(&mut grads, *input, dx);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(*a).cols();
                    let cb = self.value(*b).cols();
                    let mut da = Matrix::zeros(g.rows(), ca);
                    let mut db = Matrix::zeros(g.rows(), cb);
                    for r in 0..g.rows() {
                        da.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                        db.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                    }
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::GroupMean { input, groups, counts } => {
                    let cols = g.cols();
                    let mut sums = Matrix::zeros(counts.len(), cols);
                    for (r, &grp) in groups.iter().enumerate() {
                        for (s, d) in sums.row_mut(grp as usize).iter_mut().zip(g.row(r)) {
                            *s += d;
                        }
                    }
                    let mut dx = Matrix::zeros(g.rows(), cols);
                    for (r, &grp) in groups.iter().enumerate() {
                        let c = counts[grp as usize] as f64;
                        for (o, s) in dx.row_mut(r).iter_mut().zip(sums.row(grp as usize)) {
                            *o = s / c;
                        }
                    }
                    accumulate(&mut grads, *input, dx);
                }
                Op::SegmentMean { input, segments } => {
                    let x = self.value(*input);
                    let mut dx = Matrix::zeros(x.rows(), x.cols());
                    for (s, members) in segments.iter().enumerate() {
                        let inv = 1.0 / members.len() as f64;
                        for &m in members {
                            for (o, d) in dx.row_mut(m as usize).iter_mut().zip(g.row(s)) {
                                *o += d * inv;
                            }
                        }
                    }
                    accumulate(&mut grads, *input, dx);
                }
                Op::SoftmaxXent { logits, targets, probs, count } => {
                    let mut dx = Matrix::zeros(probs.rows(), probs.cols());
                    if *count > 0 {
                        let scale = g.item() / *count as f64;
                        for (r, t) in targets.iter().enumerate() {
                            if let Some(t) = *t {
                                for (o, p) in dx.row_mut(r).iter_mut().zip(probs.row(r)) {
                                    *o = p * scale;
                                }
                                dx[(r, t)] -= scale;
                            }
                        }
                    }
                    accumulate(&mut grads, *logits, dx);
                }
                Op::BceLogits { logits, targets, count } => {
                    let x = self.value(*logits);
                    let mut dx = Matrix::zeros(x.rows(), 1);
                    if *count > 0 {
                        let scale = g.item() / *count as f64;
                        for (r, t) in targets.iter().enumerate() {
                            if let Some(y) = *t {
                                dx.as_mut_slice()[r] = (sigmoid(x.as_slice()[r]) - y) * scale;
                            }
                        }
                    }
                    accumulate(&mut grads, *logits, dx);
                }
            }
        }
        Gradients { grads }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], id: NodeId, g: Matrix) {
    match &mut grads[id.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn column_sums(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(1, m.cols());
    for row in m.iter_rows() {
        for (o, v) in out.as_mut_slice().iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

pub fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + libm::log(row.iter().map(|v| libm::exp(v - max)).sum::<f64>())
}

/// Row-wise softmax.
pub fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for r in 0..x.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = libm::exp(*v - max);
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}
