use alloc::vec::Vec;

use super::params::{AdapterParams, BinaryHeadParams, EncoderParams, ModelParams, ENCODER_INPUT_DIM};
use super::ScoreField;
use crate::autodiff::{softmax_rows, Graph, NodeId};
use crate::error::{Error, Result};
use crate::geometry::{build_voxel_index, PointCloud};
use crate::linalg::Matrix;

/// Leaf ids of every parameter bound into a graph, in `ModelParams::tensors` order.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ParamNodes {
    pub ids: [NodeId; 13],
}

impl ParamNodes {
    pub fn bind(g: &mut Graph, params: &ModelParams) -> Self {
        let tensors = params.tensors();
        let ids = core::array::from_fn(|i| g.leaf(tensors[i].1.clone()));
        Self { ids }
    }

    pub fn log_temperature(&self) -> NodeId {
        self.ids[10]
    }
}

/// Per-point `(position, color)` rows plus encoder voxel group ids.
pub fn encoder_inputs(scene: &PointCloud, voxel_size: f64) -> Result<(Matrix, Vec<u32>, usize)> {
    let n = scene.len();
    let mut x = Matrix::zeros(n, ENCODER_INPUT_DIM);
    for i in 0..n {
        let row = x.row_mut(i);
        row[..3].copy_from_slice(&scene.positions[i]);
        row[3..].copy_from_slice(&scene.colors[i]);
    }
    let index = build_voxel_index(&scene.positions, voxel_size)?;
    let groups = index.assignments(n);
    Ok((x, groups, index.num_cells()))
}

pub(crate) fn encoder_forward(
    g: &mut Graph,
    inputs: NodeId,
    [w1, b1, w2, b2]: [NodeId; 4],
    groups: Vec<u32>,
    num_groups: usize,
) -> NodeId {
    let h = g.matmul(inputs, w1);
    let h = g.add_row(h, b1);
    let h = g.relu(h);
    let m = g.group_mean(h, groups, num_groups);
    let hm = g.concat_cols(h, m);
    let f = g.matmul(hm, w2);
    g.add_row(f, b2)
}

/// Unit-norm adapted features `f^v`.
pub(crate) fn adapter_forward(g: &mut Graph, features: NodeId, [w1, b1, gain, bias, w2, b2]: [NodeId; 6]) -> NodeId {
    let h = g.matmul(features, w1);
    let h = g.add_row(h, b1);
    let h = g.layer_norm(h);
    let h = g.mul_row(h, gain);
    let h = g.add_row(h, bias);
    let h = g.relu(h);
    let o = g.matmul(h, w2);
    let o = g.add_row(o, b2);
    g.normalize_rows(o)
}

pub(crate) fn binary_forward(g: &mut Graph, features: NodeId, [w, b]: [NodeId; 2]) -> NodeId {
    let z = g.matmul(features, w);
    g.add_row(z, b)
}

impl ParamNodes {
    pub fn encoder(&self) -> [NodeId; 4] {
        [self.ids[0], self.ids[1], self.ids[2], self.ids[3]]
    }

    pub fn adapter(&self) -> [NodeId; 6] {
        [self.ids[4], self.ids[5], self.ids[6], self.ids[7], self.ids[8], self.ids[9]]
    }

    pub fn binary(&self) -> [NodeId; 2] {
        [self.ids[11], self.ids[12]]
    }
}

/// Per-point features `f^p` of the toy encoder.
pub fn encode(scene: &PointCloud, params: &EncoderParams) -> Result<Matrix> {
    let (x, groups, num_groups) = encoder_inputs(scene, params.voxel_size)?;
    let mut g = Graph::new();
    let inputs = g.leaf(x);
    let ids = [
        g.leaf(params.w1.clone()),
        g.leaf(params.b1.clone()),
        g.leaf(params.w2.clone()),
        g.leaf(params.b2.clone()),
    ];
    let f = encoder_forward(&mut g, inputs, ids, groups, num_groups);
    Ok(g.value(f).clone())
}

fn adapted(features: &Matrix, adapter: &AdapterParams) -> Matrix {
    let mut g = Graph::new();
    let f = g.leaf(features.clone());
    let ids = [
        g.leaf(adapter.w1.clone()),
        g.leaf(adapter.b1.clone()),
        g.leaf(adapter.ln_gain.clone()),
        g.leaf(adapter.ln_bias.clone()),
        g.leaf(adapter.w2.clone()),
        g.leaf(adapter.b2.clone()),
    ];
    let out = adapter_forward(&mut g, f, ids);
    g.value(out).clone()
}

fn check_rows(adapter: &AdapterParams, category_rows: &Matrix) -> Result<()> {
    if category_rows.cols() != adapter.embed_dim() {
        return Err(Error::ShapeMismatch(alloc::format!(
            "category rows have width {}, adapter emits {}",
            category_rows.cols(),
            adapter.embed_dim()
        )));
    }
    if category_rows.rows() == 0 {
        return Err(Error::ShapeMismatch("no category rows".into()));
    }
    Ok(())
}

/// Softmax over `cos(f^v, row_k) / score_temperature` for every category row.
pub fn semantic_scores(
    features: &Matrix,
    adapter: &AdapterParams,
    category_rows: &Matrix,
    score_temperature: f64,
) -> Result<ScoreField> {
    let mask = alloc::vec![true; category_rows.rows()];
    masked_semantic_scores(features, adapter, category_rows, &mask, score_temperature)
}

/// Like [`semantic_scores`] but the softmax only spans columns with `mask`
/// set; the remaining columns are zero.
pub fn masked_semantic_scores(
    features: &Matrix,
    adapter: &AdapterParams,
    category_rows: &Matrix,
    mask: &[bool],
    score_temperature: f64,
) -> Result<ScoreField> {
    check_rows(adapter, category_rows)?;
    if mask.len() != category_rows.rows() || !mask.iter().any(|&m| m) {
        return Err(Error::ShapeMismatch("column mask must match the rows and select at least one".into()));
    }
    let fv = adapted(features, adapter);
    let active: Vec<usize> = (0..mask.len()).filter(|&k| mask[k]).collect();
    let rows = category_rows.select_rows(&active);
    let mut logits = fv.matmul_transposed(&rows);
    logits.scale_assign(1.0 / score_temperature);
    let sub = softmax_rows(&logits);
    let mut probs = Matrix::zeros(features.rows(), mask.len());
    for i in 0..features.rows() {
        for (j, &k) in active.iter().enumerate() {
            probs[(i, k)] = sub[(i, j)];
        }
    }
    ScoreField::new(probs)
}

/// Sigmoid of the binary head: probability that each point is novel.
pub fn binary_probabilities(features: &Matrix, head: &BinaryHeadParams) -> Vec<f64> {
    let b = head.b.item();
    features
        .matmul(&head.w)
        .as_slice()
        .iter()
        .map(|z| 1.0 / (1.0 + libm::exp(-(z + b))))
        .collect()
}

/// `s = s_B·(1 − s^b) + s_N·s^b` per point.
pub fn calibrate(base_only: &ScoreField, novel_only: &ScoreField, binary: &[f64]) -> Result<ScoreField> {
    let (sb, sn) = (base_only.probs(), novel_only.probs());
    if sb.shape() != sn.shape() || binary.len() != sb.rows() {
        return Err(Error::ShapeMismatch(alloc::format!(
            "calibrate: base {:?}, novel {:?}, binary {}",
            sb.shape(),
            sn.shape(),
            binary.len()
        )));
    }
    if let Some(i) = binary.iter().position(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidParameter {
            name: "binary",
            reason: alloc::format!("probability at point {i} outside [0, 1]"),
        });
    }
    let mut out = Matrix::zeros(sb.rows(), sb.cols());
    for i in 0..sb.rows() {
        let p = binary[i];
        for ((o, b), n) in out.row_mut(i).iter_mut().zip(sb.row(i)).zip(sn.row(i)) {
            *o = b * (1.0 - p) + n * p;
        }
    }
    ScoreField::new(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub scores: ScoreField,
    pub labels: Vec<usize>,
    pub novelty: Vec<f64>,
}

/// Open-vocabulary inference over every category row (category order).
/// With `calibrated`, base-only and novel-only softmaxes are mixed by the
/// binary head; otherwise one softmax spans all categories.
pub fn predict(
    params: &ModelParams,
    scene: &PointCloud,
    category_rows: &Matrix,
    base_mask: &[bool],
    score_temperature: f64,
    calibrated: bool,
) -> Result<Prediction> {
    let features = encode(scene, &params.encoder)?;
    let novelty = binary_probabilities(&features, &params.binary);
    let has_novel = base_mask.iter().any(|&b| !b);
    let scores = if calibrated && has_novel {
        let novel_mask: Vec<bool> = base_mask.iter().map(|b| !b).collect();
        let sb = masked_semantic_scores(&features, &params.adapter, category_rows, base_mask, score_temperature)?;
        let sn = masked_semantic_scores(&features, &params.adapter, category_rows, &novel_mask, score_temperature)?;
        calibrate(&sb, &sn, &novelty)?
    } else {
        semantic_scores(&features, &params.adapter, category_rows, score_temperature)?
    };
    let labels = scores.argmax();
    Ok(Prediction { scores, labels, novelty })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::ModelConfig;
    use alloc::vec;

    fn scene(n: usize) -> PointCloud {
        let positions = (0..n).map(|i| [i as f64 * 0.07, (i % 3) as f64 * 0.11, 0.3]).collect();
        let colors = (0..n).map(|i| [(i % 5) as f64 / 5.0, 0.5, 0.25]).collect();
        PointCloud::new("s", positions, colors, vec![0; n], 1).unwrap()
    }

    #[test]
    fn zero_weights_give_bias() {
        let mut p = ModelParams::init(&ModelConfig::default(), 8, 0).unwrap().encoder;
        p.w1 = Matrix::zeros(p.w1.rows(), p.w1.cols());
        p.w2 = Matrix::zeros(p.w2.rows(), p.w2.cols());
        p.b1 = Matrix::filled(1, p.b1.cols(), 0.3);
        let d = p.b2.cols();
        p.b2 = Matrix::from_vec(1, d, (0..d).map(|i| i as f64).collect()).unwrap();
        let f = encode(&scene(7), &p).unwrap();
        for r in f.iter_rows() {
            assert_eq!(r, p.b2.row(0));
        }
    }

    #[test]
    fn permutation_equivariance() {
        let params = ModelParams::init(&ModelConfig { encoder_voxel_size: 0.15, ..Default::default() }, 8, 5).unwrap();
        let s = scene(12);
        let perm: Vec<usize> = vec![3, 0, 11, 7, 1, 2, 10, 9, 4, 8, 6, 5];
        let permuted = PointCloud::new(
            "s",
            perm.iter().map(|&i| s.positions[i]).collect(),
            perm.iter().map(|&i| s.colors[i]).collect(),
            perm.iter().map(|&i| s.labels[i]).collect(),
            1,
        )
        .unwrap();
        let f = encode(&s, &params.encoder).unwrap();
        let fp = encode(&permuted, &params.encoder).unwrap();
        for (new, &old) in perm.iter().enumerate() {
            for (a, b) in fp.row(new).iter().zip(f.row(old)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_category_is_certain() {
        let params = ModelParams::init(&ModelConfig::default(), 4, 1).unwrap();
        let f = encode(&scene(5), &params.encoder).unwrap();
        let rows = Matrix::from_rows(&[vec![0.5, 0.5, 0.5, 0.5]]).unwrap();
        let s = semantic_scores(&f, &params.adapter, &rows, 0.01).unwrap();
        assert!(s.probs().as_slice().iter().all(|&p| p == 1.0));
    }

    #[test]
    fn calibrate_endpoints_and_mixture() {
        let sb = ScoreField::new(Matrix::from_rows(&[vec![0.8, 0.2, 0.0, 0.0]]).unwrap()).unwrap();
        let sn = ScoreField::new(Matrix::from_rows(&[vec![0.0, 0.0, 0.3, 0.7]]).unwrap()).unwrap();
        assert_eq!(calibrate(&sb, &sn, &[0.0]).unwrap(), sb);
        assert_eq!(calibrate(&sb, &sn, &[1.0]).unwrap(), sn);
        let mixed = calibrate(&sb, &sn, &[0.5]).unwrap();
        let want = [0.4, 0.1, 0.15, 0.35];
        for (a, b) in mixed.probs().row(0).iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(calibrate(&sb, &sn, &[0.5, 0.5]).is_err());
        assert!(calibrate(&sb, &sn, &[1.5]).is_err());
    }
}
