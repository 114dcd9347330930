use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::losses::{dedup_captions, CaptionWeights, LossComponents};
use super::network::{adapter_forward, binary_forward, encoder_forward, encoder_inputs, ParamNodes};
use super::optim::{cosine_learning_rate, AdamW};
use super::params::{ModelConfig, ModelParams};
use crate::association::{Level, PointCaptionPair};
use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::linalg::Matrix;
use crate::text::{category_matrix, embed_texts, CategoryList, EmbeddingTable, FallbackEmbedder};
use crate::IGNORED;

/// A labeled scene and its point–caption pairs. Labels are ground-truth
/// category indices; novel categories are hidden from the semantic loss
/// during preparation.
#[derive(Debug, Clone)]
pub struct TrainingScene {
    pub cloud: PointCloud,
    pub pairs: Vec<PointCaptionPair>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub weights: CaptionWeights,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Pairs drawn per level per step; 0 keeps every pair.
    pub max_pairs_per_level: usize,
    /// Embeds captions and category names missing from the table.
    pub fallback: Option<FallbackEmbedder>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            weights: CaptionWeights::default(),
            learning_rate: 0.004,
            weight_decay: 0.01,
            iterations: 200,
            seed: 0,
            max_pairs_per_level: 64,
            fallback: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.weights.validate()?;
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidParameter { name: "learning_rate", reason: "must be positive".into() });
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidParameter { name: "weight_decay", reason: "must be >= 0".into() });
        }
        Ok(())
    }
}

/// Which loss terms enter the differentiated objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveWeights {
    pub semantic: f64,
    pub binary: f64,
    pub caption: CaptionWeights,
}

impl From<CaptionWeights> for ObjectiveWeights {
    fn from(caption: CaptionWeights) -> Self {
        Self { semantic: 1.0, binary: 1.0, caption }
    }
}

#[derive(Debug, Clone)]
struct CaptionBatch {
    segments: Vec<Vec<u32>>,
    rows: Matrix,
}

/// Everything a training step needs for one scene, precomputed once.
#[derive(Debug, Clone)]
pub struct PreparedScene {
    pub scene_id: String,
    inputs: Matrix,
    groups: Vec<u32>,
    num_groups: usize,
    semantic_targets: Vec<Option<usize>>,
    binary_targets: Vec<Option<f64>>,
    base_rows: Matrix,
    captions: [CaptionBatch; 3],
}

impl PreparedScene {
    /// Duplicate caption texts within a level are dropped, keeping the first.
    pub fn new(
        scene: &TrainingScene,
        categories: &CategoryList,
        table: &EmbeddingTable,
        fallback: Option<&FallbackEmbedder>,
        encoder_voxel_size: f64,
    ) -> Result<Self> {
        let cloud = &scene.cloud;
        cloud.validate(categories.len())?;
        let (inputs, groups, num_groups) = encoder_inputs(cloud, encoder_voxel_size)?;

        let mut base_slot = alloc::vec![None; categories.len()];
        for (row, k) in categories.base_indices().into_iter().enumerate() {
            base_slot[k] = Some(row);
        }
        let semantic_targets = cloud.labels.iter().map(|&l| if l == IGNORED { None } else { base_slot[l as usize] }).collect();
        let binary_targets = cloud
            .labels
            .iter()
            .map(|&l| match l {
                IGNORED => None,
                l if categories.is_base(l as usize) => Some(0.0),
                _ => Some(1.0),
            })
            .collect();
        let base_rows = category_matrix(categories, table, false, fallback)?.rows;

        let mut captions: [CaptionBatch; 3] =
            core::array::from_fn(|_| CaptionBatch { segments: Vec::new(), rows: Matrix::zeros(0, table.dim()) });
        for (slot, level) in Level::ALL.into_iter().enumerate() {
            let pairs: Vec<&PointCaptionPair> = scene.pairs.iter().filter(|p| p.level() == level).collect();
            for p in &pairs {
                if p.points.scene_id() != cloud.scene_id {
                    return Err(Error::InvalidParameter {
                        name: "pairs",
                        reason: alloc::format!("pair from scene `{}` given with `{}`", p.points.scene_id(), cloud.scene_id),
                    });
                }
                p.points.check_bounds(cloud.len())?;
            }
            let texts: Vec<&str> = pairs.iter().map(|p| p.caption.text.as_str()).collect();
            let kept: Vec<usize> =
                dedup_captions(&texts).into_iter().filter(|&i| !pairs[i].points.is_empty()).collect();
            let kept_texts: Vec<&str> = kept.iter().map(|&i| texts[i]).collect();
            captions[slot] = CaptionBatch {
                segments: kept.iter().map(|&i| pairs[i].points.indices().to_vec()).collect(),
                rows: embed_texts(&kept_texts, table, fallback)?,
            };
        }

        Ok(Self {
            scene_id: cloud.scene_id.clone(),
            inputs,
            groups,
            num_groups,
            semantic_targets,
            binary_targets,
            base_rows,
            captions,
        })
    }

    pub fn num_points(&self) -> usize {
        self.inputs.rows()
    }

    /// Pair count per level, scene/view/entity.
    pub fn num_pairs(&self) -> [usize; 3] {
        core::array::from_fn(|i| self.captions[i].segments.len())
    }
}

/// Loss values and per-tensor gradients in `ModelParams::tensors` order.
#[derive(Debug, Clone)]
pub struct ObjectiveValue {
    pub components: LossComponents,
    pub total: f64,
    pub gradients: Vec<Matrix>,
}

fn caption_term(g: &mut Graph, fv: NodeId, log_tau: NodeId, batch: &CaptionBatch, select: &[usize]) -> Option<NodeId> {
    if select.is_empty() {
        return None;
    }
    let segments = select.iter().map(|&i| batch.segments[i].clone()).collect();
    let pooled = g.segment_mean(fv, segments);
    let pooled = g.normalize_rows(pooled);
    let text = g.constant(batch.rows.select_rows(select));
    let sims = g.matmul_transposed(pooled, text);
    let neg = g.scale(log_tau, -1.0);
    let inv_tau = g.exp(neg);
    let logits = g.mul_scalar(sims, inv_tau);
    Some(g.softmax_cross_entropy(logits, select.iter().enumerate().map(|(i, _)| Some(i)).collect()))
}

fn forward_backward(
    params: &ModelParams,
    scene: &PreparedScene,
    objective: &ObjectiveWeights,
    score_temperature: f64,
    selection: &[Vec<usize>; 3],
) -> Result<ObjectiveValue> {
    if scene.base_rows.cols() != params.adapter.embed_dim() {
        return Err(Error::DimensionMismatch {
            key: "embeddings".into(),
            expected: params.adapter.embed_dim(),
            found: scene.base_rows.cols(),
        });
    }
    let mut g = Graph::new();
    let nodes = ParamNodes::bind(&mut g, params);
    let x = g.constant(scene.inputs.clone());
    let f = encoder_forward(&mut g, x, nodes.encoder(), scene.groups.clone(), scene.num_groups);
    let fv = adapter_forward(&mut g, f, nodes.adapter());

    let rows = g.constant(scene.base_rows.clone());
    let cos = g.matmul_transposed(fv, rows);
    let logits = g.scale(cos, 1.0 / score_temperature);
    let sem = g.softmax_cross_entropy(logits, scene.semantic_targets.clone());

    let z = binary_forward(&mut g, f, nodes.binary());
    let bin = g.bce_with_logits(z, scene.binary_targets.clone());

    let caps: [Option<NodeId>; 3] =
        core::array::from_fn(|i| caption_term(&mut g, fv, nodes.log_temperature(), &scene.captions[i], &selection[i]));

    let mut total = g.scale(sem, objective.semantic);
    let weighted_bin = g.scale(bin, objective.binary);
    total = g.add(total, weighted_bin);
    for (c, w) in caps.iter().zip(objective.caption.as_array()) {
        if let Some(c) = *c {
            let term = g.scale(c, w);
            total = g.add(total, term);
        }
    }

    let value = |g: &Graph, n: Option<NodeId>| n.map_or(0.0, |n| g.value(n).item());
    let components = LossComponents {
        semantic: g.value(sem).item(),
        binary: g.value(bin).item(),
        caption_scene: value(&g, caps[0]),
        caption_view: value(&g, caps[1]),
        caption_entity: value(&g, caps[2]),
    };
    let total_value = g.value(total).item();
    let mut grads = g.backward(total);
    let tensors = params.tensors();
    let gradients = nodes
        .ids
        .iter()
        .zip(tensors.iter())
        .map(|(&id, (_, m))| grads.take(id).unwrap_or_else(|| Matrix::zeros(m.rows(), m.cols())))
        .collect();
    Ok(ObjectiveValue { components, total: total_value, gradients })
}

/// Objective over every prepared pair, with gradients.
pub fn evaluate_objective(
    params: &ModelParams,
    scene: &PreparedScene,
    objective: &ObjectiveWeights,
    score_temperature: f64,
) -> Result<ObjectiveValue> {
    let selection = core::array::from_fn(|i| (0..scene.captions[i].segments.len()).collect());
    forward_backward(params, scene, objective, score_temperature, &selection)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub scene_id: String,
    pub learning_rate: f64,
    pub temperature: f64,
    pub components: LossComponents,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub trace: Vec<LossRecord>,
}

fn check_finite(v: &ObjectiveValue, iteration: usize) -> Result<()> {
    for (component, x) in v.components.named() {
        if !x.is_finite() {
            return Err(Error::NonFiniteLoss { component, iteration });
        }
    }
    if !v.total.is_finite() {
        return Err(Error::NonFiniteLoss { component: "total", iteration });
    }
    if v.gradients.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteLoss { component: "gradient", iteration });
    }
    Ok(())
}

/// Seeded AdamW training with cosine decay, one scene per step.
pub fn train(
    scenes: &[TrainingScene],
    categories: &CategoryList,
    table: &EmbeddingTable,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut params = ModelParams::init(&config.model, table.dim(), config.seed)?;
    if config.iterations == 0 {
        return Ok(TrainOutcome { params, trace: Vec::new() });
    }
    if scenes.is_empty() {
        return Err(Error::InvalidParameter { name: "scenes", reason: "no training scenes".into() });
    }
    let fallback = config.fallback.as_ref();
    let mut prepared = scenes
        .iter()
        .map(|s| PreparedScene::new(s, categories, table, fallback, config.model.encoder_voxel_size))
        .collect::<Result<Vec<_>>>()?;
    prepared.sort_by(|a, b| a.scene_id.cmp(&b.scene_id));

    let objective = ObjectiveWeights::from(config.weights);
    let shapes: Vec<(usize, usize)> = params.tensors().iter().map(|(_, m)| m.shape()).collect();
    let decay: Vec<bool> = params.tensors().iter().map(|(n, _)| *n != "adapter.log_temperature").collect();
    let mut opt = AdamW::new(&shapes, config.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut cursor = order.len();
    let mut trace = Vec::with_capacity(config.iterations);

    for iteration in 0..config.iterations {
        if cursor == order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let scene = &prepared[order[cursor]];
        cursor += 1;

        let selection: [Vec<usize>; 3] = core::array::from_fn(|i| {
            let n = scene.captions[i].segments.len();
            if config.max_pairs_per_level == 0 || n <= config.max_pairs_per_level {
                (0..n).collect()
            } else {
                let mut pick = index::sample(&mut rng, n, config.max_pairs_per_level).into_vec();
                pick.sort_unstable();
                pick
            }
        });

        let value = forward_backward(&params, scene, &objective, config.model.score_temperature, &selection)?;
        check_finite(&value, iteration)?;
        let lr = cosine_learning_rate(config.learning_rate, iteration, config.iterations);
        {
            let mut tensors: Vec<&mut Matrix> = params.tensors_mut().into_iter().map(|(_, m)| m).collect();
            opt.update(&mut tensors, &value.gradients, &decay, lr);
        }
        params.adapter.clamp_temperature();
        log::debug!("iter {iteration} scene {} total {:.5}", scene.scene_id, value.total);
        trace.push(LossRecord {
            iteration,
            scene_id: scene.scene_id.clone(),
            learning_rate: lr,
            temperature: params.adapter.temperature(),
            components: value.components,
            total: value.total,
        });
    }
    params.validate()?;
    Ok(TrainOutcome { params, trace })
}
