//! Brute-force reference implementations used by the integration tests.
//! Kept deliberately naive: no shared code paths with the library beyond
//! plain data types.

#![allow(dead_code)]

use std::collections::BTreeSet;

use pla_core::association::{CaptionRecord, CaptionSource, EntityKind, Level, PointCaptionPair};
use pla_core::geometry::PointCloud;
use pla_core::index_set::PointIndexSet;
use pla_core::model::{CaptionWeights, ModelConfig, TrainingScene};
use pla_core::text::{CategoryList, EmbeddingTable};
use pla_core::linalg::Matrix;
use pla_core::model::{evaluate_objective, ModelParams, ObjectiveWeights, PreparedScene};
use rand::Rng;

/// `world_from_camera · (d(u−cx)/fx, d(v−cy)/fy, d, 1)` by explicit loops.
pub fn hand_back_project(m: &[[f64; 4]; 4], k: [f64; 4], u: f64, v: f64, d: f64) -> [f64; 3] {
    let cam = [d * (u - k[2]) / k[0], d * (v - k[3]) / k[1], d, 1.0];
    let mut out = [0.0; 4];
    for r in 0..4 {
        for c in 0..4 {
            out[r] += m[r][c] * cam[c];
        }
    }
    [out[0], out[1], out[2]]
}

fn center(p: [f64; 3], vs: f64) -> [f64; 3] {
    p.map(|x| ((x / vs).floor() + 0.5) * vs)
}

/// All-pairs voxel-center distance check.
pub fn brute_overlap(scene: &[[f64; 3]], back_projected: &[[f64; 3]], vs: f64, r: f64) -> Vec<u32> {
    let reach = r * (1.0 + 1e-9);
    let bp: Vec<[f64; 3]> = back_projected.iter().map(|&p| center(p, vs)).collect();
    let mut out = Vec::new();
    for (i, &p) in scene.iter().enumerate() {
        let c = center(p, vs);
        let hit = bp.iter().any(|q| {
            let d2: f64 = (0..3).map(|k| (c[k] - q[k]) * (c[k] - q[k])).sum();
            d2 <= reach * reach
        });
        if hit {
            out.push(i as u32);
        }
    }
    out
}

/// Direct evaluation of the three entity candidates and the size filter.
pub fn brute_entity(
    pi: &BTreeSet<u32>,
    pj: &BTreeSet<u32>,
    wi: &BTreeSet<String>,
    wj: &BTreeSet<String>,
    gamma: usize,
    delta: f64,
) -> Vec<(EntityKind, Vec<u32>, String)> {
    let join = |w: BTreeSet<String>| w.into_iter().collect::<Vec<_>>().join(" ");
    let candidates = [
        (EntityKind::FirstOnly, pi.difference(pj).copied().collect::<Vec<_>>(), join(wi.difference(wj).cloned().collect())),
        (EntityKind::SecondOnly, pj.difference(pi).copied().collect(), join(wj.difference(wi).cloned().collect())),
        (EntityKind::Shared, pi.intersection(pj).copied().collect(), join(wi.intersection(wj).cloned().collect())),
    ];
    let bound = delta * pi.len().min(pj.len()) as f64;
    candidates
        .into_iter()
        .filter(|(_, p, w)| gamma < p.len() && (p.len() as f64) < bound && !w.is_empty())
        .collect()
}

pub fn pair_summary(pairs: &[PointCaptionPair]) -> Vec<(Level, Vec<u32>, String)> {
    pairs.iter().map(|p| (p.level(), p.points.indices().to_vec(), p.caption.text.clone())).collect()
}

pub fn random_unit(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// `-(1/n) Σ log softmax(row_i)[target_i]` with plain exp/log.
pub fn scalar_cross_entropy(logits: &[Vec<f64>], targets: &[usize]) -> f64 {
    let mut total = 0.0;
    for (row, &t) in logits.iter().zip(targets) {
        let z: f64 = row.iter().map(|x| x.exp()).sum();
        total -= (row[t].exp() / z).ln();
    }
    total / logits.len() as f64
}

/// Largest relative deviation between analytic and central-difference
/// gradients over every parameter entry. The denominator is floored at
/// `floor` so that entries with near-zero gradient are compared absolutely.
pub fn max_gradient_error(
    params: &ModelParams,
    scene: &PreparedScene,
    objective: &ObjectiveWeights,
    score_temperature: f64,
    h: f64,
    floor: f64,
) -> (f64, String) {
    let analytic = evaluate_objective(params, scene, objective, score_temperature).unwrap().gradients;
    let mut worst = (0.0, String::new());
    let names: Vec<&str> = params.tensors().iter().map(|(n, _)| *n).collect();
    for (t, name) in names.iter().enumerate() {
        let len = params.tensors()[t].1.as_slice().len();
        for e in 0..len {
            let eval_at = |delta: f64| {
                let mut p = params.clone();
                p.tensors_mut()[t].1.as_mut_slice()[e] += delta;
                evaluate_objective(&p, scene, objective, score_temperature).unwrap().total
            };
            let numeric = (eval_at(h) - eval_at(-h)) / (2.0 * h);
            let a = analytic[t].as_slice()[e];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            if rel > worst.0 {
                worst = (rel, format!("{name}[{e}] analytic {a:e} numeric {numeric:e}"));
            }
        }
    }
    worst
}

pub fn matrix_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.iter_rows().map(|r| r.to_vec()).collect()
}

/// A small random training instance with several pairs on every level.
pub struct GradientInstance {
    pub params: ModelParams,
    pub scene: PreparedScene,
    pub score_temperature: f64,
}

pub fn gradient_instance(rng: &mut impl Rng) -> GradientInstance {
    let n = rng.random_range(6..=20);
    let names = ["floor", "chair", "table", "sofa"];
    let categories =
        CategoryList::new(names.iter().map(|s| s.to_string()).collect(), vec![true, true, false, false]).unwrap();
    let dim = 5;
    let mut table = EmbeddingTable::new(dim).unwrap();
    for name in names {
        table.insert(name, random_unit(rng, dim).iter().map(|&x| x as f32).collect()).unwrap();
    }
    let positions = (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()]).collect();
    let colors = (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()]).collect();
    let labels = (0..n).map(|_| rng.random_range(-1..4)).collect();
    let cloud = PointCloud::new("g", positions, colors, labels, names.len()).unwrap();

    let mut pairs = Vec::new();
    for (level, count) in [(Level::Scene, 2), (Level::View, 3), (Level::Entity, 3)] {
        for c in 0..count {
            let k = rng.random_range(1..=n);
            let idx: Vec<u32> = rand::seq::index::sample(rng, n, k).into_iter().map(|i| i as u32).collect();
            let text = format!("{} caption {c}", level.as_str());
            table.insert(text.clone(), random_unit(rng, dim).iter().map(|&x| x as f32).collect()).unwrap();
            let source = match level {
                Level::Scene => CaptionSource::Scene,
                Level::View => CaptionSource::View { frame: format!("f{c}") },
                Level::Entity => CaptionSource::Entity {
                    first: "f0".into(),
                    second: "f1".into(),
                    kind: EntityKind::Shared,
                },
            };
            pairs.push(PointCaptionPair {
                points: PointIndexSet::from_unsorted("g", idx),
                caption: CaptionRecord { scene_id: "g".into(), source, text },
            });
        }
    }
    let config = ModelConfig {
        encoder_hidden: 4,
        feature_dim: 4,
        adapter_hidden: 4,
        encoder_voxel_size: 0.4,
        tau_init: rng.random_range(0.05..0.5),
        ..ModelConfig::default()
    };
    let mut params = ModelParams::init(&config, dim, rng.random()).unwrap();
    // nonzero biases and gains so every path carries gradient
    for (name, m) in params.tensors_mut() {
        if name.contains(".b") || name.contains("ln_") {
            for v in m.as_mut_slice() {
                *v += rng.random::<f64>() * 0.4 - 0.2;
            }
        }
    }
    let training = TrainingScene { cloud, pairs };
    let scene = PreparedScene::new(&training, &categories, &table, None, config.encoder_voxel_size).unwrap();
    GradientInstance { params, scene, score_temperature: rng.random_range(0.05..0.5) }
}

/// One objective per loss term, then all together.
pub fn gradient_objectives() -> Vec<(&'static str, ObjectiveWeights)> {
    let none = CaptionWeights::NONE;
    let only = |scene, view, entity| ObjectiveWeights { semantic: 0.0, binary: 0.0, caption: CaptionWeights { scene, view, entity } };
    vec![
        ("semantic", ObjectiveWeights { semantic: 1.0, binary: 0.0, caption: none }),
        ("binary", ObjectiveWeights { semantic: 0.0, binary: 1.0, caption: none }),
        ("caption_scene", only(1.0, 0.0, 0.0)),
        ("caption_view", only(0.0, 1.0, 0.0)),
        ("caption_entity", only(0.0, 0.0, 1.0)),
        ("total", ObjectiveWeights { semantic: 1.0, binary: 1.0, caption: CaptionWeights { scene: 0.3, view: 0.5, entity: 0.7 } }),
    ]
}
