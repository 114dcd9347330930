//! The subcommands as library calls. Each reads what it needs from a
//! [`RunConfig`] and writes its artifacts under the configured paths.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use pla_core::association::{CaptionSource, PointCaptionPair};
use pla_core::eval::{report, ConfusionMatrix, MetricReport};
use pla_core::geometry::PointCloud;
use pla_core::model::{predict, train, ModelParams, TrainingScene};
use pla_core::text::{category_matrix, CategoryList, EmbeddingTable};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::formats::checkpoint::{self, Checkpoint};
use crate::formats::report::{loss_trace_csv, AssociationStats, ReportFile};
use crate::formats::{captions, categories, embeddings, frame, pairs, scene, sniff_magic, write_bytes};

/// Resolves the named optional paths, reporting every missing one at once.
fn require<const N: usize>(items: [(&str, &Option<PathBuf>); N]) -> Result<[PathBuf; N]> {
    let missing: Vec<&str> = items.iter().filter(|(_, p)| p.is_none()).map(|(n, _)| *n).collect();
    if !missing.is_empty() {
        return Err(Error::MissingInput(format!("no path configured for: {}", missing.join(", "))));
    }
    Ok(items.map(|(_, p)| p.clone().unwrap()))
}

pub fn pairs_stem(cfg: &RunConfig) -> PathBuf {
    cfg.paths.pairs.clone().unwrap_or_else(|| cfg.paths.out.join("pairs"))
}

pub fn checkpoint_path(cfg: &RunConfig) -> PathBuf {
    cfg.paths.checkpoint.clone().unwrap_or_else(|| cfg.paths.out.join("model.plam"))
}

pub fn load_scenes(dir: &Path, categories: &CategoryList) -> Result<Vec<PointCloud>> {
    scene::list_scenes(dir)?.iter().map(|p| scene::load_scene(p, categories.len())).collect()
}

/// Checks every entity pair against the size filter using the view sets
/// of the same scene.
fn recheck_entity_bounds(cfg: &RunConfig, scene_pairs: &[PointCaptionPair], num_points: usize) -> Result<()> {
    let mut view_sizes = BTreeMap::new();
    for p in scene_pairs {
        p.points.check_bounds(num_points)?;
        if let CaptionSource::View { frame } = &p.caption.source {
            view_sizes.insert(frame.as_str(), p.points.len());
        }
    }
    let filter = &cfg.association.filter;
    for p in scene_pairs {
        if let CaptionSource::Entity { first, second, .. } = &p.caption.source {
            let size = |f: &str| view_sizes.get(f).copied().unwrap_or(0);
            let words = p.caption.text.split_whitespace().count();
            if !filter.accepts(p.points.len(), words, size(first), size(second)) {
                return Err(Error::Config(format!(
                    "entity pair `{}` ({first}/{second}, {} points) violates the size filter",
                    p.caption.text,
                    p.points.len()
                )));
            }
        }
    }
    Ok(())
}

/// Builds pairs for every scene and writes `<pairs>.jsonl`, `<pairs>.plap`
/// and `<out>/stats.json`.
pub fn associate(cfg: &RunConfig) -> Result<AssociationStats> {
    let p = &cfg.paths;
    let [scenes_dir, frames_dir, captions_path, lexicon_path, partition_path] = require([
        ("scenes", &p.scenes),
        ("frames", &p.frames),
        ("captions", &p.captions),
        ("lexicon", &p.lexicon),
        ("partition", &p.partition),
    ])?;
    let categories = categories::load_partition(&partition_path)?;
    let lexicon = categories::load_lexicon(&lexicon_path)?;
    let all_captions = captions::load_captions(&captions_path)?;
    let clouds = load_scenes(&scenes_dir, &categories)?;

    let mut all_pairs = Vec::new();
    let mut num_frames = 0;
    for cloud in &clouds {
        let frames = frame::load_scene_frames(&frames_dir, &cloud.scene_id)?;
        num_frames += frames.len();
        let scene_captions: Vec<_> = all_captions.iter().filter(|c| c.scene_id == cloud.scene_id).cloned().collect();
        let scene_pairs =
            pla_core::association::build_pairs(cloud, &frames, &scene_captions, &lexicon, &cfg.association)?;
        recheck_entity_bounds(cfg, &scene_pairs, cloud.len())?;
        log::info!("{}: {} frames, {} pairs", cloud.scene_id, frames.len(), scene_pairs.len());
        all_pairs.extend(scene_pairs);
    }
    let stats = AssociationStats::new(&all_pairs, clouds.len(), num_frames);
    pairs::save_pairs(&pairs_stem(cfg), &all_pairs)?;
    write_bytes(&p.out.join("stats.json"), stats.to_json().as_bytes())?;
    Ok(stats)
}

pub fn load_table(cfg: &RunConfig) -> Result<EmbeddingTable> {
    let [path] = require([("embeddings", &cfg.paths.embeddings)])?;
    embeddings::load_embeddings(&path)
}

/// Scenes paired with their pairs; pairs naming unknown scenes are skipped.
pub fn training_scenes(clouds: Vec<PointCloud>, all_pairs: Vec<PointCaptionPair>) -> Vec<TrainingScene> {
    let mut by_scene: BTreeMap<String, Vec<PointCaptionPair>> = BTreeMap::new();
    for p in all_pairs {
        by_scene.entry(p.points.scene_id().to_string()).or_default().push(p);
    }
    let out: Vec<TrainingScene> = clouds
        .into_iter()
        .map(|cloud| {
            let pairs = by_scene.remove(&cloud.scene_id).unwrap_or_default();
            TrainingScene { cloud, pairs }
        })
        .collect();
    for (id, p) in by_scene {
        log::warn!("skipping {} pairs for unknown scene `{id}`", p.len());
    }
    out
}

pub struct TrainSummary {
    pub checkpoint: Checkpoint,
    pub iterations: usize,
    pub final_loss: Option<f64>,
}

/// Trains on the configured scenes and pairs; writes the checkpoint and
/// `<out>/loss_trace.csv`.
pub fn train_model(cfg: &RunConfig) -> Result<TrainSummary> {
    let p = &cfg.paths;
    let [scenes_dir, partition_path, _] =
        require([("scenes", &p.scenes), ("partition", &p.partition), ("embeddings", &p.embeddings)])?;
    let categories = categories::load_partition(&partition_path)?;
    let table = load_table(cfg)?;
    let clouds = load_scenes(&scenes_dir, &categories)?;
    let plap = pairs_stem(cfg).with_extension("plap");
    if !plap.exists() {
        return Err(Error::MissingInput(format!("pairs file {} (run `associate` first)", plap.display())));
    }
    let scenes = training_scenes(clouds, pairs::load_pairs(&plap)?);

    let mut train_cfg = cfg.train.clone();
    train_cfg.fallback = cfg.fallback(table.dim());
    let outcome = train(&scenes, &categories, &table, &train_cfg)?;
    let ckpt = Checkpoint {
        params: outcome.params,
        categories,
        score_temperature: train_cfg.model.score_temperature,
    };
    checkpoint::save_checkpoint(&checkpoint_path(cfg), &ckpt)?;
    write_bytes(&p.out.join("loss_trace.csv"), loss_trace_csv(&outcome.trace).as_bytes())?;
    Ok(TrainSummary {
        checkpoint: ckpt,
        iterations: outcome.trace.len(),
        final_loss: outcome.trace.last().map(|r| r.total),
    })
}

/// Predicted labels per scene plus the merged confusion matrix.
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub predictions: Vec<Vec<usize>>,
    pub report: MetricReport,
}

pub fn evaluate_scenes(
    params: &ModelParams,
    clouds: &[PointCloud],
    categories: &CategoryList,
    table: &EmbeddingTable,
    fallback: Option<&pla_core::text::FallbackEmbedder>,
    score_temperature: f64,
    calibrated: bool,
) -> Result<Evaluation> {
    let rows = category_matrix(categories, table, true, fallback)?;
    let mut confusion = ConfusionMatrix::new(categories.len());
    let mut predictions = Vec::with_capacity(clouds.len());
    for cloud in clouds {
        let pred = predict(params, cloud, &rows.rows, categories.base_mask(), score_temperature, calibrated)?;
        confusion.accumulate(&pred.labels, &cloud.labels)?;
        predictions.push(pred.labels);
    }
    let report = report(&confusion, categories)?;
    Ok(Evaluation { confusion, predictions, report })
}

/// Scores the evaluation scenes with a checkpoint; writes
/// `<out>/report.json` and `<out>/report.txt`.
pub fn eval_model(cfg: &RunConfig, calibrated: bool) -> Result<ReportFile> {
    let p = &cfg.paths;
    let scenes_dir = p.eval_scenes.clone().or_else(|| p.scenes.clone());
    let [scenes_dir, partition_path] = require([("eval_scenes", &scenes_dir), ("partition", &p.partition)])?;
    let categories = categories::load_partition(&partition_path)?;
    let ckpt_path = checkpoint_path(cfg);
    if !ckpt_path.exists() {
        return Err(Error::MissingInput(format!("checkpoint {} (run `train` first)", ckpt_path.display())));
    }
    let ckpt = checkpoint::load_checkpoint(&ckpt_path)?;
    if ckpt.categories != categories {
        return Err(Error::Config(format!(
            "checkpoint categories {:?} do not match the partition file {}",
            ckpt.categories.names(),
            partition_path.display()
        )));
    }
    let table = load_table(cfg)?;
    let clouds = load_scenes(&scenes_dir, &categories)?;
    let fallback = cfg.fallback(table.dim());
    let ev = evaluate_scenes(
        &ckpt.params,
        &clouds,
        &categories,
        &table,
        fallback.as_ref(),
        ckpt.score_temperature,
        calibrated,
    )?;
    let file = ReportFile::new(&ev.report, &categories, calibrated, ev.confusion.total());
    write_bytes(&p.out.join("report.json"), file.to_json().as_bytes())?;
    write_bytes(&p.out.join("report.txt"), file.to_table().as_bytes())?;
    Ok(file)
}

/// Human-readable summary of any binary artifact.
pub fn inspect(path: &Path) -> Result<String> {
    let magic = sniff_magic(path)?;
    let bytes = crate::formats::read_bytes(path)?;
    let mut out = String::new();
    match &magic {
        m if m == scene::MAGIC => {
            let cloud = scene::decode_any(path, &bytes)?;
            let mut hist: BTreeMap<i32, usize> = BTreeMap::new();
            cloud.labels.iter().for_each(|&l| *hist.entry(l).or_default() += 1);
            out.push_str(&format!("scene {} ({} points)\n", cloud.scene_id, cloud.len()));
            for (label, n) in hist {
                out.push_str(&format!("  label {label:>3}: {n}\n"));
            }
        }
        m if m == embeddings::MAGIC => {
            let table = embeddings::decode(path, &bytes)?;
            out.push_str(&format!("embedding table: {} entries, dim {}\n", table.len(), table.dim()));
            for (key, v) in table.iter().take(10) {
                let norm = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
                out.push_str(&format!("  {key:?} |v| = {norm:.4}\n"));
            }
            if table.len() > 10 {
                out.push_str(&format!("  ... {} more\n", table.len() - 10));
            }
        }
        m if m == pairs::MAGIC => {
            let all = pairs::decode(path, &bytes)?;
            let stats = AssociationStats::new(&all, 0, 0);
            out.push_str(&format!("{} point-caption pairs\n", all.len()));
            for l in &stats.levels {
                out.push_str(&format!("  {:<6} {:>6} pairs, {:.1} points/caption\n", l.level, l.pairs, l.mean_points));
            }
        }
        m if m == checkpoint::MAGIC => {
            let blocks = checkpoint::decode_blocks(path, &bytes)?;
            out.push_str(&format!("checkpoint: {} blocks\n", blocks.len()));
            for b in blocks {
                let dims: Vec<String> = b.dims.iter().map(u32::to_string).collect();
                let preview = if b.data.len() <= 2 { format!(" = {:?}", b.data) } else { String::new() };
                out.push_str(&format!("  {:<28} [{}]{preview}\n", b.name, dims.join("x")));
            }
        }
        _ => {
            return Err(Error::Format {
                path: path.into(),
                offset: 0,
                reason: format!("unrecognized magic {:?}", String::from_utf8_lossy(&magic)),
            })
        }
    }
    Ok(out)
}
