#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use pla::config::RunConfig;
use pla::formats::{categories, report::LOSS_TRACE_HEADER};
use pla::pipeline;
use pla::synth::{self, DatasetSpec};
use pla::Error;
use pla_core::geometry::{CameraFrame, PointCloud};
use pla_core::model::ModelParams;
use pla_core::text::CategoryList;
use sha2::{Digest, Sha256};

/// The default fixture cut down to `train` training scenes and one
/// evaluation scene.
fn small_spec(train: usize, iterations: usize) -> DatasetSpec {
    let mut spec = DatasetSpec::default_fixture();
    let eval = spec.scenes.iter().find(|s| s.eval).cloned().unwrap();
    spec.scenes.retain(|s| !s.eval);
    spec.scenes.truncate(train);
    spec.scenes.push(eval);
    spec.iterations = iterations;
    spec
}

fn write(spec: &DatasetSpec, dir: &Path) -> RunConfig {
    synth::write_dataset(spec, dir).unwrap();
    RunConfig::load(&dir.join("pla.cfg")).unwrap()
}

fn with_out(cfg: &RunConfig, out: PathBuf) -> RunConfig {
    let mut cfg = cfg.clone();
    cfg.paths.pairs = Some(out.join("pairs"));
    cfg.paths.checkpoint = Some(out.join("model.plam"));
    cfg.paths.out = out;
    cfg
}

fn sha(path: &Path) -> String {
    let bytes = std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    format!("{:x}", Sha256::digest(bytes))
}

fn hand_overlap(cloud: &PointCloud, frame: &CameraFrame, vs: f64) -> BTreeSet<u32> {
    let k = &frame.intrinsics;
    let mut lifted = Vec::new();
    let mut seen = BTreeSet::new();
    for v in 0..frame.height {
        for u in 0..frame.width {
            let d = frame.depth[v * frame.width + u];
            if d > 0.0 {
                let p = common::hand_back_project(&frame.world_from_camera.m, [k.fx, k.fy, k.cx, k.cy], u as f64, v as f64, d);
                // one representative per voxel keeps the all-pairs check affordable
                let key = p.map(|x| (x / vs).floor() as i64);
                if seen.insert(key) {
                    lifted.push(p);
                }
            }
        }
    }
    common::brute_overlap(&cloud.positions, &lifted, vs, vs).into_iter().collect()
}

#[test]
fn association_counts_match_enumeration() {
    let spec = DatasetSpec::default_fixture();
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&spec, dir.path());
    let stats = pipeline::associate(&cfg).unwrap();

    let names: BTreeSet<String> = spec.categories.iter().map(|c| c.name.clone()).collect();
    let mut expected = [0usize; 3];
    for scene in synth::generate(&spec).unwrap().iter().filter(|s| !s.eval) {
        expected[0] += 1;
        let views: Vec<(BTreeSet<u32>, BTreeSet<String>)> = scene
            .frames
            .iter()
            .zip(&scene.captions)
            .map(|(f, c)| {
                let words = c
                    .text
                    .split_whitespace()
                    .map(|w| w.trim_matches(|ch: char| !ch.is_alphanumeric()))
                    .filter(|w| names.contains(*w))
                    .map(String::from)
                    .collect();
                (hand_overlap(&scene.cloud, f, spec.voxel_size), words)
            })
            .collect();
        expected[1] += views.iter().filter(|(p, _)| !p.is_empty()).count();
        for w in views.windows(2) {
            expected[2] += common::brute_entity(&w[0].0, &w[1].0, &w[0].1, &w[1].1, spec.gamma, spec.delta).len();
        }
    }
    use pla_core::association::Level;
    let got = [stats.count(Level::Scene), stats.count(Level::View), stats.count(Level::Entity)];
    assert_eq!(got, expected);
    assert_eq!(got, [12, 96, 86]);
    assert!(stats.count(Level::View) <= stats.frames);
    assert_eq!(stats.frames, 96);
}

#[test]
fn single_frame_scene_has_no_entity_pairs() {
    let mut spec = small_spec(1, 1);
    spec.scenes[0].trajectory.count = 1;
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&spec, dir.path());
    let stats = pipeline::associate(&cfg).unwrap();
    assert_eq!(stats.frames, 1);
    assert_eq!(stats.count(pla_core::association::Level::Entity), 0);
    assert!(stats.count(pla_core::association::Level::View) <= 1);
}

#[test]
fn fixture_views_cover_visible_points() {
    let spec = DatasetSpec::default_fixture();
    for scene in synth::generate(&spec).unwrap() {
        let c = synth::coverage(&scene, spec.voxel_size, spec.voxel_size).unwrap();
        // lowest measured scene coverage is 0.993
        assert!(c >= 0.99, "{}: {c}", scene.cloud.scene_id);
    }
}

#[test]
fn shipped_fixture_spec_matches_default() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/synth_fixture.json");
    assert_eq!(DatasetSpec::load(&path).unwrap(), DatasetSpec::default_fixture());
}

#[test]
fn reruns_are_byte_identical() {
    let spec = small_spec(2, 6);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = write(&spec, a.path());
    write(&spec, b.path());
    for f in ["scenes/train/train00.plas", "frames/train01/f03.depth", "captions.jsonl", "embeddings.plae", "pla.cfg"] {
        assert_eq!(sha(&a.path().join(f)), sha(&b.path().join(f)), "{f}");
    }

    let runs: Vec<RunConfig> = ["run1", "run2"].iter().map(|r| with_out(&cfg, a.path().join(r))).collect();
    for run in &runs {
        pipeline::associate(run).unwrap();
        pipeline::train_model(run).unwrap();
    }
    for f in ["pairs.plap", "pairs.jsonl", "stats.json", "model.plam", "loss_trace.csv"] {
        assert_eq!(sha(&runs[0].paths.out.join(f)), sha(&runs[1].paths.out.join(f)), "{f}");
    }
    let trace = std::fs::read_to_string(runs[0].paths.out.join("loss_trace.csv")).unwrap();
    assert_eq!(trace.lines().next(), Some(LOSS_TRACE_HEADER));
    assert_eq!(trace.lines().count(), 7);
}

#[test]
fn missing_inputs_and_category_mismatch() {
    let spec = small_spec(1, 2);
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&spec, dir.path());

    assert!(matches!(pipeline::train_model(&cfg), Err(Error::MissingInput(_))));
    assert!(matches!(pipeline::eval_model(&cfg, true), Err(Error::MissingInput(_))));
    let mut bare = cfg.clone();
    bare.paths.frames = None;
    bare.paths.lexicon = None;
    let err = pipeline::associate(&bare).unwrap_err().to_string();
    assert!(err.contains("frames") && err.contains("lexicon"), "{err}");

    pipeline::associate(&cfg).unwrap();
    pipeline::train_model(&cfg).unwrap();
    let report = pipeline::eval_model(&cfg, true).unwrap();
    assert_eq!(report.classes.len(), 6);
    assert!(cfg.paths.out.join("report.txt").exists());

    let partition = cfg.paths.partition.clone().unwrap();
    let cats = categories::load_partition(&partition).unwrap();
    let flipped: Vec<bool> = cats.base_mask().iter().map(|b| !b).collect();
    categories::save_partition(&partition, &CategoryList::new(cats.names().to_vec(), flipped).unwrap()).unwrap();
    assert!(matches!(pipeline::eval_model(&cfg, true), Err(Error::Config(_))));
}

#[test]
fn untrained_checkpoint_is_near_chance_on_novel() {
    let spec = DatasetSpec::default_fixture();
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&spec, dir.path());
    let cats = spec.category_list().unwrap();
    let table = pipeline::load_table(&cfg).unwrap();
    let fallback = cfg.fallback(table.dim());
    let clouds = pipeline::load_scenes(cfg.paths.eval_scenes.as_ref().unwrap(), &cats).unwrap();
    let chance = 1.0 / cats.len() as f64;
    for seed in 0..5 {
        let params = ModelParams::init(&cfg.train.model, table.dim(), seed).unwrap();
        for calibrated in [true, false] {
            let ev = pipeline::evaluate_scenes(
                &params,
                &clouds,
                &cats,
                &table,
                fallback.as_ref(),
                cfg.train.model.score_temperature,
                calibrated,
            )
            .unwrap();
            let novel = ev.report.miou_novel.unwrap();
            assert!(novel <= 2.0 * chance, "seed {seed} calibrated {calibrated}: {novel}");
        }
    }
}
