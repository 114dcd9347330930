//! Human-facing outputs: metric reports, association statistics and the
//! training loss trace.

use std::fmt::Write as _;

use pla_core::association::{Level, PointCaptionPair};
use pla_core::eval::MetricReport;
use pla_core::model::LossRecord;
use pla_core::text::CategoryList;
use serde::{Deserialize, Serialize};

fn partition_name(categories: &CategoryList, k: usize) -> &'static str {
    if categories.is_base(k) {
        "base"
    } else {
        "novel"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub name: String,
    pub partition: String,
    pub iou: Option<f64>,
}

/// Serialized form of a [`MetricReport`]; metrics are fractions in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub calibrated: bool,
    pub points: u64,
    pub classes: Vec<ClassRow>,
    pub miou_base: Option<f64>,
    pub miou_novel: Option<f64>,
    pub hiou: Option<f64>,
}

impl ReportFile {
    pub fn new(report: &MetricReport, categories: &CategoryList, calibrated: bool, points: u64) -> Self {
        let classes = categories
            .names()
            .iter()
            .enumerate()
            .map(|(k, name)| ClassRow {
                name: name.clone(),
                partition: partition_name(categories, k).into(),
                iou: report.per_class_iou[k],
            })
            .collect();
        Self {
            calibrated,
            points,
            classes,
            miou_base: report.miou_base,
            miou_novel: report.miou_novel,
            hiou: report.hiou,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Plain-text table with percentages.
    pub fn to_table(&self) -> String {
        let pct = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{:.1}", 100.0 * x));
        let width = self.classes.iter().map(|c| c.name.len()).max().unwrap_or(0).max(8);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:<9}  {:>6}", "class", "partition", "IoU");
        for c in &self.classes {
            let _ = writeln!(out, "{:<width$}  {:<9}  {:>6}", c.name, c.partition, pct(c.iou));
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "mIoU base   {:>6}", pct(self.miou_base));
        let _ = writeln!(out, "mIoU novel  {:>6}", pct(self.miou_novel));
        let _ = writeln!(out, "hIoU        {:>6}", pct(self.hiou));
        let _ = writeln!(out, "calibrated  {}", self.calibrated);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: String,
    pub pairs: usize,
    pub mean_points: f64,
}

/// Per-level pair counts and mean points per caption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationStats {
    pub scenes: usize,
    pub frames: usize,
    pub levels: Vec<LevelStats>,
}

impl AssociationStats {
    pub fn new(pairs: &[PointCaptionPair], scenes: usize, frames: usize) -> Self {
        let levels = Level::ALL
            .iter()
            .map(|&level| {
                let sizes: Vec<usize> = pairs.iter().filter(|p| p.level() == level).map(|p| p.points.len()).collect();
                let mean_points =
                    if sizes.is_empty() { 0.0 } else { sizes.iter().sum::<usize>() as f64 / sizes.len() as f64 };
                LevelStats { level: level.as_str().into(), pairs: sizes.len(), mean_points }
            })
            .collect();
        Self { scenes, frames, levels }
    }

    pub fn count(&self, level: Level) -> usize {
        self.levels.iter().find(|l| l.level == level.as_str()).map_or(0, |l| l.pairs)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize") + "\n"
    }
}

pub const LOSS_TRACE_HEADER: &str =
    "iteration,scene,learning_rate,temperature,semantic,binary,caption_scene,caption_view,caption_entity,total";

pub fn loss_trace_csv(trace: &[LossRecord]) -> String {
    let mut out = String::from(LOSS_TRACE_HEADER);
    out.push('\n');
    for r in trace {
        let c = &r.components;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.iteration,
            r.scene_id,
            r.learning_rate,
            r.temperature,
            c.semantic,
            c.binary,
            c.caption_scene,
            c.caption_view,
            c.caption_entity,
            r.total
        );
    }
    out
}
