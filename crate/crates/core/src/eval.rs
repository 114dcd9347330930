//! Confusion matrices and base/novel segmentation metrics.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::text::CategoryList;
use crate::IGNORED;

/// `K × K` counts, rows = ground truth, columns = prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        Self { k, counts: vec![0; k * k] }
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.k + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds one count per non-ignored point. Nothing is recorded if any
    /// index is out of range.
    pub fn accumulate(&mut self, predictions: &[usize], labels: &[i32]) -> Result<()> {
        if predictions.len() != labels.len() {
            return Err(Error::ShapeMismatch(alloc::format!(
                "{} predictions for {} labels",
                predictions.len(),
                labels.len()
            )));
        }
        for (i, (&p, &l)) in predictions.iter().zip(labels).enumerate() {
            if l == IGNORED {
                continue;
            }
            if l < 0 || l as usize >= self.k {
                return Err(Error::LabelOutOfRange { index: i, label: l, classes: self.k });
            }
            if p >= self.k {
                return Err(Error::LabelOutOfRange { index: i, label: p as i32, classes: self.k });
            }
        }
        for (&p, &l) in predictions.iter().zip(labels) {
            if l != IGNORED {
                self.counts[l as usize * self.k + p] += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.k != self.k {
            return Err(Error::ShapeMismatch(alloc::format!("merging {}-class into {}-class matrix", other.k, self.k)));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Relabels so that new class `i` is old class `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = Self::new(self.k);
        for (i, &pi) in perm.iter().enumerate() {
            for (j, &pj) in perm.iter().enumerate() {
                out.counts[i * self.k + j] = self.get(pi, pj);
            }
        }
        out
    }

    /// `TP / (TP + FP + FN)`, `None` when the denominator is zero.
    pub fn iou(&self, k: usize) -> Option<f64> {
        let tp = self.get(k, k);
        let row: u64 = (0..self.k).map(|j| self.get(k, j)).sum();
        let col: u64 = (0..self.k).map(|i| self.get(i, k)).sum();
        let denom = row + col - tp;
        (denom > 0).then(|| tp as f64 / denom as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub per_class_iou: Vec<Option<f64>>,
    pub miou_base: Option<f64>,
    pub miou_novel: Option<f64>,
    pub hiou: Option<f64>,
}

/// `2ab / (a + b)`, 0 when `a + b = 0`.
pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a + b <= 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

fn mean_over(ious: &[Option<f64>], keep: impl Fn(usize) -> bool) -> Option<f64> {
    let vals: Vec<f64> = ious.iter().enumerate().filter(|(k, _)| keep(*k)).filter_map(|(_, v)| *v).collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Per-class IoU plus base, novel and harmonic means. Classes with no
/// ground truth and no predictions are left out of the means.
pub fn report(cm: &ConfusionMatrix, categories: &CategoryList) -> Result<MetricReport> {
    if cm.num_classes() != categories.len() {
        return Err(Error::InvalidCategories(alloc::format!(
            "confusion matrix has {} classes, category list {}",
            cm.num_classes(),
            categories.len()
        )));
    }
    let per_class_iou: Vec<Option<f64>> = (0..cm.num_classes()).map(|k| cm.iou(k)).collect();
    let miou_base = mean_over(&per_class_iou, |k| categories.is_base(k));
    let miou_novel = mean_over(&per_class_iou, |k| !categories.is_base(k));
    let hiou = match (miou_base, miou_novel) {
        (Some(b), Some(n)) => Some(harmonic_mean(b, n)),
        _ => None,
    };
    Ok(MetricReport { per_class_iou, miou_base, miou_novel, hiou })
}
