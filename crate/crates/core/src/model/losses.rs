use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use super::ScoreField;
use crate::autodiff::log_sum_exp;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::text::{embed_texts, EmbeddingTable, FallbackEmbedder};
use crate::IGNORED;

/// Floor applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-300;

/// Mean `-ln p[label]` over non-ignored points; 0 when every point is ignored.
pub fn semantic_loss(scores: &ScoreField, labels: &[i32]) -> Result<f64> {
    let probs = scores.probs();
    if labels.len() != probs.rows() {
        return Err(Error::ShapeMismatch(alloc::format!(
            "{} labels for {} score rows",
            labels.len(),
            probs.rows()
        )));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, &l) in labels.iter().enumerate() {
        if l == IGNORED {
            continue;
        }
        if l < 0 || l as usize >= probs.cols() {
            return Err(Error::LabelOutOfRange { index: i, label: l, classes: probs.cols() });
        }
        total -= libm::log(probs[(i, l as usize)].max(PROB_FLOOR));
        count += 1;
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

/// Mean stable BCE-with-logits; labels are 1 (novel), 0 (base) or [`IGNORED`].
pub fn binary_loss(logits: &[f64], labels: &[i32]) -> Result<f64> {
    if logits.len() != labels.len() {
        return Err(Error::ShapeMismatch(alloc::format!("{} logits for {} labels", logits.len(), labels.len())));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, (&z, &l)) in logits.iter().zip(labels).enumerate() {
        let y = match l {
            IGNORED => continue,
            0 => 0.0,
            1 => 1.0,
            _ => return Err(Error::LabelOutOfRange { index: i, label: l, classes: 2 }),
        };
        total += z.max(0.0) - z * y + libm::log1p(libm::exp(-libm::fabs(z)));
        count += 1;
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

/// Indices of the first occurrence of each distinct caption text.
pub fn dedup_captions<S: AsRef<str>>(captions: &[S]) -> Vec<usize> {
    let mut seen = BTreeSet::new();
    (0..captions.len()).filter(|&i| seen.insert(captions[i].as_ref())).collect()
}

/// Contrastive caption loss over one batch.
///
/// `pooled` holds one unit-norm adapted feature per pair. Pairs repeating an
/// earlier caption are dropped first; the remaining `n_t` rows are scored
/// against the `n_t` caption embeddings with logits `sim / tau` and the
/// matching column as target.
pub fn caption_loss<S: AsRef<str>>(
    pooled: &Matrix,
    captions: &[S],
    table: &EmbeddingTable,
    fallback: Option<&FallbackEmbedder>,
    tau: f64,
) -> Result<f64> {
    if pooled.rows() != captions.len() {
        return Err(Error::ShapeMismatch(alloc::format!(
            "{} pooled features for {} captions",
            pooled.rows(),
            captions.len()
        )));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter { name: "tau", reason: "must be positive".into() });
    }
    let kept = dedup_captions(captions);
    if kept.is_empty() {
        log::warn!("caption loss over an empty batch");
        return Ok(0.0);
    }
    let texts: Vec<&str> = kept.iter().map(|&i| captions[i].as_ref()).collect();
    let text_rows = embed_texts(&texts, table, fallback)?;
    let mut logits = pooled.select_rows(&kept).matmul_transposed(&text_rows);
    logits.scale_assign(1.0 / tau);
    let n = kept.len();
    let total: f64 = (0..n).map(|i| log_sum_exp(logits.row(i)) - logits[(i, i)]).sum();
    Ok(total / n as f64)
}

/// Per-level caption loss weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaptionWeights {
    pub scene: f64,
    pub view: f64,
    pub entity: f64,
}

impl Default for CaptionWeights {
    fn default() -> Self {
        Self { scene: 0.0, view: 0.05, entity: 0.05 }
    }
}

impl CaptionWeights {
    pub const NONE: Self = Self { scene: 0.0, view: 0.0, entity: 0.0 };

    pub fn new(scene: f64, view: f64, entity: f64) -> Result<Self> {
        let w = Self { scene, view, entity };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha_scene", self.scene), ("alpha_view", self.view), ("alpha_entity", self.entity)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter { name, reason: alloc::format!("must be finite and >= 0, got {v}") });
            }
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.scene, self.view, self.entity]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossComponents {
    pub semantic: f64,
    pub binary: f64,
    pub caption_scene: f64,
    pub caption_view: f64,
    pub caption_entity: f64,
}

impl LossComponents {
    pub fn named(&self) -> [(&'static str, f64); 5] {
        [
            ("semantic", self.semantic),
            ("binary", self.binary),
            ("caption_scene", self.caption_scene),
            ("caption_view", self.caption_view),
            ("caption_entity", self.caption_entity),
        ]
    }

    pub fn caption(&self) -> [f64; 3] {
        [self.caption_scene, self.caption_view, self.caption_entity]
    }
}

/// `L_sem + α1·L_cap^s + α2·L_cap^v + α3·L_cap^e + L_bi`.
pub fn total_loss(c: &LossComponents, weights: &CaptionWeights) -> Result<f64> {
    weights.validate()?;
    Ok(c.semantic
        + weights.scene * c.caption_scene
        + weights.view * c.caption_view
        + weights.entity * c.caption_entity
        + c.binary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn uniform_semantic_is_log_k() {
        let k = 5;
        let s = ScoreField::new(Matrix::filled(3, k, 1.0 / k as f64)).unwrap();
        let l = semantic_loss(&s, &[0, 4, IGNORED]).unwrap();
        assert!((l - libm::log(k as f64)).abs() < 1e-12);
        assert_eq!(semantic_loss(&s, &[IGNORED; 3]).unwrap(), 0.0);
        assert!(matches!(semantic_loss(&s, &[5, 0, 0]), Err(Error::LabelOutOfRange { .. })));
    }

    #[test]
    fn binary_closed_forms() {
        let l = binary_loss(&[0.0; 4], &[0, 1, 0, 1]).unwrap();
        assert!((l - core::f64::consts::LN_2).abs() < 1e-15);
        let l = binary_loss(&[20.0, -20.0, 3.0], &[1, 0, IGNORED]).unwrap();
        assert!(l < 1e-6);
    }

    #[test]
    fn total_examples() {
        let c = LossComponents { semantic: 1.0, binary: 0.5, caption_scene: 7.0, caption_view: 2.0, caption_entity: 4.0 };
        assert!((total_loss(&c, &CaptionWeights::default()).unwrap() - 1.8).abs() < 1e-12);
        assert_eq!(total_loss(&c, &CaptionWeights::NONE).unwrap(), 1.5);
        assert!(CaptionWeights::new(0.0, -0.1, 0.0).is_err());
    }

    #[test]
    fn dedup_keeps_first() {
        assert_eq!(dedup_captions(&["a", "b", "a", "c", "b"]), vec![0, 1, 3]);
    }

    #[test]
    fn caption_single_and_uniform() {
        let table = EmbeddingTable::new(2).unwrap();
        let fb = FallbackEmbedder { dim: 2, seed: 1 };
        let pooled = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert_eq!(caption_loss(&pooled, &["x"], &table, Some(&fb), 0.07).unwrap(), 0.0);

        let mut table = EmbeddingTable::new(2).unwrap();
        table.insert("u", vec![1.0, 0.0]).unwrap();
        table.insert("w", vec![1.0, 0.0]).unwrap();
        let pooled = Matrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let l = caption_loss(&pooled, &["u", "w"], &table, None, 0.5).unwrap();
        assert!((l - core::f64::consts::LN_2).abs() < 1e-12);
    }
}
