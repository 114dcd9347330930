//! The trainable core: toy point encoder, vision-language adapter, binary
//! head, calibration, losses and the training loop.

mod losses;
mod network;
mod optim;
mod params;
mod train;

pub use losses::{
    binary_loss, caption_loss, dedup_captions, semantic_loss, total_loss, CaptionWeights, LossComponents, PROB_FLOOR,
};
pub use network::{
    binary_probabilities, calibrate, encode, encoder_inputs, masked_semantic_scores, predict, semantic_scores,
    Prediction,
};
pub use optim::{cosine_learning_rate, AdamW};
pub use params::{
    AdapterParams, BinaryHeadParams, EncoderParams, ModelConfig, ModelParams, ENCODER_INPUT_DIM,
    MAX_TEMPERATURE, MIN_TEMPERATURE,
};
pub use train::{
    evaluate_objective, train, LossRecord, ObjectiveValue, ObjectiveWeights, PreparedScene, TrainConfig, TrainOutcome,
    TrainingScene,
};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Row tolerance for probability rows.
pub const ROW_SUM_TOLERANCE: f64 = 1e-5;

/// Per-point class probabilities; columns follow a category list.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreField {
    probs: Matrix,
}

impl ScoreField {
    /// Validates that rows are nonnegative and sum to 1 within [`ROW_SUM_TOLERANCE`].
    pub fn new(probs: Matrix) -> Result<Self> {
        for (i, row) in probs.iter_rows().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::ShapeMismatch(alloc::format!(
                    "score row {i} is not a probability distribution (sum {sum})"
                )));
            }
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &Matrix {
        &self.probs
    }

    pub fn into_matrix(self) -> Matrix {
        self.probs
    }

    pub fn num_points(&self) -> usize {
        self.probs.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.probs.cols()
    }

    pub fn argmax(&self) -> alloc::vec::Vec<usize> {
        self.probs.argmax_rows()
    }
}
