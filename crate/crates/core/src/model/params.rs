use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Encoder input per point: position (3) and color (3).
pub const ENCODER_INPUT_DIM: usize = 6;

/// Bounds on `exp(log_temperature)`, enforced after every update.
pub const MIN_TEMPERATURE: f64 = 1e-3;
pub const MAX_TEMPERATURE: f64 = 1e3;

/// Architecture and inference constants.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub encoder_hidden: usize,
    /// Width `D` of the per-point features.
    pub feature_dim: usize,
    pub adapter_hidden: usize,
    /// Cell size for the encoder's neighborhood-mean feature, meters.
    pub encoder_voxel_size: f64,
    /// Fixed softmax temperature for cosine classification logits.
    pub score_temperature: f64,
    /// Initial contrastive temperature.
    pub tau_init: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder_hidden: 32,
            feature_dim: 32,
            adapter_hidden: 32,
            encoder_voxel_size: 0.2,
            score_temperature: 0.01,
            tau_init: 0.07,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("encoder_hidden", self.encoder_hidden),
            ("feature_dim", self.feature_dim),
            ("adapter_hidden", self.adapter_hidden),
        ] {
            if v == 0 {
                return Err(Error::InvalidParameter { name, reason: "must be positive".into() });
            }
        }
        if !(self.encoder_voxel_size > 0.0) {
            return Err(Error::InvalidParameter { name: "encoder_voxel_size", reason: "must be positive".into() });
        }
        if !(self.score_temperature > 0.0) {
            return Err(Error::InvalidParameter { name: "score_temperature", reason: "must be positive".into() });
        }
        if !(MIN_TEMPERATURE..=MAX_TEMPERATURE).contains(&self.tau_init) {
            return Err(Error::InvalidParameter {
                name: "tau_init",
                reason: alloc::format!("must lie in [{MIN_TEMPERATURE}, {MAX_TEMPERATURE}]"),
            });
        }
        Ok(())
    }
}

/// Toy stand-in for the 3D backbone:
/// `h = relu(x·W1 + b1)`, `f = [h | voxel_mean(h)]·W2 + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
    pub voxel_size: f64,
}

/// `f^v = normalize(relu(LN(f·W1 + b1)·gain + bias)·W2 + b2)` plus the
/// learnable contrastive temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterParams {
    pub w1: Matrix,
    pub b1: Matrix,
    pub ln_gain: Matrix,
    pub ln_bias: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
    /// `1 × 1`
    pub log_temperature: Matrix,
}

impl AdapterParams {
    pub fn temperature(&self) -> f64 {
        libm::exp(self.log_temperature.item())
    }

    pub fn clamp_temperature(&mut self) {
        let lo = libm::log(MIN_TEMPERATURE);
        let hi = libm::log(MAX_TEMPERATURE);
        let t = &mut self.log_temperature.as_mut_slice()[0];
        *t = t.clamp(lo, hi);
    }

    pub fn embed_dim(&self) -> usize {
        self.w2.cols()
    }
}

/// Novelty logit per point: `f·w + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryHeadParams {
    pub w: Matrix,
    pub b: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub encoder: EncoderParams,
    pub adapter: AdapterParams,
    pub binary: BinaryHeadParams,
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Matrix {
    let a = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
    let mut m = Matrix::zeros(fan_in, fan_out);
    for v in m.as_mut_slice() {
        *v = (rng.random::<f64>() * 2.0 - 1.0) * a;
    }
    m
}

impl ModelParams {
    /// Seeded initialization for embeddings of width `embed_dim`.
    pub fn init(config: &ModelConfig, embed_dim: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if embed_dim == 0 {
            return Err(Error::InvalidParameter { name: "embed_dim", reason: "must be positive".into() });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, d, a) = (config.encoder_hidden, config.feature_dim, config.adapter_hidden);
        let encoder = EncoderParams {
            w1: glorot(&mut rng, ENCODER_INPUT_DIM, h),
            b1: Matrix::zeros(1, h),
            w2: glorot(&mut rng, 2 * h, d),
            b2: Matrix::zeros(1, d),
            voxel_size: config.encoder_voxel_size,
        };
        let adapter = AdapterParams {
            w1: glorot(&mut rng, d, a),
            b1: Matrix::zeros(1, a),
            ln_gain: Matrix::filled(1, a, 1.0),
            ln_bias: Matrix::zeros(1, a),
            w2: glorot(&mut rng, a, embed_dim),
            b2: Matrix::zeros(1, embed_dim),
            log_temperature: Matrix::scalar(libm::log(config.tau_init)),
        };
        let binary = BinaryHeadParams { w: glorot(&mut rng, d, 1), b: Matrix::zeros(1, 1) };
        Ok(Self { encoder, adapter, binary })
    }

    /// Every trainable tensor in a fixed order with a stable name.
    pub fn tensors(&self) -> [(&'static str, &Matrix); 13] {
        let (e, a, b) = (&self.encoder, &self.adapter, &self.binary);
        [
            ("encoder.w1", &e.w1),
            ("encoder.b1", &e.b1),
            ("encoder.w2", &e.w2),
            ("encoder.b2", &e.b2),
            ("adapter.w1", &a.w1),
            ("adapter.b1", &a.b1),
            ("adapter.ln_gain", &a.ln_gain),
            ("adapter.ln_bias", &a.ln_bias),
            ("adapter.w2", &a.w2),
            ("adapter.b2", &a.b2),
            ("adapter.log_temperature", &a.log_temperature),
            ("binary.w", &b.w),
            ("binary.b", &b.b),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Matrix); 13] {
        let (e, a, b) = (&mut self.encoder, &mut self.adapter, &mut self.binary);
        [
            ("encoder.w1", &mut e.w1),
            ("encoder.b1", &mut e.b1),
            ("encoder.w2", &mut e.w2),
            ("encoder.b2", &mut e.b2),
            ("adapter.w1", &mut a.w1),
            ("adapter.b1", &mut a.b1),
            ("adapter.ln_gain", &mut a.ln_gain),
            ("adapter.ln_bias", &mut a.ln_bias),
            ("adapter.w2", &mut a.w2),
            ("adapter.b2", &mut a.b2),
            ("adapter.log_temperature", &mut a.log_temperature),
            ("binary.w", &mut b.w),
            ("binary.b", &mut b.b),
        ]
    }

    /// Named blocks for serialization, including non-trainable settings.
    pub fn named_blocks(&self) -> Vec<(String, Matrix)> {
        let mut out: Vec<(String, Matrix)> =
            self.tensors().iter().map(|(n, m)| (n.to_string(), (*m).clone())).collect();
        out.push(("encoder.voxel_size".into(), Matrix::scalar(self.encoder.voxel_size)));
        out
    }

    pub fn from_named_blocks(blocks: &BTreeMap<String, Matrix>) -> Result<Self> {
        let get = |name: &str| -> Result<Matrix> {
            blocks.get(name).cloned().ok_or_else(|| Error::MissingParameter(name.into()))
        };
        let params = Self {
            encoder: EncoderParams {
                w1: get("encoder.w1")?,
                b1: get("encoder.b1")?,
                w2: get("encoder.w2")?,
                b2: get("encoder.b2")?,
                voxel_size: get("encoder.voxel_size")?.item(),
            },
            adapter: AdapterParams {
                w1: get("adapter.w1")?,
                b1: get("adapter.b1")?,
                ln_gain: get("adapter.ln_gain")?,
                ln_bias: get("adapter.ln_bias")?,
                w2: get("adapter.w2")?,
                b2: get("adapter.b2")?,
                log_temperature: get("adapter.log_temperature")?,
            },
            binary: BinaryHeadParams { w: get("binary.w")?, b: get("binary.b")? },
        };
        params.validate()?;
        Ok(params)
    }

    /// Shape consistency and finiteness.
    pub fn validate(&self) -> Result<()> {
        let (e, a, b) = (&self.encoder, &self.adapter, &self.binary);
        let h = e.w1.cols();
        let d = e.w2.cols();
        let ah = a.w1.cols();
        let expect = [
            ("encoder.w1", e.w1.shape(), (ENCODER_INPUT_DIM, h)),
            ("encoder.b1", e.b1.shape(), (1, h)),
            ("encoder.w2", e.w2.shape(), (2 * h, d)),
            ("encoder.b2", e.b2.shape(), (1, d)),
            ("adapter.w1", a.w1.shape(), (d, ah)),
            ("adapter.b1", a.b1.shape(), (1, ah)),
            ("adapter.ln_gain", a.ln_gain.shape(), (1, ah)),
            ("adapter.ln_bias", a.ln_bias.shape(), (1, ah)),
            ("adapter.w2", a.w2.shape(), (ah, a.w2.cols())),
            ("adapter.b2", a.b2.shape(), (1, a.w2.cols())),
            ("adapter.log_temperature", a.log_temperature.shape(), (1, 1)),
            ("binary.w", b.w.shape(), (d, 1)),
            ("binary.b", b.b.shape(), (1, 1)),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(Error::ShapeMismatch(alloc::format!("{name}: {got:?}, expected {want:?}")));
            }
        }
        if let Some((name, _)) = self.tensors().iter().find(|(_, m)| !m.is_finite()) {
            return Err(Error::InvalidParameter { name: "params", reason: alloc::format!("{name} is not finite") });
        }
        if !(e.voxel_size > 0.0) {
            return Err(Error::InvalidParameter { name: "encoder.voxel_size", reason: "must be positive".into() });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded_and_valid() {
        let cfg = ModelConfig::default();
        let a = ModelParams::init(&cfg, 16, 3).unwrap();
        let b = ModelParams::init(&cfg, 16, 3).unwrap();
        let c = ModelParams::init(&cfg, 16, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        a.validate().unwrap();
        assert!((a.adapter.temperature() - 0.07).abs() < 1e-12);
    }

    #[test]
    fn named_blocks_round_trip() {
        let p = ModelParams::init(&ModelConfig::default(), 8, 1).unwrap();
        let map: BTreeMap<String, Matrix> = p.named_blocks().into_iter().collect();
        assert_eq!(ModelParams::from_named_blocks(&map).unwrap(), p);
        let mut partial = map.clone();
        partial.remove("binary.b");
        assert!(matches!(ModelParams::from_named_blocks(&partial), Err(Error::MissingParameter(_))));
    }

    #[test]
    fn temperature_clamp() {
        let mut p = ModelParams::init(&ModelConfig::default(), 8, 1).unwrap();
        p.adapter.log_temperature = Matrix::scalar(-50.0);
        p.adapter.clamp_temperature();
        assert!((p.adapter.temperature() - MIN_TEMPERATURE).abs() < 1e-15);
        p.adapter.log_temperature = Matrix::scalar(50.0);
        p.adapter.clamp_temperature();
        assert!((p.adapter.temperature() - MAX_TEMPERATURE).abs() < 1e-9);
    }
}
