//! Run configuration: a `key = value` file shared by every subcommand.
//!
//! Relative paths resolve against the directory holding the file. Blank
//! lines and `#` comments are skipped. Command-line flags are applied on top
//! with [`RunConfig::set`].

use std::path::{Path, PathBuf};

use pla_core::association::{Adjacency, AssociationConfig};
use pla_core::model::{CaptionWeights, TrainConfig};
use pla_core::text::{FallbackEmbedder, DEFAULT_FALLBACK_SEED};

use crate::error::{Error, Result};
use crate::formats::read_text;

#[derive(Debug, Clone, PartialEq)]
pub struct Paths {
    pub scenes: Option<PathBuf>,
    pub eval_scenes: Option<PathBuf>,
    pub frames: Option<PathBuf>,
    pub captions: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub partition: Option<PathBuf>,
    /// Pairs stem; `.plap` is read for training.
    pub pairs: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            scenes: None,
            eval_scenes: None,
            frames: None,
            captions: None,
            embeddings: None,
            lexicon: None,
            partition: None,
            pairs: None,
            checkpoint: None,
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub paths: Paths,
    pub association: AssociationConfig,
    pub train: TrainConfig,
    /// Embed strings missing from the table with the hashing embedder.
    pub fallback_embeddings: bool,
    pub fallback_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            association: AssociationConfig::default(),
            train: TrainConfig::default(),
            fallback_embeddings: false,
            fallback_seed: DEFAULT_FALLBACK_SEED,
        }
    }
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| Error::Config(format!("`{key}`: cannot parse `{value}`: {e}")))
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected true or false, got `{value}`"))),
    }
}

/// Parses `a,b,c` into caption weights.
pub fn parse_alphas(value: &str) -> Result<CaptionWeights> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!("`alphas`: expected three comma-separated values, got `{value}`")));
    }
    let v: Vec<f64> = parts.iter().map(|p| number("alphas", p)).collect::<Result<_>>()?;
    Ok(CaptionWeights::new(v[0], v[1], v[2])?)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(path, &text, base)
    }

    pub fn parse(path: &Path, text: &str, base: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.paths.out = base.join(&cfg.paths.out);
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| Error::parse(path, i + 1, "expected `key = value`"))?;
            cfg.set(key.trim(), value.trim(), base).map_err(|e| Error::parse(path, i + 1, e))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key. Relative paths are joined onto `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let path = || Some(base.join(value));
        let p = &mut self.paths;
        let m = &mut self.train.model;
        match key {
            "scenes" => p.scenes = path(),
            "eval_scenes" => p.eval_scenes = path(),
            "frames" => p.frames = path(),
            "captions" => p.captions = path(),
            "embeddings" => p.embeddings = path(),
            "lexicon" => p.lexicon = path(),
            "partition" => p.partition = path(),
            "pairs" => p.pairs = path(),
            "checkpoint" => p.checkpoint = path(),
            "out" => p.out = base.join(value),
            "voxel_size" => self.association.voxel_size = number(key, value)?,
            "radius" => self.association.radius = number(key, value)?,
            "stride" => self.association.stride = number(key, value)?,
            "gamma" => self.association.filter.gamma = number(key, value)?,
            "delta" => self.association.filter.delta = number(key, value)?,
            "adjacency" => {
                self.association.adjacency = match value {
                    "consecutive" => Adjacency::Consecutive,
                    "all_pairs" => Adjacency::AllPairs,
                    _ => return Err(Error::Config(format!("`adjacency`: unknown mode `{value}`"))),
                }
            }
            "alphas" => self.train.weights = parse_alphas(value)?,
            "lr" => self.train.learning_rate = number(key, value)?,
            "weight_decay" => self.train.weight_decay = number(key, value)?,
            "iterations" => self.train.iterations = number(key, value)?,
            "seed" => self.train.seed = number(key, value)?,
            "max_pairs" => self.train.max_pairs_per_level = number(key, value)?,
            "encoder_hidden" => m.encoder_hidden = number(key, value)?,
            "feature_dim" => m.feature_dim = number(key, value)?,
            "adapter_hidden" => m.adapter_hidden = number(key, value)?,
            "encoder_voxel_size" => m.encoder_voxel_size = number(key, value)?,
            "score_temperature" => m.score_temperature = number(key, value)?,
            "tau_init" => m.tau_init = number(key, value)?,
            "fallback_embeddings" => self.fallback_embeddings = boolean(key, value)?,
            "fallback_seed" => self.fallback_seed = number(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.association.validate()?;
        self.train.validate()?;
        Ok(())
    }

    /// The hashing embedder for a table of width `dim`, if enabled.
    pub fn fallback(&self, dim: usize) -> Option<FallbackEmbedder> {
        self.fallback_embeddings.then_some(FallbackEmbedder { dim, seed: self.fallback_seed })
    }

    /// Serializes every key; relative paths are written as given.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        let p = &self.paths;
        for (k, v) in [
            ("scenes", &p.scenes),
            ("eval_scenes", &p.eval_scenes),
            ("frames", &p.frames),
            ("captions", &p.captions),
            ("embeddings", &p.embeddings),
            ("lexicon", &p.lexicon),
            ("partition", &p.partition),
            ("pairs", &p.pairs),
            ("checkpoint", &p.checkpoint),
        ] {
            if let Some(v) = v {
                put(k, v.display().to_string());
            }
        }
        put("out", p.out.display().to_string());
        let a = &self.association;
        put("voxel_size", a.voxel_size.to_string());
        put("radius", a.radius.to_string());
        put("stride", a.stride.to_string());
        put("gamma", a.filter.gamma.to_string());
        put("delta", a.filter.delta.to_string());
        put(
            "adjacency",
            match a.adjacency {
                Adjacency::Consecutive => "consecutive",
                Adjacency::AllPairs => "all_pairs",
            }
            .into(),
        );
        let t = &self.train;
        let [s, v, e] = t.weights.as_array();
        put("alphas", format!("{s},{v},{e}"));
        put("lr", t.learning_rate.to_string());
        put("weight_decay", t.weight_decay.to_string());
        put("iterations", t.iterations.to_string());
        put("seed", t.seed.to_string());
        put("max_pairs", t.max_pairs_per_level.to_string());
        let m = &t.model;
        put("encoder_hidden", m.encoder_hidden.to_string());
        put("feature_dim", m.feature_dim.to_string());
        put("adapter_hidden", m.adapter_hidden.to_string());
        put("encoder_voxel_size", m.encoder_voxel_size.to_string());
        put("score_temperature", m.score_temperature.to_string());
        put("tau_init", m.tau_init.to_string());
        put("fallback_embeddings", self.fallback_embeddings.to_string());
        put("fallback_seed", self.fallback_seed.to_string());
        out
    }
}
