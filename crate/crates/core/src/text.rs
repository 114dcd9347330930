//! Caption and category embeddings.
//!
//! Embeddings are produced by an external text encoder and ingested as a
//! table keyed by exact text. For offline runs and tests a seeded
//! bag-of-tokens hashing embedder stands in for the encoder.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Seed used for the shipped fixtures.
pub const DEFAULT_FALLBACK_SEED: u64 = 7;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: BTreeMap<String, Vec<f32>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter { name: "dim", reason: "must be positive".into() });
        }
        Ok(Self { dim, entries: BTreeMap::new() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts or replaces a vector. Returns `true` when `key` was already present.
    pub fn insert(&mut self, key: impl Into<String>, vector: Vec<f32>) -> Result<bool> {
        let key = key.into();
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch { key, expected: self.dim, found: vector.len() });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "vector",
                reason: alloc::format!("non-finite component for `{key}`"),
            });
        }
        Ok(self.entries.insert(key, vector).is_some())
    }

    pub fn get(&self, key: &str) -> Option<&[f32]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

/// Seeded hashing embedder used when no encoder output is available.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FallbackEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl FallbackEmbedder {
    pub fn embed(&self, text: &str) -> Vec<f64> {
        fallback_embed(text, self.dim, self.seed)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Bag-of-tokens embedding: every whitespace token hashes (with `seed`) to a
/// ±1 sign per bucket; the signs are summed over tokens and scaled to unit
/// norm. Text without tokens maps to the first basis vector.
pub fn fallback_embed(text: &str, dim: usize, seed: u64) -> Vec<f64> {
    assert!(dim >= 2, "fallback embedding needs dim >= 2");
    let mut acc = vec![0.0f64; dim];
    let mut any = false;
    for token in text.split_whitespace() {
        any = true;
        let base = splitmix64(fnv1a(token.as_bytes()) ^ splitmix64(seed));
        for (b, slot) in acc.iter_mut().enumerate() {
            let h = splitmix64(base.wrapping_add(b as u64));
            *slot += if h >> 63 == 0 { 1.0 } else { -1.0 };
        }
    }
    let norm = libm::sqrt(acc.iter().map(|v| v * v).sum::<f64>());
    if !any || norm == 0.0 {
        let mut e = vec![0.0; dim];
        e[0] = 1.0;
        return e;
    }
    acc.iter_mut().for_each(|v| *v /= norm);
    acc
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = libm::sqrt(a.iter().map(|x| x * x).sum::<f64>());
    let nb = libm::sqrt(b.iter().map(|x| x * x).sum::<f64>());
    d / (na * nb)
}

/// Ordered category names with a base/novel split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryList {
    names: Vec<String>,
    base_mask: Vec<bool>,
}

impl CategoryList {
    pub fn new(names: Vec<String>, base_mask: Vec<bool>) -> Result<Self> {
        if names.len() != base_mask.len() {
            return Err(Error::InvalidCategories("names and base mask differ in length".into()));
        }
        let mut seen = alloc::collections::BTreeSet::new();
        for n in &names {
            if n.is_empty() {
                return Err(Error::InvalidCategories("empty category name".into()));
            }
            if !seen.insert(n.as_str()) {
                return Err(Error::InvalidCategories(alloc::format!("duplicate category `{n}`")));
            }
        }
        if !base_mask.iter().any(|&b| b) {
            return Err(Error::InvalidCategories("at least one base category is required".into()));
        }
        Ok(Self { names, base_mask })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, k: usize) -> &str {
        &self.names[k]
    }

    pub fn is_base(&self, k: usize) -> bool {
        self.base_mask[k]
    }

    pub fn base_mask(&self) -> &[bool] {
        &self.base_mask
    }

    pub fn base_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.base_mask[k]).collect()
    }

    pub fn novel_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| !self.base_mask[k]).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// The same categories reordered by `perm` (new position `i` holds old `perm[i]`).
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        Self::new(
            perm.iter().map(|&i| self.names[i].clone()).collect(),
            perm.iter().map(|&i| self.base_mask[i]).collect(),
        )
    }
}

/// Unit-norm category rows plus, per row, the category index it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryMatrix {
    pub rows: Matrix,
    pub category_of_row: Vec<usize>,
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let n = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
    if n == 0.0 {
        return v;
    }
    v.into_iter().map(|x| x / n).collect()
}

/// Looks up (or falls back to embedding) each text and returns unit rows.
pub fn embed_texts<S: AsRef<str>>(
    texts: &[S],
    table: &EmbeddingTable,
    fallback: Option<&FallbackEmbedder>,
) -> Result<Matrix> {
    let dim = table.dim();
    if let Some(fb) = fallback {
        if fb.dim != dim {
            return Err(Error::DimensionMismatch { key: "<fallback>".into(), expected: dim, found: fb.dim });
        }
    }
    let mut data = Vec::with_capacity(texts.len() * dim);
    let mut missing = Vec::new();
    for t in texts {
        let t = t.as_ref();
        let v = match (table.get(t), fallback) {
            (Some(v), _) => v.iter().map(|&x| x as f64).collect(),
            (None, Some(fb)) => fb.embed(t),
            (None, None) => {
                missing.push(String::from(t));
                continue;
            }
        };
        data.extend(normalized(v));
    }
    if !missing.is_empty() {
        return Err(Error::MissingEmbeddings(missing));
    }
    Matrix::from_vec(texts.len(), dim, data)
}

/// Category embeddings in category order; novel rows dropped unless `include_novel`.
pub fn category_matrix(
    categories: &CategoryList,
    table: &EmbeddingTable,
    include_novel: bool,
    fallback: Option<&FallbackEmbedder>,
) -> Result<CategoryMatrix> {
    let category_of_row: Vec<usize> =
        (0..categories.len()).filter(|&k| include_novel || categories.is_base(k)).collect();
    let names: Vec<&str> = category_of_row.iter().map(|&k| categories.name(k)).collect();
    let rows = embed_texts(&names, table, fallback)?;
    Ok(CategoryMatrix { rows, category_of_row })
}
