//! `PLAM` checkpoints: a list of named `f32` tensors.
//!
//! Model tensors use their parameter names. Settings are stored as scalar
//! blocks under `config.*`, and the category partition as one block per
//! category, `category.<name>` = `[index, is_base]`.

use std::collections::BTreeMap;
use std::path::Path;

use pla_core::linalg::Matrix;
use pla_core::model::ModelParams;
use pla_core::text::CategoryList;

use super::{read_bytes, write_bytes, ByteReader, ByteWriter};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PLAM";
const CATEGORY_PREFIX: &str = "category.";
const SCORE_TEMPERATURE: &str = "config.score_temperature";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub categories: CategoryList,
    pub score_temperature: f64,
}

/// A raw named tensor as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

pub fn blocks(ckpt: &Checkpoint) -> Vec<Block> {
    let matrix_block = |name: String, m: &Matrix| Block {
        name,
        dims: vec![m.rows() as u32, m.cols() as u32],
        data: m.as_slice().iter().map(|&v| v as f32).collect(),
    };
    let mut out: Vec<Block> = ckpt.params.named_blocks().into_iter().map(|(n, m)| matrix_block(n, &m)).collect();
    out.push(Block { name: SCORE_TEMPERATURE.into(), dims: vec![1], data: vec![ckpt.score_temperature as f32] });
    for (k, name) in ckpt.categories.names().iter().enumerate() {
        out.push(Block {
            name: format!("{CATEGORY_PREFIX}{name}"),
            dims: vec![2],
            data: vec![k as f32, if ckpt.categories.is_base(k) { 1.0 } else { 0.0 }],
        });
    }
    out
}

pub fn encode_blocks(blocks: &[Block]) -> Vec<u8> {
    let mut w = ByteWriter::with_header(MAGIC);
    w.u32(blocks.len() as u32);
    for b in blocks {
        w.string(&b.name);
        w.u32(b.dims.len() as u32);
        b.dims.iter().for_each(|&d| w.u32(d));
        b.data.iter().for_each(|&v| w.f32(v));
    }
    w.into_bytes()
}

pub fn decode_blocks(path: &Path, bytes: &[u8]) -> Result<Vec<Block>> {
    let mut r = ByteReader::new(path, bytes);
    r.header(MAGIC)?;
    let count = r.u32()?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name = r.string()?;
        let at = r.offset();
        let rank = r.u32()?;
        if rank > 8 {
            return Err(r.error(at, format!("implausible rank {rank} for `{name}`")));
        }
        let dims: Vec<u32> = (0..rank).map(|_| r.u32()).collect::<Result<_>>()?;
        let len: usize = dims.iter().map(|&d| d as usize).product();
        if len * 4 > r.remaining() {
            return Err(r.error(at, format!("block `{name}` of {len} values runs past the end")));
        }
        let data = (0..len).map(|_| r.f32()).collect::<Result<_>>()?;
        out.push(Block { name, dims, data });
    }
    r.finish()?;
    Ok(out)
}

pub fn decode(path: &Path, bytes: &[u8]) -> Result<Checkpoint> {
    let blocks = decode_blocks(path, bytes)?;
    let bad = |reason: String| Error::Format { path: path.into(), offset: 0, reason };
    let mut tensors = BTreeMap::new();
    let mut categories: Vec<(usize, String, bool)> = Vec::new();
    let mut score_temperature = None;
    for b in blocks {
        let data: Vec<f64> = b.data.iter().map(|&v| v as f64).collect();
        if let Some(name) = b.name.strip_prefix(CATEGORY_PREFIX) {
            if data.len() != 2 {
                return Err(bad(format!("category block `{}` must hold 2 values", b.name)));
            }
            categories.push((data[0] as usize, name.to_string(), data[1] != 0.0));
        } else if b.name == SCORE_TEMPERATURE {
            score_temperature = data.first().copied();
        } else {
            let (rows, cols) = match b.dims[..] {
                [r, c] => (r as usize, c as usize),
                [n] => (1, n as usize),
                [] => (1, 1),
                _ => return Err(bad(format!("block `{}` has rank {}", b.name, b.dims.len()))),
            };
            tensors.insert(b.name, Matrix::from_vec(rows, cols, data)?);
        }
    }
    categories.sort();
    if categories.iter().enumerate().any(|(i, c)| c.0 != i) {
        return Err(bad("category indices are not contiguous".into()));
    }
    let categories = CategoryList::new(
        categories.iter().map(|c| c.1.clone()).collect(),
        categories.iter().map(|c| c.2).collect(),
    )?;
    let score_temperature = score_temperature.ok_or_else(|| bad(format!("missing `{SCORE_TEMPERATURE}`")))?;
    Ok(Checkpoint { params: ModelParams::from_named_blocks(&tensors)?, categories, score_temperature })
}

pub fn encode(ckpt: &Checkpoint) -> Vec<u8> {
    encode_blocks(&blocks(ckpt))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode(path, &read_bytes(path)?)
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_bytes(path, &encode(ckpt))
}
