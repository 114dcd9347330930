//! `PLAE` embedding tables: count, dim, then `(key, dim × f32)` records.

use std::path::Path;

use pla_core::text::EmbeddingTable;

use super::{read_bytes, write_bytes, ByteReader, ByteWriter};
use crate::error::Result;

pub const MAGIC: &[u8; 4] = b"PLAE";

/// Later records with an already-seen key replace the earlier vector.
pub fn decode(path: &Path, bytes: &[u8]) -> Result<EmbeddingTable> {
    let mut r = ByteReader::new(path, bytes);
    r.header(MAGIC)?;
    let count = r.u32()?;
    let at = r.offset();
    let dim = r.u32()? as usize;
    let mut table = EmbeddingTable::new(dim).map_err(|e| r.error(at, e))?;
    for _ in 0..count {
        let at = r.offset();
        let key = r.string()?;
        let mut v = Vec::with_capacity(dim);
        for _ in 0..dim {
            v.push(r.f32()?);
        }
        if table.insert(key.clone(), v).map_err(|e| r.error(at, e))? {
            log::warn!("{}: duplicate embedding key `{key}`; keeping the last record", path.display());
        }
    }
    r.finish()?;
    Ok(table)
}

pub fn encode(table: &EmbeddingTable) -> Vec<u8> {
    let mut w = ByteWriter::with_header(MAGIC);
    w.u32(table.len() as u32);
    w.u32(table.dim() as u32);
    for (key, v) in table.iter() {
        w.string(key);
        v.iter().for_each(|x| w.f32(*x));
    }
    w.into_bytes()
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    decode(path, &read_bytes(path)?)
}

pub fn save_embeddings(path: &Path, table: &EmbeddingTable) -> Result<()> {
    write_bytes(path, &encode(table))
}
