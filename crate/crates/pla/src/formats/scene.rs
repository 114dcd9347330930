//! Scene point clouds: `PLAS` binary or whitespace-separated text.

use std::path::{Path, PathBuf};

use pla_core::geometry::PointCloud;

use super::{read_bytes, read_text, write_bytes, ByteReader, ByteWriter};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PLAS";

/// Scene id used for a scene file: its file stem.
pub fn scene_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Loads a cloud and validates labels against `num_categories`.
pub fn load_scene(path: &Path, num_categories: usize) -> Result<PointCloud> {
    let cloud = match path.extension().and_then(|e| e.to_str()) {
        Some("tsv") | Some("txt") => parse_tsv(path, &read_text(path)?)?,
        _ => decode(path, &read_bytes(path)?, num_categories)?,
    };
    cloud.validate(num_categories)?;
    Ok(cloud)
}

pub fn decode(path: &Path, bytes: &[u8], num_categories: usize) -> Result<PointCloud> {
    let mut r = ByteReader::new(path, bytes);
    r.header(MAGIC)?;
    let n = r.u32()? as usize;
    let at = r.offset();
    let k = r.u32()? as usize;
    if k != num_categories {
        return Err(r.error(at, format!("file declares {k} categories, expected {num_categories}")));
    }
    if r.remaining() != n * 28 {
        return Err(r.error(r.offset(), format!("{n} records need {} bytes, found {}", n * 28, r.remaining())));
    }
    let mut positions = Vec::with_capacity(n);
    let mut colors = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        positions.push([r.f32()? as f64, r.f32()? as f64, r.f32()? as f64]);
        colors.push([r.f32()? as f64, r.f32()? as f64, r.f32()? as f64]);
        labels.push(r.i32()?);
    }
    r.finish()?;
    Ok(PointCloud { scene_id: scene_id(path), positions, colors, labels })
}

/// Decodes against the category count the file itself declares.
pub fn decode_any(path: &Path, bytes: &[u8]) -> Result<PointCloud> {
    let mut r = ByteReader::new(path, bytes);
    r.header(MAGIC)?;
    r.u32()?;
    let k = r.u32()? as usize;
    decode(path, bytes, k)
}

pub fn encode(cloud: &PointCloud, num_categories: usize) -> Vec<u8> {
    let mut w = ByteWriter::with_header(MAGIC);
    w.u32(cloud.len() as u32);
    w.u32(num_categories as u32);
    for i in 0..cloud.len() {
        for v in cloud.positions[i].iter().chain(&cloud.colors[i]) {
            w.f32(*v as f32);
        }
        w.i32(cloud.labels[i]);
    }
    w.into_bytes()
}

pub fn save_scene(path: &Path, cloud: &PointCloud, num_categories: usize) -> Result<()> {
    write_bytes(path, &encode(cloud, num_categories))
}

/// `x y z r g b label` per line; blank lines and `#` comments skipped.
pub fn parse_tsv(path: &Path, text: &str) -> Result<PointCloud> {
    let mut positions = Vec::new();
    let mut colors = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 7 {
            return Err(Error::parse(path, i + 1, format!("expected 7 fields, found {}", fields.len())));
        }
        let mut v = [0.0; 6];
        for (slot, f) in v.iter_mut().zip(&fields[..6]) {
            *slot = f.parse().map_err(|_| Error::parse(path, i + 1, format!("bad number `{f}`")))?;
        }
        let label = fields[6].parse().map_err(|_| Error::parse(path, i + 1, format!("bad label `{}`", fields[6])))?;
        positions.push([v[0], v[1], v[2]]);
        colors.push([v[3], v[4], v[5]]);
        labels.push(label);
    }
    Ok(PointCloud { scene_id: scene_id(path), positions, colors, labels })
}

/// Scene files (`.plas`, `.tsv`) in a directory, sorted by name.
pub fn list_scenes(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if matches!(path.extension().and_then(|e| e.to_str()), Some("plas" | "tsv")) {
            out.push(path);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::MissingInput(format!("no scene files in {}", dir.display())));
    }
    Ok(out)
}
