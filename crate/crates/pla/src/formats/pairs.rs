//! Point–caption pairs: JSON lines for reading, `PLAP` binary for training.

use std::path::Path;

use pla_core::association::{CaptionRecord, CaptionSource, EntityKind, PointCaptionPair};
use pla_core::index_set::PointIndexSet;
use serde::Serialize;

use super::{read_bytes, write_bytes, ByteReader, ByteWriter};
use crate::error::Result;

pub const MAGIC: &[u8; 4] = b"PLAP";

#[derive(Serialize)]
struct PairLine<'a> {
    scene: &'a str,
    level: &'a str,
    caption: &'a str,
    indices: &'a [u32],
}

pub fn to_jsonl(pairs: &[PointCaptionPair]) -> String {
    let mut out = String::new();
    for p in pairs {
        let line = PairLine {
            scene: p.points.scene_id(),
            level: p.level().as_str(),
            caption: &p.caption.text,
            indices: p.points.indices(),
        };
        out.push_str(&serde_json::to_string(&line).expect("pair serializes"));
        out.push('\n');
    }
    out
}

fn kind_code(kind: EntityKind) -> u8 {
    match kind {
        EntityKind::FirstOnly => 0,
        EntityKind::SecondOnly => 1,
        EntityKind::Shared => 2,
    }
}

pub fn encode(pairs: &[PointCaptionPair]) -> Vec<u8> {
    let mut w = ByteWriter::with_header(MAGIC);
    w.u32(pairs.len() as u32);
    for p in pairs {
        w.string(p.points.scene_id());
        match &p.caption.source {
            CaptionSource::Scene => w.u8(0),
            CaptionSource::View { frame } => {
                w.u8(1);
                w.string(frame);
            }
            CaptionSource::Entity { first, second, kind } => {
                w.u8(2);
                w.string(first);
                w.string(second);
                w.u8(kind_code(*kind));
            }
        }
        w.string(&p.caption.text);
        w.u32(p.points.len() as u32);
        p.points.indices().iter().for_each(|&i| w.u32(i));
    }
    w.into_bytes()
}

pub fn decode(path: &Path, bytes: &[u8]) -> Result<Vec<PointCaptionPair>> {
    let mut r = ByteReader::new(path, bytes);
    r.header(MAGIC)?;
    let count = r.u32()?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let scene = r.string()?;
        let at = r.offset();
        let source = match r.u8()? {
            0 => CaptionSource::Scene,
            1 => CaptionSource::View { frame: r.string()? },
            2 => {
                let first = r.string()?;
                let second = r.string()?;
                let at = r.offset();
                let kind = match r.u8()? {
                    0 => EntityKind::FirstOnly,
                    1 => EntityKind::SecondOnly,
                    2 => EntityKind::Shared,
                    k => return Err(r.error(at, format!("unknown entity kind {k}"))),
                };
                CaptionSource::Entity { first, second, kind }
            }
            t => return Err(r.error(at, format!("unknown level tag {t}"))),
        };
        let text = r.string()?;
        let n = r.u32()? as usize;
        let at = r.offset();
        let mut indices = Vec::with_capacity(n);
        for _ in 0..n {
            indices.push(r.u32()?);
        }
        let points = PointIndexSet::from_sorted(scene.clone(), indices).map_err(|e| r.error(at, e))?;
        out.push(PointCaptionPair { points, caption: CaptionRecord { scene_id: scene, source, text } });
    }
    r.finish()?;
    Ok(out)
}

pub fn load_pairs(path: &Path) -> Result<Vec<PointCaptionPair>> {
    decode(path, &read_bytes(path)?)
}

/// Writes `<stem>.jsonl` and `<stem>.plap` next to each other.
pub fn save_pairs(stem: &Path, pairs: &[PointCaptionPair]) -> Result<()> {
    write_bytes(&stem.with_extension("jsonl"), to_jsonl(pairs).as_bytes())?;
    write_bytes(&stem.with_extension("plap"), &encode(pairs))
}
