//! Posed depth frames: a text header plus a sibling `.depth` blob of
//! little-endian `f32` values, `H × W` row-major.

use std::path::{Path, PathBuf};

use pla_core::geometry::{CameraFrame, Intrinsics};
use pla_core::linalg::RigidTransform;

use super::{read_text, write_bytes};
use crate::error::{Error, Result};

pub fn depth_path(frame_path: &Path) -> PathBuf {
    frame_path.with_extension("depth")
}

fn numbers(path: &Path, line_no: usize, line: Option<&str>, count: usize) -> Result<Vec<f64>> {
    let line = line.ok_or_else(|| Error::parse(path, line_no, "unexpected end of file"))?;
    let vals: Vec<f64> = line
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| Error::parse(path, line_no, format!("bad number `{t}`"))))
        .collect::<Result<_>>()?;
    if vals.len() != count {
        return Err(Error::parse(path, line_no, format!("expected {count} numbers, found {}", vals.len())));
    }
    Ok(vals)
}

pub fn load_frame(path: &Path) -> Result<CameraFrame> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    let k = numbers(path, 1, lines.next(), 4)?;
    let mut m = [[0.0; 4]; 4];
    for (r, row) in m.iter_mut().enumerate() {
        row.copy_from_slice(&numbers(path, r + 2, lines.next(), 4)?);
    }
    let hw = numbers(path, 6, lines.next(), 2)?;
    let (h, w) = (hw[0] as usize, hw[1] as usize);
    let frame_id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();

    let dpath = depth_path(path);
    let blob = match std::fs::read(&dpath) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::MissingInput(format!("depth file for frame `{frame_id}` ({})", dpath.display())))
        }
        Err(e) => return Err(Error::io(&dpath, e)),
    };
    if blob.len() != h * w * 4 {
        return Err(Error::Format {
            path: dpath,
            offset: 0,
            reason: format!("{h}x{w} frame needs {} bytes, found {}", h * w * 4, blob.len()),
        });
    }
    let depth = blob.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
    let intrinsics = Intrinsics { fx: k[0], fy: k[1], cx: k[2], cy: k[3] };
    Ok(CameraFrame::new(frame_id, intrinsics, RigidTransform { m }, w, h, depth)?)
}

pub fn save_frame(path: &Path, frame: &CameraFrame) -> Result<()> {
    let k = &frame.intrinsics;
    let mut text = format!("{} {} {} {}\n", k.fx, k.fy, k.cx, k.cy);
    for row in &frame.world_from_camera.m {
        text.push_str(&format!("{} {} {} {}\n", row[0], row[1], row[2], row[3]));
    }
    text.push_str(&format!("{} {}\n", frame.height, frame.width));
    write_bytes(path, text.as_bytes())?;
    let blob: Vec<u8> = frame.depth.iter().flat_map(|d| (*d as f32).to_le_bytes()).collect();
    write_bytes(&depth_path(path), &blob)
}

/// Every frame of one scene from `<dir>/<scene>/*.txt`, sorted by id.
pub fn load_scene_frames(dir: &Path, scene: &str) -> Result<Vec<CameraFrame>> {
    let scene_dir = dir.join(scene);
    let entries = std::fs::read_dir(&scene_dir).map_err(|e| Error::io(&scene_dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| Error::io(&scene_dir, e))?.path();
        if p.extension().and_then(|e| e.to_str()) == Some("txt") {
            paths.push(p);
        }
    }
    paths.sort();
    paths.iter().map(|p| load_frame(p)).collect()
}
