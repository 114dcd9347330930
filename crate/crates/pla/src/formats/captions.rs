//! Caption records as JSON lines.

use std::path::Path;

use pla_core::association::{CaptionRecord, CaptionSource};
use serde::{Deserialize, Serialize};

use super::{read_text, write_bytes};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct CaptionLine {
    scene: String,
    frame: Option<String>,
    level: String,
    text: String,
}

pub fn parse_captions(path: &Path, text: &str) -> Result<Vec<CaptionRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: CaptionLine = serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e))?;
        if rec.text.trim().is_empty() {
            return Err(Error::parse(path, i + 1, "caption text is empty"));
        }
        let source = match (rec.level.as_str(), rec.frame) {
            ("scene", None) => CaptionSource::Scene,
            ("view", Some(frame)) => CaptionSource::View { frame },
            ("scene", Some(_)) => return Err(Error::parse(path, i + 1, "scene captions take `frame: null`")),
            ("view", None) => return Err(Error::parse(path, i + 1, "view captions need a frame")),
            (other, _) => return Err(Error::parse(path, i + 1, format!("unsupported level `{other}`"))),
        };
        out.push(CaptionRecord { scene_id: rec.scene, source, text: rec.text });
    }
    Ok(out)
}

pub fn load_captions(path: &Path) -> Result<Vec<CaptionRecord>> {
    parse_captions(path, &read_text(path)?)
}

pub fn save_captions(path: &Path, captions: &[CaptionRecord]) -> Result<()> {
    let mut out = String::new();
    for c in captions {
        let line = CaptionLine {
            scene: c.scene_id.clone(),
            frame: c.frame().map(String::from),
            level: c.level().as_str().to_string(),
            text: c.text.clone(),
        };
        out.push_str(&serde_json::to_string(&line).expect("caption serializes"));
        out.push('\n');
    }
    write_bytes(path, out.as_bytes())
}
