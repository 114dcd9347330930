//! On-disk formats. Binary files are little-endian and start with a
//! four-byte magic followed by a `u32` version.

pub mod captions;
pub mod categories;
pub mod checkpoint;
pub mod embeddings;
pub mod frame;
pub mod pairs;
pub mod report;
pub mod scene;

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const VERSION: u32 = 1;

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Cursor over a binary file that reports failures with their byte offset.
pub struct ByteReader<'a> {
    path: PathBuf,
    data: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(path: &Path, data: &'a [u8]) -> Self {
        Self { path: path.to_path_buf(), data, pos: 0 }
    }

    pub fn offset(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn error(&self, offset: usize, reason: impl ToString) -> Error {
        Error::Format { path: self.path.clone(), offset: offset as u64, reason: reason.to_string() }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(self.error(self.pos, format!("truncated: need {n} bytes, {} left", self.remaining())));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn string(&mut self) -> Result<String> {
        let at = self.pos;
        let n = self.u32()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| self.error(at, "string is not valid UTF-8"))
    }

    /// Checks the magic and version header.
    pub fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.take(4).map_err(|_| self.error(0, "file too short for a header"))?;
        if got != magic {
            return Err(self.error(0, format!("bad magic {:?}, expected {:?}", lossy(got), lossy(magic))));
        }
        let version = self.u32()?;
        if version != VERSION {
            return Err(self.error(4, format!("unsupported version {version}")));
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(self.error(self.pos, format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }
}

fn lossy(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[derive(Default)]
pub struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn with_header(magic: &[u8; 4]) -> Self {
        let mut w = Self::default();
        w.buf.extend_from_slice(magic);
        w.u32(VERSION);
        w
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn i32(&mut self, v: i32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn string(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}

/// First four bytes of a file, used to dispatch `inspect`.
pub fn sniff_magic(path: &Path) -> Result<[u8; 4]> {
    let bytes = read_bytes(path)?;
    bytes
        .get(..4)
        .map(|m| m.try_into().unwrap())
        .ok_or_else(|| Error::Format { path: path.into(), offset: 0, reason: "file too short for a header".into() })
}
