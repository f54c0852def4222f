//! `.fvecs` / `.ivecs` / `.bvecs` containers: each record is a little-endian
//! `i32` dimension followed by that many `f32`, `i32` or `u8` components.

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VecFormat {
    Fvecs,
    Ivecs,
    Bvecs,
}

impl VecFormat {
    fn width(self) -> usize {
        match self {
            VecFormat::Fvecs | VecFormat::Ivecs => 4,
            VecFormat::Bvecs => 1,
        }
    }

    /// Guesses the format from a file extension, defaulting to fvecs.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("ivecs") => VecFormat::Ivecs,
            Some("bvecs") => VecFormat::Bvecs,
            _ => VecFormat::Fvecs,
        }
    }
}

impl FromStr for VecFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fvecs" => Ok(VecFormat::Fvecs),
            "ivecs" => Ok(VecFormat::Ivecs),
            "bvecs" => Ok(VecFormat::Bvecs),
            other => Err(Error::InvalidParams(format!("unknown vector format {other:?}"))),
        }
    }
}

/// Row-major vectors sharing one dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VectorSet {
    pub dim: usize,
    pub data: Vec<f32>,
}

impl VectorSet {
    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

pub fn parse_vectors(bytes: &[u8], format: VecFormat, path: &Path) -> Result<VectorSet> {
    let bad = |offset: usize, msg: String| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        msg,
    };
    let mut out = VectorSet::default();
    let mut pos = 0usize;
    while pos < bytes.len() {
        let head = bytes
            .get(pos..pos + 4)
            .ok_or_else(|| bad(pos, "truncated dimension prefix".into()))?;
        let d = i32::from_le_bytes(head.try_into().unwrap());
        if d <= 0 {
            return Err(bad(pos, format!("non-positive dimension {d}")));
        }
        let d = d as usize;
        if out.dim == 0 {
            out.dim = d;
        } else if out.dim != d {
            return Err(bad(pos, format!("dimension {d} differs from {}", out.dim)));
        }
        let body_len = d * format.width();
        let body = bytes
            .get(pos + 4..pos + 4 + body_len)
            .ok_or_else(|| bad(pos, format!("truncated record: {d} components need {body_len} bytes")))?;
        match format {
            VecFormat::Fvecs => out
                .data
                .extend(body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()))),
            VecFormat::Ivecs => out
                .data
                .extend(body.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().unwrap()) as f32)),
            VecFormat::Bvecs => out.data.extend(body.iter().map(|&b| b as f32)),
        }
        pos += 4 + body_len;
    }
    Ok(out)
}

pub fn read_vectors(path: &Path, format: VecFormat) -> Result<VectorSet> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_vectors(&bytes, format, path)
}

pub fn encode_fvecs(set: &VectorSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(set.len() * (4 + 4 * set.dim));
    for i in 0..set.len() {
        out.extend_from_slice(&(set.dim as i32).to_le_bytes());
        for x in set.get(i) {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn write_fvecs(path: &Path, set: &VectorSet) -> Result<()> {
    std::fs::write(path, encode_fvecs(set)).map_err(|e| Error::io(path, e))
}
