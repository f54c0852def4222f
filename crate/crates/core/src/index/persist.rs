//! Index file layout (all integers little-endian):
//!
//! ```text
//! "WOW1"
//! version u32 | d u32 | n u64 | metric u8 | o u16 | m u16 | omega_c u32 | top u16 | seed u64
//! attribute tree: pair count u64, then (value i64, dup_count u32) ascending
//! for layer in 0..=top, for vertex in 0..n: degree u8, degree x neighbor u32
//! tombstone bitmap: ceil(n / 8) bytes, vertex i at bit i % 8 of byte i / 8
//! ```
//!
//! Vectors and per-vertex attributes are not stored; loading needs the
//! dataset the index was built from.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::AtomicBool;

use parking_lot::RwLock;

use crate::attr_tree::AttrTree;
use crate::dataset::HybridDataset;
use crate::distance::Metric;
use crate::error::{Error, Result};

use super::{AttrIndex, IndexParams, Layer, WowIndex};

pub const MAGIC: &[u8; 4] = b"WOW1";
pub const VERSION: u32 = 1;

/// Decoded index file, before any cross-checks against a dataset.
#[derive(Debug, Clone)]
pub struct IndexImage {
    pub dim: u32,
    pub n: u64,
    pub metric: Metric,
    pub o: u16,
    pub m: u16,
    pub omega_c: u32,
    pub top: u16,
    pub seed: u64,
    pub tree: AttrTree,
    /// `layers[l][v]` is `v`'s neighbor list at layer `l`.
    pub layers: Vec<Vec<Vec<u32>>>,
    pub deleted: Vec<bool>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, field: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Corrupt {
                field,
                offset: self.pos as u64,
                msg: format!("need {len} bytes, {} left", self.bytes.len() - self.pos),
            });
        };
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self, field: &'static str) -> Result<u8> {
        Ok(self.take(1, field)?[0])
    }

    fn u16(&mut self, field: &'static str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, field)?.try_into().unwrap()))
    }

    fn u32(&mut self, field: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    fn u64(&mut self, field: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }

    fn corrupt(&self, field: &'static str, at: usize, msg: impl Into<String>) -> Error {
        Error::Corrupt {
            field,
            offset: at as u64,
            msg: msg.into(),
        }
    }
}

impl IndexImage {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.dim.to_le_bytes());
        out.extend_from_slice(&self.n.to_le_bytes());
        out.push(self.metric.tag());
        out.extend_from_slice(&self.o.to_le_bytes());
        out.extend_from_slice(&self.m.to_le_bytes());
        out.extend_from_slice(&self.omega_c.to_le_bytes());
        out.extend_from_slice(&self.top.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        self.tree.write_to(&mut out);
        for layer in &self.layers {
            for list in layer {
                out.push(list.len() as u8);
                for &id in list {
                    out.extend_from_slice(&id.to_le_bytes());
                }
            }
        }
        let mut bitmap = vec![0u8; self.deleted.len().div_ceil(8)];
        for (i, _) in self.deleted.iter().enumerate().filter(|(_, &d)| d) {
            bitmap[i / 8] |= 1 << (i % 8);
        }
        out.extend_from_slice(&bitmap);
        out
    }

    /// Parses the byte layout only; semantic checks live in
    /// [`super::verify_image`] and [`WowIndex::from_image`].
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(r.corrupt("magic", 0, "expected \"WOW1\""));
        }
        let at = r.pos;
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(r.corrupt("version", at, format!("unsupported version {version}")));
        }
        let dim = r.u32("d")?;
        let n = r.u64("n")?;
        let at = r.pos;
        let tag = r.u8("metric")?;
        let metric = Metric::from_tag(tag).ok_or_else(|| r.corrupt("metric", at, format!("unknown tag {tag}")))?;
        let at = r.pos;
        let o = r.u16("o")?;
        if o < 2 {
            return Err(r.corrupt("o", at, format!("window base {o} < 2")));
        }
        let at = r.pos;
        let m = r.u16("m")?;
        if m < 2 || m % 2 != 0 || m > u8::MAX as u16 {
            return Err(r.corrupt("m", at, format!("max degree {m} is not even in [2, 254]")));
        }
        let omega_c = r.u32("omega_c")?;
        let top = r.u16("top")?;
        let seed = r.u64("seed")?;

        let (tree, used) = AttrTree::read_from(&bytes[r.pos..], r.pos as u64)?;
        r.pos += used;

        let layer_count = top as usize + 1;
        // each list costs at least its degree byte
        let min_bytes = (n as u128) * layer_count as u128 + (n as u128).div_ceil(8);
        if min_bytes > (bytes.len() - r.pos) as u128 {
            return Err(r.corrupt("n", 8, format!("{n} vertices x {layer_count} layers exceed file size")));
        }
        let n_usize = n as usize;
        let mut layers = Vec::with_capacity(layer_count);
        for _ in 0..layer_count {
            let mut lists = Vec::with_capacity(n_usize);
            for _ in 0..n_usize {
                let degree = r.u8("neighbor list")? as usize;
                let raw = r.take(4 * degree, "neighbor list")?;
                lists.push(
                    raw.chunks_exact(4)
                        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                );
            }
            layers.push(lists);
        }
        let at = r.pos;
        let bitmap = r.take(n_usize.div_ceil(8), "tombstone bitmap")?;
        let deleted: Vec<bool> = (0..n_usize).map(|i| bitmap[i / 8] & (1 << (i % 8)) != 0).collect();
        if !n_usize.is_multiple_of(8) && bitmap.last().is_some_and(|b| b >> (n_usize % 8) != 0) {
            return Err(r.corrupt("tombstone bitmap", at, "padding bits set"));
        }
        if r.pos != bytes.len() {
            return Err(r.corrupt("trailing data", r.pos, format!("{} unexpected bytes", bytes.len() - r.pos)));
        }
        Ok(Self {
            dim,
            n,
            metric,
            o,
            m,
            omega_c,
            top,
            seed,
            tree,
            layers,
            deleted,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

impl WowIndex {
    pub fn to_image(&self) -> IndexImage {
        let layers = self.layers.read();
        IndexImage {
            dim: self.dim() as u32,
            n: self.len() as u64,
            metric: self.params.metric,
            o: self.params.o as u16,
            m: self.params.m as u16,
            omega_c: self.params.omega_c as u32,
            top: (layers.len() - 1) as u16,
            seed: self.params.seed,
            tree: self.attrs.read().tree.clone(),
            layers: layers
                .iter()
                .map(|l| l.lists.iter().map(|x| x.read().clone()).collect())
                .collect(),
            deleted: (0..self.len()).map(|i| self.is_deleted(i as u32)).collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_image().encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, dataset: HybridDataset) -> Result<Self> {
        Self::from_image(IndexImage::read(path)?, dataset)
    }

    /// Rebuilds an index from a decoded image and its dataset, rejecting
    /// anything that would make searches unsafe (bad ids, oversized lists,
    /// attribute tree out of sync with the dataset).
    pub fn from_image(image: IndexImage, dataset: HybridDataset) -> Result<Self> {
        let mismatch = |field: &'static str, msg: String| Error::Corrupt { field, offset: 0, msg };
        if image.dim as usize != dataset.dim() && !(image.n == 0 && dataset.is_empty()) {
            return Err(mismatch("d", format!("index has d={}, dataset d={}", image.dim, dataset.dim())));
        }
        if image.n as usize != dataset.len() {
            return Err(mismatch("n", format!("index has n={}, dataset n={}", image.n, dataset.len())));
        }
        if image.metric != dataset.metric() {
            return Err(mismatch("metric", format!("index uses {}, dataset {}", image.metric, dataset.metric())));
        }
        let n = dataset.len();
        let m = image.m as usize;
        for (l, layer) in image.layers.iter().enumerate() {
            for (v, list) in layer.iter().enumerate() {
                if list.len() > m || list.iter().any(|&x| x as usize >= n || x as usize == v) {
                    return Err(mismatch(
                        "neighbor list",
                        format!("vertex {v} at layer {l} has an invalid list {list:?}"),
                    ));
                }
            }
        }
        let mut by_value: HashMap<i64, Vec<u32>> = HashMap::new();
        for (id, &a) in dataset.attributes().iter().enumerate() {
            by_value.entry(a).or_default().push(id as u32);
        }
        let consistent = image.tree.unique_len() == by_value.len()
            && image
                .tree
                .iter()
                .all(|(v, d)| by_value.get(&v).is_some_and(|ids| ids.len() == d as usize));
        if !consistent {
            return Err(mismatch("attribute tree", "does not match the dataset attributes".into()));
        }
        let params = IndexParams {
            m,
            omega_c: image.omega_c as usize,
            o: image.o as usize,
            metric: image.metric,
            seed: image.seed,
            ..IndexParams::default()
        };
        params.validate()?;
        Ok(Self {
            params,
            data: dataset,
            layers: RwLock::new(
                image
                    .layers
                    .into_iter()
                    .map(|l| Layer {
                        lists: l.into_iter().map(RwLock::new).collect(),
                    })
                    .collect(),
            ),
            attrs: RwLock::new(AttrIndex {
                tree: image.tree,
                by_value,
            }),
            deleted: image.deleted.into_iter().map(AtomicBool::new).collect(),
            claimed: (0..n).map(|_| AtomicBool::new(true)).collect(),
        })
    }
}
