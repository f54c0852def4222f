use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::distance::Metric;
use crate::error::{Error, Result};

/// Dense vector identifier, assigned consecutively in insertion order.
pub type VectorId = u32;

/// Totally ordered attribute value. Non-integer attributes are mapped to
/// integer ranks at ingestion; the index only ever compares them.
pub type AttributeValue = i64;

/// Inclusive attribute range `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RangeFilter {
    x: AttributeValue,
    y: AttributeValue,
}

impl RangeFilter {
    pub fn new(x: AttributeValue, y: AttributeValue) -> Result<Self> {
        if x > y {
            return Err(Error::InvalidRange { x, y });
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> AttributeValue {
        self.x
    }

    pub fn y(&self) -> AttributeValue {
        self.y
    }

    #[inline]
    pub fn contains(&self, a: AttributeValue) -> bool {
        in_range(a, self)
    }
}

#[inline]
pub fn in_range(a: AttributeValue, r: &RangeFilter) -> bool {
    r.x <= a && a <= r.y
}

/// A vertex id paired with its distance to some target.
///
/// Ordered by `(distance, id)` so ties always resolve to the smaller id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: VectorId,
    pub distance: f32,
}

impl Neighbor {
    pub fn new(id: VectorId, distance: f32) -> Self {
        Self { id, distance }
    }
}

impl Eq for Neighbor {}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.id.cmp(&other.id))
    }
}

/// Parallel store of `d`-dimensional vectors and their attribute values.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridDataset {
    dim: usize,
    metric: Metric,
    vectors: Vec<f32>,
    attributes: Vec<AttributeValue>,
}

impl HybridDataset {
    pub fn new(dim: usize, metric: Metric) -> Self {
        Self {
            dim,
            metric,
            vectors: Vec::new(),
            attributes: Vec::new(),
        }
    }

    pub fn from_parts(
        dim: usize,
        metric: Metric,
        vectors: Vec<f32>,
        attributes: Vec<AttributeValue>,
    ) -> Result<Self> {
        if dim == 0 && !vectors.is_empty() {
            return Err(Error::InvalidParams("dimension must be positive".into()));
        }
        let n = vectors.len().checked_div(dim).unwrap_or(0);
        if dim > 0 && !vectors.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: vectors.len() % dim,
            });
        }
        if n != attributes.len() {
            return Err(Error::InvalidParams(format!(
                "{n} vectors but {} attribute values",
                attributes.len()
            )));
        }
        Ok(Self {
            dim,
            metric,
            vectors,
            attributes,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn push(&mut self, v: &[f32], a: AttributeValue) -> Result<VectorId> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        let id = VectorId::try_from(self.len())
            .map_err(|_| Error::InvalidParams("dataset exceeds u32 ids".into()))?;
        self.vectors.extend_from_slice(v);
        self.attributes.push(a);
        Ok(id)
    }

    #[inline]
    pub fn vector(&self, id: VectorId) -> &[f32] {
        let start = id as usize * self.dim;
        &self.vectors[start..start + self.dim]
    }

    #[inline]
    pub fn attribute(&self, id: VectorId) -> AttributeValue {
        self.attributes[id as usize]
    }

    pub fn attributes(&self) -> &[AttributeValue] {
        &self.attributes
    }

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn iter(&self) -> impl Iterator<Item = (VectorId, &[f32], AttributeValue)> + '_ {
        self.attributes
            .iter()
            .enumerate()
            .map(move |(i, &a)| (i as VectorId, self.vector(i as VectorId), a))
    }

    /// Reorders the pairs by attribute (ties by id) and replaces each
    /// attribute with its position in that order.
    pub fn rank_remap(&self) -> Self {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by_key(|&i| (self.attributes[i], i));
        let mut out = Self::new(self.dim, self.metric);
        for (rank, &i) in order.iter().enumerate() {
            out.vectors.extend_from_slice(self.vector(i as VectorId));
            out.attributes.push(rank as AttributeValue);
        }
        out
    }

    /// Seeded permutation of the pairs.
    pub fn shuffled(&self, seed: u64) -> Self {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut out = Self::new(self.dim, self.metric);
        for &i in &order {
            out.vectors.extend_from_slice(self.vector(i as VectorId));
            out.attributes.push(self.attributes[i]);
        }
        out
    }
}
