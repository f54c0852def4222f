use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::dataset::{Neighbor, RangeFilter, VectorId};
use crate::distance::DistanceCounter;
use crate::error::{Error, Result};

use super::{highest_covered_layer, Layer, WowIndex};

/// Which layer a k-NN query starts its per-hop scans from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LandingLayer {
    /// Layer whose window size best matches the in-range unique count.
    #[default]
    Auto,
    /// Fixed layer, clamped to the current top.
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryOptions {
    /// Stop descending at the first layer whose scan saw no out-of-range neighbor.
    pub early_stop: bool,
    pub landing: LandingLayer,
    /// Record per-hop layer footprints.
    pub trace: bool,
}

impl Default for QueryOptions {
    fn default() -> Self {
        Self {
            early_stop: true,
            landing: LandingLayer::Auto,
            trace: false,
        }
    }
}

/// Layers touched by one hop: scans start at `l_max` and stop at `l_min`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct HopFootprint {
    pub l_max: usize,
    pub l_min: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchStats {
    /// Outer beam-search iterations that expanded a vertex.
    pub hops: u64,
    /// Sum over hops of the in-range share of the expanded vertex's
    /// neighbors at the first scanned layer.
    pub top_layer_in_range_sum: f64,
    /// Hops contributing to `top_layer_in_range_sum` (non-empty lists).
    pub top_layer_samples: u64,
    /// Filled only when tracing is on.
    pub footprint: Vec<HopFootprint>,
    /// Layer the last k-NN query landed on.
    pub landing_layer: usize,
}

impl SearchStats {
    pub fn mean_top_layer_in_range(&self) -> Option<f64> {
        (self.top_layer_samples > 0).then(|| self.top_layer_in_range_sum / self.top_layer_samples as f64)
    }
}

/// Per-thread scratch state for searches: heaps, epoch-stamped visited
/// marks and the distance counter.
#[derive(Debug, Clone)]
pub struct SearchContext {
    visited: Vec<u32>,
    epoch: u32,
    candidates: BinaryHeap<Reverse<Neighbor>>,
    results: BinaryHeap<Neighbor>,
    scratch: Vec<VectorId>,
    pub counter: DistanceCounter,
    pub stats: SearchStats,
    pub options: QueryOptions,
}

impl SearchContext {
    pub fn new(n: usize) -> Self {
        Self {
            visited: vec![0; n],
            epoch: 0,
            candidates: BinaryHeap::new(),
            results: BinaryHeap::new(),
            scratch: Vec::new(),
            counter: DistanceCounter::new(),
            stats: SearchStats::default(),
            options: QueryOptions::default(),
        }
    }

    pub fn with_options(mut self, options: QueryOptions) -> Self {
        self.options = options;
        self
    }

    pub(crate) fn ensure_capacity(&mut self, n: usize) {
        if self.visited.len() < n {
            self.visited.resize(n, 0);
        }
    }

    fn next_epoch(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.visited.iter_mut().for_each(|v| *v = 0);
            self.epoch = 1;
        }
    }

    #[inline]
    fn visit(&mut self, id: VectorId) -> bool {
        let slot = &mut self.visited[id as usize];
        if *slot == self.epoch {
            false
        } else {
            *slot = self.epoch;
            true
        }
    }

    #[inline]
    fn is_visited(&self, id: VectorId) -> bool {
        self.visited[id as usize] == self.epoch
    }

    /// Clears the counter and statistics before a new query.
    pub fn reset(&mut self) {
        self.counter.reset();
        self.stats = SearchStats::default();
    }
}

/// Landing layer for a range holding `n_unique` distinct values: the
/// better of `l_h = floor(log_o(n/2))` and `l_h + 1` by the ratio
/// `min(2o^l, n) / max(2o^l, n)`, ties to the lower layer, clamped to `top`.
pub fn landing_layer(o: usize, top: usize, n_unique: usize) -> usize {
    let lh = (highest_covered_layer(o as u64, n_unique as u64) as usize).min(top);
    let up = (lh + 1).min(top);
    let ratio = |l: usize| {
        let w = 2.0 * (o as f64).powi(l as i32);
        let n = n_unique as f64;
        w.min(n) / w.max(n)
    };
    if up != lh && ratio(up) > ratio(lh) {
        up
    } else {
        lh
    }
}

impl WowIndex {
    /// Multi-layer beam search from `ep` restricted to `range`, scanning
    /// layers `l_max` down to `l_min` at every hop. Returns up to `omega`
    /// in-range, non-deleted vertices sorted by `(distance, id)`.
    #[allow(clippy::too_many_arguments)]
    pub fn search_candidates(
        &self,
        ep: VectorId,
        target: &[f32],
        range: &RangeFilter,
        l_min: usize,
        l_max: usize,
        omega: usize,
        ctx: &mut SearchContext,
    ) -> Result<Vec<Neighbor>> {
        if ep as usize >= self.len() {
            return Err(Error::InvalidId { id: ep, len: self.len() });
        }
        if self.is_deleted(ep) {
            return Err(Error::DeletedEntry(ep));
        }
        let attr = self.data.attribute(ep);
        if !range.contains(attr) {
            return Err(Error::EntryOutOfRange { id: ep, attr });
        }
        if target.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: target.len() });
        }
        if omega == 0 {
            return Err(Error::InvalidParams("beam width must be >= 1".into()));
        }
        let layers = self.layers.read();
        let top = layers.len() - 1;
        if l_min > l_max || l_max > top {
            return Err(Error::InvalidParams(format!(
                "layer range [{l_min}, {l_max}] outside [0, {top}]"
            )));
        }
        ctx.ensure_capacity(self.len());
        Ok(self.beam(&layers, ep, target, range, l_min, l_max, omega, ctx))
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn beam(
        &self,
        layers: &[Layer],
        ep: VectorId,
        target: &[f32],
        range: &RangeFilter,
        l_min: usize,
        l_max: usize,
        omega: usize,
        ctx: &mut SearchContext,
    ) -> Vec<Neighbor> {
        let m = self.params.m;
        let early_stop = ctx.options.early_stop;
        let trace = ctx.options.trace;
        ctx.next_epoch();
        ctx.candidates.clear();
        ctx.results.clear();

        let start = Neighbor::new(ep, self.dist_to(target, ep, &mut ctx.counter));
        ctx.visit(ep);
        ctx.candidates.push(Reverse(start));
        if !self.is_deleted(ep) {
            ctx.results.push(start);
        }

        let mut list = std::mem::take(&mut ctx.scratch);
        while let Some(Reverse(s)) = ctx.candidates.pop() {
            if ctx.results.len() >= omega && ctx.results.peek().is_some_and(|w| s > *w) {
                break;
            }
            ctx.stats.hops += 1;
            let mut accepted = 0usize;
            let mut l = l_max;
            loop {
                list.clear();
                list.extend_from_slice(&layers[l].lists[s.id as usize].read());
                let mut descend = false;
                let mut in_range = 0usize;
                for &j in &list {
                    if !range.contains(self.data.attribute(j)) {
                        descend = true;
                        continue;
                    }
                    in_range += 1;
                    if accepted >= m || ctx.is_visited(j) {
                        continue;
                    }
                    ctx.visit(j);
                    accepted += 1;
                    let cand = Neighbor::new(j, self.dist_to(target, j, &mut ctx.counter));
                    let admit = ctx.results.len() < omega || ctx.results.peek().is_some_and(|w| cand < *w);
                    if admit {
                        ctx.candidates.push(Reverse(cand));
                        if !self.is_deleted(j) {
                            ctx.results.push(cand);
                            if ctx.results.len() > omega {
                                ctx.results.pop();
                            }
                        }
                    }
                }
                if l == l_max && !list.is_empty() {
                    ctx.stats.top_layer_in_range_sum += in_range as f64 / list.len() as f64;
                    ctx.stats.top_layer_samples += 1;
                }
                if l == l_min || (early_stop && !descend) {
                    break;
                }
                l -= 1;
            }
            if trace {
                ctx.stats.footprint.push(HopFootprint { l_max, l_min: l });
            }
        }
        ctx.scratch = list;
        let mut out: Vec<Neighbor> = ctx.results.drain().collect();
        out.sort();
        out
    }

    /// Landing layer for this index's current top.
    pub fn landing_layer(&self, n_unique: usize) -> usize {
        landing_layer(self.params.o, self.top(), n_unique)
    }

    /// Top-`k` in-range neighbors of `q` using beam width `omega_s`.
    ///
    /// Resets `ctx`'s counter and statistics first, so both describe this
    /// query alone afterwards. An empty range yields an empty result.
    pub fn search_knn(
        &self,
        q: &[f32],
        range: &RangeFilter,
        k: usize,
        omega_s: usize,
        ctx: &mut SearchContext,
    ) -> Result<Vec<Neighbor>> {
        if k == 0 {
            return Err(Error::InvalidParams("k must be >= 1".into()));
        }
        if omega_s < k {
            return Err(Error::InvalidParams(format!("omega_s ({omega_s}) must be >= k ({k})")));
        }
        if q.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: q.len() });
        }
        ctx.reset();
        ctx.ensure_capacity(self.len());

        let Some((entry, n_unique)) = self.entry_for(range) else {
            return Ok(Vec::new());
        };
        let layers = self.layers.read();
        let top = layers.len() - 1;
        let l_d = match ctx.options.landing {
            LandingLayer::Auto => landing_layer(self.params.o, top, n_unique),
            LandingLayer::Fixed(l) => l.min(top),
        };
        ctx.stats.landing_layer = l_d;
        let mut out = self.beam(&layers, entry, q, range, 0, l_d, omega_s, ctx);
        out.truncate(k);
        Ok(out)
    }

    /// Live vertex whose value is closest to the median rank of `range`,
    /// scanning outward by rank past tombstoned values, plus the in-range
    /// unique count.
    fn entry_for(&self, range: &RangeFilter) -> Option<(VectorId, usize)> {
        let attrs = self.attrs.read();
        let card = attrs.tree.filtered_cardinality(range);
        if card.unique == 0 {
            return None;
        }
        let lo = attrs.tree.count_below(range.x(), false).unique;
        let hi = lo + card.unique - 1;
        let mid = (lo + hi) / 2;
        let live_at = |rank: usize| {
            let value = attrs.tree.select(rank).ok()?;
            attrs.by_value.get(&value)?.iter().copied().find(|&id| !self.is_deleted(id))
        };
        let mut step = 0usize;
        loop {
            let up = mid + step;
            let down = mid.checked_sub(step).filter(|&r| r >= lo);
            if up > hi && down.is_none() {
                return None;
            }
            if up <= hi {
                if let Some(id) = live_at(up) {
                    return Some((id, card.unique));
                }
            }
            if step > 0 {
                if let Some(id) = down.and_then(live_at) {
                    return Some((id, card.unique));
                }
            }
            step += 1;
        }
    }
}
