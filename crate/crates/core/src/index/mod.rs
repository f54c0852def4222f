//! Hierarchical window graphs over a weight-balanced attribute tree.
//!
//! Layer `l` is a proximity graph whose edges stay within a window of `o^l`
//! unique attribute values on either side of each vertex. New vectors are
//! inserted top-down, reusing the candidates of the layer above whenever
//! they suffice, and every layer keeps at most `m` out-edges per vertex.
//!
//! Locking: the layer stack sits behind one `RwLock` that is only
//! write-locked to raise the top layer. Each neighbor list has its own lock,
//! so concurrent inserts contend only on the lists they adjust. The
//! attribute tree is single-writer and updated as the last step of an
//! insert, after the new vertex's edges are published.

mod bounds;
mod persist;
mod prune;
mod search;
mod stats;

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use parking_lot::{Mutex, RwLock};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attr_tree::{AttrTree, Cardinality, Window};
use crate::dataset::{AttributeValue, HybridDataset, Neighbor, RangeFilter, VectorId};
use crate::distance::{DistanceCounter, Metric};
use crate::error::{Error, Result};

pub use bounds::{expected_fraction, fraction_bounds, highest_covered_layer, BoundsCase, FractionBounds};
pub use persist::{IndexImage, MAGIC, VERSION};
pub use prune::rng_prune;
pub use search::{landing_layer, HopFootprint, LandingLayer, QueryOptions, SearchContext, SearchStats};
pub use stats::{expected_top, space_bound, verify_image, StructuralStats};

#[derive(Debug, Clone, PartialEq)]
pub struct IndexParams {
    /// Maximum out-degree per vertex per layer. Even; half is filled at insert.
    pub m: usize,
    /// Beam width used while collecting insertion candidates.
    pub omega_c: usize,
    /// Window boosting base: layer `l` has half window `o^l`.
    pub o: usize,
    pub metric: Metric,
    pub seed: u64,
    /// Drop dominated candidates during neighbor selection. Build-time only.
    pub prune_dominated: bool,
    /// Take every in-window vertex as an insertion candidate instead of
    /// running beam search. Build-time only; meant for small diagnostic builds.
    pub exhaustive_candidates: bool,
}

impl Default for IndexParams {
    fn default() -> Self {
        Self {
            m: 16,
            omega_c: 128,
            o: 4,
            metric: Metric::L2,
            seed: 0,
            prune_dominated: true,
            exhaustive_candidates: false,
        }
    }
}

impl IndexParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.m < 2 || !self.m.is_multiple_of(2) || self.m > u8::MAX as usize {
            return bad(format!("m must be even and in [2, 254], got {}", self.m));
        }
        if self.omega_c < self.m || self.omega_c > u32::MAX as usize {
            return bad(format!("omega_c ({}) must be >= m ({})", self.omega_c, self.m));
        }
        if self.o < 2 || self.o > u16::MAX as usize {
            return bad(format!("o must be in [2, 65535], got {}", self.o));
        }
        Ok(())
    }

    /// Half window size of layer `l`, saturating.
    pub fn half_window(&self, l: usize) -> usize {
        saturating_pow(self.o, l)
    }
}

fn saturating_pow(base: usize, exp: usize) -> usize {
    let mut acc: usize = 1;
    for _ in 0..exp {
        acc = acc.saturating_mul(base);
    }
    acc
}

pub(crate) type NeighborList = Vec<VectorId>;

pub(crate) struct Layer {
    lists: Vec<RwLock<NeighborList>>,
}

impl Layer {
    fn empty(n: usize) -> Self {
        Self {
            lists: (0..n).map(|_| RwLock::new(Vec::new())).collect(),
        }
    }

    fn snapshot(&self) -> Self {
        Self {
            lists: self.lists.iter().map(|l| RwLock::new(l.read().clone())).collect(),
        }
    }
}

#[derive(Default)]
pub(crate) struct AttrIndex {
    pub(crate) tree: AttrTree,
    /// Published vertices per attribute value, ascending ids.
    pub(crate) by_value: HashMap<AttributeValue, Vec<VectorId>>,
}

impl AttrIndex {
    fn add(&mut self, a: AttributeValue, id: VectorId) {
        self.tree.insert(a);
        let ids = self.by_value.entry(a).or_default();
        let pos = ids.partition_point(|&x| x < id);
        ids.insert(pos, id);
    }
}

/// Two-stage prune that fired while inserting, as recorded by
/// [`WowIndex::insert_traced`].
#[derive(Debug, Clone, PartialEq)]
pub struct PruneEvent {
    pub layer: usize,
    pub vertex: VectorId,
    pub window: Window,
    pub kept: Vec<VectorId>,
}

/// What one insert selected, layer by layer (`selected[l]`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InsertTrace {
    pub id: VectorId,
    pub selected: Vec<Vec<Neighbor>>,
    pub prunes: Vec<PruneEvent>,
}

pub struct WowIndex {
    params: IndexParams,
    data: HybridDataset,
    layers: RwLock<Vec<Layer>>,
    attrs: RwLock<AttrIndex>,
    deleted: Vec<AtomicBool>,
    claimed: Vec<AtomicBool>,
}

impl std::fmt::Debug for WowIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WowIndex")
            .field("params", &self.params)
            .field("n", &self.len())
            .field("dim", &self.dim())
            .field("top", &self.top())
            .finish()
    }
}

impl WowIndex {
    pub fn new(params: IndexParams, dim: usize) -> Result<Self> {
        Self::prepare(params.clone(), HybridDataset::new(dim, params.metric))
    }

    /// Wraps a dataset whose vectors are all pending insertion. Vertices
    /// become searchable as [`WowIndex::insert_pending`] publishes them,
    /// which may be called from several threads at once.
    pub fn prepare(params: IndexParams, dataset: HybridDataset) -> Result<Self> {
        params.validate()?;
        if dataset.metric() != params.metric {
            return Err(Error::InvalidParams(format!(
                "dataset metric {} differs from index metric {}",
                dataset.metric(),
                params.metric
            )));
        }
        let n = dataset.len();
        Ok(Self {
            params,
            data: dataset,
            layers: RwLock::new(vec![Layer::empty(n)]),
            attrs: RwLock::new(AttrIndex::default()),
            deleted: (0..n).map(|_| AtomicBool::new(false)).collect(),
            claimed: (0..n).map(|_| AtomicBool::new(false)).collect(),
        })
    }

    /// Inserts every pair of `dataset` in id order. With `threads > 1` the
    /// inserts run concurrently and the result depends on scheduling.
    pub fn build(params: IndexParams, dataset: HybridDataset, threads: usize) -> Result<Self> {
        let index = Self::prepare(params, dataset)?;
        let n = index.len();
        if threads <= 1 {
            let mut ctx = index.context();
            for id in 0..n as VectorId {
                index.insert_pending_with(id, &mut ctx)?;
                if (id + 1) % 100_000 == 0 {
                    log::info!("inserted {} of {n}", id + 1);
                }
            }
            return Ok(index);
        }
        let next = AtomicUsize::new(0);
        let failure: Mutex<Option<Error>> = Mutex::new(None);
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(|| {
                    let mut ctx = index.context();
                    loop {
                        let id = next.fetch_add(1, Ordering::Relaxed);
                        if id >= n {
                            break;
                        }
                        if let Err(e) = index.insert_pending_with(id as VectorId, &mut ctx) {
                            failure.lock().get_or_insert(e);
                            break;
                        }
                    }
                });
            }
        });
        match failure.into_inner() {
            Some(e) => Err(e),
            None => Ok(index),
        }
    }

    pub fn params(&self) -> &IndexParams {
        &self.params
    }

    pub fn dataset(&self) -> &HybridDataset {
        &self.data
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    pub fn metric(&self) -> Metric {
        self.params.metric
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn top(&self) -> usize {
        self.layers.read().len() - 1
    }

    pub fn unique_count(&self) -> usize {
        self.attrs.read().tree.unique_len()
    }

    /// A search context sized for this index, with default options.
    pub fn context(&self) -> SearchContext {
        SearchContext::new(self.len())
    }

    pub fn is_deleted(&self, id: VectorId) -> bool {
        self.deleted[id as usize].load(Ordering::Acquire)
    }

    /// Tombstones `id`. The vertex stays navigable but never appears in
    /// results. Returns `false` if it was already deleted.
    pub fn soft_delete(&self, id: VectorId) -> Result<bool> {
        let flag = self.deleted.get(id as usize).ok_or(Error::InvalidId {
            id,
            len: self.len(),
        })?;
        Ok(!flag.swap(true, Ordering::AcqRel))
    }

    /// Snapshot of `id`'s out-edges at `layer`.
    pub fn neighbors(&self, layer: usize, id: VectorId) -> Vec<VectorId> {
        let layers = self.layers.read();
        layers
            .get(layer)
            .and_then(|l| l.lists.get(id as usize))
            .map(|l| l.read().clone())
            .unwrap_or_default()
    }

    pub fn filtered_cardinality(&self, r: &RangeFilter) -> Cardinality {
        self.attrs.read().tree.filtered_cardinality(r)
    }

    /// Current window of a published value at `layer`.
    pub fn window(&self, a: AttributeValue, layer: usize) -> Result<Window> {
        self.attrs.read().tree.get_window(a, self.params.half_window(layer))
    }

    /// Read access to the attribute tree.
    pub fn with_tree<R>(&self, f: impl FnOnce(&AttrTree) -> R) -> R {
        f(&self.attrs.read().tree)
    }

    #[inline]
    pub(crate) fn dist_ids(&self, a: VectorId, b: VectorId, counter: &mut DistanceCounter) -> f32 {
        counter.bump();
        self.params.metric.eval(self.data.vector(a), self.data.vector(b))
    }

    #[inline]
    pub(crate) fn dist_to(&self, target: &[f32], b: VectorId, counter: &mut DistanceCounter) -> f32 {
        counter.bump();
        self.params.metric.eval(target, self.data.vector(b))
    }

    /// Appends a pair and inserts it.
    pub fn insert(&mut self, v: &[f32], a: AttributeValue) -> Result<VectorId> {
        let mut ctx = self.context();
        self.insert_with(v, a, &mut ctx, None)
    }

    /// Like [`WowIndex::insert`], also reporting the selected neighbors per
    /// layer and every two-stage prune it triggered.
    pub fn insert_traced(&mut self, v: &[f32], a: AttributeValue) -> Result<InsertTrace> {
        let mut ctx = self.context();
        let mut trace = InsertTrace::default();
        trace.id = self.insert_with(v, a, &mut ctx, Some(&mut trace))?;
        Ok(trace)
    }

    fn insert_with(
        &mut self,
        v: &[f32],
        a: AttributeValue,
        ctx: &mut SearchContext,
        trace: Option<&mut InsertTrace>,
    ) -> Result<VectorId> {
        let id = self.data.push(v, a)?;
        for layer in self.layers.get_mut().iter_mut() {
            layer.lists.push(RwLock::new(Vec::new()));
        }
        self.deleted.push(AtomicBool::new(false));
        self.claimed.push(AtomicBool::new(true));
        self.insert_core(id, ctx, trace)?;
        Ok(id)
    }

    /// Publishes a vertex that [`WowIndex::prepare`] left pending.
    pub fn insert_pending(&self, id: VectorId) -> Result<()> {
        let mut ctx = self.context();
        self.insert_pending_with(id, &mut ctx)
    }

    pub fn insert_pending_with(&self, id: VectorId, ctx: &mut SearchContext) -> Result<()> {
        let flag = self.claimed.get(id as usize).ok_or(Error::InvalidId {
            id,
            len: self.len(),
        })?;
        if flag.swap(true, Ordering::AcqRel) {
            return Err(Error::InvalidParams(format!("vertex {id} was already inserted")));
        }
        self.insert_core(id, ctx, None)
    }

    fn insert_core(&self, id: VectorId, ctx: &mut SearchContext, mut trace: Option<&mut InsertTrace>) -> Result<()> {
        let a = self.data.attribute(id);
        let v = self.data.vector(id);
        let (m, omega_c) = (self.params.m, self.params.omega_c);
        ctx.ensure_capacity(self.len());

        // raise the top layer while its window cannot cover all values
        let unique_after = {
            let attrs = self.attrs.read();
            attrs.tree.unique_len() + usize::from(!attrs.tree.contains(a))
        };
        self.raise_to_cover(unique_after);

        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.params.seed, id));
        let layers = self.layers.read();
        let top = layers.len() - 1;
        let mut selected: Vec<Vec<Neighbor>> = vec![Vec::new(); top + 1];
        let mut carried: Vec<Neighbor> = Vec::new();

        for l in (0..=top).rev() {
            let half = self.params.half_window(l);
            let Some(window) = self.attrs.read().tree.window_around(a, half) else {
                break;
            };
            let mut cands: Vec<Neighbor> = carried
                .iter()
                .filter(|n| window.contains(self.data.attribute(n.id)))
                .copied()
                .collect();
            if self.params.exhaustive_candidates {
                cands = self
                    .window_members(&window)
                    .into_iter()
                    .filter(|&x| x != id && !self.is_deleted(x))
                    .map(|x| Neighbor::new(x, self.dist_to(v, x, &mut ctx.counter)))
                    .collect();
            } else if cands.len() <= m {
                if let Some(ep) = self.random_entry(&window, &mut rng) {
                    let found = self.beam(&layers, ep, v, &window.as_range(), l, top, omega_c, ctx);
                    cands.extend(found);
                }
            }
            cands.retain(|n| n.id != id);
            cands.sort();
            cands.dedup_by_key(|n| n.id);

            let chosen = rng_prune(id, &cands, m / 2, self.params.prune_dominated, |x, y| {
                self.dist_ids(x, y, &mut ctx.counter)
            });
            for b in &chosen {
                if let Some(event) = self.adjust_neighbor(&layers[l], l, b.id, id, &mut ctx.counter) {
                    if let Some(t) = trace.as_deref_mut() {
                        t.prunes.push(event);
                    }
                }
            }
            selected[l] = chosen;
            carried = cands;
        }

        for (l, chosen) in selected.iter().enumerate() {
            let mut list = layers[l].lists[id as usize].write();
            let concurrent: Vec<VectorId> = std::mem::take(&mut *list);
            list.extend(chosen.iter().map(|n| n.id));
            // other inserts may have linked to this vertex already
            for x in concurrent {
                if !list.contains(&x) && x != id {
                    list.push(x);
                }
            }
            if list.len() > m {
                let pool: Vec<Neighbor> = list
                    .iter()
                    .map(|&x| Neighbor::new(x, self.dist_ids(id, x, &mut ctx.counter)))
                    .collect();
                *list = rng_prune(id, &pool, m, self.params.prune_dominated, |x, y| {
                    self.dist_ids(x, y, &mut ctx.counter)
                })
                .into_iter()
                .map(|n| n.id)
                .collect();
            }
        }
        drop(layers);

        self.attrs.write().add(a, id);
        // catches up if concurrent inserts outpaced the raise above
        let unique = self.attrs.read().tree.unique_len();
        self.raise_to_cover(unique);
        let layers = self.layers.read();
        if layers.len() > top + 1 {
            // a concurrent raise cloned the old top before this vertex published
            let own = layers[top].lists[id as usize].read().clone();
            for layer in &layers[top + 1..] {
                let mut list = layer.lists[id as usize].write();
                if list.is_empty() {
                    list.clone_from(&own);
                }
            }
        }

        if let Some(t) = trace {
            t.selected = selected;
        }
        Ok(())
    }

    fn raise_to_cover(&self, unique: usize) {
        loop {
            let top = self.layers.read().len() - 1;
            if unique <= self.params.half_window(top).saturating_mul(2) {
                return;
            }
            let mut layers = self.layers.write();
            if layers.len() - 1 == top {
                let clone = layers[top].snapshot();
                layers.push(clone);
                log::debug!("raised top layer to {} for {unique} unique values", top + 1);
            }
        }
    }

    /// Adds `new` to `b`'s list at one layer, or runs the two-stage prune
    /// when the list is full: drop neighbors outside `b`'s current window
    /// (and tombstoned ones), then RNG-prune the rest together with `new`.
    fn adjust_neighbor(
        &self,
        layer: &Layer,
        l: usize,
        b: VectorId,
        new: VectorId,
        counter: &mut DistanceCounter,
    ) -> Option<PruneEvent> {
        let m = self.params.m;
        let mut list = layer.lists[b as usize].write();
        if list.contains(&new) {
            return None;
        }
        if list.len() < m {
            list.push(new);
            return None;
        }
        let ab = self.data.attribute(b);
        let window = self
            .attrs
            .read()
            .tree
            .window_around(ab, self.params.half_window(l))
            .expect("a full list implies a non-empty tree");
        let mut pool = vec![Neighbor::new(new, self.dist_ids(b, new, counter))];
        for &x in list.iter() {
            if window.contains(self.data.attribute(x)) && !self.is_deleted(x) {
                pool.push(Neighbor::new(x, self.dist_ids(b, x, counter)));
            }
        }
        let kept: Vec<VectorId> = rng_prune(b, &pool, m, self.params.prune_dominated, |x, y| {
            self.dist_ids(x, y, counter)
        })
        .into_iter()
        .map(|n| n.id)
        .collect();
        *list = kept.clone();
        Some(PruneEvent {
            layer: l,
            vertex: b,
            window,
            kept,
        })
    }

    /// Uniform random published vertex whose value lies in `window`.
    fn random_entry(&self, window: &Window, rng: &mut ChaCha8Rng) -> Option<VectorId> {
        let attrs = self.attrs.read();
        let lo = attrs.tree.get_rank(window.min).rank;
        let hi = attrs.tree.get_rank(window.max).rank;
        let value = attrs.tree.select(rng.random_range(lo..=hi)).ok()?;
        let ids = attrs.by_value.get(&value)?;
        Some(ids[rng.random_range(0..ids.len())])
    }

    /// Every published vertex with a value inside `window`.
    fn window_members(&self, window: &Window) -> Vec<VectorId> {
        let attrs = self.attrs.read();
        let lo = attrs.tree.get_rank(window.min).rank;
        let hi = attrs.tree.get_rank(window.max).rank;
        let mut out = Vec::new();
        for r in lo..=hi {
            if let Ok(value) = attrs.tree.select(r) {
                if let Some(ids) = attrs.by_value.get(&value) {
                    out.extend_from_slice(ids);
                }
            }
        }
        out
    }
}

fn mix_seed(seed: u64, id: VectorId) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ (id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
