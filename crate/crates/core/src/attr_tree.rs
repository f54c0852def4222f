//! Weight-balanced (BB[α]) order-statistic tree over unique attribute values.
//!
//! Every node records the number of unique values in its subtree and the
//! number of vectors sharing those values, so rank, select, window and range
//! cardinality queries are single-branch descents. Duplicate values bump a
//! per-node counter instead of creating new nodes. Values are never removed.

use crate::dataset::{AttributeValue, RangeFilter};
use crate::error::{Error, Result, Violation};

/// Balance parameter. Slightly below `1 - 1/sqrt(2)`, the largest value for
/// which single and double rotations always restore balance after an insert.
pub const ALPHA: f64 = 0.292;

const NIL: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Node {
    value: AttributeValue,
    dup: u32,
    unique: u32,
    total: u64,
    left: u32,
    right: u32,
    parent: u32,
}

/// Outcome of [`AttrTree::insert`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InsertOutcome {
    /// Unique values strictly less than the inserted one.
    pub rank: usize,
    pub is_new: bool,
}

/// Result of a rank lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rank {
    /// Unique values strictly less than the probe.
    pub rank: usize,
    pub exact: bool,
}

/// Inclusive attribute window `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub min: AttributeValue,
    pub max: AttributeValue,
}

impl Window {
    pub fn contains(&self, a: AttributeValue) -> bool {
        self.min <= a && a <= self.max
    }

    pub fn as_range(&self) -> RangeFilter {
        RangeFilter::new(self.min, self.max).expect("window bounds are ordered")
    }
}

/// In-range counts: distinct values and vectors (duplicates included).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Cardinality {
    pub unique: usize,
    pub total: u64,
}

#[derive(Debug, Clone)]
pub struct AttrTree {
    nodes: Vec<Node>,
    root: u32,
}

impl Default for AttrTree {
    fn default() -> Self {
        Self::new()
    }
}

impl AttrTree {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            root: NIL,
        }
    }

    pub fn unique_len(&self) -> usize {
        self.size(self.root)
    }

    pub fn total_len(&self) -> u64 {
        self.tot(self.root)
    }

    pub fn is_empty(&self) -> bool {
        self.root == NIL
    }

    pub fn min(&self) -> Option<AttributeValue> {
        self.extreme(self.root, false)
    }

    pub fn max(&self) -> Option<AttributeValue> {
        self.extreme(self.root, true)
    }

    #[inline]
    fn size(&self, x: u32) -> usize {
        if x == NIL {
            0
        } else {
            self.nodes[x as usize].unique as usize
        }
    }

    #[inline]
    fn tot(&self, x: u32) -> u64 {
        if x == NIL {
            0
        } else {
            self.nodes[x as usize].total
        }
    }

    #[inline]
    fn weight(&self, x: u32) -> usize {
        self.size(x) + 1
    }

    #[inline]
    fn node(&self, x: u32) -> &Node {
        &self.nodes[x as usize]
    }

    fn extreme(&self, mut x: u32, rightmost: bool) -> Option<AttributeValue> {
        if x == NIL {
            return None;
        }
        loop {
            let n = self.node(x);
            let next = if rightmost { n.right } else { n.left };
            if next == NIL {
                return Some(n.value);
            }
            x = next;
        }
    }

    fn locate(&self, a: AttributeValue) -> Option<u32> {
        let mut x = self.root;
        while x != NIL {
            let n = self.node(x);
            x = match a.cmp(&n.value) {
                std::cmp::Ordering::Less => n.left,
                std::cmp::Ordering::Greater => n.right,
                std::cmp::Ordering::Equal => return Some(x),
            };
        }
        None
    }

    pub fn contains(&self, a: AttributeValue) -> bool {
        self.locate(a).is_some()
    }

    /// Number of vectors carrying value `a` (0 when absent).
    pub fn dup_count(&self, a: AttributeValue) -> u32 {
        self.locate(a).map_or(0, |x| self.node(x).dup)
    }

    pub fn insert(&mut self, a: AttributeValue) -> InsertOutcome {
        let mut is_new = false;
        let root = self.insert_rec(self.root, a, &mut is_new);
        self.nodes[root as usize].parent = NIL;
        self.root = root;
        InsertOutcome {
            rank: self.get_rank(a).rank,
            is_new,
        }
    }

    fn insert_rec(&mut self, x: u32, a: AttributeValue, is_new: &mut bool) -> u32 {
        if x == NIL {
            *is_new = true;
            let id = u32::try_from(self.nodes.len()).expect("attribute tree overflow");
            self.nodes.push(Node {
                value: a,
                dup: 1,
                unique: 1,
                total: 1,
                left: NIL,
                right: NIL,
                parent: NIL,
            });
            return id;
        }
        let n = self.node(x).clone();
        match a.cmp(&n.value) {
            std::cmp::Ordering::Less => {
                let l = self.insert_rec(n.left, a, is_new);
                self.nodes[x as usize].left = l;
                self.nodes[l as usize].parent = x;
            }
            std::cmp::Ordering::Greater => {
                let r = self.insert_rec(n.right, a, is_new);
                self.nodes[x as usize].right = r;
                self.nodes[r as usize].parent = x;
            }
            std::cmp::Ordering::Equal => {
                let node = &mut self.nodes[x as usize];
                node.dup += 1;
                node.total += 1;
                return x;
            }
        }
        self.pull(x);
        if *is_new {
            self.rebalance(x)
        } else {
            x
        }
    }

    fn pull(&mut self, x: u32) {
        let (l, r) = (self.node(x).left, self.node(x).right);
        let unique = 1 + self.size(l) + self.size(r);
        let total = self.node(x).dup as u64 + self.tot(l) + self.tot(r);
        let node = &mut self.nodes[x as usize];
        node.unique = unique as u32;
        node.total = total;
    }

    // Returns the new subtree root; the caller fixes its parent link.
    fn rotate_left(&mut self, x: u32) -> u32 {
        let y = self.node(x).right;
        let yl = self.node(y).left;
        self.nodes[x as usize].right = yl;
        if yl != NIL {
            self.nodes[yl as usize].parent = x;
        }
        self.nodes[y as usize].left = x;
        self.nodes[x as usize].parent = y;
        self.pull(x);
        self.pull(y);
        y
    }

    fn rotate_right(&mut self, x: u32) -> u32 {
        let y = self.node(x).left;
        let yr = self.node(y).right;
        self.nodes[x as usize].left = yr;
        if yr != NIL {
            self.nodes[yr as usize].parent = x;
        }
        self.nodes[y as usize].right = x;
        self.nodes[x as usize].parent = y;
        self.pull(x);
        self.pull(y);
        y
    }

    fn rebalance(&mut self, x: u32) -> u32 {
        let delta = 1.0 / (2.0 - ALPHA);
        let (l, r) = (self.node(x).left, self.node(x).right);
        let wx = self.weight(x) as f64;
        if (self.weight(l) as f64) < ALPHA * wx {
            // right-heavy
            let y = r;
            let inner = self.weight(self.node(y).left) as f64;
            if inner > delta * self.weight(y) as f64 {
                let ny = self.rotate_right(y);
                self.nodes[x as usize].right = ny;
                self.nodes[ny as usize].parent = x;
            }
            self.rotate_left(x)
        } else if (self.weight(r) as f64) < ALPHA * wx {
            let y = l;
            let inner = self.weight(self.node(y).right) as f64;
            if inner > delta * self.weight(y) as f64 {
                let ny = self.rotate_left(y);
                self.nodes[x as usize].left = ny;
                self.nodes[ny as usize].parent = x;
            }
            self.rotate_right(x)
        } else {
            x
        }
    }

    /// Count of unique values strictly less than `a`, plus whether `a` is present.
    pub fn get_rank(&self, a: AttributeValue) -> Rank {
        let mut x = self.root;
        let mut rank = 0;
        while x != NIL {
            let n = self.node(x);
            if a < n.value {
                x = n.left;
            } else if a > n.value {
                rank += self.size(n.left) + 1;
                x = n.right;
            } else {
                rank += self.size(n.left);
                return Rank { rank, exact: true };
            }
        }
        Rank { rank, exact: false }
    }

    /// Unique and total counts of values below `a` (`<`, or `<=` when `inclusive`).
    pub fn count_below(&self, a: AttributeValue, inclusive: bool) -> Cardinality {
        let mut x = self.root;
        let mut acc = Cardinality::default();
        while x != NIL {
            let n = self.node(x);
            if a < n.value || (a == n.value && !inclusive) {
                x = n.left;
            } else {
                acc.unique += self.size(n.left) + 1;
                acc.total += self.tot(n.left) + n.dup as u64;
                if a == n.value {
                    break;
                }
                x = n.right;
            }
        }
        acc
    }

    /// The `rank`-th smallest unique value (0-based).
    pub fn select(&self, rank: usize) -> Result<AttributeValue> {
        let len = self.unique_len();
        if rank >= len {
            return Err(Error::RankOutOfBounds { rank, len });
        }
        Ok(self.node(self.kth_smallest(self.root, rank + 1)).value)
    }

    // 1-based order statistics inside the subtree rooted at `x`.
    fn kth_smallest(&self, mut x: u32, mut k: usize) -> u32 {
        loop {
            let n = self.node(x);
            let ls = self.size(n.left);
            if k <= ls {
                x = n.left;
            } else if k == ls + 1 {
                return x;
            } else {
                k -= ls + 1;
                x = n.right;
            }
        }
    }

    fn kth_largest(&self, mut x: u32, mut k: usize) -> u32 {
        loop {
            let n = self.node(x);
            let rs = self.size(n.right);
            if k <= rs {
                x = n.right;
            } else if k == rs + 1 {
                return x;
            } else {
                k -= rs + 1;
                x = n.left;
            }
        }
    }

    /// Window of a present value: the `half`-th unique value below and above
    /// `a`, each clamped to the tree extremes.
    ///
    /// Each boundary costs at most three single-branch walks: locate `a`,
    /// climb to the ancestor whose subtree holds the boundary, and descend to
    /// it by order statistic.
    pub fn get_window(&self, a: AttributeValue, half: usize) -> Result<Window> {
        if half == 0 {
            return Err(Error::InvalidParams("window half size must be >= 1".into()));
        }
        let c = self.locate(a).ok_or(Error::AttributeNotFound(a))?;
        Ok(Window {
            min: self.boundary(c, half, Side::Left),
            max: self.boundary(c, half, Side::Right),
        })
    }

    fn boundary(&self, start: u32, half: usize, side: Side) -> AttributeValue {
        let inner = |x: u32| match side {
            Side::Left => self.node(x).left,
            Side::Right => self.node(x).right,
        };
        let outer = |x: u32| match side {
            Side::Left => self.node(x).right,
            Side::Right => self.node(x).left,
        };
        let closest = |x: u32, k: usize| match side {
            Side::Left => self.node(self.kth_largest(x, k)).value,
            Side::Right => self.node(self.kth_smallest(x, k)).value,
        };

        let mut budget = half;
        let near = self.size(inner(start));
        if budget <= near {
            return closest(inner(start), budget);
        }
        budget -= near;
        let mut c = start;
        loop {
            let p = self.node(c).parent;
            if p == NIL {
                let ext = match side {
                    Side::Left => self.min(),
                    Side::Right => self.max(),
                };
                return ext.expect("non-empty tree");
            }
            if outer(p) == c {
                let sibling = self.size(inner(p));
                if sibling + 1 >= budget {
                    return if budget == 1 {
                        self.node(p).value
                    } else {
                        closest(inner(p), budget - 1)
                    };
                }
                budget -= sibling + 1;
            }
            c = p;
        }
    }

    /// Window around an arbitrary value, present or not, computed from ranks.
    ///
    /// When `a` is absent the window holds `half` existing values on each
    /// side of the position `a` would take. `None` for an empty tree.
    pub fn window_around(&self, a: AttributeValue, half: usize) -> Option<Window> {
        let u = self.unique_len();
        if u == 0 || half == 0 {
            return None;
        }
        let Rank { rank, exact } = self.get_rank(a);
        let lo = rank.saturating_sub(half);
        let hi = if exact { rank + half } else { rank + half - 1 }.min(u - 1);
        Some(Window {
            min: self.select(lo).ok()?,
            max: self.select(hi).ok()?,
        })
    }

    /// Distinct and total in-range counts, by subtracting boundary ranks.
    pub fn filtered_cardinality(&self, r: &RangeFilter) -> Cardinality {
        let below = self.count_below(r.x(), false);
        let upto = self.count_below(r.y(), true);
        Cardinality {
            unique: upto.unique.saturating_sub(below.unique),
            total: upto.total.saturating_sub(below.total),
        }
    }

    pub fn height(&self) -> usize {
        fn h(t: &AttrTree, x: u32) -> usize {
            if x == NIL {
                0
            } else {
                1 + h(t, t.node(x).left).max(h(t, t.node(x).right))
            }
        }
        h(self, self.root)
    }

    /// In-order `(value, dup_count)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (AttributeValue, u32)> + '_ {
        let mut stack = Vec::new();
        let mut cur = self.root;
        std::iter::from_fn(move || {
            while cur != NIL {
                stack.push(cur);
                cur = self.node(cur).left;
            }
            let x = stack.pop()?;
            cur = self.node(x).right;
            Some((self.node(x).value, self.node(x).dup))
        })
    }

    /// Builds a perfectly balanced tree from strictly increasing values.
    pub fn from_sorted(pairs: &[(AttributeValue, u32)]) -> Result<Self> {
        for w in pairs.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(Error::InvalidParams(format!(
                    "attribute stream not strictly increasing at {}",
                    w[1].0
                )));
            }
        }
        if let Some(&(v, _)) = pairs.iter().find(|p| p.1 == 0) {
            return Err(Error::InvalidParams(format!("zero duplicate count for {v}")));
        }
        let mut t = Self::new();
        t.nodes.reserve(pairs.len());
        t.root = t.build_balanced(pairs, NIL);
        Ok(t)
    }

    fn build_balanced(&mut self, pairs: &[(AttributeValue, u32)], parent: u32) -> u32 {
        if pairs.is_empty() {
            return NIL;
        }
        let mid = pairs.len() / 2;
        let x = self.nodes.len() as u32;
        self.nodes.push(Node {
            value: pairs[mid].0,
            dup: pairs[mid].1,
            unique: 1,
            total: 0,
            left: NIL,
            right: NIL,
            parent,
        });
        let l = self.build_balanced(&pairs[..mid], x);
        let r = self.build_balanced(&pairs[mid + 1..], x);
        self.nodes[x as usize].left = l;
        self.nodes[x as usize].right = r;
        self.pull(x);
        x
    }

    /// Appends the sorted `(i64 LE value, u32 LE dup_count)` stream, preceded
    /// by a `u64 LE` pair count.
    pub fn write_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.unique_len() as u64).to_le_bytes());
        for (v, d) in self.iter() {
            out.extend_from_slice(&v.to_le_bytes());
            out.extend_from_slice(&d.to_le_bytes());
        }
    }

    /// Parses what [`AttrTree::write_to`] produced, starting at `base` in
    /// the enclosing file. Returns the tree and the bytes consumed.
    pub fn read_from(bytes: &[u8], base: u64) -> Result<(Self, usize)> {
        let corrupt = |offset: usize, msg: String| Error::Corrupt {
            field: "attribute tree",
            offset: base + offset as u64,
            msg,
        };
        let count = bytes
            .get(..8)
            .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
            .ok_or_else(|| corrupt(0, "truncated pair count".into()))?;
        let need = (count as usize)
            .checked_mul(12)
            .and_then(|n| n.checked_add(8))
            .ok_or_else(|| corrupt(0, format!("pair count {count} overflows")))?;
        if bytes.len() < need {
            return Err(corrupt(bytes.len(), format!("truncated: {count} pairs need {need} bytes")));
        }
        let pairs: Vec<(AttributeValue, u32)> = bytes[8..need]
            .chunks_exact(12)
            .map(|c| {
                (
                    i64::from_le_bytes(c[..8].try_into().unwrap()),
                    u32::from_le_bytes(c[8..].try_into().unwrap()),
                )
            })
            .collect();
        let tree = Self::from_sorted(&pairs).map_err(|e| corrupt(8, e.to_string()))?;
        Ok((tree, need))
    }

    /// Full traversal checking order, size bookkeeping, parent links and
    /// weight balance.
    pub fn check_invariants(&self) -> std::result::Result<(), Violation> {
        if self.root != NIL && self.node(self.root).parent != NIL {
            return Err(Violation::new("tree-parent invariant", "root has a parent"));
        }
        let mut prev: Option<AttributeValue> = None;
        self.check_rec(self.root, &mut prev)?;
        Ok(())
    }

    fn check_rec(&self, x: u32, prev: &mut Option<AttributeValue>) -> std::result::Result<(), Violation> {
        if x == NIL {
            return Ok(());
        }
        let n = self.node(x);
        for child in [n.left, n.right] {
            if child != NIL && self.node(child).parent != x {
                return Err(Violation::new(
                    "tree-parent invariant",
                    format!("child of {} has a stale parent link", n.value),
                ));
            }
        }
        self.check_rec(n.left, prev)?;
        if let Some(p) = *prev {
            if p >= n.value {
                return Err(Violation::new(
                    "tree-order invariant",
                    format!("{p} precedes {} in order", n.value),
                ));
            }
        }
        *prev = Some(n.value);
        self.check_rec(n.right, prev)?;
        if n.dup == 0 {
            return Err(Violation::new("tree-size invariant", format!("{} has dup_count 0", n.value)));
        }
        if n.unique as usize != 1 + self.size(n.left) + self.size(n.right)
            || n.total != n.dup as u64 + self.tot(n.left) + self.tot(n.right)
        {
            return Err(Violation::new(
                "tree-size invariant",
                format!("subtree counts at {} are stale", n.value),
            ));
        }
        let w = self.weight(x) as f64;
        if (self.weight(n.left) as f64) < ALPHA * w || (self.weight(n.right) as f64) < ALPHA * w {
            return Err(Violation::new(
                "tree-balance invariant",
                format!(
                    "node {} has child weights {}/{} of {}",
                    n.value,
                    self.weight(n.left),
                    self.weight(n.right),
                    w
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum Side {
    Left,
    Right,
}
