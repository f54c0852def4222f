use std::collections::HashMap;

use serde::Serialize;

use crate::dataset::HybridDataset;
use crate::error::Violation;

use super::{IndexImage, WowIndex};

/// Smallest `top` with `unique <= 2 o^top`, i.e. `max(0, ceil(log_o(unique/2)))`.
pub fn expected_top(o: usize, unique: usize) -> usize {
    let mut top = 0;
    let mut cover = 2u128;
    while (unique as u128) > cover {
        top += 1;
        cover *= o as u128;
    }
    top
}

/// `n * sum_{l=0}^{top} min(2 o^l, m)`: the neighbor-slot budget of a full index.
pub fn space_bound(n: usize, o: usize, m: usize, top: usize) -> u128 {
    let mut per_vertex = 0u128;
    let mut w = 2u128;
    for _ in 0..=top {
        per_vertex += w.min(m as u128);
        w = w.saturating_mul(o as u128);
    }
    n as u128 * per_vertex
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructuralStats {
    pub n: usize,
    pub unique: usize,
    pub top: usize,
    pub edges_per_layer: Vec<u64>,
    pub total_edges: u64,
    /// Mean out-degree per layer.
    pub mean_outdegree: Vec<f64>,
    pub space_bound: u128,
    pub serialized_bytes: u64,
}

impl WowIndex {
    pub fn structural_stats(&self) -> StructuralStats {
        let n = self.len();
        let layers = self.layers.read();
        let edges_per_layer: Vec<u64> = layers
            .iter()
            .map(|l| l.lists.iter().map(|x| x.read().len() as u64).sum())
            .collect();
        let total_edges = edges_per_layer.iter().sum();
        let top = layers.len() - 1;
        let unique = self.unique_count();
        let header = 4 + 4 + 4 + 8 + 1 + 2 + 2 + 4 + 2 + 8;
        let serialized_bytes = header
            + 8
            + 12 * unique as u64
            + (n as u64) * layers.len() as u64
            + 4 * total_edges
            + (n as u64).div_ceil(8);
        StructuralStats {
            n,
            unique,
            top,
            mean_outdegree: edges_per_layer
                .iter()
                .map(|&e| if n == 0 { 0.0 } else { e as f64 / n as f64 })
                .collect(),
            edges_per_layer,
            total_edges,
            space_bound: space_bound(n, self.params.o, self.params.m, top),
            serialized_bytes,
        }
    }

    /// Runs every structural check; an empty vector means the index is sound.
    pub fn check_invariants(&self) -> Vec<Violation> {
        verify_image(&self.to_image(), &self.data)
    }
}

/// Structural invariants of a decoded index against its dataset. Each
/// failure names the invariant it broke.
pub fn verify_image(image: &IndexImage, dataset: &HybridDataset) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = image.n as usize;
    if n != dataset.len() || (n > 0 && image.dim as usize != dataset.dim()) {
        out.push(Violation::new(
            "header invariant",
            format!(
                "index n={} d={} but dataset n={} d={}",
                image.n,
                image.dim,
                dataset.len(),
                dataset.dim()
            ),
        ));
        return out;
    }
    if image.layers.len() != image.top as usize + 1 {
        out.push(Violation::new("top-layer invariant", "layer count differs from top + 1"));
    }
    let m = image.m as usize;
    let first = |name: &'static str, detail: String, out: &mut Vec<Violation>| {
        if !out.iter().any(|v| v.invariant == name) {
            out.push(Violation::new(name, detail));
        }
    };
    for (l, layer) in image.layers.iter().enumerate() {
        if layer.len() != n {
            first("header invariant", format!("layer {l} has {} lists for n={n}", layer.len()), &mut out);
            continue;
        }
        for (v, list) in layer.iter().enumerate() {
            if list.len() > m {
                first("degree-cap invariant", format!("vertex {v} layer {l}: degree {} > m={m}", list.len()), &mut out);
            }
            for (i, &x) in list.iter().enumerate() {
                if x as usize >= n {
                    first("valid-id invariant", format!("vertex {v} layer {l}: neighbor {x} >= n={n}"), &mut out);
                }
                if x as usize == v {
                    first("self-loop invariant", format!("vertex {v} layer {l} links to itself"), &mut out);
                }
                if list[..i].contains(&x) {
                    first("duplicate-edge invariant", format!("vertex {v} layer {l}: {x} listed twice"), &mut out);
                }
            }
        }
    }
    if let Err(v) = image.tree.check_invariants() {
        out.push(v);
    }
    let mut counts: HashMap<i64, u32> = HashMap::new();
    for &a in dataset.attributes() {
        *counts.entry(a).or_default() += 1;
    }
    let tree_matches = image.tree.unique_len() == counts.len()
        && image.tree.iter().all(|(v, d)| counts.get(&v) == Some(&d));
    if !tree_matches {
        out.push(Violation::new(
            "attribute-multiset invariant",
            "attribute tree does not hold exactly the dataset's values",
        ));
    }
    let want_top = expected_top(image.o as usize, image.tree.unique_len());
    if image.top as usize != want_top {
        out.push(Violation::new(
            "top-layer invariant",
            format!("top is {} but {} unique values need {want_top}", image.top, image.tree.unique_len()),
        ));
    }
    if image.deleted.len() != n {
        out.push(Violation::new("header invariant", "tombstone bitmap length differs from n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_law_values() {
        assert_eq!(expected_top(4, 0), 0);
        assert_eq!(expected_top(4, 1), 0);
        assert_eq!(expected_top(4, 2), 0);
        assert_eq!(expected_top(4, 3), 1);
        assert_eq!(expected_top(4, 8), 1);
        assert_eq!(expected_top(4, 9), 2);
        assert_eq!(expected_top(4, 10_000), 7);
        assert_eq!(expected_top(4, 100), 3);
        assert_eq!(expected_top(4, 1_000_000), 10);
    }

    #[test]
    fn space_bound_formula() {
        // 2 + 8 + 16 + 16 per vertex for o=4, m=16, top=3
        assert_eq!(space_bound(10, 4, 16, 3), 10 * 42);
        assert_eq!(space_bound(0, 4, 16, 7), 0);
    }
}
