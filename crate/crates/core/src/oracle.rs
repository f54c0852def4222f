//! Exact pre-filtering ground truth and recall.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::dataset::{HybridDataset, Neighbor, RangeFilter, VectorId};
use crate::distance::DistanceCounter;
use crate::error::{Error, Result};
use crate::index::WowIndex;
use crate::workload::{query_vector, RangeWorkload, VectorSet};

#[derive(Debug, Clone, PartialEq)]
pub struct GoldResult {
    pub query: usize,
    /// Exact top-k in-range ids, sorted by `(distance, id)`.
    pub ids: Vec<VectorId>,
    pub distances: Vec<f32>,
    /// In-range pairs in the dataset (duplicates and exclusions accounted).
    pub n_prime_total: u64,
}

/// Linear-scan k-NN over in-range pairs only. Distances are evaluated once
/// per in-range pair and charged to `counter`.
pub fn brute_knn(
    dataset: &HybridDataset,
    q: &[f32],
    range: &RangeFilter,
    k: usize,
    counter: &mut DistanceCounter,
) -> GoldResult {
    brute_knn_filtered(dataset, q, range, k, counter, |_| true)
}

/// [`brute_knn`] restricted to ids accepted by `keep` (e.g. non-deleted).
pub fn brute_knn_filtered(
    dataset: &HybridDataset,
    q: &[f32],
    range: &RangeFilter,
    k: usize,
    counter: &mut DistanceCounter,
    keep: impl Fn(VectorId) -> bool,
) -> GoldResult {
    let metric = dataset.metric();
    let mut best: std::collections::BinaryHeap<Neighbor> = std::collections::BinaryHeap::with_capacity(k + 1);
    let mut n_prime = 0u64;
    for (id, v, a) in dataset.iter() {
        if !range.contains(a) || !keep(id) {
            continue;
        }
        n_prime += 1;
        counter.bump();
        let cand = Neighbor::new(id, metric.eval(q, v));
        if best.len() < k {
            best.push(cand);
        } else if best.peek().is_some_and(|w| cand < *w) {
            best.pop();
            best.push(cand);
        }
    }
    let sorted = best.into_sorted_vec();
    GoldResult {
        query: 0,
        ids: sorted.iter().map(|n| n.id).collect(),
        distances: sorted.iter().map(|n| n.distance).collect(),
        n_prime_total: n_prime,
    }
}

/// Fraction of the exact top-k found. When fewer than `k` pairs are in
/// range the denominator is the in-range count instead; an empty range
/// scores 1.
pub fn recall(result: &[VectorId], gold: &GoldResult, k: usize) -> f64 {
    let denom = (k as u64).min(gold.n_prime_total);
    if denom == 0 {
        return 1.0;
    }
    let truth: HashSet<VectorId> = gold.ids.iter().take(k).copied().collect();
    let hits = result.iter().take(k).filter(|id| truth.contains(id)).count();
    hits as f64 / denom as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EdgeQuality {
    /// Share of edges in full lists whose target is outside the source's
    /// current window at that layer.
    pub window_violation_rate: f64,
    /// Share of all edges `v -> c` with a sibling `u` such that
    /// `d(u, c) < d(v, c)` and `d(v, u) < d(v, c)`.
    pub domination_rate: f64,
    pub full_list_edges: u64,
    pub edges: u64,
}

/// Diagnostic scan of both window-graph edge properties over every layer.
pub fn edge_quality(index: &WowIndex) -> EdgeQuality {
    let ds = index.dataset();
    let metric = index.metric();
    let m = index.params().m;
    let (mut full_edges, mut window_bad, mut edges, mut dominated) = (0u64, 0u64, 0u64, 0u64);
    for l in 0..=index.top() {
        for v in 0..index.len() as VectorId {
            let list = index.neighbors(l, v);
            if list.is_empty() {
                continue;
            }
            let a = ds.attribute(v);
            if list.len() >= m {
                if let Ok(w) = index.window(a, l) {
                    full_edges += list.len() as u64;
                    window_bad += list.iter().filter(|&&x| !w.contains(ds.attribute(x))).count() as u64;
                }
            }
            let dv: Vec<f32> = list.iter().map(|&x| metric.eval(ds.vector(v), ds.vector(x))).collect();
            for (i, &c) in list.iter().enumerate() {
                edges += 1;
                let hit = list.iter().enumerate().any(|(j, &u)| {
                    j != i && dv[j] < dv[i] && metric.eval(ds.vector(u), ds.vector(c)) < dv[i]
                });
                dominated += u64::from(hit);
            }
        }
    }
    let rate = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    EdgeQuality {
        window_violation_rate: rate(window_bad, full_edges),
        domination_rate: rate(dominated, edges),
        full_list_edges: full_edges,
        edges,
    }
}

/// Gold results for every workload query, computed on `threads` threads
/// over contiguous query chunks. Row `i` answers `workload.queries[i]`.
pub fn ground_truth(
    dataset: &HybridDataset,
    queries: &VectorSet,
    workload: &RangeWorkload,
    k: usize,
    threads: usize,
    keep: impl Fn(VectorId) -> bool + Sync,
) -> Result<Vec<GoldResult>> {
    for wq in &workload.queries {
        query_vector(queries, wq.qid)?;
    }
    let threads = threads.max(1);
    let chunk = workload.len().div_ceil(threads).max(1);
    let keep = &keep;
    let parts: Vec<Vec<GoldResult>> = std::thread::scope(|s| {
        let handles: Vec<_> = workload
            .queries
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|wq| {
                            let mut g = brute_knn_filtered(
                                dataset,
                                queries.get(wq.qid),
                                &wq.range(),
                                k,
                                &mut DistanceCounter::new(),
                                keep,
                            );
                            g.query = wq.qid;
                            g
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("ground-truth worker panicked")).collect()
    });
    Ok(parts.into_iter().flatten().collect())
}

/// One line per query: the gold ids followed by `n_prime_total`.
pub fn write_ground_truth(path: &Path, gold: &[GoldResult]) -> Result<()> {
    let mut out = Vec::new();
    for g in gold {
        let mut fields: Vec<String> = g.ids.iter().map(|i| i.to_string()).collect();
        fields.push(g.n_prime_total.to_string());
        writeln!(out, "{}", fields.join(",")).expect("vec write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<GoldResult>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut offset = 0u64;
    for (query, line) in text.lines().enumerate() {
        let bad = |msg: String| Error::Format {
            path: path.to_path_buf(),
            offset,
            msg,
        };
        let nums: Vec<u64> = line
            .split(',')
            .map(|f| f.trim().parse::<u64>().map_err(|e| bad(format!("line {}: {e}", query + 1))))
            .collect::<Result<_>>()?;
        let (&n_prime_total, ids) = nums.split_last().ok_or_else(|| bad("empty line".into()))?;
        out.push(GoldResult {
            query,
            ids: ids.iter().map(|&i| i as VectorId).collect(),
            distances: Vec::new(),
            n_prime_total,
        });
        offset += line.len() as u64 + 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::Metric;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(n: usize, d: usize, seed: u64) -> HybridDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ds = HybridDataset::new(d, Metric::L2);
        for _ in 0..n {
            let v: Vec<f32> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            ds.push(&v, rng.random_range(0..50)).unwrap();
        }
        ds
    }

    #[test]
    fn empty_and_saturated_ranges() {
        let ds = random_dataset(100, 4, 1);
        let mut c = DistanceCounter::new();
        let g = brute_knn(&ds, &[0.0; 4], &RangeFilter::new(1000, 2000).unwrap(), 5, &mut c);
        assert!(g.ids.is_empty());
        assert_eq!(g.n_prime_total, 0);
        assert_eq!(c.get(), 0);

        let r = RangeFilter::new(10, 12).unwrap();
        let g = brute_knn(&ds, &[0.0; 4], &r, 1000, &mut c);
        let in_range = ds.attributes().iter().filter(|&&a| r.contains(a)).count();
        assert_eq!(g.ids.len(), in_range);
        assert_eq!(g.n_prime_total, in_range as u64);
        assert_eq!(c.get(), in_range as u64);
    }

    #[test]
    fn matches_full_sort() {
        let ds = random_dataset(200, 8, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let q: Vec<f32> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = rng.random_range(0..50);
            let r = RangeFilter::new(x, rng.random_range(x..50)).unwrap();
            let k = rng.random_range(1..30);
            let g = brute_knn(&ds, &q, &r, k, &mut DistanceCounter::new());
            // independent route: materialize everything and sort
            let mut all: Vec<(f32, u32)> = ds
                .iter()
                .filter(|(_, _, a)| r.contains(*a))
                .map(|(id, v, _)| (Metric::L2.eval(&q, v), id))
                .collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let expect: Vec<u32> = all.iter().take(k).map(|p| p.1).collect();
            assert_eq!(g.ids, expect);
        }
    }

    #[test]
    fn counter_counts_in_range_pairs_only() {
        let ds = random_dataset(300, 3, 4);
        let mut c = DistanceCounter::new();
        brute_knn(&ds, &[0.0; 3], &RangeFilter::new(i64::MIN, i64::MAX).unwrap(), 10, &mut c);
        assert_eq!(c.get(), 300);
    }

    #[test]
    fn recall_examples() {
        let gold = GoldResult {
            query: 0,
            ids: (0..10).collect(),
            distances: vec![],
            n_prime_total: 50,
        };
        assert_eq!(recall(&gold.ids, &gold, 10), 1.0);
        let mut nine: Vec<u32> = (0..9).collect();
        nine.push(99);
        assert!((recall(&nine, &gold, 10) - 0.9).abs() < 1e-12);
        nine.reverse();
        assert!((recall(&nine, &gold, 10) - 0.9).abs() < 1e-12);

        let small = GoldResult {
            query: 0,
            ids: vec![4, 7, 9],
            distances: vec![],
            n_prime_total: 3,
        };
        assert_eq!(recall(&[9, 4, 7], &small, 10), 1.0);
        assert!((recall(&[9], &small, 10) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ground_truth_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gt.csv");
        let gold = vec![
            GoldResult { query: 0, ids: vec![3, 1, 2], distances: vec![], n_prime_total: 40 },
            GoldResult { query: 1, ids: vec![], distances: vec![], n_prime_total: 0 },
        ];
        write_ground_truth(&p, &gold).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "3,1,2,40\n0\n");
        let back = read_ground_truth(&p).unwrap();
        assert_eq!(back[0].ids, vec![3, 1, 2]);
        assert_eq!(back[1].n_prime_total, 0);
        assert_eq!(back[1].query, 1);
    }
}
