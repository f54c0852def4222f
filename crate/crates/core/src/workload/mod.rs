//! Dataset ingestion, attribute assignment, selectivity-controlled range
//! generation and local-intrinsic-dimensionality estimates.

mod io;

pub use io::{encode_fvecs, parse_vectors, read_vectors, write_fvecs, VecFormat, VectorSet};

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{AttributeValue, HybridDataset, RangeFilter};
use crate::distance::{DistanceCounter, Metric};
use crate::error::{Error, Result};
use crate::oracle::brute_knn;

/// Fractions of the mixed workload, `2^0` down to `2^-10`.
pub const MIXED_FRACTIONS: [f64; 11] = [
    1.0,
    0.5,
    0.25,
    0.125,
    0.0625,
    0.03125,
    0.015625,
    0.0078125,
    0.00390625,
    0.001953125,
    0.0009765625,
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttributeMode {
    /// Uniform draws from `[1, n_unique]`, or a shuffled `0..n` when unset.
    RandomInt { n_unique: Option<u64> },
    SequentialId,
    /// One integer per line.
    File(PathBuf),
}

pub fn assign_attributes(n: usize, mode: &AttributeMode, seed: u64) -> Result<Vec<AttributeValue>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match mode {
        AttributeMode::SequentialId => Ok((0..n as AttributeValue).collect()),
        AttributeMode::RandomInt { n_unique: Some(0) } => {
            Err(Error::Workload("n_unique must be at least 1".into()))
        }
        AttributeMode::RandomInt { n_unique: Some(u) } => {
            let hi = i64::try_from(*u).map_err(|_| Error::Workload(format!("n_unique {u} too large")))?;
            Ok((0..n).map(|_| rng.random_range(1..=hi)).collect())
        }
        AttributeMode::RandomInt { n_unique: None } => {
            let mut v: Vec<AttributeValue> = (0..n as AttributeValue).collect();
            v.shuffle(&mut rng);
            Ok(v)
        }
        AttributeMode::File(path) => {
            let values = read_attributes(path)?;
            if values.len() != n {
                return Err(Error::Workload(format!(
                    "{} holds {} attribute values for {n} vectors",
                    path.display(),
                    values.len()
                )));
            }
            Ok(values)
        }
    }
}

pub fn read_attributes(path: &Path) -> Result<Vec<AttributeValue>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut offset = 0u64;
    for line in text.split_inclusive('\n') {
        let t = line.trim();
        if !t.is_empty() {
            out.push(t.parse().map_err(|e| Error::Format {
                path: path.to_path_buf(),
                offset,
                msg: format!("bad attribute {t:?}: {e}"),
            })?);
        }
        offset += line.len() as u64;
    }
    Ok(out)
}

pub fn write_attributes(path: &Path, values: &[AttributeValue]) -> Result<()> {
    let mut text = String::with_capacity(values.len() * 8);
    for v in values {
        text.push_str(&v.to_string());
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Pairs vectors with attributes, optionally rank-remapping (sort by
/// attribute, then use the sorted position as the new attribute) and then
/// shuffling the pairs.
pub fn ingest(
    vectors: VectorSet,
    attributes: Vec<AttributeValue>,
    metric: Metric,
    rank_remap: bool,
    shuffle: Option<u64>,
) -> Result<HybridDataset> {
    let mut ds = HybridDataset::from_parts(vectors.dim, metric, vectors.data, attributes)?;
    if rank_remap {
        ds = ds.rank_remap();
    }
    if let Some(seed) = shuffle {
        ds = ds.shuffled(seed);
    }
    Ok(ds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkloadQuery {
    /// Index into the query-vector file.
    pub qid: usize,
    pub x: AttributeValue,
    pub y: AttributeValue,
    pub fraction: f64,
}

impl WorkloadQuery {
    pub fn range(&self) -> RangeFilter {
        RangeFilter::new(self.x, self.y).expect("generated ranges are ordered")
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RangeWorkload {
    pub queries: Vec<WorkloadQuery>,
    pub seed: u64,
}

impl RangeWorkload {
    /// Distinct fractions, largest first.
    pub fn fractions(&self) -> Vec<f64> {
        let mut f: Vec<f64> = self.queries.iter().map(|q| q.fraction).collect();
        f.sort_by(|a, b| b.total_cmp(a));
        f.dedup();
        f
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

/// Number of in-range positions for fraction `f` of `n` pairs.
pub fn range_len(n: usize, f: f64) -> usize {
    (n as f64 * f).floor() as usize
}

/// Ranges covering exactly `floor(n f)` consecutive positions of the
/// sorted attribute sequence, each with a uniform start position.
pub fn gen_ranges(attributes: &[AttributeValue], f: f64, count: usize, seed: u64) -> Result<Vec<RangeFilter>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sorted = attributes.to_vec();
    sorted.sort_unstable();
    ranges_from_sorted(&sorted, f, count, &mut rng)
}

fn ranges_from_sorted(
    sorted: &[AttributeValue],
    f: f64,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<RangeFilter>> {
    let n = sorted.len();
    let len = range_len(n, f);
    if len == 0 || len > n || !f.is_finite() {
        return Err(Error::Workload(format!(
            "fraction {f} of {n} pairs gives {len} in-range positions"
        )));
    }
    (0..count)
        .map(|_| {
            let s = rng.random_range(0..=n - len);
            RangeFilter::new(sorted[s], sorted[s + len - 1])
        })
        .collect()
}

/// Equal numbers of ranges for each of [`MIXED_FRACTIONS`], shuffled.
/// Query ids are assigned in the final order.
pub fn gen_mixed(attributes: &[AttributeValue], count: usize, seed: u64) -> Result<RangeWorkload> {
    gen_workload(attributes, &MIXED_FRACTIONS, count, seed)
}

/// Like [`gen_mixed`] over an arbitrary fraction list.
pub fn gen_workload(attributes: &[AttributeValue], fractions: &[f64], count: usize, seed: u64) -> Result<RangeWorkload> {
    if fractions.is_empty() || !count.is_multiple_of(fractions.len()) {
        return Err(Error::Workload(format!(
            "query count {count} is not divisible by {} fractions",
            fractions.len()
        )));
    }
    let per = count / fractions.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sorted = attributes.to_vec();
    sorted.sort_unstable();
    let mut queries = Vec::with_capacity(count);
    for &f in fractions {
        for r in ranges_from_sorted(&sorted, f, per, &mut rng)? {
            queries.push(WorkloadQuery {
                qid: 0,
                x: r.x(),
                y: r.y(),
                fraction: f,
            });
        }
    }
    queries.shuffle(&mut rng);
    for (i, q) in queries.iter_mut().enumerate() {
        q.qid = i;
    }
    Ok(RangeWorkload { queries, seed })
}

pub fn write_workload(path: &Path, workload: &RangeWorkload) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for q in &workload.queries {
        w.serialize(q)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_workload(path: &Path) -> Result<RangeWorkload> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["qid", "x", "y", "fraction"] {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            msg: "expected header qid,x,y,fraction".into(),
        });
    }
    let mut queries = Vec::new();
    for row in r.deserialize() {
        let q: WorkloadQuery = row?;
        if q.x > q.y {
            return Err(Error::InvalidRange { x: q.x, y: q.y });
        }
        queries.push(q);
    }
    Ok(RangeWorkload { queries, seed: 0 })
}

/// Maximum-likelihood LID estimate from one query's ascending native
/// distances `d_1 <= ... <= d_k`. `None` when a distance is zero or all
/// are equal.
pub fn lid_from_distances(d: &[f64]) -> Option<f64> {
    let &dk = d.last()?;
    if d.iter().any(|&x| x <= 0.0) {
        return None;
    }
    let inner = d.iter().map(|&x| (x / dk).ln()).sum::<f64>() / d.len() as f64;
    if inner == 0.0 {
        return None;
    }
    Some(-1.0 / inner)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LidReport {
    pub lid: f64,
    pub used: usize,
    /// Queries with fewer than `k` in-range neighbors, a zero distance, or
    /// all `k` distances equal.
    pub excluded: usize,
}

/// Mean LID over the workload, from exact in-range neighbors.
pub fn lid_at_k(dataset: &HybridDataset, queries: &VectorSet, workload: &RangeWorkload, k: usize) -> Result<LidReport> {
    if k == 0 {
        return Err(Error::InvalidParams("k must be positive".into()));
    }
    let metric = dataset.metric();
    let (mut sum, mut used, mut excluded) = (0.0, 0usize, 0usize);
    for wq in &workload.queries {
        let q = query_vector(queries, wq.qid)?;
        let gold = brute_knn(dataset, q, &wq.range(), k, &mut DistanceCounter::new());
        let dists: Vec<f64> = gold
            .ids
            .iter()
            .map(|&id| metric.native(metric.eval_f64(q, dataset.vector(id))))
            .collect();
        match (dists.len() == k).then(|| lid_from_distances(&dists)).flatten() {
            Some(lid) => {
                sum += lid;
                used += 1;
            }
            None => excluded += 1,
        }
    }
    if used == 0 {
        return Err(Error::Workload(format!("all {excluded} queries were excluded from the LID estimate")));
    }
    Ok(LidReport {
        lid: sum / used as f64,
        used,
        excluded,
    })
}

pub fn query_vector(queries: &VectorSet, qid: usize) -> Result<&[f32]> {
    if qid >= queries.len() {
        return Err(Error::Workload(format!("query id {qid} but only {} query vectors", queries.len())));
    }
    Ok(queries.get(qid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attr_tree::AttrTree;

    #[test]
    fn attribute_modes() {
        assert_eq!(assign_attributes(5, &AttributeMode::SequentialId, 0).unwrap(), vec![0, 1, 2, 3, 4]);
        let one = assign_attributes(50, &AttributeMode::RandomInt { n_unique: Some(1) }, 3).unwrap();
        assert!(one.iter().all(|&a| a == 1));
        let mut distinct = assign_attributes(100, &AttributeMode::RandomInt { n_unique: None }, 3).unwrap();
        distinct.sort();
        assert_eq!(distinct, (0..100).collect::<Vec<_>>());
        assert!(assign_attributes(5, &AttributeMode::RandomInt { n_unique: Some(0) }, 0).is_err());
    }

    #[test]
    fn bounded_random_attributes_are_reproducible() {
        let mode = AttributeMode::RandomInt { n_unique: Some(100) };
        let a = assign_attributes(10_000, &mode, 9).unwrap();
        assert_eq!(a, assign_attributes(10_000, &mode, 9).unwrap());
        let mut u = a.clone();
        u.sort();
        u.dedup();
        assert!(u.len() <= 100);
        assert!(u.iter().all(|&x| (1..=100).contains(&x)));
    }

    #[test]
    fn attribute_file_round_trip_and_length_check() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_attributes(&p, &[5, -3, 7]).unwrap();
        assert_eq!(
            assign_attributes(3, &AttributeMode::File(p.clone()), 0).unwrap(),
            vec![5, -3, 7]
        );
        assert!(matches!(
            assign_attributes(4, &AttributeMode::File(p), 0),
            Err(Error::Workload(_))
        ));
    }

    #[test]
    fn fifteen_in_range_at_one_sixty_fourth() {
        let attrs: Vec<i64> = (1..=1000).collect();
        for r in gen_ranges(&attrs, 2f64.powi(-6), 200, 1).unwrap() {
            assert_eq!(attrs.iter().filter(|&&a| r.contains(a)).count(), 15);
        }
    }

    #[test]
    fn full_fraction_spans_everything() {
        let attrs = vec![9, 3, 12, 5];
        let r = gen_ranges(&attrs, 1.0, 3, 0).unwrap();
        assert!(r.iter().all(|r| (r.x(), r.y()) == (3, 12)));
        assert!(gen_ranges(&attrs, 0.1, 1, 0).is_err());
    }

    #[test]
    fn realized_cardinality_matches_tree() {
        let attrs = assign_attributes(5000, &AttributeMode::RandomInt { n_unique: None }, 4).unwrap();
        let mut tree = AttrTree::new();
        for &a in &attrs {
            tree.insert(a);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for i in 0..1000 {
            let f = MIXED_FRACTIONS[rng.random_range(0..11)];
            let r = gen_ranges(&attrs, f, 1, i).unwrap()[0];
            assert_eq!(tree.filtered_cardinality(&r).total, range_len(5000, f) as u64);
        }
    }

    #[test]
    fn mixed_workload_shape() {
        let attrs: Vec<i64> = (0..4096).rev().collect();
        assert!(gen_mixed(&attrs, 100, 0).is_err());
        let w = gen_mixed(&attrs, 1100, 7).unwrap();
        assert_eq!(w.len(), 1100);
        let mut hist = std::collections::BTreeMap::new();
        for q in &w.queries {
            let n_prime = attrs.iter().filter(|&&a| q.range().contains(a)).count();
            assert_eq!(n_prime, range_len(4096, q.fraction));
            *hist.entry(n_prime).or_insert(0) += 1;
        }
        let expect: std::collections::BTreeMap<usize, i32> = (0..11).map(|i| (4096 >> i, 100)).collect();
        assert_eq!(hist, expect);
        assert!(w.queries.iter().enumerate().all(|(i, q)| q.qid == i));
        assert!(w.queries[..100].iter().any(|q| q.fraction != w.queries[0].fraction));
        assert_eq!(gen_mixed(&attrs, 11, 7).unwrap().fractions().len(), 11);
    }

    #[test]
    fn workload_files_are_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let attrs: Vec<i64> = (0..2048).collect();
        let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        write_workload(&a, &gen_mixed(&attrs, 22, 3).unwrap()).unwrap();
        write_workload(&b, &gen_mixed(&attrs, 22, 3).unwrap()).unwrap();
        let bytes = std::fs::read(&a).unwrap();
        assert_eq!(bytes, std::fs::read(&b).unwrap());
        assert!(bytes.starts_with(b"qid,x,y,fraction\n"));
        let back = read_workload(&a).unwrap();
        assert_eq!(back.queries, gen_mixed(&attrs, 22, 3).unwrap().queries);
    }

    #[test]
    fn lid_closed_forms() {
        let e = std::f64::consts::E;
        assert!((lid_from_distances(&[1.0 / e, 1.0]).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(lid_from_distances(&[2.0, 2.0, 2.0]), None);
        assert_eq!(lid_from_distances(&[0.0, 1.0]), None);
    }

    #[test]
    fn lid_rejects_fully_degenerate_workloads() {
        let ds = HybridDataset::from_parts(1, Metric::L2, vec![1.0, 1.0], vec![0, 1]).unwrap();
        let queries = VectorSet { dim: 1, data: vec![0.0] };
        let w = RangeWorkload {
            queries: vec![WorkloadQuery { qid: 0, x: 0, y: 1, fraction: 1.0 }],
            seed: 0,
        };
        assert!(matches!(lid_at_k(&ds, &queries, &w, 2), Err(Error::Workload(_))));
    }

    #[test]
    fn ingest_remaps_then_shuffles() {
        let v = VectorSet { dim: 1, data: vec![0.0, 1.0, 2.0] };
        let ds = ingest(v.clone(), vec![30, 10, 20], Metric::L2, true, None).unwrap();
        assert_eq!(ds.attributes(), &[0, 1, 2]);
        assert_eq!(ds.vectors(), &[1.0, 2.0, 0.0]);
        let sh = ingest(v, vec![30, 10, 20], Metric::L2, true, Some(1)).unwrap();
        for (_, x, a) in sh.iter() {
            let expect = [1.0, 2.0, 0.0][a as usize];
            assert_eq!(x[0], expect);
        }
    }
}
