use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use wow_core::bench::{layer_footprint_trace, run_queries, run_sweep, write_trace, SweepConfig};
use wow_core::index::LandingLayer;
use wow_core::oracle::{brute_knn, ground_truth};
use wow_core::workload::{
    assign_attributes, gen_mixed, lid_at_k, read_vectors, write_fvecs, AttributeMode, RangeWorkload, VecFormat,
    VectorSet, WorkloadQuery,
};
use wow_core::{DistanceCounter, HybridDataset, IndexParams, Metric, QueryOptions, RangeFilter, WowIndex};

fn gaussian(n: usize, d: usize, seed: u64) -> VectorSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    VectorSet {
        dim: d,
        data: (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect(),
    }
}

fn fixture(n: usize, queries: usize, seed: u64) -> (HybridDataset, VectorSet, RangeWorkload) {
    let attrs = assign_attributes(n, &AttributeMode::RandomInt { n_unique: None }, seed).unwrap();
    let ds = HybridDataset::from_parts(8, Metric::L2, gaussian(n, 8, seed).data, attrs).unwrap();
    let wl = gen_mixed(ds.attributes(), queries, seed + 1).unwrap();
    (ds, gaussian(queries, 8, seed + 2), wl)
}

#[test]
fn fvecs_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("v.fvecs");
    let set = gaussian(1000, 12, 1);
    write_fvecs(&p, &set).unwrap();
    let back = read_vectors(&p, VecFormat::Fvecs).unwrap();
    assert_eq!(back.len(), 1000);
    assert!(back.data.iter().zip(&set.data).all(|(a, b)| a.to_bits() == b.to_bits()));
}

/// Straight transcription of the estimator: sort every in-range distance in
/// f64, take the k smallest, average the log ratios.
fn reference_lid(ds: &HybridDataset, queries: &VectorSet, wl: &RangeWorkload, k: usize) -> f64 {
    let mut total = 0.0;
    let mut used = 0;
    for q in &wl.queries {
        let v = queries.get(q.qid);
        let mut d: Vec<f64> = ds
            .iter()
            .filter(|(_, _, a)| q.range().contains(*a))
            .map(|(_, x, _)| x.iter().zip(v).map(|(a, b)| (*a as f64 - *b as f64).powi(2)).sum::<f64>().sqrt())
            .collect();
        d.sort_by(f64::total_cmp);
        if d.len() < k {
            continue;
        }
        let dk = d[k - 1];
        let s: f64 = d[..k].iter().map(|x| (x / dk).ln()).sum::<f64>() / k as f64;
        if d[0] > 0.0 && s != 0.0 {
            total += -1.0 / s;
            used += 1;
        }
    }
    total / used as f64
}

#[test]
fn lid_matches_reference_and_is_scale_invariant() {
    let attrs = assign_attributes(5000, &AttributeMode::RandomInt { n_unique: None }, 3).unwrap();
    let ds = HybridDataset::from_parts(16, Metric::L2, gaussian(5000, 16, 3).data, attrs.clone()).unwrap();
    let queries = gaussian(44, 16, 4);
    let wl = gen_mixed(&attrs, 44, 5).unwrap();
    let got = lid_at_k(&ds, &queries, &wl, 10).unwrap();
    let short = wl
        .queries
        .iter()
        .filter(|q| attrs.iter().filter(|&&a| q.range().contains(a)).count() < 10)
        .count();
    assert!(short > 0);
    assert_eq!((got.used, got.excluded), (44 - short, short));
    assert!((got.lid - reference_lid(&ds, &queries, &wl, 10)).abs() < 1e-9);
    assert!(got.lid > 1.0 && got.lid < 64.0);

    // power-of-two scaling is exact in floating point
    for c in [4.0f32, 0.5] {
        let scaled: Vec<f32> = ds.vectors().iter().map(|x| x * c).collect();
        let sq = VectorSet {
            dim: 16,
            data: queries.data.iter().map(|x| x * c).collect(),
        };
        let sds = HybridDataset::from_parts(16, Metric::L2, scaled, attrs.clone()).unwrap();
        assert!((lid_at_k(&sds, &sq, &wl, 10).unwrap().lid - got.lid).abs() < 1e-9);
    }
}

#[test]
fn lid_excludes_queries_short_of_k_neighbors() {
    let (ds, queries, _) = fixture(1024, 11, 6);
    let wl = RangeWorkload {
        queries: vec![
            WorkloadQuery { qid: 0, x: 0, y: 3, fraction: 0.0 },
            WorkloadQuery { qid: 1, x: 0, y: 500, fraction: 0.5 },
        ],
        seed: 0,
    };
    let r = lid_at_k(&ds, &queries, &wl, 10).unwrap();
    assert_eq!((r.used, r.excluded), (1, 1));
}

#[test]
fn saturated_beam_gives_exact_answers() {
    let (ds, queries, wl) = fixture(1024, 22, 7);
    let gold = ground_truth(&ds, &queries, &wl, 10, 2, |_| true).unwrap();
    let idx = WowIndex::build(IndexParams { m: 12, omega_c: 48, ..IndexParams::default() }, ds.clone(), 1).unwrap();
    let run = |q: &WorkloadQuery, g: &wow_core::oracle::GoldResult, options: QueryOptions| {
        let one = RangeWorkload { queries: vec![*q], seed: 0 };
        let w = (g.n_prime_total as usize).max(10);
        run_queries(&idx, &queries, &one, std::slice::from_ref(g), 10, w, options).unwrap()[0].recall
    };
    for (q, g) in wl.queries.iter().zip(&gold) {
        // Ranges this narrow land on layer 0, whose window graph restricted
        // to a handful of vertices need not be connected.
        let lifted = QueryOptions { landing: LandingLayer::Fixed(2), ..QueryOptions::default() };
        assert!(run(q, g, lifted) >= 0.999, "fraction {} lifted", q.fraction);
        if g.n_prime_total >= 8 {
            assert!(run(q, g, QueryOptions::default()) >= 0.999, "fraction {}", q.fraction);
        }
    }
}

#[test]
fn sweep_rows_are_deterministic_and_recall_monotone() {
    let (ds, queries, wl) = fixture(4096, 110, 8);
    let gold = ground_truth(&ds, &queries, &wl, 10, 4, |_| true).unwrap();
    let idx = WowIndex::build(IndexParams::default(), ds, 1).unwrap();
    let config = SweepConfig {
        tag: "t".into(),
        k: 10,
        omegas: vec![16, 16, 32, 64, 128, 256],
        options: QueryOptions::default(),
    };
    let rows = run_sweep(&idx, &queries, &wl, &gold, &config).unwrap();
    assert_eq!(rows.len(), 11 * 6);
    for bucket in rows.chunks(6) {
        assert_eq!((bucket[0].recall, bucket[0].dc, bucket[0].hops), (bucket[1].recall, bucket[1].dc, bucket[1].hops));
        assert!(bucket.iter().all(|r| r.qps > 0.0));
        for w in bucket.windows(2) {
            assert!(w[1].recall >= w[0].recall - 0.005, "{:?} then {:?}", w[0], w[1]);
        }
    }
    let again = run_sweep(&idx, &queries, &wl, &gold, &config).unwrap();
    for (a, b) in rows.iter().zip(&again) {
        assert_eq!((a.recall, a.dc, a.hops), (b.recall, b.dc, b.hops));
    }
    let bad = SweepConfig { omegas: vec![5], ..config };
    assert!(run_sweep(&idx, &queries, &wl, &gold, &bad).is_err());
}

#[test]
fn early_stop_never_costs_more_at_equal_beam_width() {
    let (ds, queries, wl) = fixture(8192, 220, 9);
    let gold = ground_truth(&ds, &queries, &wl, 10, 4, |_| true).unwrap();
    let idx = WowIndex::build(IndexParams::default(), ds, 1).unwrap();
    for omega in [16, 64] {
        let on = run_queries(&idx, &queries, &wl, &gold, 10, omega, QueryOptions::default()).unwrap();
        let off = QueryOptions { early_stop: false, ..QueryOptions::default() };
        let off = run_queries(&idx, &queries, &wl, &gold, 10, omega, off).unwrap();
        let ok = on.iter().zip(&off).filter(|(a, b)| b.dc >= a.dc).count();
        assert!(ok as f64 >= 0.95 * on.len() as f64, "omega {omega}: {ok}/{}", on.len());
    }
}

#[test]
fn footprints() {
    let mut single = WowIndex::new(IndexParams::default(), 2).unwrap();
    single.insert(&[0.0, 1.0], 7).unwrap();
    let r = RangeFilter::new(0, 10).unwrap();
    let trace = layer_footprint_trace(&single, &[0.0, 0.0], &r, 1, 4, QueryOptions::default()).unwrap();
    assert_eq!(trace.len(), 1);
    assert_eq!((trace[0].l_min, trace[0].l_max), (0, 0));

    let (ds, queries, wl) = fixture(8192, 110, 10);
    let idx = WowIndex::build(IndexParams::default(), ds, 1).unwrap();
    let off = QueryOptions { early_stop: false, ..QueryOptions::default() };
    let (mut depth_on, mut depth_off) = (Vec::new(), Vec::new());
    for q in &wl.queries {
        let v = queries.get(q.qid);
        let a = layer_footprint_trace(&idx, v, &q.range(), 10, 32, QueryOptions::default()).unwrap();
        let b = layer_footprint_trace(&idx, v, &q.range(), 10, 32, off).unwrap();
        assert!(b.iter().all(|h| h.l_min == 0));
        let mean = |t: &[wow_core::index::HopFootprint]| {
            t.iter().map(|h| (h.l_max - h.l_min) as f64).sum::<f64>() / t.len().max(1) as f64
        };
        depth_on.push(mean(&a));
        depth_off.push(mean(&b));
    }
    depth_on.sort_by(f64::total_cmp);
    depth_off.sort_by(f64::total_cmp);
    assert!(depth_on[depth_on.len() / 2] <= depth_off[depth_off.len() / 2]);

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("trace.jsonl");
    write_trace(&idx, &queries, &wl, 10, 32, QueryOptions::default(), &p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert_eq!(text.lines().count(), 110);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert!(first["hops"].as_array().is_some_and(|h| !h.is_empty()));
}

#[test]
fn ground_truth_is_thread_count_independent() {
    let (ds, queries, wl) = fixture(2048, 33, 11);
    let a = ground_truth(&ds, &queries, &wl, 5, 1, |_| true).unwrap();
    let b = ground_truth(&ds, &queries, &wl, 5, 7, |_| true).unwrap();
    assert_eq!(a, b);
    for (q, g) in wl.queries.iter().zip(&a) {
        let direct = brute_knn(&ds, queries.get(q.qid), &q.range(), 5, &mut DistanceCounter::new());
        assert_eq!(g.ids, direct.ids);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dead: std::collections::HashSet<u32> = (0..500).map(|_| rng.random_range(0..2048)).collect();
    let filtered = ground_truth(&ds, &queries, &wl, 5, 3, |id| !dead.contains(&id)).unwrap();
    assert!(filtered.iter().flat_map(|g| &g.ids).all(|id| !dead.contains(id)));
}
