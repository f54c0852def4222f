//! Beam-width sweeps reporting Recall@k, QPS, distance computations and hops
//! per fraction bucket, plus per-hop layer footprints.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::VectorId;
use crate::error::{Error, Result};
use crate::index::{HopFootprint, QueryOptions, WowIndex};
use crate::oracle::{recall, GoldResult};
use crate::workload::{query_vector, RangeWorkload, VectorSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub tag: String,
    pub fraction: f64,
    pub omega_s: usize,
    pub recall: f64,
    pub qps: f64,
    pub dc: f64,
    pub hops: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Label copied into every record, e.g. `shuffled` or `no-early-stop`.
    pub tag: String,
    pub k: usize,
    pub omegas: Vec<usize>,
    pub options: QueryOptions,
}

/// Result of one query at one beam width.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    pub qid: usize,
    pub ids: Vec<VectorId>,
    pub recall: f64,
    pub dc: u64,
    pub hops: u64,
    /// Mean in-range share of neighbors at the landing layer, per hop.
    pub landing_in_range: Option<f64>,
    pub landing_layer: usize,
}

fn check_inputs(workload: &RangeWorkload, gold: &[GoldResult], k: usize, omega_s: usize) -> Result<()> {
    if omega_s < k {
        return Err(Error::InvalidParams(format!("omega_s ({omega_s}) must be >= k ({k})")));
    }
    if gold.len() != workload.len() {
        return Err(Error::Workload(format!(
            "{} ground-truth rows for {} queries",
            gold.len(),
            workload.len()
        )));
    }
    Ok(())
}

/// Runs every query of `workload` once at `omega_s`, in workload order.
pub fn run_queries(
    index: &WowIndex,
    queries: &VectorSet,
    workload: &RangeWorkload,
    gold: &[GoldResult],
    k: usize,
    omega_s: usize,
    options: QueryOptions,
) -> Result<Vec<QueryOutcome>> {
    check_inputs(workload, gold, k, omega_s)?;
    let mut ctx = index.context().with_options(options);
    workload
        .queries
        .iter()
        .zip(gold)
        .map(|(wq, g)| {
            let q = query_vector(queries, wq.qid)?;
            let res = index.search_knn(q, &wq.range(), k, omega_s, &mut ctx)?;
            let ids: Vec<VectorId> = res.iter().map(|n| n.id).collect();
            Ok(QueryOutcome {
                qid: wq.qid,
                recall: recall(&ids, g, k),
                ids,
                dc: ctx.counter.get(),
                hops: ctx.stats.hops,
                landing_in_range: ctx.stats.mean_top_layer_in_range(),
                landing_layer: ctx.stats.landing_layer,
            })
        })
        .collect()
}

/// One record per fraction bucket (largest fraction first) per beam width
/// (in the given order). Each bucket is run once to warm caches and once
/// more under the clock; recall, DC and hops come from the timed pass.
pub fn run_sweep(
    index: &WowIndex,
    queries: &VectorSet,
    workload: &RangeWorkload,
    gold: &[GoldResult],
    config: &SweepConfig,
) -> Result<Vec<BenchRecord>> {
    for &w in &config.omegas {
        check_inputs(workload, gold, config.k, w)?;
    }
    let mut out = Vec::new();
    for fraction in workload.fractions() {
        let picked: Vec<usize> = (0..workload.len())
            .filter(|&i| workload.queries[i].fraction == fraction)
            .collect();
        let bucket = RangeWorkload {
            queries: picked.iter().map(|&i| workload.queries[i]).collect(),
            seed: workload.seed,
        };
        let bucket_gold: Vec<GoldResult> = picked.iter().map(|&i| gold[i].clone()).collect();
        for &omega_s in &config.omegas {
            run_queries(index, queries, &bucket, &bucket_gold, config.k, omega_s, config.options)?;
            let start = Instant::now();
            let outcomes = run_queries(index, queries, &bucket, &bucket_gold, config.k, omega_s, config.options)?;
            let secs = start.elapsed().as_secs_f64().max(1e-9);
            let count = outcomes.len() as f64;
            out.push(BenchRecord {
                tag: config.tag.clone(),
                fraction,
                omega_s,
                recall: outcomes.iter().map(|o| o.recall).sum::<f64>() / count,
                qps: count / secs,
                dc: outcomes.iter().map(|o| o.dc).sum::<u64>() as f64 / count,
                hops: outcomes.iter().map(|o| o.hops).sum::<u64>() as f64 / count,
            });
        }
    }
    Ok(out)
}

pub const CSV_HEADER: [&str; 7] = ["tag", "fraction", "omega_s", "recall", "qps", "dc", "hops"];

pub fn emit_csv(records: &[BenchRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.tag.clone(),
            format!("{:.6}", r.fraction),
            r.omega_s.to_string(),
            format!("{:.6}", r.recall),
            format!("{:.6}", r.qps),
            format!("{:.6}", r.dc),
            format!("{:.6}", r.hops),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn parse_csv(path: &Path) -> Result<Vec<BenchRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| Ok(row?)).collect()
}

/// Per-hop `(l_max, l_min)` of one traced query.
pub fn layer_footprint_trace(
    index: &WowIndex,
    q: &[f32],
    range: &crate::dataset::RangeFilter,
    k: usize,
    omega_s: usize,
    options: QueryOptions,
) -> Result<Vec<HopFootprint>> {
    let mut ctx = index.context().with_options(QueryOptions { trace: true, ..options });
    index.search_knn(q, range, k, omega_s, &mut ctx)?;
    Ok(std::mem::take(&mut ctx.stats.footprint))
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceLine {
    pub qid: usize,
    pub fraction: f64,
    pub landing_layer: usize,
    pub dc: u64,
    pub hops: Vec<HopFootprint>,
}

/// Traces every workload query and writes one JSON object per line.
pub fn write_trace(
    index: &WowIndex,
    queries: &VectorSet,
    workload: &RangeWorkload,
    k: usize,
    omega_s: usize,
    options: QueryOptions,
    path: &Path,
) -> Result<()> {
    let mut ctx = index.context().with_options(QueryOptions { trace: true, ..options });
    let mut out = Vec::new();
    for wq in &workload.queries {
        index.search_knn(query_vector(queries, wq.qid)?, &wq.range(), k, omega_s, &mut ctx)?;
        let line = TraceLine {
            qid: wq.qid,
            fraction: wq.fraction,
            landing_layer: ctx.stats.landing_layer,
            dc: ctx.counter.get(),
            hops: std::mem::take(&mut ctx.stats.footprint),
        };
        serde_json::to_writer(&mut out, &line).map_err(|e| Error::Workload(e.to_string()))?;
        out.write_all(b"\n").expect("vec write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
