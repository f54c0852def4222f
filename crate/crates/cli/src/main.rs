use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use wow_core::bench::{emit_csv, run_sweep, SweepConfig};
use wow_core::index::{verify_image, IndexImage};
use wow_core::oracle::{edge_quality, ground_truth, write_ground_truth};
use wow_core::workload::{
    assign_attributes, gen_workload, ingest, query_vector, read_vectors, read_workload, write_workload,
    AttributeMode, RangeWorkload, VecFormat, VectorSet, MIXED_FRACTIONS,
};
use wow_core::{HybridDataset, IndexParams, LandingLayer, Metric, QueryOptions, Violation, WowIndex};

#[derive(Parser)]
#[command(name = "wow", version, about = "Range-filtered approximate nearest neighbor search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Insert every pair into a new index and write it with a build report.
    Build(BuildArgs),
    /// Answer range-filtered k-NN queries against a saved index.
    Query(QueryArgs),
    /// Exact in-range top-k by linear scan.
    Gt(GtArgs),
    /// Draw range filters with target fractions from the attribute column.
    GenWorkload(GenArgs),
    /// Sweep beam widths and write recall, QPS and distance counts as CSV.
    Bench(BenchArgs),
    /// Check a saved index against its structural invariants.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    L2,
    Cosine,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::L2 => Metric::L2,
            MetricArg::Cosine => Metric::Cosine,
        }
    }
}

/// Inputs shared by every command that touches the dataset. The same flags
/// must be passed to every command so ids line up with the saved index.
#[derive(Args)]
struct DataArgs {
    /// Vector file (.fvecs, .ivecs or .bvecs).
    #[arg(long)]
    vectors: PathBuf,
    /// Attribute file with one integer per line, `seq` for 0..n, or
    /// `random[:N]` for uniform draws from 1..=N (a permutation without N).
    #[arg(long, default_value = "seq")]
    attrs: String,
    #[arg(long, value_enum, default_value = "l2")]
    metric: MetricArg,
    /// Shuffle pairs with this seed before use.
    #[arg(long)]
    shuffle: Option<u64>,
    /// Replace each attribute by its rank among all attributes.
    #[arg(long)]
    rank_remap: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl DataArgs {
    fn load(&self) -> Result<HybridDataset> {
        let vectors = read_vectors(&self.vectors, VecFormat::from_path(&self.vectors))?;
        let mode = parse_attrs(&self.attrs)?;
        let attrs = assign_attributes(vectors.len(), &mode, self.seed)?;
        Ok(ingest(vectors, attrs, self.metric.into(), self.rank_remap, self.shuffle)?)
    }
}

fn parse_attrs(spec: &str) -> Result<AttributeMode> {
    Ok(match spec {
        "seq" => AttributeMode::SequentialId,
        "random" => AttributeMode::RandomInt { n_unique: None },
        _ => match spec.strip_prefix("random:") {
            Some(n) => AttributeMode::RandomInt {
                n_unique: Some(n.parse().with_context(|| format!("bad unique count in --attrs {spec}"))?),
            },
            None => AttributeMode::File(PathBuf::from(spec)),
        },
    })
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long)]
    no_early_stop: bool,
    /// `auto` or a fixed layer number.
    #[arg(long, default_value = "auto", value_parser = parse_landing)]
    landing_layer: LandingLayer,
}

impl SearchArgs {
    fn options(&self) -> QueryOptions {
        QueryOptions {
            early_stop: !self.no_early_stop,
            landing: self.landing_layer,
            trace: false,
        }
    }
}

fn parse_landing(s: &str) -> Result<LandingLayer, String> {
    if s == "auto" {
        return Ok(LandingLayer::Auto);
    }
    s.parse()
        .map(LandingLayer::Fixed)
        .map_err(|_| format!("expected `auto` or a layer number, got {s:?}"))
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 16)]
    m: usize,
    /// Beam width for collecting insertion candidates.
    #[arg(long, default_value_t = 128)]
    efc: usize,
    #[arg(long, default_value_t = 4)]
    o: usize,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Index file; the report goes next to it with a `.report.json` suffix.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct QueryArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    /// Workload CSV (`qid,x,y,fraction`).
    #[arg(long)]
    ranges: PathBuf,
    #[arg(long, default_value_t = 64)]
    efs: usize,
    #[command(flatten)]
    search: SearchArgs,
}

#[derive(Args)]
struct GtArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    ranges: PathBuf,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Query vectors; one range is drawn per vector.
    #[arg(long)]
    queries: PathBuf,
    /// Comma-separated fractions, or `mixed` for 2^0 down to 2^-10.
    #[arg(long, default_value = "mixed")]
    fractions: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    ranges: PathBuf,
    /// Comma-separated beam widths to sweep.
    #[arg(long, default_value = "10,16,32,64,128,256")]
    efs: String,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    index: PathBuf,
}

/// Structural violations found by `verify`; maps to exit code 3.
#[derive(Debug)]
struct InvariantFailure(Vec<Violation>);

impl fmt::Display for InvariantFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lines: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", lines.join("\n"))
    }
}

impl std::error::Error for InvariantFailure {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("WOW_LOG", "error")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<InvariantFailure>().is_some() {
                ExitCode::from(3)
            } else if matches!(e.downcast_ref::<wow_core::Error>(), Some(wow_core::Error::InvalidParams(_))) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Build(a) => build(a),
        Command::Query(a) => query(a),
        Command::Gt(a) => gt(a),
        Command::GenWorkload(a) => gen(a),
        Command::Bench(a) => bench(a),
        Command::Verify(a) => verify(a),
    }
}

fn build(a: BuildArgs) -> Result<()> {
    let ds = a.data.load()?;
    let params = IndexParams {
        m: a.m,
        omega_c: a.efc,
        o: a.o,
        metric: a.data.metric.into(),
        seed: a.data.seed,
        ..IndexParams::default()
    };
    log::info!("building over {} vectors of dimension {}", ds.len(), ds.dim());
    let start = Instant::now();
    let index = WowIndex::build(params, ds, a.threads)?;
    let wall = start.elapsed().as_secs_f64();
    index.save(&a.out)?;
    let report = serde_json::json!({
        "wall_time_secs": wall,
        "threads": a.threads,
        "m": a.m,
        "efc": a.efc,
        "o": a.o,
        "seed": a.data.seed,
        "stats": index.structural_stats(),
    });
    let report_path = report_path(&a.out);
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)? + "\n")
        .with_context(|| format!("writing {}", report_path.display()))?;
    println!("built {} vectors in {wall:.3}s -> {}", index.len(), a.out.display());
    Ok(())
}

fn report_path(index: &Path) -> PathBuf {
    let mut name = index.as_os_str().to_owned();
    name.push(".report.json");
    PathBuf::from(name)
}

fn load_queries(path: &Path) -> Result<VectorSet> {
    Ok(read_vectors(path, VecFormat::from_path(path))?)
}

fn query(a: QueryArgs) -> Result<()> {
    let index = WowIndex::load(&a.index, a.data.load()?)?;
    let queries = load_queries(&a.queries)?;
    let workload = read_workload(&a.ranges)?;
    let mut ctx = index.context();
    ctx.options = a.search.options();
    println!("qid,id,distance,attribute");
    for wq in &workload.queries {
        let q = query_vector(&queries, wq.qid)?;
        for hit in index.search_knn(q, &wq.range(), a.search.k, a.efs, &mut ctx)? {
            println!("{},{},{},{}", wq.qid, hit.id, hit.distance, index.dataset().attribute(hit.id));
        }
    }
    Ok(())
}

fn gt(a: GtArgs) -> Result<()> {
    let ds = a.data.load()?;
    let queries = load_queries(&a.queries)?;
    let workload = read_workload(&a.ranges)?;
    let gold = ground_truth(&ds, &queries, &workload, a.k, 1, |_| true)?;
    write_ground_truth(&a.out, &gold)?;
    Ok(())
}

fn gen(a: GenArgs) -> Result<()> {
    let ds = a.data.load()?;
    let count = load_queries(&a.queries)?.len();
    let fractions = if a.fractions == "mixed" {
        MIXED_FRACTIONS.to_vec()
    } else {
        a.fractions
            .split(',')
            .map(|f| f.trim().parse::<f64>().with_context(|| format!("bad fraction {f:?}")))
            .collect::<Result<Vec<_>>>()?
    };
    let workload = gen_workload(ds.attributes(), &fractions, count, a.data.seed)?;
    write_workload(&a.out, &workload)?;
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let index = WowIndex::load(&a.index, a.data.load()?)?;
    let queries = load_queries(&a.queries)?;
    let workload: RangeWorkload = read_workload(&a.ranges)?;
    let omegas = a
        .efs
        .split(',')
        .map(|w| w.trim().parse::<usize>().with_context(|| format!("bad beam width {w:?}")))
        .collect::<Result<Vec<_>>>()?;
    if omegas.is_empty() {
        bail!("--efs needs at least one beam width");
    }
    let options = a.search.options();
    let tag = match (options.early_stop, options.landing) {
        (true, LandingLayer::Auto) => "wow".to_string(),
        (es, landing) => {
            let mut t = "wow".to_string();
            if !es {
                t += "-no-early-stop";
            }
            if let LandingLayer::Fixed(l) = landing {
                t += &format!("-land{l}");
            }
            t
        }
    };
    let gold = ground_truth(index.dataset(), &queries, &workload, a.search.k, 1, |id| !index.is_deleted(id))?;
    let config = SweepConfig {
        tag,
        k: a.search.k,
        omegas,
        options,
    };
    let rows = run_sweep(&index, &queries, &workload, &gold, &config)?;
    emit_csv(&rows, &a.out)?;
    Ok(())
}

fn verify(a: VerifyArgs) -> Result<()> {
    let image = IndexImage::read(&a.index)?;
    let ds = a.data.load()?;
    let violations = verify_image(&image, &ds);
    if !violations.is_empty() {
        return Err(InvariantFailure(violations).into());
    }
    let index = WowIndex::from_image(image, ds)?;
    let quality = edge_quality(&index);
    println!("ok: {} vectors, top layer {}", index.len(), index.top());
    println!("{}", serde_json::to_string(&quality)?);
    Ok(())
}
