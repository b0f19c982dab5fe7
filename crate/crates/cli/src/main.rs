//! `dkws` command line: build indexes, partition graphs, run queries and
//! benchmark sweeps, and print brute-force reference answers.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use dkws_core::gen::sample_queries;
use dkws_core::graph::{load_graph, Graph, Query};
use dkws_core::oracle;
use dkws_core::partition::{import_partition, partition_hash, Fragmentation};
use dkws_core::report::{format_results, CsvRow, CSV_HEADER, CSV_SCHEMA};
use dkws_core::runtime::{run_query, Answer, RunConfig, SelectorMode, Variant};
use dkws_core::sketch::{load_sketches, save_sketches, stretch_factor, SketchSet, DEFAULT_K_PARAM};

#[derive(Parser)]
#[command(name = "dkws", version, about = "Distributed top-k keyword search on labeled weighted digraphs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the distance sketches and persist them
    Index(IndexArgs),
    /// Produce a hash partition in METIS-style format
    Partition(PartitionArgs),
    /// Run one query and print the top-k matches
    Query(QueryArgs),
    /// Run the benchmark protocol and emit a metrics CSV
    Bench(BenchArgs),
    /// Print the brute-force reference answer
    Oracle(OracleArgs),
}

#[derive(Args)]
struct GraphArgs {
    /// Edge file: `u v w` per line, `#` comments
    #[arg(long)]
    graph: PathBuf,
    /// Label file: `u kw1 kw2 ...` per line
    #[arg(long)]
    labels: PathBuf,
    /// Declared vertex count (default: max id + 1)
    #[arg(long)]
    n: Option<usize>,
}

impl GraphArgs {
    fn load(&self) -> Result<Graph> {
        let edges = BufReader::new(
            File::open(&self.graph).with_context(|| format!("open {}", self.graph.display()))?,
        );
        let labels = BufReader::new(
            File::open(&self.labels).with_context(|| format!("open {}", self.labels.display()))?,
        );
        Ok(load_graph(edges, labels, self.n)?)
    }
}

#[derive(Args)]
struct IndexArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// Sketch admission parameter
    #[arg(long, default_value_t = DEFAULT_K_PARAM)]
    k_param: usize,
    /// Partition file; adds per-fragment border sketches
    #[arg(long)]
    partition: Option<PathBuf>,
    /// Worker count for --partition
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PartitionArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long)]
    workers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

impl Toggle {
    fn as_bool(self) -> bool {
        matches!(self, Toggle::On)
    }
}

#[derive(Args)]
struct EngineArgs {
    #[arg(long, value_parser = parse_variant, default_value = "pine")]
    variant: Variant,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Partition file (default: hash partition over --workers)
    #[arg(long)]
    partition: Option<PathBuf>,
    /// Sketch file built by `dkws index`
    #[arg(long)]
    sketches: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    np_threshold: u64,
    /// Apply pushed bounds only at superstep barriers
    #[arg(long)]
    deterministic: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    opt_backtrack: Option<Toggle>,
    #[arg(long)]
    opt_bpads: Option<Toggle>,
    #[arg(long)]
    opt_order: Option<Toggle>,
    /// Force the alternating subtask schedule even for pine
    #[arg(long)]
    forced_alternation: bool,
}

impl EngineArgs {
    fn config(&self, variant: Variant) -> RunConfig {
        let mut cfg = RunConfig::new(variant);
        cfg.np_threshold = self.np_threshold;
        cfg.deterministic = self.deterministic;
        cfg.opt_backtrack = self.opt_backtrack.map(Toggle::as_bool);
        cfg.opt_bpads = self.opt_bpads.map(Toggle::as_bool);
        cfg.opt_order = self.opt_order.map(Toggle::as_bool);
        if self.forced_alternation {
            cfg.selector_override = Some(SelectorMode::ForcedAlternation);
        }
        cfg
    }

    fn fragmentation(&self, g: &Graph) -> Result<Fragmentation> {
        match &self.partition {
            Some(path) => {
                let r = BufReader::new(
                    File::open(path).with_context(|| format!("open {}", path.display()))?,
                );
                Ok(import_partition(g, r, self.workers)?)
            }
            None => Ok(partition_hash(g, self.workers, self.seed)?),
        }
    }

    fn load_sketches(&self, g: &Graph) -> Result<Option<SketchSet>> {
        match &self.sketches {
            Some(path) => {
                let r = BufReader::new(
                    File::open(path).with_context(|| format!("open {}", path.display()))?,
                );
                let set = load_sketches(r)?;
                set.validate_against(g)?;
                Ok(Some(set))
            }
            None => Ok(None),
        }
    }
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    Variant::parse(s).ok_or_else(|| format!("unknown variant `{s}` (baseline|bf|pads|np|pine)"))
}

#[derive(Args)]
struct QueryArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    engine: EngineArgs,
    /// Comma-separated keywords
    #[arg(long, value_delimiter = ',')]
    keywords: Vec<String>,
    #[arg(long, default_value_t = 3.0)]
    tau: f64,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Append one metrics row to this CSV file
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    engine: EngineArgs,
    /// Variants to run
    #[arg(long, value_delimiter = ',', value_parser = parse_variant,
          default_value = "baseline,bf,pads,np,pine")]
    variants: Vec<Variant>,
    /// Query sizes |Q|
    #[arg(long, value_delimiter = ',', default_value = "2,3,4,5,6")]
    sizes: Vec<usize>,
    /// Queries per size
    #[arg(long, default_value_t = 50)]
    queries: usize,
    #[arg(long, default_value_t = 3.0)]
    tau: f64,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long)]
    csv: PathBuf,
    /// Run queries on multiple threads
    #[arg(long)]
    parallel_queries: bool,
    /// Cross-check every run against the brute-force reference
    #[arg(long)]
    check_oracle: bool,
    /// Sketch admission parameter when sketches are built on the fly
    #[arg(long, default_value_t = DEFAULT_K_PARAM)]
    k_param: usize,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long, value_delimiter = ',')]
    keywords: Vec<String>,
    #[arg(long, default_value_t = 3.0)]
    tau: f64,
    #[arg(long, default_value_t = 10)]
    k: usize,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter("DKWS_LOG")).init();
    match Cli::parse().cmd {
        Cmd::Index(a) => cmd_index(a),
        Cmd::Partition(a) => cmd_partition(a),
        Cmd::Query(a) => cmd_query(a),
        Cmd::Bench(a) => cmd_bench(a),
        Cmd::Oracle(a) => cmd_oracle(a),
    }
}

fn cmd_index(a: IndexArgs) -> Result<()> {
    let g = a.graph.load()?;
    let frags = match &a.partition {
        Some(path) => {
            let r = BufReader::new(File::open(path)?);
            Some(import_partition(&g, r, a.workers)?)
        }
        None => None,
    };
    let set = SketchSet::build(&g, a.k_param, frags.as_ref());
    let mut w = BufWriter::new(File::create(&a.out)?);
    save_sketches(&set, &mut w)?;
    w.flush()?;
    let mean = set.pads.mean_entries();
    let cap = a.k_param as f64 * (g.vertex_count().max(2) as f64).ln();
    println!(
        "indexed {} vertices, {} keywords: mean sketch entries {:.2} (k*ln n = {:.2})",
        g.vertex_count(),
        g.keyword_count(),
        mean,
        cap
    );
    if let Some(f) = stretch_factor(g.vertex_count(), a.k_param) {
        println!("expected estimate stretch factor: {f}");
    }
    Ok(())
}

fn cmd_partition(a: PartitionArgs) -> Result<()> {
    let g = a.graph.load()?;
    let frags = partition_hash(&g, a.workers, a.seed)?;
    let mut w = BufWriter::new(File::create(&a.out)?);
    for v in 0..g.vertex_count() {
        writeln!(w, "{}", frags.owner[v])?;
    }
    w.flush()?;
    let cross: usize = frags.fragments.iter().map(|f| f.out_portals.len()).sum();
    println!(
        "partitioned {} vertices into {} fragments ({} out-portal copies)",
        g.vertex_count(),
        a.workers,
        cross
    );
    Ok(())
}

fn append_csv(path: &Path, rows: &[CsvRow]) -> Result<()> {
    let fresh = !path.exists();
    let mut w = BufWriter::new(File::options().create(true).append(true).open(path)?);
    if fresh {
        writeln!(w, "{CSV_SCHEMA}")?;
        writeln!(w, "{CSV_HEADER}")?;
    }
    for row in rows {
        writeln!(w, "{}", row.to_line())?;
    }
    w.flush()?;
    Ok(())
}

fn print_answers(g: &Graph, answers: &[Answer]) {
    for a in answers {
        let slots: Vec<String> = a
            .slots
            .iter()
            .map(|s| {
                let leaf = s.leaf.map_or("-".to_string(), |l| l.to_string());
                format!("{}={leaf}:{}", g.keyword_name(s.keyword), s.dist)
            })
            .collect();
        println!("{}\t{}\t{}", a.root, a.score, slots.join(" "));
    }
}

fn cmd_query(a: QueryArgs) -> Result<()> {
    let g = a.graph.load()?;
    let mut ids = Vec::new();
    let mut missing = Vec::new();
    for name in &a.keywords {
        match g.keyword_id(name) {
            Some(id) => ids.push(id),
            None => missing.push(name.clone()),
        }
    }
    if !missing.is_empty() {
        // absent keywords cannot be matched by any root
        println!("0 results (keywords not in graph: {})", missing.join(","));
        return Ok(());
    }
    let query = Query::new(ids, a.tau, a.k)?;
    let frags = a.engine.fragmentation(&g)?;
    let sketches = a.engine.load_sketches(&g)?;
    let cfg = a.engine.config(a.engine.variant);
    let (answers, metrics) = run_query(&g, &frags, sketches.as_ref(), &query, &cfg)?;
    print_answers(&g, &answers);
    log::info!(
        "{} results in {:.3} ms, {} supersteps, {} msgs / {} bytes, {} visited",
        answers.len(),
        metrics.elapsed_ms,
        metrics.supersteps,
        metrics.msg_count,
        metrics.msg_bytes,
        metrics.visited_nodes
    );
    if let Some(csv) = &a.csv {
        let row = CsvRow::new(cfg.variant.name(), "q0", &query, frags.m, metrics, &answers);
        append_csv(csv, &[row])?;
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let g = a.graph.load()?;
    let present = g.present_keywords().len();
    for &size in &a.sizes {
        if present < size {
            bail!("graph has {present} distinct keywords, need {size} for |Q|={size}");
        }
    }
    let frags = a.engine.fragmentation(&g)?;
    let sketches = match a.engine.load_sketches(&g)? {
        Some(s) => Some(s),
        None if a.variants.iter().any(|v| !matches!(v, Variant::Baseline | Variant::Bf)) => {
            log::info!("no sketch file given; building sketches in-memory");
            Some(SketchSet::build(&g, a.k_param, Some(&frags)))
        }
        None => None,
    };

    // one (size, query) plan entry runs every requested variant
    let mut plan: Vec<(usize, usize, Query)> = Vec::new();
    for &size in &a.sizes {
        let seed = a.engine.seed ^ (size as u64).wrapping_mul(0x9e3779b97f4a7c15);
        let queries = sample_queries(&g, size, a.queries, seed);
        for (qi, kws) in queries.into_iter().enumerate() {
            plan.push((size, qi, Query::new(kws, a.tau, a.k)?));
        }
    }

    let run_one = |entry: &(usize, usize, Query)| -> Result<Vec<CsvRow>> {
        let (size, qi, query) = entry;
        let mut rows = Vec::new();
        let reference =
            if a.check_oracle { Some(oracle::brute_top_k(&g, query)?) } else { None };
        for &variant in &a.variants {
            let cfg = a.engine.config(variant);
            let (answers, metrics) = run_query(&g, &frags, sketches.as_ref(), query, &cfg)?;
            if let Some(expect) = &reference {
                let mut got: Vec<f64> = answers.iter().map(|x| x.score).collect();
                let mut want: Vec<f64> = expect.iter().map(|&(_, s)| s).collect();
                got.sort_by(f64::total_cmp);
                want.sort_by(f64::total_cmp);
                if got != want {
                    bail!(
                        "variant {} disagrees with the reference on |Q|={size} query {qi}: {:?} vs {:?}",
                        variant.name(),
                        got,
                        want
                    );
                }
            }
            rows.push(CsvRow::new(
                variant.name(),
                format!("s{size}q{qi}"),
                query,
                frags.m,
                metrics,
                &answers,
            ));
        }
        Ok(rows)
    };

    let mut all_rows: Vec<Vec<CsvRow>> = Vec::with_capacity(plan.len());
    if a.parallel_queries {
        let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(4);
        let next = std::sync::atomic::AtomicUsize::new(0);
        let results: Vec<std::sync::Mutex<Option<Result<Vec<CsvRow>>>>> =
            plan.iter().map(|_| std::sync::Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..workers.min(plan.len().max(1)) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if i >= plan.len() {
                        break;
                    }
                    *results[i].lock().unwrap() = Some(run_one(&plan[i]));
                });
            }
        });
        for slot in results {
            all_rows.push(slot.into_inner().unwrap().expect("worker visited every slot")?);
        }
    } else {
        for entry in &plan {
            all_rows.push(run_one(entry)?);
        }
    }

    let mut w = BufWriter::new(File::create(&a.csv)?);
    writeln!(w, "{CSV_SCHEMA}")?;
    writeln!(w, "{CSV_HEADER}")?;
    let mut count = 0;
    for rows in &all_rows {
        for row in rows {
            writeln!(w, "{}", row.to_line())?;
            count += 1;
        }
    }
    w.flush()?;
    println!("wrote {count} rows to {}", a.csv.display());
    Ok(())
}

fn cmd_oracle(a: OracleArgs) -> Result<()> {
    let g = a.graph.load()?;
    let mut ids = Vec::new();
    for name in &a.keywords {
        match g.keyword_id(name) {
            Some(id) => ids.push(id),
            None => {
                println!("0 results (keyword {name} not in graph)");
                return Ok(());
            }
        }
    }
    let query = Query::new(ids, a.tau, a.k)?;
    let top = oracle::brute_top_k(&g, &query)?;
    let answers: Vec<Answer> =
        top.iter().map(|&(root, score)| Answer { root, score, slots: Vec::new() }).collect();
    for answer in &answers {
        println!("{}\t{}", answer.root, answer.score);
    }
    log::debug!("results: {}", format_results(&answers));
    Ok(())
}
