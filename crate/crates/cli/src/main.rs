mod evaluate;
mod inputs;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sgnn_forge::attribution::{self, DbEntry, EmbeddingDB, DEFAULT_TOP_K};
use sgnn_forge::cascade::{rumor_center, GraphMeta, NetGraph};
use sgnn_forge::corpus::{self, CorpusConfig, Domain, GenerateOptions};
use sgnn_forge::metrics::{estimate_r0, GROWTH_WINDOW_DAYS};
use sgnn_forge::Error;

#[derive(Parser)]
#[command(name = "sgnn-forge", version, about = "Synthetic training corpora from mechanistic simulators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DomainArg {
    Epi,
    EcoButterfly,
    EcoLynxhare,
    Chem,
    Cascade,
}

impl From<DomainArg> for Domain {
    fn from(d: DomainArg) -> Self {
        match d {
            DomainArg::Epi => Domain::Epi,
            DomainArg::EcoButterfly => Domain::EcoButterfly,
            DomainArg::EcoLynxhare => Domain::EcoLynxhare,
            DomainArg::Chem => Domain::Chem,
            DomainArg::Cascade => Domain::Cascade,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum R0Method {
    Expgrowth,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a corpus into a directory of shards plus a manifest.
    Generate {
        domain: DomainArg,
        /// TOML configuration; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        count: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "SGNN_FORGE_THREADS")]
        threads: Option<usize>,
    },
    /// Check hashes, counts and per-record invariants. Exits 1 on any issue.
    Validate { dir: PathBuf },
    /// Print parameter and array summaries as JSON.
    Stats { dir: PathBuf },
    /// Write the corpus as a flat CSV.
    ExportCsv {
        dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Sum epidemic series into weeks.
        #[arg(long)]
        weekly: bool,
    },
    /// Build an embedding database from JSON lines of {id, embedding, params}.
    BuildDb {
        #[arg(long)]
        entries: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "")]
        manifest_hash: String,
    },
    /// Retrieve the nearest simulations to a query embedding.
    Attribute {
        #[arg(long)]
        db: PathBuf,
        /// Whitespace- or comma-separated floats.
        #[arg(long)]
        query: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOP_K)]
        k: usize,
        /// Parameter to summarize (dotted path); repeatable. Defaults to every
        /// numeric field of the best hit.
        #[arg(long = "param")]
        params: Vec<String>,
    },
    /// Score forecasts against truth: MAE skill over the naive forecast, and pinball loss for quantiles.
    EvalSkill {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        forecast: PathBuf,
    },
    /// Estimate R0 from an early case series.
    EstimateR0 {
        #[arg(long, value_enum)]
        method: R0Method,
        #[arg(long)]
        input: PathBuf,
        /// Case column; defaults to `cases`, else the last column.
        #[arg(long)]
        column: Option<String>,
        /// Rows to skip before the fit window.
        #[arg(long, default_value_t = 0)]
        start: usize,
        #[arg(long, default_value_t = GROWTH_WINDOW_DAYS)]
        window: usize,
        /// Mean latent period in days; omit for models without a latent stage.
        #[arg(long)]
        latent_mean: Option<f64>,
        #[arg(long, default_value_t = 5.0)]
        infectious_mean: f64,
    },
    /// Rank candidate sources of observed cascades.
    RumorCenter {
        #[arg(long)]
        graph: PathBuf,
        /// Columns node, infection_time, optional masked and record_id.
        #[arg(long)]
        cascade: PathBuf,
        #[arg(long, default_value_t = 20)]
        top: usize,
    },
}

#[derive(Debug)]
enum Failure {
    Validation(String),
    Usage(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io { .. } => Failure::Io(e.to_string()),
            Error::Config(_) | Error::Parameter(_) | Error::ParamDomain(_) | Error::Vocabulary { .. } => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Validation(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(out) => {
            println!("{}", serde_json::to_string_pretty(&out).expect("json output"));
            ExitCode::SUCCESS
        }
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(command: Command) -> CliResult<Value> {
    match command {
        Command::Generate { domain, config, count, seed, out, threads } => {
            let config = match config {
                Some(path) => CorpusConfig::load(&path)?,
                None => CorpusConfig::default(),
            };
            if threads == Some(0) {
                return Err(Failure::Usage("--threads must be positive".into()));
            }
            let opts = GenerateOptions {
                domain: domain.into(),
                count,
                master_seed: seed,
                threads,
            };
            let m = corpus::generate_corpus(&out, &config, &opts)?;
            Ok(json!({
                "out": out,
                "domain": m.domain,
                "count": m.count,
                "shards": m.shards.len(),
                "config_digest": m.config_digest,
            }))
        }
        Command::Validate { dir } => {
            require_dir(&dir)?;
            let report = corpus::validate_corpus(&dir)?;
            if report.ok() {
                Ok(json!(report))
            } else {
                println!("{}", serde_json::to_string_pretty(&report).expect("json output"));
                Err(Failure::Validation(format!("{} issue(s) in {}", report.issues.len() + report.suppressed, dir.display())))
            }
        }
        Command::Stats { dir } => {
            require_dir(&dir)?;
            Ok(json!(corpus::corpus_stats(&dir)?))
        }
        Command::ExportCsv { dir, out, weekly } => {
            require_dir(&dir)?;
            let path = corpus::export_csv(&dir, &out, weekly)?;
            Ok(json!({ "csv": path }))
        }
        Command::BuildDb { entries, out, manifest_hash } => {
            let entries: Vec<DbEntry> = inputs::read_db_entries(&entries)?;
            let db = EmbeddingDB::build(entries, manifest_hash)?;
            db.save(&out)?;
            Ok(json!({ "db": out, "count": db.len(), "dim": db.dim }))
        }
        Command::Attribute { db, query, k, params } => attribute(&db, &query, k, params),
        Command::EvalSkill { truth, forecast } => {
            let truth = inputs::read_truth(&truth)?;
            let forecast = inputs::read_forecasts(&forecast)?;
            Ok(evaluate::evaluate(&truth, &forecast)?)
        }
        Command::EstimateR0 {
            method: R0Method::Expgrowth,
            input,
            column,
            start,
            window,
            latent_mean,
            infectious_mean,
        } => {
            let series = inputs::read_series(&input, column.as_deref())?;
            if start >= series.len() {
                return Err(Failure::Usage(format!("--start {start} is past the end of a {}-row series", series.len())));
            }
            let (r0, fit) = estimate_r0(&series[start..], window, latent_mean, infectious_mean)?;
            Ok(json!({
                "method": "expgrowth",
                "r0": r0,
                "growth_rate": fit.rate,
                "points_used": fit.points_used,
                "zeros_dropped": fit.zeros_dropped,
                "window": window,
                "start": start,
                "latent_mean": latent_mean,
                "infectious_mean": infectious_mean,
            }))
        }
        Command::RumorCenter { graph, cascade, top } => {
            let text = std::fs::read_to_string(&graph).map_err(|e| Failure::Io(format!("{}: {e}", graph.display())))?;
            let meta = GraphMeta {
                model: "edge_list".into(),
                variant: graph.display().to_string(),
                m: 0,
                seed: None,
            };
            let mut g = NetGraph::read_edge_list(&text, meta)?;
            let cascades = inputs::read_cascades(&cascade)?;
            let max_node = cascades.values().flatten().map(|r| r.0 as usize + 1).max().unwrap_or(0);
            if max_node > g.len() {
                let edges: Vec<(u32, u32)> = g.edges().collect();
                g = NetGraph::from_edges(max_node, &edges, g.meta.clone())?;
            }
            let mut results = Vec::new();
            for (record_id, rows) in &cascades {
                let infected: Vec<u32> = rows.iter().filter(|r| r.1 >= 0 && !r.2).map(|r| r.0).collect();
                let ranking = rumor_center(&g, &infected)?;
                let ranked: Vec<Value> = ranking
                    .ranked
                    .iter()
                    .take(top)
                    .map(|(node, score)| json!({ "node": node, "score": score }))
                    .collect();
                results.push(json!({
                    "record_id": record_id,
                    "observed_infected": infected.len(),
                    "used_largest_component": ranking.used_largest_component,
                    "ranked": ranked,
                }));
            }
            Ok(json!({ "nodes": g.len(), "edges": g.edge_count(), "cascades": results }))
        }
    }
}

fn require_dir(dir: &Path) -> CliResult<()> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(Failure::Io(format!("{}: not a directory", dir.display())))
    }
}

fn attribute(db_path: &Path, query: &Path, k: usize, params: Vec<String>) -> CliResult<Value> {
    let db = EmbeddingDB::load(db_path)?;
    let q = inputs::read_vector(query)?;
    let hits = attribution::retrieve_topk(&db, &q, k)?;
    let names = if params.is_empty() {
        let mut names = Vec::new();
        if let Some(best) = hits.first() {
            numeric_paths(&db.params[db.row_of(best.id).expect("hit id is stored")], "", &mut names);
        }
        names
    } else {
        params
    };
    let ids: Vec<u64> = hits.iter().map(|h| h.id).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let summaries = attribution::summarize_params(&db, &ids, &refs)?;
    Ok(json!({
        "db": db_path,
        "count": db.len(),
        "dim": db.dim,
        "manifest_hash": db.manifest_hash,
        "k": k,
        "quantile_levels": attribution::SUMMARY_QUANTILES,
        "hits": hits,
        "summaries": summaries,
    }))
}

/// Dotted paths of every numeric or boolean leaf outside arrays.
fn numeric_paths(v: &Value, prefix: &str, out: &mut Vec<String>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                numeric_paths(child, &path, out);
            }
        }
        Value::Number(_) | Value::Bool(_) if !prefix.is_empty() => out.push(prefix.to_string()),
        _ => {}
    }
}
