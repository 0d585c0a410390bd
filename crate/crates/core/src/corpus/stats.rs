//! Corpus validation and summary statistics.

use std::collections::{BTreeMap, HashSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use super::generate::GRAPH_FILE;
use super::record::{CorpusRecord, Domain};
use super::shard::{config_digest, CorpusManifest, CorpusReader, ShardReader};
use crate::attribution::quantile_sorted;
use crate::cascade::{GraphMeta, NetGraph, SENTINEL};
use crate::chem::FAILURE_THRESHOLD;
use crate::eco::EcoParams;
use crate::epi::params::ranges;
use crate::epi::EpiParams;
use crate::error::{Error, Result};

const MAX_ISSUES: usize = 100;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub records: u64,
    pub issues: Vec<String>,
    /// Issues beyond the first `MAX_ISSUES` are counted, not listed.
    pub suppressed: usize,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.issues.is_empty()
    }

    fn push(&mut self, msg: String) {
        if self.issues.len() < MAX_ISSUES {
            self.issues.push(msg);
        } else {
            self.suppressed += 1;
        }
    }
}

/// Checks a corpus end to end: digest, shard hashes and counts, record
/// decoding, id uniqueness and each record's domain invariants. Only an
/// unreadable manifest is an error; everything else is reported.
pub fn validate_corpus(dir: &Path) -> Result<ValidationReport> {
    let reader = CorpusReader::open(dir)?;
    let m = &reader.manifest;
    let mut report = ValidationReport::default();
    if config_digest(&m.config) != m.config_digest {
        report.push("config digest does not match the recorded configuration".into());
    }
    for f in &m.side_files {
        if !dir.join(f).is_file() {
            report.push(format!("side file {f} is missing"));
        }
    }
    let graph = if m.domain == Domain::Cascade {
        match read_side_graph(dir) {
            Ok(g) => Some(g),
            Err(e) => {
                report.push(format!("cascade graph unreadable: {e}"));
                None
            }
        }
    } else {
        None
    };

    let mut ids = HashSet::new();
    let mut total = 0u64;
    for (info, path) in m.shards.iter().zip(reader.shard_paths()) {
        match file_sha256(&path) {
            Ok(h) if h != info.sha256 => report.push(format!("{}: content hash differs from manifest", info.file)),
            Ok(_) => {}
            Err(e) => {
                report.push(e.to_string());
                continue;
            }
        }
        let shard = match ShardReader::open(&path) {
            Ok(s) => s,
            Err(e) => {
                report.push(e.to_string());
                continue;
            }
        };
        let mut in_shard = 0u64;
        for rec in shard {
            match rec {
                Ok(rec) => {
                    in_shard += 1;
                    if !ids.insert(rec.id) {
                        report.push(format!("duplicate record id {}", rec.id));
                    }
                    if rec.domain != m.domain {
                        report.push(format!("record {} has domain {:?}", rec.id, rec.domain));
                    }
                    for issue in record_issues(&rec, graph.as_ref()) {
                        report.push(format!("record {}: {issue}", rec.id));
                    }
                }
                Err(e) => {
                    report.push(e.to_string());
                    break;
                }
            }
        }
        if in_shard != info.count {
            report.push(format!("{}: manifest declares {} records, found {in_shard}", info.file, info.count));
        }
        total += in_shard;
    }
    if total != m.count {
        report.push(format!("manifest declares {} records, shards hold {total}", m.count));
    }
    report.records = total;
    Ok(report)
}

fn file_sha256(path: &Path) -> Result<String> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn read_side_graph(dir: &Path) -> Result<NetGraph> {
    let path = dir.join(GRAPH_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    NetGraph::read_edge_list(
        &text,
        GraphMeta {
            model: "edge list".into(),
            variant: String::new(),
            m: 0,
            seed: None,
        },
    )
}

fn record_issues(rec: &CorpusRecord, graph: Option<&NetGraph>) -> Vec<String> {
    let mut out = Vec::new();
    let need = |name: &str, out: &mut Vec<String>| {
        let a = rec.array(name);
        if a.is_none() {
            out.push(format!("missing array `{name}`"));
        }
        a
    };
    match rec.domain {
        Domain::Epi => {
            match serde_json::from_value::<EpiParams>(rec.params["params"].clone()) {
                Ok(p) => {
                    if let Err(e) = p.validate() {
                        out.push(e.to_string());
                    }
                    out.extend(p.range_violations());
                    for name in ["reported_infections", "true_infections", "true_deaths"] {
                        if let Some(a) = need(name, &mut out) {
                            if a.element_count() != p.horizon_days as u64 {
                                out.push(format!("`{name}` has {} days, horizon is {}", a.element_count(), p.horizon_days));
                            }
                        }
                    }
                }
                Err(e) => out.push(format!("epidemic parameters do not parse: {e}")),
            }
        }
        Domain::EcoButterfly | Domain::EcoLynxhare => match serde_json::from_value::<EcoParams>(rec.params["params"].clone()) {
            Ok(EcoParams::Butterfly(p)) => {
                if let Err(e) = p.validate() {
                    out.push(e.to_string());
                }
                if let Some(a) = need("latent", &mut out) {
                    if a.dims != [p.species() as u64, p.horizon_years as u64] {
                        out.push(format!("latent dims {:?} disagree with parameters", a.dims));
                    }
                }
            }
            Ok(EcoParams::LynxHare(p)) => {
                if let Some(a) = need("latent", &mut out) {
                    if a.dims != [2, p.horizon_years as u64] {
                        out.push(format!("latent dims {:?} disagree with parameters", a.dims));
                    }
                }
            }
            Err(e) => out.push(format!("ecological parameters do not parse: {e}")),
        },
        Domain::Chem => {
            if let Some(a) = need("yield", &mut out) {
                if a.to_f64().iter().any(|y| !(0.0..=1.0).contains(y)) {
                    out.push("yield outside [0, 1]".into());
                }
            }
            if rec.params.get("tuple").is_none() {
                out.push("parameter blob lacks the reaction tuple".into());
            }
        }
        Domain::Cascade => {
            let (Some(obs), Some(truth), Some(mask)) = (
                need("infection_time", &mut out).and_then(|a| a.as_i32()),
                need("true_infection_time", &mut out).and_then(|a| a.as_i32()),
                need("observed_mask", &mut out),
            ) else {
                return out;
            };
            for (v, ((&o, &t), &m)) in obs.iter().zip(&truth).zip(&mask.data).enumerate() {
                let consistent = if m == 1 { o == t } else { o == SENTINEL && t != SENTINEL };
                if !consistent {
                    out.push(format!("node {v}: observed {o}, true {t}, mask {m}"));
                    break;
                }
            }
            if let Some(g) = graph {
                if g.len() != truth.len() {
                    out.push(format!("{} infection times for a {}-node graph", truth.len(), g.len()));
                    return out;
                }
                let source = rec.params["source"].as_u64().unwrap_or(u64::MAX) as usize;
                for (v, &t) in truth.iter().enumerate() {
                    if t > 0 && !g.adjacency[v].iter().any(|&u| truth[u as usize] == t - 1) {
                        out.push(format!("node {v} infected at {t} with no neighbour infected at {}", t - 1));
                        break;
                    }
                    if t == 0 && v != source {
                        out.push(format!("node {v} infected at step 0 but is not the source"));
                        break;
                    }
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumericSummary {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// At 5, 25, 50, 75 and 95 percent.
    pub quantiles: Vec<f64>,
}

impl NumericSummary {
    pub fn of(mut values: Vec<f64>) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        values.sort_by(f64::total_cmp);
        Some(NumericSummary {
            count: values.len(),
            min: values[0],
            max: values[values.len() - 1],
            mean: values.iter().sum::<f64>() / values.len() as f64,
            quantiles: crate::attribution::SUMMARY_QUANTILES.iter().map(|&q| quantile_sorted(&values, q)).collect(),
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub domain: Option<Domain>,
    pub count: u64,
    /// Numeric leaves of the parameter blobs; list elements pool under `[]`.
    pub params: BTreeMap<String, NumericSummary>,
    /// Array name to `{shape: records}`.
    pub arrays: BTreeMap<String, BTreeMap<String, u64>>,
    pub checks: Map<String, Value>,
}

fn flatten(prefix: &str, v: &Value, out: &mut BTreeMap<String, Vec<f64>>) {
    let join = |k: &str| if prefix.is_empty() { k.to_owned() } else { format!("{prefix}.{k}") };
    match v {
        Value::Number(n) => out.entry(prefix.to_owned()).or_default().extend(n.as_f64()),
        Value::Bool(b) => out.entry(prefix.to_owned()).or_default().push(f64::from(u8::from(*b))),
        Value::Array(items) => {
            let key = format!("{prefix}[]");
            for item in items {
                flatten(&key, item, out);
            }
        }
        Value::Object(map) => {
            for (k, item) in map {
                flatten(&join(k), item, out);
            }
        }
        _ => {}
    }
}

pub fn corpus_stats(dir: &Path) -> Result<CorpusStats> {
    let reader = CorpusReader::open(dir)?;
    let mut leaves: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut arrays: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    let mut domain = DomainTally::default();
    let mut count = 0;
    for rec in reader.records() {
        let rec = rec?;
        count += 1;
        flatten("", &rec.params, &mut leaves);
        for a in &rec.arrays {
            let shape = format!("{:?}:{:?}", a.dtype, a.dims).to_lowercase();
            *arrays.entry(a.name.clone()).or_default().entry(shape).or_default() += 1;
        }
        domain.add(&rec);
    }
    if count == 0 {
        return Ok(CorpusStats::default());
    }
    Ok(CorpusStats {
        domain: Some(reader.manifest.domain),
        count,
        params: leaves.into_iter().filter_map(|(k, v)| NumericSummary::of(v).map(|s| (k, s))).collect(),
        arrays,
        checks: domain.finish(&reader.manifest),
    })
}

#[derive(Default)]
struct DomainTally {
    betas_outside: u64,
    range_violations: u64,
    yields: Vec<f64>,
    strata: BTreeMap<String, u64>,
    infected: Vec<f64>,
    source_masked: u64,
}

impl DomainTally {
    fn add(&mut self, rec: &CorpusRecord) {
        match rec.domain {
            Domain::Epi => {
                if let Ok(p) = serde_json::from_value::<EpiParams>(rec.params["params"].clone()) {
                    self.betas_outside +=
                        p.beta_waves.iter().filter(|w| !ranges::contains(ranges::BETA, w.beta)).count() as u64;
                    self.range_violations += p.range_violations().len() as u64;
                }
            }
            Domain::Chem => {
                if let Some(a) = rec.array("yield") {
                    self.yields.extend(a.to_f64());
                }
                let s = rec.params["stratum"].as_str().unwrap_or("empirical").to_owned();
                *self.strata.entry(s).or_default() += 1;
            }
            Domain::Cascade => {
                self.infected.extend(rec.params["infected"].as_f64());
                self.source_masked += u64::from(rec.params["source_masked"].as_bool() == Some(true));
            }
            Domain::EcoButterfly | Domain::EcoLynxhare => {}
        }
    }

    fn finish(self, manifest: &CorpusManifest) -> Map<String, Value> {
        let n = manifest.count.max(1) as f64;
        let checks = match manifest.domain {
            Domain::Epi => json!({
                "every_beta_within_support": self.betas_outside == 0,
                "betas_outside_support": self.betas_outside,
                "range_violations": self.range_violations,
            }),
            Domain::Chem => {
                let k = self.yields.len().max(1) as f64;
                let mean = self.yields.iter().sum::<f64>() / k;
                let std = (self.yields.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / k).sqrt();
                let failures = self.yields.iter().filter(|&&y| y < FAILURE_THRESHOLD).count() as f64;
                let strata: Map<String, Value> =
                    self.strata.into_iter().map(|(s, c)| (s, json!(c as f64 / n))).collect();
                json!({ "yield_mean": mean, "yield_std": std, "failure_rate": failures / k, "strata": strata })
            }
            Domain::Cascade => json!({
                "mean_infected": self.infected.iter().sum::<f64>() / n,
                "source_masked_rate": self.source_masked as f64 / n,
            }),
            Domain::EcoButterfly | Domain::EcoLynxhare => json!({}),
        };
        match checks {
            Value::Object(m) => m,
            _ => Map::new(),
        }
    }
}
