//! Parallel corpus generation. Record `i` draws only from the substream
//! `(master_seed, i)`, and records are written in id order, so the bytes on
//! disk do not depend on the worker count.

use std::path::Path;

use rayon::prelude::*;
use serde_json::json;

use super::config::CorpusConfig;
use super::record::{Array, CorpusRecord, Domain};
use super::shard::{CorpusManifest, CorpusWriter};
use crate::cascade::{generate_ba_graph, laplacian_pe, mask_cascade, simulate_ic, GraphMeta, NetGraph};
use crate::chem::standin::{standin_dataset, StandinConfig};
use crate::chem::{calibrate_draws, sample_corpus_row, ChemDataset, ChemYieldModel, RawDraw, SamplingPools};
use crate::eco::{
    sample_butterfly_community, sample_lynx_hare, simulate_butterfly, simulate_lynx_hare, EcoTrajectory,
};
use crate::epi::{compute_r0, sample_epi_params, simulate_epidemic};
use crate::error::{Error, Result};
use crate::observation::{observe, sample_observation_spec};
use crate::stochastics::{substream, RngStream};

/// Stream id reserved for per-corpus draws (the cascade graph).
pub const CORPUS_STREAM: u64 = u64::MAX;
/// Redraws allowed when a sampled parameter set makes an integrator diverge.
pub const MAX_ATTEMPTS: u64 = 16;
pub const GRAPH_FILE: &str = "graph.edges";
pub const LAPPE_FILE: &str = "lappe.json";
const BATCH: usize = 512;

#[derive(Clone, Debug)]
pub struct GenerateOptions {
    pub domain: Domain,
    pub count: u64,
    pub master_seed: u64,
    /// Worker threads; `None` uses the rayon default.
    pub threads: Option<usize>,
}

pub fn generate_corpus(dir: &Path, config: &CorpusConfig, opts: &GenerateOptions) -> Result<CorpusManifest> {
    config.validate()?;
    let config = config.clone().resolve()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let manifest = CorpusManifest::new(opts.domain, opts.master_seed, config.to_json());
    let mut writer = CorpusWriter::create(dir, config.shard_size, manifest)?;
    let result = pool.install(|| fill(&mut writer, &config, opts));
    match result {
        Ok(()) => writer.finish(),
        Err(e) => {
            writer.abort();
            Err(e)
        }
    }
}

fn fill(writer: &mut CorpusWriter, config: &CorpusConfig, opts: &GenerateOptions) -> Result<()> {
    let seed = opts.master_seed;
    match opts.domain {
        Domain::Chem => {
            let model = chem_model(config)?;
            let pools = SamplingPools::new(&model)?;
            let draws: Vec<RawDraw> = (0..opts.count)
                .into_par_iter()
                .map(|id| sample_corpus_row(&model, &pools, &mut substream(seed, id)))
                .collect();
            let failed: Vec<bool> = draws.iter().map(|d| d.failed).collect();
            let data = calibrate_draws(draws, &model.calibration);
            for (id, (row, failed)) in data.rows.into_iter().zip(failed).enumerate() {
                let idx = model.vocab.encode(&row.tuple)?;
                writer.push(&CorpusRecord {
                    id: id as u64,
                    domain: Domain::Chem,
                    params: json!({ "tuple": row.tuple, "stratum": row.stratum, "failure_branch": failed }),
                    arrays: vec![
                        Array::f64("yield", &[1], [row.yield_value]),
                        Array::i32("components", &[5], idx.map(i32::from)),
                    ],
                })?;
            }
            Ok(())
        }
        Domain::Cascade => {
            let graph = cascade_graph(config, seed)?;
            write_graph_side_files(writer, &graph, config.cascade.pe_dim)?;
            batched(writer, opts.count, |id| cascade_record(&graph, config, seed, id))
        }
        Domain::Epi => batched(writer, opts.count, |id| epi_record(config, seed, id)),
        Domain::EcoButterfly | Domain::EcoLynxhare => {
            batched(writer, opts.count, |id| eco_record(opts.domain, config, seed, id))
        }
    }
}

fn batched<F>(writer: &mut CorpusWriter, count: u64, make: F) -> Result<()>
where
    F: Fn(u64) -> Result<CorpusRecord> + Sync,
{
    let mut start = 0;
    while start < count {
        let end = (start + BATCH as u64).min(count);
        let records: Vec<Result<CorpusRecord>> = (start..end).into_par_iter().map(&make).collect();
        for r in records {
            writer.push(&r?)?;
        }
        start = end;
    }
    Ok(())
}

fn f32s(values: &[u64]) -> impl Iterator<Item = f32> + '_ {
    values.iter().map(|&v| v as f32)
}

pub fn epi_record(config: &CorpusConfig, seed: u64, id: u64) -> Result<CorpusRecord> {
    let base = substream(seed, id);
    let mut prng = base.fork(0);
    let params = sample_epi_params(&config.epi, &mut prng);
    let spec = sample_observation_spec(params.horizon_days, &mut prng);
    let mut srng = base.fork(1);
    let traj = simulate_epidemic(&params, &mut srng)?;
    let reported = observe(&traj.truth, &spec, &mut base.fork(2));
    let t = traj.horizon() as u64;
    let latent = &traj.latent;
    let l = latent.len() as u64;
    let npi: Vec<u8> = (0..t as u32).map(|d| u8::from(traj.npi_multiplier(d) < 1.0)).collect();
    let arrays = vec![
        Array::f32("reported_infections", &[t], f32s(&reported.infections)),
        Array::f32("reported_hospitalizations", &[t], f32s(&reported.hospitalizations)),
        Array::f32("reported_deaths", &[t], f32s(&reported.deaths)),
        Array::f32("true_infections", &[t], f32s(&traj.truth.infections)),
        Array::f32("true_hospitalizations", &[t], f32s(&traj.truth.hospitalizations)),
        Array::f32("true_deaths", &[t], f32s(&traj.truth.deaths)),
        Array::f32("symptomatic_onsets", &[t], f32s(&traj.symptomatic_onsets)),
        Array::f64(
            "latent_seair",
            &[5, l],
            [&latent.s, &latent.e, &latent.a, &latent.i, &latent.r].into_iter().flatten().map(|&v| v as f64),
        ),
        Array::f64("rt", &[traj.rt.len() as u64], traj.rt.iter().copied()),
        Array::u8("npi_active", &[t], npi),
    ];
    let blob = json!({
        "r0": compute_r0(&params),
        "params": params,
        "observation": spec,
        "interventions": traj.interventions,
    });
    Ok(CorpusRecord {
        id,
        domain: Domain::Epi,
        params: blob,
        arrays,
    })
}

pub fn eco_record(domain: Domain, config: &CorpusConfig, seed: u64, id: u64) -> Result<CorpusRecord> {
    let base = substream(seed, id);
    let mut last_err = None;
    for attempt in 0..MAX_ATTEMPTS {
        let mut prng = base.fork(2 * attempt);
        let mut srng = base.fork(2 * attempt + 1);
        let run = match domain {
            Domain::EcoButterfly => {
                let mut p = sample_butterfly_community(&mut prng);
                p.noise = config.eco.noise();
                p.horizon_years = config.eco.horizon_years;
                simulate_butterfly(&p, &mut srng)
            }
            Domain::EcoLynxhare => {
                let mut p = sample_lynx_hare(&mut prng);
                p.noise = config.eco.noise();
                p.horizon_years = config.eco.horizon_years;
                simulate_lynx_hare(&p, &mut srng)
            }
            _ => unreachable!("not an ecological domain"),
        };
        match run {
            Ok(traj) => return Ok(eco_to_record(domain, id, attempt, traj)),
            Err(e @ Error::Integration { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

fn eco_to_record(domain: Domain, id: u64, attempt: u64, traj: EcoTrajectory) -> CorpusRecord {
    let dims = [traj.species() as u64, traj.years() as u64];
    let blob = json!({ "attempt": attempt, "params": traj.params });
    CorpusRecord {
        id,
        domain,
        params: blob,
        arrays: vec![
            Array::f64("latent", &dims, traj.latent.iter().flatten().copied()),
            Array::f32("observed_log10", &dims, traj.observed_log10.iter().flatten().map(|&v| v as f32)),
        ],
    }
}

pub fn cascade_graph(config: &CorpusConfig, seed: u64) -> Result<NetGraph> {
    let c = &config.cascade;
    let mut g = generate_ba_graph(c.nodes, c.edges_per_node, &mut substream(seed, CORPUS_STREAM))?;
    g.meta.seed = Some(seed);
    Ok(g)
}

fn write_graph_side_files(writer: &mut CorpusWriter, graph: &NetGraph, pe_dim: usize) -> Result<()> {
    let dir = writer.dir().to_path_buf();
    let edges = dir.join(GRAPH_FILE);
    writer.add_side_file(GRAPH_FILE);
    let mut buf = Vec::new();
    graph.write_edge_list(&mut buf).map_err(|e| Error::io(&edges, e))?;
    std::fs::write(&edges, buf).map_err(|e| Error::io(&edges, e))?;
    let pe = laplacian_pe(graph, pe_dim)?;
    let path = dir.join(LAPPE_FILE);
    writer.add_side_file(LAPPE_FILE);
    let doc = json!({ "graph": graph.meta, "features": pe });
    std::fs::write(&path, serde_json::to_vec(&doc)?).map_err(|e| Error::io(&path, e))
}

pub fn cascade_record(graph: &NetGraph, config: &CorpusConfig, seed: u64, id: u64) -> Result<CorpusRecord> {
    use rand::Rng;
    let c = &config.cascade;
    let mut rng: RngStream = substream(seed, id);
    let source = rng.random_range(0..graph.len() as u32);
    let full = simulate_ic(graph, source, c.infection_prob, c.max_steps, &mut rng)?;
    let masked = mask_cascade(&full, c.mask_fraction, &mut rng)?;
    let n = graph.len() as u64;
    let blob = json!({
        "source": source,
        "p": c.infection_prob,
        "max_steps": c.max_steps,
        "mask_fraction": c.mask_fraction,
        "infected": full.infected_count(),
        "source_masked": masked.source_masked(),
    });
    Ok(CorpusRecord {
        id,
        domain: Domain::Cascade,
        params: blob,
        arrays: vec![
            Array::i32("infection_time", &[n], masked.infection_time.iter().copied()),
            Array::u8("observed_mask", &[n], masked.observed_mask.iter().map(|&o| u8::from(o))),
            Array::i32("true_infection_time", &[n], full.infection_time.iter().copied()),
            Array::i64("source", &[1], [source as i64]),
        ],
    })
}

/// The fitted surrogate behind chem corpora: the configured table, or the
/// stand-in when none is given.
pub fn chem_model(config: &CorpusConfig) -> Result<ChemYieldModel> {
    let data = match &config.chem.source {
        Some(path) => ChemDataset::read_csv_path(path)?,
        None => standin_dataset(&StandinConfig {
            seed: config.chem.standin_seed,
            ..StandinConfig::default()
        }),
    };
    ChemYieldModel::fit(&data, &config.chem.fit)
}

/// Parses the cascade side file written next to the shards.
pub fn read_graph(dir: &Path, meta: GraphMeta) -> Result<NetGraph> {
    let path = dir.join(GRAPH_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    NetGraph::read_edge_list(&text, meta)
}
