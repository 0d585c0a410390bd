//! Flat CSV views of a corpus.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use super::record::{Array, CorpusRecord, Domain};
use super::shard::CorpusReader;
use crate::chem::{ChemDataset, ChemRow, ReactionTuple, Stratum};
use crate::error::{Error, Result};

pub const EPI_SERIES: [&str; 3] = ["infections", "hospitalizations", "deaths"];

/// Writes one CSV per corpus into `out_dir` and returns its path. `weekly`
/// sums epidemic series over days 0-6, 7-13, ...; a trailing partial week is
/// kept.
pub fn export_csv(dir: &Path, out_dir: &Path, weekly: bool) -> Result<PathBuf> {
    let reader = CorpusReader::open(dir)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let domain = reader.manifest.domain;
    let name = match domain {
        Domain::Epi => "epi.csv",
        Domain::EcoButterfly => "eco_butterfly.csv",
        Domain::EcoLynxhare => "eco_lynxhare.csv",
        Domain::Chem => "chem.csv",
        Domain::Cascade => "cascade.csv",
    };
    let path = out_dir.join(name);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let out = BufWriter::new(file);
    if domain == Domain::Chem {
        let rows = reader.records().map(|r| r.and_then(|r| chem_row(&r))).collect::<Result<Vec<_>>>()?;
        ChemDataset { rows }.write_csv(out)?;
        return Ok(path);
    }
    let mut w = csv::Writer::from_writer(out);
    match domain {
        Domain::Epi => w.write_record(["record_id", if weekly { "week" } else { "day" }, "series_name", "true_value", "reported_value"])?,
        Domain::EcoButterfly | Domain::EcoLynxhare => {
            w.write_record(["record_id", "species", "year", "latent", "observed_log10"])?
        }
        Domain::Cascade => w.write_record(["record_id", "node", "infection_time", "masked"])?,
        Domain::Chem => unreachable!(),
    }
    for rec in reader.records() {
        let rec = rec?;
        let id = rec.id.to_string();
        match domain {
            Domain::Epi => {
                for s in EPI_SERIES {
                    let truth = series(&rec, &format!("true_{s}"))?;
                    let reported = series(&rec, &format!("reported_{s}"))?;
                    let (truth, reported) = if weekly {
                        (weekly_sums(&truth), weekly_sums(&reported))
                    } else {
                        (truth, reported)
                    };
                    for (t, (a, b)) in truth.iter().zip(&reported).enumerate() {
                        w.write_record([&id, &t.to_string(), s, &a.to_string(), &b.to_string()])?;
                    }
                }
            }
            Domain::EcoButterfly | Domain::EcoLynxhare => {
                let latent = array(&rec, "latent")?;
                let observed = array(&rec, "observed_log10")?.as_f32().unwrap_or_default();
                let years = latent.dims.get(1).copied().unwrap_or(0) as usize;
                for (k, v) in latent.to_f64().iter().enumerate() {
                    let (sp, yr) = (k / years.max(1), k % years.max(1));
                    w.write_record([&id, &sp.to_string(), &yr.to_string(), &v.to_string(), &observed[k].to_string()])?;
                }
            }
            Domain::Cascade => {
                let times = array(&rec, "infection_time")?.as_i32().unwrap_or_default();
                let mask = &array(&rec, "observed_mask")?.data;
                for (v, t) in times.iter().enumerate() {
                    let masked = if mask[v] == 0 { "1" } else { "0" };
                    w.write_record([&id, &v.to_string(), &t.to_string(), masked])?;
                }
            }
            Domain::Chem => unreachable!(),
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn array<'a>(rec: &'a CorpusRecord, name: &str) -> Result<&'a Array> {
    rec.array(name)
        .ok_or_else(|| Error::Schema(format!("record {} has no array `{name}`", rec.id)))
}

fn series(rec: &CorpusRecord, name: &str) -> Result<Vec<f32>> {
    array(rec, name)?
        .as_f32()
        .ok_or_else(|| Error::Schema(format!("record {}: `{name}` is not f32", rec.id)))
}

pub fn weekly_sums(daily: &[f32]) -> Vec<f32> {
    daily.chunks(7).map(|w| w.iter().sum()).collect()
}

fn chem_row(rec: &CorpusRecord) -> Result<ChemRow> {
    let tuple: ReactionTuple = serde_json::from_value(rec.params["tuple"].clone())?;
    let stratum: Option<Stratum> = serde_json::from_value(rec.params["stratum"].clone())?;
    let yield_value = array(rec, "yield")?.to_f64().first().copied().unwrap_or(f64::NAN);
    Ok(ChemRow {
        tuple,
        yield_value,
        stratum,
    })
}
