//! Embedding database over simulation records and exact cosine retrieval.
//!
//! File layout (little-endian):
//!
//! ```text
//! "SGED" | u16 version | u32 d | u64 count
//! count * d f32 embeddings, row-major
//! count u64 record ids
//! (count + 1) u64 blob offsets, relative to the first blob byte
//! concatenated UTF-8 JSON parameter blobs
//! u32 length | manifest hash (UTF-8)
//! ```

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const DB_MAGIC: &[u8; 4] = b"SGED";
pub const DB_VERSION: u16 = 1;
pub const DEFAULT_DIM: usize = 1024;
pub const DEFAULT_TOP_K: usize = 50;
pub const SUMMARY_QUANTILES: [f64; 5] = [0.05, 0.25, 0.50, 0.75, 0.95];

#[derive(Clone, Debug, PartialEq)]
pub struct DbEntry {
    pub id: u64,
    pub embedding: Vec<f32>,
    pub params: Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingDB {
    pub dim: usize,
    pub ids: Vec<u64>,
    /// Row-major `count x dim`, stored exactly as supplied.
    pub embeddings: Vec<f32>,
    pub params: Vec<Value>,
    pub manifest_hash: String,
    norms: Vec<f64>,
}

impl EmbeddingDB {
    pub fn build(entries: Vec<DbEntry>, manifest_hash: impl Into<String>) -> Result<Self> {
        let dim = entries.first().map_or(0, |e| e.embedding.len());
        let mut seen = HashSet::with_capacity(entries.len());
        let mut ids = Vec::with_capacity(entries.len());
        let mut embeddings = Vec::with_capacity(entries.len() * dim);
        let mut params = Vec::with_capacity(entries.len());
        for e in entries {
            if e.embedding.len() != dim {
                return Err(Error::Schema(format!(
                    "record {} has dimension {}, expected {dim}",
                    e.id,
                    e.embedding.len()
                )));
            }
            if !seen.insert(e.id) {
                return Err(Error::Schema(format!("duplicate record id {}", e.id)));
            }
            ids.push(e.id);
            embeddings.extend_from_slice(&e.embedding);
            params.push(e.params);
        }
        Self::assemble(dim, ids, embeddings, params, manifest_hash.into())
    }

    fn assemble(dim: usize, ids: Vec<u64>, embeddings: Vec<f32>, params: Vec<Value>, manifest_hash: String) -> Result<Self> {
        let norms: Vec<f64> = if dim == 0 {
            vec![0.0; ids.len()]
        } else {
            embeddings.chunks_exact(dim).map(norm).collect()
        };
        if let Some(i) = (0..ids.len()).find(|&i| !norms[i].is_finite() || norms[i] == 0.0) {
            return Err(Error::Schema(format!("record {} has a zero or non-finite embedding", ids[i])));
        }
        Ok(EmbeddingDB {
            dim,
            ids,
            embeddings,
            params,
            manifest_hash,
            norms,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn embedding(&self, row: usize) -> &[f32] {
        &self.embeddings[row * self.dim..(row + 1) * self.dim]
    }

    pub fn row_of(&self, id: u64) -> Option<usize> {
        self.ids.iter().position(|&x| x == id)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let blobs: Vec<Vec<u8>> = self.params.iter().map(|p| serde_json::to_vec(p).expect("JSON value")).collect();
        let mut out = Vec::with_capacity(18 + self.embeddings.len() * 4 + self.len() * 16 + 8);
        out.extend_from_slice(DB_MAGIC);
        out.extend_from_slice(&DB_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for x in &self.embeddings {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for id in &self.ids {
            out.extend_from_slice(&id.to_le_bytes());
        }
        let mut offset = 0u64;
        out.extend_from_slice(&offset.to_le_bytes());
        for b in &blobs {
            offset += b.len() as u64;
            out.extend_from_slice(&offset.to_le_bytes());
        }
        for b in &blobs {
            out.extend_from_slice(b);
        }
        out.extend_from_slice(&(self.manifest_hash.len() as u32).to_le_bytes());
        out.extend_from_slice(self.manifest_hash.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let mut r = Cursor { bytes, pos: 0, origin };
        if r.take(4)? != DB_MAGIC {
            return Err(Error::format(origin, "bad magic; not an embedding database"));
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != DB_VERSION {
            return Err(Error::format(origin, format!("unsupported database version {version}")));
        }
        let dim = u32::from_le_bytes(r.array()?) as usize;
        let count = u64::from_le_bytes(r.array()?) as usize;
        let floats = count
            .checked_mul(dim)
            .filter(|n| n.saturating_mul(4) <= bytes.len())
            .ok_or_else(|| Error::format(origin, "declared size exceeds file"))?;
        let embeddings: Vec<f32> = r.take(floats * 4)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        let ids: Vec<u64> = (0..count).map(|_| r.array().map(u64::from_le_bytes)).collect::<Result<_>>()?;
        let offsets: Vec<u64> = (0..=count).map(|_| r.array().map(u64::from_le_bytes)).collect::<Result<_>>()?;
        let blob_len = *offsets.last().unwrap() as usize;
        let blob_bytes = r.take(blob_len)?;
        let mut params = Vec::with_capacity(count);
        for w in offsets.windows(2) {
            let (a, b) = (w[0] as usize, w[1] as usize);
            if a > b || b > blob_bytes.len() {
                return Err(Error::format(origin, "blob offsets out of order"));
            }
            params.push(serde_json::from_slice(&blob_bytes[a..b])?);
        }
        let hash_len = u32::from_le_bytes(r.array()?) as usize;
        let manifest_hash = String::from_utf8(r.take(hash_len)?.to_vec())
            .map_err(|_| Error::format(origin, "manifest hash is not UTF-8"))?;
        if r.pos != bytes.len() {
            return Err(Error::format(origin, "trailing bytes after manifest hash"));
        }
        if ids.iter().collect::<HashSet<_>>().len() != ids.len() {
            return Err(Error::format(origin, "duplicate record ids"));
        }
        Self::assemble(dim, ids, embeddings, params, manifest_hash)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Truncated {
            path: self.origin.to_path_buf(),
            offset: self.pos as u64,
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }
}

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt()
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Parameter(format!("dimensions {} and {} differ", a.len(), b.len())));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedMetric("cosine similarity with a zero vector".into()));
    }
    Ok(dot(a, b) / (na * nb))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: u64,
    pub score: f64,
}

/// Exact top-`k` by cosine similarity, descending, ties by ascending id.
pub fn retrieve_topk(db: &EmbeddingDB, query: &[f32], k: usize) -> Result<Vec<Hit>> {
    if query.len() != db.dim {
        return Err(Error::Parameter(format!("query dimension {} but database has {}", query.len(), db.dim)));
    }
    if k > db.len() {
        return Err(Error::Parameter(format!("k = {k} exceeds {} stored entries", db.len())));
    }
    let qn = norm(query);
    if qn == 0.0 || !qn.is_finite() {
        return Err(Error::UndefinedMetric("zero or non-finite query".into()));
    }
    let mut hits: Vec<Hit> = (0..db.len())
        .into_par_iter()
        .map(|row| Hit {
            id: db.ids[row],
            score: dot(db.embedding(row), query) / (db.norms[row] * qn),
        })
        .collect();
    let order = |a: &Hit, b: &Hit| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id));
    if k < hits.len() && k > 0 {
        hits.select_nth_unstable_by(k - 1, order);
    }
    hits.truncate(k);
    hits.sort_by(order);
    Ok(hits)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    /// One slot per requested id, `None` where the blob lacks the parameter.
    pub values: Vec<Option<f64>>,
    pub missing: usize,
    /// Quantiles at `SUMMARY_QUANTILES` over the present values.
    pub quantiles: Vec<f64>,
    pub median: Option<f64>,
}

/// Looks up `name` in a blob; dots descend into nested objects. Booleans
/// read as 0/1.
pub fn lookup_param(blob: &Value, name: &str) -> Option<f64> {
    let mut v = blob;
    for part in name.split('.') {
        v = v.get(part)?;
    }
    match v {
        Value::Number(n) => n.as_f64(),
        Value::Bool(b) => Some(f64::from(u8::from(*b))),
        _ => None,
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize_params(db: &EmbeddingDB, ids: &[u64], names: &[&str]) -> Result<BTreeMap<String, ParamSummary>> {
    let rows: Vec<usize> = ids
        .iter()
        .map(|&id| db.row_of(id).ok_or_else(|| Error::Parameter(format!("unknown record id {id}"))))
        .collect::<Result<_>>()?;
    let mut out = BTreeMap::new();
    for &name in names {
        let values: Vec<Option<f64>> = rows.iter().map(|&r| lookup_param(&db.params[r], name)).collect();
        if !values.is_empty() && values.iter().all(Option::is_none) {
            return Err(Error::Schema(format!("parameter `{name}` absent from every retrieved record")));
        }
        let mut present: Vec<f64> = values.iter().flatten().copied().collect();
        present.sort_by(f64::total_cmp);
        let quantiles = if present.is_empty() {
            Vec::new()
        } else {
            SUMMARY_QUANTILES.iter().map(|&q| quantile_sorted(&present, q)).collect()
        };
        out.insert(
            name.to_owned(),
            ParamSummary {
                missing: values.len() - present.len(),
                median: quantiles.get(2).copied(),
                values,
                quantiles,
            },
        );
    }
    Ok(out)
}
