//! Shard files and the manifest sidecar.
//!
//! A shard is `"SGNC" | u16 version` followed by records, each a `u32` body
//! length and the body. The manifest lists shards in record order.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::record::{CorpusRecord, Domain};
use crate::error::{Error, Result};

pub const SHARD_MAGIC: &[u8; 4] = b"SGNC";
pub const SHARD_VERSION: u16 = 1;
pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
const HEADER_LEN: u64 = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShardInfo {
    pub file: String,
    pub count: u64,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub schema_version: u32,
    pub domain: Domain,
    pub count: u64,
    pub master_seed: u64,
    /// SHA-256 of the canonical JSON rendering of `config`.
    pub config_digest: String,
    pub config: Value,
    pub created_unix: u64,
    pub generator: String,
    pub shards: Vec<ShardInfo>,
    /// Per-corpus files shared by every record, relative to the corpus root.
    #[serde(default)]
    pub side_files: Vec<String>,
}

impl CorpusManifest {
    pub fn new(domain: Domain, master_seed: u64, config: Value) -> Self {
        let created_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        CorpusManifest {
            schema_version: SCHEMA_VERSION,
            domain,
            count: 0,
            master_seed,
            config_digest: config_digest(&config),
            config,
            created_unix,
            generator: concat!("sgnn-forge ", env!("CARGO_PKG_VERSION")).into(),
            shards: Vec::new(),
            side_files: Vec::new(),
        }
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

/// Hex SHA-256 of a value's canonical JSON (object keys sorted, no spaces).
pub fn config_digest(config: &Value) -> String {
    // serde_json's default map is ordered by key, so this rendering is canonical.
    hex::encode(Sha256::digest(serde_json::to_vec(config).expect("JSON value")))
}

pub fn shard_name(index: usize) -> String {
    format!("shard-{index:05}.sgnc")
}

struct OpenShard {
    writer: BufWriter<File>,
    path: PathBuf,
    file: String,
    count: u64,
    bytes: u64,
    hasher: Sha256,
}

/// Appends records to numbered shards. Nothing becomes visible under the
/// final shard name until the shard is complete, and [`CorpusWriter::abort`]
/// removes everything written so far.
pub struct CorpusWriter {
    dir: PathBuf,
    shard_size: u64,
    open: Option<OpenShard>,
    done: Vec<ShardInfo>,
    manifest: CorpusManifest,
}

impl CorpusWriter {
    pub fn create(dir: &Path, shard_size: u64, manifest: CorpusManifest) -> Result<Self> {
        if shard_size == 0 {
            return Err(Error::Config("shard_size must be positive".into()));
        }
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(CorpusWriter {
            dir: dir.to_path_buf(),
            shard_size,
            open: None,
            done: Vec::new(),
            manifest,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn add_side_file(&mut self, name: &str) {
        self.manifest.side_files.push(name.to_owned());
    }

    pub fn push(&mut self, record: &CorpusRecord) -> Result<()> {
        if record.domain != self.manifest.domain {
            return Err(Error::Validation(format!(
                "record {} is {:?} in a {:?} corpus",
                record.id, record.domain, self.manifest.domain
            )));
        }
        let body = record.encode()?;
        let len = u32::try_from(body.len()).map_err(|_| Error::Schema(format!("record {} exceeds 4 GiB", record.id)))?;
        if self.open.is_none() {
            self.open = Some(self.start_shard()?);
        }
        let shard = self.open.as_mut().unwrap();
        let len_bytes = len.to_le_bytes();
        for chunk in [&len_bytes[..], &body[..]] {
            shard.writer.write_all(chunk).map_err(|e| Error::io(&shard.path, e))?;
            shard.hasher.update(chunk);
        }
        shard.count += 1;
        shard.bytes += 4 + body.len() as u64;
        if shard.count == self.shard_size {
            self.finish_shard()?;
        }
        Ok(())
    }

    fn start_shard(&self) -> Result<OpenShard> {
        let file = shard_name(self.done.len());
        let path = self.dir.join(format!("{file}.partial"));
        let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut writer = BufWriter::new(f);
        let mut hasher = Sha256::new();
        let mut header = SHARD_MAGIC.to_vec();
        header.extend_from_slice(&SHARD_VERSION.to_le_bytes());
        writer.write_all(&header).map_err(|e| Error::io(&path, e))?;
        hasher.update(&header);
        Ok(OpenShard {
            writer,
            path,
            file,
            count: 0,
            bytes: HEADER_LEN,
            hasher,
        })
    }

    fn finish_shard(&mut self) -> Result<()> {
        let Some(shard) = self.open.take() else { return Ok(()) };
        let f = shard.writer.into_inner().map_err(|e| Error::io(&shard.path, e.into_error()))?;
        f.sync_all().map_err(|e| Error::io(&shard.path, e))?;
        let final_path = self.dir.join(&shard.file);
        std::fs::rename(&shard.path, &final_path).map_err(|e| Error::io(&final_path, e))?;
        self.done.push(ShardInfo {
            file: shard.file,
            count: shard.count,
            bytes: shard.bytes,
            sha256: hex::encode(shard.hasher.finalize()),
        });
        Ok(())
    }

    /// Closes the last shard and writes the manifest.
    pub fn finish(mut self) -> Result<CorpusManifest> {
        self.finish_shard()?;
        let mut manifest = self.manifest.clone();
        manifest.count = self.done.iter().map(|s| s.count).sum();
        manifest.shards = std::mem::take(&mut self.done);
        manifest.write(&self.dir)?;
        Ok(manifest)
    }

    /// Removes every shard, partial shard and side file written so far.
    pub fn abort(mut self) {
        if let Some(shard) = self.open.take() {
            drop(shard.writer);
            let _ = std::fs::remove_file(&shard.path);
        }
        for s in &self.done {
            let _ = std::fs::remove_file(self.dir.join(&s.file));
        }
        for f in &self.manifest.side_files {
            let _ = std::fs::remove_file(self.dir.join(f));
        }
    }
}

/// Writes records to `dir`, removing partial output if any record or write
/// fails.
pub fn write_corpus<I>(dir: &Path, manifest: CorpusManifest, shard_size: u64, records: I) -> Result<CorpusManifest>
where
    I: IntoIterator<Item = Result<CorpusRecord>>,
{
    let mut w = CorpusWriter::create(dir, shard_size, manifest)?;
    for r in records {
        if let Err(e) = r.and_then(|r| w.push(&r)) {
            w.abort();
            return Err(e);
        }
    }
    w.finish()
}

/// Streaming reader over one shard.
pub struct ShardReader {
    reader: BufReader<File>,
    path: PathBuf,
    offset: u64,
}

impl ShardReader {
    pub fn open(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = BufReader::new(f);
        let mut header = [0u8; HEADER_LEN as usize];
        reader.read_exact(&mut header).map_err(|e| match e.kind() {
            ErrorKind::UnexpectedEof => Error::format(path, "file shorter than the shard header"),
            _ => Error::io(path, e),
        })?;
        if &header[..4] != SHARD_MAGIC {
            return Err(Error::format(path, "bad magic; not a corpus shard"));
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != SHARD_VERSION {
            return Err(Error::format(path, format!("unsupported shard version {version}")));
        }
        Ok(ShardReader {
            reader,
            path: path.to_path_buf(),
            offset: HEADER_LEN,
        })
    }

    /// Next record, `None` at a clean end of file.
    pub fn next_record(&mut self) -> Option<Result<CorpusRecord>> {
        let start = self.offset;
        let truncated = |path: &Path| Error::Truncated {
            path: path.to_path_buf(),
            offset: start,
        };
        let mut len = [0u8; 4];
        match read_full(&mut self.reader, &mut len) {
            Ok(0) => return None,
            Ok(4) => {}
            Ok(_) => return Some(Err(truncated(&self.path))),
            Err(e) => return Some(Err(Error::io(&self.path, e))),
        }
        let n = u32::from_le_bytes(len) as usize;
        let mut body = vec![0u8; n];
        match read_full(&mut self.reader, &mut body) {
            Ok(k) if k == n => {}
            Ok(_) => return Some(Err(truncated(&self.path))),
            Err(e) => return Some(Err(Error::io(&self.path, e))),
        }
        self.offset += 4 + n as u64;
        Some(CorpusRecord::decode(&body).map_err(|e| Error::format(&self.path, format!("record at byte {start}: {e}"))))
    }
}

impl Iterator for ShardReader {
    type Item = Result<CorpusRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_record()
    }
}

fn read_full(r: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(k) => got += k,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(got)
}

/// A corpus directory opened for streaming reads.
#[derive(Clone, Debug)]
pub struct CorpusReader {
    pub dir: PathBuf,
    pub manifest: CorpusManifest,
}

impl CorpusReader {
    pub fn open(dir: &Path) -> Result<Self> {
        Ok(CorpusReader {
            dir: dir.to_path_buf(),
            manifest: CorpusManifest::read(dir)?,
        })
    }

    pub fn shard_paths(&self) -> Vec<PathBuf> {
        self.manifest.shards.iter().map(|s| self.dir.join(&s.file)).collect()
    }

    /// Records in manifest order, one shard open at a time. The stream ends
    /// with a validation error if the total disagrees with the manifest.
    pub fn records(&self) -> impl Iterator<Item = Result<CorpusRecord>> + '_ {
        let mut shards = self.shard_paths().into_iter();
        let mut current: Option<ShardReader> = None;
        let mut seen = 0u64;
        let mut finished = false;
        std::iter::from_fn(move || loop {
            if finished {
                return None;
            }
            if let Some(r) = current.as_mut() {
                match r.next_record() {
                    Some(Ok(rec)) => {
                        seen += 1;
                        return Some(Ok(rec));
                    }
                    Some(Err(e)) => {
                        finished = true;
                        return Some(Err(e));
                    }
                    None => current = None,
                }
            }
            match shards.next() {
                Some(path) => match ShardReader::open(&path) {
                    Ok(r) => current = Some(r),
                    Err(e) => {
                        finished = true;
                        return Some(Err(e));
                    }
                },
                None => {
                    finished = true;
                    if seen != self.manifest.count {
                        return Some(Err(Error::Validation(format!(
                            "manifest declares {} records, shards hold {seen}",
                            self.manifest.count
                        ))));
                    }
                    return None;
                }
            }
        })
    }
}
