//! Record body encoding (little-endian):
//!
//! ```text
//! u64 id | u8 domain | u32 blob length | blob (UTF-8 JSON) | u16 array count
//! per array: u16 name length | name | u8 dtype | u8 rank | rank * u64 dims
//!            | u64 payload length | payload
//! ```

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Epi,
    EcoButterfly,
    EcoLynxhare,
    Chem,
    Cascade,
}

impl Domain {
    pub const ALL: [Domain; 5] = [Domain::Epi, Domain::EcoButterfly, Domain::EcoLynxhare, Domain::Chem, Domain::Cascade];

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }

    /// Command-line spelling.
    pub fn cli_name(self) -> &'static str {
        match self {
            Domain::Epi => "epi",
            Domain::EcoButterfly => "eco-butterfly",
            Domain::EcoLynxhare => "eco-lynxhare",
            Domain::Chem => "chem",
            Domain::Cascade => "cascade",
        }
    }

    pub fn from_cli_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.cli_name() == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DType {
    F32,
    F64,
    I32,
    I64,
    U8,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 | DType::I32 => 4,
            DType::F64 | DType::I64 => 8,
            DType::U8 => 1,
        }
    }

    fn tag(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
            DType::I32 => 2,
            DType::I64 => 3,
            DType::U8 => 4,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        [DType::F32, DType::F64, DType::I32, DType::I64, DType::U8].get(tag as usize).copied()
    }
}

/// A named n-dimensional array with a raw little-endian payload.
#[derive(Clone, Debug, PartialEq)]
pub struct Array {
    pub name: String,
    pub dtype: DType,
    pub dims: Vec<u64>,
    pub data: Vec<u8>,
}

impl Array {
    pub fn f32(name: &str, dims: &[u64], values: impl IntoIterator<Item = f32>) -> Self {
        Self::pack(name, DType::F32, dims, values.into_iter().flat_map(f32::to_le_bytes))
    }

    pub fn f64(name: &str, dims: &[u64], values: impl IntoIterator<Item = f64>) -> Self {
        Self::pack(name, DType::F64, dims, values.into_iter().flat_map(f64::to_le_bytes))
    }

    pub fn i32(name: &str, dims: &[u64], values: impl IntoIterator<Item = i32>) -> Self {
        Self::pack(name, DType::I32, dims, values.into_iter().flat_map(i32::to_le_bytes))
    }

    pub fn i64(name: &str, dims: &[u64], values: impl IntoIterator<Item = i64>) -> Self {
        Self::pack(name, DType::I64, dims, values.into_iter().flat_map(i64::to_le_bytes))
    }

    pub fn u8(name: &str, dims: &[u64], values: impl IntoIterator<Item = u8>) -> Self {
        Self::pack(name, DType::U8, dims, values)
    }

    fn pack(name: &str, dtype: DType, dims: &[u64], bytes: impl IntoIterator<Item = u8>) -> Self {
        Array {
            name: name.to_owned(),
            dtype,
            dims: dims.to_vec(),
            data: bytes.into_iter().collect(),
        }
    }

    pub fn element_count(&self) -> u64 {
        self.dims.iter().product()
    }

    pub fn check(&self) -> Result<()> {
        let want = self.element_count().checked_mul(self.dtype.size() as u64);
        if want != Some(self.data.len() as u64) {
            return Err(Error::Schema(format!(
                "array `{}` declares {:?} {:?} but carries {} bytes",
                self.name,
                self.dims,
                self.dtype,
                self.data.len()
            )));
        }
        Ok(())
    }

    /// Values widened to f64, whatever the stored type.
    pub fn to_f64(&self) -> Vec<f64> {
        let c = self.data.chunks_exact(self.dtype.size());
        match self.dtype {
            DType::F32 => c.map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64).collect(),
            DType::F64 => c.map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect(),
            DType::I32 => c.map(|b| i32::from_le_bytes(b.try_into().unwrap()) as f64).collect(),
            DType::I64 => c.map(|b| i64::from_le_bytes(b.try_into().unwrap()) as f64).collect(),
            DType::U8 => self.data.iter().map(|&b| b as f64).collect(),
        }
    }

    pub fn as_f32(&self) -> Option<Vec<f32>> {
        (self.dtype == DType::F32)
            .then(|| self.data.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect())
    }

    pub fn as_i32(&self) -> Option<Vec<i32>> {
        (self.dtype == DType::I32)
            .then(|| self.data.chunks_exact(4).map(|b| i32::from_le_bytes(b.try_into().unwrap())).collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusRecord {
    pub id: u64,
    pub domain: Domain,
    /// Full parameter snapshot of the simulation.
    pub params: Value,
    pub arrays: Vec<Array>,
}

impl CorpusRecord {
    pub fn array(&self, name: &str) -> Option<&Array> {
        self.arrays.iter().find(|a| a.name == name)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let blob = serde_json::to_vec(&self.params)?;
        let mut out = Vec::with_capacity(64 + blob.len() + self.arrays.iter().map(|a| a.data.len() + 64).sum::<usize>());
        out.extend_from_slice(&self.id.to_le_bytes());
        out.push(self.domain.tag());
        out.extend_from_slice(&u32::try_from(blob.len()).map_err(|_| Error::Schema("parameter blob too large".into()))?.to_le_bytes());
        out.extend_from_slice(&blob);
        out.extend_from_slice(&(self.arrays.len() as u16).to_le_bytes());
        for a in &self.arrays {
            a.check()?;
            out.extend_from_slice(&(a.name.len() as u16).to_le_bytes());
            out.extend_from_slice(a.name.as_bytes());
            out.push(a.dtype.tag());
            out.push(a.dims.len() as u8);
            for d in &a.dims {
                out.extend_from_slice(&d.to_le_bytes());
            }
            out.extend_from_slice(&(a.data.len() as u64).to_le_bytes());
            out.extend_from_slice(&a.data);
        }
        Ok(out)
    }

    /// Decodes a record body; errors are schema errors describing the defect.
    pub fn decode(body: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: body, pos: 0 };
        let id = u64::from_le_bytes(r.array()?);
        let tag = r.take(1)?[0];
        let domain = Domain::from_tag(tag).ok_or_else(|| Error::Schema(format!("unknown domain tag {tag}")))?;
        let blob_len = u32::from_le_bytes(r.array()?) as usize;
        let params = serde_json::from_slice(r.take(blob_len)?)?;
        let count = u16::from_le_bytes(r.array()?);
        let mut arrays = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name_len = u16::from_le_bytes(r.array()?) as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Schema("array name is not UTF-8".into()))?
                .to_owned();
            let dt = r.take(1)?[0];
            let dtype = DType::from_tag(dt).ok_or_else(|| Error::Schema(format!("unknown dtype tag {dt}")))?;
            let rank = r.take(1)?[0] as usize;
            let dims = (0..rank).map(|_| r.array().map(u64::from_le_bytes)).collect::<Result<Vec<_>>>()?;
            let len = u64::from_le_bytes(r.array()?) as usize;
            let data = r.take(len)?.to_vec();
            let a = Array { name, dtype, dims, data };
            a.check()?;
            arrays.push(a);
        }
        if r.pos != body.len() {
            return Err(Error::Schema(format!("{} trailing bytes after record {id}", body.len() - r.pos)));
        }
        Ok(CorpusRecord { id, domain, params, arrays })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Schema(format!("record body ends inside a field at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }
}
