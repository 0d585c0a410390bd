use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const COMPONENTS: [&str; 5] = ["aryl_halide", "boronate", "ligand", "base", "solvent"];
pub const HALIDE: usize = 0;
pub const BORONATE: usize = 1;
pub const LIGAND: usize = 2;
pub const BASE: usize = 3;
pub const SOLVENT: usize = 4;

/// Yields below this count as failed reactions.
pub const FAILURE_THRESHOLD: f64 = 0.05;

// Indices are packed 12 bits per component into a u64 key.
const INDEX_BITS: u32 = 12;
pub const MAX_VALUES_PER_COMPONENT: usize = 1 << INDEX_BITS;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ReactionTuple {
    pub aryl_halide: String,
    pub boronate: String,
    pub ligand: String,
    pub base: String,
    pub solvent: String,
}

impl ReactionTuple {
    pub fn new(parts: [&str; 5]) -> Self {
        let [aryl_halide, boronate, ligand, base, solvent] = parts.map(str::to_owned);
        ReactionTuple {
            aryl_halide,
            boronate,
            ligand,
            base,
            solvent,
        }
    }

    pub fn get(&self, component: usize) -> &str {
        match component {
            HALIDE => &self.aryl_halide,
            BORONATE => &self.boronate,
            LIGAND => &self.ligand,
            BASE => &self.base,
            SOLVENT => &self.solvent,
            _ => panic!("component index {component} out of range"),
        }
    }
}

/// Encoded tuple: one vocabulary index per component.
pub type Encoded = [u16; 5];

pub fn pack(idx: &Encoded) -> u64 {
    idx.iter().fold(0u64, |acc, &i| (acc << INDEX_BITS) | i as u64)
}

pub fn unpack(key: u64) -> Encoded {
    let mask = (1u64 << INDEX_BITS) - 1;
    std::array::from_fn(|c| ((key >> (INDEX_BITS * (4 - c as u32))) & mask) as u16)
}

/// Sorted per-component category lists.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub values: [Vec<String>; 5],
}

impl Vocabulary {
    pub fn from_tuples<'a>(tuples: impl IntoIterator<Item = &'a ReactionTuple>) -> Result<Self> {
        let mut sets: [BTreeSet<String>; 5] = Default::default();
        for t in tuples {
            for (c, set) in sets.iter_mut().enumerate() {
                set.insert(t.get(c).to_owned());
            }
        }
        let values = sets.map(|s| s.into_iter().collect::<Vec<_>>());
        if let Some(c) = values.iter().position(|v| v.len() > MAX_VALUES_PER_COMPONENT) {
            return Err(Error::Schema(format!(
                "{} has more than {MAX_VALUES_PER_COMPONENT} categories",
                COMPONENTS[c]
            )));
        }
        Ok(Vocabulary { values })
    }

    pub fn len(&self, component: usize) -> usize {
        self.values[component].len()
    }

    pub fn combinations(&self) -> u64 {
        self.values.iter().map(|v| v.len() as u64).product()
    }

    pub fn index_of(&self, component: usize, value: &str) -> Result<u16> {
        self.values[component]
            .binary_search_by(|v| v.as_str().cmp(value))
            .map(|i| i as u16)
            .map_err(|_| Error::Vocabulary {
                field: COMPONENTS[component],
                value: value.to_owned(),
            })
    }

    pub fn encode(&self, t: &ReactionTuple) -> Result<Encoded> {
        let mut out = [0u16; 5];
        for (c, slot) in out.iter_mut().enumerate() {
            *slot = self.index_of(c, t.get(c))?;
        }
        Ok(out)
    }

    pub fn decode(&self, idx: &Encoded) -> ReactionTuple {
        let v = |c: usize| self.values[c][idx[c] as usize].as_str();
        ReactionTuple::new([v(0), v(1), v(2), v(3), v(4)])
    }
}

/// How a synthetic row was drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratum {
    Memorized,
    Partial,
    Uniform,
}

impl Stratum {
    pub fn as_str(self) -> &'static str {
        match self {
            Stratum::Memorized => "memorized",
            Stratum::Partial => "partial",
            Stratum::Uniform => "uniform",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChemRow {
    pub tuple: ReactionTuple,
    #[serde(rename = "yield")]
    pub yield_value: f64,
    /// `None` for empirical rows.
    pub stratum: Option<Stratum>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChemDataset {
    pub rows: Vec<ChemRow>,
}

#[derive(Deserialize)]
struct CsvRow {
    aryl_halide: String,
    boronate: String,
    ligand: String,
    base: String,
    solvent: String,
    #[serde(rename = "yield")]
    yield_value: Option<f64>,
}

impl ChemDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn yields(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r.yield_value)
    }

    /// Reads an empirical table with columns
    /// `aryl_halide,boronate,ligand,base,solvent,yield`. Rows with an empty
    /// yield are dropped; yields must be fractions in `[0, 1]`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut rows = Vec::new();
        for (line, rec) in rdr.deserialize::<CsvRow>().enumerate() {
            let rec = rec?;
            let Some(y) = rec.yield_value else { continue };
            if !(0.0..=1.0).contains(&y) {
                return Err(Error::Schema(format!("row {}: yield {y} outside [0, 1]", line + 1)));
            }
            let parts = [&rec.aryl_halide, &rec.boronate, &rec.ligand, &rec.base, &rec.solvent];
            if let Some(c) = parts.iter().position(|p| p.is_empty()) {
                return Err(Error::Schema(format!("row {}: missing {}", line + 1, COMPONENTS[c])));
            }
            rows.push(ChemRow {
                tuple: ReactionTuple::new(parts.map(String::as_str)),
                yield_value: y,
                stratum: None,
            });
        }
        Ok(ChemDataset { rows })
    }

    pub fn read_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
    }

    /// Writes tuple columns, `yield`, `stratum` and `is_failure`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(COMPONENTS.iter().copied().chain(["yield", "stratum", "is_failure"]))?;
        for r in &self.rows {
            let y = r.yield_value.to_string();
            let stratum = r.stratum.map_or("empirical", Stratum::as_str);
            let fail = if r.yield_value < FAILURE_THRESHOLD { "1" } else { "0" };
            let mut rec: Vec<&str> = (0..5).map(|c| r.tuple.get(c)).collect();
            rec.extend([y.as_str(), stratum, fail]);
            w.write_record(rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Dataset rows encoded against a vocabulary, the form every fitter takes.
#[derive(Clone, Debug)]
pub struct EncodedData {
    pub idx: Vec<Encoded>,
    pub y: Vec<f64>,
}

impl EncodedData {
    pub fn new(data: &ChemDataset, vocab: &Vocabulary) -> Result<Self> {
        let idx = data.rows.iter().map(|r| vocab.encode(&r.tuple)).collect::<Result<Vec<_>>>()?;
        Ok(EncodedData {
            idx,
            y: data.yields().collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}
