//! Readers for the plain-text inputs of the evaluation subcommands.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use serde::Deserialize;
use serde_json::Value;
use sgnn_forge::attribution::DbEntry;

use crate::Failure;

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn bad_input(path: &Path, msg: impl std::fmt::Display) -> Failure {
    Failure::Validation(format!("{}: {msg}", path.display()))
}

struct Table {
    header: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path) -> Result<Self, Failure> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| match e.kind() {
                csv::ErrorKind::Io(_) => io_failure(path, &e),
                _ => bad_input(path, &e),
            })?;
        let header = reader.headers().map_err(|e| bad_input(path, e))?.iter().map(str::to_owned).collect();
        let rows = reader.records().collect::<Result<_, _>>().map_err(|e| bad_input(path, e))?;
        Ok(Table { header, rows })
    }

    fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    fn require(&self, path: &Path, name: &str) -> Result<usize, Failure> {
        self.column(name).ok_or_else(|| bad_input(path, format!("missing column `{name}`")))
    }
}

fn parse<T: std::str::FromStr>(path: &Path, row: usize, field: &str, text: &str) -> Result<T, Failure> {
    text.parse()
        .map_err(|_| bad_input(path, format!("row {}: `{field}` value `{text}` does not parse", row + 2)))
}

pub struct TruthRow {
    pub location: String,
    pub date: String,
    pub value: f64,
}

/// Truth CSV: location, date, value. Other columns are ignored.
pub fn read_truth(path: &Path) -> Result<Vec<TruthRow>, Failure> {
    let t = Table::read(path)?;
    let (loc, date, value) = (t.require(path, "location")?, t.require(path, "date")?, t.require(path, "value")?);
    t.rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            Ok(TruthRow {
                location: r[loc].to_string(),
                date: r[date].to_string(),
                value: parse(path, i, "value", &r[value])?,
            })
        })
        .collect()
}

pub struct ForecastRow {
    pub location: String,
    pub date: String,
    pub horizon: u32,
    pub q_level: Option<f64>,
    pub value: f64,
}

/// Forecast CSV: location, date (the target date), horizon, optional
/// q_level, value.
pub fn read_forecasts(path: &Path) -> Result<Vec<ForecastRow>, Failure> {
    let t = Table::read(path)?;
    let loc = t.require(path, "location")?;
    let date = t.require(path, "date")?;
    let horizon = t.require(path, "horizon")?;
    let value = t.require(path, "value")?;
    let q = t.column("q_level");
    t.rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            Ok(ForecastRow {
                location: r[loc].to_string(),
                date: r[date].to_string(),
                horizon: parse(path, i, "horizon", &r[horizon])?,
                q_level: q.map(|c| parse(path, i, "q_level", &r[c])).transpose()?,
                value: parse(path, i, "value", &r[value])?,
            })
        })
        .collect()
}

/// One numeric column of a CSV, in row order.
pub fn read_series(path: &Path, column: Option<&str>) -> Result<Vec<f64>, Failure> {
    let t = Table::read(path)?;
    let col = match column {
        Some(name) => t.require(path, name)?,
        None => t
            .column("cases")
            .or_else(|| t.header.len().checked_sub(1))
            .ok_or_else(|| bad_input(path, "no columns"))?,
    };
    let name = t.header[col].clone();
    t.rows.iter().enumerate().map(|(i, r)| parse(path, i, &name, &r[col])).collect()
}

/// (node, infection_time, masked) rows grouped by record_id (0 when absent).
pub type CascadeRows = BTreeMap<u64, Vec<(u32, i32, bool)>>;

pub fn read_cascades(path: &Path) -> Result<CascadeRows, Failure> {
    let t = Table::read(path)?;
    let node = t.require(path, "node")?;
    let time = t.require(path, "infection_time")?;
    let masked = t.column("masked");
    let record = t.column("record_id");
    let mut out = CascadeRows::new();
    for (i, r) in t.rows.iter().enumerate() {
        let id = record.map(|c| parse(path, i, "record_id", &r[c])).transpose()?.unwrap_or(0);
        let hidden = match masked.map(|c| &r[c]) {
            None | Some("0") | Some("false") => false,
            Some("1") | Some("true") => true,
            Some(other) => return Err(bad_input(path, format!("row {}: masked value `{other}`", i + 2))),
        };
        out.entry(id)
            .or_default()
            .push((parse(path, i, "node", &r[node])?, parse(path, i, "infection_time", &r[time])?, hidden));
    }
    Ok(out)
}

/// A query embedding: floats separated by whitespace or commas.
pub fn read_vector(path: &Path) -> Result<Vec<f32>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f32>().map_err(|_| bad_input(path, format!("`{s}` is not a number"))))
        .collect()
}

#[derive(Deserialize)]
struct EntryLine {
    id: u64,
    embedding: Vec<f32>,
    #[serde(default)]
    params: Value,
}

/// JSON lines of {id, embedding, params}.
pub fn read_db_entries(path: &Path) -> Result<Vec<DbEntry>, Failure> {
    let file = std::fs::File::open(path).map_err(|e| io_failure(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_failure(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let e: EntryLine = serde_json::from_str(&line).map_err(|e| bad_input(path, format!("line {}: {e}", i + 1)))?;
        out.push(DbEntry {
            id: e.id,
            embedding: e.embedding,
            params: e.params,
        });
    }
    Ok(out)
}
