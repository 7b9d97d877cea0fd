//! Data ingestion: newline-separated value files and plate-indexed CSV tables.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use tempo_core::dsl::Binding;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("plate `{0}` has neither a data column nor a maxSize")]
    PlateWithoutColumn(String),
    #[error("plated variable `{name}` refers to undeclared plate `{plate}`")]
    UnknownPlate { name: String, plate: String },
}

/// One value per non-empty line; `NA` marks a latent entry.
pub fn read_values(path: &Path) -> Result<Binding, DataError> {
    let p = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io { path: p.clone(), source })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if t == "NA" {
            out.push(None);
        } else {
            let x = t.parse().map_err(|_| DataError::Parse {
                path: p.clone(),
                line: i + 1,
                message: format!("cannot parse `{t}` as a number"),
            })?;
            out.push(Some(x));
        }
    }
    Ok(Binding::List(out))
}

/// A plate: an index set read from a column, or `0..maxSize`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlateSpec {
    pub name: String,
    pub max_size: Option<usize>,
}

/// A variable indexed by one or more plates.
#[derive(Clone, Debug, PartialEq)]
pub struct PlatedSpec {
    pub name: String,
    pub plates: Vec<String>,
}

#[derive(Clone, Debug, Default)]
pub struct PlateTable {
    /// Index set of each plate, in order of first appearance.
    pub plates: BTreeMap<String, Vec<String>>,
    /// Observed cells of each plated variable found in the data, keyed by plate values.
    pub plated: BTreeMap<String, Option<HashMap<Vec<String>, String>>>,
    pub notices: Vec<String>,
}

impl PlateTable {
    /// Value of `name` at the given plate indices; `None` means latent.
    pub fn lookup(&self, name: &str, keys: &[&str]) -> Option<&str> {
        let cells = self.plated.get(name)?.as_ref()?;
        let k: Vec<String> = keys.iter().map(|s| s.to_string()).collect();
        cells.get(&k).map(String::as_str).filter(|v| !v.is_empty() && *v != "NA")
    }

    pub fn is_observed(&self, name: &str) -> bool {
        matches!(self.plated.get(name), Some(Some(_)))
    }

    /// Flattens `name` over the product of its plates, last plate fastest.
    pub fn binding(&self, spec: &PlatedSpec) -> Result<Binding, DataError> {
        let sets: Vec<&Vec<String>> = spec
            .plates
            .iter()
            .map(|p| {
                self.plates
                    .get(p)
                    .ok_or_else(|| DataError::UnknownPlate { name: spec.name.clone(), plate: p.clone() })
            })
            .collect::<Result<_, _>>()?;
        let mut out = Vec::new();
        let mut idx = vec![0usize; sets.len()];
        if sets.iter().any(|s| s.is_empty()) {
            return Ok(Binding::List(out));
        }
        loop {
            let keys: Vec<&str> = idx.iter().zip(&sets).map(|(i, s)| s[*i].as_str()).collect();
            let v = match self.lookup(&spec.name, &keys) {
                Some(text) => Some(text.trim().parse::<f64>().map_err(|_| DataError::Parse {
                    path: spec.name.clone(),
                    line: 0,
                    message: format!("cannot parse `{text}` as a number"),
                })?),
                None => None,
            };
            out.push(v);
            let mut d = sets.len();
            loop {
                if d == 0 {
                    return Ok(Binding::List(out));
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < sets[d].len() {
                    break;
                }
                idx[d] = 0;
            }
        }
    }
}

/// Reads a CSV with a header. Columns are matched to plates and plated variables
/// by name, or by `overrides` (variable name to column name); other columns are ignored.
pub fn read_plate_data(
    path: &Path,
    plates: &[PlateSpec],
    plated: &[PlatedSpec],
    overrides: &HashMap<String, String>,
) -> Result<PlateTable, DataError> {
    let p = path.display().to_string();
    let csv_err = |source| DataError::Csv { path: p.clone(), source };
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => DataError::Io { path: p.clone(), source },
        other => DataError::Parse { path: p.clone(), line: 0, message: format!("{other:?}") },
    })?;
    let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let rows: Vec<csv::StringRecord> = reader.records().collect::<Result<_, _>>().map_err(csv_err)?;
    let column = |name: &str| {
        let c = overrides.get(name).map(String::as_str).unwrap_or(name);
        header.iter().position(|h| h == c)
    };

    let mut table = PlateTable::default();
    let mut plate_cols = HashMap::new();
    for plate in plates {
        let set = match column(&plate.name) {
            Some(c) => {
                plate_cols.insert(plate.name.clone(), c);
                let mut seen = Vec::new();
                for r in &rows {
                    let v = r.get(c).unwrap_or("").to_string();
                    if !seen.contains(&v) {
                        seen.push(v);
                    }
                }
                seen
            }
            None => match plate.max_size {
                Some(m) => (0..m).map(|i| i.to_string()).collect(),
                None => return Err(DataError::PlateWithoutColumn(plate.name.clone())),
            },
        };
        table.plates.insert(plate.name.clone(), set);
    }
    for var in plated {
        for pl in &var.plates {
            if !table.plates.contains_key(pl) {
                return Err(DataError::UnknownPlate { name: var.name.clone(), plate: pl.clone() });
            }
        }
        let keyed = var.plates.iter().all(|pl| plate_cols.contains_key(pl));
        let cells = match column(&var.name) {
            Some(c) if keyed => {
                let mut m = HashMap::new();
                for r in &rows {
                    let key: Vec<String> = var.plates.iter().map(|pl| r.get(plate_cols[pl]).unwrap_or("").to_string()).collect();
                    m.insert(key, r.get(c).unwrap_or("").to_string());
                }
                Some(m)
            }
            _ => {
                table.notices.push(format!("{} not found in {p}; assumed to be latent", var.name));
                None
            }
        };
        table.plated.insert(var.name.clone(), cells);
    }
    Ok(table)
}

/// Plate-lite: binds each requested list variable to the CSV column of the same
/// (or overridden) name, one entry per row. Empty cells and `NA` are latent.
pub fn read_columns(
    path: &Path,
    names: &[String],
    overrides: &HashMap<String, String>,
) -> Result<(HashMap<String, Binding>, Vec<String>), DataError> {
    let p = path.display().to_string();
    let csv_err = |source| DataError::Csv { path: p.clone(), source };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let rows: Vec<csv::StringRecord> = reader.records().collect::<Result<_, _>>().map_err(csv_err)?;
    let mut out = HashMap::new();
    let mut notices = Vec::new();
    for name in names {
        let col = overrides.get(name).unwrap_or(name);
        let Some(c) = header.iter().position(|h| h == col) else {
            notices.push(format!("{name} not found in {p}"));
            continue;
        };
        let mut values = Vec::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            let t = r.get(c).unwrap_or("").trim();
            if t.is_empty() || t == "NA" {
                values.push(None);
            } else {
                values.push(Some(t.parse().map_err(|_| DataError::Parse {
                    path: p.clone(),
                    line: i + 2,
                    message: format!("cannot parse `{t}` as a number"),
                })?));
            }
        }
        out.insert(name.clone(), Binding::List(values));
    }
    Ok((out, notices))
}
