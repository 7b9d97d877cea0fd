//! Tidy CSV: one scalar per row, keyed by explicit index columns.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use flate2::write::GzEncoder;
use flate2::Compression;
use tempo_core::model::{Model, State, ValueRef, VarId, VarKind};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Real(f64),
}

impl Cell {
    pub fn as_f64(self) -> f64 {
        match self {
            Cell::Int(k) => k as f64,
            Cell::Real(x) => x,
        }
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::Int(k) => write!(f, "{k}"),
            Cell::Real(x) => write!(f, "{x}"),
        }
    }
}

/// Key columns written before `sample` for a variable of this kind.
pub fn key_columns(kind: VarKind) -> Vec<&'static str> {
    match kind {
        VarKind::Real | VarKind::Int => vec![],
        VarKind::RealList(_) | VarKind::IntList(_) | VarKind::Simplex(_) => vec!["index"],
        VarKind::TransitionMatrix(_) => vec!["row", "column"],
        VarKind::Permutation(_) => vec!["index", "permutation_index"],
    }
}

/// Rows of one variable's value: key tuple and scalar.
pub fn tidy_values(model: &Model, var: VarId, state: &State) -> Vec<(Vec<i64>, Cell)> {
    let decl = model.variable(var);
    let scalar = |v: VarId| match state.get(v) {
        ValueRef::Real(x) => Cell::Real(x),
        ValueRef::Int(k) => Cell::Int(k),
        other => unreachable!("list entry is not a scalar: {other:?}"),
    };
    match decl.kind {
        VarKind::Real | VarKind::Int => vec![(vec![], scalar(var))],
        VarKind::RealList(_) | VarKind::IntList(_) => {
            decl.elements.iter().enumerate().map(|(i, e)| (vec![i as i64], scalar(*e))).collect()
        }
        VarKind::Simplex(_) => state.simplex(var).iter().enumerate().map(|(i, x)| (vec![i as i64], Cell::Real(*x))).collect(),
        VarKind::TransitionMatrix(_) => state
            .matrix(var)
            .iter()
            .enumerate()
            .flat_map(|(r, row)| row.iter().enumerate().map(move |(c, x)| (vec![r as i64, c as i64], Cell::Real(*x))))
            .collect(),
        // A permutation is one component (index 0) serialized entry by entry.
        VarKind::Permutation(_) => state
            .permutation(var)
            .iter()
            .enumerate()
            .map(|(i, p)| (vec![0, i as i64], Cell::Int(*p as i64)))
            .collect(),
    }
}

/// Appends the rows of `var` at `sample` to `writer`.
pub fn write_tidy<W: Write>(
    model: &Model,
    var: VarId,
    state: &State,
    sample: u64,
    writer: &mut csv::Writer<W>,
) -> csv::Result<()> {
    for (keys, value) in tidy_values(model, var, state) {
        let mut row: Vec<String> = keys.iter().map(ToString::to_string).collect();
        row.push(sample.to_string());
        row.push(value.to_string());
        writer.write_record(&row)?;
    }
    Ok(())
}

/// CSV file, gzipped when requested (`.csv.gz`).
pub struct TidyFile {
    pub path: PathBuf,
    writer: csv::Writer<Box<dyn Write>>,
}

impl TidyFile {
    pub fn create(dir: &Path, stem: &str, header: &[&str], compressed: bool) -> io::Result<TidyFile> {
        let (path, sink): (PathBuf, Box<dyn Write>) = if compressed {
            let p = dir.join(format!("{stem}.csv.gz"));
            let f = BufWriter::new(File::create(&p)?);
            (p, Box::new(GzEncoder::new(f, Compression::default())))
        } else {
            let p = dir.join(format!("{stem}.csv"));
            (p.clone(), Box::new(BufWriter::new(File::create(&p)?)))
        };
        let mut writer = csv::Writer::from_writer(sink);
        writer.write_record(header)?;
        Ok(TidyFile { path, writer })
    }

    pub fn writer(&mut self) -> &mut csv::Writer<Box<dyn Write>> {
        &mut self.writer
    }

    pub fn row<I, S>(&mut self, cells: I) -> io::Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(cells).map_err(io::Error::from)
    }

    pub fn finish(self) -> io::Result<PathBuf> {
        let sink = self.writer.into_inner().map_err(|e| io::Error::new(io::ErrorKind::Other, e.to_string()))?;
        drop(sink);
        Ok(self.path)
    }
}
