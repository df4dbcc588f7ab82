//! Columnar datasets: CSV ingestion, centering and dichotomization.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Levels are kept in first-appearance order; `codes[i]` indexes `levels`.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    levels: Vec<String>,
    codes: Vec<usize>,
}

impl Factor {
    pub fn from_labels<S: AsRef<str>>(labels: &[S]) -> Self {
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut levels = Vec::new();
        let codes = labels
            .iter()
            .map(|l| {
                let l = l.as_ref();
                *index.entry(l.to_string()).or_insert_with(|| {
                    levels.push(l.to_string());
                    levels.len() - 1
                })
            })
            .collect();
        Factor { levels, codes }
    }

    /// Builds a factor with a fixed level set; every code must be in range.
    pub fn from_codes(levels: Vec<String>, codes: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = codes.iter().find(|&&c| c >= levels.len()) {
            return Err(Error::InvalidArgument(format!(
                "factor code {bad} out of range for {} levels",
                levels.len()
            )));
        }
        Ok(Factor { levels, codes })
    }

    pub fn levels(&self) -> &[String] {
        &self.levels
    }

    pub fn codes(&self) -> &[usize] {
        &self.codes
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn label(&self, i: usize) -> &str {
        &self.levels[self.codes[i]]
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.levels.len()];
        for &code in &self.codes {
            c[code] += 1;
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    Factor(Factor),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Factor(f) => f.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Factor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnRole {
    Response,
    Covariate,
    Group,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    pub role: ColumnRole,
}

impl ColumnSchema {
    pub fn numeric(name: &str) -> Self {
        ColumnSchema { name: name.to_string(), kind: ColumnKind::Numeric, role: ColumnRole::Covariate }
    }

    pub fn response(name: &str) -> Self {
        ColumnSchema { name: name.to_string(), kind: ColumnKind::Numeric, role: ColumnRole::Response }
    }

    pub fn group(name: &str) -> Self {
        ColumnSchema { name: name.to_string(), kind: ColumnKind::Factor, role: ColumnRole::Group }
    }

    pub fn factor(name: &str) -> Self {
        ColumnSchema { name: name.to_string(), kind: ColumnKind::Factor, role: ColumnRole::Covariate }
    }
}

/// Bookkeeping carried into downstream JSON reports.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub dropped_rows: usize,
    /// Column means subtracted by [`center`], keyed by column name.
    pub centered_means: BTreeMap<String, f64>,
}

/// Immutable table of equally long named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    names: Vec<String>,
    columns: Vec<Column>,
    response: Option<String>,
    meta: DatasetMeta,
}

impl Dataset {
    pub fn new(columns: Vec<(String, Column)>) -> Result<Self> {
        let n = columns.first().map(|(_, c)| c.len()).ok_or(Error::EmptyDataset)?;
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let mut seen = HashSet::new();
        for (name, col) in &columns {
            if name.is_empty() {
                return Err(Error::InvalidArgument("empty column name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateColumn(name.clone()));
            }
            if col.len() != n {
                return Err(Error::LengthMismatch { name: name.clone(), len: col.len(), expected: n });
            }
            if let Column::Numeric(v) = col {
                if let Some(row) = v.iter().position(|x| !x.is_finite()) {
                    return Err(Error::NonFinite { row: row + 1, column: name.clone() });
                }
            }
        }
        let (names, columns) = columns.into_iter().unzip();
        Ok(Dataset { n, names, columns, response: None, meta: DatasetMeta::default() })
    }

    /// Convenience constructor for all-numeric data.
    pub fn from_numeric(columns: Vec<(&str, Vec<f64>)>) -> Result<Self> {
        Dataset::new(columns.into_iter().map(|(n, v)| (n.to_string(), Column::Numeric(v))).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn response_name(&self) -> Option<&str> {
        self.response.as_deref()
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn with_response(mut self, name: &str) -> Result<Self> {
        self.numeric(name)?;
        self.response = Some(name.to_string());
        Ok(self)
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.columns[i])
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    pub fn numeric(&self, name: &str) -> Result<&[f64]> {
        match self.column(name)? {
            Column::Numeric(v) => Ok(v),
            Column::Factor(_) => Err(Error::NotNumeric(name.to_string())),
        }
    }

    pub fn factor(&self, name: &str) -> Result<&Factor> {
        match self.column(name)? {
            Column::Factor(f) => Ok(f),
            Column::Numeric(_) => Err(Error::NotFactor(name.to_string())),
        }
    }

    /// Returns a copy with `name` added, or replaced if it already exists.
    pub fn with_column(&self, name: &str, column: Column) -> Result<Self> {
        if column.len() != self.n {
            return Err(Error::LengthMismatch { name: name.to_string(), len: column.len(), expected: self.n });
        }
        if let Column::Numeric(v) = &column {
            if let Some(row) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite { row: row + 1, column: name.to_string() });
            }
        }
        let mut out = self.clone();
        match out.names.iter().position(|n| n == name) {
            Some(i) => out.columns[i] = column,
            None => {
                out.names.push(name.to_string());
                out.columns.push(column);
            }
        }
        Ok(out)
    }

    /// Keeps the rows where `keep` is true.
    pub fn filter_rows(&self, keep: &[bool]) -> Result<Self> {
        let columns = self
            .names
            .iter()
            .zip(&self.columns)
            .map(|(name, col)| {
                let col = match col {
                    Column::Numeric(v) => Column::Numeric(
                        v.iter().zip(keep).filter(|(_, &k)| k).map(|(&x, _)| x).collect(),
                    ),
                    Column::Factor(f) => {
                        let labels: Vec<&str> =
                            (0..f.len()).filter(|&i| keep[i]).map(|i| f.label(i)).collect();
                        Column::Factor(Factor::from_labels(&labels))
                    }
                };
                (name.clone(), col)
            })
            .collect();
        let mut out = Dataset::new(columns)?;
        out.response = self.response.clone();
        out.meta = self.meta.clone();
        Ok(out)
    }
}

fn is_missing(field: &str) -> bool {
    let f = field.trim();
    f.is_empty() || f.eq_ignore_ascii_case("na")
}

/// Reads the declared columns of a headed CSV file; rows with a missing
/// declared value (empty or `NA`) are dropped listwise and counted in
/// [`DatasetMeta::dropped_rows`].
pub fn load_csv<P: AsRef<Path>>(path: P, schema: &[ColumnSchema]) -> Result<Dataset> {
    let reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    read_csv(reader, schema)
}

pub fn read_csv<R: std::io::Read>(mut reader: csv::Reader<R>, schema: &[ColumnSchema]) -> Result<Dataset> {
    if schema.iter().filter(|c| c.role == ColumnRole::Response).count() > 1 {
        return Err(Error::InvalidArgument("at most one response column per load".into()));
    }
    let headers = reader.headers()?.clone();
    let idx: Vec<usize> = schema
        .iter()
        .map(|c| headers.iter().position(|h| h == c.name).ok_or_else(|| Error::MissingColumn(c.name.clone())))
        .collect::<Result<_>>()?;

    let mut numeric: Vec<Vec<f64>> = vec![Vec::new(); schema.len()];
    let mut labels: Vec<Vec<String>> = vec![Vec::new(); schema.len()];
    let mut dropped = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let fields: Vec<&str> = idx.iter().map(|&i| record.get(i).unwrap_or("")).collect();
        if fields.iter().any(|f| is_missing(f)) {
            dropped += 1;
            continue;
        }
        for (j, (col, field)) in schema.iter().zip(&fields).enumerate() {
            match col.kind {
                ColumnKind::Numeric => {
                    let v: f64 = field
                        .parse()
                        .map_err(|_| Error::ParseError { row: row + 1, column: col.name.clone() })?;
                    if !v.is_finite() {
                        return Err(Error::NonFinite { row: row + 1, column: col.name.clone() });
                    }
                    numeric[j].push(v);
                }
                ColumnKind::Factor => labels[j].push(field.to_string()),
            }
        }
    }

    let columns: Vec<(String, Column)> = schema
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let col = match c.kind {
                ColumnKind::Numeric => Column::Numeric(std::mem::take(&mut numeric[j])),
                ColumnKind::Factor => Column::Factor(Factor::from_labels(&labels[j])),
            };
            (c.name.clone(), col)
        })
        .collect();
    if columns.first().map_or(true, |(_, c)| c.is_empty()) {
        return Err(Error::EmptyDataset);
    }
    let mut ds = Dataset::new(columns)?;
    ds.meta.dropped_rows = dropped;
    if let Some(resp) = schema.iter().find(|c| c.role == ColumnRole::Response) {
        ds = ds.with_response(&resp.name)?;
    }
    Ok(ds)
}

/// Writes every column; numeric values use the shortest representation that
/// parses back to the identical `f64`.
pub fn write_csv<P: AsRef<Path>>(ds: &Dataset, path: P) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    write_records(ds, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_records<W: std::io::Write>(ds: &Dataset, w: &mut csv::Writer<W>) -> Result<()> {
    w.write_record(ds.names())?;
    let mut row = Vec::with_capacity(ds.columns.len());
    for i in 0..ds.n {
        row.clear();
        for col in &ds.columns {
            row.push(match col {
                Column::Numeric(v) => format!("{:?}", v[i]),
                Column::Factor(f) => f.label(i).to_string(),
            });
        }
        w.write_record(&row)?;
    }
    Ok(())
}

/// Subtracts the sample mean from each named numeric column. Means are
/// accumulated in the metadata so repeated centering still back-transforms.
pub fn center(ds: &Dataset, names: &[&str]) -> Result<Dataset> {
    let mut out = ds.clone();
    for &name in names {
        let v = out.numeric(name)?;
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let centered: Vec<f64> = v.iter().map(|x| x - mean).collect();
        out = out.with_column(name, Column::Numeric(centered))?;
        *out.meta.centered_means.entry(name.to_string()).or_insert(0.0) += mean;
    }
    Ok(out)
}

pub const NEG_LEVEL: &str = "neg";
pub const POS_LEVEL: &str = "pos";

/// Adds the factor `<name>_f` with level `neg` below `threshold` and `pos`
/// at or above it. Level order is always (`neg`, `pos`).
pub fn dichotomize(ds: &Dataset, name: &str, threshold: f64) -> Result<Dataset> {
    let v = ds.numeric(name)?;
    let codes: Vec<usize> = v.iter().map(|&x| usize::from(x >= threshold)).collect();
    let npos = codes.iter().sum::<usize>();
    if npos == 0 || npos == codes.len() {
        return Err(Error::DegenerateFactor(name.to_string()));
    }
    let f = Factor::from_codes(vec![NEG_LEVEL.into(), POS_LEVEL.into()], codes)?;
    ds.with_column(&format!("{name}_f"), Column::Factor(f))
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
