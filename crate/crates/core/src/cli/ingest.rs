use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use super::CliError;
use crate::model::{BetweenData, Covariates, RepeatedData};

/// Column selection for [`ingest`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestOptions {
    /// Third between-file column is the mediator.
    pub mediator: bool,
    /// Within-level covariate columns; `None` takes every extra column.
    pub within_covariates: Option<Vec<String>>,
    /// Between-level covariate columns; `None` takes every extra column.
    pub between_covariates: Option<Vec<String>>,
}

/// Parsed input with the external subject ids (dense index = position).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub outcome_name: String,
    pub mediator_name: Option<String>,
    pub repeated: RepeatedData,
    pub between: BetweenData,
}

struct Table {
    file: String,
    header: Vec<String>,
    /// (line number, fields)
    rows: Vec<(u64, Vec<String>)>,
}

fn read_table(path: &Path) -> Result<Table, CliError> {
    let file = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Ingest(format!("{file}: {e}")))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Ingest(format!("{file}: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| CliError::Ingest(format!("{file}: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(Table { file, header, rows })
}

impl Table {
    fn number(&self, line: u64, col: usize, field: &str) -> Result<f64, CliError> {
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(CliError::Ingest(format!(
                "{} line {line}: column '{}': cannot parse {field:?} as a finite number",
                self.file, self.header[col]
            ))),
        }
    }

    fn column_index(&self, name: &str, from: usize) -> Result<usize, CliError> {
        self.header
            .iter()
            .skip(from)
            .position(|h| h == name)
            .map(|i| i + from)
            .ok_or_else(|| CliError::Ingest(format!("{}: no column named '{name}'", self.file)))
    }

    fn covariates(
        &self,
        first: usize,
        selected: &Option<Vec<String>>,
    ) -> Result<Option<Covariates>, CliError> {
        let cols: Vec<usize> = match selected {
            Some(names) => names
                .iter()
                .map(|n| self.column_index(n, first))
                .collect::<Result<_, _>>()?,
            None => (first..self.header.len()).collect(),
        };
        if cols.is_empty() {
            return Ok(None);
        }
        let mut columns = vec![Vec::new(); cols.len()];
        for (line, fields) in &self.rows {
            for (c, &col) in cols.iter().enumerate() {
                columns[c].push(self.number(*line, col, &fields[col])?);
            }
        }
        let names = cols.iter().map(|&c| self.header[c].clone()).collect();
        Covariates::from_columns(names, columns)
            .map(Some)
            .map_err(|e| CliError::Ingest(format!("{}: {e}", self.file)))
    }
}

/// Reads `within.csv` (`id,value[,covariate...]`) and `between.csv`
/// (`id,outcome[,mediator][,covariate...]`) into model inputs.
pub fn ingest(within: &Path, between: &Path, options: &IngestOptions) -> Result<Dataset, CliError> {
    let w = read_table(within)?;
    let b = read_table(between)?;
    let needed = if options.mediator { 3 } else { 2 };
    if b.header.len() < needed {
        return Err(CliError::Ingest(format!(
            "{}: expected at least {needed} columns (id, outcome{}), found {}",
            b.file,
            if options.mediator { ", mediator" } else { "" },
            b.header.len()
        )));
    }
    if w.header.len() < 2 {
        return Err(CliError::Ingest(format!(
            "{}: expected at least 2 columns (id, value), found {}",
            w.file,
            w.header.len()
        )));
    }

    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut first_line: HashMap<&str, u64> = HashMap::new();
    let mut ids = Vec::with_capacity(b.rows.len());
    let mut outcome = Vec::with_capacity(b.rows.len());
    let mut mediator = Vec::new();
    for (line, fields) in &b.rows {
        let id = fields[0].as_str();
        if let Some(prev) = first_line.get(id) {
            return Err(CliError::Ingest(format!(
                "{} line {line}: duplicated id '{id}' (first seen on line {prev})",
                b.file
            )));
        }
        first_line.insert(id, *line);
        index.insert(id, ids.len());
        ids.push(id.to_string());
        outcome.push(b.number(*line, 1, &fields[1])?);
        if options.mediator {
            mediator.push(b.number(*line, 2, &fields[2])?);
        }
    }

    let unknown: BTreeSet<&str> = w
        .rows
        .iter()
        .map(|(_, f)| f[0].as_str())
        .filter(|id| !index.contains_key(id))
        .collect();
    if !unknown.is_empty() {
        return Err(CliError::Ingest(format!(
            "{}: {} id(s) have no row in {}: {}",
            w.file,
            unknown.len(),
            b.file,
            unknown.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }
    let mut subject = Vec::with_capacity(w.rows.len());
    let mut value = Vec::with_capacity(w.rows.len());
    for (line, fields) in &w.rows {
        subject.push(index[fields[0].as_str()]);
        value.push(w.number(*line, 1, &fields[1])?);
    }
    let mut seen = vec![false; ids.len()];
    for &s in &subject {
        seen[s] = true;
    }
    let missing: Vec<&str> = ids
        .iter()
        .zip(&seen)
        .filter(|(_, s)| !**s)
        .map(|(id, _)| id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Ingest(format!(
            "{}: {} id(s) have no rows in {}: {}",
            b.file,
            missing.len(),
            w.file,
            missing.join(", ")
        )));
    }

    let w_cov = w.covariates(2, &options.within_covariates)?;
    let b_cov = b.covariates(needed, &options.between_covariates)?;
    let repeated = RepeatedData::new(subject, value, w_cov)
        .map_err(|e| CliError::Ingest(format!("{}: {e}", w.file)))?;
    let between = BetweenData::new(outcome, options.mediator.then_some(mediator), b_cov)
        .map_err(|e| CliError::Ingest(format!("{}: {e}", b.file)))?;
    Ok(Dataset {
        ids,
        outcome_name: b.header[1].clone(),
        mediator_name: options.mediator.then(|| b.header[2].clone()),
        repeated,
        between,
    })
}

fn io(e: impl std::fmt::Display) -> CliError {
    CliError::Io(e.to_string())
}

/// Writes the dataset back in the [`ingest`] layout.
pub fn write_dataset(data: &Dataset, within: &Path, between: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(within).map_err(io)?;
    let wc = data.repeated.covariates();
    let mut header = vec!["id".to_string(), "value".to_string()];
    header.extend(wc.names().iter().cloned());
    w.write_record(&header).map_err(io)?;
    for (i, (&s, v)) in data
        .repeated
        .subjects()
        .iter()
        .zip(data.repeated.values())
        .enumerate()
    {
        let mut row = vec![data.ids[s].clone(), v.to_string()];
        row.extend(wc.row(i).iter().map(f64::to_string));
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(io)?;

    let mut b = csv::Writer::from_path(between).map_err(io)?;
    let bc = data.between.covariates();
    let mut header = vec!["id".to_string(), data.outcome_name.clone()];
    header.extend(data.mediator_name.iter().cloned());
    header.extend(bc.names().iter().cloned());
    b.write_record(&header).map_err(io)?;
    for (j, id) in data.ids.iter().enumerate() {
        let mut row = vec![id.clone(), data.between.outcome()[j].to_string()];
        if let Some(m) = data.between.mediator() {
            row.push(m[j].to_string());
        }
        row.extend(bc.row(j).iter().map(f64::to_string));
        b.write_record(&row).map_err(io)?;
    }
    b.flush().map_err(io)
}
