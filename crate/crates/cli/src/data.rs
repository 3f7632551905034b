//! Delimited-text data files.
//!
//! View data are long format with header `subject,time,value`, one row per
//! observation. Covariates have header `subject,<name>,...`. Truth files have
//! header `subject,<partition>,...` with one-based labels. Label traces have
//! header `iteration,<subject>,...` and one-based labels.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use latmod_views::{Covariates, Series};

use crate::error::{CliError, Result};

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(f))
}

fn data_err(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {msg}", path.display()))
}

fn parse<T: FromStr>(path: &Path, line: u64, field: &str, what: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| data_err(path, format!("line {line}: cannot parse {what} `{field}`")))
}

fn record_line(r: &csv::StringRecord) -> u64 {
    r.position().map_or(0, |p| p.line())
}

/// Subject identifiers in a fixed order, with a reverse index.
#[derive(Debug, Clone, PartialEq)]
pub struct Subjects {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl Subjects {
    pub fn new(ids: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(CliError::Data(format!("subject `{id}` listed twice")));
            }
        }
        Ok(Subjects { ids, index })
    }

    /// Identifiers `1..=n`.
    pub fn numbered(n: usize) -> Self {
        Subjects::new((1..=n).map(|i| i.to_string()).collect()).expect("distinct ids")
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }
}

/// Rows of a long-format file.
pub struct LongTable<T> {
    pub rows: Vec<(String, f64, T)>,
}

impl<T: FromStr> LongTable<T> {
    pub fn read(path: &Path) -> Result<Self> {
        let mut rdr = reader(path)?;
        let headers = rdr.headers().map_err(|e| data_err(path, e))?.clone();
        if headers.len() != 3 {
            return Err(data_err(path, "expected header `subject,time,value`"));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| data_err(path, e))?;
            let line = record_line(&rec);
            let t: f64 = parse(path, line, &rec[1], "time")?;
            if !t.is_finite() {
                return Err(data_err(path, format!("line {line}: time must be finite")));
            }
            rows.push((rec[0].to_string(), t, parse(path, line, &rec[2], "value")?));
        }
        if rows.is_empty() {
            return Err(data_err(path, "no observations"));
        }
        Ok(LongTable { rows })
    }
}

impl<T: Clone> LongTable<T> {
    /// Subjects in order of first appearance.
    pub fn subjects(&self) -> Result<Subjects> {
        let mut seen = std::collections::HashSet::new();
        let ids = self
            .rows
            .iter()
            .filter(|(id, _, _)| seen.insert(id.clone()))
            .map(|(id, _, _)| id.clone())
            .collect();
        Subjects::new(ids)
    }

    /// Per-subject series sorted by time; every subject needs at least one row.
    pub fn series(&self, subjects: &Subjects, path: &Path) -> Result<Vec<Series<T>>> {
        let mut per: Vec<Vec<(f64, T)>> = vec![Vec::new(); subjects.len()];
        for (id, t, v) in &self.rows {
            let i = subjects
                .get(id)
                .ok_or_else(|| data_err(path, format!("unknown subject `{id}`")))?;
            per[i].push((*t, v.clone()));
        }
        per.into_iter()
            .enumerate()
            .map(|(i, mut obs)| {
                if obs.is_empty() {
                    return Err(data_err(path, format!("no observations for subject `{}`", subjects.ids()[i])));
                }
                obs.sort_by(|a, b| a.0.total_cmp(&b.0));
                if obs.windows(2).any(|w| w[0].0 == w[1].0) {
                    return Err(data_err(
                        path,
                        format!("repeated time for subject `{}`", subjects.ids()[i]),
                    ));
                }
                let (times, values) = obs.into_iter().unzip();
                Series::new(times, values).map_err(|e| data_err(path, e))
            })
            .collect()
    }

    /// One value per subject, for cross-sectional views.
    pub fn single(&self, subjects: &Subjects, path: &Path) -> Result<Vec<T>> {
        self.series(subjects, path)?
            .into_iter()
            .zip(subjects.ids())
            .map(|(s, id)| {
                if s.values.len() == 1 {
                    Ok(s.values[0].clone())
                } else {
                    Err(data_err(path, format!("subject `{id}` needs exactly one row")))
                }
            })
            .collect()
    }
}

pub fn read_covariates(path: &Path, subjects: &Subjects) -> Result<Covariates> {
    let mut rdr = reader(path)?;
    let q = rdr.headers().map_err(|e| data_err(path, e))?.len().saturating_sub(1);
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; subjects.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| data_err(path, e))?;
        let line = record_line(&rec);
        if rec.len() != q + 1 {
            return Err(data_err(path, format!("line {line}: expected {} fields", q + 1)));
        }
        let i = subjects
            .get(&rec[0])
            .ok_or_else(|| data_err(path, format!("line {line}: unknown subject `{}`", &rec[0])))?;
        let row = (1..=q)
            .map(|k| parse::<f64>(path, line, &rec[k], "covariate"))
            .collect::<Result<Vec<_>>>()?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(data_err(path, format!("line {line}: covariates must be finite")));
        }
        if rows[i].replace(row).is_some() {
            return Err(data_err(path, format!("line {line}: subject `{}` repeated", &rec[0])));
        }
    }
    let rows = rows
        .into_iter()
        .zip(subjects.ids())
        .map(|(r, id)| r.ok_or_else(|| data_err(path, format!("no covariates for subject `{id}`"))))
        .collect::<Result<Vec<_>>>()?;
    Covariates::new(rows).map_err(|e| data_err(path, e))
}

/// Named label columns, zero-based in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTable {
    pub names: Vec<String>,
    /// `columns[k][i]`: label of subject `i` in column `k`.
    pub columns: Vec<Vec<usize>>,
}

impl LabelTable {
    pub fn column(&self, name: &str) -> Option<&[usize]> {
        self.names.iter().position(|n| n == name).map(|k| self.columns[k].as_slice())
    }

    pub fn read(path: &Path, subjects: &Subjects) -> Result<Self> {
        let mut rdr = reader(path)?;
        let names: Vec<String> = rdr
            .headers()
            .map_err(|e| data_err(path, e))?
            .iter()
            .skip(1)
            .map(String::from)
            .collect();
        let mut cols: Vec<Vec<Option<usize>>> = vec![vec![None; subjects.len()]; names.len()];
        for rec in rdr.records() {
            let rec = rec.map_err(|e| data_err(path, e))?;
            let line = record_line(&rec);
            if rec.len() != names.len() + 1 {
                return Err(data_err(path, format!("line {line}: expected {} fields", names.len() + 1)));
            }
            let i = subjects
                .get(&rec[0])
                .ok_or_else(|| data_err(path, format!("line {line}: unknown subject `{}`", &rec[0])))?;
            for (k, col) in cols.iter_mut().enumerate() {
                col[i] = Some(one_based(path, line, &rec[k + 1])?);
            }
        }
        let columns = cols
            .into_iter()
            .map(|c| {
                c.into_iter()
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| data_err(path, "labels missing for some subjects"))
            })
            .collect::<Result<_>>()?;
        Ok(LabelTable { names, columns })
    }

    pub fn write(&self, path: &Path, subjects: &Subjects) -> Result<()> {
        let mut w = writer(path)?;
        let header: Vec<&str> = std::iter::once("subject").chain(self.names.iter().map(String::as_str)).collect();
        w.write_record(&header).map_err(|e| csv_err(path, e))?;
        for (i, id) in subjects.ids().iter().enumerate() {
            let mut row = vec![id.clone()];
            row.extend(self.columns.iter().map(|c| (c[i] + 1).to_string()));
            w.write_record(&row).map_err(|e| csv_err(path, e))?;
        }
        flush(w, path)
    }
}

fn one_based(path: &Path, line: u64, field: &str) -> Result<usize> {
    let v: usize = parse(path, line, field, "label")?;
    v.checked_sub(1)
        .ok_or_else(|| data_err(path, format!("line {line}: labels are one-based")))
}

pub fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let f = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::Data(format!("{}: {other:?}", path.display())),
    }
}

pub fn flush(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Write rows of displayable cells.
pub fn write_rows<S: AsRef<str>>(path: &Path, header: &[S], rows: &[Vec<String>]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header.iter().map(|h| h.as_ref())).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    flush(w, path)
}

/// Write per-subject series in long format.
pub fn write_long<T: ToString>(path: &Path, subjects: &Subjects, series: &[Series<T>]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["subject", "time", "value"]).map_err(|e| csv_err(path, e))?;
    for (id, s) in subjects.ids().iter().zip(series) {
        for (t, v) in s.times.iter().zip(&s.values) {
            w.write_record([id.clone(), t.to_string(), v.to_string()])
                .map_err(|e| csv_err(path, e))?;
        }
    }
    flush(w, path)
}

pub fn write_covariates(path: &Path, subjects: &Subjects, x: &Covariates) -> Result<()> {
    let header: Vec<String> = std::iter::once("subject".to_string())
        .chain((1..=x.q()).map(|k| format!("x{k}")))
        .collect();
    let rows: Vec<Vec<String>> = subjects
        .ids()
        .iter()
        .enumerate()
        .map(|(i, id)| std::iter::once(id.clone()).chain(x.row(i).iter().map(f64::to_string)).collect())
        .collect();
    write_rows(path, &header, &rows)
}

/// Label trace: one row per stored iteration.
pub fn write_label_trace(path: &Path, subjects: &Subjects, iterations: &[usize], labels: &[Vec<usize>]) -> Result<()> {
    let mut w = writer(path)?;
    let header: Vec<&str> = std::iter::once("iteration").chain(subjects.ids().iter().map(String::as_str)).collect();
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    let mut row = Vec::with_capacity(subjects.len() + 1);
    for (it, l) in iterations.iter().zip(labels) {
        row.clear();
        row.push(it.to_string());
        row.extend(l.iter().map(|v| (v + 1).to_string()));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    flush(w, path)
}

/// Read a label trace, returning subject ids, iterations and zero-based labels.
pub fn read_label_trace(path: &Path) -> Result<(Vec<String>, Vec<usize>, Vec<Vec<usize>>)> {
    if !path.is_file() {
        return Err(data_err(path, "trace file not found"));
    }
    let mut rdr = reader(path)?;
    let ids: Vec<String> = rdr
        .headers()
        .map_err(|e| data_err(path, e))?
        .iter()
        .skip(1)
        .map(String::from)
        .collect();
    let (mut its, mut labels) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| data_err(path, e))?;
        let line = record_line(&rec);
        if rec.len() != ids.len() + 1 {
            return Err(data_err(path, format!("line {line}: expected {} fields", ids.len() + 1)));
        }
        its.push(parse(path, line, &rec[0], "iteration")?);
        labels.push(
            rec.iter()
                .skip(1)
                .map(|f| one_based(path, line, f))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    if labels.is_empty() {
        return Err(data_err(path, "empty trace"));
    }
    Ok((ids, its, labels))
}

/// Write a plain text file.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn long_table_groups_and_sorts_by_time() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.csv");
        write_text(&p, "subject,time,value\nb,2,1\na,1,0\nb,1,0\na,0,1\n").unwrap();
        let t = LongTable::<u8>::read(&p).unwrap();
        let s = t.subjects().unwrap();
        assert_eq!(s.ids(), ["b", "a"]);
        let series = t.series(&s, &p).unwrap();
        assert_eq!(series[0].times, vec![1.0, 2.0]);
        assert_eq!(series[0].values, vec![0, 1]);
        assert_eq!(series[1].values, vec![1, 0]);
        assert!(matches!(t.single(&s, &p), Err(CliError::Data(_))));
    }

    #[test]
    fn bad_rows_are_data_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.csv");
        write_text(&p, "subject,time,value\na,0,x\n").unwrap();
        assert!(matches!(LongTable::<f64>::read(&p), Err(CliError::Data(m)) if m.contains("line 2")));
        write_text(&p, "subject,time,value\na,0,1\na,0,2\n").unwrap();
        let t = LongTable::<f64>::read(&p).unwrap();
        assert!(t.series(&t.subjects().unwrap(), &p).is_err());
    }

    #[test]
    fn labels_and_traces_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = Subjects::numbered(3);
        let table = LabelTable {
            names: vec!["c0".into(), "y1".into()],
            columns: vec![vec![0, 0, 1], vec![2, 1, 0]],
        };
        let p = dir.path().join("truth.csv");
        table.write(&p, &s).unwrap();
        assert_eq!(LabelTable::read(&p, &s).unwrap(), table);
        let p = dir.path().join("c0.csv");
        write_label_trace(&p, &s, &[4, 6], &[vec![0, 1, 1], vec![2, 0, 0]]).unwrap();
        let (ids, its, labels) = read_label_trace(&p).unwrap();
        assert_eq!((ids, its), (s.ids().to_vec(), vec![4, 6]));
        assert_eq!(labels, vec![vec![0, 1, 1], vec![2, 0, 0]]);
    }

    #[test]
    fn covariates_follow_subject_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        write_text(&p, "subject,x1,x2\n2,0.5,1\n1,-1,2\n").unwrap();
        let x = read_covariates(&p, &Subjects::numbered(2)).unwrap();
        assert_eq!(x.row(0), &[-1.0, 2.0]);
        assert_eq!(x.row(1), &[0.5, 1.0]);
        assert!(read_covariates(&p, &Subjects::numbered(3)).is_err());
    }
}
