//! Observation and partition CSV, JSON-lines draws and JSON documents.
//!
//! Observation CSV header: `theta_1..theta_{p-1}, y_1..y_q [, pattern_id] [, label]`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::directional::DirLinObservation;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTable {
    pub observations: Vec<DirLinObservation<f64>>,
    pub pattern_ids: Option<Vec<String>>,
    pub labels: Option<Vec<usize>>,
}

impl ObservationTable {
    pub fn p(&self) -> usize {
        self.observations.first().map_or(0, DirLinObservation::p)
    }

    pub fn q(&self) -> usize {
        self.observations.first().map_or(0, DirLinObservation::q)
    }

    /// Observations grouped by pattern id, groups in order of first appearance.
    pub fn groups(&self) -> Result<Vec<(String, Vec<DirLinObservation<f64>>)>> {
        let ids = self.pattern_ids.as_ref().ok_or_else(|| Error::domain("observation file has no pattern_id column"))?;
        let mut out: Vec<(String, Vec<DirLinObservation<f64>>)> = Vec::new();
        let mut index = std::collections::HashMap::new();
        for (id, obs) in ids.iter().zip(&self.observations) {
            let k = *index.entry(id.clone()).or_insert_with(|| {
                out.push((id.clone(), Vec::new()));
                out.len() - 1
            });
            out[k].1.push(obs.clone());
        }
        Ok(out)
    }
}

pub fn write_observations<W: Write>(
    writer: W,
    observations: &[DirLinObservation<f64>],
    pattern_ids: Option<&[String]>,
    labels: Option<&[usize]>,
) -> Result<()> {
    let first = observations.first().ok_or_else(|| Error::domain("no observations to write"))?;
    let (p, q) = (first.p(), first.q());
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..p).map(|k| format!("theta_{k}")).chain((1..=q).map(|k| format!("y_{k}"))).collect();
    if pattern_ids.is_some() {
        header.push("pattern_id".into());
    }
    if labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for (i, obs) in observations.iter().enumerate() {
        if obs.p() != p || obs.q() != q {
            return Err(Error::domain(format!("observation {i} has inconsistent dimensions")));
        }
        let mut row: Vec<String> = obs.direction.angles().iter().chain(&obs.linear).map(|v| v.to_string()).collect();
        if let Some(ids) = pattern_ids {
            row.push(ids[i].clone());
        }
        if let Some(l) = labels {
            row.push(l[i].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_observations<R: Read>(reader: R) -> Result<ObservationTable> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut angle_cols = Vec::new();
    let mut linear_cols = Vec::new();
    let (mut pattern_col, mut label_col) = (None, None);
    for (c, name) in header.iter().enumerate() {
        if let Some(k) = name.strip_prefix("theta_") {
            angle_cols.push((parse_index(k, name)?, c));
        } else if let Some(k) = name.strip_prefix("y_") {
            linear_cols.push((parse_index(k, name)?, c));
        } else if name == "pattern_id" {
            pattern_col = Some(c);
        } else if name == "label" {
            label_col = Some(c);
        } else {
            return Err(Error::domain(format!("unexpected column `{name}`")));
        }
    }
    angle_cols.sort();
    linear_cols.sort();
    if angle_cols.is_empty() || angle_cols.iter().enumerate().any(|(i, (k, _))| *k != i + 1) {
        return Err(Error::domain("angle columns must be theta_1..theta_{p-1}"));
    }
    if linear_cols.iter().enumerate().any(|(i, (k, _))| *k != i + 1) {
        return Err(Error::domain("linear columns must be y_1..y_q"));
    }
    let mut observations = Vec::new();
    let mut pattern_ids = pattern_col.map(|_| Vec::new());
    let mut labels = label_col.map(|_| Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |c: usize| -> Result<f64> {
            rec[c].trim().parse::<f64>().map_err(|e| Error::domain(format!("row {}: column {}: {e}", line + 1, header[c])))
        };
        let angles = angle_cols.iter().map(|&(_, c)| num(c)).collect::<Result<Vec<_>>>()?;
        let linear = linear_cols.iter().map(|&(_, c)| num(c)).collect::<Result<Vec<_>>>()?;
        observations.push(DirLinObservation::from_angles(angles, linear).map_err(|e| Error::domain(format!("row {}: {e}", line + 1)))?);
        if let (Some(ids), Some(c)) = (pattern_ids.as_mut(), pattern_col) {
            ids.push(rec[c].trim().to_string());
        }
        if let (Some(ls), Some(c)) = (labels.as_mut(), label_col) {
            ls.push(rec[c].trim().parse::<usize>().map_err(|e| Error::domain(format!("row {}: label: {e}", line + 1)))?);
        }
    }
    if observations.is_empty() {
        return Err(Error::domain("observation file has no rows"));
    }
    Ok(ObservationTable { observations, pattern_ids, labels })
}

fn parse_index(k: &str, name: &str) -> Result<usize> {
    k.parse::<usize>().map_err(|_| Error::domain(format!("bad column name `{name}`")))
}

/// Two-column `item,label` CSV.
pub fn write_partition<W: Write>(writer: W, labels: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["item", "label"])?;
    for (i, l) in labels.iter().enumerate() {
        w.write_record([i.to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `item,label` (rows in any order) or a single `label` column.
pub fn read_partition<R: Read>(reader: R) -> Result<Vec<usize>> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let label_col = header.iter().position(|h| h == "label").ok_or_else(|| Error::domain("partition file needs a label column"))?;
    let item_col = header.iter().position(|h| h == "item");
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |c: usize| rec[c].trim().parse::<usize>().map_err(|e| Error::domain(format!("row {}: {e}", line + 1)));
        let item = match item_col {
            Some(c) => parse(c)?,
            None => line,
        };
        rows.push((item, parse(label_col)?));
    }
    rows.sort_unstable();
    if rows.iter().enumerate().any(|(i, (item, _))| *item != i) {
        return Err(Error::domain("partition items must be 0..n-1 without gaps"));
    }
    Ok(rows.into_iter().map(|(_, l)| l).collect())
}

pub fn write_jsonl<W: Write, T: Serialize>(writer: W, records: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for rec in records {
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<R: Read, T: DeserializeOwned>(reader: R) -> Result<Vec<T>> {
    BufReader::new(reader)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}
