//! Activity CSV: a header row, numeric channel columns, a `label` column and
//! an optional `series` column grouping rows into recordings. Without a
//! `label` column the records carry no targets (prediction input).

use std::fmt::Write as _;
use std::path::Path;

use super::{Target, TimeSeriesRecord};
use crate::error::{ensure, KpError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct HarTable {
    pub channel_names: Vec<String>,
    pub records: Vec<TimeSeriesRecord>,
}

impl HarTable {
    /// Sorted label vocabulary.
    pub fn classes(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .records
            .iter()
            .flat_map(|r| r.targets.iter().flatten())
            .filter_map(|t| match t {
                Target::Class(c) => Some(c.clone()),
                Target::Rul(_) => None,
            })
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

pub fn parse_har_csv(text: &str) -> Result<HarTable> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Err(KpError::Data("empty CSV".into()));
    };
    let cols: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let find = |name: &str| cols.iter().position(|c| c.eq_ignore_ascii_case(name));
    let label_col = find("label");
    let series_col = find("series");
    let channel_cols: Vec<usize> = (0..cols.len())
        .filter(|&i| Some(i) != label_col && Some(i) != series_col)
        .collect();
    ensure!(!channel_cols.is_empty(), Data, "CSV has no channel columns");

    // (series id, rows, labels)
    let mut groups: Vec<(String, Vec<Vec<f64>>, Option<Vec<Target>>)> = Vec::new();
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(KpError::format(
                lineno,
                format!("expected {} fields, found {}", cols.len(), fields.len()),
            ));
        }
        let label = label_col.map(|c| fields[c]);
        if label == Some("") {
            return Err(KpError::Data(format!("line {lineno}: missing label")));
        }
        let row = channel_cols
            .iter()
            .map(|&c| {
                fields[c]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| KpError::format(lineno, format!("bad value {:?} in {}", fields[c], cols[c])))
            })
            .collect::<Result<Vec<f64>>>()?;
        let series = series_col.map_or("", |c| fields[c]).to_string();
        let target = label.map(|l| Target::Class(l.to_string()));
        match groups.iter_mut().find(|g| g.0 == series) {
            Some(g) => {
                g.1.push(row);
                if let (Some(ts), Some(t)) = (g.2.as_mut(), target) {
                    ts.push(t);
                }
            }
            None => groups.push((series, vec![row], target.map(|t| vec![t]))),
        }
    }
    ensure!(!groups.is_empty(), Data, "CSV has no data rows");
    let records = groups
        .into_iter()
        .enumerate()
        .map(|(i, (_, rows, labels))| TimeSeriesRecord::from_rows(i as u32, &rows, labels))
        .collect::<Result<Vec<_>>>()?;
    Ok(HarTable {
        channel_names: channel_cols.iter().map(|&c| cols[c].clone()).collect(),
        records,
    })
}

pub fn har_ingest(path: impl AsRef<Path>) -> Result<HarTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| KpError::Data(format!("cannot read {}: {e}", path.display())))?;
    parse_har_csv(&text)
}

/// Render labelled records as CSV with a `series` column.
pub fn render_har_csv(channel_names: &[String], records: &[TimeSeriesRecord]) -> String {
    let mut out = String::from("series");
    for n in channel_names {
        write!(out, ",{n}").unwrap();
    }
    out.push_str(",label\n");
    for r in records {
        let labels = r.targets.as_deref().unwrap_or(&[]);
        for t in 0..r.len {
            write!(out, "{}", r.unit).unwrap();
            for c in 0..r.channels {
                write!(out, ",{}", r.channel(c)[t]).unwrap();
            }
            let label = match labels.get(t) {
                Some(Target::Class(l)) => l.as_str(),
                _ => "",
            };
            writeln!(out, ",{label}").unwrap();
        }
    }
    out
}
