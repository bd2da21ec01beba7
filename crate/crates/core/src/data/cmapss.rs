//! Whitespace-separated engine tables: `unit cycle setting1..3 s1..s21`.

use std::fmt::Write as _;
use std::path::Path;

use super::{Target, TimeSeriesRecord};
use crate::error::{ensure, KpError, Result};

/// Columns per row, including unit and cycle.
pub const CMAPSS_COLUMNS: usize = 26;

pub fn cmapss_channel_names() -> Vec<String> {
    (1..=3)
        .map(|i| format!("setting{i}"))
        .chain((1..=21).map(|i| format!("s{i}")))
        .collect()
}

/// One engine: id, cycle numbers and timestep-major readings.
pub type UnitRows = (u32, Vec<u32>, Vec<Vec<f64>>);

/// Parse a table into units in order of first appearance.
pub fn parse_cmapss_table(text: &str) -> Result<Vec<UnitRows>> {
    let mut units: Vec<UnitRows> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != CMAPSS_COLUMNS {
            return Err(KpError::format(
                lineno,
                format!("expected {CMAPSS_COLUMNS} columns, found {}", fields.len()),
            ));
        }
        let int = |s: &str, what: &str| -> Result<u32> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.fract() == 0.0 && *v >= 1.0 && *v <= u32::MAX as f64)
                .map(|v| v as u32)
                .ok_or_else(|| KpError::format(lineno, format!("bad {what} {s:?}")))
        };
        let unit = int(fields[0], "unit id")?;
        let cycle = int(fields[1], "cycle")?;
        let row = fields[2..]
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| KpError::format(lineno, format!("bad reading {s:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        match units.iter_mut().find(|u| u.0 == unit) {
            Some(u) => {
                if u.1.last().is_some_and(|&c| c >= cycle) {
                    return Err(KpError::format(
                        lineno,
                        format!("unit {unit}: cycle {cycle} does not increase"),
                    ));
                }
                u.1.push(cycle);
                u.2.push(row);
            }
            None => units.push((unit, vec![cycle], vec![row])),
        }
    }
    ensure!(!units.is_empty(), Data, "table has no rows");
    Ok(units)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| KpError::Data(format!("cannot read {}: {e}", path.display())))
}

fn to_records(units: Vec<UnitRows>, final_rul: &[f64], r_max: f64, unit_offset: u32) -> Result<Vec<TimeSeriesRecord>> {
    units
        .into_iter()
        .zip(final_rul)
        .map(|((unit, cycles, rows), &end)| {
            let last = *cycles.last().expect("unit has rows") as f64;
            let targets = cycles
                .iter()
                .map(|&c| Target::Rul((end + last - c as f64).min(r_max)))
                .collect();
            TimeSeriesRecord::from_rows(unit + unit_offset, &rows, Some(targets))
        })
        .collect()
}

/// Ingest a run-to-failure training table; RUL is `min(last_cycle - cycle, r_max)`.
pub fn cmapss_ingest(path: impl AsRef<Path>, r_max: f64) -> Result<Vec<TimeSeriesRecord>> {
    ensure!(r_max > 0.0, Usage, "r_max must be positive");
    let units = parse_cmapss_table(&read(path.as_ref())?)?;
    let zeros = vec![0.0; units.len()];
    to_records(units, &zeros, r_max, 0)
}

/// Ingest a truncated test table plus its per-unit final RUL file. Unit ids
/// are shifted by `unit_offset` so they cannot collide with training units.
pub fn cmapss_ingest_test(
    path: impl AsRef<Path>,
    rul_path: impl AsRef<Path>,
    r_max: f64,
    unit_offset: u32,
) -> Result<Vec<TimeSeriesRecord>> {
    ensure!(r_max > 0.0, Usage, "r_max must be positive");
    let units = parse_cmapss_table(&read(path.as_ref())?)?;
    let ruls = read(rul_path.as_ref())?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0)
                .ok_or_else(|| KpError::format(i + 1, format!("bad RUL {:?}", l.trim())))
        })
        .collect::<Result<Vec<f64>>>()?;
    ensure!(
        ruls.len() == units.len(),
        Data,
        "RUL file has {} entries for {} test units",
        ruls.len(),
        units.len()
    );
    to_records(units, &ruls, r_max, unit_offset)
}

/// Render records as a table with cycles numbered from 1.
pub fn render_cmapss_table(records: &[TimeSeriesRecord]) -> String {
    let mut out = String::new();
    for r in records {
        for t in 0..r.len {
            write!(out, "{} {}", r.unit, t + 1).unwrap();
            for c in 0..r.channels {
                write!(out, " {}", r.channel(c)[t]).unwrap();
            }
            out.push('\n');
        }
    }
    out
}

pub fn render_rul_file(ruls: &[f64]) -> String {
    ruls.iter().map(|v| format!("{v}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(unit: u32, cycle: u32, base: f64) -> String {
        let mut s = format!("{unit} {cycle}");
        for c in 0..24 {
            s.push_str(&format!(" {}", base + c as f64));
        }
        s
    }

    #[test]
    fn train_rul_is_capped_countdown() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train_FD001.txt");
        let text: Vec<String> = (1..=200).map(|c| row(1, c, c as f64)).collect();
        std::fs::write(&path, text.join("\n")).unwrap();
        let recs = cmapss_ingest(&path, 125.0).unwrap();
        assert_eq!(recs.len(), 1);
        let t = recs[0].targets.as_ref().unwrap();
        assert_eq!(t[0], Target::Rul(125.0));
        assert_eq!(t[199], Target::Rul(0.0));
        assert_eq!(t[150], Target::Rul(49.0));
        assert_eq!(recs[0].channels, 24);
        assert_eq!(recs[0].channel(3)[9], 13.0);
    }

    #[test]
    fn test_rul_adds_final_offset() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("test.txt");
        let r = dir.path().join("RUL.txt");
        let mut rows: Vec<String> = (1..=5).map(|c| row(1, c, 0.0)).collect();
        rows.extend((1..=3).map(|c| row(2, c, 0.0)));
        std::fs::write(&p, rows.join("\n")).unwrap();
        std::fs::write(&r, "10\n200\n").unwrap();
        let recs = cmapss_ingest_test(&p, &r, 125.0, 1000).unwrap();
        assert_eq!(recs[0].unit, 1001);
        assert_eq!(recs[0].targets.as_ref().unwrap()[4], Target::Rul(10.0));
        assert_eq!(recs[0].targets.as_ref().unwrap()[0], Target::Rul(14.0));
        assert_eq!(recs[1].targets.as_ref().unwrap()[2], Target::Rul(125.0));
    }

    #[test]
    fn malformed_rows_name_the_line() {
        let text = format!("{}\n1 2 3\n", row(1, 1, 0.0));
        assert!(matches!(parse_cmapss_table(&text), Err(KpError::Format { line: 2, .. })));
        let text = format!("{}\n{}\n", row(1, 2, 0.0), row(1, 2, 0.0));
        assert!(matches!(parse_cmapss_table(&text), Err(KpError::Format { line: 2, .. })));
    }

    #[test]
    fn render_parses_back() {
        let rows: Vec<Vec<f64>> = (0..4).map(|t| (0..24).map(|c| (t * c) as f64 * 0.25).collect()).collect();
        let rec = TimeSeriesRecord::from_rows(7, &rows, None).unwrap();
        let parsed = parse_cmapss_table(&render_cmapss_table(&[rec])).unwrap();
        assert_eq!(parsed[0].0, 7);
        assert_eq!(parsed[0].1, [1, 2, 3, 4]);
        assert_eq!(parsed[0].2, rows);
    }
}
