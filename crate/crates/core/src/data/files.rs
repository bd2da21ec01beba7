//! Locate dataset files on disk.
//!
//! A path is either a directory or a training file. Directories hold
//! `train.csv` + `test.csv` (activity CSV) or exactly one
//! `train_<name>.txt` with matching `test_<name>.txt` and `RUL_<name>.txt`
//! (run-to-failure tables). A training file path names its siblings the
//! same way.

use std::path::{Path, PathBuf};

use super::{cmapss_channel_names, cmapss_ingest, cmapss_ingest_test, har_ingest, DatasetSplit, WindowConfig};
use crate::anchors::TaskKind;
use crate::error::{KpError, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DatasetFiles {
    Cmapss { train: PathBuf, test: PathBuf, rul: PathBuf },
    Har { train: PathBuf, test: PathBuf },
}

fn must_exist(p: PathBuf) -> Result<PathBuf> {
    if p.is_file() {
        Ok(p)
    } else {
        Err(KpError::Data(format!("missing dataset file {}", p.display())))
    }
}

fn cmapss_from_train(train: PathBuf) -> Result<DatasetFiles> {
    let dir = train.parent().unwrap_or(Path::new("")).to_path_buf();
    let name = train.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let suffix = name
        .strip_prefix("train_")
        .ok_or_else(|| KpError::Data(format!("{} is not named train_<name>.txt", train.display())))?;
    Ok(DatasetFiles::Cmapss {
        test: must_exist(dir.join(format!("test_{suffix}")))?,
        rul: must_exist(dir.join(format!("RUL_{suffix}")))?,
        train: must_exist(train)?,
    })
}

impl DatasetFiles {
    pub fn detect(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if path.is_file() {
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if name.ends_with(".csv") {
                let test = name.replacen("train", "test", 1);
                if test == name {
                    return Err(KpError::Data(format!("{} has no `train` in its name", path.display())));
                }
                return Ok(DatasetFiles::Har {
                    test: must_exist(path.with_file_name(test))?,
                    train: path.to_path_buf(),
                });
            }
            return cmapss_from_train(path.to_path_buf());
        }
        if !path.is_dir() {
            return Err(KpError::Data(format!("no dataset at {}", path.display())));
        }
        if path.join("train.csv").is_file() {
            return Ok(DatasetFiles::Har {
                train: path.join("train.csv"),
                test: must_exist(path.join("test.csv"))?,
            });
        }
        let mut trains: Vec<PathBuf> = std::fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("train_") && n.ends_with(".txt"))
            })
            .collect();
        trains.sort();
        match trains.len() {
            0 => Err(KpError::Data(format!(
                "{} holds neither train.csv nor train_<name>.txt",
                path.display()
            ))),
            1 => cmapss_from_train(trains.remove(0)),
            _ => Err(KpError::Usage(format!(
                "{} holds several training tables; pass one of them directly: {}",
                path.display(),
                trains.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
            ))),
        }
    }

    pub fn task(&self) -> TaskKind {
        match self {
            DatasetFiles::Cmapss { .. } => TaskKind::Regression,
            DatasetFiles::Har { .. } => TaskKind::Classification,
        }
    }

    /// Read and window the dataset. `r_max` only applies to regression.
    pub fn load(&self, cfg: &WindowConfig, r_max: f64) -> Result<DatasetSplit> {
        match self {
            DatasetFiles::Cmapss { train, test, rul } => {
                let train = cmapss_ingest(train, r_max)?;
                let offset = train.iter().map(|r| r.unit).max().unwrap_or(0);
                let test = cmapss_ingest_test(test, rul, r_max, offset)?;
                DatasetSplit::regression(&train, &test, cmapss_channel_names(), r_max, cfg)
            }
            DatasetFiles::Har { train, test } => {
                let train = har_ingest(train)?;
                let test = har_ingest(test)?;
                if test.channel_names != train.channel_names {
                    return Err(KpError::Data("train and test CSVs have different channel columns".into()));
                }
                let offset = train.records.len() as u32;
                let test_recs: Vec<_> = test
                    .records
                    .into_iter()
                    .map(|mut r| {
                        r.unit += offset;
                        r
                    })
                    .collect();
                DatasetSplit::classification(&train.records, &test_recs, train.channel_names, cfg)
            }
        }
    }
}
