//! Time-series records, windowing, normalization and dataset splits.

mod cmapss;
mod files;
mod har;
mod norm;
mod synth;

pub use cmapss::{
    cmapss_channel_names, cmapss_ingest, cmapss_ingest_test, parse_cmapss_table, render_cmapss_table,
    render_rul_file, CMAPSS_COLUMNS,
};
pub use files::DatasetFiles;
pub use har::{har_ingest, parse_har_csv, render_har_csv, HarTable};
pub use norm::{zscore_apply, zscore_fit, NormalizationStats};
pub use synth::{
    synth_generate, synth_records, RegressionGenerator, SynthConfig, SynthRecords,
};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anchors::{Payload, TaskKind};
use crate::error::{ensure, KpError, Result};
use crate::exec::{self, Execution};

/// Default RUL cap.
pub const DEFAULT_R_MAX: f64 = 125.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Class(String),
    Rul(f64),
}

impl Target {
    pub fn payload(&self) -> Payload {
        match self {
            Target::Class(c) => Payload::Class(c.clone()),
            Target::Rul(v) => Payload::Value(*v),
        }
    }

    pub fn kind(&self) -> TaskKind {
        match self {
            Target::Class(_) => TaskKind::Classification,
            Target::Rul(_) => TaskKind::Regression,
        }
    }

    pub fn rul(&self) -> Option<f64> {
        match self {
            Target::Rul(v) => Some(*v),
            Target::Class(_) => None,
        }
    }
}

/// One unit's multichannel series, stored channel-major (`channels × len`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesRecord {
    pub unit: u32,
    pub channels: usize,
    pub len: usize,
    pub data: Vec<f64>,
    /// Per-timestep targets, when labelled.
    pub targets: Option<Vec<Target>>,
}

impl TimeSeriesRecord {
    pub fn new(unit: u32, channels: usize, data: Vec<f64>, targets: Option<Vec<Target>>) -> Result<Self> {
        ensure!(channels >= 1, Data, "unit {unit}: record needs at least one channel");
        ensure!(
            !data.is_empty() && data.len() % channels == 0,
            Data,
            "unit {unit}: {} values do not fill {channels} channels",
            data.len()
        );
        let len = data.len() / channels;
        ensure!(
            data.iter().all(|v| v.is_finite()),
            Data,
            "unit {unit}: non-finite value"
        );
        if let Some(t) = &targets {
            ensure!(
                t.len() == len,
                Data,
                "unit {unit}: {} targets for {len} timesteps",
                t.len()
            );
        }
        Ok(TimeSeriesRecord {
            unit,
            channels,
            len,
            data,
            targets,
        })
    }

    /// Build from timestep-major rows (`len × channels`).
    pub fn from_rows(unit: u32, rows: &[Vec<f64>], targets: Option<Vec<Target>>) -> Result<Self> {
        ensure!(!rows.is_empty(), Data, "unit {unit}: no timesteps");
        let channels = rows[0].len();
        let mut data = vec![0.0; rows.len() * channels];
        for (t, row) in rows.iter().enumerate() {
            ensure!(
                row.len() == channels,
                Data,
                "unit {unit}: ragged row at timestep {t}"
            );
            for (c, v) in row.iter().enumerate() {
                data[c * rows.len() + t] = *v;
            }
        }
        TimeSeriesRecord::new(unit, channels, data, targets)
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.len..(c + 1) * self.len]
    }
}

/// Fixed-length slice of a record, channel-major (`channels × len`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub unit: u32,
    pub start: usize,
    pub channels: usize,
    pub len: usize,
    pub data: Vec<f64>,
    pub target: Option<Target>,
}

impl Window {
    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.len..(c + 1) * self.len]
    }
}

/// Most frequent label; ties go to the label seen first.
fn majority(labels: &[Target]) -> Target {
    let mut best: Option<(&Target, usize)> = None;
    for (i, l) in labels.iter().enumerate() {
        if labels[..i].contains(l) {
            continue;
        }
        let n = labels[i..].iter().filter(|x| *x == l).count();
        if best.is_none_or(|(_, m)| n > m) {
            best = Some((l, n));
        }
    }
    best.expect("non-empty window").0.clone()
}

/// Cut `record` into windows of length `len` starting every `stride` steps.
///
/// Regression windows take the target of their last timestep; class windows
/// take the majority label.
pub fn sliding_window(record: &TimeSeriesRecord, len: usize, stride: usize) -> Result<Vec<Window>> {
    ensure!(len >= 1, Usage, "window length must be positive");
    ensure!(stride >= 1, Usage, "stride must be positive");
    ensure!(
        len <= record.len,
        Data,
        "unit {}: window length {len} exceeds series length {}",
        record.unit,
        record.len
    );
    let count = (record.len - len) / stride + 1;
    Ok((0..count)
        .map(|w| window_at(record, w * stride, len))
        .collect())
}

fn window_at(record: &TimeSeriesRecord, start: usize, len: usize) -> Window {
    let mut data = Vec::with_capacity(record.channels * len);
    for c in 0..record.channels {
        data.extend_from_slice(&record.channel(c)[start..start + len]);
    }
    let target = record.targets.as_ref().map(|t| {
        let slice = &t[start..start + len];
        match slice[len - 1] {
            Target::Rul(_) => slice[len - 1].clone(),
            Target::Class(_) => majority(slice),
        }
    });
    Window {
        unit: record.unit,
        start,
        channels: record.channels,
        len,
        data,
        target,
    }
}

/// The final window of a record (the standard RUL evaluation point).
pub fn last_window(record: &TimeSeriesRecord, len: usize) -> Result<Window> {
    ensure!(
        len <= record.len,
        Data,
        "unit {}: window length {len} exceeds series length {}",
        record.unit,
        record.len
    );
    Ok(window_at(record, record.len - len, len))
}

/// Which test windows are scored.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    #[default]
    LastWindow,
    AllWindows,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub len: usize,
    pub stride: usize,
    pub eval_mode: EvalMode,
    /// Fraction of training units (or class windows) held out for validation.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl WindowConfig {
    pub fn regression(seed: u64) -> Self {
        WindowConfig {
            len: 30,
            stride: 1,
            eval_mode: EvalMode::LastWindow,
            validation_fraction: 0.125,
            seed,
        }
    }

    pub fn classification(seed: u64) -> Self {
        WindowConfig {
            len: 128,
            stride: 64,
            eval_mode: EvalMode::AllWindows,
            validation_fraction: 0.125,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitMeta {
    pub task: TaskKind,
    pub window_len: usize,
    pub stride: usize,
    pub r_max: Option<f64>,
    pub channel_names: Vec<String>,
    /// Class vocabulary in sorted order (classification only).
    pub classes: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<Window>,
    pub validation: Vec<Window>,
    pub test: Vec<Window>,
    pub meta: SplitMeta,
}

fn windows_of(records: &[&TimeSeriesRecord], len: usize, stride: usize) -> Result<Vec<Window>> {
    let per_unit = exec::map(Execution::default(), records, |r| sliding_window(r, len, stride));
    let mut out = Vec::new();
    for w in per_unit {
        out.extend(w?);
    }
    Ok(out)
}

impl DatasetSplit {
    /// Build a regression split. Training records are run-to-failure units,
    /// a seeded subset of which becomes validation; test records end at their
    /// evaluation point.
    pub fn regression(
        train: &[TimeSeriesRecord],
        test: &[TimeSeriesRecord],
        channel_names: Vec<String>,
        r_max: f64,
        cfg: &WindowConfig,
    ) -> Result<Self> {
        ensure!(!train.is_empty(), Data, "no training units");
        ensure!(!test.is_empty(), Data, "no test units");
        for r in train.iter().chain(test) {
            ensure!(
                r.targets.as_ref().is_some_and(|t| t.iter().all(|x| x.rul().is_some())),
                Data,
                "unit {} lacks RUL targets",
                r.unit
            );
        }
        let mut units: Vec<u32> = train.iter().map(|r| r.unit).collect();
        units.sort_unstable();
        units.dedup();
        ensure!(units.len() == train.len(), Data, "duplicate training unit ids");
        let test_ids: Vec<u32> = test.iter().map(|r| r.unit).collect();
        ensure!(
            !test_ids.iter().any(|u| units.binary_search(u).is_ok()),
            Data,
            "test units share ids with training units"
        );
        units.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
        let n_val = if units.len() >= 2 {
            ((units.len() as f64 * cfg.validation_fraction).round() as usize).clamp(1, units.len() - 1)
        } else {
            0
        };
        let val_units = &units[..n_val];
        let (val_recs, train_recs): (Vec<&TimeSeriesRecord>, Vec<&TimeSeriesRecord>) =
            train.iter().partition(|r| val_units.contains(&r.unit));
        let train_w = windows_of(&train_recs, cfg.len, cfg.stride)?;
        let val_w = windows_of(&val_recs, cfg.len, cfg.stride)?;
        let test_refs: Vec<&TimeSeriesRecord> = test.iter().collect();
        let test_w = match cfg.eval_mode {
            EvalMode::LastWindow => test
                .iter()
                .map(|r| last_window(r, cfg.len))
                .collect::<Result<Vec<_>>>()?,
            EvalMode::AllWindows => windows_of(&test_refs, cfg.len, cfg.stride)?,
        };
        let split = DatasetSplit {
            train: train_w,
            validation: if val_w.is_empty() { Vec::new() } else { val_w },
            test: test_w,
            meta: SplitMeta {
                task: TaskKind::Regression,
                window_len: cfg.len,
                stride: cfg.stride,
                r_max: Some(r_max),
                channel_names,
                classes: None,
            },
        };
        split.check()?;
        Ok(split)
    }

    /// Build a classification split; validation windows are a seeded sample of
    /// the training windows.
    pub fn classification(
        train: &[TimeSeriesRecord],
        test: &[TimeSeriesRecord],
        channel_names: Vec<String>,
        cfg: &WindowConfig,
    ) -> Result<Self> {
        let refs: Vec<&TimeSeriesRecord> = train.iter().collect();
        let mut all = windows_of(&refs, cfg.len, cfg.stride)?;
        let test_refs: Vec<&TimeSeriesRecord> = test.iter().collect();
        let test_w = windows_of(&test_refs, cfg.len, cfg.stride)?;
        let mut classes: Vec<String> = all
            .iter()
            .chain(&test_w)
            .filter_map(|w| match &w.target {
                Some(Target::Class(c)) => Some(c.clone()),
                _ => None,
            })
            .collect();
        classes.sort();
        classes.dedup();
        ensure!(!classes.is_empty(), Data, "no class labels");
        all.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
        let n_val = if all.len() >= 2 {
            ((all.len() as f64 * cfg.validation_fraction).round() as usize).clamp(1, all.len() - 1)
        } else {
            0
        };
        let train_w = all.split_off(n_val);
        let split = DatasetSplit {
            train: train_w,
            validation: all,
            test: test_w,
            meta: SplitMeta {
                task: TaskKind::Classification,
                window_len: cfg.len,
                stride: cfg.stride,
                r_max: None,
                channel_names,
                classes: Some(classes),
            },
        };
        split.check()?;
        Ok(split)
    }

    fn check(&self) -> Result<()> {
        ensure!(!self.train.is_empty(), Data, "training split is empty");
        ensure!(!self.test.is_empty(), Data, "test split is empty");
        for w in self.train.iter().chain(&self.validation).chain(&self.test) {
            match (&w.target, self.meta.task) {
                (Some(Target::Rul(v)), TaskKind::Regression) => {
                    let r_max = self.meta.r_max.unwrap_or(f64::INFINITY);
                    ensure!(
                        *v >= 0.0 && *v <= r_max,
                        Data,
                        "unit {}: RUL {v} outside [0, {r_max}]",
                        w.unit
                    );
                }
                (Some(Target::Class(_)), TaskKind::Classification) => {}
                _ => {
                    return Err(KpError::Data(format!(
                        "unit {}: window target does not match the task",
                        w.unit
                    )))
                }
            }
        }
        if self.meta.task == TaskKind::Regression {
            let units = |ws: &[Window]| {
                let mut u: Vec<u32> = ws.iter().map(|w| w.unit).collect();
                u.sort_unstable();
                u.dedup();
                u
            };
            let (a, b, c) = (units(&self.train), units(&self.validation), units(&self.test));
            ensure!(
                !a.iter().any(|u| b.binary_search(u).is_ok() || c.binary_search(u).is_ok())
                    && !b.iter().any(|u| c.binary_search(u).is_ok()),
                Data,
                "a unit appears in more than one split"
            );
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.train[0].channels
    }

    /// Mean training target (the constant-prediction baseline).
    pub fn train_target_mean(&self) -> Option<f64> {
        let v: Vec<f64> = self
            .train
            .iter()
            .filter_map(|w| w.target.as_ref().and_then(Target::rul))
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}
