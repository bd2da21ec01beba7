//! Seeded desk-scale datasets.
//!
//! Regression: every unit runs to failure at a lifetime `T ~ U[120, 260]`;
//! sensor `c` reads `a_c·(t/T)^p_c + ε`, plus three constant operating
//! settings. Classification: class `k` emits per-channel sinusoids at a
//! class-specific frequency and amplitude with a random phase.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    cmapss_channel_names, render_cmapss_table, render_har_csv, render_rul_file, DatasetSplit,
    Target, TimeSeriesRecord, WindowConfig, DEFAULT_R_MAX,
};
use crate::anchors::TaskKind;
use crate::error::{ensure, Result};

const SENSORS: usize = 21;
const SETTINGS: [f64; 3] = [0.0, 0.0, 100.0];
const LIFETIME: (u32, u32) = (120, 260);
const CLASS_CHANNELS: usize = 3;
const MAX_CLASSES: usize = 10;
const ACTIVITY_NAMES: [&str; 6] = ["walking", "upstairs", "downstairs", "sitting", "standing", "lying"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub kind: TaskKind,
    pub seed: u64,
    /// Regression: number of units. Classification: series per class.
    pub units: usize,
    /// Classification only.
    pub classes: usize,
    /// Standard deviation of the additive Gaussian noise.
    pub noise: f64,
    /// Fraction of units (or series) held out as the test split.
    pub test_fraction: f64,
    /// Classification series length.
    pub series_len: usize,
    pub r_max: f64,
}

impl SynthConfig {
    pub fn regression(seed: u64, units: usize) -> Self {
        SynthConfig {
            kind: TaskKind::Regression,
            seed,
            units,
            classes: 0,
            noise: 0.05,
            test_fraction: 0.2,
            series_len: 0,
            r_max: DEFAULT_R_MAX,
        }
    }

    pub fn classification(seed: u64, classes: usize) -> Self {
        SynthConfig {
            kind: TaskKind::Classification,
            seed,
            units: 24,
            classes,
            noise: 0.5,
            test_fraction: 1.0 / 3.0,
            series_len: 512,
            r_max: DEFAULT_R_MAX,
        }
    }

    pub fn class_names(&self) -> Vec<String> {
        (0..self.classes)
            .map(|k| match ACTIVITY_NAMES.get(k) {
                Some(n) => n.to_string(),
                None => format!("activity{k}"),
            })
            .collect()
    }
}

/// Ground-truth generator parameters for the regression task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionGenerator {
    pub amplitudes: Vec<f64>,
    pub exponents: Vec<f64>,
    /// (unit, lifetime) for every unit.
    pub lifetimes: Vec<(u32, u32)>,
}

impl RegressionGenerator {
    /// Noise-free sensor reading.
    pub fn signal(&self, sensor: usize, t: u32, lifetime: u32) -> f64 {
        self.amplitudes[sensor] * (t as f64 / lifetime as f64).powf(self.exponents[sensor])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthRecords {
    pub config: SynthConfig,
    pub channel_names: Vec<String>,
    pub train: Vec<TimeSeriesRecord>,
    pub test: Vec<TimeSeriesRecord>,
    pub generator: Option<RegressionGenerator>,
}

impl SynthRecords {
    /// Write the dataset in the on-disk formats the ingesters read. Regression
    /// produces `train_synth.txt`, `test_synth.txt` and `RUL_synth.txt`;
    /// classification produces `train.csv` and `test.csv`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let files: Vec<(PathBuf, String)> = match self.config.kind {
            TaskKind::Regression => {
                let ruls: Vec<f64> = self
                    .test
                    .iter()
                    .map(|r| match r.targets.as_ref().and_then(|t| t.last()) {
                        Some(Target::Rul(v)) => *v,
                        _ => 0.0,
                    })
                    .collect();
                vec![
                    (dir.join("train_synth.txt"), render_cmapss_table(&self.train)),
                    (dir.join("test_synth.txt"), render_cmapss_table(&self.test)),
                    (dir.join("RUL_synth.txt"), render_rul_file(&ruls)),
                ]
            }
            TaskKind::Classification => vec![
                (dir.join("train.csv"), render_har_csv(&self.channel_names, &self.train)),
                (dir.join("test.csv"), render_har_csv(&self.channel_names, &self.test)),
            ],
        };
        for (p, text) in &files {
            std::fs::write(p, text)?;
        }
        Ok(files.into_iter().map(|(p, _)| p).collect())
    }
}

/// Generate raw records. `min_len` bounds the truncation of regression test
/// units from below so that at least one window fits.
pub fn synth_records(cfg: &SynthConfig, min_len: usize) -> Result<SynthRecords> {
    ensure!(cfg.noise >= 0.0 && cfg.noise.is_finite(), Usage, "noise must be finite and >= 0");
    ensure!(
        cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0,
        Usage,
        "test fraction must lie in (0, 1)"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise.max(f64::MIN_POSITIVE)).expect("valid normal");
    let eps = |rng: &mut ChaCha8Rng| if cfg.noise > 0.0 { noise.sample(rng) } else { 0.0 };
    match cfg.kind {
        TaskKind::Regression => {
            ensure!(cfg.units >= 3, Usage, "regression needs at least 3 units");
            ensure!(cfg.r_max > 0.0, Usage, "r_max must be positive");
            ensure!(
                min_len <= LIFETIME.0 as usize,
                Usage,
                "window length {min_len} exceeds the shortest lifetime {}",
                LIFETIME.0
            );
            let amplitudes: Vec<f64> = (0..SENSORS)
                .map(|_| {
                    let a = rng.random_range(0.5..2.0);
                    if rng.random_bool(0.5) { a } else { -a }
                })
                .collect();
            let exponents: Vec<f64> = (0..SENSORS).map(|_| rng.random_range(1.0..3.0)).collect();
            let n_test = ((cfg.units as f64 * cfg.test_fraction).round() as usize).clamp(1, cfg.units - 2);
            let mut generator = RegressionGenerator {
                amplitudes,
                exponents,
                lifetimes: Vec::new(),
            };
            let (mut train, mut test) = (Vec::new(), Vec::new());
            for i in 0..cfg.units {
                let unit = i as u32 + 1;
                let life = rng.random_range(LIFETIME.0..=LIFETIME.1);
                generator.lifetimes.push((unit, life));
                let is_test = i >= cfg.units - n_test;
                let end = if is_test {
                    let lo = min_len.max((0.3 * life as f64).ceil() as usize) as u32;
                    rng.random_range(lo..=life)
                } else {
                    life
                };
                let mut data = Vec::with_capacity(24 * end as usize);
                for s in SETTINGS {
                    data.extend(std::iter::repeat_n(s, end as usize));
                }
                for c in 0..SENSORS {
                    for t in 1..=end {
                        data.push(generator.signal(c, t, life) + eps(&mut rng));
                    }
                }
                let targets = (1..=end)
                    .map(|t| Target::Rul(((life - t) as f64).min(cfg.r_max)))
                    .collect();
                let rec = TimeSeriesRecord::new(unit, 24, data, Some(targets))?;
                if is_test { test.push(rec) } else { train.push(rec) }
            }
            Ok(SynthRecords {
                config: cfg.clone(),
                channel_names: cmapss_channel_names(),
                train,
                test,
                generator: Some(generator),
            })
        }
        TaskKind::Classification => {
            ensure!(
                (2..=MAX_CLASSES).contains(&cfg.classes),
                Usage,
                "classification supports 2 to {MAX_CLASSES} classes"
            );
            ensure!(cfg.units >= 2, Usage, "need at least 2 series per class");
            ensure!(cfg.series_len >= 1, Usage, "series length must be positive");
            let names = cfg.class_names();
            let n_test = ((cfg.units as f64 * cfg.test_fraction).round() as usize).clamp(1, cfg.units - 1);
            let (mut train, mut test) = (Vec::new(), Vec::new());
            let mut unit = 0u32;
            for s in 0..cfg.units {
                for (k, name) in names.iter().enumerate() {
                    let freq = 3.0 * (k + 1) as f64 / 64.0;
                    let mut data = Vec::with_capacity(CLASS_CHANNELS * cfg.series_len);
                    for c in 0..CLASS_CHANNELS {
                        let amp = 0.5 + ((3 * k + c) % 4) as f64 * 0.5;
                        let phase = rng.random_range(0.0..std::f64::consts::TAU);
                        for t in 0..cfg.series_len {
                            let x = amp * (std::f64::consts::TAU * freq * t as f64 + phase).sin();
                            data.push(x + eps(&mut rng));
                        }
                    }
                    let targets = vec![Target::Class(name.clone()); cfg.series_len];
                    let rec = TimeSeriesRecord::new(unit, CLASS_CHANNELS, data, Some(targets))?;
                    unit += 1;
                    if s >= cfg.units - n_test { test.push(rec) } else { train.push(rec) }
                }
            }
            Ok(SynthRecords {
                config: cfg.clone(),
                channel_names: (0..CLASS_CHANNELS).map(|c| format!("acc{c}")).collect(),
                train,
                test,
                generator: None,
            })
        }
    }
}

/// Generate a dataset and window it.
pub fn synth_generate(cfg: &SynthConfig, windows: &WindowConfig) -> Result<DatasetSplit> {
    let recs = synth_records(cfg, windows.len)?;
    match cfg.kind {
        TaskKind::Regression => {
            DatasetSplit::regression(&recs.train, &recs.test, recs.channel_names, cfg.r_max, windows)
        }
        TaskKind::Classification => {
            DatasetSplit::classification(&recs.train, &recs.test, recs.channel_names, windows)
        }
    }
}
