use serde::{Deserialize, Serialize};

use super::Window;
use crate::error::{ensure, Result};

/// Channels with a fitted standard deviation below this are dropped.
pub const CONSTANT_STD: f64 = 1e-8;

/// Per-channel z-score statistics fitted on training windows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    /// Channel count of the raw input.
    pub input_channels: usize,
    /// Indices of the retained raw channels.
    pub keep: Vec<usize>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Indices of channels dropped as constant.
    pub dropped: Vec<usize>,
}

impl NormalizationStats {
    pub fn output_channels(&self) -> usize {
        self.keep.len()
    }
}

/// Fit mean and (population) std per channel over all timesteps of `windows`.
pub fn zscore_fit(windows: &[Window]) -> Result<NormalizationStats> {
    ensure!(!windows.is_empty(), Data, "cannot fit normalization on zero windows");
    let channels = windows[0].channels;
    ensure!(
        windows.iter().all(|w| w.channels == channels),
        Dimension,
        "windows disagree on channel count"
    );
    let mut mean = vec![0.0; channels];
    let mut count = 0usize;
    for w in windows {
        for (c, m) in mean.iter_mut().enumerate() {
            *m += w.channel(c).iter().sum::<f64>();
        }
        count += w.len;
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);
    let mut var = vec![0.0; channels];
    for w in windows {
        for (c, v) in var.iter_mut().enumerate() {
            *v += w.channel(c).iter().map(|x| (x - mean[c]).powi(2)).sum::<f64>();
        }
    }
    let std: Vec<f64> = var.iter().map(|v| (v / count as f64).sqrt()).collect();
    let (keep, dropped): (Vec<usize>, Vec<usize>) =
        (0..channels).partition(|&c| std[c] >= CONSTANT_STD);
    ensure!(!keep.is_empty(), DegenerateInput, "every channel is constant");
    if !dropped.is_empty() {
        log::warn!("dropping constant channels {dropped:?}");
    }
    Ok(NormalizationStats {
        input_channels: channels,
        mean: keep.iter().map(|&c| mean[c]).collect(),
        std: keep.iter().map(|&c| std[c]).collect(),
        keep,
        dropped,
    })
}

/// Normalize `windows`, keeping only the retained channels.
pub fn zscore_apply(stats: &NormalizationStats, windows: &[Window]) -> Result<Vec<Window>> {
    windows
        .iter()
        .map(|w| {
            ensure!(
                w.channels == stats.input_channels,
                Dimension,
                "window has {} channels, normalization expects {}",
                w.channels,
                stats.input_channels
            );
            let mut data = Vec::with_capacity(stats.keep.len() * w.len);
            for (i, &c) in stats.keep.iter().enumerate() {
                data.extend(w.channel(c).iter().map(|x| (x - stats.mean[i]) / stats.std[i]));
            }
            Ok(Window {
                channels: stats.keep.len(),
                data,
                ..w.clone()
            })
        })
        .collect()
}
