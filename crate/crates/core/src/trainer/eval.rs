use serde::{Deserialize, Serialize};

use super::metrics::{nasa_score, rmse, Confusion};
use super::{batch_tensor, Checkpoint, Encoder};
use crate::anchors::{Payload, TaskKind};
use crate::avs::{argmax_value, avs_predict_with, classify, PrefixRule, VotingSet};
use crate::data::{zscore_apply, DatasetSplit, Target, Window};
use crate::error::{ensure, KpError, Result};
use crate::exec::{self, Execution};
use crate::kploss::{score_eps, DistanceMode};
use crate::nn::{log_softmax_values, Axis, Tape, Tensor, COSINE_EPS};

/// Windows per forward pass during inference.
const EVAL_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum InferenceMode {
    /// Probability-weighted vote over the top anchors reaching `theta`.
    Avs { theta: f64, rule: PrefixRule },
    /// Value of the single most probable anchor.
    Argmax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prediction {
    Regression {
        value: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        voting_set: Option<VotingSet>,
    },
    Class {
        label: String,
        anchor: usize,
        probability: f64,
    },
}

impl Prediction {
    pub fn value(&self) -> Option<f64> {
        match self {
            Prediction::Regression { value, .. } => Some(*value),
            Prediction::Class { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: TaskKind,
    pub windows: usize,
    pub inference: InferenceMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nasa_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weighted_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    /// Rows are true anchors, columns predicted anchors.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confusion: Option<Confusion>,
    pub params: usize,
    pub macs: u64,
}

impl MetricsReport {
    /// RMSE for regression, macro-F1 for classification.
    pub fn headline(&self) -> f64 {
        match self.task {
            TaskKind::Regression => self.rmse.unwrap_or(f64::NAN),
            TaskKind::Classification => self.macro_f1.unwrap_or(f64::NAN),
        }
    }
}

/// Per-window probability over anchors for already-normalized windows. A
/// zero feature vector scores every anchor alike instead of failing.
pub fn anchor_probabilities(
    encoder: &Encoder,
    aligned: &Tensor,
    distance: DistanceMode,
    logit_scale: f64,
    windows: &[Window],
    exec: Execution,
) -> Result<Vec<Vec<f64>>> {
    let chunks: Vec<&[Window]> = windows.chunks(EVAL_CHUNK).collect();
    let z = aligned.shape()[0];
    let per_chunk = exec::map(exec, &chunks, |chunk| -> Result<Vec<Vec<f64>>> {
        let refs: Vec<&Window> = chunk.iter().collect();
        let mut tape = Tape::new();
        let vars = encoder.bind(&mut tape, false);
        let x = tape.constant(batch_tensor(&refs)?);
        let f = vars.forward(&mut tape, x)?;
        let k = tape.constant(aligned.clone());
        let s = score_eps(&mut tape, f, k, distance, logit_scale, Some(COSINE_EPS))?;
        let logp = log_softmax_values(chunk.len(), z, tape.value(s).data(), Axis::Row);
        Ok(logp.chunks(z).map(|r| r.iter().map(|v| v.exp()).collect()).collect())
    });
    let mut out = Vec::with_capacity(windows.len());
    for c in per_chunk {
        out.extend(c?);
    }
    Ok(out)
}

fn predict_one(
    probs: &[f64],
    payloads: &[Payload],
    values: Option<&[f64]>,
    mode: InferenceMode,
    r_max: Option<f64>,
) -> Result<Prediction> {
    match values {
        Some(values) => {
            let clamp = |v: f64| v.max(0.0).min(r_max.unwrap_or(f64::INFINITY));
            Ok(match mode {
                InferenceMode::Avs { theta, rule } => {
                    let p = avs_predict_with(probs, values, theta, rule)?;
                    Prediction::Regression {
                        value: clamp(p.value),
                        voting_set: Some(p.voting_set),
                    }
                }
                InferenceMode::Argmax => Prediction::Regression {
                    value: clamp(argmax_value(probs, values)?),
                    voting_set: None,
                },
            })
        }
        None => {
            let c = classify(probs, payloads)?;
            Ok(Prediction::Class {
                label: c.payload.label().unwrap_or_default().to_string(),
                anchor: c.anchor,
                probability: c.probability,
            })
        }
    }
}

fn predictions_from_probabilities(
    probs: &[Vec<f64>],
    payloads: &[Payload],
    mode: InferenceMode,
    r_max: Option<f64>,
) -> Result<Vec<Prediction>> {
    let values: Option<Vec<f64>> = payloads.iter().map(Payload::value).collect();
    probs
        .iter()
        .map(|p| predict_one(p, payloads, values.as_deref(), mode, r_max))
        .collect()
}

pub(crate) fn metrics_from_probabilities(
    task: TaskKind,
    probs: &[Vec<f64>],
    payloads: &[Payload],
    windows: &[Window],
    mode: InferenceMode,
    r_max: Option<f64>,
) -> Result<MetricsReport> {
    let preds = predictions_from_probabilities(probs, payloads, mode, r_max)?;
    let mut report = MetricsReport {
        task,
        windows: windows.len(),
        inference: mode,
        rmse: None,
        nasa_score: None,
        macro_f1: None,
        weighted_f1: None,
        accuracy: None,
        confusion: None,
        params: 0,
        macs: 0,
    };
    ensure!(!windows.is_empty(), Data, "nothing to evaluate");
    match task {
        TaskKind::Regression => {
            let truth: Vec<f64> = windows
                .iter()
                .map(|w| match &w.target {
                    Some(Target::Rul(v)) => Ok(*v),
                    _ => Err(KpError::Data(format!("unit {}: window lacks a RUL target", w.unit))),
                })
                .collect::<Result<_>>()?;
            let pred: Vec<f64> = preds.iter().filter_map(Prediction::value).collect();
            report.rmse = Some(rmse(&pred, &truth)?);
            report.nasa_score = Some(nasa_score(&pred, &truth)?);
        }
        TaskKind::Classification => {
            let labels: Vec<String> = payloads
                .iter()
                .map(|p| p.label().unwrap_or_default().to_string())
                .collect();
            let truth: Vec<usize> = windows
                .iter()
                .map(|w| match &w.target {
                    Some(Target::Class(c)) => labels
                        .iter()
                        .position(|l| l == c)
                        .ok_or_else(|| KpError::Data(format!("label {c:?} has no anchor"))),
                    _ => Err(KpError::Data(format!("unit {}: window lacks a class label", w.unit))),
                })
                .collect::<Result<_>>()?;
            let pred: Vec<usize> = preds
                .iter()
                .map(|p| match p {
                    Prediction::Class { anchor, .. } => *anchor,
                    Prediction::Regression { .. } => unreachable!("class payloads"),
                })
                .collect();
            let confusion = Confusion::new(labels, &truth, &pred)?;
            report.macro_f1 = Some(confusion.macro_f1());
            report.weighted_f1 = Some(confusion.weighted_f1());
            report.accuracy = Some(confusion.accuracy());
            report.confusion = Some(confusion);
        }
    }
    Ok(report)
}

impl Checkpoint {
    pub fn default_inference(&self) -> InferenceMode {
        InferenceMode::Avs {
            theta: self.config.theta,
            rule: self.config.prefix_rule,
        }
    }

    fn normalize(&self, windows: &[Window]) -> Result<Vec<Window>> {
        for w in windows {
            ensure!(
                w.len == self.window_len,
                Dimension,
                "unit {}: window length {} but the checkpoint expects {}",
                w.unit,
                w.len,
                self.window_len
            );
        }
        zscore_apply(&self.normalization, windows)
    }

    fn probabilities(&self, windows: &[Window], exec: Execution) -> Result<Vec<Vec<f64>>> {
        let normalized = self.normalize(windows)?;
        anchor_probabilities(
            &self.encoder,
            &self.aligned_anchors,
            self.config.distance,
            self.config.logit_scale,
            &normalized,
            exec,
        )
    }
}

/// Predict raw (unnormalized) windows.
pub fn predict(ckpt: &Checkpoint, windows: &[Window], mode: InferenceMode, exec: Execution) -> Result<Vec<Prediction>> {
    let probs = ckpt.probabilities(windows, exec)?;
    predictions_from_probabilities(&probs, &ckpt.payloads, mode, ckpt.r_max)
}

/// Score the test split with the checkpoint's own inference settings.
pub fn evaluate(ckpt: &Checkpoint, split: &DatasetSplit) -> Result<MetricsReport> {
    ensure!(
        split.meta.task == ckpt.task,
        Usage,
        "{:?} checkpoint cannot evaluate a {:?} split",
        ckpt.task,
        split.meta.task
    );
    evaluate_with(ckpt, &split.test, ckpt.default_inference(), Execution::default())
}

pub fn evaluate_with(
    ckpt: &Checkpoint,
    windows: &[Window],
    mode: InferenceMode,
    exec: Execution,
) -> Result<MetricsReport> {
    let probs = ckpt.probabilities(windows, exec)?;
    let mut report = metrics_from_probabilities(ckpt.task, &probs, &ckpt.payloads, windows, mode, ckpt.r_max)?;
    report.params = count_params(ckpt);
    report.macs = estimate_macs(ckpt, ckpt.window_len);
    Ok(report)
}

/// Trainable parameters: encoder plus alignment module.
pub fn count_params(ckpt: &Checkpoint) -> usize {
    ckpt.encoder.param_count() + ckpt.alignment.param_count()
}

/// Multiply-adds to score one window of `len` timesteps: the encoder plus the
/// similarity against every precomputed aligned anchor.
pub fn estimate_macs(ckpt: &Checkpoint, len: usize) -> u64 {
    let (z, f) = (ckpt.aligned_anchors.shape()[0], ckpt.aligned_anchors.shape()[1]);
    ckpt.encoder.macs(len) + (z * f) as u64
}
