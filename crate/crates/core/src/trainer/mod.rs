//! Training loop, evaluation, metrics and checkpoints.

mod checkpoint;
mod config;
mod encoder;
mod eval;
mod metrics;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{AnchorSource, TrainConfig, WindowParams};
pub use encoder::{Encoder, EncoderSpec, EncoderVars};
pub use eval::{
    anchor_probabilities, count_params, estimate_macs, evaluate, evaluate_with, predict, InferenceMode,
    MetricsReport, Prediction,
};
pub use metrics::{nasa_score, nasa_term, rmse, ClassScore, Confusion};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anchors::{assign_targets, AnchorSet, Payload, TaskKind};
use crate::data::{zscore_apply, zscore_fit, DatasetSplit, Window};
use crate::error::{ensure, KpError, Result};
use crate::exec::Execution;
use crate::kploss::{align_anchors, bidirectional_distributions, kp_loss, score, target_distribution, AlignmentModule};
use crate::nn::{Adam, AdamConfig, Tape, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Validation RMSE (regression) or macro-F1 (classification).
    pub val_metric: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

/// Stack windows into a `[B × C × L]` tensor.
pub fn batch_tensor(windows: &[&Window]) -> Result<Tensor> {
    ensure!(!windows.is_empty(), Usage, "empty batch");
    let (c, l) = (windows[0].channels, windows[0].len);
    let mut data = Vec::with_capacity(windows.len() * c * l);
    for w in windows {
        ensure!(
            w.channels == c && w.len == l,
            Dimension,
            "window shape {}×{} differs from {c}×{l}",
            w.channels,
            w.len
        );
        data.extend_from_slice(&w.data);
    }
    Tensor::new(vec![windows.len(), c, l], data)
}

fn target_payloads(windows: &[Window]) -> Result<Vec<Payload>> {
    windows
        .iter()
        .map(|w| {
            w.target
                .as_ref()
                .map(|t| t.payload())
                .ok_or_else(|| KpError::Data(format!("unit {}: window has no target", w.unit)))
        })
        .collect()
}

/// Lower is better for RMSE, higher for F1.
fn improves(task: TaskKind, new: f64, best: f64) -> bool {
    match task {
        TaskKind::Regression => new < best,
        TaskKind::Classification => new > best,
    }
}

fn aligned_anchor_matrix(alignment: &AlignmentModule, anchors: &AnchorSet) -> Result<Tensor> {
    let mut tape = Tape::new();
    let phi = alignment.bind(&mut tape, false);
    let k = align_anchors(&mut tape, &phi, anchors)?;
    Ok(tape.value(k).clone())
}

/// Numeric error carrying the last batch's feature norms and score range.
fn divergence(what: &str, epoch: usize, batch: usize, features: &Tensor, scores: Option<&Tensor>) -> KpError {
    let range = |it: &mut dyn Iterator<Item = f64>| {
        it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let rows = features.shape()[0];
    let (nlo, nhi) = range(&mut (0..rows).map(|r| features.row(r).iter().map(|v| v * v).sum::<f64>().sqrt()));
    let mut msg = format!("{what} at epoch {epoch}, batch {batch}: feature norms in [{nlo:.3e}, {nhi:.3e}]");
    if let Some(s) = scores {
        let (lo, hi) = range(&mut s.data().iter().copied());
        msg.push_str(&format!(", scores in [{lo:.3e}, {hi:.3e}]"));
    }
    KpError::Numeric(msg)
}

pub fn train(config: &TrainConfig, split: &DatasetSplit, anchors: &AnchorSet) -> Result<Checkpoint> {
    train_observed(config, split, anchors, |_| {})
}

/// Train, calling `on_epoch` after every epoch.
pub fn train_observed(
    config: &TrainConfig,
    split: &DatasetSplit,
    anchors: &AnchorSet,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<Checkpoint> {
    config.validate()?;
    let task = split.meta.task;
    ensure!(
        anchors.kind() == task,
        Usage,
        "{:?} anchors cannot train a {:?} task",
        anchors.kind(),
        task
    );
    let stats = zscore_fit(&split.train)?;
    let train_w = zscore_apply(&stats, &split.train)?;
    let val_w = zscore_apply(&stats, &split.validation)?;
    let assignments = assign_targets(&target_payloads(&train_w)?, anchors)?;
    let (channels, len) = (train_w[0].channels, train_w[0].len);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut encoder = Encoder::init(&config.encoder, &mut rng, channels, len)?;
    let hidden = config.align_hidden.unwrap_or(encoder.feature_dim());
    let mut alignment = AlignmentModule::init(&mut rng, anchors.dim(), hidden, encoder.feature_dim());
    let adam_cfg = AdamConfig {
        learning_rate: config.learning_rate,
        ..AdamConfig::default()
    };
    let mut adam = {
        let mut p = encoder.params();
        p.extend(alignment.params());
        Adam::new(adam_cfg, &p)
    };

    let mut history = History::default();
    let mut best: Option<(f64, Encoder, AlignmentModule)> = None;
    let mut since_best = 0usize;
    let mut order: Vec<usize> = (0..train_w.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            if chunk.len() < 2 {
                continue;
            }
            let windows: Vec<&Window> = chunk.iter().map(|&i| &train_w[i]).collect();
            let batch_assign: Vec<usize> = chunk.iter().map(|&i| assignments[i]).collect();
            let mut tape = Tape::new();
            let enc_vars = encoder.bind(&mut tape, true);
            let phi = alignment.bind(&mut tape, true);
            let x = tape.constant(batch_tensor(&windows)?);
            let f = enc_vars.forward(&mut tape, x)?;
            if !tape.value(f).is_finite() {
                return Err(divergence("features are not finite", epoch, bi, tape.value(f), None));
            }
            let k = align_anchors(&mut tape, &phi, anchors)?;
            let s = score(&mut tape, f, k, config.distance, config.logit_scale)?;
            let pair = bidirectional_distributions(&mut tape, s)?;
            let targets = target_distribution(&batch_assign, anchors.len(), config.tau)?;
            let loss = kp_loss(&mut tape, &pair, &targets, config.kl_direction)?;
            let value = tape.value(loss).data()[0];
            if !value.is_finite() {
                let what = format!("loss is {value}");
                return Err(divergence(&what, epoch, bi, tape.value(f), Some(tape.value(s))));
            }
            let grads = tape.backward(loss)?;
            let mut vars = enc_vars.vars();
            vars.extend(phi.vars());
            let g: Vec<Option<&Tensor>> = vars.iter().map(|&v| grads.get(v)).collect();
            let mut params = encoder.params_mut();
            params.extend(alignment.params_mut());
            adam.step(&mut params, &g)?;
            loss_sum += value;
            batches += 1;
        }
        ensure!(batches > 0, Data, "training split yields no batch of at least 2 windows");

        let val_metric = if val_w.is_empty() {
            None
        } else {
            let aligned = aligned_anchor_matrix(&alignment, anchors)?;
            let probs = anchor_probabilities(
                &encoder,
                &aligned,
                config.distance,
                config.logit_scale,
                &val_w,
                Execution::default(),
            )?;
            let mode = InferenceMode::Avs {
                theta: config.theta,
                rule: config.prefix_rule,
            };
            let report = eval::metrics_from_probabilities(
                task,
                &probs,
                &anchors.payloads(),
                &val_w,
                mode,
                split.meta.r_max,
            )?;
            Some(report.headline())
        };
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            val_metric,
        };
        on_epoch(&record);
        history.epochs.push(record);

        if let Some(m) = val_metric {
            if best.as_ref().is_none_or(|(b, _, _)| improves(task, m, *b)) {
                best = Some((m, encoder.clone(), alignment.clone()));
                history.best_epoch = Some(epoch);
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= config.patience {
                    history.stopped_early = epoch < config.epochs;
                    break;
                }
            }
        }
    }
    if let Some((_, e, a)) = best {
        encoder = e;
        alignment = a;
    } else {
        history.best_epoch = history.epochs.last().map(|r| r.epoch);
    }

    let aligned = aligned_anchor_matrix(&alignment, anchors)?;
    Ok(Checkpoint {
        version: CHECKPOINT_VERSION,
        task,
        config: config.clone(),
        encoder,
        alignment,
        aligned_anchors: aligned,
        payloads: anchors.payloads(),
        anchor_provenance: anchors.provenance().clone(),
        normalization: stats,
        window_len: len,
        channel_names: split.meta.channel_names.clone(),
        classes: split.meta.classes.clone(),
        r_max: split.meta.r_max,
        history,
    })
}
