//! Knowledge distillation objective.
//!
//! Anchors are mapped into the encoder's feature space by a two-layer
//! [`AlignmentModule`]. Features and aligned anchors are scored against each
//! other; the score matrix is normalized twice, once over anchors per sample
//! (`p_t`) and once over samples per anchor (`p_l`). Both are pulled towards a
//! temperature-sharpened one-hot target with a KL divergence, each term
//! weighted one half.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::anchors::AnchorSet;
use crate::error::{ensure, Result};
use crate::nn::{log_softmax_values, AffineLayer, AffineVars, Axis, KlDirection, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    #[default]
    Cosine,
    NegEuclidean,
}

/// Two affine layers with a ReLU between them, `[D] -> [H] -> [F]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentModule {
    pub layer1: AffineLayer,
    pub layer2: AffineLayer,
}

#[derive(Clone, Copy, Debug)]
pub struct AlignmentVars {
    pub layer1: AffineVars,
    pub layer2: AffineVars,
}

impl AlignmentModule {
    pub fn new(layer1: AffineLayer, layer2: AffineLayer) -> Result<Self> {
        ensure!(
            layer1.out_dim() == layer2.in_dim(),
            Dimension,
            "alignment hidden widths disagree: {} vs {}",
            layer1.out_dim(),
            layer2.in_dim()
        );
        Ok(AlignmentModule { layer1, layer2 })
    }

    pub fn init<R: Rng + ?Sized>(rng: &mut R, anchor_dim: usize, hidden: usize, feature_dim: usize) -> Self {
        AlignmentModule {
            layer1: AffineLayer::init(rng, anchor_dim, hidden),
            layer2: AffineLayer::init(rng, hidden, feature_dim),
        }
    }

    pub fn anchor_dim(&self) -> usize {
        self.layer1.in_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.layer2.out_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layer1.param_count() + self.layer2.param_count()
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> AlignmentVars {
        AlignmentVars {
            layer1: self.layer1.bind(tape, trainable),
            layer2: self.layer2.bind(tape, trainable),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut p = self.layer1.params();
        p.extend(self.layer2.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.layer1.params_mut();
        p.extend(self.layer2.params_mut());
        p
    }
}

impl AlignmentVars {
    pub fn vars(&self) -> Vec<Var> {
        let mut v = self.layer1.vars().to_vec();
        v.extend(self.layer2.vars());
        v
    }
}

/// Map every anchor embedding through the alignment module: `[Z × D] -> [Z × F]`.
pub fn align_anchors(tape: &mut Tape, phi: &AlignmentVars, set: &AnchorSet) -> Result<Var> {
    let expected = tape.value(phi.layer1.weight).shape()[1];
    ensure!(
        set.dim() == expected,
        Dimension,
        "anchor dimension {} does not match alignment input {expected}",
        set.dim()
    );
    let z = tape.constant(set.embedding_matrix());
    align_embeddings(tape, phi, z)
}

pub fn align_embeddings(tape: &mut Tape, phi: &AlignmentVars, z: Var) -> Result<Var> {
    let h = phi.layer1.forward(tape, z)?;
    let h = tape.relu(h);
    phi.layer2.forward(tape, h)
}

/// Score every feature row against every aligned anchor: `[B × Z]`.
///
/// The result is multiplied by `logit_scale`. A zero-norm row is an error.
pub fn score(
    tape: &mut Tape,
    features: Var,
    aligned: Var,
    mode: DistanceMode,
    logit_scale: f64,
) -> Result<Var> {
    score_eps(tape, features, aligned, mode, logit_scale, None)
}

/// [`score`] with cosine norms clamped from below at `eps` when given.
pub fn score_eps(
    tape: &mut Tape,
    features: Var,
    aligned: Var,
    mode: DistanceMode,
    logit_scale: f64,
    eps: Option<f64>,
) -> Result<Var> {
    let s = match mode {
        DistanceMode::Cosine => tape.cosine_matrix(features, aligned, eps)?,
        DistanceMode::NegEuclidean => tape.neg_sq_dist(features, aligned)?,
    };
    Ok(if logit_scale == 1.0 { s } else { tape.scale(s, logit_scale) })
}

/// Row (`p_t`, over anchors) and column (`p_l`, over samples) log-distributions.
#[derive(Clone, Copy, Debug)]
pub struct DistributionPair {
    pub per_sample: Var,
    pub per_anchor: Var,
}

pub fn bidirectional_distributions(tape: &mut Tape, scores: Var) -> Result<DistributionPair> {
    Ok(DistributionPair {
        per_sample: tape.log_softmax(scores, Axis::Row)?,
        per_anchor: tape.log_softmax(scores, Axis::Column)?,
    })
}

/// Temperature-sharpened ground truth, normalized along both axes.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetDistribution {
    pub tau: f64,
    /// Rows are distributions over anchors.
    pub row: Tensor,
    pub row_log: Tensor,
    /// Columns are distributions over samples.
    pub col: Tensor,
    pub col_log: Tensor,
}

pub fn target_distribution(assignments: &[usize], anchors: usize, tau: f64) -> Result<TargetDistribution> {
    ensure!(tau > 0.0 && tau.is_finite(), Usage, "temperature must be positive, got {tau}");
    ensure!(!assignments.is_empty(), Usage, "empty batch");
    ensure!(anchors > 0, Usage, "no anchors");
    let b = assignments.len();
    let mut logits = vec![0.0; b * anchors];
    for (i, &a) in assignments.iter().enumerate() {
        ensure!(a < anchors, Usage, "assignment {a} out of range for {anchors} anchors");
        logits[i * anchors + a] = tau;
    }
    let row_log = log_softmax_values(b, anchors, &logits, Axis::Row);
    let col_log = log_softmax_values(b, anchors, &logits, Axis::Column);
    let shape = vec![b, anchors];
    Ok(TargetDistribution {
        tau,
        row: Tensor::new(shape.clone(), row_log.iter().map(|v| v.exp()).collect())?,
        row_log: Tensor::new(shape.clone(), row_log)?,
        col: Tensor::new(shape.clone(), col_log.iter().map(|v| v.exp()).collect())?,
        col_log: Tensor::new(shape, col_log)?,
    })
}

/// `0.5·KL(rows) + 0.5·KL(columns)`, each averaged over its distributions.
pub fn kp_loss(
    tape: &mut Tape,
    pair: &DistributionPair,
    targets: &TargetDistribution,
    direction: KlDirection,
) -> Result<Var> {
    let rows = tape.kl_divergence(
        targets.row.clone(),
        targets.row_log.clone(),
        pair.per_sample,
        Axis::Row,
        direction,
    )?;
    let cols = tape.kl_divergence(
        targets.col.clone(),
        targets.col_log.clone(),
        pair.per_anchor,
        Axis::Column,
        direction,
    )?;
    tape.weighted_sum(rows, 0.5, cols, 0.5)
}
