use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Asymmetric prognostics penalty; `d = prediction − target`.
pub fn nasa_term(d: f64) -> f64 {
    if d >= 0.0 {
        (d / 10.0).exp() - 1.0
    } else {
        (-d / 13.0).exp() - 1.0
    }
}

pub fn nasa_score(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    ensure!(
        predictions.len() == targets.len(),
        Usage,
        "{} predictions for {} targets",
        predictions.len(),
        targets.len()
    );
    Ok(predictions.iter().zip(targets).map(|(p, t)| nasa_term(p - t)).sum())
}

pub fn rmse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    ensure!(
        predictions.len() == targets.len(),
        Usage,
        "{} predictions for {} targets",
        predictions.len(),
        targets.len()
    );
    ensure!(!targets.is_empty(), Usage, "rmse of an empty set");
    let sse: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t).powi(2)).sum();
    Ok((sse / targets.len() as f64).sqrt())
}

/// Square confusion matrix, rows are true classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub label: String,
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Confusion {
    /// `truth` and `predicted` index into `labels`.
    pub fn new(labels: Vec<String>, truth: &[usize], predicted: &[usize]) -> Result<Self> {
        ensure!(truth.len() == predicted.len(), Usage, "label vectors differ in length");
        let k = labels.len();
        let mut counts = vec![vec![0; k]; k];
        for (&t, &p) in truth.iter().zip(predicted) {
            ensure!(t < k && p < k, Usage, "class index out of range");
            counts[t][p] += 1;
        }
        Ok(Confusion { labels, counts })
    }

    /// Per-class scores; an undefined ratio (0/0) counts as 0.
    pub fn per_class(&self) -> Vec<ClassScore> {
        let k = self.labels.len();
        (0..k)
            .map(|c| {
                let tp = self.counts[c][c] as f64;
                let support: usize = self.counts[c].iter().sum();
                let predicted: usize = (0..k).map(|r| self.counts[r][c]).sum();
                let ratio = |n: f64, d: usize| if d == 0 { 0.0 } else { n / d as f64 };
                let precision = ratio(tp, predicted);
                let recall = ratio(tp, support);
                let f1 = if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                };
                ClassScore {
                    label: self.labels[c].clone(),
                    support,
                    precision,
                    recall,
                    f1,
                }
            })
            .collect()
    }

    /// Unweighted mean F1 over all classes.
    pub fn macro_f1(&self) -> f64 {
        let s = self.per_class();
        s.iter().map(|c| c.f1).sum::<f64>() / s.len() as f64
    }

    /// Support-weighted mean F1.
    pub fn weighted_f1(&self) -> f64 {
        let s = self.per_class();
        let total: usize = s.iter().map(|c| c.support).sum();
        if total == 0 {
            return 0.0;
        }
        s.iter().map(|c| c.f1 * c.support as f64).sum::<f64>() / total as f64
    }

    pub fn accuracy(&self) -> f64 {
        let total: usize = self.counts.iter().flatten().sum();
        let hit: usize = (0..self.labels.len()).map(|c| self.counts[c][c]).sum();
        if total == 0 { 0.0 } else { hit as f64 / total as f64 }
    }
}
