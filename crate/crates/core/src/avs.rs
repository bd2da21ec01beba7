//! Anchor voting: turn a distribution over numeric anchors into a continuous
//! prediction.
//!
//! Probabilities are visited in descending order (ties by ascending anchor
//! value) and accumulated until the running sum reaches `theta`. The visited
//! anchors form the voting set, and the prediction is their
//! probability-weighted mean value.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::anchors::Payload;
use crate::error::{ensure, Result};

/// Default voting threshold.
pub const DEFAULT_THETA: f64 = 0.9;

const NORMALIZATION_TOL: f64 = 1e-6;

/// Whether the element whose cumulative sum first reaches `theta` votes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrefixRule {
    #[default]
    Inclusive,
    /// Stop before the crossing element; the top anchor always votes.
    Exclusive,
}

/// One voter: its own probability and the anchor value it stands for.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vote {
    pub anchor: usize,
    pub weight: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VotingSet {
    pub members: Vec<Vote>,
}

impl VotingSet {
    pub fn total_weight(&self) -> f64 {
        self.members.iter().map(|v| v.weight).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionPrediction {
    pub value: f64,
    pub voting_set: VotingSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassPrediction {
    pub anchor: usize,
    pub payload: Payload,
    pub probability: f64,
}

fn validate(scores: &[f64], values: &[f64], theta: f64) -> Result<()> {
    ensure!(
        theta > 0.0 && theta <= 1.0,
        Usage,
        "theta must lie in (0, 1], got {theta}"
    );
    validate_scores(scores)?;
    ensure!(
        scores.len() == values.len(),
        Usage,
        "{} scores for {} anchor values",
        scores.len(),
        values.len()
    );
    ensure!(
        values.iter().all(|v| v.is_finite()),
        Data,
        "anchor values must be finite"
    );
    Ok(())
}

fn validate_scores(scores: &[f64]) -> Result<()> {
    ensure!(!scores.is_empty(), Data, "empty score vector");
    ensure!(
        scores.iter().all(|p| p.is_finite() && *p >= 0.0),
        Data,
        "scores must be finite and non-negative"
    );
    let total: f64 = scores.iter().sum();
    ensure!(
        (total - 1.0).abs() <= NORMALIZATION_TOL,
        Data,
        "scores sum to {total}, expected 1"
    );
    Ok(())
}

/// Descending probability, then ascending value, then ascending index.
fn vote_order(a: &Vote, b: &Vote) -> Ordering {
    b.weight
        .total_cmp(&a.weight)
        .then(a.value.total_cmp(&b.value))
        .then(a.anchor.cmp(&b.anchor))
}

struct HeapEntry(Vote);

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        vote_order(&self.0, &other.0) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    // BinaryHeap pops the greatest element; the first vote must be greatest.
    fn cmp(&self, other: &Self) -> Ordering {
        vote_order(&other.0, &self.0)
    }
}

fn weighted_mean(members: &[Vote]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for v in members {
        num += v.weight * v.value;
        den += v.weight;
    }
    num / den
}

/// Voting-set prediction. Anchors are pulled lazily from a heap, so only the
/// voting prefix is ever ordered.
pub fn avs_predict(scores: &[f64], values: &[f64], theta: f64) -> Result<RegressionPrediction> {
    avs_predict_with(scores, values, theta, PrefixRule::Inclusive)
}

pub fn avs_predict_with(
    scores: &[f64],
    values: &[f64],
    theta: f64,
    rule: PrefixRule,
) -> Result<RegressionPrediction> {
    validate(scores, values, theta)?;
    let mut heap: BinaryHeap<HeapEntry> = scores
        .iter()
        .zip(values)
        .enumerate()
        .map(|(anchor, (&weight, &value))| {
            HeapEntry(Vote {
                anchor,
                weight,
                value,
            })
        })
        .collect();
    let mut members = Vec::new();
    let mut cumulative = 0.0;
    while let Some(HeapEntry(vote)) = heap.pop() {
        let next = cumulative + vote.weight;
        if rule == PrefixRule::Exclusive && next >= theta && !members.is_empty() {
            break;
        }
        members.push(vote);
        cumulative = next;
        if cumulative >= theta {
            break;
        }
    }
    Ok(RegressionPrediction {
        value: weighted_mean(&members),
        voting_set: VotingSet { members },
    })
}

/// Reference implementation of [`avs_predict`]: sort everything, scan the
/// cumulative sums, average naively.
pub fn avs_oracle(scores: &[f64], values: &[f64], theta: f64) -> Result<RegressionPrediction> {
    avs_oracle_with(scores, values, theta, PrefixRule::Inclusive)
}

pub fn avs_oracle_with(
    scores: &[f64],
    values: &[f64],
    theta: f64,
    rule: PrefixRule,
) -> Result<RegressionPrediction> {
    validate(scores, values, theta)?;
    let mut sorted: Vec<Vote> = (0..scores.len())
        .map(|i| Vote {
            anchor: i,
            weight: scores[i],
            value: values[i],
        })
        .collect();
    sorted.sort_by(vote_order);
    let mut cumsum = Vec::with_capacity(sorted.len());
    let mut acc = 0.0;
    for v in &sorted {
        acc += v.weight;
        cumsum.push(acc);
    }
    let crossing = cumsum.iter().position(|&c| c >= theta);
    let len = match (crossing, rule) {
        (None, _) => sorted.len(),
        (Some(k), PrefixRule::Inclusive) => k + 1,
        (Some(k), PrefixRule::Exclusive) => k.max(1),
    };
    let members = sorted[..len].to_vec();
    let num: f64 = members.iter().fold(0.0, |s, v| s + v.weight * v.value);
    let den: f64 = members.iter().fold(0.0, |s, v| s + v.weight);
    Ok(RegressionPrediction {
        value: num / den,
        voting_set: VotingSet { members },
    })
}

/// Value of the single most probable anchor (the argmax alternative to voting).
pub fn argmax_value(scores: &[f64], values: &[f64]) -> Result<f64> {
    validate(scores, values, 1.0)?;
    Ok(values[argmax(scores)])
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in scores.iter().enumerate() {
        if p > scores[best] {
            best = i;
        }
    }
    best
}

/// Payload of the most probable anchor; ties go to the lowest index.
pub fn classify(scores: &[f64], payloads: &[Payload]) -> Result<ClassPrediction> {
    validate_scores(scores)?;
    ensure!(
        scores.len() == payloads.len(),
        Usage,
        "{} scores for {} payloads",
        scores.len(),
        payloads.len()
    );
    let best = argmax(scores);
    Ok(ClassPrediction {
        anchor: best,
        payload: payloads[best].clone(),
        probability: scores[best],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::KpError;
    use proptest::prelude::*;

    fn labels(names: &[&str]) -> Vec<Payload> {
        names.iter().map(|s| Payload::Class(s.to_string())).collect()
    }

    #[test]
    fn one_hot_returns_its_value() {
        let p = avs_predict(&[1.0, 0.0, 0.0], &[10.0, 20.0, 30.0], 0.9).unwrap();
        assert_eq!(p.value, 10.0);
        assert_eq!(p.voting_set.members.len(), 1);
    }

    #[test]
    fn hand_example() {
        let scores = [0.5, 0.3, 0.15, 0.05];
        let values = [10.0, 20.0, 30.0, 40.0];
        for p in [
            avs_predict(&scores, &values, 0.9).unwrap(),
            avs_oracle(&scores, &values, 0.9).unwrap(),
        ] {
            assert_eq!(p.voting_set.members.len(), 3);
            assert!((p.value - 15.5 / 0.95).abs() < 1e-12);
            assert!((p.value - 16.3158).abs() < 1e-4);
        }
    }

    #[test]
    fn uniform_full_threshold_is_midpoint() {
        let values: Vec<f64> = (0..126).map(f64::from).collect();
        let scores = vec![1.0 / 126.0; 126];
        let p = avs_predict(&scores, &values, 1.0).unwrap();
        assert!((p.value - 62.5).abs() < 1e-9);
    }

    #[test]
    fn tiny_theta_takes_top_anchor() {
        let p = avs_oracle(&[0.2, 0.5, 0.3], &[1.0, 2.0, 3.0], 1e-9).unwrap();
        assert_eq!(p.value, 2.0);
        let p = avs_predict(&[0.2, 0.5, 0.3], &[1.0, 2.0, 3.0], 1e-9).unwrap();
        assert_eq!(p.value, 2.0);
    }

    #[test]
    fn ties_prefer_lower_values() {
        let p = avs_predict(&[0.5, 0.5], &[7.0, 3.0], 0.4).unwrap();
        assert_eq!(p.value, 3.0);
    }

    #[test]
    fn exclusive_rule_stops_before_crossing() {
        let scores = [0.5, 0.3, 0.15, 0.05];
        let values = [10.0, 20.0, 30.0, 40.0];
        let p = avs_predict_with(&scores, &values, 0.9, PrefixRule::Exclusive).unwrap();
        let q = avs_oracle_with(&scores, &values, 0.9, PrefixRule::Exclusive).unwrap();
        assert_eq!(p, q);
        assert_eq!(p.voting_set.members.len(), 2);
        let p = avs_predict_with(&scores, &values, 0.4, PrefixRule::Exclusive).unwrap();
        assert_eq!(p.value, 10.0);
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(avs_predict(&[1.0], &[0.0], 0.0), Err(KpError::Usage(_))));
        assert!(matches!(avs_predict(&[1.0], &[0.0], 1.5), Err(KpError::Usage(_))));
        assert!(matches!(avs_predict(&[0.7, 0.7], &[0.0, 1.0], 0.9), Err(KpError::Data(_))));
        assert!(matches!(avs_predict(&[1.2, -0.2], &[0.0, 1.0], 0.9), Err(KpError::Data(_))));
    }

    #[test]
    fn classify_examples() {
        let p = classify(&[0.1, 0.7, 0.2], &labels(&["walk", "sit", "stand"])).unwrap();
        assert_eq!(p.payload, Payload::Class("sit".into()));
        let p = classify(&[0.5, 0.5], &labels(&["a", "b"])).unwrap();
        assert_eq!(p.anchor, 0);
        let p = classify(&[0.0, 0.0, 1.0], &labels(&["a", "b", "c"])).unwrap();
        assert_eq!(p.payload, Payload::Class("c".into()));
    }

    fn scores_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, 1..64).prop_map(|raw| {
            let s: f64 = raw.iter().sum::<f64>() + 1e-9;
            raw.iter().map(|v| (v + 1e-9 / raw.len() as f64) / s).collect()
        })
    }

    proptest! {
        #[test]
        fn theta_monotone_subsets(scores in scores_strategy(), a in 0.01f64..1.0, b in 0.01f64..1.0) {
            let values: Vec<f64> = (0..scores.len()).map(|i| i as f64).collect();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let small = avs_predict(&scores, &values, lo).unwrap();
            let large = avs_predict(&scores, &values, hi).unwrap();
            let n = small.voting_set.members.len();
            prop_assert!(n <= large.voting_set.members.len());
            prop_assert_eq!(&small.voting_set.members[..], &large.voting_set.members[..n]);
        }

        #[test]
        fn prediction_bounded_by_voters(scores in scores_strategy(), theta in 0.01f64..=1.0) {
            let values: Vec<f64> = (0..scores.len()).map(|i| (i * 7 % 13) as f64).collect();
            let p = avs_predict(&scores, &values, theta).unwrap();
            let lo = p.voting_set.members.iter().map(|v| v.value).fold(f64::INFINITY, f64::min);
            let hi = p.voting_set.members.iter().map(|v| v.value).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(p.value >= lo - 1e-12 && p.value <= hi + 1e-12);
            let total = p.voting_set.total_weight();
            prop_assert!(total >= theta - 1e-9 || p.voting_set.members.len() == scores.len());
        }

        #[test]
        fn joint_permutation_invariance(scores in scores_strategy(), theta in 0.01f64..=1.0, seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let values: Vec<f64> = (0..scores.len()).map(|i| i as f64 * 1.5).collect();
            let mut idx: Vec<usize> = (0..scores.len()).collect();
            idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let ps: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
            let pv: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
            let a = avs_predict(&scores, &values, theta).unwrap().value;
            let b = avs_predict(&ps, &pv, theta).unwrap().value;
            prop_assert!((a - b).abs() <= 1e-12);
        }

        #[test]
        fn matches_oracle(scores in scores_strategy(), theta in 0.01f64..=1.0) {
            let values: Vec<f64> = (0..scores.len()).map(|i| i as f64).collect();
            for rule in [PrefixRule::Inclusive, PrefixRule::Exclusive] {
                let a = avs_predict_with(&scores, &values, theta, rule).unwrap();
                let b = avs_oracle_with(&scores, &values, theta, rule).unwrap();
                prop_assert!((a.value - b.value).abs() <= 1e-12);
                prop_assert_eq!(a.voting_set, b.voting_set);
            }
        }
    }
}
