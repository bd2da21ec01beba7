//! Deterministic stand-in embeddings for tests and offline runs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    expand_prompts, AnchorPoint, AnchorSet, AnchorSpec, Payload, PromptTemplate, Provenance,
    ProvenanceKind, TaskKind,
};
use crate::error::{ensure, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PseudoMode {
    /// Independent standard-normal vector per payload.
    Gaussian,
    /// Fixed random projection of smooth value features; numeric payloads only.
    Structured,
}

impl std::str::FromStr for PseudoMode {
    type Err = crate::KpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" | "pseudo-gaussian" => Ok(PseudoMode::Gaussian),
            "structured" | "pseudo-structured" => Ok(PseudoMode::Structured),
            other => Err(crate::KpError::Usage(format!("unknown pseudo mode {other:?}"))),
        }
    }
}

fn keyed_rng(seed: u64, key: &[u8]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(key);
    let digest = h.finalize();
    let mut bytes = [0u8; 32];
    bytes.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(bytes)
}

fn payload_key(p: &Payload) -> Vec<u8> {
    match p {
        Payload::Class(s) => [b"class:".as_slice(), s.as_bytes()].concat(),
        Payload::Value(v) => [b"value:".as_slice(), &v.to_bits().to_le_bytes()].concat(),
    }
}

const STRUCTURED_FEATURES: usize = 5;

fn structured_features(t: f64) -> [f64; STRUCTURED_FEATURES] {
    let pi = std::f64::consts::PI;
    [t, t * t, (pi * t).sin(), (pi * t).cos(), 1.0]
}

/// Embed `payloads` (with their `prompts`) into a deterministic [`AnchorSet`].
pub fn pseudo_embed(
    prompts: &[String],
    payloads: &[Payload],
    dim: usize,
    seed: u64,
    mode: PseudoMode,
) -> Result<AnchorSet> {
    ensure!(dim >= 8, Usage, "pseudo embeddings need dim >= 8, got {dim}");
    ensure!(
        prompts.len() == payloads.len(),
        Usage,
        "{} prompts for {} payloads",
        prompts.len(),
        payloads.len()
    );
    ensure!(!payloads.is_empty(), Usage, "no payloads to embed");
    let embeddings: Vec<Vec<f64>> = match mode {
        PseudoMode::Gaussian => payloads
            .iter()
            .map(|p| {
                let mut rng = keyed_rng(seed, &payload_key(p));
                (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
            })
            .collect(),
        PseudoMode::Structured => {
            let values: Option<Vec<f64>> = payloads.iter().map(Payload::value).collect();
            let values = values.ok_or_else(|| {
                crate::KpError::Usage("structured pseudo embeddings need numeric payloads".into())
            })?;
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let span = if hi > lo { hi - lo } else { 1.0 };
            let mut rng = keyed_rng(seed, b"structured-projection");
            let proj: Vec<f64> = (0..dim * STRUCTURED_FEATURES)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            values
                .iter()
                .map(|v| {
                    let feat = structured_features((v - lo) / span);
                    (0..dim)
                        .map(|r| {
                            let row = &proj[r * STRUCTURED_FEATURES..(r + 1) * STRUCTURED_FEATURES];
                            row.iter().zip(&feat).map(|(a, b)| a * b).sum()
                        })
                        .collect()
                })
                .collect()
        }
    };
    let anchors = payloads
        .iter()
        .zip(prompts)
        .zip(embeddings)
        .enumerate()
        .map(|(id, ((payload, prompt), embedding))| AnchorPoint {
            id,
            payload: payload.clone(),
            embedding,
            prompt: Some(prompt.clone()),
        })
        .collect();
    let mode_name = match mode {
        PseudoMode::Gaussian => "gaussian",
        PseudoMode::Structured => "structured",
    };
    AnchorSet::new(
        dim,
        anchors,
        Provenance {
            kind: ProvenanceKind::Pseudo,
            source: format!("pseudo-{mode_name} seed={seed}"),
        },
        None,
    )
}

/// Expand `template` over `spec` and embed the prompts.
pub fn pseudo_anchor_set(
    template: &PromptTemplate,
    spec: &AnchorSpec,
    dim: usize,
    seed: u64,
    mode: PseudoMode,
) -> Result<AnchorSet> {
    if mode == PseudoMode::Structured {
        ensure!(
            spec.kind() == TaskKind::Regression,
            Usage,
            "structured pseudo embeddings need a numeric range"
        );
    }
    let prompts = expand_prompts(template, spec)?;
    let set = pseudo_embed(&prompts, &spec.payloads(), dim, seed, mode)?;
    AnchorSet::new(
        set.dim(),
        set.anchors().to_vec(),
        set.provenance().clone(),
        Some(template.pattern().to_string()),
    )
}
