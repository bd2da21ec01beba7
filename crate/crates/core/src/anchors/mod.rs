//! Knowledge prompts and the anchor embeddings derived from them.
//!
//! A [`PromptTemplate`] expanded over an [`AnchorSpec`] yields one prompt per
//! class label or per value of a numeric grid. Each prompt's text embedding,
//! tagged with the payload it describes, is an [`AnchorPoint`].

mod file;
mod pseudo;

pub use file::{load_anchor_file, parse_anchor_file, render_anchor_file, save_anchor_file};
pub use pseudo::{pseudo_anchor_set, pseudo_embed, PseudoMode};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, KpError, Result};
use crate::nn::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classification,
    Regression,
}

pub const REGRESSION_TEMPLATE: &str = "The remaining useful life is {num}.";
pub const CLASSIFICATION_TEMPLATE: &str = "The subject is {action}.";

/// Prompt text with exactly one `{name}` placeholder.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pattern: String,
    kind: TaskKind,
}

impl PromptTemplate {
    pub fn new(pattern: impl Into<String>, kind: TaskKind) -> Result<Self> {
        let pattern = pattern.into();
        ensure!(!pattern.is_empty(), Usage, "prompt template is empty");
        let opens = pattern.matches('{').count();
        let closes = pattern.matches('}').count();
        let well_formed = pattern
            .find('{')
            .and_then(|s| pattern[s..].find('}').map(|e| e > 1))
            .unwrap_or(false);
        ensure!(
            opens == 1 && closes == 1 && well_formed,
            Usage,
            "prompt template must contain exactly one {{placeholder}}: {pattern:?}"
        );
        Ok(PromptTemplate { pattern, kind })
    }

    pub fn regression() -> Self {
        PromptTemplate::new(REGRESSION_TEMPLATE, TaskKind::Regression).expect("valid template")
    }

    pub fn classification() -> Self {
        PromptTemplate::new(CLASSIFICATION_TEMPLATE, TaskKind::Classification)
            .expect("valid template")
    }

    pub fn pattern(&self) -> &str {
        &self.pattern
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    pub fn render(&self, fill: &str) -> String {
        let start = self.pattern.find('{').expect("validated");
        let end = self.pattern.find('}').expect("validated");
        format!("{}{}{}", &self.pattern[..start], fill, &self.pattern[end + 1..])
    }
}

/// Evenly spaced numeric grid `y_min, y_min + step, …, y_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumericRange {
    pub y_min: f64,
    pub y_max: f64,
    pub step: f64,
}

impl NumericRange {
    pub fn new(y_min: f64, y_max: f64, step: f64) -> Result<Self> {
        ensure!(
            y_min.is_finite() && y_max.is_finite() && step.is_finite(),
            Usage,
            "numeric range must be finite"
        );
        ensure!(y_min < y_max, Usage, "range needs y_min < y_max, got {y_min}..{y_max}");
        ensure!(step > 0.0, Usage, "range step must be positive, got {step}");
        let q = (y_max - y_min) / step;
        ensure!(
            (q - q.round()).abs() <= 1e-9 * q.max(1.0),
            Usage,
            "range {y_min}..{y_max} is not a whole number of steps of {step}"
        );
        Ok(NumericRange { y_min, y_max, step })
    }

    /// Parse `MIN:MAX:STEP`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(':').collect();
        ensure!(parts.len() == 3, Usage, "range must look like MIN:MAX:STEP, got {text:?}");
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| KpError::Usage(format!("bad number {s:?} in range {text:?}")))
        };
        NumericRange::new(num(parts[0])?, num(parts[1])?, num(parts[2])?)
    }

    pub fn count(&self) -> usize {
        ((self.y_max - self.y_min) / self.step).round() as usize + 1
    }

    /// Grid values, rounded to the decimal precision of the range bounds.
    pub fn values(&self) -> Vec<f64> {
        let decimals = [self.y_min, self.y_max, self.step]
            .iter()
            .map(|v| decimal_places(*v))
            .max()
            .unwrap_or(0)
            .min(15);
        let p = 10f64.powi(decimals as i32);
        (0..self.count())
            .map(|i| {
                let v = self.y_min + i as f64 * self.step;
                let r = (v * p).round() / p;
                if r == 0.0 {
                    0.0
                } else {
                    r
                }
            })
            .collect()
    }
}

fn decimal_places(v: f64) -> usize {
    let s = format!("{v}");
    s.split_once('.').map_or(0, |(_, frac)| frac.len())
}

/// Minimal decimal rendering: `0`, `1`, `12.5`.
pub fn format_value(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorSpec {
    Classes(Vec<String>),
    Range(NumericRange),
}

impl AnchorSpec {
    pub fn classes<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let names: Vec<String> = names.iter().map(|s| s.as_ref().trim().to_string()).collect();
        ensure!(!names.is_empty(), Usage, "class list is empty");
        ensure!(
            names.iter().all(|n| !n.is_empty()),
            Usage,
            "class names must be non-empty"
        );
        for (i, n) in names.iter().enumerate() {
            ensure!(
                !names[..i].contains(n),
                Usage,
                "duplicate class name {n:?}"
            );
        }
        Ok(AnchorSpec::Classes(names))
    }

    pub fn kind(&self) -> TaskKind {
        match self {
            AnchorSpec::Classes(_) => TaskKind::Classification,
            AnchorSpec::Range(_) => TaskKind::Regression,
        }
    }

    pub fn payloads(&self) -> Vec<Payload> {
        match self {
            AnchorSpec::Classes(c) => c.iter().cloned().map(Payload::Class).collect(),
            AnchorSpec::Range(r) => r.values().into_iter().map(Payload::Value).collect(),
        }
    }
}

/// What an anchor's prompt describes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    Class(String),
    Value(f64),
}

impl Payload {
    pub fn kind(&self) -> TaskKind {
        match self {
            Payload::Class(_) => TaskKind::Classification,
            Payload::Value(_) => TaskKind::Regression,
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Payload::Value(v) => Some(*v),
            Payload::Class(_) => None,
        }
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            Payload::Class(s) => Some(s),
            Payload::Value(_) => None,
        }
    }

    /// Text substituted into the prompt template.
    pub fn prompt_fill(&self) -> String {
        match self {
            Payload::Class(s) => s.clone(),
            Payload::Value(v) => format_value(*v),
        }
    }
}

impl std::fmt::Display for Payload {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.prompt_fill())
    }
}

/// Expand a template over every class or grid value, in spec order.
pub fn expand_prompts(template: &PromptTemplate, spec: &AnchorSpec) -> Result<Vec<String>> {
    ensure!(
        template.kind() == spec.kind(),
        Usage,
        "a {:?} template cannot be expanded over a {:?} anchor spec",
        template.kind(),
        spec.kind()
    );
    Ok(spec
        .payloads()
        .iter()
        .map(|p| template.render(&p.prompt_fill()))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProvenanceKind {
    Pseudo,
    External,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub kind: ProvenanceKind,
    pub source: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorPoint {
    pub id: usize,
    pub payload: Payload,
    pub embedding: Vec<f64>,
    /// Prompt text the embedding was computed from, when known.
    pub prompt: Option<String>,
}

/// Immutable, validated collection of anchor points sharing one dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    dim: usize,
    anchors: Vec<AnchorPoint>,
    provenance: Provenance,
    template: Option<String>,
}

impl AnchorSet {
    pub fn new(
        dim: usize,
        anchors: Vec<AnchorPoint>,
        provenance: Provenance,
        template: Option<String>,
    ) -> Result<Self> {
        let set = Self::new_unordered(dim, anchors, provenance, template)?;
        if set.kind() == TaskKind::Regression {
            for w in set.anchors.windows(2) {
                let (a, b) = (w[0].payload.value(), w[1].payload.value());
                ensure!(
                    a < b,
                    Data,
                    "numeric anchors must be strictly increasing, found {:?} before {:?}",
                    a.unwrap_or_default(),
                    b.unwrap_or_default()
                );
            }
        }
        Ok(set)
    }

    fn new_unordered(
        dim: usize,
        anchors: Vec<AnchorPoint>,
        provenance: Provenance,
        template: Option<String>,
    ) -> Result<Self> {
        ensure!(dim > 0, Data, "anchor dimension must be positive");
        ensure!(!anchors.is_empty(), Data, "no anchors");
        let kind = anchors[0].payload.kind();
        for (i, a) in anchors.iter().enumerate() {
            ensure!(
                a.payload.kind() == kind,
                Data,
                "anchor {i} mixes class and numeric payloads"
            );
            ensure!(
                a.embedding.len() == dim,
                Dimension,
                "anchor {i} has dimension {}, expected {dim}",
                a.embedding.len()
            );
            ensure!(
                a.embedding.iter().all(|v| v.is_finite()),
                Data,
                "anchor {i} has a non-finite embedding"
            );
            ensure!(
                a.embedding.iter().any(|v| *v != 0.0),
                Data,
                "anchor {i} has an all-zero embedding"
            );
            if let Payload::Value(v) = a.payload {
                ensure!(v.is_finite(), Data, "anchor {i} has non-finite value");
            }
            ensure!(
                !anchors[..i].iter().any(|b| b.payload == a.payload),
                Data,
                "duplicate anchor payload {}",
                a.payload
            );
        }
        Ok(AnchorSet {
            dim,
            anchors,
            provenance,
            template,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn anchors(&self) -> &[AnchorPoint] {
        &self.anchors
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn template(&self) -> Option<&str> {
        self.template.as_deref()
    }

    pub fn kind(&self) -> TaskKind {
        self.anchors[0].payload.kind()
    }

    pub fn payloads(&self) -> Vec<Payload> {
        self.anchors.iter().map(|a| a.payload.clone()).collect()
    }

    /// Numeric anchor values, or `None` for a class set.
    pub fn values(&self) -> Option<Vec<f64>> {
        self.anchors.iter().map(|a| a.payload.value()).collect()
    }

    /// Embeddings stacked as `[anchors × dim]`.
    pub fn embedding_matrix(&self) -> Tensor {
        let data = self.anchors.iter().flat_map(|a| a.embedding.iter().copied()).collect();
        Tensor::new(vec![self.anchors.len(), self.dim], data).expect("validated dims")
    }

    /// The same anchors in the order `perm` (new position `i` holds old anchor
    /// `perm[i]`). The ascending-value requirement is not enforced, so the
    /// result may only be used with order-agnostic operations.
    pub fn reordered(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.len()];
        ensure!(perm.len() == self.len(), Usage, "permutation length mismatch");
        for &p in perm {
            ensure!(p < self.len() && !seen[p], Usage, "not a permutation");
            seen[p] = true;
        }
        Self::new_unordered(
            self.dim,
            perm.iter().map(|&p| self.anchors[p].clone()).collect(),
            self.provenance.clone(),
            self.template.clone(),
        )
    }
}

/// Index of the anchor each sample corresponds to.
///
/// Class targets must match a label exactly. Numeric targets map to the
/// nearest anchor value (ties go to the lower value) and must lie within
/// half a grid step of the anchor range.
pub fn assign_targets(payloads: &[Payload], set: &AnchorSet) -> Result<Vec<usize>> {
    match set.kind() {
        TaskKind::Classification => payloads
            .iter()
            .map(|p| {
                let label = p.label().ok_or_else(|| {
                    KpError::Usage("numeric target given to a class anchor set".into())
                })?;
                set.anchors
                    .iter()
                    .position(|a| a.payload.label() == Some(label))
                    .ok_or_else(|| KpError::Data(format!("unknown class label {label:?}")))
            })
            .collect(),
        TaskKind::Regression => {
            let values = set.values().expect("regression set");
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            let n = sorted.len();
            let (lo_gap, hi_gap) = if n > 1 {
                (sorted[1] - sorted[0], sorted[n - 1] - sorted[n - 2])
            } else {
                (0.0, 0.0)
            };
            let lo = sorted[0] - lo_gap / 2.0;
            let hi = sorted[n - 1] + hi_gap / 2.0;
            payloads
                .iter()
                .map(|p| {
                    let v = p.value().ok_or_else(|| {
                        KpError::Usage("class target given to a numeric anchor set".into())
                    })?;
                    ensure!(
                        v >= lo && v <= hi,
                        Data,
                        "target {v} outside anchor range [{lo}, {hi}]"
                    );
                    Ok(nearest_anchor(&values, v))
                })
                .collect()
        }
    }
}

fn nearest_anchor(values: &[f64], v: f64) -> usize {
    let mut best = 0;
    for (i, &n) in values.iter().enumerate().skip(1) {
        let (d, db) = ((v - n).abs(), (v - values[best]).abs());
        if d < db || (d == db && n < values[best]) {
            best = i;
        }
    }
    best
}
