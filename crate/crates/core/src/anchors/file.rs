//! Anchor interchange file.
//!
//! UTF-8 text, one JSON object per line, `\n` separated. Line 1 is the
//! header:
//!
//! ```text
//! {"format":"kp-anchors","version":1,"dim":512,"provenance":"external","source":"…","template":"…"}
//! ```
//!
//! Every further line is one anchor:
//!
//! ```text
//! {"id":0,"kind":"numeric","value":0.0,"prompt":"…","embedding":[…]}
//! {"id":0,"kind":"class","label":"walking","prompt":"…","embedding":[…]}
//! ```
//!
//! Floats are written in shortest round-trip form, so a load reproduces the
//! saved bit patterns.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AnchorPoint, AnchorSet, Payload, Provenance, ProvenanceKind};
use crate::error::{KpError, Result};

pub const FORMAT_TAG: &str = "kp-anchors";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    dim: usize,
    provenance: ProvenanceKind,
    #[serde(default)]
    source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    template: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: usize,
    kind: RecordKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prompt: Option<String>,
    embedding: Vec<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RecordKind {
    Class,
    Numeric,
}

pub fn render_anchor_file(set: &AnchorSet) -> String {
    let header = Header {
        format: FORMAT_TAG.into(),
        version: FORMAT_VERSION,
        dim: set.dim(),
        provenance: set.provenance().kind.clone(),
        source: set.provenance().source.clone(),
        template: set.template().map(str::to_string),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for a in set.anchors() {
        let (kind, label, value) = match &a.payload {
            Payload::Class(l) => (RecordKind::Class, Some(l.clone()), None),
            Payload::Value(v) => (RecordKind::Numeric, None, Some(*v)),
        };
        let rec = Record {
            id: a.id,
            kind,
            label,
            value,
            prompt: a.prompt.clone(),
            embedding: a.embedding.clone(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn save_anchor_file(set: &AnchorSet, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, render_anchor_file(set))?;
    Ok(())
}

pub fn load_anchor_file(path: impl AsRef<Path>) -> Result<AnchorSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| {
        KpError::Data(format!("cannot read anchor file {}: {e}", path.display()))
    })?;
    parse_anchor_file(&text)
}

pub fn parse_anchor_file(text: &str) -> Result<AnchorSet> {
    let mut lines = text
        .split('\n')
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.trim().is_empty());
    let Some((hline, htext)) = lines.next() else {
        return Err(KpError::format(1, "no anchors"));
    };
    let header: Header = serde_json::from_str(htext)
        .map_err(|e| KpError::format(hline, format!("bad header: {e}")))?;
    if header.format != FORMAT_TAG {
        return Err(KpError::format(hline, format!("unknown format tag {:?}", header.format)));
    }
    if header.version != FORMAT_VERSION {
        return Err(KpError::format(hline, format!("unsupported version {}", header.version)));
    }
    if header.dim == 0 {
        return Err(KpError::format(hline, "dim must be positive"));
    }

    let mut anchors: Vec<AnchorPoint> = Vec::new();
    let mut kind: Option<RecordKind> = None;
    let mut prev_value: Option<f64> = None;
    for (line, body) in lines {
        let rec: Record = serde_json::from_str(body)
            .map_err(|e| KpError::format(line, format!("malformed anchor record: {e}")))?;
        if rec.embedding.len() != header.dim {
            return Err(KpError::format(
                line,
                format!("embedding has length {}, header dim is {}", rec.embedding.len(), header.dim),
            ));
        }
        if !rec.embedding.iter().all(|v| v.is_finite()) || rec.embedding.iter().all(|v| *v == 0.0) {
            return Err(KpError::format(line, "embedding must be finite and not all zero"));
        }
        if *kind.get_or_insert(rec.kind) != rec.kind {
            return Err(KpError::format(line, "class and numeric records are mixed"));
        }
        let payload = match (rec.kind, rec.label, rec.value) {
            (RecordKind::Class, Some(l), None) => Payload::Class(l),
            (RecordKind::Numeric, None, Some(v)) if v.is_finite() => {
                if prev_value.is_some_and(|p| p >= v) {
                    return Err(KpError::format(line, "numeric anchors must be strictly increasing"));
                }
                prev_value = Some(v);
                Payload::Value(v)
            }
            _ => {
                return Err(KpError::format(
                    line,
                    "class records need only `label`, numeric records only a finite `value`",
                ))
            }
        };
        if anchors.iter().any(|a| a.payload == payload) {
            return Err(KpError::format(line, format!("duplicate payload {payload}")));
        }
        if anchors.iter().any(|a| a.id == rec.id) {
            return Err(KpError::format(line, format!("duplicate id {}", rec.id)));
        }
        anchors.push(AnchorPoint {
            id: rec.id,
            payload,
            embedding: rec.embedding,
            prompt: rec.prompt,
        });
    }
    if anchors.is_empty() {
        return Err(KpError::format(hline, "no anchors"));
    }
    AnchorSet::new(
        header.dim,
        anchors,
        Provenance {
            kind: header.provenance,
            source: header.source,
        },
        header.template,
    )
}
