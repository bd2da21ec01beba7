use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::EncoderSpec;
use crate::anchors::{
    format_value, load_anchor_file, pseudo_anchor_set, AnchorSet, AnchorSpec, NumericRange, PromptTemplate, PseudoMode,
    TaskKind,
};
use crate::avs::{PrefixRule, DEFAULT_THETA};
use crate::data::{EvalMode, WindowConfig, DEFAULT_R_MAX};
use crate::error::{ensure, KpError, Result};
use crate::kploss::DistanceMode;
use crate::nn::KlDirection;

/// Where anchor embeddings come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnchorSource {
    File {
        path: PathBuf,
    },
    Pseudo {
        /// Defaults to structured for regression and gaussian for classification.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mode: Option<PseudoMode>,
        #[serde(default = "default_anchor_dim")]
        dim: usize,
        #[serde(default)]
        seed: u64,
        /// `MIN:MAX:STEP`; defaults to `0:r_max:1`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        range: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        template: Option<String>,
    },
}

fn default_anchor_dim() -> usize {
    512
}

impl Default for AnchorSource {
    fn default() -> Self {
        AnchorSource::Pseudo {
            mode: None,
            dim: default_anchor_dim(),
            seed: 0,
            range: None,
            template: None,
        }
    }
}

impl AnchorSource {
    /// Build the anchor set. `classes` is the dataset's label vocabulary.
    pub fn resolve(&self, task: TaskKind, classes: Option<&[String]>, r_max: f64) -> Result<AnchorSet> {
        match self {
            AnchorSource::File { path } => load_anchor_file(path),
            AnchorSource::Pseudo {
                mode,
                dim,
                seed,
                range,
                template,
            } => {
                let template = match template {
                    Some(p) => PromptTemplate::new(p.clone(), task)?,
                    None => match task {
                        TaskKind::Regression => PromptTemplate::regression(),
                        TaskKind::Classification => PromptTemplate::classification(),
                    },
                };
                let spec = match task {
                    TaskKind::Regression => AnchorSpec::Range(match range {
                        Some(r) => NumericRange::parse(r)?,
                        None => NumericRange::parse(&format!("0:{}:1", format_value(r_max)))?,
                    }),
                    TaskKind::Classification => {
                        let names = classes
                            .ok_or_else(|| KpError::Usage("class anchors need the label vocabulary".into()))?;
                        AnchorSpec::classes(names)?
                    }
                };
                let mode = mode.unwrap_or(match task {
                    TaskKind::Regression => PseudoMode::Structured,
                    TaskKind::Classification => PseudoMode::Gaussian,
                });
                pseudo_anchor_set(&template, &spec, *dim, *seed, mode)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowParams {
    /// Defaults to 30 for regression and 128 for classification.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub len: Option<usize>,
    /// Defaults to 1 for regression and 64 for classification.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    /// Defaults to the last window per unit for regression; classification
    /// always scores every window.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_mode: Option<EvalMode>,
    pub validation_fraction: f64,
}

impl Default for WindowParams {
    fn default() -> Self {
        WindowParams {
            len: None,
            stride: None,
            eval_mode: None,
            validation_fraction: 0.125,
        }
    }
}

impl WindowParams {
    pub fn window_config(&self, task: TaskKind, seed: u64) -> WindowConfig {
        let base = match task {
            TaskKind::Regression => WindowConfig::regression(seed),
            TaskKind::Classification => WindowConfig::classification(seed),
        };
        WindowConfig {
            len: self.len.unwrap_or(base.len),
            stride: self.stride.unwrap_or(base.stride),
            eval_mode: self.eval_mode.unwrap_or(base.eval_mode),
            validation_fraction: self.validation_fraction,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub tau: f64,
    pub theta: f64,
    pub kl_direction: KlDirection,
    pub distance: DistanceMode,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub r_max: f64,
    pub logit_scale: f64,
    pub prefix_rule: PrefixRule,
    /// Hidden width of the alignment module; defaults to the feature dim.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub align_hidden: Option<usize>,
    pub encoder: EncoderSpec,
    pub anchors: AnchorSource,
    pub window: WindowParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            tau: 10.0,
            theta: DEFAULT_THETA,
            kl_direction: KlDirection::Forward,
            distance: DistanceMode::Cosine,
            learning_rate: 1e-3,
            epochs: 100,
            batch_size: 64,
            seed: 0,
            patience: 10,
            r_max: DEFAULT_R_MAX,
            logit_scale: 10.0,
            prefix_rule: PrefixRule::Inclusive,
            align_hidden: None,
            encoder: EncoderSpec::default(),
            anchors: AnchorSource::default(),
            window: WindowParams::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.tau > 0.0 && self.tau.is_finite(), Usage, "tau must be positive");
        ensure!(self.theta > 0.0 && self.theta <= 1.0, Usage, "theta must lie in (0, 1]");
        ensure!(
            self.learning_rate >= 0.0 && self.learning_rate.is_finite(),
            Usage,
            "learning_rate must be finite and >= 0"
        );
        ensure!(self.epochs >= 1, Usage, "epochs must be at least 1");
        ensure!(self.batch_size >= 2, Usage, "batch_size must be at least 2");
        ensure!(self.patience >= 1, Usage, "patience must be at least 1");
        ensure!(self.r_max > 0.0 && self.r_max.is_finite(), Usage, "r_max must be positive");
        ensure!(
            self.logit_scale > 0.0 && self.logit_scale.is_finite(),
            Usage,
            "logit_scale must be positive"
        );
        ensure!(self.align_hidden != Some(0), Usage, "align_hidden must be positive");
        ensure!(
            (0.0..1.0).contains(&self.window.validation_fraction),
            Usage,
            "validation_fraction must lie in [0, 1)"
        );
        self.encoder.validate()
    }

    /// Parse and validate a TOML document. Syntax errors report the line.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            let msg = e.message().to_string();
            KpError::Usage(match line {
                Some(l) => format!("config line {l}: {msg}"),
                None => format!("config: {msg}"),
            })
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
