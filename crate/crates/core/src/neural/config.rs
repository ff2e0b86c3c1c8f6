//! Model and training configuration, read from flat `key = value` text.
//!
//! Blank lines and `#` comments are ignored. Unknown keys are errors.
//! `joints`, `coords` and `classes` may be left at 0 to be inferred from
//! the training data.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::rnn::CellKind;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Embedding → (accumulative) → (time) → log-signature → RNN.
    ElLogsigRnn,
    /// Graph convolution, then a Logsig-RNN per joint.
    GcnLogsigRnn,
    /// Two graph-convolution Logsig-RNN blocks in sequence.
    Stacked2,
    /// Baseline: the recurrent cell on raw frames.
    FrameRnn,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "el-logsig-rnn" => Ok(Variant::ElLogsigRnn),
            "gcn-logsig-rnn" => Ok(Variant::GcnLogsigRnn),
            "stacked-2" => Ok(Variant::Stacked2),
            "frame-rnn" => Ok(Variant::FrameRnn),
            other => Err(Error::Config(format!("unknown variant {other:?}"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::ElLogsigRnn => "el-logsig-rnn",
            Variant::GcnLogsigRnn => "gcn-logsig-rnn",
            Variant::Stacked2 => "stacked-2",
            Variant::FrameRnn => "frame-rnn",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Truncation degree `M`.
    pub degree: usize,
    /// Number of segments `N`.
    pub segments: usize,
    /// Segments of the second block of the stacked variant.
    pub segments2: usize,
    pub joints: usize,
    pub coords: usize,
    /// Width `c₁` of the pointwise embedding map.
    pub embed_hidden: usize,
    /// Output width `d_el` of the embedding.
    pub embed_dim: usize,
    /// Output width `D̃` of the graph convolution.
    pub gcn_dim: usize,
    pub gcn_dim2: usize,
    pub hidden: usize,
    /// Width of `o_t = V h_t`.
    pub output_dim: usize,
    pub cell: CellKind,
    pub classes: usize,
    pub accumulative: bool,
    pub time_channel: bool,
    pub start_points: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::ElLogsigRnn,
            degree: 2,
            segments: 4,
            segments2: 2,
            joints: 0,
            coords: 0,
            embed_hidden: 16,
            embed_dim: 8,
            gcn_dim: 4,
            gcn_dim2: 4,
            hidden: 32,
            output_dim: 16,
            cell: CellKind::Lstm,
            classes: 0,
            accumulative: false,
            time_channel: true,
            start_points: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("degree", self.degree),
            ("segments", self.segments),
            ("segments2", self.segments2),
            ("joints", self.joints),
            ("coords", self.coords),
            ("embed_hidden", self.embed_hidden),
            ("embed_dim", self.embed_dim),
            ("gcn_dim", self.gcn_dim),
            ("gcn_dim2", self.gcn_dim2),
            ("hidden", self.hidden),
            ("output_dim", self.output_dim),
            ("classes", self.classes),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub threads: usize,
    /// Global gradient-norm clip; 0 disables.
    pub grad_clip: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            lr: 1e-2,
            momentum: 0.9,
            batch_size: 32,
            epochs: 30,
            seed: 0,
            threads: 1,
            grad_clip: 0.0,
        }
    }
}

/// Contents of a config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainSettings,
}

fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid value {value:?} for {key}")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::parse(
                    line,
                    format!("expected key = value, got {content:?}"),
                ));
            };
            cfg.set(line, key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    fn set(&mut self, line: usize, key: &str, value: &str) -> Result<()> {
        let m = &mut self.model;
        let t = &mut self.train;
        match key {
            "variant" => {
                m.variant = value
                    .parse()
                    .map_err(|e: Error| Error::parse(line, e.to_string()))?
            }
            "degree" => m.degree = parse_value(line, key, value)?,
            "segments" => m.segments = parse_value(line, key, value)?,
            "segments2" => m.segments2 = parse_value(line, key, value)?,
            "joints" => m.joints = parse_value(line, key, value)?,
            "coords" => m.coords = parse_value(line, key, value)?,
            "embed_hidden" => m.embed_hidden = parse_value(line, key, value)?,
            "embed_dim" => m.embed_dim = parse_value(line, key, value)?,
            "gcn_dim" => m.gcn_dim = parse_value(line, key, value)?,
            "gcn_dim2" => m.gcn_dim2 = parse_value(line, key, value)?,
            "hidden" => m.hidden = parse_value(line, key, value)?,
            "output_dim" => m.output_dim = parse_value(line, key, value)?,
            "cell" => {
                m.cell = value
                    .parse()
                    .map_err(|e: Error| Error::parse(line, e.to_string()))?
            }
            "classes" => m.classes = parse_value(line, key, value)?,
            "accumulative" => m.accumulative = parse_value(line, key, value)?,
            "time_channel" => m.time_channel = parse_value(line, key, value)?,
            "start_points" => m.start_points = parse_value(line, key, value)?,
            "lr" => t.lr = parse_value(line, key, value)?,
            "momentum" => t.momentum = parse_value(line, key, value)?,
            "batch_size" => t.batch_size = parse_value(line, key, value)?,
            "epochs" => t.epochs = parse_value(line, key, value)?,
            "seed" => t.seed = parse_value(line, key, value)?,
            "threads" => t.threads = parse_value(line, key, value)?,
            "grad_clip" => t.grad_clip = parse_value(line, key, value)?,
            other => return Err(Error::parse(line, format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Serialises back to the flat text form.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let t = &self.train;
        let mut s = String::new();
        let pairs: Vec<(&str, String)> = vec![
            ("variant", m.variant.to_string()),
            ("degree", m.degree.to_string()),
            ("segments", m.segments.to_string()),
            ("segments2", m.segments2.to_string()),
            ("joints", m.joints.to_string()),
            ("coords", m.coords.to_string()),
            ("embed_hidden", m.embed_hidden.to_string()),
            ("embed_dim", m.embed_dim.to_string()),
            ("gcn_dim", m.gcn_dim.to_string()),
            ("gcn_dim2", m.gcn_dim2.to_string()),
            ("hidden", m.hidden.to_string()),
            ("output_dim", m.output_dim.to_string()),
            ("cell", m.cell.to_string()),
            ("classes", m.classes.to_string()),
            ("accumulative", m.accumulative.to_string()),
            ("time_channel", m.time_channel.to_string()),
            ("start_points", m.start_points.to_string()),
            ("lr", t.lr.to_string()),
            ("momentum", t.momentum.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("epochs", t.epochs.to_string()),
            ("seed", t.seed.to_string()),
            ("threads", t.threads.to_string()),
            ("grad_clip", t.grad_clip.to_string()),
        ];
        for (k, v) in pairs {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}
