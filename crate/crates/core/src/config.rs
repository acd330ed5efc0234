//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is
//! optional and falls back to the default shown by [`RunConfig::to_text`];
//! unknown keys are rejected. Path values are resolved against the
//! directory containing the config file.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::adapt::AdaptConfig;
use crate::ctc::CharSet;
use crate::error::{Error, Result};
use crate::experiment::{ShiftParams, TaskSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub task: TaskSpec,
    pub adapt: AdaptConfig,
    /// Master seed; every other seed is derived from it.
    pub seed: u64,
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let adapt = AdaptConfig::default();
        Self {
            task: TaskSpec::default(),
            seed: adapt.seed,
            adapt,
            source: None,
            target: None,
            checkpoint: None,
        }
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("key `{key}`: cannot parse {v:?}")))
}

fn range(key: &str, v: &str) -> Result<(usize, usize)> {
    let (a, b) = v
        .split_once(',')
        .ok_or_else(|| Error::Config(format!("key `{key}`: expected `min,max`, got {v:?}")))?;
    Ok((num(key, a.trim())?, num(key, b.trim())?))
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!("key `{key}`: expected true or false, got {v:?}"))),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses config text; relative paths are joined onto `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut c = RunConfig::default();
        let mut shift_kind = "device".to_string();
        let (mut strength, mut bias, mut amplitude) = match c.task.shift {
            ShiftParams::Device { strength, bias_scale } => (strength, bias_scale, 0.5),
            ShiftParams::Environment { amplitude } => (0.5, 0.5, amplitude),
        };
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", no + 1)))?;
            let (key, v) = (key.trim(), v.trim());
            let t = &mut c.task;
            let a = &mut c.adapt;
            match key {
                "seed" => c.seed = num(key, v)?,
                "characters" => {
                    t.charset = CharSet::with_blank_first(v).map_err(|e| Error::Config(format!("key `{key}`: {e}")))?
                }
                "source_utterances" => t.source_utterances = num(key, v)?,
                "target_utterances" => t.target_utterances = num(key, v)?,
                "transcript_len" => t.transcript_len = range(key, v)?,
                "frames_per_char" => t.frames_per_char = range(key, v)?,
                "gap_frames" => t.gap_frames = range(key, v)?,
                "input_dim" => t.input_dim = num(key, v)?,
                "jitter" => t.jitter = num(key, v)?,
                "min_prototype_distance" => t.min_prototype_distance = num(key, v)?,
                "shift" => {
                    if v != "device" && v != "environment" {
                        return Err(Error::Config(format!("key `shift`: expected device or environment, got {v:?}")));
                    }
                    shift_kind = v.to_string();
                }
                "shift_strength" => strength = num(key, v)?,
                "shift_bias" => bias = num(key, v)?,
                "noise_amplitude" => amplitude = num(key, v)?,
                "hidden_dim" => t.hidden_dim = num(key, v)?,
                "feature_dim" => t.feature_dim = num(key, v)?,
                "decoder_dim" => t.decoder_dim = num(key, v)?,
                "attention_dim" => t.attention_dim = num(key, v)?,
                "subsample" => t.subsample = num(key, v)?,
                "lambda" => a.lambda = num(key, v)?,
                "gamma" => a.gamma = num(key, v)?,
                "confidence_threshold" => a.confidence_threshold = num(key, v)?,
                "keep_ratio" => a.keep_ratio = num(key, v)?,
                "beam_width" => a.beam_width = num(key, v)?,
                "max_len" => a.max_len = num(key, v)?,
                "strategy" => a.strategy = v.parse().map_err(|e: Error| Error::Config(format!("key `{key}`: {e}")))?,
                "kernel" => a.kernel = v.parse().map_err(|e: Error| Error::Config(format!("key `{key}`: {e}")))?,
                "reference_source_transcripts" => a.reference_source_transcripts = boolean(key, v)?,
                "epochs" => a.epochs = num(key, v)?,
                "adapt_epochs" => a.adapt_epochs = num(key, v)?,
                "batch_size" => a.batch_size = num(key, v)?,
                "step_size" => a.step_size = num(key, v)?,
                "adapt_step_size" => a.adapt_step_size = num(key, v)?,
                "clip_norm" => a.clip_norm = num(key, v)?,
                "patience" => a.patience = num(key, v)?,
                "dev_fraction" => a.dev_fraction = num(key, v)?,
                "source" => c.source = Some(base.join(v)),
                "target" => c.target = Some(base.join(v)),
                "checkpoint" => c.checkpoint = Some(base.join(v)),
                other => return Err(Error::Config(format!("unknown key `{other}` at line {}", no + 1))),
            }
        }
        c.task.shift = if shift_kind == "device" {
            ShiftParams::Device {
                strength,
                bias_scale: bias,
            }
        } else {
            ShiftParams::Environment { amplitude }
        };
        c.set_seed(c.seed);
        c.validate()?;
        Ok(c)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.adapt.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.adapt.validate()?;
        self.task
            .generator(1, 0)
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        let d = self.task.dims();
        d.validate().map_err(|e| Error::Config(e.to_string()))?;
        match self.task.shift {
            ShiftParams::Device { strength, bias_scale } if !(strength >= 0.0 && bias_scale >= 0.0) => {
                Err(Error::Config("shift_strength and shift_bias must be non-negative".into()))
            }
            ShiftParams::Environment { amplitude } if !(amplitude >= 0.0) => {
                Err(Error::Config("noise_amplitude must be non-negative".into()))
            }
            _ => Ok(()),
        }
    }

    /// Every key with its current value; parses back to an equal config
    /// (paths excepted).
    pub fn to_text(&self) -> String {
        let t = &self.task;
        let a = &self.adapt;
        let symbols: String = t.charset.characters().map(|c| t.charset.symbol(c)).collect();
        let mut lines = vec![
            format!("seed = {}", self.seed),
            format!("characters = {symbols}"),
            format!("source_utterances = {}", t.source_utterances),
            format!("target_utterances = {}", t.target_utterances),
            format!("transcript_len = {},{}", t.transcript_len.0, t.transcript_len.1),
            format!("frames_per_char = {},{}", t.frames_per_char.0, t.frames_per_char.1),
            format!("gap_frames = {},{}", t.gap_frames.0, t.gap_frames.1),
            format!("input_dim = {}", t.input_dim),
            format!("jitter = {}", t.jitter),
            format!("min_prototype_distance = {}", t.min_prototype_distance),
        ];
        match t.shift {
            ShiftParams::Device { strength, bias_scale } => {
                lines.push("shift = device".into());
                lines.push(format!("shift_strength = {strength}"));
                lines.push(format!("shift_bias = {bias_scale}"));
            }
            ShiftParams::Environment { amplitude } => {
                lines.push("shift = environment".into());
                lines.push(format!("noise_amplitude = {amplitude}"));
            }
        }
        lines.extend([
            format!("hidden_dim = {}", t.hidden_dim),
            format!("feature_dim = {}", t.feature_dim),
            format!("decoder_dim = {}", t.decoder_dim),
            format!("attention_dim = {}", t.attention_dim),
            format!("subsample = {}", t.subsample),
            format!("lambda = {}", a.lambda),
            format!("gamma = {}", a.gamma),
            format!("confidence_threshold = {}", a.confidence_threshold),
            format!("keep_ratio = {}", a.keep_ratio),
            format!("beam_width = {}", a.beam_width),
            format!("max_len = {}", a.max_len),
            format!("strategy = {}", a.strategy),
            format!("kernel = {}", a.kernel),
            format!("reference_source_transcripts = {}", a.reference_source_transcripts),
            format!("epochs = {}", a.epochs),
            format!("adapt_epochs = {}", a.adapt_epochs),
            format!("batch_size = {}", a.batch_size),
            format!("step_size = {}", a.step_size),
            format!("adapt_step_size = {}", a.adapt_step_size),
            format!("clip_norm = {}", a.clip_norm),
            format!("patience = {}", a.patience),
            format!("dev_fraction = {}", a.dev_fraction),
        ]);
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}
