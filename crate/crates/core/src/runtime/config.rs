//! Flat `key=value` configuration text. Blank lines and `#` comments are
//! ignored; unknown keys are rejected.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::optim::AdamConfig;
use crate::transducer::Vocab;

pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {line:?}", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if out.iter().any(|(seen, _)| seen == k) {
            return Err(Error::Config(format!("line {}: duplicate key {k}", n + 1)));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

fn value<V: FromStr>(key: &str, raw: &str) -> Result<V> {
    raw.parse()
        .map_err(|_| Error::Config(format!("bad value for {key}: {raw:?}")))
}

/// Architecture of the whole recognizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub vocab: usize,
    pub d_pred: usize,
    pub d_joint: usize,
    pub conv_channels: usize,
    pub feat_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::DESK,
            vocab: 16,
            d_pred: 64,
            d_joint: 64,
            conv_channels: 8,
            feat_dim: crate::frontend::NUM_MEL_BINS,
        }
    }
}

impl ModelConfig {
    pub const KEYS: [&'static str; 10] = [
        "d_io",
        "d_att",
        "d_linear",
        "blocks",
        "dropout",
        "vocab",
        "d_pred",
        "d_joint",
        "conv_channels",
        "feat_dim",
    ];

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        Vocab::new(self.vocab).map_err(|e| Error::Config(e.to_string()))?;
        if self.d_pred == 0 || self.d_joint == 0 || self.conv_channels == 0 {
            return Err(Error::Config("predictor, joint and conv widths must be positive".into()));
        }
        if crate::frontend::subsampled_len(self.feat_dim).is_none() {
            return Err(Error::Config(format!("feat_dim {} is too narrow to subsample", self.feat_dim)));
        }
        Ok(())
    }

    /// Applies one key; `Ok(false)` if the key is not a model key.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<bool> {
        match key {
            "d_io" => self.encoder.d_io = value(key, raw)?,
            "d_att" => self.encoder.d_att = value(key, raw)?,
            "d_linear" => self.encoder.d_linear = value(key, raw)?,
            "blocks" => self.encoder.num_blocks = value(key, raw)?,
            "dropout" => self.encoder.dropout_rate = value(key, raw)?,
            "vocab" => self.vocab = value(key, raw)?,
            "d_pred" => self.d_pred = value(key, raw)?,
            "d_joint" => self.d_joint = value(key, raw)?,
            "conv_channels" => self.conv_channels = value(key, raw)?,
            "feat_dim" => self.feat_dim = value(key, raw)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_text(&self) -> String {
        let e = &self.encoder;
        let mut s = String::new();
        for (k, v) in [
            ("d_io", e.d_io.to_string()),
            ("d_att", e.d_att.to_string()),
            ("d_linear", e.d_linear.to_string()),
            ("blocks", e.num_blocks.to_string()),
            ("dropout", format!("{:?}", e.dropout_rate)),
            ("vocab", self.vocab.to_string()),
            ("d_pred", self.d_pred.to_string()),
            ("d_joint", self.d_joint.to_string()),
            ("conv_channels", self.conv_channels.to_string()),
            ("feat_dim", self.feat_dim.to_string()),
        ] {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (k, v) in parse_pairs(text)? {
            if !c.set(&k, &v)? {
                return Err(Error::Config(format!("unknown key {k}")));
            }
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Full,
    Bat,
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "bat" => Ok(Self::Bat),
            _ => Err(Error::Config(format!("loss must be full or bat, got {s:?}"))),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::Bat => "bat",
        })
    }
}

/// Training loop and synthetic-data settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub num_utts: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Fraction of utterances held out for accuracy.
    pub held_out: f64,
    pub band_width: usize,
    pub cif_pretrain_epochs: usize,
    /// Stop once held-out accuracy reaches this value.
    pub stop_at_accuracy: Option<f64>,
    /// Wall-clock budget in seconds, checked between steps.
    pub time_limit_secs: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Full,
            epochs: 10,
            batch_size: 8,
            adam: AdamConfig::default(),
            num_utts: 2000,
            min_len: 3,
            max_len: 8,
            held_out: 0.1,
            band_width: crate::bat::DEFAULT_BAND_WIDTH,
            cif_pretrain_epochs: 1,
            stop_at_accuracy: None,
            time_limit_secs: None,
        }
    }
}

impl TrainConfig {
    pub fn set(&mut self, key: &str, raw: &str) -> Result<bool> {
        match key {
            "loss" => self.loss = raw.parse()?,
            "epochs" => self.epochs = value(key, raw)?,
            "batch_size" => self.batch_size = value(key, raw)?,
            "lr" => self.adam.lr = value(key, raw)?,
            "beta1" => self.adam.beta1 = value(key, raw)?,
            "beta2" => self.adam.beta2 = value(key, raw)?,
            "adam_eps" => self.adam.eps = value(key, raw)?,
            "num_utts" => self.num_utts = value(key, raw)?,
            "min_len" => self.min_len = value(key, raw)?,
            "max_len" => self.max_len = value(key, raw)?,
            "held_out" => self.held_out = value(key, raw)?,
            "band_width" => self.band_width = value(key, raw)?,
            "cif_pretrain_epochs" => self.cif_pretrain_epochs = value(key, raw)?,
            "stop_at_accuracy" => self.stop_at_accuracy = Some(value(key, raw)?),
            "time_limit_secs" => self.time_limit_secs = Some(value(key, raw)?),
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::Config(format!("bad label length range {}..={}", self.min_len, self.max_len)));
        }
        if !(0.0..1.0).contains(&self.held_out) {
            return Err(Error::Config(format!("held_out {} outside [0, 1)", self.held_out)));
        }
        if !(self.adam.lr >= 0.0) {
            return Err(Error::Config("lr must be non-negative".into()));
        }
        if self.band_width < 2 {
            return Err(Error::Config("band_width must be at least 2".into()));
        }
        Ok(())
    }
}

/// A training run: model plus loop settings from one config file.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (k, v) in parse_pairs(text)? {
            if !c.model.set(&k, &v)? && !c.train.set(&k, &v)? {
                return Err(Error::Config(format!("unknown key {k}")));
            }
        }
        c.model.validate()?;
        c.train.validate()?;
        Ok(c)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}
