use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderConfig, EncoderMode};
use crate::error::{Error, Result};
use crate::objective::ContrastiveConfig;

/// Environment variable that roots relative output directories.
pub const OUT_ROOT_ENV: &str = "IDIOMSPAN_OUT";

/// Dev metric used to pick the checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectMetric {
    Precision,
    F1,
    SequenceAccuracy,
}

impl SelectMetric {
    pub fn of(&self, r: &crate::metrics::EvalReport) -> f64 {
        match self {
            SelectMetric::Precision => r.precision,
            SelectMetric::F1 => r.f1,
            SelectMetric::SequenceAccuracy => r.sa,
        }
    }
}

/// One training run, as a flat key/value file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Name used in reports.
    pub dataset: String,
    /// Directory with `train`, `dev` and `test` files (`.conll` or `.jsonl`).
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,

    pub encoder_mode: EncoderMode,
    pub hidden_size: usize,
    pub layers: usize,
    pub heads: usize,
    pub intermediate_size: usize,
    pub max_len: usize,
    pub truncate: bool,
    pub max_words: usize,
    pub min_word_count: usize,
    pub hash_buckets: usize,
    pub pretrained_dir: Option<PathBuf>,

    pub temperature: f64,
    pub top_k: usize,
    pub normalize_spans: bool,
    pub lambda_span: f64,

    /// `surface-match`, `random-window` or `combined`.
    pub mining_policy: String,
    pub mining_cap: usize,
    pub mining_max_len: usize,

    pub batch_size: usize,
    pub max_steps: usize,
    pub learning_rate: f64,
    pub warmup_steps: usize,
    /// Dev evaluation (and loss logging) every this many steps.
    pub eval_interval: usize,
    pub select_metric: SelectMetric,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let enc = EncoderConfig::default();
        let obj = ContrastiveConfig::default();
        ExperimentConfig {
            dataset: "dataset".into(),
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("runs"),
            seed: 0,
            encoder_mode: enc.mode,
            hidden_size: enc.hidden_size,
            layers: enc.layers,
            heads: enc.heads,
            intermediate_size: enc.intermediate_size,
            max_len: enc.max_len,
            truncate: enc.truncate,
            max_words: enc.max_words,
            min_word_count: enc.min_word_count,
            hash_buckets: enc.hash_buckets,
            pretrained_dir: None,
            temperature: obj.temperature,
            top_k: obj.top_k,
            normalize_spans: obj.normalize_spans,
            lambda_span: obj.lambda_span,
            mining_policy: "combined".into(),
            mining_cap: 2,
            mining_max_len: 3,
            batch_size: 4,
            max_steps: 1000,
            learning_rate: 1e-3,
            warmup_steps: 50,
            eval_interval: 10,
            select_metric: SelectMetric::Precision,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.data_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(p) = cfg.pretrained_dir.as_mut().filter(|p| p.is_relative()) {
            *p = base.join(&*p);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies a `key=value` override. Values parse as TOML, falling back to
    /// a bare string.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        let (key, raw) = (key.trim(), raw.trim());
        let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
            Ok(mut t) => t.remove("v").expect("parsed key"),
            Err(_) => toml::Value::String(raw.to_string()),
        };
        let mut table = toml::Table::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        table.insert(key.to_string(), value);
        let updated: ExperimentConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.eval_interval == 0 {
            return Err(Error::Config("eval_interval must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        self.encoder_config().validate()?;
        self.contrastive_config().validate()?;
        crate::spans::MiningPolicy::by_name(&self.mining_policy, Vec::new(), self.mining_cap, self.mining_max_len)?;
        Ok(())
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            mode: self.encoder_mode,
            hidden_size: self.hidden_size,
            layers: self.layers,
            heads: self.heads,
            intermediate_size: self.intermediate_size,
            max_len: self.max_len,
            truncate: self.truncate,
            seed: self.seed,
            max_words: self.max_words,
            min_word_count: self.min_word_count,
            hash_buckets: self.hash_buckets,
            pretrained_dir: self.pretrained_dir.clone(),
            ..EncoderConfig::default()
        }
    }

    pub fn contrastive_config(&self) -> ContrastiveConfig {
        ContrastiveConfig {
            temperature: self.temperature,
            top_k: self.top_k,
            normalize_spans: self.normalize_spans,
            lambda_span: self.lambda_span,
        }
    }

    /// `out_dir`, rooted at `$IDIOMSPAN_OUT` when relative and the variable is set.
    pub fn resolved_out_dir(&self) -> PathBuf {
        match std::env::var_os(OUT_ROOT_ENV) {
            Some(root) if self.out_dir.is_relative() => PathBuf::from(root).join(&self.out_dir),
            _ => self.out_dir.clone(),
        }
    }
}
