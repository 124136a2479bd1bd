//! Flat `key=value` run configuration.

use std::path::PathBuf;

use crate::data::session::DEFAULT_SESSION_GAP_SECS;
use crate::data::split::SplitSpec;
use crate::data::vocab::DEFAULT_VOCAB_CAPACITY;
use crate::encoders::DEFAULT_MAX_URL_CHARS;
use crate::error::{Error, Result};
use crate::math::AdamConfig;
use crate::model::{Ablation, ContextOrder, Task};
use crate::pipeline::PrepareConfig;
use crate::selection::DEFAULT_K;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub input: Option<PathBuf>,
    pub workdir: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub seed: Option<u64>,

    pub embed_dim: usize,
    pub char_embed_dim: usize,
    pub hidden_dim: usize,
    pub context_window: usize,
    pub k: usize,
    pub vocab_capacity: usize,
    pub session_gap_secs: u64,
    pub max_url_chars: usize,
    pub train_fraction: f64,
    pub dev_fraction: f64,
    pub test_fraction: f64,

    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub resume: bool,
    /// Parameters to start from instead of a fresh initialization.
    pub init_from: Option<PathBuf>,

    pub disable_deficit: bool,
    pub disable_context: bool,
    pub last_query_only: bool,
    pub context_order: ContextOrder,

    pub eval_split: String,
    pub baseline: bool,
    pub report_wall_time: bool,

    pub synthetic_sessions: usize,
    pub synthetic_vocab: usize,
    pub deficit_strength: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        RunConfig {
            task: Task::Retention,
            input: None,
            workdir: PathBuf::from("work"),
            checkpoint: None,
            seed: None,
            embed_dim: 64,
            char_embed_dim: 16,
            hidden_dim: 64,
            context_window: 3,
            k: DEFAULT_K,
            vocab_capacity: DEFAULT_VOCAB_CAPACITY,
            session_gap_secs: DEFAULT_SESSION_GAP_SECS,
            max_url_chars: DEFAULT_MAX_URL_CHARS,
            train_fraction: 0.8,
            dev_fraction: 0.1,
            test_fraction: 0.1,
            alpha: adam.alpha,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            batch_size: 32,
            epochs: 10,
            resume: false,
            init_from: None,
            disable_deficit: false,
            disable_context: false,
            last_query_only: false,
            context_order: ContextOrder::RecentFirst,
            eval_split: "test".into(),
            baseline: false,
            report_wall_time: false,
            synthetic_sessions: 1000,
            synthetic_vocab: 40,
            deficit_strength: 1.0,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!(
            "invalid value `{value}` for `{key}`"
        ))),
    }
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_default()
}

impl RunConfig {
    pub fn with_seed(seed: u64) -> Self {
        RunConfig {
            seed: Some(seed),
            ..Default::default()
        }
    }

    /// Reads `key=value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        config.apply_text(text)?;
        Ok(config)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected `key=value`, got `{line}`"),
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "task" => self.task = value.parse()?,
            "input" => self.input = opt_path(value),
            "workdir" => self.workdir = PathBuf::from(value),
            "checkpoint" => self.checkpoint = opt_path(value),
            "seed" => self.seed = Some(parse(key, value)?),
            "embed_dim" => self.embed_dim = parse(key, value)?,
            "char_embed_dim" => self.char_embed_dim = parse(key, value)?,
            "hidden_dim" => self.hidden_dim = parse(key, value)?,
            "context_window" => self.context_window = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "vocab_capacity" => self.vocab_capacity = parse(key, value)?,
            "session_gap_secs" => self.session_gap_secs = parse(key, value)?,
            "max_url_chars" => self.max_url_chars = parse(key, value)?,
            "train_fraction" => self.train_fraction = parse(key, value)?,
            "dev_fraction" => self.dev_fraction = parse(key, value)?,
            "test_fraction" => self.test_fraction = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "beta1" => self.beta1 = parse(key, value)?,
            "beta2" => self.beta2 = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "resume" => self.resume = parse_bool(key, value)?,
            "init_from" => self.init_from = opt_path(value),
            "disable_deficit" => self.disable_deficit = parse_bool(key, value)?,
            "disable_context" => self.disable_context = parse_bool(key, value)?,
            "last_query_only" => self.last_query_only = parse_bool(key, value)?,
            "context_order" => {
                self.context_order = match value {
                    "recent_first" => ContextOrder::RecentFirst,
                    "chronological" => ContextOrder::Chronological,
                    _ => {
                        return Err(Error::Config(format!(
                            "invalid value `{value}` for `{key}`"
                        )))
                    }
                }
            }
            "eval_split" => self.eval_split = value.to_string(),
            "baseline" => self.baseline = parse_bool(key, value)?,
            "report_wall_time" => self.report_wall_time = parse_bool(key, value)?,
            "synthetic_sessions" => self.synthetic_sessions = parse(key, value)?,
            "synthetic_vocab" => self.synthetic_vocab = parse(key, value)?,
            "deficit_strength" => self.deficit_strength = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Every key with its current value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("task", self.task.as_str().to_string()),
            ("input", show_path(&self.input)),
            ("workdir", self.workdir.display().to_string()),
            ("checkpoint", show_path(&self.checkpoint)),
            ("seed", self.seed.map(|s| s.to_string()).unwrap_or_default()),
            ("embed_dim", self.embed_dim.to_string()),
            ("char_embed_dim", self.char_embed_dim.to_string()),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("context_window", self.context_window.to_string()),
            ("k", self.k.to_string()),
            ("vocab_capacity", self.vocab_capacity.to_string()),
            ("session_gap_secs", self.session_gap_secs.to_string()),
            ("max_url_chars", self.max_url_chars.to_string()),
            ("train_fraction", self.train_fraction.to_string()),
            ("dev_fraction", self.dev_fraction.to_string()),
            ("test_fraction", self.test_fraction.to_string()),
            ("alpha", self.alpha.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("resume", self.resume.to_string()),
            ("init_from", show_path(&self.init_from)),
            ("disable_deficit", self.disable_deficit.to_string()),
            ("disable_context", self.disable_context.to_string()),
            ("last_query_only", self.last_query_only.to_string()),
            (
                "context_order",
                match self.context_order {
                    ContextOrder::RecentFirst => "recent_first",
                    ContextOrder::Chronological => "chronological",
                }
                .to_string(),
            ),
            ("eval_split", self.eval_split.clone()),
            ("baseline", self.baseline.to_string()),
            ("report_wall_time", self.report_wall_time.to_string()),
            ("synthetic_sessions", self.synthetic_sessions.to_string()),
            ("synthetic_vocab", self.synthetic_vocab.to_string()),
            ("deficit_strength", self.deficit_strength.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed.is_none() {
            return Err(Error::Config("`seed` is required".into()));
        }
        if self.embed_dim == 0 || self.char_embed_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("all dimensions must be positive".into()));
        }
        if self.context_window == 0
            || self.k == 0
            || self.batch_size == 0
            || self.max_url_chars == 0
        {
            return Err(Error::Config(
                "context_window, k, batch_size and max_url_chars must be positive".into(),
            ));
        }
        if !matches!(self.eval_split.as_str(), "train" | "dev" | "test") {
            return Err(Error::Config(format!(
                "unknown split `{}`",
                self.eval_split
            )));
        }
        self.split_spec()?.validate()
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("`seed` is required".into()))
    }

    /// `last_query_only` implies both channel flags.
    pub fn ablation(&self) -> Ablation {
        Ablation {
            disable_deficit: self.disable_deficit || self.last_query_only,
            disable_context: self.disable_context || self.last_query_only,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            alpha: self.alpha,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn split_spec(&self) -> Result<SplitSpec> {
        Ok(SplitSpec {
            train: self.train_fraction,
            dev: self.dev_fraction,
            test: self.test_fraction,
            seed: self.seed()?,
        })
    }

    pub fn prepare_config(&self) -> Result<PrepareConfig> {
        Ok(PrepareConfig {
            session_gap_secs: self.session_gap_secs,
            split: self.split_spec()?,
            vocab_capacity: self.vocab_capacity,
            context_window: self.context_window,
            max_url_chars: self.max_url_chars,
            k: self.k,
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed()?,
            adam: self.adam(),
            ablation: self.ablation(),
            order: self.context_order,
        })
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.workdir.join(format!("{}.ckpt", self.task.as_str())))
    }
}
