//! Run configuration: a flat `key = value` file with `#` comments.
//!
//! One format serves both experiments. Values render with Rust's shortest
//! round-trip float formatting, so `parse(render(c)) == c` exactly — a run
//! is reproducible from the config file written next to its outputs.
//! Precedence, lowest to highest: file, `LINN_<KEY>` environment variables,
//! explicit `--override key=value` pairs.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::rec::RecTrainConfig;
use crate::sim::SimTrainConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Sim,
    Rec,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Sim => "sim",
            Task::Rec => "rec",
        }
    }
}

/// Input format for recommendation logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecFormat {
    Ml100k,
    AmazonCsv,
}

impl RecFormat {
    pub fn name(self) -> &'static str {
        match self {
            RecFormat::Ml100k => "ml100k",
            RecFormat::AmazonCsv => "amazon_csv",
        }
    }
}

/// Everything a training run needs, in one flat record.
///
/// `data_path` is a dataset directory for `sim` (as written by `gen-sim`)
/// and a raw interaction log file for `rec`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub data_path: String,
    pub out_dir: String,
    pub seed: u64,
    pub d: usize,
    pub dropout: f64,
    pub lambda_logic: f64,
    pub lambda_length: f64,
    pub lambda_theta: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Simulated-data generation size (used by `gen-sim`, recorded for runs).
    pub sim_n: usize,
    pub sim_m: usize,
    /// Recommendation options.
    pub rec_format: RecFormat,
    pub history_len: usize,
    pub negative_history: bool,
}

/// Canonical key order for rendering; also the set of accepted keys.
const KEYS: [&str; 18] = [
    "task",
    "data_path",
    "out_dir",
    "seed",
    "d",
    "dropout",
    "lambda_logic",
    "lambda_length",
    "lambda_theta",
    "learning_rate",
    "batch_size",
    "max_epochs",
    "patience",
    "sim_n",
    "sim_m",
    "rec_format",
    "history_len",
    "negative_history",
];

impl RunConfig {
    /// Per-task default hyperparameters; these are the settings the
    /// benchmark results are quoted at.
    pub fn defaults(task: Task) -> RunConfig {
        match task {
            Task::Sim => {
                let t = SimTrainConfig::default();
                RunConfig {
                    task,
                    data_path: String::new(),
                    out_dir: "out".into(),
                    seed: t.seed,
                    d: t.d,
                    dropout: t.dropout,
                    lambda_logic: t.lambda_logic,
                    lambda_length: t.lambda_length,
                    lambda_theta: t.lambda_theta,
                    learning_rate: t.learning_rate,
                    batch_size: t.batch_size,
                    max_epochs: t.max_epochs,
                    patience: t.patience,
                    sim_n: 1000,
                    sim_m: 3000,
                    rec_format: RecFormat::Ml100k,
                    history_len: 10,
                    negative_history: true,
                }
            }
            Task::Rec => {
                let t = RecTrainConfig::default();
                RunConfig {
                    task,
                    data_path: String::new(),
                    out_dir: "out".into(),
                    seed: t.seed,
                    d: t.d,
                    dropout: t.dropout,
                    lambda_logic: t.lambda_logic,
                    lambda_length: t.lambda_length,
                    lambda_theta: t.lambda_theta,
                    learning_rate: t.learning_rate,
                    batch_size: t.batch_size,
                    max_epochs: t.max_epochs,
                    patience: t.patience,
                    sim_n: 1000,
                    sim_m: 3000,
                    rec_format: RecFormat::Ml100k,
                    history_len: 10,
                    negative_history: true,
                }
            }
        }
    }

    /// Parse a config file body. The `task` line decides the defaults every
    /// other key overrides, so it may appear anywhere but must appear once.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut pairs = Vec::new();
        for (ix, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got {raw:?}", ix + 1))
            })?;
            pairs.push((ix + 1, key.trim().to_string(), value.trim().to_string()));
        }

        let mut seen = HashSet::new();
        for (ln, key, _) in &pairs {
            if !KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("line {ln}: unknown key {key:?}")));
            }
            if !seen.insert(key.clone()) {
                return Err(Error::Config(format!("line {ln}: duplicate key {key:?}")));
            }
        }

        let task_value = pairs
            .iter()
            .find(|(_, k, _)| k == "task")
            .map(|(_, _, v)| v.as_str())
            .ok_or_else(|| Error::Config("missing required key \"task\"".into()))?;
        let mut cfg = RunConfig::defaults(parse_task(task_value)?);
        for (ln, key, value) in &pairs {
            cfg.apply(key, value)
                .map_err(|e| Error::Config(format!("line {ln}: {e}")))?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::parse(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Set one field from its textual form. Used for file lines, `LINN_*`
    /// environment variables, and `--override` arguments alike.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "task" => self.task = parse_task(value)?,
            "data_path" => self.data_path = value.to_string(),
            "out_dir" => self.out_dir = value.to_string(),
            "seed" => self.seed = parse_num(key, value)?,
            "d" => self.d = parse_num(key, value)?,
            "dropout" => self.dropout = parse_num(key, value)?,
            "lambda_logic" => self.lambda_logic = parse_num(key, value)?,
            "lambda_length" => self.lambda_length = parse_num(key, value)?,
            "lambda_theta" => self.lambda_theta = parse_num(key, value)?,
            "learning_rate" => self.learning_rate = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "max_epochs" => self.max_epochs = parse_num(key, value)?,
            "patience" => self.patience = parse_num(key, value)?,
            "sim_n" => self.sim_n = parse_num(key, value)?,
            "sim_m" => self.sim_m = parse_num(key, value)?,
            "rec_format" => {
                self.rec_format = match value {
                    "ml100k" => RecFormat::Ml100k,
                    "amazon_csv" => RecFormat::AmazonCsv,
                    other => {
                        return Err(Error::Config(format!(
                            "rec_format must be ml100k or amazon_csv, got {other:?}"
                        )))
                    }
                }
            }
            "history_len" => self.history_len = parse_num(key, value)?,
            "negative_history" => {
                self.negative_history = match value {
                    "true" => true,
                    "false" => false,
                    other => {
                        return Err(Error::Config(format!(
                            "negative_history must be true or false, got {other:?}"
                        )))
                    }
                }
            }
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Fold in `LINN_<KEY>` environment variables for every known key.
    pub fn apply_env(&mut self) -> Result<()> {
        for key in KEYS {
            let var = format!("LINN_{}", key.to_uppercase());
            if let Ok(value) = std::env::var(&var) {
                self.apply(key, &value)
                    .map_err(|e| Error::Config(format!("{var}: {e}")))?;
            }
        }
        Ok(())
    }

    /// Render in canonical key order; `parse(render(c)) == c`.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "task = {}", self.task.name());
        let _ = writeln!(s, "data_path = {}", self.data_path);
        let _ = writeln!(s, "out_dir = {}", self.out_dir);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "d = {}", self.d);
        let _ = writeln!(s, "dropout = {}", self.dropout);
        let _ = writeln!(s, "lambda_logic = {}", self.lambda_logic);
        let _ = writeln!(s, "lambda_length = {}", self.lambda_length);
        let _ = writeln!(s, "lambda_theta = {}", self.lambda_theta);
        let _ = writeln!(s, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "max_epochs = {}", self.max_epochs);
        let _ = writeln!(s, "patience = {}", self.patience);
        let _ = writeln!(s, "sim_n = {}", self.sim_n);
        let _ = writeln!(s, "sim_m = {}", self.sim_m);
        let _ = writeln!(s, "rec_format = {}", self.rec_format.name());
        let _ = writeln!(s, "history_len = {}", self.history_len);
        let _ = writeln!(s, "negative_history = {}", self.negative_history);
        s
    }

    pub fn sim_config(&self) -> SimTrainConfig {
        SimTrainConfig {
            d: self.d,
            lambda_logic: self.lambda_logic,
            lambda_length: self.lambda_length,
            lambda_theta: self.lambda_theta,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            dropout: self.dropout,
            seed: self.seed,
        }
    }

    pub fn rec_config(&self) -> RecTrainConfig {
        RecTrainConfig {
            d: self.d,
            lambda_logic: self.lambda_logic,
            lambda_length: self.lambda_length,
            lambda_theta: self.lambda_theta,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            dropout: self.dropout,
            seed: self.seed,
        }
    }
}

fn parse_task(value: &str) -> Result<Task> {
    match value {
        "sim" => Ok(Task::Sim),
        "rec" => Ok(Task::Rec),
        other => Err(Error::Config(format!(
            "task must be sim or rec, got {other:?}"
        ))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}
