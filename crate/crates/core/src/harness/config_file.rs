//! `key = value` text format for [`ModelConfig`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::nn::{ConfigError, ModelConfig};

#[derive(Debug, thiserror::Error)]
pub enum ConfigFileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {value}")]
    Value { line: usize, key: String, value: String },
    #[error(transparent)]
    Invalid(#[from] ConfigError),
}

pub const KEYS: [&str; 15] = [
    "seq_len",
    "embedding_dim",
    "filter_widths",
    "feature_maps",
    "pool_window",
    "conv_depth",
    "dense_depth",
    "dense_hidden",
    "dropout",
    "learning_rate",
    "batch_size",
    "epochs",
    "threshold",
    "embeddings_trainable",
    "seed",
];

/// Sets one field from its textual value. Widths may be separated by commas
/// and/or spaces; they are sorted and deduplicated.
pub fn set_field(config: &mut ModelConfig, key: &str, value: &str) -> Result<(), String> {
    fn num<T: FromStr>(v: &str) -> Result<T, String> {
        v.parse().map_err(|_| v.to_string())
    }
    match key {
        "seq_len" => config.seq_len = num(value)?,
        "embedding_dim" => config.embedding_dim = num(value)?,
        "filter_widths" => {
            let mut widths = value
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(num)
                .collect::<Result<Vec<usize>, _>>()?;
            widths.sort_unstable();
            widths.dedup();
            config.filter_widths = widths;
        }
        "feature_maps" => config.feature_maps = num(value)?,
        "pool_window" => config.pool_window = num(value)?,
        "conv_depth" => config.conv_depth = num(value)?,
        "dense_depth" => config.dense_depth = num(value)?,
        "dense_hidden" => config.dense_hidden = num(value)?,
        "dropout" => config.dropout = num(value)?,
        "learning_rate" => config.learning_rate = num(value)?,
        "batch_size" => config.batch_size = num(value)?,
        "epochs" => config.epochs = num(value)?,
        "threshold" => config.threshold = num(value)?,
        "embeddings_trainable" => config.embeddings_trainable = num(value)?,
        "seed" => config.seed = num(value)?,
        _ => return Err(format!("unknown key {key}")),
    }
    Ok(())
}

/// Parses a config file. Missing keys keep their defaults; `#` starts a
/// comment line. The result is validated.
pub fn parse_config(text: &str) -> Result<ModelConfig, ConfigFileError> {
    let mut config = ModelConfig::default();
    let mut seen = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or(ConfigFileError::Syntax { line })?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(ConfigFileError::UnknownKey {
                line,
                key: key.to_string(),
            });
        }
        if seen.contains(&key) {
            return Err(ConfigFileError::Duplicate {
                line,
                key: key.to_string(),
            });
        }
        seen.push(key);
        set_field(&mut config, key, value).map_err(|_| ConfigFileError::Value {
            line,
            key: key.to_string(),
            value: value.to_string(),
        })?;
    }
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ModelConfig, ConfigFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

/// Writes every field, one per line, in [`KEYS`] order.
pub fn format_config(config: &ModelConfig) -> String {
    let widths: Vec<String> = config.filter_widths.iter().map(|w| w.to_string()).collect();
    let mut out = String::new();
    let _ = writeln!(out, "seq_len = {}", config.seq_len);
    let _ = writeln!(out, "embedding_dim = {}", config.embedding_dim);
    let _ = writeln!(out, "filter_widths = {}", widths.join(","));
    let _ = writeln!(out, "feature_maps = {}", config.feature_maps);
    let _ = writeln!(out, "pool_window = {}", config.pool_window);
    let _ = writeln!(out, "conv_depth = {}", config.conv_depth);
    let _ = writeln!(out, "dense_depth = {}", config.dense_depth);
    let _ = writeln!(out, "dense_hidden = {}", config.dense_hidden);
    let _ = writeln!(out, "dropout = {}", config.dropout);
    let _ = writeln!(out, "learning_rate = {}", config.learning_rate);
    let _ = writeln!(out, "batch_size = {}", config.batch_size);
    let _ = writeln!(out, "epochs = {}", config.epochs);
    let _ = writeln!(out, "threshold = {}", config.threshold);
    let _ = writeln!(out, "embeddings_trainable = {}", config.embeddings_trainable);
    let _ = writeln!(out, "seed = {}", config.seed);
    out
}
