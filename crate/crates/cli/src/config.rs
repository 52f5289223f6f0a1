//! Strict TOML configuration files.

use std::path::Path;

use scns_harness::{ExperimentConfig, HarnessError};

use crate::error::{CliError, Result};

/// Reads and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config_with_seed(path, None)
}

/// Like [`parse_config`], with `seed` overriding the file's before
/// validation.
pub fn parse_config_with_seed(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config_str(&text, &path.display().to_string(), seed)
}

/// Parses `text`; `path` only labels error messages.
pub fn parse_config_str(text: &str, path: &str, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config {
        path: path.to_string(),
        line: e.span().map(|s| line_of(text, s.start)),
        key: "toml".into(),
        message: e.message().trim().to_string(),
    })?;
    if seed.is_some() {
        cfg.seed = seed;
    }
    validate(&cfg, text, path)?;
    Ok(cfg)
}

/// Validates a configuration, citing the offending line of `text`.
pub fn validate(cfg: &ExperimentConfig, text: &str, path: &str) -> Result<()> {
    match cfg.validate() {
        Ok(()) => Ok(()),
        Err(HarnessError::Config { key, message }) => Err(CliError::Config {
            path: path.to_string(),
            line: find_key(text, key),
            key: display_key(key),
            message,
        }),
        Err(e) => Err(e.into()),
    }
}

/// The canonical text form: every key, defaults included.
pub fn canonical(cfg: &ExperimentConfig) -> String {
    toml::to_string(cfg).expect("configuration serializes")
}

/// `loss.alpha` becomes `[loss].alpha`.
fn display_key(key: &str) -> String {
    match key.split_once('.') {
        Some((section, rest)) => format!("[{section}].{rest}"),
        None => key.to_string(),
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `section.key` in `text`, falling back to the section header.
fn find_key(text: &str, dotted: &str) -> Option<usize> {
    let (section, key) = match dotted.split_once('.') {
        Some((s, k)) => (Some(s), k),
        None => (None, dotted),
    };
    let mut current: Option<String> = None;
    let mut header = None;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.split(']').next()) {
            current = Some(name.trim().to_string());
            if Some(name.trim()) == section {
                header = Some(n + 1);
            }
            continue;
        }
        if current.as_deref() != section {
            continue;
        }
        if let Some((k, _)) = line.split_once('=') {
            if k.trim().trim_matches('"') == key {
                return Some(n + 1);
            }
        }
    }
    header
}
