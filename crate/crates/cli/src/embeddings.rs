//! Word vectors in the plain-text `count dim` format.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use scns_core::EmbeddingMatrix;

use crate::error::{CliError, Result};

/// Tokens of a class label: split on whitespace, `-` and `_`.
pub fn label_tokens(label: &str) -> Vec<&str> {
    label
        .split(|c: char| c.is_whitespace() || c == '-' || c == '_')
        .filter(|t| !t.is_empty())
        .collect()
}

/// One row per label, the mean of its token vectors.
pub fn load_word_embeddings(path: &Path, labels: &[String]) -> Result<EmbeddingMatrix> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_word_embeddings(BufReader::new(file), &path.display().to_string(), labels)
}

/// Reads from any buffered source; `path` only labels error messages.
/// Only vectors of tokens the labels use are kept, but every record is
/// checked.
pub fn read_word_embeddings<R: BufRead>(
    input: R,
    path: &str,
    labels: &[String],
) -> Result<EmbeddingMatrix> {
    let parse_error = |line: usize, message: String| CliError::Parse {
        module: "embeddings",
        path: path.to_string(),
        line,
        message,
    };
    let wanted: HashSet<&str> = labels.iter().flat_map(|l| label_tokens(l)).collect();
    let mut lines = input.lines();
    let header = match lines.next() {
        Some(l) => l.map_err(|e| CliError::io(path, e))?,
        None => return Err(parse_error(1, "empty file".into())),
    };
    let dims: Vec<usize> = header
        .split_whitespace()
        .filter_map(|t| t.parse().ok())
        .collect();
    let (count, dim) = match (dims.as_slice(), header.split_whitespace().count()) {
        ([c, d], 2) if *d > 0 => (*c, *d),
        _ => {
            return Err(parse_error(
                1,
                format!("expected header \"count dim\", found {header:?}"),
            ))
        }
    };

    let mut seen = HashSet::with_capacity(count);
    let mut vectors: HashMap<String, Vec<f64>> = HashMap::new();
    let mut records = 0;
    for (n, line) in lines.enumerate() {
        let line_no = n + 2;
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        records += 1;
        if records > count {
            return Err(parse_error(
                line_no,
                format!("more records than the {count} in the header"),
            ));
        }
        let mut fields = line.split_whitespace();
        let token = fields.next().expect("non-empty line");
        let values = fields
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| parse_error(line_no, format!("{t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != dim {
            return Err(parse_error(
                line_no,
                format!(
                    "token {token:?} has {} values, header declares {dim}",
                    values.len()
                ),
            ));
        }
        if !seen.insert(token.to_string()) {
            return Err(parse_error(line_no, format!("duplicate token {token:?}")));
        }
        if wanted.contains(token) {
            vectors.insert(token.to_string(), values);
        }
    }
    if records != count {
        return Err(CliError::Invalid {
            module: "embeddings",
            message: format!("{path}: header declares {count} records, found {records}"),
        });
    }

    let mut missing: Vec<String> = Vec::new();
    for t in labels.iter().flat_map(|l| label_tokens(l)) {
        if !vectors.contains_key(t) && !missing.iter().any(|m| m == t) {
            missing.push(t.to_string());
        }
    }
    if !missing.is_empty() {
        return Err(CliError::MissingTokens {
            path: path.to_string(),
            tokens: missing,
        });
    }
    let rows = labels
        .iter()
        .map(|label| {
            let tokens = label_tokens(label);
            if tokens.is_empty() {
                return Err(CliError::Invalid {
                    module: "embeddings",
                    message: format!("label {label:?} has no tokens"),
                });
            }
            let mut row = vec![0.0; dim];
            for t in &tokens {
                for (r, v) in row.iter_mut().zip(&vectors[*t]) {
                    *r += v;
                }
            }
            row.iter_mut().for_each(|r| *r /= tokens.len() as f64);
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EmbeddingMatrix::from_rows(&rows)?)
}
