//! Plain-text encoder checkpoints.
//!
//! ```text
//! scns-mlp 1
//! layers <hidden count>
//! dense <inputs> <outputs>      one line per layer: hidden..., classifier, projector
//! <weights, one row per line>
//! <bias>
//! ```
//!
//! Values use the shortest decimal form that parses back to the same bits.

use std::io::{BufRead, Write};

use ndarray::{Array1, Array2};

use crate::error::{HarnessError, Result};
use crate::mlp::{Dense, MlpEncoder};

pub const MAGIC: &str = "scns-mlp";
pub const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(encoder: &MlpEncoder, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{MAGIC} {VERSION}")?;
    writeln!(out, "layers {}", encoder.hidden.len())?;
    for l in encoder.layers() {
        writeln!(out, "dense {} {}", l.inputs(), l.outputs())?;
    }
    for l in encoder.layers() {
        for row in l.weights.rows() {
            write_line(&mut out, row.iter())?;
        }
        write_line(&mut out, l.bias.iter())?;
    }
    Ok(())
}

fn write_line<'a, W: Write>(
    out: &mut W,
    values: impl Iterator<Item = &'a f64>,
) -> std::io::Result<()> {
    let line: Vec<String> = values.map(|v| format!("{v:e}")).collect();
    writeln!(out, "{}", line.join(" "))
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    path: String,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<String> {
        self.line += 1;
        match self.inner.next() {
            Some(l) => Ok(l?),
            None => Err(self.error("unexpected end of file")),
        }
    }

    fn error(&self, message: impl Into<String>) -> HarnessError {
        HarnessError::Parse {
            path: self.path.clone(),
            line: self.line,
            message: message.into(),
        }
    }

    fn numbers(&mut self, expected: usize) -> Result<Vec<f64>> {
        let text = self.next()?;
        let values = text
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| self.error(format!("{t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != expected {
            return Err(self.error(format!(
                "expected {expected} values, found {}",
                values.len()
            )));
        }
        Ok(values)
    }
}

/// Reads a checkpoint; `path` only labels error messages.
pub fn read_checkpoint<R: BufRead>(input: R, path: &str) -> Result<MlpEncoder> {
    let mut lines = Lines {
        inner: input.lines(),
        path: path.to_string(),
        line: 0,
    };
    let header = lines.next()?;
    if header != format!("{MAGIC} {VERSION}") {
        return Err(lines.error(format!(
            "expected header \"{MAGIC} {VERSION}\", found {header:?}"
        )));
    }
    let count = lines.next()?;
    let hidden: usize = count
        .strip_prefix("layers ")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| lines.error("expected \"layers <count>\""))?;
    let mut dims = Vec::with_capacity(hidden + 2);
    for _ in 0..hidden + 2 {
        let text = lines.next()?;
        let parts: Vec<&str> = text.split_whitespace().collect();
        let dim = match parts.as_slice() {
            ["dense", i, o] => i.parse::<usize>().ok().zip(o.parse::<usize>().ok()),
            _ => None,
        };
        dims.push(dim.ok_or_else(|| lines.error("expected \"dense <inputs> <outputs>\""))?);
    }
    let mut layers = Vec::with_capacity(dims.len());
    for (inputs, outputs) in dims {
        let mut weights = Array2::zeros((inputs, outputs));
        for mut row in weights.rows_mut() {
            row.assign(&Array1::from(lines.numbers(outputs)?));
        }
        let bias = Array1::from(lines.numbers(outputs)?);
        layers.push(Dense { weights, bias });
    }
    let projector = layers.pop().expect("at least two layers");
    let classifier = layers.pop().expect("at least two layers");
    MlpEncoder::from_layers(layers, classifier, projector)
}
