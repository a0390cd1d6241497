//! Plain-text interchange formats: model parameter files and datasets.
//!
//! A model file is line-oriented. `#` starts a comment, blank lines are
//! skipped, and every other line is `<directive> <integers...>`. Repeated
//! directive lines concatenate their values, so long parameter vectors can
//! wrap. Directives:
//!
//! - `layers` — the layer sizes, at least two;
//! - `scale_bits` — the fixed-point fractional bit count, which must match
//!   the scale this build evaluates with;
//! - `weights` — raw weight mantissas, flattened neuron-major (for each
//!   layer transition, for each destination neuron, one value per source
//!   node);
//! - `biases` — raw bias mantissas, one per non-input neuron in the same
//!   order.
//!
//! A data file is one point per line: whitespace-separated integers, the
//! last column being the class label, with the same `#`-comment rule.

use std::path::Path;

use thiserror::Error;

use crate::fixed::Mantissa;
use crate::hashing::{DataGroup, DataPoint};
use crate::nn::{ModelDefinition, NnError, WeightsBiases};

#[derive(Debug, Error)]
pub enum FilesError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: unknown directive {word:?}")]
    UnknownDirective { line: usize, word: String },
    #[error("line {line}: {text:?} is not an integer")]
    BadNumber { line: usize, text: String },
    #[error("missing {name} directive")]
    MissingDirective { name: &'static str },
    #[error("{what}: expected {expected} values, got {got}")]
    WrongCount {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("scale_bits is {got} but this build evaluates at {expected}")]
    ScaleMismatch { expected: u32, got: u32 },
    #[error("line {line}: expected {expected} columns, got {got}")]
    RaggedRow {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: a data row needs at least one feature and a label")]
    ShortRow { line: usize },
    #[error("no data rows found")]
    EmptyData,
    #[error("{count} points cannot be split into groups of {group_size}")]
    BadGrouping { count: usize, group_size: usize },
    #[error(transparent)]
    Model(#[from] NnError),
}

fn read_file(path: &Path) -> Result<String, FilesError> {
    std::fs::read_to_string(path).map_err(|source| FilesError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Strips the comment and yields (1-based line number, remaining text) for
/// every line that still has content.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            None
        } else {
            Some((i + 1, line))
        }
    })
}

fn parse_int<T: std::str::FromStr>(line: usize, text: &str) -> Result<T, FilesError> {
    text.parse().map_err(|_| FilesError::BadNumber {
        line,
        text: text.to_string(),
    })
}

/// Parses a model file into its shape and parameters, checking the
/// declared `scale_bits` against the scale `F` this instantiation uses.
pub fn parse_model_text<M: Mantissa, const F: u32>(
    text: &str,
) -> Result<(ModelDefinition, WeightsBiases<M, F>), FilesError> {
    let mut layers: Vec<usize> = Vec::new();
    let mut scale_bits: Vec<u32> = Vec::new();
    let mut weights: Vec<M> = Vec::new();
    let mut biases: Vec<M> = Vec::new();
    for (line, content) in content_lines(text) {
        let mut words = content.split_whitespace();
        let directive = words.next().expect("content lines are non-empty");
        match directive {
            "layers" => {
                for word in words {
                    layers.push(parse_int(line, word)?);
                }
            }
            "scale_bits" => {
                for word in words {
                    scale_bits.push(parse_int(line, word)?);
                }
            }
            "weights" => {
                for word in words {
                    weights.push(M::from(parse_int::<i64>(line, word)?));
                }
            }
            "biases" => {
                for word in words {
                    biases.push(M::from(parse_int::<i64>(line, word)?));
                }
            }
            other => {
                return Err(FilesError::UnknownDirective {
                    line,
                    word: other.to_string(),
                })
            }
        }
    }
    if layers.is_empty() {
        return Err(FilesError::MissingDirective { name: "layers" });
    }
    match scale_bits.as_slice() {
        [] => return Err(FilesError::MissingDirective { name: "scale_bits" }),
        [got] => {
            if *got != F {
                return Err(FilesError::ScaleMismatch {
                    expected: F,
                    got: *got,
                });
            }
        }
        more => {
            return Err(FilesError::WrongCount {
                what: "scale_bits",
                expected: 1,
                got: more.len(),
            })
        }
    }
    let model = ModelDefinition::new(layers)?;
    if weights.len() != model.weight_count() {
        return Err(FilesError::WrongCount {
            what: "weights",
            expected: model.weight_count(),
            got: weights.len(),
        });
    }
    if biases.len() != model.bias_count() {
        return Err(FilesError::WrongCount {
            what: "biases",
            expected: model.bias_count(),
            got: biases.len(),
        });
    }
    let params = WeightsBiases::from_mantissas(&model, &weights, &biases)?;
    Ok((model, params))
}

/// Renders a model in the same format `parse_model_text` reads: one
/// `weights` line per destination neuron and one `biases` line per layer
/// transition. Byte-deterministic for a given model.
pub fn render_model<M: Mantissa, const F: u32>(
    model: &ModelDefinition,
    params: &WeightsBiases<M, F>,
) -> String {
    let mut out = String::new();
    out.push_str("layers");
    for size in model.layer_sizes() {
        out.push_str(&format!(" {size}"));
    }
    out.push('\n');
    out.push_str(&format!("scale_bits {F}\n"));
    for transition in &params.weights {
        for neuron in transition {
            out.push_str("weights");
            for w in neuron {
                out.push_str(&format!(" {}", w.mantissa()));
            }
            out.push('\n');
        }
    }
    for layer in &params.biases {
        out.push_str("biases");
        for b in layer {
            out.push_str(&format!(" {}", b.mantissa()));
        }
        out.push('\n');
    }
    out
}

pub fn load_model<M: Mantissa, const F: u32>(
    path: &Path,
) -> Result<(ModelDefinition, WeightsBiases<M, F>), FilesError> {
    parse_model_text(&read_file(path)?)
}

pub fn write_model<M: Mantissa, const F: u32>(
    path: &Path,
    model: &ModelDefinition,
    params: &WeightsBiases<M, F>,
) -> Result<(), FilesError> {
    std::fs::write(path, render_model(model, params)).map_err(|source| FilesError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Parses a dataset: one point per line, last column the label, every row
/// the same width.
pub fn parse_data_text(text: &str) -> Result<Vec<DataPoint>, FilesError> {
    let mut points: Vec<DataPoint> = Vec::new();
    let mut width: Option<usize> = None;
    for (line, content) in content_lines(text) {
        let values: Vec<i64> = content
            .split_whitespace()
            .map(|word| parse_int(line, word))
            .collect::<Result<_, _>>()?;
        if values.len() < 2 {
            return Err(FilesError::ShortRow { line });
        }
        match width {
            None => width = Some(values.len()),
            Some(expected) if expected != values.len() => {
                return Err(FilesError::RaggedRow {
                    line,
                    expected,
                    got: values.len(),
                })
            }
            Some(_) => {}
        }
        let (label, inputs) = values.split_last().expect("checked len >= 2");
        points.push(DataPoint {
            inputs: inputs.to_vec(),
            label: *label,
        });
    }
    if points.is_empty() {
        return Err(FilesError::EmptyData);
    }
    Ok(points)
}

pub fn load_data_points(path: &Path) -> Result<Vec<DataPoint>, FilesError> {
    parse_data_text(&read_file(path)?)
}

/// Splits points into consecutive groups of `group_size`; the count must
/// divide evenly.
pub fn group_points(points: Vec<DataPoint>, group_size: usize) -> Result<Vec<DataGroup>, FilesError> {
    if group_size == 0 || !points.len().is_multiple_of(group_size) {
        return Err(FilesError::BadGrouping {
            count: points.len(),
            group_size,
        });
    }
    Ok(points
        .chunks(group_size)
        .map(|chunk| DataGroup {
            points: chunk.to_vec(),
        })
        .collect())
}
