//! GloVe text embeddings: `token v1 v2 ... vk` per line.
//!
//! Multi-word class names ("traffic light") are embedded as the mean of
//! their words' vectors.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::semdict::SemanticSpace;

fn words(class: &str) -> impl Iterator<Item = &str> {
    class.split_whitespace()
}

/// Reads the embeddings needed for `class_names` from a GloVe stream.
/// Every line must have the same dimension as the first.
pub fn read_glove<R: BufRead>(reader: R, class_names: &[String], path: &Path) -> Result<SemanticSpace> {
    let mut wanted: HashMap<&str, Option<Vec<f64>>> = class_names
        .iter()
        .flat_map(|c| words(c))
        .map(|w| (w, None))
        .collect();
    let mut dim: Option<usize> = None;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(' ').filter(|f| !f.is_empty());
        let token = fields.next().expect("non-empty line");
        let values: Vec<&str> = fields.collect();
        match dim {
            None if values.is_empty() => {
                return Err(Error::format(path, format!("line {}: no vector", lineno + 1)))
            }
            None => dim = Some(values.len()),
            Some(k) if k != values.len() => {
                return Err(Error::format(
                    path,
                    format!(
                        "line {}: inconsistent dimension {} (first line has {k})",
                        lineno + 1,
                        values.len()
                    ),
                ))
            }
            Some(_) => {}
        }
        if let Some(slot) = wanted.get_mut(token) {
            if slot.is_some() {
                continue;
            }
            let parsed = values
                .iter()
                .map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| {
                    Error::format(path, format!("line {}: malformed number", lineno + 1))
                })?;
            *slot = Some(parsed);
        }
    }

    let k = dim.ok_or_else(|| Error::format(path, "empty embedding file"))?;
    let missing: Vec<String> = class_names
        .iter()
        .filter(|c| words(c).next().is_none() || words(c).any(|w| wanted[w].is_none()))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingToken {
            path: path.to_path_buf(),
            classes: missing,
        });
    }

    let mut columns = Vec::with_capacity(class_names.len());
    for class in class_names {
        let parts: Vec<&Vec<f64>> = words(class)
            .map(|w| wanted[w].as_ref().expect("checked above"))
            .collect();
        let n = parts.len() as f64;
        columns.push((0..k).map(|j| parts.iter().map(|p| p[j]).sum::<f64>() / n).collect::<Vec<_>>());
    }
    let s = Matrix::from_fn(k, class_names.len(), |r, c| columns[c][r]);
    SemanticSpace::new(s, class_names.to_vec())
}

pub fn load_glove(path: impl AsRef<Path>, class_names: &[String]) -> Result<SemanticSpace> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_glove(BufReader::new(file), class_names, path)
}

/// Writes one line per column of `embeddings`, named by `tokens`.
pub(crate) fn write_glove<W: Write>(mut out: W, tokens: &[String], embeddings: &Matrix) -> std::io::Result<()> {
    for (c, token) in tokens.iter().enumerate() {
        write!(out, "{token}")?;
        for r in 0..embeddings.rows() {
            write!(out, " {}", embeddings.get(r, c))?;
        }
        writeln!(out)?;
    }
    Ok(())
}
