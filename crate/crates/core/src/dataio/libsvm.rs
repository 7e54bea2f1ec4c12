//! LIBSVM / svmlight text format: `<label> <idx>:<val> <idx>:<val> ...`
//! with 1-based, strictly increasing feature indices.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use serde::{Deserialize, Serialize};

use super::{Dataset, Sample};
use crate::error::{Error, Result};

/// How label tokens map onto `{-1, +1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum LabelMode {
    /// Only `+1`, `1` and `-1` (any float spelling of ±1) are accepted.
    #[default]
    Strict,
    /// Additionally accept `0`, mapped to `-1`.
    ZeroOne,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(default)]
pub struct ParseOptions {
    pub label_mode: LabelMode,
    /// Force the feature dimension (must be ≥ the largest index seen).
    pub dim: Option<usize>,
    /// Append a constant-1 feature after the last dimension.
    pub add_bias: bool,
}

fn parse_label(tok: &str, mode: LabelMode) -> std::result::Result<f64, String> {
    let v: f64 = tok
        .parse()
        .map_err(|_| format!("label {tok:?} is not numeric"))?;
    match (v, mode) {
        (1.0, _) => Ok(1.0),
        (-1.0, _) => Ok(-1.0),
        (0.0, LabelMode::ZeroOne) => Ok(-1.0),
        _ => Err(format!("label {tok:?} is not a binary label for {mode:?} mode")),
    }
}

fn parse_line(line: &str, mode: LabelMode) -> std::result::Result<Option<Sample>, String> {
    let body = match line.find('#') {
        Some(p) => &line[..p],
        None => line,
    };
    let mut toks = body.split_ascii_whitespace();
    let Some(label_tok) = toks.next() else {
        return Ok(None);
    };
    let label = parse_label(label_tok, mode)?;
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for tok in toks {
        let (idx, val) = tok
            .split_once(':')
            .ok_or_else(|| format!("token {tok:?} is not idx:value"))?;
        let idx: u64 = idx
            .parse()
            .map_err(|_| format!("feature index {idx:?} is not a positive integer"))?;
        if idx == 0 || idx > u32::MAX as u64 {
            return Err(format!("feature index {idx} out of range (indices are 1-based)"));
        }
        let val: f64 = val
            .parse()
            .map_err(|_| format!("feature value {val:?} is not a number"))?;
        if !val.is_finite() {
            return Err(format!("feature value {val} is not finite"));
        }
        let j = (idx - 1) as u32;
        if let Some(&prev) = indices.last() {
            if j <= prev {
                return Err(format!(
                    "feature indices not strictly increasing ({} after {})",
                    idx,
                    prev + 1
                ));
            }
        }
        indices.push(j);
        values.push(val);
    }
    Ok(Some(Sample {
        label,
        indices,
        values,
    }))
}

pub fn parse_libsvm<R: BufRead>(reader: R, opts: &ParseOptions) -> Result<Dataset> {
    let mut samples = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: n + 1,
            message: e.to_string(),
        })?;
        match parse_line(&line, opts.label_mode) {
            Ok(Some(s)) => samples.push(s),
            Ok(None) => {}
            Err(message) => return Err(Error::Parse { line: n + 1, message }),
        }
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let ds = Dataset::from_samples(samples, opts.dim)?;
    if !opts.add_bias {
        return Ok(ds);
    }
    let bias = ds.dim() as u32;
    let with_bias = ds
        .samples()
        .into_iter()
        .map(|mut s| {
            s.indices.push(bias);
            s.values.push(1.0);
            s
        })
        .collect();
    Dataset::from_samples(with_bias, Some(ds.dim() + 1))
}

/// Reads a LIBSVM file; paths ending in `.gz` are decompressed on the fly.
pub fn read_libsvm(path: impl AsRef<Path>, opts: &ParseOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let inner: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(MultiGzDecoder::new(file))
    } else {
        Box::new(file)
    };
    parse_libsvm(BufReader::new(inner), opts)
}

pub fn write_libsvm<W: Write>(ds: &Dataset, mut w: W) -> std::io::Result<()> {
    for r in ds.rows() {
        write!(w, "{}", if r.label > 0.0 { "+1" } else { "-1" })?;
        for (&j, &v) in r.indices.iter().zip(r.values) {
            write!(w, " {}:{}", j + 1, v)?;
        }
        writeln!(w)?;
    }
    Ok(())
}
