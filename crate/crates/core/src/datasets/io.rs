//! Plain-text sequence files.
//!
//! ```text
//! #SEQ walk-01 3 2
//! 1.0000000000000000e0 -2.5000000000000000e-1
//! 9.0000000000000002e-1 -2.0000000000000001e-1
//! 8.0000000000000004e-1 -1.5000000000000000e-1
//!
//! #SEQ walk-02 ...
//! ```
//!
//! Each block is a `#SEQ id T d` header followed by `T` rows of `d` numbers
//! separated by single spaces; blocks are separated by one blank line.
//! Values are written with 17 significant digits so they parse back
//! bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::Sequence;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn sequences_to_text(seqs: &[Sequence]) -> Result<String> {
    let mut out = String::new();
    for (i, s) in seqs.iter().enumerate() {
        if s.id().is_empty() || s.id().chars().any(char::is_whitespace) {
            return Err(Error::InvalidArgument(format!(
                "sequence id `{}` must be nonempty and free of whitespace",
                s.id()
            )));
        }
        if i > 0 {
            out.push('\n');
        }
        writeln!(out, "#SEQ {} {} {}", s.id(), s.len(), s.obs_dim()).unwrap();
        for t in 1..=s.len() {
            let row: Vec<String> = s.x(t).iter().map(|&v| format_value(v)).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn save_sequences(path: impl AsRef<Path>, seqs: &[Sequence]) -> Result<()> {
    fs::write(path, sequences_to_text(seqs)?)?;
    Ok(())
}

pub fn load_sequences(path: impl AsRef<Path>) -> Result<Vec<Sequence>> {
    parse_sequences(&fs::read_to_string(path)?)
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Splits on single spaces, keeping 1-based column positions.
fn tokens(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        match (c == ' ', start) {
            (true, Some(s)) => {
                out.push((s + 1, &line[s..i]));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s + 1, &line[s..]));
    }
    out
}

fn parse_count(line: usize, (col, tok): (usize, &str), what: &str) -> Result<usize> {
    match tok.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(parse_err(line, col, format!("expected positive integer {what}, found `{tok}`"))),
    }
}

pub fn parse_sequences(text: &str) -> Result<Vec<Sequence>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let mut seqs = Vec::new();
    while let Some((lineno, line)) = lines.next() {
        if line.trim().is_empty() {
            continue;
        }
        let toks = tokens(line);
        if toks.first().map(|t| t.1) != Some("#SEQ") {
            return Err(parse_err(lineno, 1, format!("expected `#SEQ id T d` header, found `{line}`")));
        }
        if toks.len() != 4 {
            return Err(parse_err(
                lineno,
                1,
                format!("header needs exactly `#SEQ id T d`, found {} fields", toks.len()),
            ));
        }
        let id = toks[1].1.to_string();
        let len = parse_count(lineno, toks[2], "T")?;
        let d = parse_count(lineno, toks[3], "d")?;
        let mut values = Vec::with_capacity(len * d);
        for row in 0..len {
            let Some((rl, rline)) = lines.next() else {
                return Err(parse_err(
                    lineno,
                    1,
                    format!("sequence `{id}` declares {len} rows but the file ends after {row}"),
                ));
            };
            let rtoks = tokens(rline);
            if rline.starts_with("#SEQ") || rtoks.is_empty() {
                return Err(parse_err(
                    rl,
                    1,
                    format!("sequence `{id}` declares {len} rows but only {row} are present"),
                ));
            }
            if rtoks.len() != d {
                return Err(Error::InconsistentDims {
                    line: rl,
                    sequence: id,
                    expected: d,
                    actual: rtoks.len(),
                });
            }
            for (col, tok) in rtoks {
                match tok.parse::<f64>() {
                    Ok(v) if v.is_finite() => values.push(v),
                    _ => return Err(parse_err(rl, col, format!("invalid number `{tok}`"))),
                }
            }
        }
        seqs.push(Sequence::new(id, Matrix::from_vec(len, d, values)?)?);
    }
    if seqs.is_empty() {
        return Err(parse_err(1, 1, "no sequences found (empty file)"));
    }
    Ok(seqs)
}
