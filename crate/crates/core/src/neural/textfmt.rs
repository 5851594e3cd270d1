//! Line-oriented text encoding shared by network and agent checkpoints.

use std::fmt::Write as _;

use crate::{Error, Result};

/// Significant digits used for every float; enough for an exact round trip.
pub const FLOAT_DIGITS: usize = 17;

const PER_LINE: usize = 6;

pub fn write_f64s(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let mut n = 0;
    for v in values {
        if n > 0 {
            out.push(if n % PER_LINE == 0 { '\n' } else { ' ' });
        }
        let _ = write!(out, "{:.*e}", FLOAT_DIGITS - 1, v);
        n += 1;
    }
    if n > 0 {
        out.push('\n');
    }
}

pub fn read_f64s(line: &str) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| Error::parse("float array", format!("{t:?}: {e}"))))
        .collect()
}

/// Cursor over the non-empty lines of a checkpoint.
pub struct TextReader<'a> {
    lines: std::iter::Peekable<std::iter::Filter<std::str::Lines<'a>, fn(&&str) -> bool>>,
}

impl<'a> TextReader<'a> {
    pub fn new(text: &'a str) -> Self {
        let non_empty: fn(&&str) -> bool = |l| !l.trim().is_empty();
        Self {
            lines: text.lines().filter(non_empty).peekable(),
        }
    }

    pub fn next_line(&mut self) -> Result<&'a str> {
        self.lines
            .next()
            .ok_or_else(|| Error::parse("checkpoint", "unexpected end of input"))
    }

    pub fn peek_key(&mut self) -> Option<&'a str> {
        self.lines.peek().and_then(|l| l.split_whitespace().next())
    }

    /// Reads a `key value..` line and returns the values.
    pub fn expect_key(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let line = self.next_line()?;
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some(k) if k == key => Ok(toks.collect()),
            other => Err(Error::parse("checkpoint", format!("expected {key:?}, found {other:?}"))),
        }
    }

    /// Reads a `key index len` header followed by `len` floats.
    pub fn read_array(&mut self, key: &str, index: usize, len: usize) -> Result<Vec<f64>> {
        let header = self.expect_key(key)?;
        let expected = [index.to_string(), len.to_string()];
        if header != expected {
            return Err(Error::parse("checkpoint", format!("{key} header {header:?}, expected {expected:?}")));
        }
        let mut values = Vec::with_capacity(len);
        while values.len() < len {
            values.extend(read_f64s(self.next_line()?)?);
        }
        if values.len() != len {
            return Err(Error::parse("checkpoint", format!("{key} {index}: {} values, expected {len}", values.len())));
        }
        Ok(values)
    }
}
