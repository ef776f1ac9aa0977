//! Line-oriented helpers shared by the plain-text formats.

use std::io::BufRead;
use std::str::FromStr;

use crate::{Error, Result};

/// Reads non-empty lines and keeps a 1-based line counter for error messages.
pub(crate) struct LineReader<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> LineReader<R> {
    pub(crate) fn new(r: R) -> Self {
        LineReader {
            inner: r.lines(),
            line: 0,
        }
    }

    pub(crate) fn line(&self) -> usize {
        self.line
    }

    /// Next non-blank line, or `None` at end of input.
    pub(crate) fn next_opt(&mut self) -> Result<Option<(usize, String)>> {
        for l in self.inner.by_ref() {
            self.line += 1;
            let l = l?;
            if !l.trim().is_empty() {
                return Ok(Some((self.line, l.trim_end().to_string())));
            }
        }
        Ok(None)
    }

    /// Next non-blank line; end of input is a truncation error.
    pub(crate) fn next_line(&mut self) -> Result<(usize, String)> {
        self.next_opt()?
            .ok_or_else(|| Error::parse(self.line + 1, "unexpected end of file (truncated?)"))
    }

    /// Parses exactly `N` whitespace-separated values from the next line.
    pub(crate) fn parse_fixed<T: FromStr + Copy + Default, const N: usize>(
        &mut self,
    ) -> Result<[T; N]>
    where
        T::Err: std::fmt::Display,
    {
        let (no, line) = self.next_line()?;
        parse_array(no, &line)
    }

    /// Requires the next line to be exactly `expected`.
    pub(crate) fn expect_version(&mut self, expected: &str) -> Result<()> {
        let (_, line) = self.next_line()?;
        if line.trim() != expected {
            return Err(Error::Version {
                expected: expected.into(),
                found: line,
            });
        }
        Ok(())
    }
}

pub(crate) fn parse_array<T: FromStr + Copy + Default, const N: usize>(
    no: usize,
    line: &str,
) -> Result<[T; N]>
where
    T::Err: std::fmt::Display,
{
    let mut out = [T::default(); N];
    let mut it = line.split_whitespace();
    for slot in out.iter_mut() {
        let tok = it
            .next()
            .ok_or_else(|| Error::parse(no, format!("expected {N} values")))?;
        *slot = tok
            .parse()
            .map_err(|e: T::Err| Error::parse(no, format!("`{tok}`: {e}")))?;
    }
    if it.next().is_some() {
        return Err(Error::parse(no, format!("expected {N} values, found more")));
    }
    Ok(out)
}

pub(crate) fn parse_value<T: FromStr>(no: usize, tok: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    tok.parse()
        .map_err(|e: T::Err| Error::parse(no, format!("`{tok}`: {e}")))
}
