//! Helpers shared by the line-oriented file formats (platform, manifest,
//! scenario, cost overrides).

use std::collections::BTreeMap;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub msg: String,
}

impl ParseError {
    pub fn new(line: usize, msg: impl Into<String>) -> Self {
        Self {
            line,
            msg: msg.into(),
        }
    }
}

/// One non-empty line split into bare words and `key=value` options.
#[derive(Debug, Clone)]
pub struct Directive<'a> {
    pub line: usize,
    pub keyword: &'a str,
    pub words: Vec<&'a str>,
    options: BTreeMap<&'a str, &'a str>,
}

/// Yields a directive per line, skipping blanks and `#` comments.
pub fn directives(src: &str) -> impl Iterator<Item = Result<Directive<'_>, ParseError>> {
    src.lines().enumerate().filter_map(|(i, raw)| {
        let line = i + 1;
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            return None;
        }
        let mut tokens = text.split_whitespace();
        let keyword = tokens.next()?;
        let mut words = Vec::new();
        let mut options = BTreeMap::new();
        for tok in tokens {
            match tok.split_once('=') {
                Some((k, v)) => {
                    if k.is_empty() || v.is_empty() {
                        return Some(Err(ParseError::new(line, format!("malformed option `{tok}`"))));
                    }
                    if options.insert(k, v).is_some() {
                        return Some(Err(ParseError::new(line, format!("duplicate option `{k}`"))));
                    }
                }
                None if options.is_empty() => words.push(tok),
                None => {
                    return Some(Err(ParseError::new(
                        line,
                        format!("positional `{tok}` after options"),
                    )))
                }
            }
        }
        Some(Ok(Directive {
            line,
            keyword,
            words,
            options,
        }))
    })
}

impl<'a> Directive<'a> {
    pub fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError::new(self.line, msg)
    }

    /// Exactly `n` positional words.
    pub fn expect_words(&self, n: usize) -> Result<&[&'a str], ParseError> {
        if self.words.len() != n {
            return Err(self.err(format!(
                "`{}` takes {n} positional argument(s), found {}",
                self.keyword,
                self.words.len()
            )));
        }
        Ok(&self.words)
    }

    /// Rejects options outside `allowed`.
    pub fn only_options(&self, allowed: &[&str]) -> Result<(), ParseError> {
        match self.options.keys().find(|k| !allowed.contains(k)) {
            Some(k) => Err(self.err(format!("unknown key `{k}` for `{}`", self.keyword))),
            None => Ok(()),
        }
    }

    pub fn raw(&self, key: &str) -> Option<&'a str> {
        self.options.get(key).copied()
    }

    pub fn options(&self) -> impl Iterator<Item = (&'a str, &'a str)> + '_ {
        self.options.iter().map(|(k, v)| (*k, *v))
    }

    pub fn required(&self, key: &str) -> Result<&'a str, ParseError> {
        self.raw(key)
            .ok_or_else(|| self.err(format!("missing `{key}=` for `{}`", self.keyword)))
    }

    pub fn hex(&self, key: &str) -> Result<u32, ParseError> {
        let v = self.required(key)?;
        parse_hex(v).ok_or_else(|| self.err(format!("`{key}` expects a hex u32, got `{v}`")))
    }

    pub fn num<T: FromStr>(&self, key: &str) -> Result<T, ParseError> {
        let v = self.required(key)?;
        v.parse()
            .map_err(|_| self.err(format!("`{key}` has invalid value `{v}`")))
    }

    pub fn num_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ParseError> {
        match self.raw(key) {
            Some(_) => self.num(key),
            None => Ok(default),
        }
    }

    pub fn width(&self, key: &str) -> Result<u8, ParseError> {
        match self.num::<u8>(key)? {
            w @ (1 | 2 | 4) => Ok(w),
            w => Err(self.err(format!("width must be 1, 2 or 4, got {w}"))),
        }
    }
}

/// Accepts `0x`-prefixed or bare hexadecimal.
pub fn parse_hex(s: &str) -> Option<u32> {
    let digits = s
        .strip_prefix("0x")
        .or_else(|| s.strip_prefix("0X"))
        .unwrap_or(s);
    if digits.is_empty() {
        return None;
    }
    u32::from_str_radix(&digits.replace('_', ""), 16).ok()
}
