//! `key = value` text files: one pair per line, `#` starts a comment, blank
//! lines ignored. Keys may repeat; callers decide what repetition means.

use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub fn parse(text: &str) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Parse(format!("line {}: expected `key = value`, got `{line}`", idx + 1))
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Parse(format!("line {}: empty key", idx + 1)));
        }
        out.push(Entry {
            line: idx + 1,
            key: key.to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

pub fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Parse(format!("`{key}`: cannot parse `{value}`: {e}")))
}

/// Splits `a=1 b=2` into pairs.
pub fn parse_inline_pairs(text: &str) -> Result<Vec<(String, String)>> {
    text.split_whitespace()
        .map(|tok| {
            tok.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::Parse(format!("expected `name=value`, got `{tok}`")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blanks() {
        let entries = parse("# header\n\na = 1\n b=two # trailing\n").unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].key, "a");
        assert_eq!(entries[1].value, "two");
        assert_eq!(entries[1].line, 4);
    }

    #[test]
    fn rejects_lines_without_equals() {
        assert!(parse("just words").is_err());
        assert!(parse("= 3").is_err());
    }

    #[test]
    fn inline_pairs() {
        let pairs = parse_inline_pairs("start=3 duration=1").unwrap();
        assert_eq!(pairs[1], ("duration".to_string(), "1".to_string()));
        assert!(parse_inline_pairs("start 3").is_err());
    }
}
