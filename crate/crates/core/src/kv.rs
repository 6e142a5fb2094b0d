//! Flat `key = value` text files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are unique;
//! values are kept as strings and parsed by the consumer.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

pub type KvMap = BTreeMap<String, String>;

pub fn parse(text: &str) -> Result<KvMap> {
    let mut map = KvMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected `key = value`, got `{line}`", lineno + 1))
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
        }
        let value = value.trim().trim_matches('"').to_string();
        if map.insert(key.to_string(), value).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key `{key}`", lineno + 1)));
        }
    }
    Ok(map)
}

pub fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value.parse::<f64>().map_err(|_| Error::InvalidParam {
        name: key.to_string(),
        reason: format!("`{value}` is not a decimal number"),
    })
}

/// Parses every value as a real number.
pub fn parse_reals(text: &str) -> Result<BTreeMap<String, f64>> {
    parse(text)?
        .into_iter()
        .map(|(k, v)| parse_f64(&k, &v).map(|x| (k, x)))
        .collect()
}

pub fn render_reals(map: &BTreeMap<String, f64>) -> String {
    let mut out = String::new();
    for (k, v) in map {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let map = parse("# header\n a = 1.5\n\nb=-2 \n").unwrap();
        assert_eq!(map["a"], "1.5");
        assert_eq!(map["b"], "-2");
    }

    #[test]
    fn rejects_duplicates_and_garbage() {
        assert!(parse("a = 1\na = 2").is_err());
        assert!(parse("just words").is_err());
        assert!(parse_reals("a = one").is_err());
    }

    #[test]
    fn reals_round_trip() {
        let map = parse_reals("eps = 0.1\nb = 0.5").unwrap();
        assert_eq!(parse_reals(&render_reals(&map)).unwrap(), map);
    }
}
