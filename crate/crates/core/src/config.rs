//! Strict flat `key = value` configuration text.
//!
//! ```text
//! # comment
//! omega_c = 100 Hz
//! pm_target = 40 deg
//! bandwidths = 50 Hz, 100 Hz, 200 Hz
//! gamma = 0
//! ```
//!
//! Physical quantities must carry a unit: frequencies `Hz` or `rad/s`
//! (returned in rad/s), times `s`, angles `deg` or `rad` (returned in
//! degrees), masses `kg`. Dimensionless numbers are written bare. Keys may
//! appear once. Every key must be consumed by the reader; [`Config::finish`]
//! rejects whatever is left.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// Longest accepted input, in bytes.
pub const MAX_CONFIG_BYTES: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    key: String,
    value: String,
    line: usize,
}

/// A parsed configuration with consumption tracking.
#[derive(Debug)]
pub struct Config {
    entries: Vec<Entry>,
    used: RefCell<BTreeSet<String>>,
}

/// Physical dimension of a quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Frequency,
    Time,
    Angle,
    Mass,
}

impl Dimension {
    fn units(self) -> &'static str {
        match self {
            Dimension::Frequency => "Hz or rad/s",
            Dimension::Time => "s",
            Dimension::Angle => "deg or rad",
            Dimension::Mass => "kg",
        }
    }

    /// Factor to the canonical unit (rad/s, s, deg, kg).
    fn scale(self, unit: &str) -> Option<f64> {
        match (self, unit) {
            (Dimension::Frequency, "Hz") => Some(TAU),
            (Dimension::Frequency, "rad/s") => Some(1.0),
            (Dimension::Time, "s") => Some(1.0),
            (Dimension::Angle, "deg") => Some(1.0),
            (Dimension::Angle, "rad") => Some(180.0 / std::f64::consts::PI),
            (Dimension::Mass, "kg") => Some(1.0),
            _ => None,
        }
    }
}

fn is_key(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

fn config_error(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("line {line}: {msg}"))
}

/// Parses a finite number; rejects `inf`/`nan` spellings.
fn parse_number(text: &str) -> Option<f64> {
    let ok = !text.is_empty()
        && text
            .chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'));
    text.parse::<f64>().ok().filter(|v| ok && v.is_finite())
}

impl Config {
    /// Parses configuration text.
    pub fn parse(text: &str) -> Result<Self> {
        if text.len() > MAX_CONFIG_BYTES {
            return Err(Error::Config(format!("input exceeds {MAX_CONFIG_BYTES} bytes")));
        }
        let mut entries: Vec<Entry> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(config_error(line, format!("expected `key = value`, got `{content}`")));
            };
            let (key, value) = (key.trim(), value.trim());
            if !is_key(key) {
                return Err(config_error(line, format!("invalid key `{key}`")));
            }
            if value.is_empty() {
                return Err(config_error(line, format!("key `{key}` has no value")));
            }
            if let Some(prev) = entries.iter().find(|e| e.key == key) {
                return Err(config_error(
                    line,
                    format!("duplicate key `{key}` (first set on line {})", prev.line),
                ));
            }
            entries.push(Entry {
                key: key.to_string(),
                value: value.to_string(),
                line,
            });
        }
        Ok(Self {
            entries,
            used: RefCell::new(BTreeSet::new()),
        })
    }

    fn entry(&self, key: &str) -> Option<&Entry> {
        let e = self.entries.iter().find(|e| e.key == key)?;
        self.used.borrow_mut().insert(key.to_string());
        Some(e)
    }

    fn required<T>(&self, key: &str, value: Option<T>) -> Result<T> {
        value.ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.iter().any(|e| e.key == key)
    }

    /// Keys in file order.
    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.key.as_str())
    }

    pub fn opt_text(&self, key: &str) -> Result<Option<String>> {
        Ok(self.entry(key).map(|e| e.value.clone()))
    }

    pub fn text(&self, key: &str) -> Result<String> {
        let v = self.opt_text(key)?;
        self.required(key, v)
    }

    /// A dimensionless number (no unit allowed).
    pub fn opt_number(&self, key: &str) -> Result<Option<f64>> {
        let Some(e) = self.entry(key) else { return Ok(None) };
        parse_number(&e.value).map(Some).ok_or_else(|| {
            config_error(
                e.line,
                format!("`{key}` must be a plain finite number, got `{}`", e.value),
            )
        })
    }

    pub fn number(&self, key: &str) -> Result<f64> {
        let v = self.opt_number(key)?;
        self.required(key, v)
    }

    pub fn opt_integer(&self, key: &str) -> Result<Option<usize>> {
        let Some(e) = self.entry(key) else { return Ok(None) };
        e.value.parse::<usize>().map(Some).map_err(|_| {
            config_error(
                e.line,
                format!("`{key}` must be a non-negative integer, got `{}`", e.value),
            )
        })
    }

    pub fn integer(&self, key: &str) -> Result<usize> {
        let v = self.opt_integer(key)?;
        self.required(key, v)
    }

    pub fn opt_bool(&self, key: &str) -> Result<Option<bool>> {
        let Some(e) = self.entry(key) else { return Ok(None) };
        match e.value.as_str() {
            "true" => Ok(Some(true)),
            "false" => Ok(Some(false)),
            other => Err(config_error(
                e.line,
                format!("`{key}` must be true or false, got `{other}`"),
            )),
        }
    }

    /// A quantity in canonical units (rad/s, s, deg, kg).
    pub fn opt_quantity(&self, key: &str, dim: Dimension) -> Result<Option<f64>> {
        let Some(e) = self.entry(key) else { return Ok(None) };
        parse_quantity(&e.value, dim)
            .map(Some)
            .map_err(|msg| config_error(e.line, format!("`{key}`: {msg}")))
    }

    pub fn quantity(&self, key: &str, dim: Dimension) -> Result<f64> {
        let v = self.opt_quantity(key, dim)?;
        self.required(key, v)
    }

    /// Comma-separated list of quantities.
    pub fn opt_quantity_list(&self, key: &str, dim: Dimension) -> Result<Option<Vec<f64>>> {
        let Some(e) = self.entry(key) else { return Ok(None) };
        e.value
            .split(',')
            .map(|item| parse_quantity(item.trim(), dim).map_err(|msg| config_error(e.line, format!("`{key}`: {msg}"))))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    pub fn frequency(&self, key: &str) -> Result<f64> {
        self.quantity(key, Dimension::Frequency)
    }

    pub fn opt_frequency(&self, key: &str) -> Result<Option<f64>> {
        self.opt_quantity(key, Dimension::Frequency)
    }

    /// Fails on the first key that no reader asked for.
    pub fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        match self.entries.iter().find(|e| !used.contains(&e.key)) {
            Some(e) => Err(config_error(e.line, format!("unknown key `{}`", e.key))),
            None => Ok(()),
        }
    }
}

/// Parses `"<number> <unit>"` (the space is optional).
pub fn parse_quantity(text: &str, dim: Dimension) -> std::result::Result<f64, String> {
    // no accepted unit starts with `e`, so exponent markers stay with the number
    let split = text.find(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E');
    let (num, unit) = match split {
        Some(i) => (text[..i].trim(), text[i..].trim()),
        None => (text.trim(), ""),
    };
    if unit.is_empty() {
        return Err(format!("`{text}` is missing a unit ({})", dim.units()));
    }
    let value = parse_number(num).ok_or_else(|| format!("`{num}` is not a finite number"))?;
    let scale = dim
        .scale(unit)
        .ok_or_else(|| format!("unit `{unit}` is not valid here (expected {})", dim.units()))?;
    Ok(value * scale)
}

/// Formats a quantity for writing back (`{value:?} {unit}` round-trips exactly).
pub fn format_quantity(value: f64, unit: &str) -> String {
    format!("{value:?} {unit}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_units() {
        let c = Config::parse(
            "a = 100 Hz\nb = 3 rad/s # trailing\n\n# only comment\nc = 0.5s\nd = 90 deg\ne = 1 rad\nf = 2 kg",
        )
        .unwrap();
        assert!((c.frequency("a").unwrap() - TAU * 100.0).abs() < 1e-12);
        assert_eq!(c.frequency("b").unwrap(), 3.0);
        assert_eq!(c.quantity("c", Dimension::Time).unwrap(), 0.5);
        assert_eq!(c.quantity("d", Dimension::Angle).unwrap(), 90.0);
        assert!((c.quantity("e", Dimension::Angle).unwrap() - 57.29577951308232).abs() < 1e-12);
        assert_eq!(c.quantity("f", Dimension::Mass).unwrap(), 2.0);
        c.finish().unwrap();
    }

    #[test]
    fn exponent_numbers_keep_their_unit() {
        assert_eq!(parse_quantity("3e-6 s", Dimension::Time).unwrap(), 3e-6);
        assert_eq!(parse_quantity("1.5E2Hz", Dimension::Frequency).unwrap(), 1.5e2 * TAU);
    }

    #[test]
    fn missing_unit_is_rejected() {
        let c = Config::parse("omega_c = 100").unwrap();
        let err = c.frequency("omega_c").unwrap_err().to_string();
        assert!(err.contains("missing a unit"), "{err}");
    }

    #[test]
    fn wrong_unit_is_rejected() {
        let c = Config::parse("t = 3 Hz").unwrap();
        assert!(c.quantity("t", Dimension::Time).is_err());
        let c = Config::parse("w = 3 rad").unwrap();
        assert!(c.frequency("w").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let c = Config::parse("gamma = 0\ntypo_key = 1").unwrap();
        c.number("gamma").unwrap();
        let err = c.finish().unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("typo_key"), "{err}");
    }

    #[test]
    fn duplicates_and_syntax_errors() {
        assert!(Config::parse("a = 1\na = 2").is_err());
        assert!(Config::parse("just text").is_err());
        assert!(Config::parse("Bad = 1").is_err());
        assert!(Config::parse("a =").is_err());
    }

    #[test]
    fn plain_numbers_must_be_finite_and_unitless() {
        let c = Config::parse("a = inf\nb = 1 Hz\nc = NaN\nd = -0.5").unwrap();
        assert!(c.number("a").is_err());
        assert!(c.number("b").is_err());
        assert!(c.number("c").is_err());
        assert_eq!(c.number("d").unwrap(), -0.5);
    }

    #[test]
    fn missing_required_key() {
        let c = Config::parse("").unwrap();
        assert!(matches!(c.number("beta"), Err(Error::Config(_))));
        assert_eq!(c.opt_number("beta").unwrap(), None);
    }

    #[test]
    fn quantity_lists() {
        let c = Config::parse("bw = 50 Hz, 100 Hz,200Hz").unwrap();
        let v = c.opt_quantity_list("bw", Dimension::Frequency).unwrap().unwrap();
        assert_eq!(v.len(), 3);
        assert!((v[2] - TAU * 200.0).abs() < 1e-9);
        let c = Config::parse("bw = 50 Hz, 100").unwrap();
        assert!(c.opt_quantity_list("bw", Dimension::Frequency).is_err());
    }

    proptest! {
        #[test]
        fn quantities_round_trip(v in -1e9..1e9f64) {
            let text = format_quantity(v, "rad/s");
            prop_assert_eq!(parse_quantity(&text, Dimension::Frequency).unwrap(), v);
        }

        #[test]
        fn parser_never_panics(text in "\\PC{0,200}") {
            if let Ok(c) = Config::parse(&text) {
                let keys: Vec<String> = c.keys().map(String::from).collect();
                for k in keys {
                    let _ = c.frequency(&k);
                    let _ = c.number(&k);
                }
            }
        }
    }
}
