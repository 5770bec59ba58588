//! Sectioned `key = value` configuration.
//!
//! ```text
//! # comment
//! [system]
//! lambda1 = 0.5
//! [sweep]
//! lambda2 = 0:3:151      # start:stop:count, endpoints included
//! ```
//!
//! Every key must appear in [`SCHEMA`]. Values set with `--set section.key=value`
//! replace file values; schema defaults fill the rest.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Keys that take a grid range in `[sweep]`.
pub const AXIS_KEYS: [&str; 9] = [
    "lambda1",
    "lambda2",
    "lambda_locked",
    "u",
    "t_hot",
    "t_cold",
    "detuning",
    "tau_ad",
    "tau_th",
];

/// A recognised key with its default.
#[derive(Debug, Clone, Copy)]
pub struct KeySpec {
    pub section: &'static str,
    pub key: &'static str,
    /// None means no default; some subcommands require it.
    pub default: Option<&'static str>,
    pub help: &'static str,
}

const fn k(section: &'static str, key: &'static str, default: Option<&'static str>, help: &'static str) -> KeySpec {
    KeySpec { section, key, default, help }
}

pub const SCHEMA: &[KeySpec] = &[
    k("system", "omega_hot", Some("2"), "oscillator frequency of the hot medium"),
    k("system", "omega_cold", Some("1"), "oscillator frequency of the cold medium"),
    k("system", "lambda1", None, "rotating coupling"),
    k("system", "lambda2", None, "counter-rotating coupling"),
    k("system", "u", None, "Stark coupling"),
    k("system", "detuning", Some("0"), "qubit splitting minus oscillator frequency"),
    k("system", "n_max", Some("40"), "highest Fock state kept"),
    k("bath", "t_hot", None, "hot bath temperature"),
    k("bath", "t_cold", None, "cold bath temperature"),
    k("bath", "coupling", Some("0.001"), "Ohmic coupling strength"),
    k("bath", "cutoff", Some("10"), "Ohmic cutoff frequency"),
    k("bath", "channels", Some("boson,qubit"), "system operators coupled to the baths"),
    k("sweep", "lambda1", None, "grid over the rotating coupling"),
    k("sweep", "lambda2", None, "grid over the counter-rotating coupling"),
    k("sweep", "lambda_locked", None, "grid with both couplings equal"),
    k("sweep", "u", None, "grid over the Stark coupling"),
    k("sweep", "t_hot", None, "grid over the hot temperature"),
    k("sweep", "t_cold", None, "grid over the cold temperature"),
    k("sweep", "detuning", None, "grid over the detuning"),
    k("sweep", "tau_ad", None, "grid over the adiabatic stroke time"),
    k("sweep", "tau_th", None, "grid over the thermal stroke time"),
    k("sweep", "lock", Some("none"), "derived coupling: none, lambda1 or lambda2"),
    k("sweep", "ratio", Some("1"), "derived coupling = ratio * the other coupling"),
    k("sweep", "levels", Some("6"), "levels written by the spectrum subcommand"),
    k("cycle", "tau_ad", Some("10"), "duration of each adiabatic stroke"),
    k("cycle", "tau_th", Some("2000"), "duration of each thermal stroke"),
    k("cycle", "dt_unitary", Some("0.05"), "time step of the ramp propagator"),
    k("cycle", "dt_dissipative", Some("0.01"), "time step of the thermal strokes"),
    k("cycle", "limit_tolerance", Some("1e-6"), "stop when 1 - F falls below this"),
    k("cycle", "max_cycles", Some("50"), "upper bound on iterated cycles"),
    k("cycle", "cycles", Some("10"), "cycles recorded by the limit-cycle subcommand"),
    k("cycle", "initial", Some("gibbs_hot"), "first state: gibbs_hot or maximally_mixed"),
    k("numerics", "pairing", Some("energy"), "level pairing: energy or parity"),
    k("numerics", "truncation_check", Some("true"), "compare against a larger Fock space"),
    k("numerics", "truncation_extra_modes", Some("10"), "extra Fock states of the comparison"),
    k("numerics", "truncation_levels", Some("12"), "levels compared"),
    k("numerics", "truncation_tolerance", Some("1e-8"), "largest accepted level shift"),
    k("tur", "sigma", Some("0.01:10:100"), "entropy productions to evaluate"),
    k("run", "workers", Some("0"), "worker threads, 0 for all cores"),
];

/// Section written into `.meta` files and skipped on reading.
pub const PROVENANCE_SECTION: &str = "provenance";

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("line {line}: unknown key `{section}.{key}`")]
    UnknownKey { line: usize, section: String, key: String },
    #[error("line {line}: `{section}.{key}` set twice")]
    Duplicate { line: usize, section: String, key: String },
    #[error("override `{0}`: expected section.key=value")]
    BadOverride(String),
    #[error("unknown key `{0}`")]
    UnknownOverride(String),
    #[error("`{key}`: {reason}")]
    Value { key: String, reason: String },
    #[error("missing required keys: {}", .0.join(", "))]
    Missing(Vec<String>),
}

pub type Result<T> = std::result::Result<T, ConfigError>;

/// Where a value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Default,
    File { line: usize },
    Flag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub value: String,
    pub source: Source,
}

/// Parsed key/value pairs; `[sweep]` axes keep their file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<(String, String), Entry>,
    axis_order: Vec<String>,
}

fn lookup_spec(section: &str, key: &str) -> Option<&'static KeySpec> {
    SCHEMA.iter().find(|s| s.section == section && s.key == key)
}

fn strip_comment(line: &str) -> &str {
    line.split_once('#').map_or(line, |(a, _)| a).trim()
}

impl Config {
    /// Parse the text of a configuration file.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = strip_comment(raw);
            if body.is_empty() {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::Syntax { line, reason: "unterminated section header".into() })?
                    .trim();
                let known = name == PROVENANCE_SECTION || SCHEMA.iter().any(|s| s.section == name);
                if !known {
                    return Err(ConfigError::Syntax { line, reason: format!("unknown section `[{name}]`") });
                }
                section = Some(name.to_owned());
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line, reason: format!("expected `key = value`, got `{body}`") })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Syntax { line, reason: "empty key or value".into() });
            }
            let section = section
                .as_deref()
                .ok_or_else(|| ConfigError::Syntax { line, reason: "key outside of any section".into() })?;
            if section == PROVENANCE_SECTION {
                continue;
            }
            if lookup_spec(section, key).is_none() {
                return Err(ConfigError::UnknownKey { line, section: section.into(), key: key.into() });
            }
            let slot = (section.to_owned(), key.to_owned());
            if cfg.entries.contains_key(&slot) {
                return Err(ConfigError::Duplicate { line, section: section.into(), key: key.into() });
            }
            cfg.insert(slot, value.to_owned(), Source::File { line });
        }
        Ok(cfg)
    }

    fn insert(&mut self, slot: (String, String), value: String, source: Source) {
        if slot.0 == "sweep" && AXIS_KEYS.contains(&slot.1.as_str()) && !self.axis_order.contains(&slot.1) {
            self.axis_order.push(slot.1.clone());
        }
        self.entries.insert(slot, Entry { value, source });
    }

    /// Apply a `section.key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let bad = || ConfigError::BadOverride(assignment.to_owned());
        let (path, value) = assignment.split_once('=').ok_or_else(bad)?;
        let (section, key) = path.trim().split_once('.').ok_or_else(bad)?;
        let value = value.trim();
        if value.is_empty() {
            return Err(bad());
        }
        if lookup_spec(section, key).is_none() {
            return Err(ConfigError::UnknownOverride(path.trim().to_owned()));
        }
        self.insert((section.to_owned(), key.to_owned()), value.to_owned(), Source::Flag);
        Ok(())
    }

    /// Explicitly set value, if any.
    pub fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.entries.get(&(section.to_owned(), key.to_owned()))
    }

    pub fn is_set(&self, section: &str, key: &str) -> bool {
        self.get(section, key).is_some()
    }

    /// Explicit value or schema default.
    pub fn value(&self, section: &str, key: &str) -> Option<&str> {
        self.get(section, key)
            .map(|e| e.value.as_str())
            .or_else(|| lookup_spec(section, key).and_then(|s| s.default))
    }

    /// Swept axes in the order they were first given.
    pub fn axes(&self) -> &[String] {
        &self.axis_order
    }

    /// Error listing every key in `keys` that has neither a value nor a default.
    pub fn require(&self, keys: &[(&str, &str)]) -> Result<()> {
        let missing: Vec<String> = keys
            .iter()
            .filter(|(s, k)| self.value(s, k).is_none())
            .map(|(s, k)| format!("{s}.{k}"))
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Missing(missing))
        }
    }

    fn typed<T>(&self, section: &str, key: &str, parse: impl FnOnce(&str) -> std::result::Result<T, String>) -> Result<T> {
        let name = format!("{section}.{key}");
        let raw = self
            .value(section, key)
            .ok_or_else(|| ConfigError::Missing(vec![name.clone()]))?;
        parse(raw).map_err(|reason| ConfigError::Value { key: name, reason })
    }

    pub fn f64(&self, section: &str, key: &str) -> Result<f64> {
        self.typed(section, key, parse_f64)
    }

    pub fn usize(&self, section: &str, key: &str) -> Result<usize> {
        self.typed(section, key, |s| s.parse().map_err(|_| format!("expected a non-negative integer, got `{s}`")))
    }

    pub fn bool(&self, section: &str, key: &str) -> Result<bool> {
        self.typed(section, key, |s| match s {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            _ => Err(format!("expected true or false, got `{s}`")),
        })
    }

    pub fn text(&self, section: &str, key: &str) -> Result<String> {
        self.typed(section, key, |s| Ok(s.to_owned()))
    }

    /// A `start:stop:count` range or a comma-separated list.
    pub fn grid(&self, section: &str, key: &str) -> Result<Vec<f64>> {
        self.typed(section, key, parse_grid)
    }

    /// Every schema key with its effective value, defaults included.
    pub fn resolved(&self) -> Vec<(&'static KeySpec, Option<&str>)> {
        SCHEMA.iter().map(|s| (s, self.value(s.section, s.key))).collect()
    }
}

impl fmt::Display for Config {
    /// Effective configuration in the file grammar; unset keys without default are omitted.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut current = "";
        let mut sweep_written = false;
        for spec in SCHEMA {
            if spec.section != current {
                if !current.is_empty() {
                    writeln!(f)?;
                }
                writeln!(f, "[{}]", spec.section)?;
                current = spec.section;
            }
            if spec.section == "sweep" {
                // axes keep their order; it fixes the row order
                if !sweep_written {
                    for axis in &self.axis_order {
                        writeln!(f, "{axis} = {}", self.value("sweep", axis).unwrap_or_default())?;
                    }
                    sweep_written = true;
                }
                if AXIS_KEYS.contains(&spec.key) {
                    continue;
                }
            }
            if let Some(v) = self.value(spec.section, spec.key) {
                writeln!(f, "{} = {v}", spec.key)?;
            }
        }
        Ok(())
    }
}

fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(format!("expected a finite number, got `{s}`")),
    }
}

/// `start:stop:count` with both endpoints, or `a, b, c`.
pub fn parse_grid(s: &str) -> std::result::Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    match parts.as_slice() {
        [start, stop, count] => {
            let (start, stop) = (parse_f64(start)?, parse_f64(stop)?);
            let count: usize = count
                .parse()
                .map_err(|_| format!("range count must be an integer, got `{count}`"))?;
            if count < 2 {
                return Err(format!("range needs at least 2 points, got {count}"));
            }
            Ok((0..count)
                .map(|i| start + (stop - start) * i as f64 / (count - 1) as f64)
                .collect())
        }
        [single] => single.split(',').map(|v| parse_f64(v.trim())).collect(),
        _ => Err(format!("expected start:stop:count or a comma list, got `{s}`")),
    }
}
