//! Run configuration: a TOML file of dotted keys.
//!
//! Frequencies are given in Hz (`*_hz` keys) and converted to rad/s with a
//! factor 2π on the way in. Times are in seconds (`*_s` keys).

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::Value as Json;
use toml::Value;

use crate::CliError;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Number,
    Integer,
    Text,
}

/// Every key a configuration may contain.
const KEYS: &[(&str, Kind)] = &[
    ("label", Kind::Text),
    ("mode.omega_res_hz", Kind::Number),
    ("mode.q_factor", Kind::Number),
    ("atom.omega_atom_hz", Kind::Number),
    ("atom.g_star_hz", Kind::Number),
    ("atom.t2_s", Kind::Number),
    ("sequence.pulse_duration_s", Kind::Number),
    ("sequence.gap_s", Kind::Number),
    ("sequence.drive_amplitude", Kind::Number),
    ("sequence.ring_down_tail_s", Kind::Number),
    ("sequence.carrier_hz", Kind::Number),
    ("scan.start_hz", Kind::Number),
    ("scan.stop_hz", Kind::Number),
    ("scan.step_hz", Kind::Number),
    ("rabi.carrier_hz", Kind::Number),
    ("rabi.start_s", Kind::Number),
    ("rabi.stop_s", Kind::Number),
    ("rabi.step_s", Kind::Number),
    ("fit.max_iterations", Kind::Integer),
    ("fit.ftol", Kind::Number),
    ("fit.gtol", Kind::Number),
    ("fit.default_sigma", Kind::Number),
    ("fit.guess.omega_res_hz", Kind::Number),
    ("fit.guess.q_factor", Kind::Number),
    ("fit.guess.g_star_hz", Kind::Number),
    ("fit.guess.omega0_hz", Kind::Number),
    ("fit.guess.delta_hz", Kind::Number),
    ("fit.guess.t2_s", Kind::Number),
    ("synth.kind", Kind::Text),
    ("synth.noise_sigma", Kind::Number),
    ("synth.seed", Kind::Integer),
    ("synth.omega0_hz", Kind::Number),
    ("synth.delta_hz", Kind::Number),
    ("output.dir", Kind::Text),
];

#[derive(Debug, Clone)]
pub struct RunConfig {
    values: BTreeMap<String, Value>,
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

impl RunConfig {
    /// Parses and type-checks a configuration. Unknown keys are rejected so
    /// that typos surface as errors rather than silently falling back to
    /// defaults.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        let mut values = BTreeMap::new();
        flatten("", &table, &mut values);
        for (key, value) in &values {
            let kind = KEYS
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, kind)| *kind)
                .ok_or_else(|| CliError::Config(format!("unknown key `{key}`")))?;
            let ok = match kind {
                Kind::Number => matches!(value, Value::Float(_) | Value::Integer(_)),
                Kind::Integer => matches!(value, Value::Integer(_)),
                Kind::Text => matches!(value, Value::String(_)),
            };
            if !ok {
                let expected = match kind {
                    Kind::Number => "a number",
                    Kind::Integer => "an integer",
                    Kind::Text => "a string",
                };
                return Err(CliError::Config(format!("key `{key}` must be {expected}")));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    /// Starts recording which values a run resolves.
    pub fn resolver(&self) -> Resolver<'_> {
        Resolver { cfg: self, resolved: BTreeMap::new() }
    }
}

/// Typed access to a [`RunConfig`] that remembers every value handed out,
/// including defaults, for the run metadata.
pub struct Resolver<'a> {
    cfg: &'a RunConfig,
    resolved: BTreeMap<String, Json>,
}

impl Resolver<'_> {
    fn raw_number(&self, key: &str) -> Option<f64> {
        match self.cfg.values.get(key) {
            Some(Value::Float(f)) => Some(*f),
            Some(Value::Integer(i)) => Some(*i as f64),
            _ => None,
        }
    }

    fn record(&mut self, key: &str, value: Json) {
        self.resolved.insert(key.to_string(), value);
    }

    pub fn number(&mut self, key: &str) -> Result<f64, CliError> {
        let v = self.raw_number(key).ok_or_else(|| CliError::Config(format!("missing required key `{key}`")))?;
        if !v.is_finite() {
            return Err(CliError::Config(format!("key `{key}` must be finite")));
        }
        self.record(key, Json::from(v));
        Ok(v)
    }

    pub fn number_or(&mut self, key: &str, default: f64) -> Result<f64, CliError> {
        if self.cfg.contains(key) {
            self.number(key)
        } else {
            self.record(key, Json::from(default));
            Ok(default)
        }
    }

    pub fn optional_number(&mut self, key: &str) -> Result<Option<f64>, CliError> {
        if self.cfg.contains(key) {
            self.number(key).map(Some)
        } else {
            Ok(None)
        }
    }

    /// A number that must be strictly positive.
    pub fn positive(&mut self, key: &str) -> Result<f64, CliError> {
        let v = self.number(key)?;
        check_positive(key, v)
    }

    pub fn positive_or(&mut self, key: &str, default: f64) -> Result<f64, CliError> {
        let v = self.number_or(key, default)?;
        check_positive(key, v)
    }

    pub fn integer_or(&mut self, key: &str, default: i64) -> Result<i64, CliError> {
        let v = match self.cfg.values.get(key) {
            Some(Value::Integer(i)) => *i,
            _ => default,
        };
        self.record(key, Json::from(v));
        Ok(v)
    }

    pub fn text_or(&mut self, key: &str, default: &str) -> Result<String, CliError> {
        let v = match self.cfg.values.get(key) {
            Some(Value::String(s)) => s.clone(),
            _ => default.to_string(),
        };
        self.record(key, Json::from(v.clone()));
        Ok(v)
    }

    /// Records a value the run derived itself (for example a CLI override).
    pub fn set(&mut self, key: &str, value: Json) {
        self.record(key, value);
    }

    pub fn into_resolved(self) -> BTreeMap<String, Json> {
        self.resolved
    }
}

fn check_positive(key: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::Config(format!("key `{key}` must be positive, got {v}")))
    }
}
