//! Flat `section.key = value` run configuration.
//!
//! The key set is the flattened serde form of [`RunConfig::default`], so every
//! library parameter is addressable and unknown keys are rejected. Values are
//! parsed by the shape of the default: arrays are comma separated, strings are
//! taken verbatim and optional values may be left empty.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use wdkg::select::{RegressorSpec, SimilaritySource};
use wdkg::stream::StreamConfig;
use wdkg::synth::SynthConfig;

use crate::error::CliError;

pub const SEED_ENV: &str = "WDKG_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// When set, replaces every component seed below.
    pub seed: Option<u64>,
    /// Root directory for artifacts when a command gets no explicit path.
    pub out: String,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: None,
            out: "run".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskSection {
    /// Share of each slice's edges hidden for evaluation.
    pub ratio: f64,
    /// Negatives sampled per held-out edge.
    pub neg_ratio: usize,
    pub seed: u64,
}

impl Default for MaskSection {
    fn default() -> Self {
        Self {
            ratio: 0.1,
            neg_ratio: 5,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectSection {
    /// Node name of the target indicator.
    pub kpi: String,
    /// Validation R² at which selection stops.
    pub fit: f64,
    pub similarity: SimilaritySource,
    pub regressor: RegressorSpec,
}

impl Default for SelectSection {
    fn default() -> Self {
        Self {
            kpi: "PHY_throughput".into(),
            fit: 0.95,
            similarity: SimilaritySource::default(),
            regressor: RegressorSpec::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub synth: SynthConfig,
    pub stream: StreamConfig,
    pub mask: MaskSection,
    pub select: SelectSection,
}

fn flatten(prefix: &str, value: &Value, out: &mut Vec<(String, Value)>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        leaf => out.push((prefix.to_string(), leaf.clone())),
    }
}

fn render(value: &Value) -> String {
    match value {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(render).collect::<Vec<_>>().join(","),
        other => other.to_string(),
    }
}

fn scalar(raw: &str) -> Value {
    serde_json::from_str::<Value>(raw)
        .ok()
        .filter(|v| !v.is_string() && !v.is_array() && !v.is_object())
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn parse_value(raw: &str, default: &Value) -> Value {
    match default {
        Value::Array(_) if raw.is_empty() => Value::Array(Vec::new()),
        Value::Array(_) => Value::Array(raw.split(',').map(|s| scalar(s.trim())).collect()),
        Value::String(_) => Value::String(raw.to_string()),
        Value::Null if raw.is_empty() => Value::Null,
        _ => scalar(raw),
    }
}

fn set_path(root: &mut Value, key: &str, value: Value) {
    let mut node = root;
    let mut parts = key.split('.').peekable();
    while let Some(part) = parts.next() {
        let map = node.as_object_mut().expect("flattened keys address objects");
        if parts.peek().is_none() {
            map.insert(part.to_string(), value);
            return;
        }
        node = map.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
}

impl RunConfig {
    fn tree(&self) -> Value {
        serde_json::to_value(self).expect("config serialises")
    }

    /// Every key with its value in this configuration.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut flat = Vec::new();
        flatten("", &self.tree(), &mut flat);
        flat.into_iter().map(|(k, v)| (k, render(&v))).collect()
    }

    /// Text that [`RunConfig::parse`] reads back into the same configuration.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# wdkg run configuration: section.key = value\n");
        let mut section = String::new();
        for (key, value) in self.entries() {
            let head = key.split('.').next().unwrap_or_default();
            if head != section {
                write!(s, "\n[{head}]\n").expect("string write");
                section = head.to_string();
            }
            writeln!(s, "{key} = {value}").expect("string write");
        }
        s
    }

    /// Parses a config file; absent keys keep their defaults. `[section]`
    /// lines are accepted as visual grouping only.
    pub fn parse(text: &str, source: &str) -> Result<Self, CliError> {
        let defaults = Self::default().tree();
        let mut known = Vec::new();
        flatten("", &defaults, &mut known);
        let mut tree = defaults;
        let mut seen = BTreeSet::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (line.starts_with('[') && line.ends_with(']')) {
                continue;
            }
            let at = || format!("{source}:{}", no + 1);
            let (key, raw) = line
                .split_once('=')
                .ok_or_else(|| CliError::Invalid(format!("{}: expected `section.key = value`, got {line:?}", at())))?;
            let (key, raw) = (key.trim(), raw.trim());
            let default = known
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v)
                .ok_or_else(|| CliError::Invalid(format!("{}: unknown key `{key}`", at())))?;
            if !seen.insert(key.to_string()) {
                return Err(CliError::Invalid(format!("{}: key `{key}` given twice", at())));
            }
            set_path(&mut tree, key, parse_value(raw, default));
        }
        serde_path_to_error::deserialize(tree)
            .map_err(|e| CliError::Invalid(format!("{source}: bad value for `{}`: {}", e.path(), e.inner())))
    }

    /// Copies the global seed, if any, into every component.
    pub fn apply_seed(&mut self) {
        if let Some(seed) = self.run.seed {
            self.synth.seed = seed;
            self.stream.seed = seed;
            self.mask.seed = seed;
            self.select.regressor.seed = seed;
        }
    }

    /// Range checks that do not depend on loaded artifacts.
    pub fn validate(&self) -> Result<(), CliError> {
        self.synth.validate().map_err(|e| CliError::Invalid(e.to_string()))?;
        self.stream
            .validate(self.synth.n_nodes)
            .map_err(|e| CliError::Invalid(e.to_string()))?;
        if !(0.0..1.0).contains(&self.mask.ratio) {
            return Err(CliError::Invalid(format!(
                "mask.ratio must be in [0,1), got {}",
                self.mask.ratio
            )));
        }
        if !(0.0..=1.0).contains(&self.select.fit) {
            return Err(CliError::Invalid(format!(
                "select.fit must be in [0,1], got {}",
                self.select.fit
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::parse(&c.to_text(), "defaults").unwrap(), c);
    }

    #[test]
    fn edited_text_round_trips() {
        let mut c = RunConfig::default();
        c.run.seed = Some(9);
        c.stream.channels = vec![1, 4, 4, 4, 4, 4, 4];
        c.synth.kpi_parents = vec![];
        c.select.regressor.hidden = vec![];
        c.stream.lr = 3.5e-7;
        assert_eq!(RunConfig::parse(&c.to_text(), "edited").unwrap(), c);
    }

    #[test]
    fn overrides_and_comments() {
        let c = RunConfig::parse(
            "# note\n[stream]\nstream.lr = 0.01\nstream.optimizer = adam\nselect.kpi = 17\n",
            "f",
        )
        .unwrap();
        assert_eq!(c.stream.lr, 0.01);
        assert_eq!(c.stream.optimizer, wdkg::stream::Optimizer::Adam);
        assert_eq!(c.select.kpi, "17");
        assert_eq!(c.synth, SynthConfig::default());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::parse("stream.learning_rate = 1", "cfg.txt").unwrap_err();
        assert_eq!(err.to_string(), "cfg.txt:1: unknown key `stream.learning_rate`");
    }

    #[test]
    fn bad_value_names_the_key() {
        let err = RunConfig::parse("\nsynth.n_nodes = many", "cfg.txt").unwrap_err();
        assert!(err.to_string().contains("synth.n_nodes"), "{err}");
    }

    #[test]
    fn duplicate_and_malformed_lines_rejected() {
        assert!(RunConfig::parse("mask.seed = 1\nmask.seed = 2", "f").is_err());
        assert!(RunConfig::parse("mask.seed 1", "f").is_err());
        assert!(RunConfig::parse("mask = 1", "f").is_err());
    }

    #[test]
    fn global_seed_reaches_every_component() {
        let mut c = RunConfig::parse("run.seed = 5", "f").unwrap();
        c.apply_seed();
        assert_eq!(
            (c.synth.seed, c.stream.seed, c.mask.seed, c.select.regressor.seed),
            (5, 5, 5, 5)
        );
    }

    #[test]
    fn every_key_is_listed() {
        let keys: Vec<String> = RunConfig::default().entries().into_iter().map(|e| e.0).collect();
        for k in [
            "run.seed",
            "synth.edge_flip_prob",
            "stream.channels",
            "mask.neg_ratio",
            "select.regressor.hidden",
        ] {
            assert!(keys.iter().any(|x| x == k), "{k} missing");
        }
    }
}
