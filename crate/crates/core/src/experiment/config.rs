//! Versioned JSON experiment configs.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{RedsError, Result};
use crate::features::FeatureSpec;
use crate::generators::GeneratorSpec;
use crate::spectral::{RankMode, DEFAULT_BETA_CHANGING, DEFAULT_BETA_FIXED};
use crate::testbeds::Testbed;
use crate::traversal::{Method, Selector, TraversalConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedFeature {
    pub name: String,
    pub feature: FeatureSpec,
    /// Explained-variance threshold for this feature.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

/// Everything in [`TraversalConfig`] except the betas, which live on the features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraversalSection {
    pub fd_eps: Option<f64>,
    pub step: f64,
    pub length: usize,
    pub paths_per_seed: usize,
    pub method: Method,
    pub selector: Selector,
    pub rng_seed: u64,
    pub projection_floor: f64,
    pub rank_mode: RankMode,
    pub recompute_stride: usize,
    pub global_linear_samples: usize,
}

impl Default for TraversalSection {
    fn default() -> Self {
        let t = TraversalConfig::default();
        Self {
            fd_eps: t.fd_eps,
            step: t.step,
            length: t.length,
            paths_per_seed: t.paths_per_seed,
            method: t.method,
            selector: t.selector,
            rng_seed: t.rng_seed,
            projection_floor: t.projection_floor,
            rank_mode: t.rank_mode,
            recompute_stride: t.recompute_stride,
            global_linear_samples: t.global_linear_samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedConfig {
    pub count: usize,
    #[serde(default)]
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmitFlags {
    /// Image strips for the first path of every seed (image generators only).
    pub strips: bool,
    pub plots: bool,
}

impl Default for EmitFlags {
    fn default() -> Self {
        Self { strips: false, plots: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub generator: GeneratorSpec,
    #[serde(default)]
    pub fixed_features: Vec<NamedFeature>,
    pub changing_feature: NamedFeature,
    #[serde(default)]
    pub traversal: TraversalSection,
    pub seeds: SeedConfig,
    /// Used when no output directory is given on the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub emit: EmitFlags,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl ExperimentConfig {
    /// Parses and validates a config document.
    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_value(serde_json::from_str(text).map_err(config_error)?)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        let config: Self = serde_json::from_value(value).map_err(config_error)?;
        config.validate()?;
        Ok(config)
    }

    /// Reads `path`, applies `key=value` overrides, then validates.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RedsError::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        let mut value: Value = serde_json::from_str(&text).map_err(config_error)?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        Self::from_value(value)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(RedsError::InvalidConfig(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        if self.seeds.count == 0 {
            return Err(RedsError::InvalidConfig("seeds.count must be >= 1".into()));
        }
        for f in self.fixed_features.iter().chain([&self.changing_feature]) {
            if !valid_name(&f.name) {
                return Err(RedsError::InvalidConfig(format!(
                    "feature name `{}` must be non-empty ASCII letters, digits, `-` or `_`",
                    f.name
                )));
            }
        }
        self.traversal_config().validate()
    }

    pub fn traversal_config(&self) -> TraversalConfig {
        let t = &self.traversal;
        TraversalConfig {
            beta_f: self.fixed_features.iter().map(|f| f.beta.unwrap_or(DEFAULT_BETA_FIXED)).collect(),
            beta_c: self.changing_feature.beta.unwrap_or(DEFAULT_BETA_CHANGING),
            fd_eps: t.fd_eps,
            step: t.step,
            length: t.length,
            paths_per_seed: t.paths_per_seed,
            method: t.method,
            selector: t.selector,
            rng_seed: t.rng_seed,
            projection_floor: t.projection_floor,
            rank_mode: t.rank_mode,
            recompute_stride: t.recompute_stride,
            global_linear_samples: t.global_linear_samples,
        }
    }

    pub fn testbed(&self) -> Result<Testbed> {
        let fixed: Vec<_> = self.fixed_features.iter().map(|f| (f.name.clone(), f.feature.clone())).collect();
        let changing = (self.changing_feature.name.clone(), self.changing_feature.feature.clone());
        Testbed::from_specs(&self.generator, &fixed, &changing)
    }

    /// SHA-256 of the canonical serialization (after overrides).
    pub fn sha256(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

fn config_error(e: serde_json::Error) -> RedsError {
    RedsError::InvalidConfig(e.to_string())
}

/// Sets a scalar at a dotted path, e.g. `traversal.step=0.5` or
/// `fixed_features.0.beta=0.9`. The value is parsed as JSON, falling back
/// to a plain string. Missing keys may be added to existing objects; objects
/// and arrays cannot be replaced.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let bad = |why: &str| RedsError::InvalidConfig(format!("override `{assignment}`: {why}"));
    let (path, raw) = assignment.split_once('=').ok_or_else(|| bad("expected key=value"))?;
    let parsed = serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    if parsed.is_object() || parsed.is_array() {
        return Err(bad("only scalar values can be overridden"));
    }
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(bad("empty key"));
    }
    let (last, parents) = keys.split_last().expect("split yields at least one key");
    let mut node = root;
    for k in parents {
        node = match node {
            Value::Object(map) => map.get_mut(*k),
            Value::Array(items) => k.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| bad(&format!("no such key `{k}`")))?;
    }
    let slot = match node {
        Value::Object(map) => map.entry(last.to_string()).or_insert(Value::Null),
        Value::Array(items) => last
            .parse::<usize>()
            .ok()
            .and_then(|i| items.get_mut(i))
            .ok_or_else(|| bad(&format!("no such index `{last}`")))?,
        _ => return Err(bad("parent is not an object or array")),
    };
    if slot.is_object() || slot.is_array() {
        return Err(bad("target is not a scalar"));
    }
    *slot = parsed;
    Ok(())
}
