//! Experiment configuration: common keys plus experiment-specific parameters.

use std::collections::BTreeMap;
use std::path::PathBuf;

use growlab_core::walk::Budgets;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

pub const COMMON_KEYS: [&str; 7] = ["experiment", "grid", "budgets", "seed", "out", "workers", "exact_arithmetic"];

fn default_experiment() -> String {
    "merging".to_string()
}

fn default_out() -> PathBuf {
    PathBuf::from("results")
}

/// A parsed config. Keys outside [`COMMON_KEYS`] are parameters of the
/// selected experiment and are validated by it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_experiment")]
    pub experiment: String,
    /// Parameter name to the list of values it sweeps over.
    #[serde(default)]
    pub grid: BTreeMap<String, Vec<Value>>,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub exact_arithmetic: bool,
    #[serde(flatten)]
    pub params: Map<String, Value>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: default_experiment(),
            grid: BTreeMap::new(),
            budgets: Budgets::default(),
            seed: 0,
            out: default_out(),
            workers: 0,
            exact_arithmetic: false,
            params: Map::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self, CliError> {
        let value: Value = serde_json::from_str(text).map_err(CliError::json)?;
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self, CliError> {
        if !value.is_object() {
            return Err(CliError::Validation("config must be a JSON object".into()));
        }
        serde_json::from_value(value).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    /// Expands the grid into one parameter map per point, in lexicographic
    /// order of the grid keys.
    pub fn grid_points(&self) -> Result<Vec<Map<String, Value>>, CliError> {
        let mut points = vec![self.params.clone()];
        for (key, values) in &self.grid {
            if COMMON_KEYS.contains(&key.as_str()) {
                return Err(CliError::Validation(format!("grid: `{key}` is not an experiment parameter")));
            }
            if values.is_empty() {
                return Err(CliError::Validation(format!("grid: `{key}` has no values")));
            }
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.insert(key.clone(), v.clone());
                        q
                    })
                })
                .collect();
        }
        Ok(points)
    }
}

/// Applies `--key value` pairs to a config object. Keys use `-` or `_`
/// interchangeably; `--family.d 3` sets a key inside the family block. A flag
/// without a value is `true`.
pub fn apply_flags(config: &mut Map<String, Value>, flags: &[String]) -> Result<(), CliError> {
    let mut i = 0;
    while i < flags.len() {
        let raw = flags[i]
            .strip_prefix("--")
            .ok_or_else(|| CliError::Validation(format!("expected a `--key`, found `{}`", flags[i])))?;
        let (raw, inline) = match raw.split_once('=') {
            Some((k, v)) => (k, Some(v.to_string())),
            None => (raw, None),
        };
        let key = raw.replace('-', "_");
        let text = match inline {
            Some(v) => v,
            None if i + 1 < flags.len() && !is_flag(&flags[i + 1]) => {
                i += 1;
                flags[i].clone()
            }
            None => "true".to_string(),
        };
        let value = parse_flag_value(&key, &text);
        match key.split_once('.') {
            Some((outer, inner)) => {
                let block = config.entry(outer.to_string()).or_insert_with(|| Value::Object(Map::new()));
                let obj = block
                    .as_object_mut()
                    .ok_or_else(|| CliError::Validation(format!("`{outer}` is not an object")))?;
                obj.insert(inner.to_string(), value);
            }
            None => {
                config.insert(key, value);
            }
        }
        i += 1;
    }
    Ok(())
}

fn is_flag(s: &str) -> bool {
    s.starts_with("--") && s.len() > 2 && !s[2..].starts_with(|c: char| c.is_ascii_digit() || c == '.')
}

fn parse_flag_value(key: &str, text: &str) -> Value {
    if key == "out" || key == "experiment" {
        return Value::String(text.to_string());
    }
    if key == "family" && !text.trim_start().starts_with('{') {
        return serde_json::json!({ "family": text });
    }
    serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn minimal_config_has_defaults() {
        let c = ExperimentConfig::from_json_str(r#"{"experiment": "merging", "N": 8}"#).unwrap();
        assert_eq!(c.seed, 0);
        assert_eq!(c.budgets, Budgets::default());
        assert_eq!(c.params["N"], json!(8));
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = ExperimentConfig::from_json_str("{\n  \"N\": 8,\n  oops\n}").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn unknown_budget_keys_are_rejected() {
        let err = ExperimentConfig::from_json_str(r#"{"budgets": {"max_cats": 3}}"#).unwrap_err();
        assert!(err.to_string().contains("max_cats"));
    }

    #[test]
    fn flags_mirror_keys() {
        let mut m = Map::new();
        let flags: Vec<String> = ["--N", "32", "--t-max", "1000", "--exact-arithmetic", "--family.d", "3", "--theta", "-0.5"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        apply_flags(&mut m, &flags).unwrap();
        assert_eq!(m["N"], json!(32));
        assert_eq!(m["t_max"], json!(1000));
        assert_eq!(m["exact_arithmetic"], json!(true));
        assert_eq!(m["family"], json!({"d": 3}));
        assert_eq!(m["theta"], json!(-0.5));
    }

    #[test]
    fn grid_expands_cartesian() {
        let c = ExperimentConfig::from_value(json!({"N": 8, "grid": {"N": [8, 12], "theta": [0.1, 0.2, 0.3]}})).unwrap();
        assert_eq!(c.grid_points().unwrap().len(), 6);
    }
}
