//! Grid expansion, hashing, parallel execution and the single output collector.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use growlab_core::families::FamilyRegistry;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::experiment::{ExperimentRegistry, Outcome, RunContext, Table};

/// One grid point with every default filled in.
#[derive(Clone, Debug)]
pub struct ResolvedRun {
    pub experiment: String,
    pub config: Value,
    pub hash: String,
}

/// The hashed part of a run: everything that can change the results.
pub fn resolved_config(config: &ExperimentConfig, params: Value) -> Value {
    let mut m = Map::new();
    m.insert("experiment".into(), Value::String(config.experiment.clone()));
    m.insert("seed".into(), config.seed.into());
    m.insert("exact_arithmetic".into(), config.exact_arithmetic.into());
    m.insert("budgets".into(), serde_json::to_value(config.budgets).unwrap_or(Value::Null));
    m.insert("params".into(), params);
    Value::Object(m)
}

pub fn config_hash(resolved: &Value) -> String {
    // serde_json maps are ordered, so the encoding is canonical
    let bytes = serde_json::to_vec(resolved).unwrap_or_default();
    hex::encode(&Sha256::digest(&bytes)[..8])
}

pub fn resolve(config: &ExperimentConfig, registry: &ExperimentRegistry) -> Result<Vec<ResolvedRun>, CliError> {
    let experiment = registry.get(&config.experiment)?;
    config
        .grid_points()?
        .iter()
        .map(|point| {
            let params = experiment.resolve(point)?;
            let resolved = resolved_config(config, params);
            let hash = config_hash(&resolved);
            Ok(ResolvedRun { experiment: config.experiment.clone(), config: resolved, hash })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub experiment: String,
    pub hash: String,
    pub dir: PathBuf,
    pub status: &'static str,
    pub exit_code: i32,
    pub error: Option<String>,
    pub wall_clock_s: f64,
}

fn write_table(dir: &Path, table: &Table) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", table.name)))?;
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Validation(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn collect(
    root: &Path,
    run: &ResolvedRun,
    config: &ExperimentConfig,
    result: Result<Outcome, CliError>,
    seconds: f64,
) -> Result<RunRecord, CliError> {
    let dir = root.join(&run.experiment).join(&run.hash);
    fs::create_dir_all(&dir)?;
    write_json(&dir.join("config.json"), &run.config)?;
    let (status, exit_code, error, outcome) = match result {
        Ok(o) if o.budget_exhausted => ("budget-exhausted", 2, None, o),
        Ok(o) => ("ok", 0, None, o),
        Err(e) => {
            let code = e.exit_code();
            (if code == 2 { "budget-exhausted" } else { "error" }, code, Some(e.to_string()), Outcome::default())
        }
    };
    for table in &outcome.tables {
        write_table(&dir, table)?;
    }
    let mut summary = Map::new();
    summary.insert("experiment".into(), run.experiment.clone().into());
    summary.insert("config_hash".into(), run.hash.clone().into());
    summary.insert("seed".into(), config.seed.into());
    summary.insert("status".into(), status.into());
    summary.insert("exit_code".into(), exit_code.into());
    summary.insert("error".into(), error.clone().map_or(Value::Null, Value::String));
    summary.insert("wall_clock_s".into(), seconds.into());
    summary.insert("budgets".into(), serde_json::to_value(config.budgets).unwrap_or(Value::Null));
    summary.insert(
        "tables".into(),
        outcome.tables.iter().map(|t| serde_json::json!({"name": t.name, "rows": t.rows.len()})).collect(),
    );
    summary.insert("results".into(), Value::Object(outcome.summary));
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(RunRecord { experiment: run.experiment.clone(), hash: run.hash.clone(), dir, status, exit_code, error, wall_clock_s: seconds })
}

/// Runs every grid point and writes `out/<experiment>/<hash>/`. Validation
/// errors abort before anything runs.
pub fn execute(config: &ExperimentConfig, registry: &ExperimentRegistry) -> Result<Vec<RunRecord>, CliError> {
    let runs = resolve(config, registry)?;
    let experiment = registry.get(&config.experiment)?;
    let families = FamilyRegistry::builtin();
    let ctx = RunContext { seed: config.seed, exact: config.exact_arithmetic, budgets: config.budgets, families: &families };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| CliError::Validation(format!("workers: {e}")))?;
    let results: Vec<(Result<Outcome, CliError>, f64)> = pool.install(|| {
        runs.par_iter()
            .map(|run| {
                let clock = Instant::now();
                let r = experiment.run(&run.config["params"], &ctx);
                (r, clock.elapsed().as_secs_f64())
            })
            .collect()
    });
    let mut records = Vec::with_capacity(runs.len());
    for (run, (result, seconds)) in runs.iter().zip(results) {
        let record = collect(&config.out, run, config, result, seconds)?;
        match &record.error {
            Some(e) => log::error!("{} {}: {e}", record.experiment, record.hash),
            None => log::info!("{} {} -> {}", record.experiment, record.hash, record.dir.display()),
        }
        records.push(record);
    }
    Ok(records)
}

pub fn exit_code(records: &[RunRecord]) -> i32 {
    if records.iter().any(|r| r.exit_code == 1) {
        1
    } else {
        records.iter().map(|r| r.exit_code).max().unwrap_or(0)
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path)?;
    ExperimentConfig::from_json_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::builtin;
    use serde_json::json;

    fn hash_of(v: Value) -> String {
        let c = ExperimentConfig::from_value(v).unwrap();
        resolve(&c, &builtin()).unwrap()[0].hash.clone()
    }

    #[test]
    fn hash_tracks_resolved_parameters() {
        let base = hash_of(json!({"experiment": "merging", "N": 8}));
        assert_eq!(base, hash_of(json!({"experiment": "merging", "N": 8, "theta": 0.05})));
        assert_eq!(base, hash_of(json!({"experiment": "merging", "N": 8, "out": "elsewhere", "workers": 3})));
        assert_ne!(base, hash_of(json!({"experiment": "merging", "N": 10})));
        assert_ne!(base, hash_of(json!({"experiment": "merging", "N": 8, "seed": 1})));
        assert_ne!(base, hash_of(json!({"experiment": "merging", "N": 8, "exact_arithmetic": true})));
        assert_ne!(base, hash_of(json!({"experiment": "merging", "N": 8, "budgets": {"max_steps": 5}})));
    }

    #[test]
    fn unknown_parameters_are_validation_errors() {
        let c = ExperimentConfig::from_value(json!({"experiment": "merging", "N": 8, "colour": 1})).unwrap();
        let err = resolve(&c, &builtin()).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("colour"));
        let c = ExperimentConfig::from_value(json!({"experiment": "teleport"})).unwrap();
        assert!(resolve(&c, &builtin()).is_err());
    }
}
