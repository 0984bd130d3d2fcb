//! The experiment trait and its name-keyed registry.

use std::collections::BTreeMap;

use growlab_core::families::FamilyRegistry;
use growlab_core::walk::Budgets;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::CliError;

/// A CSV table held in memory until the collector writes it.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.to_string(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Formats a float for CSV output; missing values are empty cells.
pub fn cell(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else if x == 0.0 || (1e-4..1e15).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn opt_cell(x: Option<f64>) -> String {
    x.map_or_else(String::new, cell)
}

#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub summary: Map<String, Value>,
    /// Set when a cap truncated the run; partial results are still written.
    pub budget_exhausted: bool,
}

impl Outcome {
    pub fn with_table(mut self, t: Table) -> Self {
        self.tables.push(t);
        self
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        self.summary.insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }
}

pub struct RunContext<'a> {
    pub seed: u64,
    pub exact: bool,
    pub budgets: Budgets,
    pub families: &'a FamilyRegistry,
}

impl RunContext<'_> {
    pub fn family(&self, block: &Value) -> Result<std::sync::Arc<dyn growlab_core::GraphSequence>, CliError> {
        Ok(self.families.build(block)?)
    }
}

pub trait Experiment: Send + Sync {
    fn name(&self) -> &'static str;

    fn about(&self) -> &'static str;

    /// Fills defaults and rejects unknown keys, returning the full parameter set.
    fn resolve(&self, params: &Map<String, Value>) -> Result<Value, CliError>;

    fn run(&self, params: &Value, ctx: &RunContext) -> Result<Outcome, CliError>;
}

/// Typed experiments get [`Experiment`] for free.
pub trait TypedExperiment: Send + Sync {
    type Params: DeserializeOwned + Serialize;
    const NAME: &'static str;
    const ABOUT: &'static str;

    fn check(&self, _params: &Self::Params) -> Result<(), CliError> {
        Ok(())
    }

    fn run_typed(&self, params: &Self::Params, ctx: &RunContext) -> Result<Outcome, CliError>;
}

fn parse<P: DeserializeOwned>(name: &str, v: Value) -> Result<P, CliError> {
    serde_json::from_value(v).map_err(|e| CliError::Validation(format!("{name}: {e}")))
}

impl<T: TypedExperiment> Experiment for T {
    fn name(&self) -> &'static str {
        T::NAME
    }

    fn about(&self) -> &'static str {
        T::ABOUT
    }

    fn resolve(&self, params: &Map<String, Value>) -> Result<Value, CliError> {
        let p: T::Params = parse(T::NAME, Value::Object(params.clone()))?;
        self.check(&p)?;
        serde_json::to_value(&p).map_err(|e| CliError::Validation(e.to_string()))
    }

    fn run(&self, params: &Value, ctx: &RunContext) -> Result<Outcome, CliError> {
        let p: T::Params = parse(T::NAME, params.clone())?;
        self.run_typed(&p, ctx)
    }
}

#[derive(Default)]
pub struct ExperimentRegistry {
    entries: BTreeMap<&'static str, Box<dyn Experiment>>,
}

impl ExperimentRegistry {
    pub fn register(&mut self, e: Box<dyn Experiment>) {
        self.entries.insert(e.name(), e);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Experiment, CliError> {
        self.entries.get(name).map(|e| e.as_ref()).ok_or_else(|| {
            let known: Vec<_> = self.entries.keys().copied().collect();
            CliError::Validation(format!("experiment: unknown `{name}`, expected one of {}", known.join(", ")))
        })
    }

    pub fn names(&self) -> impl Iterator<Item = (&'static str, &'static str)> + '_ {
        self.entries.values().map(|e| (e.name(), e.about()))
    }
}
