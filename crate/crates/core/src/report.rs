//! Machine-readable run reports.
//!
//! Every CLI subcommand prints exactly one JSON document:
//!
//! ```json
//! {
//!   "command": "eval",
//!   "config": { "checkpoint": "model.ckpt", "...": "..." },
//!   "seed": 0,
//!   "metrics": { "accuracy": 0.97 },
//!   "tables": [ { "name": "confusion", "columns": ["..."], "rows": [["..."]] } ],
//!   "timings": { "total_seconds": 1.2 }
//! }
//! ```
//!
//! `config` echoes the inputs and flags, `metrics` holds scalar results,
//! `tables` holds per-case rows and `timings` wall-clock seconds. Apart
//! from `timings`, a report is a pure function of its inputs and seed.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Table {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunReport {
    pub command: String,
    pub config: BTreeMap<String, Value>,
    pub seed: Option<u64>,
    pub metrics: BTreeMap<String, f64>,
    pub tables: Vec<Table>,
    pub timings: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn new(command: impl Into<String>) -> Self {
        RunReport {
            command: command.into(),
            ..RunReport::default()
        }
    }

    pub fn config(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.config.insert(
            key.to_string(),
            serde_json::to_value(value).unwrap_or(Value::Null),
        );
        self
    }

    pub fn metric(&mut self, key: &str, value: f64) -> &mut Self {
        self.metrics.insert(key.to_string(), value);
        self
    }

    pub fn timing(&mut self, key: &str, seconds: f64) -> &mut Self {
        self.timings.insert(key.to_string(), seconds);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serialisable")
    }
}
