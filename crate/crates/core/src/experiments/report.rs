use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;
use serde_json::json;

use super::config::ExperimentConfig;
use super::table::{emit_csv, Table};
use crate::error::{Error, Result};

/// A pass/fail criterion evaluated by an experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    /// Empty for boolean flags.
    pub limit: Option<f64>,
    /// Qualitative checks are reported but never fail a strict run.
    pub qualitative: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= limit,
            value,
            limit: Some(limit),
            qualitative: false,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            passed: value >= limit,
            value,
            limit: Some(limit),
            qualitative: false,
        }
    }

    pub fn flag(name: impl Into<String>, passed: bool) -> Self {
        Self {
            name: name.into(),
            passed,
            value: f64::from(u8::from(passed)),
            limit: None,
            qualitative: false,
        }
    }

    pub fn qualitative(mut self) -> Self {
        self.qualitative = true;
        self
    }
}

/// Outcome of one experiment: checks, CSV tables and a JSON summary.
#[derive(Debug, Clone)]
pub struct Report {
    pub experiment: &'static str,
    pub checks: Vec<Check>,
    pub tables: Vec<(String, Table)>,
    pub summary: serde_json::Value,
}

impl Report {
    pub fn new(experiment: &'static str) -> Self {
        Self {
            experiment,
            checks: Vec::new(),
            tables: Vec::new(),
            summary: serde_json::Value::Null,
        }
    }

    pub fn check(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn table(&mut self, file: impl Into<String>, table: Table) {
        self.tables.push((file.into(), table));
    }

    pub fn table_named(&self, file: &str) -> Option<&Table> {
        self.tables.iter().find(|(n, _)| n == file).map(|(_, t)| t)
    }

    /// Checks that fail a strict run.
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed && !c.qualitative)
    }

    pub fn passed(&self) -> bool {
        self.failures().next().is_none()
    }

    /// Writes every table and `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path, config: &ExperimentConfig, wall_time: Duration) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::with_capacity(self.tables.len() + 1);
        for (name, table) in &self.tables {
            let path = dir.join(name);
            emit_csv(table, &path)?;
            written.push(path);
        }
        let manifest = json!({
            "experiment": self.experiment,
            "package": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "wall_time_seconds": wall_time.as_secs_f64(),
            "passed": self.passed(),
            "checks": self.checks,
            "files": self.tables.iter().map(|(n, _)| n).collect::<Vec<_>>(),
            "summary": self.summary,
            "config": config,
            "config_toml": config.to_toml(),
        });
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(written)
    }
}
