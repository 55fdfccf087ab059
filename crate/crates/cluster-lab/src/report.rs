//! Versioned, deterministic JSON reports.
//!
//! Every suite emits one of these: the resolved parameters, a list of
//! named checks with values and tolerances, and free-form recorded
//! numbers. No timestamps, hostnames or other run-dependent fields, so
//! the same configuration and seed produce byte-identical output.

use crate::Result;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// One verdict: `pass` is `|value| <= tolerance` for residual-style
/// checks, or `value <= tolerance` for bound-style checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub title: String,
    /// Fully resolved configuration of the run.
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub checks: Vec<Check>,
    /// Plain recorded numbers that are not pass/fail checks.
    pub values: BTreeMap<String, f64>,
}

impl Report {
    pub fn new(title: &str) -> Report {
        Report {
            schema: 1,
            title: title.to_string(),
            parameters: BTreeMap::new(),
            checks: Vec::new(),
            values: BTreeMap::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) {
        self.parameters.insert(
            key.to_string(),
            serde_json::to_value(value).expect("parameter must serialize"),
        );
    }

    /// Residual-style check: passes when |value| <= tolerance.
    pub fn check_residual(&mut self, name: &str, value: f64, tolerance: f64) -> bool {
        let pass = value.abs() <= tolerance && value.is_finite();
        self.checks.push(Check {
            name: name.to_string(),
            value,
            tolerance,
            pass,
        });
        pass
    }

    /// Bound-style check: passes when value <= bound (signed).
    pub fn check_bound(&mut self, name: &str, value: f64, bound: f64) -> bool {
        let pass = value <= bound && value.is_finite();
        self.checks.push(Check {
            name: name.to_string(),
            value,
            tolerance: bound,
            pass,
        });
        pass
    }

    /// Exact predicate with a descriptive value attached.
    pub fn check_flag(&mut self, name: &str, pass: bool, value: f64) -> bool {
        self.checks.push(Check {
            name: name.to_string(),
            value,
            tolerance: 0.0,
            pass,
        });
        pass
    }

    pub fn record(&mut self, key: &str, value: f64) {
        self.values.insert(key.to_string(), value);
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report must serialize");
        s.push('\n');
        s
    }

    /// One line per check, for terminal use.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.title);
        for (k, v) in &self.parameters {
            let _ = writeln!(out, "  {k} = {v}");
        }
        for c in &self.checks {
            let verdict = if c.pass { "PASS" } else { "FAIL" };
            let _ = writeln!(
                out,
                "{verdict} {} value={:e} tolerance={:e}",
                c.name, c.value, c.tolerance
            );
        }
        for (k, v) in &self.values {
            let _ = writeln!(out, "  {k} = {v:e}");
        }
        out
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}
