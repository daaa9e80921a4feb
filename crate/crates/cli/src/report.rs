//! Machine-readable run reports.
//!
//! JSON reports serialize [`Report`]; CSV reports carry one row per case
//! with the fixed header [`CSV_HEADER`].

use std::collections::HashSet;

use serde::Serialize;

use crate::config::Dtype;
use crate::fit::Fit;
use crate::{CliError, CliResult};

pub const CSV_HEADER: &str = "case,params,max_rel_err,mul_adds,wall_ns,status";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseRecord {
    pub case: String,
    pub params: String,
    pub max_rel_err: f64,
    pub mul_adds: u64,
    pub wall_ns: u64,
    pub status: Status,
}

impl CaseRecord {
    /// A record that passes when `err <= tol`.
    pub fn check(case: String, params: String, err: f64, tol: f64, mul_adds: u64) -> Self {
        let status = if err <= tol { Status::Pass } else { Status::Fail };
        Self { case, params, max_rel_err: err, mul_adds, wall_ns: 0, status }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub dtype: Dtype,
    pub suites: Vec<String>,
    pub cases: Vec<CaseRecord>,
    pub fits: Vec<Fit>,
    pub passed: bool,
}

impl Report {
    pub fn new(command: &str, seed: u64, dtype: Dtype) -> Self {
        Self {
            tool: "ssdual".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            dtype,
            suites: Vec::new(),
            cases: Vec::new(),
            fits: Vec::new(),
            passed: true,
        }
    }

    /// Recomputes `passed` and checks that case ids are unique.
    pub fn finish(&mut self) -> CliResult<()> {
        let mut seen = HashSet::new();
        if let Some(dup) = self.cases.iter().find(|c| !seen.insert(c.case.as_str())) {
            return Err(CliError::Config(format!("case `{}` recorded twice", dup.case)));
        }
        self.passed = self.cases.iter().all(|c| c.status == Status::Pass) && self.fits.iter().all(|f| f.within_band);
        Ok(())
    }

    pub fn failures(&self) -> impl Iterator<Item = &CaseRecord> {
        self.cases.iter().filter(|c| c.status == Status::Fail)
    }

    pub fn to_json(&self) -> CliResult<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for c in &self.cases {
            let status = match c.status {
                Status::Pass => "pass",
                Status::Fail => "fail",
            };
            out.push_str(&format!(
                "{},{},{:e},{},{},{}\n",
                csv_field(&c.case),
                csv_field(&c.params),
                c.max_rel_err,
                c.mul_adds,
                c.wall_ns,
                status
            ));
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut r = Report::new("verify", 1, Dtype::F64);
        r.cases.push(CaseRecord::check("a/0".into(), "T=4,N=2".into(), 0.5, 1.0, 10));
        r.finish().unwrap();
        let csv = r.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert_eq!(lines.next(), Some("a/0,\"T=4,N=2\",5e-1,10,0,pass"));
        assert!(r.passed);
    }

    #[test]
    fn duplicate_cases_rejected() {
        let mut r = Report::new("verify", 1, Dtype::F64);
        let c = CaseRecord::check("x".into(), String::new(), 0.0, 0.0, 0);
        r.cases = vec![c.clone(), c];
        assert!(r.finish().is_err());
    }

    #[test]
    fn failure_propagates() {
        let mut r = Report::new("verify", 1, Dtype::F64);
        r.cases.push(CaseRecord::check("x".into(), String::new(), 2.0, 1.0, 0));
        r.finish().unwrap();
        assert!(!r.passed);
        assert_eq!(r.failures().count(), 1);
    }
}
