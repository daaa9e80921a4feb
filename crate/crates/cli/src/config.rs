use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl FromStr for Dtype {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "f32" => Ok(Dtype::F32),
            "f64" => Ok(Dtype::F64),
            other => Err(CliError::Config(format!("unknown dtype `{other}` (expected f32 or f64)"))),
        }
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "text" => Ok(Format::Text),
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(CliError::Config(format!("unknown format `{other}` (expected text, json or csv)"))),
        }
    }
}

/// Parameter grid. Every axis holds at least one value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    pub t: Vec<usize>,
    pub n: Vec<usize>,
    pub p: Vec<usize>,
    pub q: Vec<usize>,
    pub h: Vec<usize>,
}

impl Grid {
    pub fn verify_default() -> Self {
        Self { t: vec![1, 2, 3, 7, 16, 64], n: vec![1, 4], p: vec![1, 3], q: vec![1, 4, 8], h: vec![1, 2] }
    }

    pub fn bench_default() -> Self {
        Self { t: vec![64, 128, 256, 512, 1024], n: vec![16], p: vec![16], q: vec![64], h: vec![1] }
    }

    /// Overrides axes from `T=64,128,N=8`: a token with `=` starts an axis,
    /// bare tokens extend the current one.
    pub fn apply(&mut self, spec: &str) -> CliResult<()> {
        let mut current: Option<&mut Vec<usize>> = None;
        for token in spec.split(',').map(str::trim) {
            let value = match token.split_once('=') {
                Some((key, value)) => {
                    let axis = match key.trim() {
                        "T" => &mut self.t,
                        "N" => &mut self.n,
                        "P" => &mut self.p,
                        "Q" => &mut self.q,
                        "H" => &mut self.h,
                        other => return Err(CliError::Config(format!("unknown grid axis `{other}`"))),
                    };
                    axis.clear();
                    current = Some(axis);
                    value.trim()
                }
                None => token,
            };
            let axis = current
                .as_deref_mut()
                .ok_or_else(|| CliError::Config(format!("grid value `{token}` has no axis")))?;
            if value.is_empty() {
                continue;
            }
            let v: usize = value
                .parse()
                .map_err(|_| CliError::Config(format!("grid value `{value}` is not a positive integer")))?;
            axis.push(v);
        }
        self.validate()
    }

    pub fn validate(&self) -> CliResult<()> {
        for (name, axis) in [("T", &self.t), ("N", &self.n), ("P", &self.p), ("Q", &self.q), ("H", &self.h)] {
            if axis.is_empty() {
                return Err(CliError::Config(format!("grid axis {name} is empty")));
            }
            if axis.contains(&0) {
                return Err(CliError::Config(format!("grid axis {name} contains 0")));
            }
        }
        Ok(())
    }
}

/// Everything a command needs.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub seed: u64,
    pub dtype: Dtype,
    pub grid: Grid,
    /// Benchmark algorithm selectors; empty means the default set.
    pub algorithms: Vec<String>,
    /// Verify suites to run; empty means all.
    pub suites: Vec<String>,
    /// Seeded instances per verify suite.
    pub cases: usize,
    pub repetitions: usize,
    /// Record wall-clock time. Off by default so reports are reproducible.
    pub timing: bool,
    pub inject_fault: bool,
}

impl BenchConfig {
    pub fn verify_default() -> Self {
        Self {
            seed: 0,
            dtype: Dtype::F64,
            grid: Grid::verify_default(),
            algorithms: Vec::new(),
            suites: Vec::new(),
            cases: 8,
            repetitions: 1,
            timing: false,
            inject_fault: false,
        }
    }

    pub fn bench_default() -> Self {
        Self { grid: Grid::bench_default(), ..Self::verify_default() }
    }

    pub fn validate(&self) -> CliResult<()> {
        self.grid.validate()?;
        if self.repetitions == 0 {
            return Err(CliError::Config("repetitions must be at least 1".into()));
        }
        if self.cases == 0 {
            return Err(CliError::Config("cases must be at least 1".into()));
        }
        Ok(())
    }
}
