//! Least-squares exponent fits on log-log grids.

use serde::Serialize;

use crate::{CliError, CliResult};

/// Minimum grid points for a fit.
pub const MIN_POINTS: usize = 4;
/// Accepted distance between a fitted and an expected exponent.
pub const EXPONENT_BAND: f64 = 0.15;

/// Slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> CliResult<f64> {
    if xs.len() != ys.len() {
        return Err(CliError::Config(format!("{} x values, {} y values", xs.len(), ys.len())));
    }
    if xs.len() < MIN_POINTS {
        return Err(CliError::Config(format!("a fit needs at least {MIN_POINTS} points, got {}", xs.len())));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return Err(CliError::Config("log-log fits need positive values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(CliError::Config("fit grid has a single distinct x".into()));
    }
    Ok(sxy / sxx)
}

/// A fitted exponent beside the expected one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fit {
    pub name: String,
    pub axis: String,
    pub points: usize,
    pub fitted: f64,
    pub expected: Option<f64>,
    pub within_band: bool,
}

impl Fit {
    pub fn new(name: impl Into<String>, axis: impl Into<String>, xs: &[f64], ys: &[f64], expected: Option<f64>) -> CliResult<Self> {
        let fitted = loglog_slope(xs, ys)?;
        Ok(Self {
            name: name.into(),
            axis: axis.into(),
            points: xs.len(),
            fitted,
            expected,
            within_band: expected.is_none_or(|e| (fitted - e).abs() <= EXPONENT_BAND),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_laws() {
        let xs = [2.0, 4.0, 8.0, 16.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powi(2)).collect();
        assert!((loglog_slope(&xs, &ys).unwrap() - 2.0).abs() < 1e-12);
        let ys: Vec<f64> = xs.iter().map(|x| 5.0 * x).collect();
        assert!((loglog_slope(&xs, &ys).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_points() {
        assert!(loglog_slope(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(loglog_slope(&[1.0, 2.0, 3.0, 4.0], &[1.0, 0.0, 3.0, 4.0]).is_err());
    }

    #[test]
    fn band() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys = [1.0, 2.0, 4.0, 8.0];
        assert!(Fit::new("lin", "T", &xs, &ys, Some(1.1)).unwrap().within_band);
        assert!(!Fit::new("lin", "T", &xs, &ys, Some(1.2)).unwrap().within_band);
    }
}
