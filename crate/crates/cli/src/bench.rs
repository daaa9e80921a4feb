//! Operation-count grids and the complexity comparison table.

use std::collections::BTreeMap;
use std::time::Instant;

use ssdual::numeric::{max_rel_diff, OpCounter, Real, Tensor};
use ssdual::rng::{normal_tensor, normal_vec, seeded, uniform_vec};
use ssdual::scan::{scan, ScanAlgorithm};
use ssdual::sma::{attention_linear, attention_quadratic, MaskSpec};
use ssdual::ssd::{random_inputs, ssd_blocked, ssd_quadratic, ssd_recurrent, ChunkPlan, HeadPattern, SsdInputs};

use crate::config::{BenchConfig, Dtype, Grid};
use crate::fit::Fit;
use crate::report::{CaseRecord, Report, Status};
use crate::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BenchAlg {
    SsdBlocked,
    SsdQuadratic,
    SsdRecurrent,
    AttentionLinear,
    AttentionQuadratic,
    Scan(ScanAlgorithm),
}

const SCAN_SELECTORS: [&str; 5] = ["scan-sequential", "scan-associative", "scan-dilated", "scan-state-passing", "scan-block"];

impl BenchAlg {
    pub fn parse(name: &str) -> CliResult<Self> {
        Ok(match name {
            "ssd-blocked" => BenchAlg::SsdBlocked,
            "ssd-quadratic" => BenchAlg::SsdQuadratic,
            "ssd-recurrent" => BenchAlg::SsdRecurrent,
            "attention-linear" => BenchAlg::AttentionLinear,
            "attention-quadratic" => BenchAlg::AttentionQuadratic,
            other => match SCAN_SELECTORS.iter().position(|s| *s == other) {
                Some(i) => BenchAlg::Scan(ScanAlgorithm::all().swap_remove(i)),
                None => return Err(CliError::Config(format!("unknown algorithm `{other}`"))),
            },
        })
    }

    pub fn selectors() -> Vec<&'static str> {
        let mut all = vec!["ssd-blocked", "ssd-quadratic", "ssd-recurrent", "attention-linear", "attention-quadratic"];
        all.extend(SCAN_SELECTORS);
        all
    }

    pub fn defaults() -> Vec<Self> {
        vec![BenchAlg::SsdBlocked, BenchAlg::SsdQuadratic, BenchAlg::SsdRecurrent, BenchAlg::Scan(ScanAlgorithm::Sequential)]
    }

    pub fn name(&self) -> String {
        match self {
            BenchAlg::SsdBlocked => "ssd-blocked".into(),
            BenchAlg::SsdQuadratic => "ssd-quadratic".into(),
            BenchAlg::SsdRecurrent => "ssd-recurrent".into(),
            BenchAlg::AttentionLinear => "attention-linear".into(),
            BenchAlg::AttentionQuadratic => "attention-quadratic".into(),
            BenchAlg::Scan(a) => format!("scan-{}", a.name()),
        }
    }

    /// Expected growth exponent in `T`, when it is a pure power.
    pub fn expected_t_exponent(&self) -> Option<f64> {
        match self {
            BenchAlg::SsdQuadratic | BenchAlg::AttentionQuadratic => Some(2.0),
            BenchAlg::Scan(ScanAlgorithm::Dilated) | BenchAlg::Scan(ScanAlgorithm::BlockDecomposition { .. }) => None,
            _ => Some(1.0),
        }
    }

    /// Which grid axes other than `T` affect this algorithm: `(N, P, Q, H)`.
    fn axes(&self) -> (bool, bool, bool, bool) {
        match self {
            BenchAlg::SsdBlocked => (true, true, true, true),
            BenchAlg::SsdQuadratic | BenchAlg::SsdRecurrent => (true, true, false, true),
            BenchAlg::AttentionLinear | BenchAlg::AttentionQuadratic => (true, true, false, false),
            BenchAlg::Scan(_) => (false, false, false, false),
        }
    }
}

/// One grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Cell {
    pub t: usize,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub h: usize,
}

impl Cell {
    fn describe(&self, alg: &BenchAlg) -> (String, String) {
        let (n, p, q, h) = alg.axes();
        let mut parts = Vec::new();
        if n {
            parts.push(format!("N={}", self.n));
        }
        if p {
            parts.push(format!("P={}", self.p));
        }
        if q {
            parts.push(format!("Q={}", self.q));
        }
        if h {
            parts.push(format!("H={}", self.h));
        }
        let rest = parts.join(" ");
        let full = if rest.is_empty() { format!("T={}", self.t) } else { format!("T={} {rest}", self.t) };
        (full, rest)
    }
}

/// Distinct cells relevant to `alg`, ordered.
pub fn cells(grid: &Grid, alg: &BenchAlg) -> Vec<Cell> {
    let (un, up, uq, uh) = alg.axes();
    let pick = |used: bool, axis: &[usize]| if used { axis.to_vec() } else { vec![axis[0]] };
    let mut out = Vec::new();
    for &t in &grid.t {
        for &n in &pick(un, &grid.n) {
            for &p in &pick(up, &grid.p) {
                for &q in &pick(uq, &grid.q) {
                    for &h in &pick(uh, &grid.h) {
                        out.push(Cell { t, n, p, q, h });
                    }
                }
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

fn cast_inputs<R: Real>(inputs: &SsdInputs) -> CliResult<SsdInputs<R>> {
    Ok(SsdInputs::new(inputs.x().cast(), inputs.a().cast(), inputs.b().cast(), inputs.c().cast(), inputs.pattern())?)
}

fn run_typed<R: Real>(alg: &BenchAlg, cell: Cell, seed: u64, ops: &mut OpCounter) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let to64 = |t: Tensor<R>| t.cast::<f64>().into_data();
    match alg {
        BenchAlg::SsdBlocked | BenchAlg::SsdQuadratic | BenchAlg::SsdRecurrent => {
            let inputs = random_inputs(seed, cell.t, cell.h, cell.n, cell.p, HeadPattern::MultiHead)?;
            let reference = ssd_recurrent(&inputs, None, &mut OpCounter::new())?.0.into_data();
            let narrow = cast_inputs::<R>(&inputs)?;
            let y = match alg {
                BenchAlg::SsdBlocked => ssd_blocked(&narrow, ChunkPlan::new(cell.q)?, None, ops)?.0,
                BenchAlg::SsdQuadratic => ssd_quadratic(&narrow, ops)?,
                _ => ssd_recurrent(&narrow, None, ops)?.0,
            };
            Ok((to64(y), reference))
        }
        BenchAlg::AttentionLinear | BenchAlg::AttentionQuadratic => {
            let mut rng = seeded(seed);
            let q = normal_tensor(&mut rng, &[cell.t, cell.n]);
            let k = normal_tensor(&mut rng, &[cell.t, cell.n]);
            let v = normal_tensor(&mut rng, &[cell.t, cell.p]);
            let mask = MaskSpec::Decay(0.9);
            let y = if *alg == BenchAlg::AttentionLinear {
                attention_linear(&q, &k, &v, &mask, ops)?
            } else {
                attention_quadratic(&q, &k, &v, &mask, ops)?
            };
            let reference = if *alg == BenchAlg::AttentionLinear {
                attention_quadratic(&q, &k, &v, &mask, &mut OpCounter::new())?
            } else {
                attention_linear(&q, &k, &v, &mask, &mut OpCounter::new())?
            };
            Ok((y.into_data(), reference.into_data()))
        }
        BenchAlg::Scan(s) => {
            let mut rng = seeded(seed);
            let a = uniform_vec(&mut rng, cell.t, 0.0, 1.0);
            let b = normal_vec(&mut rng, cell.t);
            let reference = scan(&a, &b, 1, &ScanAlgorithm::Sequential, None, &mut OpCounter::new())?.h;
            let ar: Vec<R> = a.iter().map(|&v| R::c(v)).collect();
            let br: Vec<R> = b.iter().map(|&v| R::c(v)).collect();
            let h = scan(&ar, &br, 1, s, None, ops)?.h;
            Ok((h.iter().map(|v| v.to_f64().unwrap()).collect(), reference))
        }
    }
}

/// Measures one cell: output error against a reference, operation count and
/// (optionally) the best wall time over the configured repetitions.
pub fn measure(cfg: &BenchConfig, alg: &BenchAlg, cell: Cell) -> CliResult<(f64, OpCounter, u64)> {
    let mut best = u64::MAX;
    let mut result = None;
    let reps = if cfg.timing { cfg.repetitions } else { 1 };
    for _ in 0..reps {
        let mut ops = OpCounter::new();
        let start = Instant::now();
        let (y, reference) = match cfg.dtype {
            Dtype::F64 => run_typed::<f64>(alg, cell, cfg.seed, &mut ops)?,
            Dtype::F32 => run_typed::<f32>(alg, cell, cfg.seed, &mut ops)?,
        };
        best = best.min(start.elapsed().as_nanos() as u64);
        result = Some((max_rel_diff(&y, &reference), ops));
    }
    let (err, ops) = result.expect("at least one repetition");
    Ok((err, ops, if cfg.timing { best } else { 0 }))
}

fn accuracy_tol(dtype: Dtype) -> f64 {
    match dtype {
        Dtype::F64 => 1e-10,
        Dtype::F32 => 1e-3,
    }
}

/// Runs every selected algorithm over the grid and fits exponents in `T`.
pub fn run_bench(cfg: &BenchConfig) -> CliResult<Report> {
    cfg.validate()?;
    let algs = if cfg.algorithms.is_empty() {
        BenchAlg::defaults()
    } else {
        cfg.algorithms.iter().map(|a| BenchAlg::parse(a)).collect::<CliResult<_>>()?
    };
    let mut report = Report::new("bench", cfg.seed, cfg.dtype);
    for alg in &algs {
        report.suites.push(alg.name());
        let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
        for cell in cells(&cfg.grid, alg) {
            let (err, ops, wall) = measure(cfg, alg, cell)?;
            let (params, rest) = cell.describe(alg);
            let mut rec = CaseRecord::check(
                format!("bench/{}/{}", alg.name(), params.replace(' ', ",")),
                params,
                err,
                accuracy_tol(cfg.dtype),
                ops.mul_adds,
            );
            rec.wall_ns = wall;
            report.cases.push(rec);
            series.entry(rest).or_default().push((cell.t as f64, ops.mul_adds as f64));
        }
        for (rest, points) in series {
            if points.len() < crate::fit::MIN_POINTS {
                continue;
            }
            let (xs, ys): (Vec<f64>, Vec<f64>) = points.into_iter().unzip();
            let name = if rest.is_empty() { alg.name() } else { format!("{} {rest}", alg.name()) };
            report.fits.push(Fit::new(name, "T", &xs, &ys, alg.expected_t_exponent())?);
        }
    }
    report.finish()?;
    Ok(report)
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub model: &'static str,
    pub state_size: &'static str,
    pub training_flops: &'static str,
    pub t_fit: Fit,
    pub n_fit: Fit,
}

/// Grid of `N = P = Q` values for the state-size fits.
pub const TABLE_N_GRID: [usize; 4] = [4, 8, 16, 32];
/// Sequence length for the state-size fits.
pub const TABLE_N_LENGTH: usize = 256;

/// Attention, linear SSM and the dual layer: fitted exponents in `T` (at the
/// first grid values of the other axes) and in `N` (with `N = P = Q`).
pub fn run_table(cfg: &BenchConfig) -> CliResult<(Vec<TableRow>, Report)> {
    cfg.validate()?;
    let g = &cfg.grid;
    let rows_spec = [
        ("Attention", "T", "T^2N", BenchAlg::SsdQuadratic, 2.0, 1.0),
        ("SSM-linear", "N", "TN^2", BenchAlg::SsdRecurrent, 1.0, 2.0),
        ("SSD", "N", "TN^2", BenchAlg::SsdBlocked, 1.0, 2.0),
    ];
    let mut report = Report::new("table", cfg.seed, cfg.dtype);
    let mut rows = Vec::new();
    for (model, state_size, flops, alg, t_exp, n_exp) in rows_spec {
        report.suites.push(model.to_string());
        let mut series = |points: Vec<Cell>, axis: &str, expected: f64| -> CliResult<Fit> {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            let mut last = 0;
            for cell in points {
                let (_, ops, _) = measure(cfg, &alg, cell)?;
                xs.push(if axis == "T" { cell.t } else { cell.n } as f64);
                ys.push(ops.mul_adds as f64);
                last = ops.mul_adds;
            }
            let fit = Fit::new(model, axis, &xs, &ys, Some(expected))?;
            report.cases.push(CaseRecord {
                case: format!("table/{model}/{axis}"),
                params: format!("state={state_size} flops={flops} fitted={:.3} expected={expected}", fit.fitted),
                max_rel_err: (fit.fitted - expected).abs(),
                mul_adds: last,
                wall_ns: 0,
                status: if fit.within_band { Status::Pass } else { Status::Fail },
            });
            report.fits.push(fit.clone());
            Ok(fit)
        };
        let t_cells = g.t.iter().map(|&t| Cell { t, n: g.n[0], p: g.p[0], q: g.q[0], h: g.h[0] }).collect();
        let t_fit = series(t_cells, "T", t_exp)?;
        let n_cells = TABLE_N_GRID.iter().map(|&n| Cell { t: TABLE_N_LENGTH, n, p: n, q: n, h: 1 }).collect();
        let n_fit = series(n_cells, "N", n_exp)?;
        rows.push(TableRow { model, state_size, training_flops: flops, t_fit, n_fit });
    }
    report.finish()?;
    Ok((rows, report))
}

/// Plain-text rendering of the table.
pub fn render_table(rows: &[TableRow]) -> String {
    let mut out = format!(
        "{:<12} {:<6} {:<15} {:>12} {:>9} {:>12} {:>9}\n",
        "model", "state", "training_flops", "T_exponent", "expected", "N_exponent", "expected"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<12} {:<6} {:<15} {:>12.3} {:>9} {:>12.3} {:>9}\n",
            r.model,
            r.state_size,
            r.training_flops,
            r.t_fit.fitted,
            r.t_fit.expected.unwrap_or(f64::NAN),
            r.n_fit.fitted,
            r.n_fit.expected.unwrap_or(f64::NAN),
        ));
    }
    out
}
