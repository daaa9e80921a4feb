//! Acceptance criteria. Each test prints one `criterion NN ...: PASS|FAIL`
//! line to stderr and then asserts.

use std::io::Write;
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use ssdual::architecture::{
    mamba2_block_forward, sp_forward, sp_message_floats, tp_forward, varlen_forward, BlockConfig, BlockWeights, ShardPlan,
    SimulatedComm,
};
use ssdual::numeric::{max_abs_diff, max_rel_diff, OpCounter};
use ssdual::rng::{normal_tensor, normal_vec, seeded, uniform_vec, SeededRng};
use ssdual::scan::{scan, scan_work, ScanAlgorithm};
use ssdual::semiseparable::{
    ar_to_ssm, closure_check, invert_lower, lower_rank_profile, materialize_1ss, materialize_sss, BandedLower, ClosureOp,
    OneSSCoeffs,
};
use ssdual::sma::{attention_linear, attention_quadratic, normalized_attention_matrix, FeatureMap, MaskSpec, RandomFeatureKind};
use ssdual::ssd::{random_inputs, ssd_blocked, ssd_quadratic, ssd_recurrent, ChunkPlan, HeadPattern};
use ssdual::ssm::{scalar_identity_quadratic, SelectiveSsmParams, SsmDecay};
use ssdual_cli::bench::run_table;
use ssdual_cli::config::BenchConfig;
use ssdual_cli::suites::{kernel_improvement_count, random_dense_sss, RANK_TOL};

#[allow(clippy::explicit_write)]
fn report(id: u32, name: &str, ok: bool, detail: String) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    writeln!(std::io::stderr(), "criterion {id:02} {name}: {verdict} ({detail})").unwrap();
}

/// Integer in `lo..=hi` drawn from `rng`.
fn draw(rng: &mut SeededRng, lo: usize, hi: usize) -> usize {
    let u = uniform_vec(rng, 1, 0.0, 1.0)[0];
    (lo + (u * (hi - lo + 1) as f64) as usize).min(hi)
}

#[test]
fn criterion_01_scan_equivalence() {
    const LENGTHS: [usize; 7] = [1, 2, 3, 7, 64, 1000, 4096];
    let start = Instant::now();
    let mut worst = 0.0f64;
    for case in 0..200u64 {
        let t = LENGTHS[case as usize % LENGTHS.len()];
        let mut rng = seeded(case);
        let a = uniform_vec(&mut rng, t, 0.0, 1.0);
        let b = normal_vec(&mut rng, t);
        let reference = scan(&a, &b, 1, &ScanAlgorithm::Sequential, None, &mut OpCounter::new()).unwrap();
        for alg in ScanAlgorithm::all() {
            let got = scan(&a, &b, 1, &alg, None, &mut OpCounter::new()).unwrap();
            worst = worst.max(max_rel_diff(&got.h, &reference.h));
        }
    }
    let elapsed = start.elapsed();
    let ok = worst <= 1e-12 && elapsed < Duration::from_secs(10);
    report(1, "scan equivalence", ok, format!("max rel err {worst:.2e}, {:.2} s", elapsed.as_secs_f64()));
    assert!(ok);
}

#[test]
fn criterion_02_ssd_triple_equivalence() {
    const PATTERNS: [HeadPattern; 5] = [
        HeadPattern::MultiHead,
        HeadPattern::MultiContract,
        HeadPattern::MultiExpand,
        HeadPattern::MultiInput,
        HeadPattern::Grouped(1),
    ];
    let start = Instant::now();
    let mut worst = 0.0f64;
    for case in 0..200u64 {
        let mut rng = seeded(10_000 + case);
        let (t, n, p, h) = (draw(&mut rng, 1, 128), draw(&mut rng, 1, 16), draw(&mut rng, 1, 16), draw(&mut rng, 1, 4));
        let inputs = random_inputs(case, t, h, n, p, PATTERNS[case as usize % PATTERNS.len()]).unwrap();
        let (y_rec, h_rec) = ssd_recurrent(&inputs, None, &mut OpCounter::new()).unwrap();
        let y_quad = ssd_quadratic(&inputs, &mut OpCounter::new()).unwrap();
        worst = worst.max(max_rel_diff(y_quad.data(), y_rec.data()));
        for q in [1, 2, 4, 8, t] {
            let (y, h_fin) = ssd_blocked(&inputs, ChunkPlan::new(q).unwrap(), None, &mut OpCounter::new()).unwrap();
            worst = worst.max(max_rel_diff(y.data(), y_rec.data())).max(max_rel_diff(h_fin.data(), h_rec.data()));
        }
    }
    let elapsed = start.elapsed();
    let ok = worst <= 1e-10 && elapsed < Duration::from_secs(30);
    report(2, "ssd triple equivalence", ok, format!("max rel err {worst:.2e}, {:.2} s", elapsed.as_secs_f64()));
    assert!(ok);
}

#[test]
fn criterion_03_duality() {
    let mut worst = 0.0f64;
    for case in 0..100u64 {
        let mut rng = seeded(20_000 + case);
        let (t, n, p) = (draw(&mut rng, 1, 64), draw(&mut rng, 1, 8), draw(&mut rng, 1, 8));
        let a = uniform_vec(&mut rng, t, 0.0, 1.0);
        let b = normal_tensor(&mut rng, &[t, n]);
        let c = normal_tensor(&mut rng, &[t, n]);
        let x = normal_tensor(&mut rng, &[t, p]);
        let params = SelectiveSsmParams::new(SsmDecay::Scalar(a.clone()), b.clone(), c.clone()).unwrap();
        let ssm = scalar_identity_quadratic(&params, &x, &mut OpCounter::new()).unwrap();
        let attn = attention_linear(&c, &b, &x, &MaskSpec::OneSS(OneSSCoeffs::new(a)), &mut OpCounter::new()).unwrap();
        worst = worst.max(max_rel_diff(attn.data(), ssm.data()));
    }
    let ok = worst <= 1e-12;
    report(3, "duality", ok, format!("max rel err {worst:.2e}"));
    assert!(ok);
}

#[test]
fn criterion_04_linear_attention() {
    let mut worst = 0.0f64;
    for case in 0..200u64 {
        let mut rng = seeded(30_000 + case);
        let (t, n, p) = (draw(&mut rng, 1, 64), draw(&mut rng, 1, 8), draw(&mut rng, 1, 8));
        let q = normal_tensor(&mut rng, &[t, n]);
        let k = normal_tensor(&mut rng, &[t, n]);
        let v = normal_tensor(&mut rng, &[t, p]);
        let mask = match case % 3 {
            0 => MaskSpec::Causal,
            1 => MaskSpec::Decay(uniform_vec(&mut rng, 1, 0.0, 1.0)[0]),
            _ => MaskSpec::OneSS(OneSSCoeffs::new(uniform_vec(&mut rng, t, 0.0, 1.0))),
        };
        let quad = attention_quadratic(&q, &k, &v, &mask, &mut OpCounter::new()).unwrap();
        let lin = attention_linear(&q, &k, &v, &mask, &mut OpCounter::new()).unwrap();
        worst = worst.max(max_rel_diff(lin.data(), quad.data()));
    }
    let ok = worst <= 1e-12;
    report(4, "linear attention", ok, format!("max rel err {worst:.2e}"));
    assert!(ok);
}

#[test]
fn criterion_05_rank_structure() {
    let mut violations = Vec::new();
    for seed in 0..100u64 {
        let mut rng = seeded(40_000 + seed);
        let n = [1, 2, 4][seed as usize % 3];
        let t = draw(&mut rng, 1, 16);
        let rep = random_dense_sss(&mut rng, t, n).unwrap();
        let order = lower_rank_profile(&materialize_sss(&rep, &mut OpCounter::new()), 0, RANK_TOL);
        if order > n {
            violations.push(format!("seed {seed}: T={t} N={n} rank {order}"));
        }
    }
    let ok = violations.is_empty();
    report(5, "rank structure", ok, format!("{} violations {:?}", violations.len(), violations));
    assert!(ok);
}

#[test]
fn criterion_06_closure() {
    let mut violations = Vec::new();
    let mut worst_off_band = 0.0f64;
    for seed in 0..50u64 {
        let mut rng = seeded(50_000 + seed);
        let (t, n, p) = (draw(&mut rng, 1, 16), draw(&mut rng, 1, 4), draw(&mut rng, 1, 4));
        let lhs = random_dense_sss(&mut rng, t, n).unwrap();
        let rhs = random_dense_sss(&mut rng, t, p).unwrap();
        for op in [ClosureOp::Sum, ClosureOp::Product] {
            let order = closure_check(op, &lhs, Some(&rhs), RANK_TOL).unwrap();
            if order > n + p {
                violations.push(format!("seed {seed}: {op:?} rank {order} > {}", n + p));
            }
        }
        let a = OneSSCoeffs::new(uniform_vec(&mut rng, t, 0.0, 1.0));
        let inv = invert_lower(&materialize_1ss(&a)).unwrap();
        for r in 0..t {
            for c in 0..r.saturating_sub(1) {
                worst_off_band = worst_off_band.max(inv.at(r, c).abs());
            }
        }
    }
    let ok = violations.is_empty() && worst_off_band < 1e-12;
    report(6, "closure", ok, format!("{} rank violations, max off-band {worst_off_band:.2e}", violations.len()));
    assert!(ok, "{violations:?}");
}

#[test]
fn criterion_07_autoregressive_to_ssm() {
    let mut violations = Vec::new();
    for k in 0..4usize {
        for seed in 0..50u64 {
            let mut rng = seeded(60_000 + 100 * k as u64 + seed);
            let t = draw(&mut rng, 1, 12);
            let ell = normal_tensor(&mut rng, &[t, k]).scale(0.5);
            let mu = uniform_vec(&mut rng, t, 0.5, 1.5);
            let cert = ar_to_ssm(&BandedLower::new(ell, mu).unwrap(), RANK_TOL).unwrap();
            if !cert.holds() || cert.bound != k + 1 {
                violations.push(format!("k={k} seed {seed}: T={t} rank {} bound {}", cert.observed_order, cert.bound));
            }
        }
    }
    let ok = violations.is_empty();
    report(7, "autoregressive to ssm", ok, format!("{} violations {:?}", violations.len(), violations));
    assert!(ok);
}

#[test]
fn criterion_08_cost_model() {
    let (rows, _) = run_table(&BenchConfig::bench_default()).unwrap();
    let row = |m: &str| rows.iter().find(|r| r.model == m).unwrap();
    let blocked_t = row("SSD").t_fit.fitted;
    let quadratic_t = row("Attention").t_fit.fitted;
    let blocked_n = row("SSD").n_fit.fitted;
    let mut scan_exact = true;
    for t in [1usize, 2, 3, 7, 64, 1000, 4096] {
        scan_exact &= scan_work(&ScanAlgorithm::Sequential, t).unwrap().mul_adds == 2 * (t as u64 - 1);
    }
    let ok = (blocked_t - 1.0).abs() <= 0.15 && (quadratic_t - 2.0).abs() <= 0.15 && (blocked_n - 2.0).abs() <= 0.15 && scan_exact;
    report(
        8,
        "cost model",
        ok,
        format!("blocked T {blocked_t:.3}, quadratic T {quadratic_t:.3}, blocked N=P=Q {blocked_n:.3}, sequential 2(T-1) {scan_exact}"),
    );
    assert!(ok);
}

#[test]
fn criterion_09_parallel_simulation() {
    let config = BlockConfig { d: 8, inner: 16, heads: 4, groups: 4, state: 4, conv_width: 4, norm_groups: 4, chunk: 4 };
    let mut worst = 0.0f64;
    let mut comm_ok = true;
    for seed in 0..10u64 {
        let w = BlockWeights::random(config, seed).unwrap();
        let t = 5 + 3 * seed as usize;
        let u = normal_tensor(&mut seeded(70_000 + seed), &[t, 8]);
        let reference = mamba2_block_forward(&w, &u).unwrap();
        for s in [1, 2, 4] {
            let mut comm = SimulatedComm::new();
            let y = tp_forward(&w, &ShardPlan::new(s, &config).unwrap(), &u, &mut comm).unwrap();
            worst = worst.max(max_abs_diff(y.data(), reference.data()));
            comm_ok &= comm.all_reduces == 1;
        }
        for workers in [1, 2, 3, 4] {
            let mut comm = SimulatedComm::new();
            let y = sp_forward(&w, workers, &u, &mut comm).unwrap();
            worst = worst.max(max_abs_diff(y.data(), reference.data()));
            comm_ok &= comm.messages.len() == workers - 1;
            comm_ok &= comm.messages.iter().all(|&m| m == sp_message_floats(&config));
        }
        let cuts = [0, t / 3, t / 2, t];
        let seqs: Vec<_> = cuts.windows(2).filter(|c| c[1] > c[0]).map(|c| u.slice_rows(c[0], c[1])).collect();
        for (s, y) in seqs.iter().zip(varlen_forward(&w, &seqs).unwrap()) {
            worst = worst.max(max_abs_diff(y.data(), mamba2_block_forward(&w, s).unwrap().data()));
        }
    }
    let ok = worst <= 1e-12 && comm_ok;
    report(9, "parallel simulation", ok, format!("max abs err {worst:.2e}, communication counts ok {comm_ok}"));
    assert!(ok);
}

#[test]
fn criterion_10_normalization() {
    let mut worst = 0.0f64;
    for seed in 0..50u64 {
        let mut rng = seeded(80_000 + seed);
        let (t, n) = (draw(&mut rng, 1, 32), draw(&mut rng, 1, 8));
        let q = normal_tensor(&mut rng, &[t, n]);
        let k = normal_tensor(&mut rng, &[t, n]);
        let m = normalized_attention_matrix(&q, &k, &MaskSpec::Causal, &FeatureMap::Exp).unwrap();
        for r in 0..t {
            worst = worst.max(((0..t).map(|c| m.at(r, c)).sum::<f64>() - 1.0).abs());
        }
    }
    let ok = worst <= 1e-12;
    report(10, "normalization", ok, format!("max row-sum deviation {worst:.2e}"));
    assert!(ok);
}

#[test]
fn criterion_11_kernel_approximation() {
    let prf = kernel_improvement_count(RandomFeatureKind::PositiveRandom, 0).unwrap();
    let rfa = kernel_improvement_count(RandomFeatureKind::RandomFourier, 0).unwrap();
    let ok = prf >= 18 && rfa >= 18;
    report(11, "kernel approximation", ok, format!("improved prf {prf}/20, rfa {rfa}/20"));
    assert!(ok);
}

fn ssdual(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ssdual")).args(args).output().expect("run ssdual")
}

#[test]
fn criterion_12_cli_contract() {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-cli");
    std::fs::create_dir_all(&dir).unwrap();
    let first = dir.join("first.json");
    let second = dir.join("second.json");
    let run1 = ssdual(&["verify", "--seed", "7", "--out", first.to_str().unwrap()]);
    let run2 = ssdual(&["verify", "--seed", "7", "--out", second.to_str().unwrap()]);
    let faulty = ssdual(&["verify", "--seed", "7", "--inject-fault", "--out", dir.join("fault.json").to_str().unwrap()]);
    let clean = run1.status.success() && run2.status.success();
    let identical = std::fs::read(&first).unwrap() == std::fs::read(&second).unwrap();
    let fault_caught = !faulty.status.success();
    let ok = clean && identical && fault_caught;
    report(12, "cli contract", ok, format!("clean exit {clean}, byte-identical {identical}, fault exit nonzero {fault_caught}"));
    assert!(ok);
}
