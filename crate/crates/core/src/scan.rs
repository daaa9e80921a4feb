//! The scalar SSM scan `h_t = a_t h_{t-1} + b_t` (a.k.a. `cumprodsum`,
//! multiplication by a 1-SS matrix) and five interchangeable ways to
//! compute it.
//!
//! All algorithms operate on `C` independent channels sharing one sequence
//! of multipliers. Work counts use one unit per scalar multiply and one per
//! scalar add, so the sequential recurrence on one channel costs exactly
//! `2 (T - 1)`.

use crate::error::{Error, Result};
use crate::numeric::{OpCounter, Real, Tensor};
use crate::rng::{normal_vec, seeded, uniform_vec};
use crate::semiseparable::OneSSCoeffs;

/// Default recursion cutoff for [`ScanAlgorithm::BlockDecomposition`].
pub const DEFAULT_BLOCK_CUTOFF: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScanAlgorithm {
    /// One step at a time.
    Sequential,
    /// Two-level pair reduction: solve within pairs, recurse on the pair
    /// totals, then broadcast back. Linear work, logarithmic depth.
    AssociativeScan,
    /// Strides `1, 2, 4, ...`; `O(T log T)` work. Lengths that are not a
    /// power of two are padded with absorbing `(a, b) = (0, 0)` steps.
    Dilated,
    /// Solve chunks of length `chunk` with `inner`, handing each chunk's
    /// final state to the next.
    StatePassing {
        chunk: usize,
        inner: Box<ScanAlgorithm>,
    },
    /// Recurse on both halves, then add the rank-1 lower-left quadrant.
    /// Subproblems of length `<= cutoff` run sequentially.
    BlockDecomposition { cutoff: usize },
}

impl ScanAlgorithm {
    pub fn state_passing(chunk: usize, inner: ScanAlgorithm) -> Self {
        ScanAlgorithm::StatePassing {
            chunk,
            inner: Box::new(inner),
        }
    }

    pub fn block_decomposition() -> Self {
        ScanAlgorithm::BlockDecomposition {
            cutoff: DEFAULT_BLOCK_CUTOFF,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ScanAlgorithm::StatePassing { chunk: 0, .. } => {
                Err(Error::Config("state-passing chunk must be at least 1".into()))
            }
            ScanAlgorithm::StatePassing { inner, .. } => inner.validate(),
            ScanAlgorithm::BlockDecomposition { cutoff: 0 } => {
                Err(Error::Config("block-decomposition cutoff must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            ScanAlgorithm::Sequential => "sequential".into(),
            ScanAlgorithm::AssociativeScan => "associative".into(),
            ScanAlgorithm::Dilated => "dilated".into(),
            ScanAlgorithm::StatePassing { chunk, inner } => {
                format!("state-passing(k={chunk},{})", inner.name())
            }
            ScanAlgorithm::BlockDecomposition { cutoff } => format!("block(cutoff={cutoff})"),
        }
    }

    /// The five algorithms with their default settings.
    pub fn all() -> Vec<ScanAlgorithm> {
        vec![
            ScanAlgorithm::Sequential,
            ScanAlgorithm::AssociativeScan,
            ScanAlgorithm::Dilated,
            ScanAlgorithm::state_passing(16, ScanAlgorithm::AssociativeScan),
            ScanAlgorithm::block_decomposition(),
        ]
    }
}

/// Hidden state entering the first step (`h_{-1}`), one value per channel.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScanState<R = f64> {
    pub h_init: Option<Vec<R>>,
}

impl<R: Real> ScanState<R> {
    pub fn zero() -> Self {
        Self { h_init: None }
    }

    pub fn new(h_init: Vec<R>) -> Self {
        Self {
            h_init: Some(h_init),
        }
    }
}

/// Scan result: all states `(T, C)` row-major and the last one.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanOutput<R> {
    pub h: Vec<R>,
    pub final_state: Vec<R>,
}

/// The associative operator `(a_t, b_t) ⊗ (a_s, b_s) = (a_t a_s, a_t b_s + b_t)`.
///
/// The left operand is the later step, so `x ⊗ y` applies `y` first.
pub fn associative_combine<R: Real>(x: (R, R), y: (R, R)) -> (R, R) {
    (x.0 * y.0, x.0 * y.1 + x.1)
}

/// Runs `alg` on `b` viewed as `(T, channels)`.
///
/// A nonzero `h_init` enters as `a[0] * h_init` added to `b[0]`; `a[0]` is
/// read for no other purpose.
pub fn scan<R: Real>(
    a: &[R],
    b: &[R],
    channels: usize,
    alg: &ScanAlgorithm,
    h_init: Option<&[R]>,
    ops: &mut OpCounter,
) -> Result<ScanOutput<R>> {
    alg.validate()?;
    let t = a.len();
    if b.len() != t * channels {
        return Err(Error::dim(
            "T",
            format!("{} multipliers but b holds {} values for {channels} channels", t, b.len()),
        ));
    }
    if let Some(h) = h_init {
        if h.len() != channels {
            return Err(Error::dim("C", format!("h_init has {} channels, expected {channels}", h.len())));
        }
    }
    let mut h = b.to_vec();
    run(a, &mut h, channels, alg, h_init, ops);
    let final_state = if t == 0 {
        h_init.map_or_else(|| vec![R::zero(); channels], |v| v.to_vec())
    } else {
        h[(t - 1) * channels..].to_vec()
    };
    Ok(ScanOutput { h, final_state })
}

fn run<R: Real>(
    a: &[R],
    h: &mut [R],
    c: usize,
    alg: &ScanAlgorithm,
    h_init: Option<&[R]>,
    ops: &mut OpCounter,
) {
    let t = a.len();
    if t == 0 {
        return;
    }
    if let Some(init) = h_init {
        if init.iter().any(|v| !v.is_zero()) {
            for (x, &s) in h[..c].iter_mut().zip(init) {
                *x = *x + a[0] * s;
            }
            ops.mul_add(2 * c as u64);
        }
    }
    ops.state(c as u64);
    match alg {
        ScanAlgorithm::Sequential => sequential(a, h, c, ops),
        ScanAlgorithm::AssociativeScan => associative(a, h, c, ops),
        ScanAlgorithm::Dilated => dilated(a, h, c, ops),
        ScanAlgorithm::StatePassing { chunk, inner } => {
            let mut start = 0;
            while start < t {
                let end = (start + chunk).min(t);
                let (done, rest) = h.split_at_mut(start * c);
                let carry = if start == 0 {
                    None
                } else {
                    Some(&done[(start - 1) * c..])
                };
                run(&a[start..end], &mut rest[..(end - start) * c], c, inner, carry, ops);
                start = end;
            }
        }
        ScanAlgorithm::BlockDecomposition { cutoff } => block(a, h, c, *cutoff, ops),
    }
}

fn sequential<R: Real>(a: &[R], h: &mut [R], c: usize, ops: &mut OpCounter) {
    for t in 1..a.len() {
        let (prev, cur) = h.split_at_mut(t * c);
        let prev = &prev[(t - 1) * c..];
        for (x, &p) in cur[..c].iter_mut().zip(prev) {
            *x = a[t] * p + *x;
        }
    }
    ops.mul_add(2 * (a.len() as u64 - 1) * c as u64);
}

fn associative<R: Real>(a: &[R], h: &mut [R], c: usize, ops: &mut OpCounter) {
    let t = a.len();
    if t <= 1 {
        return;
    }
    let pairs = t / 2;
    // Stage 1: solve inside each pair; the pair's last state and total
    // multiplier form a half-length problem.
    let mut a2 = Vec::with_capacity(pairs);
    let mut h2 = Vec::with_capacity(pairs * c);
    for p in 0..pairs {
        let (e, o) = (2 * p, 2 * p + 1);
        a2.push(a[o] * a[e]);
        for ch in 0..c {
            h2.push(a[o] * h[e * c + ch] + h[o * c + ch]);
        }
    }
    ops.mul_add(pairs as u64 * (2 * c as u64 + 1));
    // Stage 2: self-similar problem on the pair totals.
    associative(&a2, &mut h2, c, ops);
    // Stage 3: odd positions take the reduced answers, even positions
    // advance one step from their left neighbour.
    for p in 0..pairs {
        let o = 2 * p + 1;
        h[o * c..(o + 1) * c].copy_from_slice(&h2[p * c..(p + 1) * c]);
    }
    let mut evens = 0u64;
    for e in (2..t).step_by(2) {
        for ch in 0..c {
            h[e * c + ch] = a[e] * h[(e - 1) * c + ch] + h[e * c + ch];
        }
        evens += 1;
    }
    ops.mul_add(evens * 2 * c as u64);
}

fn dilated<R: Real>(a: &[R], h: &mut [R], c: usize, ops: &mut OpCounter) {
    let t = a.len();
    let tp = t.next_power_of_two();
    let mut mult: Vec<R> = a.to_vec();
    mult.resize(tp, R::zero());
    let mut state = h.to_vec();
    state.resize(tp * c, R::zero());
    let mut stride = 1;
    while stride < tp {
        for i in (stride..tp).rev() {
            let m = mult[i];
            for ch in 0..c {
                state[i * c + ch] = state[i * c + ch] + m * state[(i - stride) * c + ch];
            }
            mult[i] = m * mult[i - stride];
        }
        ops.mul_add((tp - stride) as u64 * (2 * c as u64 + 1));
        stride *= 2;
    }
    h.copy_from_slice(&state[..t * c]);
}

fn block<R: Real>(a: &[R], h: &mut [R], c: usize, cutoff: usize, ops: &mut OpCounter) {
    let t = a.len();
    if t <= cutoff.max(1) {
        sequential(a, h, c, ops);
        return;
    }
    let k = t / 2;
    {
        let (left, right) = h.split_at_mut(k * c);
        block(&a[..k], left, c, cutoff, ops);
        block(&a[k..], right, c, cutoff, ops);
    }
    // Lower-left quadrant = (a_k, a_{k+1} a_k, ...)^T (last row of the left block).
    let (left, right) = h.split_at_mut(k * c);
    let carry = &left[(k - 1) * c..];
    let mut decay = R::one();
    for i in 0..t - k {
        decay = decay * a[k + i];
        for (x, &s) in right[i * c..(i + 1) * c].iter_mut().zip(carry) {
            *x = *x + decay * s;
        }
    }
    ops.mul_add((t - k) as u64 * (2 * c as u64 + 1));
}

/// `cumprodsum` on a `(T,)` or `(T, C)` tensor.
pub fn cumprodsum(
    a: &OneSSCoeffs,
    b: &Tensor,
    alg: &ScanAlgorithm,
    state: &ScanState,
    ops: &mut OpCounter,
) -> Result<(Tensor, Vec<f64>)> {
    let channels = match b.rank() {
        1 => 1,
        2 => b.shape()[1],
        r => return Err(Error::dim("C", format!("b must be (T,) or (T, C), got rank {r}"))),
    };
    if b.shape()[0] != a.len() {
        return Err(Error::dim("T", format!("a has {} steps, b has {}", a.len(), b.shape()[0])));
    }
    let out = scan(a.as_slice(), b.data(), channels, alg, state.h_init.as_deref(), ops)?;
    Ok((Tensor::new(b.shape().to_vec(), out.h)?, out.final_state))
}

/// The `log2 T` stride factors `F_1, F_2, F_4, ...` of a 1-SS matrix, in
/// application order: `1SS(a) = ... F_4 F_2 F_1`. Each factor has a unit
/// diagonal and one subdiagonal `F_s[t, t - s] = a_t ... a_{t-s+1}`.
pub fn dilated_factors(a: &OneSSCoeffs) -> Result<Vec<Tensor>> {
    let a = a.as_slice();
    let t = a.len();
    if !t.is_power_of_two() {
        return Err(Error::Config(format!("dilated factors need a power-of-two length, got {t}")));
    }
    let mut window: Vec<f64> = a.to_vec();
    let mut factors = Vec::new();
    let mut stride = 1;
    while stride < t {
        let f = Tensor::from_fn(&[t, t], |ix| {
            let (r, col) = (ix[0], ix[1]);
            if r == col {
                1.0
            } else if r >= stride && col == r - stride {
                window[r]
            } else {
                0.0
            }
        });
        factors.push(f);
        for i in (stride..t).rev() {
            window[i] *= window[i - stride];
        }
        stride *= 2;
    }
    Ok(factors)
}

/// The three factors of the pair-reduction scan on an even length,
/// `1SS(a) = broadcast @ reduced @ local`:
/// `local` solves inside pairs, `reduced` is the 1-SS matrix of the pair
/// totals placed on the odd positions, and `broadcast` advances each even
/// position from its left neighbour.
pub fn associative_factors(a: &OneSSCoeffs) -> Result<[Tensor; 3]> {
    let a = a.as_slice();
    let t = a.len();
    if t % 2 != 0 {
        return Err(Error::Config(format!("pair factorization needs an even length, got {t}")));
    }
    let local = Tensor::from_fn(&[t, t], |ix| {
        let (r, c) = (ix[0], ix[1]);
        if r == c {
            1.0
        } else if r % 2 == 1 && c == r - 1 {
            a[r]
        } else {
            0.0
        }
    });
    let reduced = Tensor::from_fn(&[t, t], |ix| {
        let (r, c) = (ix[0], ix[1]);
        if r == c {
            1.0
        } else if r % 2 == 1 && c % 2 == 1 && c < r {
            a[c + 1..=r].iter().product()
        } else {
            0.0
        }
    });
    let broadcast = Tensor::from_fn(&[t, t], |ix| {
        let (r, c) = (ix[0], ix[1]);
        if r == c {
            1.0
        } else if r % 2 == 0 && r > 0 && c == r - 1 {
            a[r]
        } else {
            0.0
        }
    });
    Ok([broadcast, reduced, local])
}

/// Work of one run of `alg` on a seeded random single-channel input.
pub fn scan_work(alg: &ScanAlgorithm, t: usize) -> Result<OpCounter> {
    let mut rng = seeded(t as u64 ^ 0x5ca7);
    let a = uniform_vec(&mut rng, t, 0.0, 1.0);
    let b = normal_vec(&mut rng, t);
    let mut ops = OpCounter::new();
    scan(&a, &b, 1, alg, None, &mut ops)?;
    Ok(ops)
}
