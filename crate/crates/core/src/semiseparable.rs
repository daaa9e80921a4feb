//! Semiseparable matrices: the sequentially semiseparable (SSS)
//! representation, 1-semiseparable masks, rank-structure checks, closure
//! properties and the banded-inverse view of autoregressive transforms.
//!
//! Index convention: `a[t]` multiplies the state when stepping from `t - 1`
//! to `t`, so entry `(j, i)` of a 1-SS matrix is `a[j] * a[j-1] * ... * a[i+1]`.
//! The leading coefficient `a[0]` is never read by materialization.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::{numerical_rank, OpCounter, Tensor};
use crate::rng::seeded;

/// Magnitude below which materialized decay products are flushed to zero.
pub const FLUSH_THRESHOLD: f64 = 1e-300;

/// Largest size for which [`lower_rank_profile`] enumerates every block.
pub const EXHAUSTIVE_LIMIT: usize = 16;

/// Which range the 1-SS coefficients live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Every coefficient after the first lies in `[0, 1]`.
    Decay,
    /// Arbitrary reals.
    Unrestricted,
}

/// Scalars `a[0..T]` defining a 1-semiseparable matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct OneSSCoeffs {
    a: Vec<f64>,
    regime: Regime,
}

impl OneSSCoeffs {
    pub fn new(a: Vec<f64>) -> Self {
        let regime = if a.iter().skip(1).all(|v| (0.0..=1.0).contains(v)) {
            Regime::Decay
        } else {
            Regime::Unrestricted
        };
        Self { a, regime }
    }

    /// Coefficients restricted to `[0, 1]`, as used by SSD layers.
    pub fn decay(a: Vec<f64>) -> Result<Self> {
        let c = Self::new(a);
        if c.regime != Regime::Decay {
            return Err(Error::Config("decay coefficients must lie in [0, 1]".into()));
        }
        Ok(c)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.a
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }
}

/// Dense `T x T` 1-SS matrix.
pub fn materialize_1ss(a: &OneSSCoeffs) -> Tensor {
    materialize_1ss_flushed(a).0
}

/// Like [`materialize_1ss`], also returning how many nonzero entries fell
/// below [`FLUSH_THRESHOLD`] and were set to zero.
pub fn materialize_1ss_flushed(a: &OneSSCoeffs) -> (Tensor, usize) {
    let a = a.as_slice();
    let t = a.len();
    let mut m = Tensor::zeros(&[t, t]);
    let mut flushed = 0;
    for j in 0..t {
        let mut run = 1.0;
        *m.at_mut(j, j) = 1.0;
        for i in (0..j).rev() {
            run *= a[i + 1];
            if run != 0.0 && run.abs() < FLUSH_THRESHOLD {
                run = 0.0;
                flushed += 1;
            }
            *m.at_mut(j, i) = run;
        }
    }
    (m, flushed)
}

/// Per-step state matrices of an SSS representation.
#[derive(Debug, Clone, PartialEq)]
pub enum StateMatrices {
    /// `A_t = a_t I`.
    Scalar(Vec<f64>),
    /// `A_t = diag(A[t, :])`, shape `(T, N)`.
    Diagonal(Tensor),
    /// Unstructured `N x N` matrices, one per step.
    Dense(Vec<Tensor>),
}

impl StateMatrices {
    fn steps(&self) -> usize {
        match self {
            StateMatrices::Scalar(a) => a.len(),
            StateMatrices::Diagonal(a) => a.shape()[0],
            StateMatrices::Dense(a) => a.len(),
        }
    }

    /// `v <- A_t v`.
    fn apply(&self, t: usize, v: &mut [f64], scratch: &mut [f64]) {
        match self {
            StateMatrices::Scalar(a) => v.iter_mut().for_each(|x| *x *= a[t]),
            StateMatrices::Diagonal(a) => {
                let n = v.len();
                for (x, &d) in v.iter_mut().zip(&a.data()[t * n..(t + 1) * n]) {
                    *x *= d;
                }
            }
            StateMatrices::Dense(a) => {
                let m = &a[t];
                let n = v.len();
                for (r, s) in scratch.iter_mut().enumerate().take(n) {
                    *s = (0..n).map(|c| m.at(r, c) * v[c]).sum();
                }
                v.copy_from_slice(&scratch[..n]);
            }
        }
    }
}

/// `M[j, i] = C_j^T A_j ... A_{i+1} B_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SSSRep {
    pub a: StateMatrices,
    /// `(T, N)`
    pub b: Tensor,
    /// `(T, N)`
    pub c: Tensor,
}

impl SSSRep {
    pub fn new(a: StateMatrices, b: Tensor, c: Tensor) -> Result<Self> {
        if b.rank() != 2 || c.rank() != 2 {
            return Err(Error::dim("N", "B and C must be (T, N) matrices"));
        }
        let (t, n) = (b.shape()[0], b.shape()[1]);
        if c.shape() != [t, n] {
            return Err(Error::dim(
                "N",
                format!("B is {:?} but C is {:?}", b.shape(), c.shape()),
            ));
        }
        if a.steps() != t {
            return Err(Error::dim("T", format!("{} state matrices for {t} steps", a.steps())));
        }
        match &a {
            StateMatrices::Diagonal(d) if d.shape() != [t, n] => {
                return Err(Error::dim("N", format!("diagonal A is {:?}", d.shape())))
            }
            StateMatrices::Dense(ms) if ms.iter().any(|m| m.shape() != [n, n]) => {
                return Err(Error::dim("N", "dense A must be N x N per step"))
            }
            _ => {}
        }
        Ok(Self { a, b, c })
    }

    /// Scalar-A representation with `N = 1`: `diag(c) 1SS(a) diag(b)`.
    pub fn scalar(a: &[f64], b: &[f64], c: &[f64]) -> Result<Self> {
        Self::new(
            StateMatrices::Scalar(a.to_vec()),
            Tensor::new(vec![b.len(), 1], b.to_vec())?,
            Tensor::new(vec![c.len(), 1], c.to_vec())?,
        )
    }

    pub fn len(&self) -> usize {
        self.b.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn order(&self) -> usize {
        self.b.shape()[1]
    }
}

/// Dense lower-triangular matrix of an SSS representation.
pub fn materialize_sss(rep: &SSSRep, ops: &mut OpCounter) -> Tensor {
    let (t, n) = (rep.len(), rep.order());
    let mut m = Tensor::zeros(&[t, t]);
    let mut v = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let bd = rep.b.data();
    let cd = rep.c.data();
    for i in 0..t {
        v.copy_from_slice(&bd[i * n..(i + 1) * n]);
        for j in i..t {
            if j > i {
                rep.a.apply(j, &mut v, &mut scratch);
            }
            *m.at_mut(j, i) = cd[j * n..(j + 1) * n].iter().zip(&v).map(|(c, x)| c * x).sum();
        }
    }
    let steps = (t * (t + 1) / 2) as u64;
    ops.mul_add(steps * n as u64);
    let per_step = match rep.a {
        StateMatrices::Dense(_) => (n * n) as u64,
        _ => n as u64,
    };
    ops.elementwise(steps.saturating_sub(t as u64) * per_step);
    m
}

/// Rank-`N` factorization of the strictly lower block with rows
/// `rows.start..rows.end` and columns `cols.start..cols.end`, requiring
/// `cols.end <= rows.start`. Returns `(left, center, right)` with shapes
/// `(rows, N)`, `(N, N)`, `(N, cols)` such that the block equals
/// `left @ center @ right`.
pub fn block_factors(
    rep: &SSSRep,
    rows: std::ops::Range<usize>,
    cols: std::ops::Range<usize>,
) -> Result<(Tensor, Tensor, Tensor)> {
    let n = rep.order();
    let (j, jp, ip, i) = (rows.start, rows.end, cols.start, cols.end);
    if !(jp > j && j >= i && i > ip) || jp > rep.len() {
        return Err(Error::dim("T", "block must lie strictly below the diagonal"));
    }
    let mut scratch = vec![0.0; n];
    // Left rows: C_r^T A_r ... A_{j+1}; built as (A_{j+1}^T ... A_r^T) C_r.
    let mut left = Tensor::zeros(&[jp - j, n]);
    for r in j..jp {
        let mut row: Vec<f64> = rep.c.data()[r * n..(r + 1) * n].to_vec();
        for s in (j + 1..=r).rev() {
            apply_transpose(&rep.a, s, &mut row, &mut scratch);
        }
        left.data_mut()[(r - j) * n..(r - j + 1) * n].copy_from_slice(&row);
    }
    // Center: A_j ... A_i, as a dense matrix.
    let mut center = Tensor::zeros(&[n, n]);
    for col in 0..n {
        let mut e = vec![0.0; n];
        e[col] = 1.0;
        for s in i..=j {
            rep.a.apply(s, &mut e, &mut scratch);
        }
        for (row, &v) in e.iter().enumerate() {
            *center.at_mut(row, col) = v;
        }
    }
    // Right columns: A_{i-1} ... A_{c+1} B_c.
    let mut right = Tensor::zeros(&[n, i - ip]);
    for c in ip..i {
        let mut v: Vec<f64> = rep.b.data()[c * n..(c + 1) * n].to_vec();
        for s in c + 1..i {
            rep.a.apply(s, &mut v, &mut scratch);
        }
        for (row, &x) in v.iter().enumerate() {
            *right.at_mut(row, c - ip) = x;
        }
    }
    Ok((left, center, right))
}

fn apply_transpose(a: &StateMatrices, t: usize, v: &mut [f64], scratch: &mut [f64]) {
    match a {
        StateMatrices::Dense(ms) => {
            let m = &ms[t];
            let n = v.len();
            for (r, s) in scratch.iter_mut().enumerate().take(n) {
                *s = (0..n).map(|c| m.at(c, r) * v[c]).sum();
            }
            v.copy_from_slice(&scratch[..n]);
        }
        _ => a.apply(t, v, scratch),
    }
}

fn block(m: &Tensor, r0: usize, r1: usize, c0: usize, c1: usize) -> Tensor {
    Tensor::from_fn(&[r1 - r0 + 1, c1 - c0 + 1], |ix| m.at(r0 + ix[0], c0 + ix[1]))
}

/// Largest numerical rank over contiguous submatrices lying on or below
/// the diagonal (inclusive row range `r0..=r1`, column range `c0..=c1`,
/// `c1 <= r0`).
///
/// Up to [`EXHAUSTIVE_LIMIT`] every such block is checked. Beyond that the
/// `T` maximal blocks `M[r.., ..=r]` are checked, which already bound every
/// contained block, together with `samples` seeded random blocks.
pub fn lower_rank_profile(m: &Tensor, samples: usize, tol: f64) -> usize {
    assert_eq!(m.rank(), 2);
    let t = m.shape()[0];
    let mut best = 0;
    if t <= EXHAUSTIVE_LIMIT {
        for r0 in 0..t {
            for r1 in r0..t {
                for c1 in 0..=r0 {
                    for c0 in 0..=c1 {
                        best = best.max(numerical_rank(&block(m, r0, r1, c0, c1), tol));
                    }
                }
            }
        }
        return best;
    }
    for r in 0..t {
        best = best.max(numerical_rank(&block(m, r, t - 1, 0, r), tol));
    }
    let mut rng = seeded(0x5eed_0f_b10c);
    for _ in 0..samples {
        let r0 = rng.random_range(0..t);
        let r1 = rng.random_range(r0..t);
        let c1 = rng.random_range(0..=r0);
        let c0 = rng.random_range(0..=c1);
        best = best.max(numerical_rank(&block(m, r0, r1, c0, c1), tol));
    }
    best
}

/// Inverse of a lower-triangular matrix by forward substitution.
pub fn invert_lower(m: &Tensor) -> Result<Tensor> {
    let t = m.shape()[0];
    let scale = m.max_abs().max(f64::MIN_POSITIVE);
    for k in 0..t {
        if m.at(k, k).abs() <= 1e-14 * scale {
            return Err(Error::Singular { index: k });
        }
    }
    let mut inv = Tensor::zeros(&[t, t]);
    for col in 0..t {
        for row in col..t {
            let rhs = if row == col { 1.0 } else { 0.0 };
            let acc: f64 = (col..row).map(|k| m.at(row, k) * inv.at(k, col)).sum();
            *inv.at_mut(row, col) = (rhs - acc) / m.at(row, row);
        }
    }
    Ok(inv)
}

/// Dense operation applied in [`closure_check`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClosureOp {
    Sum,
    Product,
    Inverse,
}

/// Applies `op` to materialized representations and reports the observed
/// semiseparable order of the result.
pub fn closure_check(op: ClosureOp, lhs: &SSSRep, rhs: Option<&SSSRep>, tol: f64) -> Result<usize> {
    let mut ops = OpCounter::new();
    let l = materialize_sss(lhs, &mut ops);
    let result = match op {
        ClosureOp::Inverse => invert_lower(&l)?,
        ClosureOp::Sum | ClosureOp::Product => {
            let r = rhs.ok_or_else(|| Error::Config("binary closure needs a right operand".into()))?;
            if r.len() != lhs.len() {
                return Err(Error::dim("T", format!("{} vs {}", lhs.len(), r.len())));
            }
            let r = materialize_sss(r, &mut ops);
            if op == ClosureOp::Sum {
                l.zip_map(&r, |x, y| x + y)?
            } else {
                crate::numeric::matmul(&l, &r, &mut ops)?
            }
        }
    };
    Ok(lower_rank_profile(&result, 512, tol))
}

/// Lower-banded autoregressive transform
/// `y_t = mu_t x_t + sum_{m=1..k} ell[t, m-1] y_{t-m}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedLower {
    k: usize,
    /// `(T, k)`; entries referring to negative times are ignored.
    ell: Tensor,
    mu: Vec<f64>,
}

impl BandedLower {
    pub fn new(ell: Tensor, mu: Vec<f64>) -> Result<Self> {
        if ell.rank() != 2 || ell.shape()[0] != mu.len() {
            return Err(Error::dim("T", "ell must be (T, k) with T matching mu"));
        }
        Ok(Self {
            k: ell.shape()[1],
            ell,
            mu,
        })
    }

    pub fn bandwidth(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    /// The band matrix `K` with unit diagonal and `-ell` below it, so that
    /// `K y = diag(mu) x`. Entries outside the band are exactly zero.
    pub fn band_matrix(&self) -> Tensor {
        let t = self.len();
        Tensor::from_fn(&[t, t], |ix| {
            let (r, c) = (ix[0], ix[1]);
            if r == c {
                1.0
            } else if c < r && r - c <= self.k {
                -self.ell.at(r, r - c - 1)
            } else {
                0.0
            }
        })
    }

    /// Runs the recurrence directly.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        for t in 0..x.len() {
            let mut acc = self.mu[t] * x[t];
            for m in 1..=self.k.min(t) {
                acc += self.ell.at(t, m - 1) * y[t - m];
            }
            y[t] = acc;
        }
        y
    }
}

/// The sequence transformation of an autoregressive band together with its
/// observed semiseparable order.
#[derive(Debug, Clone)]
pub struct ArCertificate {
    pub matrix: Tensor,
    pub observed_order: usize,
    /// `k + 1`.
    pub bound: usize,
}

impl ArCertificate {
    pub fn holds(&self) -> bool {
        self.observed_order <= self.bound
    }
}

/// Builds `L = (diag(mu)^{-1} K)^{-1}` and measures its rank profile.
pub fn ar_to_ssm(band: &BandedLower, tol: f64) -> Result<ArCertificate> {
    if let Some(index) = band.mu.iter().position(|&m| m == 0.0) {
        return Err(Error::Singular { index });
    }
    let k_inv = invert_lower(&band.band_matrix())?;
    let t = band.len();
    let matrix = Tensor::from_fn(&[t, t], |ix| k_inv.at(ix[0], ix[1]) * band.mu[ix[1]]);
    let observed_order = lower_rank_profile(&matrix, 512, tol);
    Ok(ArCertificate {
        matrix,
        observed_order,
        bound: band.k + 1,
    })
}
