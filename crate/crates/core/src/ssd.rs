//! The dual layer: a scalar-identity selective SSM per head, equivalently
//! 1-semiseparable masked attention with `(Q, K, V) = (C, B, X)`.
//!
//! Three evaluation modes are provided. [`ssd_recurrent`] runs the state
//! recurrence, [`ssd_quadratic`] materializes the mask per head, and
//! [`ssd_blocked`] splits the sequence into chunks of length `Q`:
//!
//! 1. diagonal blocks: each chunk in quadratic form;
//! 2. right factors: the state each chunk produces from a zero start;
//! 3. center factors: a scan over chunk decays propagating those states;
//! 4. left factors: each chunk reads out the state that entered it.

use crate::error::{Error, Result};
use crate::numeric::{contract, Contraction, OpCounter, Real, Tensor};
use crate::rng::{normal_tensor, seeded, uniform_tensor};
use crate::scan::{scan, ScanAlgorithm};

pub const DEFAULT_CHUNK: usize = 64;

/// How `X`, `B` and `C` are shared across heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadPattern {
    /// Every head has its own `X`, `B`, `C` (multi-head attention).
    MultiHead,
    /// `X` and `B` shared, `C` per head (multi-query attention).
    MultiContract,
    /// `X` and `C` shared, `B` per head (multi-key attention).
    MultiExpand,
    /// `B` and `C` shared, `X` per head (multi-value attention).
    MultiInput,
    /// `X` per head, `B` and `C` shared within `G` groups.
    Grouped(usize),
}

impl HeadPattern {
    /// Leading-axis extents expected for `(X, B, C)` with `heads` heads.
    pub fn extents(self, heads: usize) -> (usize, usize, usize) {
        match self {
            HeadPattern::MultiHead => (heads, heads, heads),
            HeadPattern::MultiContract => (1, 1, heads),
            HeadPattern::MultiExpand => (1, heads, 1),
            HeadPattern::MultiInput => (heads, 1, 1),
            HeadPattern::Grouped(g) => (heads, g, g),
        }
    }

    pub fn name(self) -> String {
        match self {
            HeadPattern::MultiHead => "MHS".into(),
            HeadPattern::MultiContract => "MCS".into(),
            HeadPattern::MultiExpand => "MES".into(),
            HeadPattern::MultiInput => "MIS".into(),
            HeadPattern::Grouped(g) => format!("G{g}"),
        }
    }
}

/// Group used by `head` when `groups` groups serve `heads` heads.
pub fn group_of(head: usize, groups: usize, heads: usize) -> usize {
    head * groups / heads
}

/// Inputs to the dual layer.
///
/// `x` is `(T, Hx, P)`, `a` is `(T, H)` with entries in `[0, 1]`, `b` and
/// `c` are `(T, Hb, N)` and `(T, Hc, N)`; the leading extents follow
/// [`HeadPattern::extents`].
#[derive(Debug, Clone, PartialEq)]
pub struct SsdInputs<R = f64> {
    x: Tensor<R>,
    a: Tensor<R>,
    b: Tensor<R>,
    c: Tensor<R>,
    pattern: HeadPattern,
}

impl<R: Real> SsdInputs<R> {
    pub fn new(x: Tensor<R>, a: Tensor<R>, b: Tensor<R>, c: Tensor<R>, pattern: HeadPattern) -> Result<Self> {
        if a.rank() != 2 {
            return Err(Error::dim("H", format!("a must be (T, H), got shape {:?}", a.shape())));
        }
        let (t, h) = (a.shape()[0], a.shape()[1]);
        if t == 0 || h == 0 {
            return Err(Error::dim("T", "need at least one step and one head"));
        }
        if let HeadPattern::Grouped(g) = pattern {
            if g == 0 || h % g != 0 {
                return Err(Error::dim("G", format!("{g} groups do not divide {h} heads")));
            }
        }
        let (hx, hb, hc) = pattern.extents(h);
        for (name, tensor, heads) in [("X", &x, hx), ("B", &b, hb), ("C", &c, hc)] {
            if tensor.rank() != 3 || tensor.shape()[0] != t || tensor.shape()[1] != heads {
                return Err(Error::dim(
                    if tensor.rank() == 3 && tensor.shape()[0] != t { "T" } else { "H" },
                    format!("{name} must be ({t}, {heads}, _) for {}, got {:?}", pattern.name(), tensor.shape()),
                ));
            }
        }
        if b.shape()[2] != c.shape()[2] {
            return Err(Error::dim("N", format!("B has N={}, C has N={}", b.shape()[2], c.shape()[2])));
        }
        if let Some(bad) = a.data().iter().find(|v| !(**v >= R::zero() && **v <= R::one())) {
            return Err(Error::Config(format!("decay {bad} outside [0, 1]")));
        }
        Ok(Self { x, a, b, c, pattern })
    }

    pub fn len(&self) -> usize {
        self.a.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn heads(&self) -> usize {
        self.a.shape()[1]
    }

    pub fn state_dim(&self) -> usize {
        self.b.shape()[2]
    }

    pub fn head_dim(&self) -> usize {
        self.x.shape()[2]
    }

    pub fn pattern(&self) -> HeadPattern {
        self.pattern
    }

    pub fn x(&self) -> &Tensor<R> {
        &self.x
    }

    pub fn a(&self) -> &Tensor<R> {
        &self.a
    }

    pub fn b(&self) -> &Tensor<R> {
        &self.b
    }

    pub fn c(&self) -> &Tensor<R> {
        &self.c
    }

    fn slot(tensor: &Tensor<R>, head: usize, heads: usize) -> usize {
        group_of(head, tensor.shape()[1], heads)
    }

    fn column(tensor: &Tensor<R>, slot: usize) -> Tensor<R> {
        let (t, d) = (tensor.shape()[0], tensor.shape()[2]);
        Tensor::from_fn(&[t, d], |i| tensor.get(&[i[0], slot, i[1]]))
    }

    /// The per-head view `(x (T, P), a (T,), b (T, N), c (T, N))`.
    pub fn head(&self, h: usize) -> HeadView<R> {
        let heads = self.heads();
        HeadView {
            x: Self::column(&self.x, Self::slot(&self.x, h, heads)),
            a: (0..self.len()).map(|t| self.a.at(t, h)).collect(),
            b: Self::column(&self.b, Self::slot(&self.b, h, heads)),
            c: Self::column(&self.c, Self::slot(&self.c, h, heads)),
        }
    }

    /// Steps `start..end` of every tensor.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::dim("T", format!("bad range {start}..{end} for length {}", self.len())));
        }
        Self::new(
            self.x.slice_rows(start, end),
            self.a.slice_rows(start, end),
            self.b.slice_rows(start, end),
            self.c.slice_rows(start, end),
            self.pattern,
        )
    }
}

/// One head's operands.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadView<R> {
    pub x: Tensor<R>,
    pub a: Vec<R>,
    pub b: Tensor<R>,
    pub c: Tensor<R>,
}

/// Materializes shared parameters so every tensor has `H` heads.
pub fn expand_heads<R: Real>(inputs: &SsdInputs<R>) -> Result<SsdInputs<R>> {
    let (t, h) = (inputs.len(), inputs.heads());
    let widen = |tensor: &Tensor<R>| {
        let d = tensor.shape()[2];
        let groups = tensor.shape()[1];
        Tensor::from_fn(&[t, h, d], |i| tensor.get(&[i[0], group_of(i[1], groups, h), i[2]]))
    };
    SsdInputs::new(widen(&inputs.x), inputs.a.clone(), widen(&inputs.b), widen(&inputs.c), HeadPattern::MultiHead)
}

/// Chunk length for [`ssd_blocked`]. A final chunk shorter than `Q` is
/// handled as is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkPlan {
    q: usize,
}

impl ChunkPlan {
    pub fn new(q: usize) -> Result<Self> {
        if q == 0 {
            return Err(Error::Config("chunk length must be at least 1".into()));
        }
        Ok(Self { q })
    }

    pub fn chunk(&self) -> usize {
        self.q
    }

    /// Chunk boundaries `[start, end)` covering `0..t`.
    pub fn chunks(&self, t: usize) -> Vec<(usize, usize)> {
        (0..t).step_by(self.q).map(|s| (s, (s + self.q).min(t))).collect()
    }
}

impl Default for ChunkPlan {
    fn default() -> Self {
        Self { q: DEFAULT_CHUNK }
    }
}

fn check_state<R: Real>(inputs: &SsdInputs<R>, h_init: Option<&Tensor<R>>) -> Result<()> {
    if let Some(s) = h_init {
        let want = [inputs.heads(), inputs.state_dim(), inputs.head_dim()];
        if s.shape() != want {
            return Err(Error::dim("N", format!("initial state must be {want:?}, got {:?}", s.shape())));
        }
    }
    Ok(())
}

fn head_state<R: Real>(h_init: Option<&Tensor<R>>, h: usize, np: usize) -> Vec<R> {
    h_init.map_or_else(|| vec![R::zero(); np], |s| s.data()[h * np..(h + 1) * np].to_vec())
}

/// Reference semantics: per head, `S <- a_t S + B_t ⊗ X_t` and
/// `Y_t = C_t^T S`. Returns `Y (T, H, P)` and the final state `(H, N, P)`.
pub fn ssd_recurrent<R: Real>(
    inputs: &SsdInputs<R>,
    h_init: Option<&Tensor<R>>,
    ops: &mut OpCounter,
) -> Result<(Tensor<R>, Tensor<R>)> {
    check_state(inputs, h_init)?;
    let (t, heads, n, p) = (inputs.len(), inputs.heads(), inputs.state_dim(), inputs.head_dim());
    let mut y = Tensor::zeros(&[t, heads, p]);
    let mut fin = Vec::with_capacity(heads * n * p);
    for h in 0..heads {
        let v = inputs.head(h);
        let mut s = head_state(h_init, h, n * p);
        for step in 0..t {
            let a = v.a[step];
            for i in 0..n {
                let bi = v.b.at(step, i);
                for j in 0..p {
                    s[i * p + j] = a * s[i * p + j] + bi * v.x.at(step, j);
                }
            }
            for j in 0..p {
                let out = (0..n).fold(R::zero(), |acc, i| acc + v.c.at(step, i) * s[i * p + j]);
                y.set(&[step, h, j], out);
            }
        }
        ops.elementwise((t * n * p) as u64);
        ops.mul_add((2 * t * n * p) as u64);
        fin.extend(s);
    }
    ops.state((heads * n * p) as u64);
    Ok((y, Tensor::new(vec![heads, n, p], fin)?))
}

/// The 1-SS mask `L[i, j] = a_i ... a_{j+1}` by running products.
pub fn decay_mask<R: Real>(a: &[R]) -> Tensor<R> {
    let t = a.len();
    let mut l = Tensor::zeros(&[t, t]);
    for j in 0..t {
        let mut prod = R::one();
        *l.at_mut(j, j) = prod;
        for i in j + 1..t {
            prod = prod * a[i];
            *l.at_mut(i, j) = prod;
        }
    }
    l
}

fn quadratic_head<R: Real>(v: &HeadView<R>, ops: &mut OpCounter) -> Result<Tensor<R>> {
    let t = v.a.len();
    let l = decay_mask(&v.a);
    ops.elementwise((t * (t + 1) / 2) as u64);
    let g = contract(Contraction::Gram, &v.c, &v.b, ops)?;
    let m = contract(Contraction::Mask, &g, &l, ops)?;
    contract(Contraction::Apply, &m, &v.x, ops)
}

fn write_head<R: Real>(y: &mut Tensor<R>, h: usize, offset: usize, block: &Tensor<R>) {
    let p = block.shape()[1];
    for r in 0..block.shape()[0] {
        for j in 0..p {
            y.set(&[offset + r, h, j], block.at(r, j));
        }
    }
}

/// Per head `Y = (1SS(a) ∘ C B^T) X` with a zero initial state.
pub fn ssd_quadratic<R: Real>(inputs: &SsdInputs<R>, ops: &mut OpCounter) -> Result<Tensor<R>> {
    let (t, heads, p) = (inputs.len(), inputs.heads(), inputs.head_dim());
    let mut y = Tensor::zeros(&[t, heads, p]);
    for h in 0..heads {
        let block = quadratic_head(&inputs.head(h), ops)?;
        write_head(&mut y, h, 0, &block);
    }
    Ok(y)
}

/// Work of each step of [`ssd_blocked`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BlockedSteps {
    pub diagonal: OpCounter,
    pub right: OpCounter,
    pub center: OpCounter,
    pub left: OpCounter,
}

impl BlockedSteps {
    pub fn total(&self) -> OpCounter {
        let mut all = OpCounter::new();
        for s in [&self.diagonal, &self.right, &self.center, &self.left] {
            all.absorb(s);
        }
        all
    }
}

/// Chunked evaluation. `h_init` enters only through the scan over chunk
/// states, as the state before the first chunk.
pub fn ssd_blocked<R: Real>(
    inputs: &SsdInputs<R>,
    plan: ChunkPlan,
    h_init: Option<&Tensor<R>>,
    ops: &mut OpCounter,
) -> Result<(Tensor<R>, Tensor<R>)> {
    let (y, fin, steps) = ssd_blocked_steps(inputs, plan, h_init)?;
    ops.absorb(&steps.total());
    Ok((y, fin))
}

/// [`ssd_blocked`] with the work of each step reported separately.
pub fn ssd_blocked_steps<R: Real>(
    inputs: &SsdInputs<R>,
    plan: ChunkPlan,
    h_init: Option<&Tensor<R>>,
) -> Result<(Tensor<R>, Tensor<R>, BlockedSteps)> {
    check_state(inputs, h_init)?;
    let (t, heads, n, p) = (inputs.len(), inputs.heads(), inputs.state_dim(), inputs.head_dim());
    let chunks = plan.chunks(t);
    let k = chunks.len();
    let mut steps = BlockedSteps::default();
    let mut y = Tensor::zeros(&[t, heads, p]);
    let mut fin = Vec::with_capacity(heads * n * p);

    for h in 0..heads {
        let v = inputs.head(h);

        // 1. Diagonal blocks.
        for &(s, e) in &chunks {
            let block = HeadView {
                x: v.x.slice_rows(s, e),
                a: v.a[s..e].to_vec(),
                b: v.b.slice_rows(s, e),
                c: v.c.slice_rows(s, e),
            };
            write_head(&mut y, h, s, &quadratic_head(&block, &mut steps.diagonal)?);
        }

        // 2. Right factors: each chunk's final state from a zero start.
        let mut chunk_states = Vec::with_capacity(k * n * p);
        let mut chunk_decay = Vec::with_capacity(k);
        for &(s, e) in &chunks {
            let q = e - s;
            let mut weighted = Tensor::zeros(&[n, q]);
            let mut tail = R::one();
            for r in (0..q).rev() {
                for i in 0..n {
                    *weighted.at_mut(i, r) = tail * v.b.at(s + r, i);
                }
                tail = tail * v.a[s + r];
            }
            steps.right.elementwise((q * n + q) as u64);
            chunk_decay.push(tail);
            let state = contract(Contraction::MatMul, &weighted, &v.x.slice_rows(s, e), &mut steps.right)?;
            chunk_states.extend_from_slice(state.data());
        }

        // 3. Center factors: propagate chunk states across chunks.
        let init = head_state(h_init, h, n * p);
        let carried = scan(
            &chunk_decay,
            &chunk_states,
            n * p,
            &ScanAlgorithm::Sequential,
            h_init.map(|_| init.as_slice()),
            &mut steps.center,
        )?;

        // 4. Left factors: read out the state entering each chunk.
        for (ci, &(s, e)) in chunks.iter().enumerate() {
            let q = e - s;
            let entering = if ci == 0 { init.clone() } else { carried.h[(ci - 1) * n * p..ci * n * p].to_vec() };
            let mut weighted = Tensor::zeros(&[q, n]);
            let mut head_decay = R::one();
            for r in 0..q {
                head_decay = head_decay * v.a[s + r];
                for i in 0..n {
                    *weighted.at_mut(r, i) = head_decay * v.c.at(s + r, i);
                }
            }
            steps.left.elementwise((q * n + q) as u64);
            let state = Tensor::new(vec![n, p], entering)?;
            let off = contract(Contraction::ChunkReadout, &weighted, &state, &mut steps.left)?;
            for r in 0..q {
                for j in 0..p {
                    let cur = y.get(&[s + r, h, j]);
                    y.set(&[s + r, h, j], cur + off.at(r, j));
                }
            }
            steps.left.elementwise((q * p) as u64);
        }
        fin.extend_from_slice(&carried.final_state);
    }
    steps.center.state((k * n * p) as u64);
    Ok((y, Tensor::new(vec![heads, n, p], fin)?, steps))
}

/// Predicted and measured work of [`ssd_blocked`].
#[derive(Debug, Clone, PartialEq)]
pub struct SsdCost {
    pub predicted: BlockedSteps,
    pub measured: BlockedSteps,
}

impl SsdCost {
    /// Largest relative gap between predicted and measured contraction work
    /// over the four steps.
    pub fn max_rel_gap(&self) -> f64 {
        [
            (self.predicted.diagonal, self.measured.diagonal),
            (self.predicted.right, self.measured.right),
            (self.predicted.center, self.measured.center),
            (self.predicted.left, self.measured.left),
        ]
        .iter()
        .map(|(p, m)| {
            let (p, m) = (p.mul_adds as f64, m.mul_adds as f64);
            if p == 0.0 { if m == 0.0 { 0.0 } else { f64::INFINITY } } else { (p - m).abs() / p }
        })
        .fold(0.0, f64::max)
    }
}

/// Closed-form step costs for `H` heads, counting multiply-accumulates.
///
/// Per chunk of length `q`: the diagonal block costs `q·q·N` for `C B^T`,
/// `q·q` for the mask and `q·q·P` for the product with `X`; the right and
/// left factors cost `N·q·P` each. The center scan over `K` chunks costs
/// `2 (K - 1)` per state entry.
pub fn ssd_predicted(t: usize, q: usize, n: usize, p: usize, heads: usize) -> Result<BlockedSteps> {
    let plan = ChunkPlan::new(q)?;
    let chunks = plan.chunks(t);
    let mut steps = BlockedSteps::default();
    let hh = heads as u64;
    let (n, p) = (n as u64, p as u64);
    for (s, e) in &chunks {
        let q = (e - s) as u64;
        steps.diagonal.mul_add(hh * (q * q * n + q * q + q * q * p));
        steps.right.mul_add(hh * n * q * p);
        steps.left.mul_add(hh * q * n * p);
    }
    steps.center.mul_add(hh * 2 * (chunks.len() as u64).saturating_sub(1) * n * p);
    Ok(steps)
}

/// Runs [`ssd_blocked`] on seeded random inputs and reports its work beside
/// [`ssd_predicted`].
pub fn ssd_cost(t: usize, q: usize, n: usize, p: usize, heads: usize) -> Result<SsdCost> {
    let inputs = random_inputs(0, t, heads, n, p, HeadPattern::MultiHead)?;
    let (_, _, measured) = ssd_blocked_steps(&inputs, ChunkPlan::new(q)?, None)?;
    Ok(SsdCost { predicted: ssd_predicted(t, q, n, p, heads)?, measured })
}

/// Seeded inputs with standard normal `X`, `B`, `C` and decays uniform in
/// `[0.5, 1]`.
pub fn random_inputs(seed: u64, t: usize, heads: usize, n: usize, p: usize, pattern: HeadPattern) -> Result<SsdInputs> {
    let mut rng = seeded(seed);
    let (hx, hb, hc) = pattern.extents(heads);
    let x = normal_tensor(&mut rng, &[t, hx, p]);
    let a = uniform_tensor(&mut rng, &[t, heads], 0.5, 1.0);
    let b = normal_tensor(&mut rng, &[t, hb, n]);
    let c = normal_tensor(&mut rng, &[t, hc, n]);
    SsdInputs::new(x, a, b, c, pattern)
}
