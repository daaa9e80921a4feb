//! A forward-only Mamba-2 style block around the dual layer, and simulated
//! tensor-parallel, sequence-parallel and variable-length execution.
//!
//! ```text
//! x = u W_x    z = u W_z    (dt, B, C) = u W_dbc
//! x_c = conv1d(x)                      depthwise, causal, width w
//! a_t = exp(softplus(dt_t) * A_base)   one decay per head
//! y = SSD(a, B, C, x_c)
//! out = groupnorm(y * swish(z)) W_o
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{contract, Contraction, OpCounter, Real, Tensor};
use crate::rng::{normal_tensor, seeded, uniform_vec};
use crate::ssd::{ssd_blocked, ssd_recurrent, ChunkPlan, HeadPattern, SsdInputs};

pub const GROUPNORM_EPS: f64 = 1e-5;

/// Block dimensions. `inner = expand * d` channels are split into `heads`
/// heads of width `inner / heads`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub d: usize,
    pub inner: usize,
    pub heads: usize,
    /// Groups sharing `B` and `C`.
    pub groups: usize,
    pub state: usize,
    pub conv_width: usize,
    pub norm_groups: usize,
    pub chunk: usize,
}

impl BlockConfig {
    /// Expansion factor 2, one group, `N = 16`, width-4 convolution, one
    /// normalization group, chunks of 64.
    pub fn new(d: usize, heads: usize) -> Self {
        Self { d, inner: 2 * d, heads, groups: 1, state: 16, conv_width: 4, norm_groups: 1, chunk: 64 }
    }

    pub fn head_dim(&self) -> usize {
        self.inner / self.heads
    }

    /// Width of the `(dt, B, C)` projection.
    pub fn dbc_width(&self) -> usize {
        self.heads + 2 * self.groups * self.state
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d", self.d),
            ("inner", self.inner),
            ("heads", self.heads),
            ("groups", self.groups),
            ("state", self.state),
            ("conv_width", self.conv_width),
            ("norm_groups", self.norm_groups),
            ("chunk", self.chunk),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.inner % self.heads != 0 {
            return Err(Error::Config(format!("{} channels do not split into {} heads", self.inner, self.heads)));
        }
        if self.heads % self.groups != 0 {
            return Err(Error::Config(format!("{} groups do not divide {} heads", self.groups, self.heads)));
        }
        if self.inner % self.norm_groups != 0 {
            return Err(Error::Config(format!("{} norm groups do not divide {} channels", self.norm_groups, self.inner)));
        }
        Ok(())
    }
}

/// Parameters of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights<R = f64> {
    pub config: BlockConfig,
    /// `(d, inner)`
    pub w_x: Tensor<R>,
    /// `(d, inner)`
    pub w_z: Tensor<R>,
    /// `(d, heads + 2 groups state)`: dt for each head, then `B` and `C`
    /// for each group.
    pub w_dbc: Tensor<R>,
    /// `(inner, conv_width)`; tap `k` multiplies the input `k` steps back.
    pub conv: Tensor<R>,
    /// `(heads,)`, strictly negative.
    pub a_base: Vec<R>,
    /// `(inner,)`
    pub norm_scale: Vec<R>,
    /// `(inner,)`
    pub norm_shift: Vec<R>,
    /// `(inner, d)`
    pub w_o: Tensor<R>,
}

const TENSOR_NAMES: [&str; 8] = ["w_x", "w_z", "w_dbc", "conv", "a_base", "norm_scale", "norm_shift", "w_o"];

impl<R: Real> BlockWeights<R> {
    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        c.validate()?;
        let expect: [(&str, &[usize], Vec<usize>); 8] = [
            ("w_x", self.w_x.shape(), vec![c.d, c.inner]),
            ("w_z", self.w_z.shape(), vec![c.d, c.inner]),
            ("w_dbc", self.w_dbc.shape(), vec![c.d, c.dbc_width()]),
            ("conv", self.conv.shape(), vec![c.inner, c.conv_width]),
            ("a_base", &[self.a_base.len()], vec![c.heads]),
            ("norm_scale", &[self.norm_scale.len()], vec![c.inner]),
            ("norm_shift", &[self.norm_shift.len()], vec![c.inner]),
            ("w_o", self.w_o.shape(), vec![c.inner, c.d]),
        ];
        for (name, got, want) in expect {
            if got != want.as_slice() {
                return Err(Error::dim(name, format!("expected {want:?}, got {got:?}")));
            }
        }
        if self.a_base.iter().any(|&v| !(v < R::zero())) {
            return Err(Error::Config("decay bases must be negative".into()));
        }
        Ok(())
    }

    pub fn cast<S: Real>(&self) -> BlockWeights<S> {
        let v = |x: &[R]| x.iter().map(|&e| S::c(e.to_f64().unwrap())).collect();
        BlockWeights {
            config: self.config,
            w_x: self.w_x.cast(),
            w_z: self.w_z.cast(),
            w_dbc: self.w_dbc.cast(),
            conv: self.conv.cast(),
            a_base: v(&self.a_base),
            norm_scale: v(&self.norm_scale),
            norm_shift: v(&self.norm_shift),
            w_o: self.w_o.cast(),
        }
    }

    /// Same weights with `W_o` zeroed.
    pub fn without_output(&self) -> Self {
        Self { w_o: Tensor::zeros(self.w_o.shape()), ..self.clone() }
    }
}

impl BlockWeights<f64> {
    /// Seeded initialization with fan-in scaled Gaussian projections.
    pub fn random(config: BlockConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded(seed);
        let c = config;
        let fan = |n: usize| 1.0 / (n as f64).sqrt();
        let w_x = normal_tensor(&mut rng, &[c.d, c.inner]).scale(fan(c.d));
        let w_z = normal_tensor(&mut rng, &[c.d, c.inner]).scale(fan(c.d));
        let w_dbc = normal_tensor(&mut rng, &[c.d, c.dbc_width()]).scale(fan(c.d));
        let conv = normal_tensor(&mut rng, &[c.inner, c.conv_width]).scale(fan(c.conv_width));
        let a_base = uniform_vec(&mut rng, c.heads, -2.0, -0.5);
        let norm_scale = normal_tensor(&mut rng, &[c.inner]).map(|v| 1.0 + 0.1 * v).into_data();
        let norm_shift = normal_tensor(&mut rng, &[c.inner]).scale(0.1).into_data();
        let w_o = normal_tensor(&mut rng, &[c.inner, c.d]).scale(fan(c.inner));
        let w = Self { config, w_x, w_z, w_dbc, conv, a_base, norm_scale, norm_shift, w_o };
        w.validate()?;
        Ok(w)
    }

    fn tensors(&self) -> Vec<Tensor> {
        let v = |x: &Vec<f64>| Tensor::new(vec![x.len()], x.clone()).unwrap();
        vec![
            self.w_x.clone(),
            self.w_z.clone(),
            self.w_dbc.clone(),
            self.conv.clone(),
            v(&self.a_base),
            v(&self.norm_scale),
            v(&self.norm_shift),
            self.w_o.clone(),
        ]
    }

    /// Writes `<stem>.bin` and `<stem>.json`; see [`write_tensors`].
    pub fn save(&self, stem: &Path) -> Result<()> {
        let tensors = self.tensors();
        let named: Vec<(&str, &Tensor)> = TENSOR_NAMES.iter().copied().zip(tensors.iter()).collect();
        write_tensors(stem, &named, Some(self.config))
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let (tensors, config) = read_tensors(stem)?;
        let config = config.ok_or_else(|| Error::Fixture("sidecar has no block config".into()))?;
        let take = |name: &str| {
            tensors
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| Error::Fixture(format!("missing tensor {name}")))
        };
        let w = Self {
            config,
            w_x: take("w_x")?,
            w_z: take("w_z")?,
            w_dbc: take("w_dbc")?,
            conv: take("conv")?,
            a_base: take("a_base")?.into_data(),
            norm_scale: take("norm_scale")?.into_data(),
            norm_shift: take("norm_shift")?.into_data(),
            w_o: take("w_o")?,
        };
        w.validate()?;
        Ok(w)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<BlockConfig>,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Offset into the stream, in floats.
    offset: usize,
}

/// Writes tensors as one little-endian `f64` stream (`<stem>.bin`) with a
/// JSON sidecar (`<stem>.json`) listing names, shapes and offsets.
pub fn write_tensors(stem: &Path, tensors: &[(&str, &Tensor)], config: Option<BlockConfig>) -> Result<()> {
    let mut bytes = Vec::new();
    let mut entries = Vec::new();
    let mut offset = 0;
    for (name, t) in tensors {
        entries.push(TensorEntry { name: name.to_string(), shape: t.shape().to_vec(), offset });
        offset += t.len();
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let sidecar = serde_json::to_string_pretty(&Sidecar { config, tensors: entries })
        .map_err(|e| Error::Fixture(e.to_string()))?;
    let io = |e: std::io::Error| Error::Fixture(e.to_string());
    fs::write(stem.with_extension("bin"), bytes).map_err(io)?;
    fs::write(stem.with_extension("json"), sidecar + "\n").map_err(io)?;
    Ok(())
}

/// Reads what [`write_tensors`] wrote.
pub fn read_tensors(stem: &Path) -> Result<(Vec<(String, Tensor)>, Option<BlockConfig>)> {
    let io = |e: std::io::Error| Error::Fixture(format!("{}: {e}", stem.display()));
    let bytes = fs::read(stem.with_extension("bin")).map_err(io)?;
    let text = fs::read_to_string(stem.with_extension("json")).map_err(io)?;
    let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| Error::Fixture(e.to_string()))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Fixture("stream length is not a whole number of f64 values".into()));
    }
    let floats: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let tensors = sidecar
        .tensors
        .into_iter()
        .map(|e| {
            let len: usize = e.shape.iter().product();
            let data = floats
                .get(e.offset..e.offset + len)
                .ok_or_else(|| Error::Fixture(format!("tensor {} runs past the stream", e.name)))?;
            Ok((e.name, Tensor::new(e.shape, data.to_vec())?))
        })
        .collect::<Result<_>>()?;
    Ok((tensors, sidecar.config))
}

fn softplus<R: Real>(v: R) -> R {
    if v > R::c(20.0) {
        v
    } else {
        v.exp().ln_1p()
    }
}

fn swish<R: Real>(v: R) -> R {
    v / (R::one() + (-v).exp())
}

/// Result of running the block over one contiguous span.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanOutput<R> {
    /// `(T, d)`
    pub out: Tensor<R>,
    /// SSM state after the span, `(H, N, P)`.
    pub state: Tensor<R>,
    /// The last `w - 1` convolution inputs, `(w - 1, inner)`.
    pub halo: Tensor<R>,
}

/// The block over one span.
///
/// `halo` holds the `w - 1` convolution inputs before the span (zeros when
/// absent) and `h_init` the SSM state entering it. Each index in `starts`
/// begins a new sequence: its decay is zeroed and no convolution tap
/// reaches back across it.
pub fn span_forward<R: Real>(
    w: &BlockWeights<R>,
    u: &Tensor<R>,
    halo: Option<&Tensor<R>>,
    h_init: Option<&Tensor<R>>,
    starts: &[usize],
) -> Result<SpanOutput<R>> {
    span_impl(w, u, halo, h_init, starts, InnerLayer::Blocked)
}

/// How the dual layer inside the block is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerLayer {
    /// Chunked with the configured chunk length.
    Blocked,
    /// Step-by-step recurrence.
    Recurrent,
}

fn span_impl<R: Real>(
    w: &BlockWeights<R>,
    u: &Tensor<R>,
    halo: Option<&Tensor<R>>,
    h_init: Option<&Tensor<R>>,
    starts: &[usize],
    inner: InnerLayer,
) -> Result<SpanOutput<R>> {
    let c = &w.config;
    if u.rank() != 2 || u.shape()[1] != c.d {
        return Err(Error::dim("d", format!("input must be (T, {}), got {:?}", c.d, u.shape())));
    }
    let t = u.shape()[0];
    if t == 0 {
        return Err(Error::dim("T", "empty span"));
    }
    let lag = c.conv_width - 1;
    let zero_halo = Tensor::zeros(&[lag, c.inner]);
    let halo = halo.unwrap_or(&zero_halo);
    if halo.shape() != [lag, c.inner] {
        return Err(Error::dim("w", format!("halo must be ({lag}, {}), got {:?}", c.inner, halo.shape())));
    }

    let mut ops = OpCounter::new();
    let x = contract(Contraction::MatMul, u, &w.w_x, &mut ops)?;
    let z = contract(Contraction::MatMul, u, &w.w_z, &mut ops)?;
    let dbc = contract(Contraction::MatMul, u, &w.w_dbc, &mut ops)?;

    // Depthwise causal convolution over [halo; x].
    let ext = Tensor::concat_rows(&[halo.clone(), x])?;
    let xc = Tensor::from_fn(&[t, c.inner], |ix| {
        let (s, ch) = (ix[0], ix[1]);
        let taps = match starts.iter().filter(|&&b| b <= s).max() {
            Some(&b) => (s - b + 1).min(c.conv_width),
            None => c.conv_width,
        };
        (0..taps).fold(R::zero(), |acc, k| acc + w.conv.at(ch, k) * ext.at(s + lag - k, ch))
    });

    let (heads, groups, n, p) = (c.heads, c.groups, c.state, c.head_dim());
    let a = Tensor::from_fn(&[t, heads], |ix| {
        if starts.contains(&ix[0]) {
            R::zero()
        } else {
            (softplus(dbc.at(ix[0], ix[1])) * w.a_base[ix[1]]).exp()
        }
    });
    let b = Tensor::from_fn(&[t, groups, n], |ix| dbc.at(ix[0], heads + ix[1] * n + ix[2]));
    let cc = Tensor::from_fn(&[t, groups, n], |ix| dbc.at(ix[0], heads + groups * n + ix[1] * n + ix[2]));
    let inputs = SsdInputs::new(xc.reshape(&[t, heads, p])?, a, b, cc, HeadPattern::Grouped(groups))?;
    let (y, state) = match inner {
        InnerLayer::Blocked => ssd_blocked(&inputs, ChunkPlan::new(c.chunk)?, h_init, &mut ops)?,
        InnerLayer::Recurrent => ssd_recurrent(&inputs, h_init, &mut ops)?,
    };

    // Gate, then per-token group normalization.
    let y = y.reshape(&[t, c.inner])?.zip_map(&z, |y, z| y * swish(z))?;
    let width = c.inner / c.norm_groups;
    let eps = R::c(GROUPNORM_EPS);
    let mut normed = Tensor::zeros(&[t, c.inner]);
    for s in 0..t {
        for g in 0..c.norm_groups {
            let cols = g * width..(g + 1) * width;
            let count = R::c(width as f64);
            let mean = cols.clone().map(|j| y.at(s, j)).sum::<R>() / count;
            let var = cols.clone().map(|j| (y.at(s, j) - mean).powi(2)).sum::<R>() / count;
            let inv = R::one() / (var + eps).sqrt();
            for j in cols {
                *normed.at_mut(s, j) = (y.at(s, j) - mean) * inv * w.norm_scale[j] + w.norm_shift[j];
            }
        }
    }
    let out = contract(Contraction::MatMul, &normed, &w.w_o, &mut ops)?;
    let halo = ext.slice_rows(t, t + lag);
    Ok(SpanOutput { out, state, halo })
}

/// `(T, d) -> (T, d)` for a single sequence.
pub fn mamba2_block_forward<R: Real>(w: &BlockWeights<R>, u: &Tensor<R>) -> Result<Tensor<R>> {
    w.validate()?;
    Ok(span_forward(w, u, None, None, &[])?.out)
}

/// [`mamba2_block_forward`] with the dual layer evaluated by `inner`.
pub fn mamba2_block_forward_with<R: Real>(w: &BlockWeights<R>, u: &Tensor<R>, inner: InnerLayer) -> Result<Tensor<R>> {
    w.validate()?;
    Ok(span_impl(w, u, None, None, &[], inner)?.out)
}

/// In-process stand-in for collective communication. Reductions sum in
/// fixed shard order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimulatedComm {
    pub all_reduces: usize,
    /// Size in floats of each point-to-point message, in send order.
    pub messages: Vec<usize>,
}

impl SimulatedComm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn all_reduce<R: Real>(&mut self, parts: Vec<Tensor<R>>) -> Result<Tensor<R>> {
        self.all_reduces += 1;
        let mut it = parts.into_iter();
        let first = it.next().ok_or_else(|| Error::Config("all-reduce over no shards".into()))?;
        it.try_fold(first, |acc, part| acc.zip_map(&part, |x, y| x + y))
    }

    pub fn send(&mut self, floats: usize) {
        self.messages.push(floats);
    }

    pub fn message_floats(&self) -> usize {
        self.messages.iter().sum()
    }
}

/// Tensor-parallel split: shard `i` of `s` owns a contiguous slice of heads,
/// `B`/`C` groups and normalization groups, the matching columns of `W_x`
/// and `W_z`, and the matching rows of `W_o`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShardPlan {
    degree: usize,
}

impl ShardPlan {
    pub fn new(degree: usize, config: &BlockConfig) -> Result<Self> {
        if degree == 0 {
            return Err(Error::Config("shard degree must be at least 1".into()));
        }
        for (what, count) in [("heads", config.heads), ("groups", config.groups), ("norm groups", config.norm_groups)] {
            if count % degree != 0 {
                return Err(Error::Config(format!("{count} {what} cannot be split across {degree} shards")));
            }
        }
        Ok(Self { degree })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// The weights owned by shard `i`.
    pub fn shard<R: Real>(&self, w: &BlockWeights<R>, i: usize) -> Result<BlockWeights<R>> {
        let s = self.degree;
        if i >= s {
            return Err(Error::Config(format!("shard {i} out of range for degree {s}")));
        }
        let c = w.config;
        let config = BlockConfig {
            inner: c.inner / s,
            heads: c.heads / s,
            groups: c.groups / s,
            norm_groups: c.norm_groups / s,
            ..c
        };
        let ch = i * config.inner..(i + 1) * config.inner;
        let hd = i * config.heads..(i + 1) * config.heads;
        let gn = config.groups * c.state;
        let b_cols = c.heads + i * gn..c.heads + (i + 1) * gn;
        let c_cols = c.heads + c.groups * c.state + i * gn..c.heads + c.groups * c.state + (i + 1) * gn;
        let dbc_cols: Vec<usize> = hd.clone().chain(b_cols).chain(c_cols).collect();
        let cols = |m: &Tensor<R>, idx: &[usize]| Tensor::from_fn(&[m.shape()[0], idx.len()], |ix| m.at(ix[0], idx[ix[1]]));
        let ch_idx: Vec<usize> = ch.clone().collect();
        Ok(BlockWeights {
            config,
            w_x: cols(&w.w_x, &ch_idx),
            w_z: cols(&w.w_z, &ch_idx),
            w_dbc: cols(&w.w_dbc, &dbc_cols),
            conv: w.conv.slice_rows(ch.start, ch.end),
            a_base: w.a_base[hd].to_vec(),
            norm_scale: w.norm_scale[ch.clone()].to_vec(),
            norm_shift: w.norm_shift[ch.clone()].to_vec(),
            w_o: w.w_o.slice_rows(ch.start, ch.end),
        })
    }

    /// Inverse of [`ShardPlan::shard`].
    pub fn reassemble<R: Real>(&self, shards: &[BlockWeights<R>]) -> Result<BlockWeights<R>> {
        if shards.len() != self.degree {
            return Err(Error::Config(format!("expected {} shards, got {}", self.degree, shards.len())));
        }
        let s = self.degree;
        let c0 = shards[0].config;
        let config = BlockConfig {
            inner: c0.inner * s,
            heads: c0.heads * s,
            groups: c0.groups * s,
            norm_groups: c0.norm_groups * s,
            ..c0
        };
        let hcat = |get: &dyn Fn(&BlockWeights<R>) -> Vec<Tensor<R>>| -> Result<Tensor<R>> {
            // Concatenate column blocks by transposing to rows and back.
            let parts: Vec<Tensor<R>> = shards.iter().flat_map(get).map(|t| t.transpose()).collect();
            Ok(Tensor::concat_rows(&parts)?.transpose())
        };
        let part = |w: &BlockWeights<R>, range: std::ops::Range<usize>| {
            Tensor::from_fn(&[c0.d, range.len()], |ix| w.w_dbc.at(ix[0], range.start + ix[1]))
        };
        let gn = c0.groups * c0.state;
        let dt = hcat(&|w| vec![part(w, 0..c0.heads)])?;
        let bs = hcat(&|w| vec![part(w, c0.heads..c0.heads + gn)])?;
        let cs = hcat(&|w| vec![part(w, c0.heads + gn..c0.heads + 2 * gn)])?;
        let w_dbc = Tensor::concat_rows(&[dt.transpose(), bs.transpose(), cs.transpose()])?.transpose();
        let cat = |get: &dyn Fn(&BlockWeights<R>) -> &Vec<R>| shards.iter().flat_map(|w| get(w).iter().copied()).collect::<Vec<R>>();
        let rows = |get: &dyn Fn(&BlockWeights<R>) -> &Tensor<R>| {
            Tensor::concat_rows(&shards.iter().map(|w| get(w).clone()).collect::<Vec<_>>())
        };
        Ok(BlockWeights {
            config,
            w_x: hcat(&|w| vec![w.w_x.clone()])?,
            w_z: hcat(&|w| vec![w.w_z.clone()])?,
            w_dbc,
            conv: rows(&|w| &w.conv)?,
            a_base: cat(&|w| &w.a_base),
            norm_scale: cat(&|w| &w.norm_scale),
            norm_shift: cat(&|w| &w.norm_shift),
            w_o: rows(&|w| &w.w_o)?,
        })
    }
}

/// Runs every shard independently and sums their outputs with one
/// all-reduce.
pub fn tp_forward<R: Real>(
    w: &BlockWeights<R>,
    plan: &ShardPlan,
    u: &Tensor<R>,
    comm: &mut SimulatedComm,
) -> Result<Tensor<R>> {
    w.validate()?;
    ShardPlan::new(plan.degree, &w.config)?;
    let outs = (0..plan.degree)
        .map(|i| Ok(span_forward(&plan.shard(w, i)?, u, None, None, &[])?.out))
        .collect::<Result<Vec<_>>>()?;
    comm.all_reduce(outs)
}

/// Splits the sequence into `workers` contiguous spans. Each worker receives
/// the SSM state and the convolution halo from its predecessor.
pub fn sp_forward<R: Real>(
    w: &BlockWeights<R>,
    workers: usize,
    u: &Tensor<R>,
    comm: &mut SimulatedComm,
) -> Result<Tensor<R>> {
    w.validate()?;
    let t = u.shape()[0];
    if workers == 0 || workers > t {
        return Err(Error::Config(format!("cannot split {t} steps across {workers} workers")));
    }
    let mut outs = Vec::with_capacity(workers);
    let mut carry: Option<(Tensor<R>, Tensor<R>)> = None;
    for i in 0..workers {
        let (s, e) = (i * t / workers, (i + 1) * t / workers);
        let span = span_forward(w, &u.slice_rows(s, e), carry.as_ref().map(|c| &c.1), carry.as_ref().map(|c| &c.0), &[])?;
        if i + 1 < workers {
            comm.send(span.state.len() + span.halo.len());
        }
        carry = Some((span.state, span.halo));
        outs.push(span.out);
    }
    Tensor::concat_rows(&outs)
}

/// Floats in one sequence-parallel message: state plus convolution halo.
pub fn sp_message_floats(config: &BlockConfig) -> usize {
    config.heads * config.state * config.head_dim() + (config.conv_width - 1) * config.inner
}

/// Packs sequences into one stream, isolating them by zeroing the decay and
/// masking convolution taps at each boundary, then unpacks the outputs.
pub fn varlen_forward<R: Real>(w: &BlockWeights<R>, sequences: &[Tensor<R>]) -> Result<Vec<Tensor<R>>> {
    w.validate()?;
    if sequences.is_empty() {
        return Err(Error::Config("varlen batch needs at least one sequence".into()));
    }
    let mut starts = Vec::with_capacity(sequences.len());
    let mut offset = 0;
    for s in sequences {
        if s.rank() != 2 || s.shape()[0] == 0 {
            return Err(Error::dim("T", format!("sequence shape {:?}", s.shape())));
        }
        starts.push(offset);
        offset += s.shape()[0];
    }
    let packed = Tensor::concat_rows(sequences)?;
    let out = span_forward(w, &packed, None, None, &starts)?.out;
    Ok(sequences
        .iter()
        .zip(&starts)
        .map(|(s, &o)| out.slice_rows(o, o + s.shape()[0]))
        .collect())
}
