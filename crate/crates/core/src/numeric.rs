//! Dense tensor substrate: shapes, named-axis contraction, rank estimation
//! and operation counting.
//!
//! Only the handful of contraction patterns that appear in the state space
//! and attention algorithms are accepted (see [`Contraction`]). Every
//! contraction reports its multiply-accumulate count to an [`OpCounter`]:
//! the count is the product of the extents of all distinct axes in the
//! descriptor, so `MN,NK->MK` costs exactly `M*N*K`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floating point element type. Implemented for `f32` and `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossless-enough conversion from an `f64` constant.
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Axis labels used when tagging tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AxisName {
    T,
    S,
    N,
    P,
    H,
    G,
    Chunk,
}

/// Row-major dense tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<R = f64> {
    shape: Vec<usize>,
    data: Vec<R>,
    axis_names: Option<Vec<AxisName>>,
}

impl<R: Real> Tensor<R> {
    pub fn new(shape: Vec<usize>, data: Vec<R>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::dim(
                "data",
                format!(
                    "shape {:?} holds {} elements but {} were given",
                    shape,
                    expected,
                    data.len()
                ),
            ));
        }
        Ok(Self {
            shape,
            data,
            axis_names: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![R::zero(); len],
            axis_names: None,
        }
    }

    pub fn filled(shape: &[usize], value: R) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; len],
            axis_names: None,
        }
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<R>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::dim("column", "rows have different lengths"));
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(vec![m, n], data)
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> R) -> Self {
        let mut out = Self::zeros(shape);
        let mut idx = vec![0usize; shape.len()];
        for v in out.data.iter_mut() {
            *v = f(&idx);
            for d in (0..idx.len()).rev() {
                idx[d] += 1;
                if idx[d] < shape[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        out
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(&[n, n], |i| if i[0] == i[1] { R::one() } else { R::zero() })
    }

    pub fn with_axes(mut self, names: Vec<AxisName>) -> Result<Self> {
        if names.len() != self.shape.len() {
            return Err(Error::dim(
                "axes",
                format!("{} names for rank-{} tensor", names.len(), self.shape.len()),
            ));
        }
        self.axis_names = Some(names);
        Ok(self)
    }

    pub fn axis_names(&self) -> Option<&[AxisName]> {
        self.axis_names.as_deref()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[R] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [R] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<R> {
        self.data
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        idx.iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &n)| {
                debug_assert!(i < n);
                acc * n + i
            })
    }

    pub fn get(&self, idx: &[usize]) -> R {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: R) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    /// Element `(i, j)` of a matrix.
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> R {
        self.data[i * self.shape[1] + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut R {
        let n = self.shape[1];
        &mut self.data[i * n + j]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != self.data.len() {
            return Err(Error::dim(
                "shape",
                format!("cannot reshape {:?} into {:?}", self.shape, shape),
            ));
        }
        self.shape = shape.to_vec();
        self.axis_names = None;
        Ok(self)
    }

    pub fn transpose(&self) -> Self {
        assert_eq!(self.rank(), 2, "transpose expects a matrix");
        let (m, n) = (self.shape[0], self.shape[1]);
        Self::from_fn(&[n, m], |i| self.at(i[1], i[0]))
    }

    pub fn map(&self, f: impl Fn(R) -> R) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            axis_names: self.axis_names.clone(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(R, R) -> R) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::dim(
                "shape",
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            axis_names: self.axis_names.clone(),
        })
    }

    pub fn scale(&self, s: R) -> Self {
        self.map(|v| v * s)
    }

    pub fn max_abs(&self) -> R {
        self.data.iter().fold(R::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Rows `start..end` of the leading axis.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        let inner: usize = self.shape[1..].iter().product();
        let mut shape = self.shape.clone();
        shape[0] = end - start;
        Self {
            shape,
            data: self.data[start * inner..end * inner].to_vec(),
            axis_names: self.axis_names.clone(),
        }
    }

    /// Concatenates tensors along the leading axis.
    pub fn concat_rows(parts: &[Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::dim("rows", "nothing to concatenate"))?;
        let tail = &first.shape[1..];
        let mut rows = 0;
        let mut data = Vec::new();
        for p in parts {
            if &p.shape[1..] != tail {
                return Err(Error::dim(
                    "rows",
                    format!("trailing shape {:?} vs {:?}", &p.shape[1..], tail),
                ));
            }
            rows += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        let mut shape = first.shape.clone();
        shape[0] = rows;
        Self::new(shape, data)
    }

    pub fn cast<S: Real>(&self) -> Tensor<S> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|v| S::from_f64(v.to_f64().unwrap()).unwrap())
                .collect(),
            axis_names: self.axis_names.clone(),
        }
    }
}

/// Largest absolute difference divided by the largest magnitude of the
/// reference. Returns the plain absolute difference when the reference is
/// identically zero.
pub fn max_rel_diff<R: Real>(got: &[R], reference: &[R]) -> f64 {
    assert_eq!(got.len(), reference.len(), "length mismatch");
    let mut diff = 0.0f64;
    let mut scale = 0.0f64;
    for (&g, &r) in got.iter().zip(reference) {
        let (g, r) = (g.to_f64().unwrap(), r.to_f64().unwrap());
        if !g.is_finite() || !r.is_finite() {
            return f64::INFINITY;
        }
        diff = diff.max((g - r).abs());
        scale = scale.max(r.abs());
    }
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

pub fn max_abs_diff<R: Real>(got: &[R], reference: &[R]) -> f64 {
    assert_eq!(got.len(), reference.len(), "length mismatch");
    got.iter()
        .zip(reference)
        .map(|(&g, &r)| (g.to_f64().unwrap() - r.to_f64().unwrap()).abs())
        .fold(0.0, f64::max)
}

/// Scalar operation tally for one computation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounter {
    /// Multiply-accumulates inside contractions, plus the individual
    /// multiplies and adds of scan recurrences.
    pub mul_adds: u64,
    /// Elementwise work: mask construction, Hadamard products, decay
    /// scaling, nonlinearities.
    pub elementwise: u64,
    /// Largest number of recurrent-state floats held live at once.
    pub peak_state: u64,
}

impl OpCounter {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn mul_add(&mut self, n: u64) {
        self.mul_adds += n;
    }

    #[inline]
    pub fn elementwise(&mut self, n: u64) {
        self.elementwise += n;
    }

    pub fn state(&mut self, floats: u64) {
        self.peak_state = self.peak_state.max(floats);
    }

    pub fn absorb(&mut self, other: &OpCounter) {
        self.mul_adds += other.mul_adds;
        self.elementwise += other.elementwise;
        self.peak_state = self.peak_state.max(other.peak_state);
    }
}

/// The closed set of contraction patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Contraction {
    /// `MN,NK->MK`
    MatMul,
    /// `SP,SN->SPN`: outer product expanding inputs into states.
    Expand,
    /// `TSN,SPN->TPN`
    StateMix,
    /// `TN,TPN->TP`: contracting states into outputs.
    Readout,
    /// `TN,SN->TS`: the Gram (kernel) matrix.
    Gram,
    /// `TS,TS->TS`: Hadamard product with a mask.
    Mask,
    /// `TS,SP->TP`
    Apply,
    /// `TS,SPN->TPN`: mask applied to expanded states.
    MaskStates,
    /// `QN,NP->QP`: chunk readout of a state.
    ChunkReadout,
}

impl Contraction {
    pub const ALL: [Contraction; 9] = [
        Contraction::MatMul,
        Contraction::Expand,
        Contraction::StateMix,
        Contraction::Readout,
        Contraction::Gram,
        Contraction::Mask,
        Contraction::Apply,
        Contraction::MaskStates,
        Contraction::ChunkReadout,
    ];

    pub fn descriptor(self) -> &'static str {
        match self {
            Contraction::MatMul => "MN,NK->MK",
            Contraction::Expand => "SP,SN->SPN",
            Contraction::StateMix => "TSN,SPN->TPN",
            Contraction::Readout => "TN,TPN->TP",
            Contraction::Gram => "TN,SN->TS",
            Contraction::Mask => "TS,TS->TS",
            Contraction::Apply => "TS,SP->TP",
            Contraction::MaskStates => "TS,SPN->TPN",
            Contraction::ChunkReadout => "QN,NP->QP",
        }
    }

    /// Looks up a descriptor, accepting `->` or `→` as the arrow.
    pub fn parse(desc: &str) -> Result<Self> {
        let norm: String = desc
            .replace('→', "->")
            .chars()
            .filter(|c| !c.is_whitespace())
            .collect();
        Self::ALL
            .into_iter()
            .find(|c| c.descriptor() == norm)
            .ok_or_else(|| Error::UnsupportedContraction(desc.to_string()))
    }

    fn axes(self) -> (&'static str, &'static str, &'static str) {
        let d = self.descriptor();
        let (ins, out) = d.split_once("->").unwrap();
        let (a, b) = ins.split_once(',').unwrap();
        (a, b, out)
    }
}

/// Evaluates a two-operand contraction.
pub fn contract<R: Real>(
    spec: Contraction,
    lhs: &Tensor<R>,
    rhs: &Tensor<R>,
    ops: &mut OpCounter,
) -> Result<Tensor<R>> {
    let (la, ra, oa) = spec.axes();
    let la: Vec<char> = la.chars().collect();
    let ra: Vec<char> = ra.chars().collect();
    let oa: Vec<char> = oa.chars().collect();
    for (axes, t, which) in [(&la, lhs, "left"), (&ra, rhs, "right")] {
        if axes.len() != t.rank() {
            return Err(Error::dim(
                axes.iter().collect::<String>(),
                format!("{which} operand has rank {}", t.rank()),
            ));
        }
    }

    // Distinct axes: output axes first, then the summed ones.
    let mut axes: Vec<char> = oa.clone();
    for &c in la.iter().chain(&ra) {
        if !axes.contains(&c) {
            axes.push(c);
        }
    }
    let mut extent = vec![0usize; axes.len()];
    for (k, &c) in axes.iter().enumerate() {
        let mut n = None;
        for (names, t) in [(&la, lhs), (&ra, rhs)] {
            if let Some(p) = names.iter().position(|&x| x == c) {
                let len = t.shape()[p];
                match n {
                    Some(m) if m != len => {
                        return Err(Error::dim(
                            c.to_string(),
                            format!("operands disagree: {m} vs {len}"),
                        ))
                    }
                    _ => n = Some(len),
                }
            }
        }
        extent[k] = n.expect("output axis appears in an operand");
    }

    let strides = |names: &[char], shape: &[usize]| -> Vec<usize> {
        let mut own = vec![0usize; names.len()];
        let mut s = 1;
        for d in (0..names.len()).rev() {
            own[d] = s;
            s *= shape[d];
        }
        axes.iter()
            .map(|c| names.iter().position(|x| x == c).map_or(0, |p| own[p]))
            .collect()
    };
    let out_shape: Vec<usize> = extent[..oa.len()].to_vec();
    let ls = strides(&la, lhs.shape());
    let rs = strides(&ra, rhs.shape());
    let os = strides(&oa, &out_shape);

    let mut out = Tensor::zeros(&out_shape);
    let total: usize = extent.iter().product();
    ops.mul_add(total as u64);
    if total == 0 {
        return Ok(out);
    }

    let (ld, rd) = (lhs.data(), rhs.data());
    let od = out.data_mut();
    let inner = *extent.last().unwrap();
    let k_last = axes.len() - 1;
    let (lsi, rsi, osi) = (ls[k_last], rs[k_last], os[k_last]);
    let mut idx = vec![0usize; axes.len()];
    let (mut lo, mut ro, mut oo) = (0usize, 0usize, 0usize);
    loop {
        // Innermost axis unrolled as a plain loop.
        let (mut l, mut r, mut o) = (lo, ro, oo);
        for _ in 0..inner {
            od[o] = od[o] + ld[l] * rd[r];
            l += lsi;
            r += rsi;
            o += osi;
        }
        // Advance the odometer over the remaining axes.
        let mut d = k_last;
        loop {
            if d == 0 {
                return Ok(out);
            }
            d -= 1;
            idx[d] += 1;
            lo += ls[d];
            ro += rs[d];
            oo += os[d];
            if idx[d] < extent[d] {
                break;
            }
            lo -= ls[d] * extent[d];
            ro -= rs[d] * extent[d];
            oo -= os[d] * extent[d];
            idx[d] = 0;
        }
    }
}

/// Matrix product `a @ b`.
pub fn matmul<R: Real>(a: &Tensor<R>, b: &Tensor<R>, ops: &mut OpCounter) -> Result<Tensor<R>> {
    contract(Contraction::MatMul, a, b, ops)
}

/// Evaluation order for the four-operand masked contraction
/// `TN,SN,SP,TS->TP` (queries, keys, values, mask).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskedOrder {
    /// `G = QK^T`, `M = G ∘ L`, `Y = M V`.
    Quadratic,
    /// `Z = V ⊗ K`, `H = L Z`, `Y = Q · H`.
    Linear,
}

/// `TN,SN,SP,TS->TP` evaluated as a chain of pairwise contractions.
pub fn masked_contract<R: Real>(
    q: &Tensor<R>,
    k: &Tensor<R>,
    v: &Tensor<R>,
    mask: &Tensor<R>,
    order: MaskedOrder,
    ops: &mut OpCounter,
) -> Result<Tensor<R>> {
    match order {
        MaskedOrder::Quadratic => {
            let g = contract(Contraction::Gram, q, k, ops)?;
            let m = contract(Contraction::Mask, &g, mask, ops)?;
            contract(Contraction::Apply, &m, v, ops)
        }
        MaskedOrder::Linear => {
            let z = contract(Contraction::Expand, v, k, ops)?;
            let h = contract(Contraction::MaskStates, mask, &z, ops)?;
            contract(Contraction::Readout, q, &h, ops)
        }
    }
}

/// Numerical rank by Gaussian elimination with complete pivoting.
///
/// Counts pivots whose magnitude exceeds `rel_tol` times the first (largest)
/// pivot.
pub fn numerical_rank(m: &Tensor<f64>, rel_tol: f64) -> usize {
    assert_eq!(m.rank(), 2, "numerical_rank expects a matrix");
    let (rows, cols) = (m.shape()[0], m.shape()[1]);
    if rows == 0 || cols == 0 {
        return 0;
    }
    let mut a = m.data().to_vec();
    let mut rank = 0;
    let mut threshold = None;
    for step in 0..rows.min(cols) {
        let (mut pr, mut pc, mut best) = (step, step, 0.0f64);
        for i in step..rows {
            for j in step..cols {
                let v = a[i * cols + j].abs();
                if v > best {
                    best = v;
                    pr = i;
                    pc = j;
                }
            }
        }
        let thr = *threshold.get_or_insert(rel_tol * best);
        if best == 0.0 || best <= thr {
            break;
        }
        rank += 1;
        if pr != step {
            for j in 0..cols {
                a.swap(step * cols + j, pr * cols + j);
            }
        }
        if pc != step {
            for i in 0..rows {
                a.swap(i * cols + step, i * cols + pc);
            }
        }
        let piv = a[step * cols + step];
        for i in step + 1..rows {
            let f = a[i * cols + step] / piv;
            if f == 0.0 {
                continue;
            }
            for j in step..cols {
                a[i * cols + j] -= f * a[step * cols + j];
            }
        }
    }
    rank
}
