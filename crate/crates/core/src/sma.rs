//! Structured masked attention: `Y = (L ∘ Q K^T) V` for a mask `L` with a
//! fast matrix-vector product, evaluated either quadratically or in the
//! linear order `Y = Q · (L (V ⊗ K))`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};
use crate::numeric::{contract, Contraction, OpCounter, Tensor};
use crate::rng::{normal_tensor, seeded};
use crate::scan::{scan, ScanAlgorithm};
use crate::semiseparable::{materialize_1ss, OneSSCoeffs};

#[derive(Debug, Clone, PartialEq)]
pub enum MaskSpec {
    /// Lower-triangular ones.
    Causal,
    /// `L[i, j] = gamma^(i - j)` for `i >= j`.
    Decay(f64),
    /// `L[i, j] = alpha[i - j]` for `i >= j`; coefficients past the end of
    /// `alpha` are zero.
    Toeplitz(Vec<f64>),
    /// A 1-semiseparable mask.
    OneSS(OneSSCoeffs),
}

impl MaskSpec {
    pub fn validate(&self, t: usize) -> Result<()> {
        match self {
            MaskSpec::Decay(g) if !(0.0..=1.0).contains(g) => {
                Err(Error::Config(format!("decay mask needs gamma in [0, 1], got {g}")))
            }
            MaskSpec::OneSS(a) if a.len() != t => {
                Err(Error::dim("T", format!("1-SS mask has {} steps, sequence has {t}", a.len())))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MaskSpec::Causal => "causal",
            MaskSpec::Decay(_) => "decay",
            MaskSpec::Toeplitz(_) => "toeplitz",
            MaskSpec::OneSS(_) => "1ss",
        }
    }
}

pub fn mask_materialize(spec: &MaskSpec, t: usize) -> Result<Tensor> {
    spec.validate(t)?;
    let lower = |f: &dyn Fn(usize, usize) -> f64| {
        Tensor::from_fn(&[t, t], |ix| if ix[0] >= ix[1] { f(ix[0], ix[1]) } else { 0.0 })
    };
    Ok(match spec {
        MaskSpec::Causal => lower(&|_, _| 1.0),
        MaskSpec::Decay(g) => lower(&|i, j| g.powi((i - j) as i32)),
        MaskSpec::Toeplitz(alpha) => lower(&|i, j| alpha.get(i - j).copied().unwrap_or(0.0)),
        MaskSpec::OneSS(a) => materialize_1ss(a),
    })
}

fn check_qkv(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<(usize, usize, usize)> {
    if q.rank() != 2 || k.rank() != 2 || v.rank() != 2 {
        return Err(Error::dim("T", "Q, K, V must be matrices"));
    }
    let (t, n) = (q.shape()[0], q.shape()[1]);
    if k.shape()[1] != n {
        return Err(Error::dim("N", format!("Q has {n} features, K has {}", k.shape()[1])));
    }
    if k.shape()[0] != v.shape()[0] {
        return Err(Error::dim("S", format!("K has {} rows, V has {}", k.shape()[0], v.shape()[0])));
    }
    if k.shape()[0] != t {
        return Err(Error::dim("S", format!("masked attention needs S == T, got S={} T={t}", k.shape()[0])));
    }
    Ok((t, n, v.shape()[1]))
}

/// `G = Q K^T`, `M = G ∘ L`, `Y = M V`.
pub fn attention_quadratic(q: &Tensor, k: &Tensor, v: &Tensor, spec: &MaskSpec, ops: &mut OpCounter) -> Result<Tensor> {
    let (t, _, _) = check_qkv(q, k, v)?;
    let l = mask_materialize(spec, t)?;
    ops.elementwise((t * t) as u64);
    let g = contract(Contraction::Gram, q, k, ops)?;
    let m = contract(Contraction::Mask, &g, &l, ops)?;
    contract(Contraction::Apply, &m, v, ops)
}

/// `Z = V ⊗ K`, `H = L Z` by the mask's fast multiply, `Y = Q · H`.
pub fn attention_linear(q: &Tensor, k: &Tensor, v: &Tensor, spec: &MaskSpec, ops: &mut OpCounter) -> Result<Tensor> {
    let (t, n, p) = check_qkv(q, k, v)?;
    spec.validate(t)?;
    let z = contract(Contraction::Expand, v, k, ops)?; // (S, P, N)
    let h = mask_multiply(spec, z.data(), t, p * n, ops)?;
    let h = Tensor::new(vec![t, p, n], h)?;
    contract(Contraction::Readout, q, &h, ops)
}

/// `L @ z` for `z` viewed as `(T, channels)`, without materializing `L`.
pub fn mask_multiply(spec: &MaskSpec, z: &[f64], t: usize, channels: usize, ops: &mut OpCounter) -> Result<Vec<f64>> {
    spec.validate(t)?;
    match spec {
        MaskSpec::Causal => {
            let mut h = z.to_vec();
            for s in 1..t {
                for c in 0..channels {
                    h[s * channels + c] += h[(s - 1) * channels + c];
                }
            }
            ops.mul_add((t.saturating_sub(1) * channels) as u64);
            Ok(h)
        }
        MaskSpec::Decay(g) => {
            let a = vec![*g; t];
            Ok(scan(&a, z, channels, &ScanAlgorithm::Sequential, None, ops)?.h)
        }
        MaskSpec::OneSS(a) => Ok(scan(a.as_slice(), z, channels, &ScanAlgorithm::Sequential, None, ops)?.h),
        MaskSpec::Toeplitz(alpha) => {
            let support = alpha.iter().rposition(|&x| x != 0.0).map_or(0, |i| i + 1).min(t);
            if support == t && t > 1 {
                log::warn!("toeplitz mask has full support; falling back to a dense O(T^2) multiply");
            }
            let mut h = vec![0.0; t * channels];
            for s in 0..t {
                for d in 0..support.min(s + 1) {
                    let w = alpha[d];
                    for c in 0..channels {
                        h[s * channels + c] += w * z[(s - d) * channels + c];
                    }
                }
            }
            ops.mul_add(((0..t).map(|s| support.min(s + 1)).sum::<usize>() * channels) as u64);
            Ok(h)
        }
    }
}

/// Kernel feature maps `psi` applied row-wise to `Q` and `K`.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMap {
    Identity,
    /// `x * sigmoid(x)`.
    Swish,
    Relu,
    /// `1 + elu(x)`.
    Elu1p,
    Exp,
    /// Position reweighting `(x cos(pi t / 2 horizon), x sin(pi t / 2 horizon))`
    /// for row `t`.
    CosFormer { horizon: usize },
    /// Random Fourier features for the exponential kernel.
    RandomFourier { features: usize, seed: u64 },
    /// Positive random features `2^(-1/2) (exp(w x), exp(-w x))`.
    PositiveRandom { features: usize, seed: u64 },
    /// Second-order expansion `(1, x, (x ⊗ x) / sqrt 2)`.
    Taylor,
}

impl FeatureMap {
    pub fn output_dim(&self, n: usize) -> usize {
        match self {
            FeatureMap::CosFormer { .. } => 2 * n,
            FeatureMap::RandomFourier { features, .. } | FeatureMap::PositiveRandom { features, .. } => 2 * features,
            FeatureMap::Taylor => 1 + n + n * n,
            _ => n,
        }
    }
}

/// Gaussian projection `(features, n)` used by the random-feature maps.
pub fn random_projection(features: usize, n: usize, seed: u64) -> Tensor {
    normal_tensor(&mut seeded(seed ^ ((n as u64) << 32)), &[features, n])
}

/// `2^(-1/2) (exp(u), exp(-u))` applied to each projected value.
pub fn positive_pair(u: f64) -> (f64, f64) {
    (FRAC_1_SQRT_2 * u.exp(), FRAC_1_SQRT_2 * (-u).exp())
}

pub fn feature_map_apply(fm: &FeatureMap, x: &Tensor) -> Result<Tensor> {
    if x.rank() != 2 {
        return Err(Error::dim("N", "feature maps act on (T, n) matrices"));
    }
    let (t, n) = (x.shape()[0], x.shape()[1]);
    let elementwise = |f: fn(f64) -> f64| x.map(f);
    Ok(match fm {
        FeatureMap::Identity => x.clone(),
        FeatureMap::Swish => elementwise(|v| v / (1.0 + (-v).exp())),
        FeatureMap::Relu => elementwise(|v| v.max(0.0)),
        FeatureMap::Elu1p => elementwise(|v| if v > 0.0 { 1.0 + v } else { v.exp() }),
        FeatureMap::Exp => elementwise(f64::exp),
        FeatureMap::CosFormer { horizon } => {
            if *horizon == 0 {
                return Err(Error::Config("cosFormer horizon must be positive".into()));
            }
            Tensor::from_fn(&[t, 2 * n], |ix| {
                let angle = PI * ix[0] as f64 / (2.0 * *horizon as f64);
                let (col, branch) = (ix[1] % n, ix[1] / n);
                let w = if branch == 0 { angle.cos() } else { angle.sin() };
                x.at(ix[0], col) * w
            })
        }
        FeatureMap::RandomFourier { features, seed } | FeatureMap::PositiveRandom { features, seed } => {
            let m = *features;
            if m == 0 {
                return Err(Error::Config("random feature maps need at least one feature".into()));
            }
            let w = random_projection(m, n, *seed);
            let positive = matches!(fm, FeatureMap::PositiveRandom { .. });
            let mut out = Tensor::zeros(&[t, 2 * m]);
            for r in 0..t {
                let sq: f64 = (0..n).map(|c| x.at(r, c).powi(2)).sum::<f64>() / 2.0;
                let scale = if positive { (-sq).exp() } else { sq.exp() } / (m as f64).sqrt();
                for i in 0..m {
                    let u: f64 = (0..n).map(|c| w.at(i, c) * x.at(r, c)).sum();
                    let (first, second) = if positive { positive_pair(u) } else { (u.cos(), u.sin()) };
                    *out.at_mut(r, i) = scale * first;
                    *out.at_mut(r, m + i) = scale * second;
                }
            }
            out
        }
        FeatureMap::Taylor => Tensor::from_fn(&[t, 1 + n + n * n], |ix| {
            let (r, c) = (ix[0], ix[1]);
            if c == 0 {
                1.0
            } else if c <= n {
                x.at(r, c - 1)
            } else {
                let k = c - 1 - n;
                x.at(r, k / n) * x.at(r, k % n) * FRAC_1_SQRT_2
            }
        }),
    })
}

/// Kernel attention with the row-normalizing denominator, computed in the
/// linear order by appending a ones column to `V`.
pub fn normalized_attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    spec: &MaskSpec,
    fm: &FeatureMap,
    ops: &mut OpCounter,
) -> Result<Tensor> {
    let fq = feature_map_apply(fm, q)?;
    let fk = feature_map_apply(fm, k)?;
    let (t, p) = (v.shape()[0], v.shape()[1]);
    let aug = Tensor::from_fn(&[t, p + 1], |ix| if ix[1] < p { v.at(ix[0], ix[1]) } else { 1.0 });
    let y = attention_linear(&fq, &fk, &aug, spec, ops)?;
    let mut out = Tensor::zeros(&[t, p]);
    for r in 0..t {
        let den = y.at(r, p);
        if !(den > 0.0 && den.is_finite()) {
            return Err(Error::DegenerateRow { row: r });
        }
        for c in 0..p {
            *out.at_mut(r, c) = y.at(r, c) / den;
        }
    }
    ops.elementwise((t * p) as u64);
    Ok(out)
}

/// The dense row-stochastic matrix implied by [`normalized_attention`].
pub fn normalized_attention_matrix(q: &Tensor, k: &Tensor, spec: &MaskSpec, fm: &FeatureMap) -> Result<Tensor> {
    let fq = feature_map_apply(fm, q)?;
    let fk = feature_map_apply(fm, k)?;
    let t = q.shape()[0];
    let mut ops = OpCounter::new();
    let g = contract(Contraction::Gram, &fq, &fk, &mut ops)?;
    let mut m = contract(Contraction::Mask, &g, &mask_materialize(spec, t)?, &mut ops)?;
    for r in 0..t {
        let den: f64 = (0..t).map(|c| m.at(r, c)).sum();
        if !(den > 0.0 && den.is_finite()) {
            return Err(Error::DegenerateRow { row: r });
        }
        for c in 0..t {
            *m.at_mut(r, c) /= den;
        }
    }
    Ok(m)
}

/// Which randomized approximation of the exponential kernel to probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RandomFeatureKind {
    RandomFourier,
    PositiveRandom,
}

impl RandomFeatureKind {
    pub fn with(self, features: usize, seed: u64) -> FeatureMap {
        match self {
            RandomFeatureKind::RandomFourier => FeatureMap::RandomFourier { features, seed },
            RandomFeatureKind::PositiveRandom => FeatureMap::PositiveRandom { features, seed },
        }
    }
}

/// Mean absolute error between `psi(Q) psi(K)^T` and `exp(Q K^T)` for each
/// feature count in `features`.
pub fn kernel_approx_error(kind: RandomFeatureKind, features: &[usize], seed: u64, q: &Tensor, k: &Tensor) -> Result<Vec<f64>> {
    let mut ops = OpCounter::new();
    let exact = contract(Contraction::Gram, q, k, &mut ops)?.map(f64::exp);
    features
        .iter()
        .map(|&m| {
            let fm = kind.with(m, seed);
            let approx = contract(
                Contraction::Gram,
                &feature_map_apply(&fm, q)?,
                &feature_map_apply(&fm, k)?,
                &mut ops,
            )?;
            let err: f64 = approx.data().iter().zip(exact.data()).map(|(a, e)| (a - e).abs()).sum();
            Ok(err / exact.len() as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::max_rel_diff;
    use crate::rng::uniform_vec;

    fn mat(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn mask_examples() {
        let c = mask_materialize(&MaskSpec::Causal, 3).unwrap();
        assert_eq!(c.data(), &[1., 0., 0., 1., 1., 0., 1., 1., 1.]);
        let d = mask_materialize(&MaskSpec::Decay(0.5), 3).unwrap();
        assert_eq!(d.data(), &[1., 0., 0., 0.5, 1., 0., 0.25, 0.5, 1.]);
        let a = OneSSCoeffs::new(vec![0.0, 0.3, 0.8]);
        assert_eq!(mask_materialize(&MaskSpec::OneSS(a.clone()), 3).unwrap(), materialize_1ss(&a));
    }

    #[test]
    fn causal_equivalences() {
        let c = mask_materialize(&MaskSpec::Causal, 5).unwrap();
        assert_eq!(mask_materialize(&MaskSpec::Decay(1.0), 5).unwrap(), c);
        assert_eq!(mask_materialize(&MaskSpec::OneSS(OneSSCoeffs::new(vec![1.0; 5])), 5).unwrap(), c);
        assert_eq!(mask_materialize(&MaskSpec::Toeplitz(vec![1.0; 5]), 5).unwrap(), c);
    }

    #[test]
    fn invalid_masks() {
        assert!(mask_materialize(&MaskSpec::Decay(1.5), 3).is_err());
        assert!(mask_materialize(&MaskSpec::OneSS(OneSSCoeffs::new(vec![1.0; 2])), 3).is_err());
    }

    #[test]
    fn quadratic_hand_example() {
        let q = mat(&[&[1.], &[1.]]);
        let v = mat(&[&[1.], &[2.]]);
        let y = attention_quadratic(&q, &q, &v, &MaskSpec::Causal, &mut OpCounter::new()).unwrap();
        assert_eq!(y.data(), &[1., 3.]);
    }

    #[test]
    fn identity_mask_and_zero_values() {
        let mut rng = seeded(4);
        let q = normal_tensor(&mut rng, &[4, 3]);
        let k = normal_tensor(&mut rng, &[4, 3]);
        let v = normal_tensor(&mut rng, &[4, 2]);
        let spec = MaskSpec::OneSS(OneSSCoeffs::new(vec![0.0; 4]));
        let y = attention_quadratic(&q, &k, &v, &spec, &mut OpCounter::new()).unwrap();
        for t in 0..4 {
            let qk: f64 = (0..3).map(|i| q.at(t, i) * k.at(t, i)).sum();
            for p in 0..2 {
                assert!((y.at(t, p) - qk * v.at(t, p)).abs() < 1e-14);
            }
        }
        let z = attention_linear(&q, &k, &Tensor::zeros(&[4, 2]), &MaskSpec::Causal, &mut OpCounter::new()).unwrap();
        assert!(z.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn shape_errors() {
        let q = Tensor::zeros(&[3, 2]);
        let k = Tensor::zeros(&[4, 2]);
        let v = Tensor::zeros(&[4, 1]);
        assert!(matches!(attention_quadratic(&q, &k, &v, &MaskSpec::Causal, &mut OpCounter::new()), Err(Error::Dimension { .. })));
        let k = Tensor::zeros(&[3, 5]);
        assert!(attention_linear(&q, &k, &Tensor::zeros(&[3, 1]), &MaskSpec::Causal, &mut OpCounter::new()).is_err());
    }

    #[test]
    fn causal_linear_is_q_cumsum_kv() {
        let mut rng = seeded(5);
        let (t, n, p) = (7, 3, 2);
        let q = normal_tensor(&mut rng, &[t, n]);
        let k = normal_tensor(&mut rng, &[t, n]);
        let v = normal_tensor(&mut rng, &[t, p]);
        let y = attention_linear(&q, &k, &v, &MaskSpec::Causal, &mut OpCounter::new()).unwrap();
        // Running sum of k_s v_s^T, read out by q_t.
        let mut state = vec![0.0; n * p];
        for s in 0..t {
            for i in 0..n {
                for j in 0..p {
                    state[i * p + j] += k.at(s, i) * v.at(s, j);
                }
            }
            for j in 0..p {
                let e: f64 = (0..n).map(|i| q.at(s, i) * state[i * p + j]).sum();
                assert!((y.at(s, j) - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_matches_quadratic_all_masks() {
        let mut rng = seeded(6);
        let t = 9;
        let q = normal_tensor(&mut rng, &[t, 4]);
        let k = normal_tensor(&mut rng, &[t, 4]);
        let v = normal_tensor(&mut rng, &[t, 3]);
        let specs = [
            MaskSpec::Causal,
            MaskSpec::Decay(0.7),
            MaskSpec::OneSS(OneSSCoeffs::new(uniform_vec(&mut rng, t, 0.0, 1.0))),
            MaskSpec::Toeplitz(vec![1.0, -0.5, 0.25]),
            MaskSpec::Toeplitz(uniform_vec(&mut rng, t, -1.0, 1.0)),
        ];
        for spec in specs {
            let a = attention_quadratic(&q, &k, &v, &spec, &mut OpCounter::new()).unwrap();
            let b = attention_linear(&q, &k, &v, &spec, &mut OpCounter::new()).unwrap();
            assert!(max_rel_diff(b.data(), a.data()) < 1e-12, "{}", spec.name());
        }
    }

    #[test]
    fn single_step_any_mask() {
        let q = mat(&[&[1.0, 2.0]]);
        let k = mat(&[&[3.0, -1.0]]);
        let v = mat(&[&[2.0, 5.0]]);
        for spec in [MaskSpec::Causal, MaskSpec::Decay(0.3), MaskSpec::OneSS(OneSSCoeffs::new(vec![0.2])), MaskSpec::Toeplitz(vec![1.0])] {
            let y = attention_linear(&q, &k, &v, &spec, &mut OpCounter::new()).unwrap();
            assert_eq!(y.data(), &[2.0, 5.0]);
        }
    }

    #[test]
    fn work_asymmetry() {
        let count = |t: usize, linear: bool| {
            let mut rng = seeded(t as u64);
            let q = normal_tensor(&mut rng, &[t, 4]);
            let k = normal_tensor(&mut rng, &[t, 4]);
            let v = normal_tensor(&mut rng, &[t, 4]);
            let mut ops = OpCounter::new();
            if linear {
                attention_linear(&q, &k, &v, &MaskSpec::Causal, &mut ops).unwrap();
            } else {
                attention_quadratic(&q, &k, &v, &MaskSpec::Causal, &mut ops).unwrap();
            }
            ops.mul_adds as f64
        };
        let rq = count(256, false) / count(128, false);
        let rl = count(256, true) / count(128, true);
        assert!((rq - 4.0).abs() / 4.0 < 0.1, "{rq}");
        assert!((rl - 2.0).abs() / 2.0 < 0.1, "{rl}");
    }

    #[test]
    fn feature_map_examples() {
        let (a, b) = positive_pair(0.0);
        assert_eq!((a, b), (FRAC_1_SQRT_2, FRAC_1_SQRT_2));
        // One feature at the origin reduces to the bare pair.
        let z = Tensor::zeros(&[1, 3]);
        let f = feature_map_apply(&FeatureMap::PositiveRandom { features: 1, seed: 3 }, &z).unwrap();
        assert!((f.at(0, 0) - FRAC_1_SQRT_2).abs() < 1e-15 && (f.at(0, 1) - FRAC_1_SQRT_2).abs() < 1e-15);

        let x = mat(&[&[2.0, -3.0]]);
        let c = feature_map_apply(&FeatureMap::CosFormer { horizon: 4 }, &x).unwrap();
        assert_eq!(c.data(), &[2.0, -3.0, 0.0, -0.0]);

        let t = feature_map_apply(&FeatureMap::Taylor, &mat(&[&[1.0, 0.0]])).unwrap();
        assert_eq!(t.data(), &[1.0, 1.0, 0.0, FRAC_1_SQRT_2, 0.0, 0.0, 0.0]);
        assert_eq!(FeatureMap::Taylor.output_dim(5), 31);
    }

    #[test]
    fn taylor_kernel_is_second_order_exp() {
        let mut rng = seeded(12);
        let q = normal_tensor(&mut rng, &[3, 4]);
        let k = normal_tensor(&mut rng, &[3, 4]);
        let mut ops = OpCounter::new();
        let g = contract(Contraction::Gram, &feature_map_apply(&FeatureMap::Taylor, &q).unwrap(), &feature_map_apply(&FeatureMap::Taylor, &k).unwrap(), &mut ops).unwrap();
        let dots = contract(Contraction::Gram, &q, &k, &mut ops).unwrap();
        for (a, d) in g.data().iter().zip(dots.data()) {
            assert!((a - (1.0 + d + d * d / 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn prf_is_positive_and_deterministic() {
        let x = normal_tensor(&mut seeded(2), &[5, 3]).scale(3.0);
        let fm = FeatureMap::PositiveRandom { features: 8, seed: 9 };
        let a = feature_map_apply(&fm, &x).unwrap();
        assert!(a.data().iter().all(|&v| v > 0.0));
        assert_eq!(a, feature_map_apply(&fm, &x).unwrap());
        assert_eq!(a.shape(), &[5, 16]);
    }

    #[test]
    fn pointwise_maps() {
        let x = mat(&[&[-1.0, 0.0, 2.0]]);
        assert_eq!(feature_map_apply(&FeatureMap::Relu, &x).unwrap().data(), &[0.0, 0.0, 2.0]);
        let e = feature_map_apply(&FeatureMap::Elu1p, &x).unwrap();
        assert!((e.at(0, 0) - (-1.0f64).exp()).abs() < 1e-15 && e.at(0, 1) == 1.0 && e.at(0, 2) == 3.0);
        let s = feature_map_apply(&FeatureMap::Swish, &x).unwrap();
        assert!((s.at(0, 2) - 2.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-15);
        assert_eq!(feature_map_apply(&FeatureMap::Identity, &x).unwrap(), x);
    }

    #[test]
    fn self_normalization() {
        let mut rng = seeded(3);
        let q = normal_tensor(&mut rng, &[6, 2]);
        let k = normal_tensor(&mut rng, &[6, 2]);
        let ones = Tensor::filled(&[6, 2], 1.0);
        let y = normalized_attention(&q, &k, &ones, &MaskSpec::Causal, &FeatureMap::Exp, &mut OpCounter::new()).unwrap();
        assert!(y.data().iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn implied_rows_sum_to_one() {
        let mut rng = seeded(4);
        let q = normal_tensor(&mut rng, &[3, 2]);
        let k = normal_tensor(&mut rng, &[3, 2]);
        let v = normal_tensor(&mut rng, &[3, 2]);
        let m = normalized_attention_matrix(&q, &k, &MaskSpec::Causal, &FeatureMap::Exp).unwrap();
        for r in 0..3 {
            let s: f64 = (0..3).map(|c| m.at(r, c)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        let y = normalized_attention(&q, &k, &v, &MaskSpec::Causal, &FeatureMap::Exp, &mut OpCounter::new()).unwrap();
        let dense = contract(Contraction::Apply, &m, &v, &mut OpCounter::new()).unwrap();
        assert!(max_rel_diff(y.data(), dense.data()) < 1e-12);
    }

    #[test]
    fn relu_zero_row_is_degenerate() {
        let q = mat(&[&[1.0, 1.0], &[-1.0, -2.0], &[0.5, 0.5]]);
        let k = mat(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
        let v = Tensor::filled(&[3, 1], 1.0);
        let err = normalized_attention(&q, &k, &v, &MaskSpec::Causal, &FeatureMap::Relu, &mut OpCounter::new());
        assert_eq!(err, Err(Error::DegenerateRow { row: 1 }));
    }

    #[test]
    fn zero_inputs_are_exact() {
        let z = Tensor::zeros(&[4, 3]);
        for kind in [RandomFeatureKind::PositiveRandom, RandomFeatureKind::RandomFourier] {
            for e in kernel_approx_error(kind, &[1, 4, 32], 1, &z, &z).unwrap() {
                assert!(e < 1e-12, "{kind:?} {e}");
            }
        }
    }

    #[test]
    fn semiseparable_masks_have_order_one() {
        use crate::semiseparable::lower_rank_profile;
        let mut rng = seeded(8);
        let d = mask_materialize(&MaskSpec::Decay(0.8), 10).unwrap();
        assert_eq!(lower_rank_profile(&d, 0, 1e-8), 1);
        let a = OneSSCoeffs::new(uniform_vec(&mut rng, 10, 0.1, 1.0));
        assert_eq!(lower_rank_profile(&mask_materialize(&MaskSpec::OneSS(a), 10).unwrap(), 0, 1e-8), 1);
        let r = normal_tensor(&mut rng, &[10, 10]);
        let lower = Tensor::from_fn(&[10, 10], |i| if i[0] >= i[1] { r.at(i[0], i[1]) } else { 0.0 });
        assert!(lower_rank_profile(&lower, 0, 1e-8) > 1);
    }
}
