//! Selective state space models as sequence transformations.
//!
//! `h_t = A_t h_{t-1} + B_t x_t`, `y_t = C_t^T h_t`, applied to `P`
//! independent input channels that share `(A, B, C)`.

use crate::error::{Error, Result};
use crate::numeric::{contract, matmul, Contraction, OpCounter, Tensor};
use crate::scan::{scan, ScanAlgorithm};
use crate::semiseparable::{materialize_1ss, materialize_sss, OneSSCoeffs, SSSRep, StateMatrices};

/// Structure of the per-step state matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum SsmDecay {
    /// `A_t = a_t I`, length `T`.
    Scalar(Vec<f64>),
    /// `A_t = diag(A[t, :])`, shape `(T, N)`.
    Diagonal(Tensor),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectiveSsmParams {
    pub a: SsmDecay,
    /// `(T, N)`
    pub b: Tensor,
    /// `(T, N)`
    pub c: Tensor,
}

impl SelectiveSsmParams {
    pub fn new(a: SsmDecay, b: Tensor, c: Tensor) -> Result<Self> {
        if b.rank() != 2 || b.shape() != c.shape() {
            return Err(Error::dim("N", format!("B {:?} and C {:?} must match", b.shape(), c.shape())));
        }
        let (t, n) = (b.shape()[0], b.shape()[1]);
        match &a {
            SsmDecay::Scalar(v) if v.len() != t => {
                return Err(Error::dim("T", format!("{} decays for {t} steps", v.len())))
            }
            SsmDecay::Diagonal(d) if d.shape() != [t, n] => {
                return Err(Error::dim("N", format!("diagonal A {:?}, expected [{t}, {n}]", d.shape())))
            }
            _ => {}
        }
        Ok(Self { a, b, c })
    }

    pub fn len(&self) -> usize {
        self.b.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state_dim(&self) -> usize {
        self.b.shape()[1]
    }

    /// Decay of state component `n` at step `t`.
    #[inline]
    fn decay(&self, t: usize, n: usize) -> f64 {
        match &self.a {
            SsmDecay::Scalar(a) => a[t],
            SsmDecay::Diagonal(d) => d.at(t, n),
        }
    }

    pub fn to_sss(&self) -> SSSRep {
        let a = match &self.a {
            SsmDecay::Scalar(a) => StateMatrices::Scalar(a.clone()),
            SsmDecay::Diagonal(d) => StateMatrices::Diagonal(d.clone()),
        };
        SSSRep::new(a, self.b.clone(), self.c.clone()).expect("validated at construction")
    }

    fn check_input(&self, x: &Tensor) -> Result<usize> {
        if x.rank() != 2 || x.shape()[0] != self.len() {
            return Err(Error::dim("T", format!("X is {:?}, expected ({}, P)", x.shape(), self.len())));
        }
        Ok(x.shape()[1])
    }
}

/// Step-by-step recurrence. `h_init` is `(N, P)` and defaults to zero.
/// Returns the outputs `(T, P)` and the state after the last step.
pub fn ssm_recurrent(
    params: &SelectiveSsmParams,
    x: &Tensor,
    h_init: Option<&Tensor>,
    ops: &mut OpCounter,
) -> Result<(Tensor, Tensor)> {
    let p = params.check_input(x)?;
    let (t, n) = (params.len(), params.state_dim());
    let mut h = match h_init {
        Some(h0) if h0.shape() != [n, p] => {
            return Err(Error::dim("N", format!("h_init {:?}, expected [{n}, {p}]", h0.shape())))
        }
        Some(h0) => h0.clone(),
        None => Tensor::zeros(&[n, p]),
    };
    ops.state((n * p) as u64);
    let mut y = Tensor::zeros(&[t, p]);
    for step in 0..t {
        for i in 0..n {
            let (a, b) = (params.decay(step, i), params.b.at(step, i));
            for j in 0..p {
                let v = h.at_mut(i, j);
                *v = a * *v + b * x.at(step, j);
            }
        }
        for j in 0..p {
            *y.at_mut(step, j) = (0..n).map(|i| params.c.at(step, i) * h.at(i, j)).sum();
        }
    }
    ops.elementwise((t * n * p) as u64);
    ops.mul_add((2 * t * n * p) as u64);
    Ok((y, h))
}

/// Linear mode as three contractions: expand `Z = X ⊗ B`, scan each state
/// component along time, contract `Y = C · H`.
pub fn ssm_diagonal_contraction(params: &SelectiveSsmParams, x: &Tensor, ops: &mut OpCounter) -> Result<Tensor> {
    let p = params.check_input(x)?;
    let (t, n) = (params.len(), params.state_dim());
    let z = contract(Contraction::Expand, x, &params.b, ops)?; // (T, P, N)

    let mut h = Tensor::zeros(&[t, p, n]);
    let mut lane = vec![0.0; t * p];
    for i in 0..n {
        let a: Vec<f64> = (0..t).map(|s| params.decay(s, i)).collect();
        for s in 0..t {
            for j in 0..p {
                lane[s * p + j] = z.get(&[s, j, i]);
            }
        }
        let out = scan(&a, &lane, p, &ScanAlgorithm::Sequential, None, ops)?;
        for s in 0..t {
            for j in 0..p {
                h.set(&[s, j, i], out.h[s * p + j]);
            }
        }
    }
    contract(Contraction::Readout, &params.c, &h, ops)
}

/// Materializes `M = SSS(A, B, C)` and multiplies.
pub fn ssm_matrix_mode(params: &SelectiveSsmParams, x: &Tensor, ops: &mut OpCounter) -> Result<Tensor> {
    params.check_input(x)?;
    let m = materialize_sss(&params.to_sss(), ops);
    matmul(&m, x, ops)
}

/// For scalar decay: `Y = (1SS(a) ∘ C B^T) X`.
pub fn scalar_identity_quadratic(params: &SelectiveSsmParams, x: &Tensor, ops: &mut OpCounter) -> Result<Tensor> {
    params.check_input(x)?;
    let SsmDecay::Scalar(a) = &params.a else {
        return Err(Error::Config("quadratic mode requires a scalar decay".into()));
    };
    let l = materialize_1ss(&OneSSCoeffs::new(a.clone()));
    let t = a.len();
    ops.elementwise((t * t) as u64);
    let g = contract(Contraction::Gram, &params.c, &params.b, ops)?;
    let m = contract(Contraction::Mask, &g, &l, ops)?;
    contract(Contraction::Apply, &m, x, ops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::max_rel_diff;
    use crate::rng::{normal_tensor, seeded, uniform_tensor, uniform_vec};
    use crate::scan::cumprodsum;
    use crate::scan::ScanState;
    use proptest::prelude::*;

    fn random_params(seed: u64, t: usize, n: usize, diagonal: bool) -> SelectiveSsmParams {
        let mut rng = seeded(seed);
        let a = if diagonal {
            SsmDecay::Diagonal(uniform_tensor(&mut rng, &[t, n], 0.0, 1.0))
        } else {
            SsmDecay::Scalar(uniform_vec(&mut rng, t, 0.0, 1.0))
        };
        SelectiveSsmParams::new(a, normal_tensor(&mut rng, &[t, n]), normal_tensor(&mut rng, &[t, n])).unwrap()
    }

    #[test]
    fn degenerate_ssm_is_cumprodsum() {
        let mut rng = seeded(1);
        let t = 9;
        let a = uniform_vec(&mut rng, t, 0.0, 1.0);
        let x = normal_tensor(&mut rng, &[t, 2]);
        let params = SelectiveSsmParams::new(
            SsmDecay::Scalar(a.clone()),
            Tensor::filled(&[t, 1], 1.0),
            Tensor::filled(&[t, 1], 1.0),
        )
        .unwrap();
        let (y, _) = ssm_recurrent(&params, &x, None, &mut OpCounter::new()).unwrap();
        let (h, _) = cumprodsum(&OneSSCoeffs::new(a), &x, &ScanAlgorithm::Sequential, &ScanState::zero(), &mut OpCounter::new()).unwrap();
        assert!(max_rel_diff(y.data(), h.data()) < 1e-15);
        let y2 = ssm_diagonal_contraction(&params, &x, &mut OpCounter::new()).unwrap();
        assert!(max_rel_diff(y2.data(), h.data()) < 1e-15);
    }

    #[test]
    fn zero_decay_is_memoryless() {
        let mut rng = seeded(2);
        let (t, n, p) = (5, 3, 2);
        let b = normal_tensor(&mut rng, &[t, n]);
        let c = normal_tensor(&mut rng, &[t, n]);
        let x = normal_tensor(&mut rng, &[t, p]);
        let params = SelectiveSsmParams::new(SsmDecay::Scalar(vec![0.0; t]), b.clone(), c.clone()).unwrap();
        let (y, _) = ssm_recurrent(&params, &x, None, &mut OpCounter::new()).unwrap();
        for s in 0..t {
            let cb: f64 = (0..n).map(|i| c.at(s, i) * b.at(s, i)).sum();
            for j in 0..p {
                assert!((y.at(s, j) - cb * x.at(s, j)).abs() < 1e-14);
            }
        }
        let yq = scalar_identity_quadratic(&params, &x, &mut OpCounter::new()).unwrap();
        assert!(max_rel_diff(yq.data(), y.data()) < 1e-14);
    }

    #[test]
    fn two_step_hand_unroll() {
        // N = 2 diagonal A, P = 1.
        let a = Tensor::from_rows(&[vec![0.9, 0.1], vec![0.5, 0.25]]).unwrap();
        let b = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0]]).unwrap();
        let c = Tensor::from_rows(&[vec![1.0, 1.0], vec![2.0, 4.0]]).unwrap();
        let x = Tensor::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let params = SelectiveSsmParams::new(SsmDecay::Diagonal(a), b, c).unwrap();
        let (y, h) = ssm_recurrent(&params, &x, None, &mut OpCounter::new()).unwrap();
        // h_0 = (1, 2); y_0 = 3.
        // h_1 = (0.5*1 + 3*2, 0.25*2 - 1*2) = (6.5, -1.5); y_1 = 2*6.5 + 4*(-1.5) = 7.
        assert_eq!(y.data(), &[3.0, 7.0]);
        assert_eq!(h.data(), &[6.5, -1.5]);
    }

    #[test]
    fn contraction_mode_matches_recurrence() {
        let params = random_params(7, 16, 4, true);
        let x = normal_tensor(&mut seeded(70), &[16, 3]);
        let (y, _) = ssm_recurrent(&params, &x, None, &mut OpCounter::new()).unwrap();
        let y2 = ssm_diagonal_contraction(&params, &x, &mut OpCounter::new()).unwrap();
        assert!(max_rel_diff(y2.data(), y.data()) < 1e-12);
    }

    #[test]
    fn equal_diagonal_is_scalar_quadratic() {
        let mut rng = seeded(8);
        let (t, n) = (12, 3);
        let a = uniform_vec(&mut rng, t, 0.0, 1.0);
        let diag = Tensor::from_fn(&[t, n], |i| a[i[0]]);
        let b = normal_tensor(&mut rng, &[t, n]);
        let c = normal_tensor(&mut rng, &[t, n]);
        let x = normal_tensor(&mut rng, &[t, 2]);
        let pd = SelectiveSsmParams::new(SsmDecay::Diagonal(diag), b.clone(), c.clone()).unwrap();
        let ps = SelectiveSsmParams::new(SsmDecay::Scalar(a), b, c).unwrap();
        let y1 = ssm_diagonal_contraction(&pd, &x, &mut OpCounter::new()).unwrap();
        let y2 = scalar_identity_quadratic(&ps, &x, &mut OpCounter::new()).unwrap();
        assert!(max_rel_diff(y1.data(), y2.data()) < 1e-12);
    }

    #[test]
    fn single_step_matrix_mode() {
        let params = random_params(3, 1, 4, false);
        let x = Tensor::from_rows(&[vec![2.0, -1.0]]).unwrap();
        let y = ssm_matrix_mode(&params, &x, &mut OpCounter::new()).unwrap();
        let cb: f64 = (0..4).map(|i| params.c.at(0, i) * params.b.at(0, i)).sum();
        assert!((y.at(0, 0) - 2.0 * cb).abs() < 1e-14);
        assert!((y.at(0, 1) + cb).abs() < 1e-14);
    }

    #[test]
    fn matrix_mode_matches_recurrence_scalar() {
        let params = random_params(5, 32, 8, false);
        let x = normal_tensor(&mut seeded(50), &[32, 2]);
        let (y, _) = ssm_recurrent(&params, &x, None, &mut OpCounter::new()).unwrap();
        let ym = ssm_matrix_mode(&params, &x, &mut OpCounter::new()).unwrap();
        assert!(max_rel_diff(ym.data(), y.data()) < 1e-10);
    }

    #[test]
    fn recurrent_state_footprint() {
        let params = random_params(5, 10, 6, true);
        let x = normal_tensor(&mut seeded(5), &[10, 4]);
        let mut ops = OpCounter::new();
        ssm_recurrent(&params, &x, None, &mut ops).unwrap();
        assert_eq!(ops.peak_state, 24);
    }

    #[test]
    fn matrix_mode_work_is_quadratic() {
        let (n, p) = (4, 2);
        let mut counts = Vec::new();
        let mut rec = Vec::new();
        for t in [64usize, 128] {
            let params = random_params(t as u64, t, n, false);
            let x = normal_tensor(&mut seeded(1), &[t, p]);
            let mut ops = OpCounter::new();
            ssm_matrix_mode(&params, &x, &mut ops).unwrap();
            counts.push(ops.mul_adds as f64);
            let mut ops = OpCounter::new();
            ssm_recurrent(&params, &x, None, &mut ops).unwrap();
            rec.push(ops.mul_adds as f64);
        }
        let ratio = counts[1] / counts[0];
        assert!((ratio - 4.0).abs() < 0.2, "{ratio}");
        assert!((rec[1] / rec[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let b = Tensor::zeros(&[4, 2]);
        assert!(SelectiveSsmParams::new(SsmDecay::Scalar(vec![0.5; 3]), b.clone(), b.clone()).is_err());
        let params = SelectiveSsmParams::new(SsmDecay::Scalar(vec![0.5; 4]), b.clone(), b).unwrap();
        assert!(ssm_recurrent(&params, &Tensor::zeros(&[3, 1]), None, &mut OpCounter::new()).is_err());
        let diag = SelectiveSsmParams::new(SsmDecay::Diagonal(Tensor::zeros(&[4, 2])), Tensor::zeros(&[4, 2]), Tensor::zeros(&[4, 2])).unwrap();
        assert!(scalar_identity_quadratic(&diag, &Tensor::zeros(&[4, 1]), &mut OpCounter::new()).is_err());
    }

    proptest! {
        #[test]
        fn all_modes_linear_in_x(seed in 0u64..5000, alpha in -2.0f64..2.0, beta in -2.0f64..2.0) {
            let params = random_params(seed, 10, 3, false);
            let mut rng = seeded(seed + 1);
            let x1 = normal_tensor(&mut rng, &[10, 2]);
            let x2 = normal_tensor(&mut rng, &[10, 2]);
            let mix = x1.zip_map(&x2, |u, v| alpha * u + beta * v).unwrap();
            type Mode = fn(&SelectiveSsmParams, &Tensor, &mut OpCounter) -> Result<Tensor>;
            let modes: [Mode; 4] = [
                |p, x, o| ssm_recurrent(p, x, None, o).map(|r| r.0),
                ssm_diagonal_contraction,
                ssm_matrix_mode,
                scalar_identity_quadratic,
            ];
            for mode in modes {
                let mut ops = OpCounter::new();
                let lhs = mode(&params, &mix, &mut ops).unwrap();
                let y1 = mode(&params, &x1, &mut ops).unwrap();
                let y2 = mode(&params, &x2, &mut ops).unwrap();
                let rhs = y1.zip_map(&y2, |u, v| alpha * u + beta * v).unwrap();
                prop_assert!(max_rel_diff(lhs.data(), rhs.data()) < 1e-12);
            }
        }
    }
}
