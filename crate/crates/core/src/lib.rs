//! Structured-matrix algorithms for state space models and masked
//! attention.
//!
//! A selective state space model with scalar decay and masked kernel
//! attention with a 1-semiseparable mask are the same sequence
//! transformation: multiplication by the matrix
//! `M[j, i] = (C_j · B_i) a_j ... a_{i+1}`. This crate computes that
//! transformation several ways and checks that they agree:
//!
//! * [`ssm`]: the recurrence, the three-contraction linear mode, and the
//!   materialized matrix mode;
//! * [`sma`]: masked kernel attention in quadratic and linear orders, with
//!   structured masks and kernel feature maps;
//! * [`ssd`]: the dual layer, including the chunked block-decomposition
//!   algorithm whose cost is dominated by small matrix products;
//! * [`scan`]: five algorithms for the scalar recurrence underneath all of
//!   the above;
//! * [`semiseparable`]: the matrices themselves, their rank structure and
//!   closure properties;
//! * [`architecture`]: a forward-only block built on the dual layer, with
//!   simulated tensor, sequence and variable-length parallelism.
//!
//! ```
//! use ssdual::numeric::{max_rel_diff, OpCounter};
//! use ssdual::rng::{normal_tensor, seeded, uniform_tensor};
//! use ssdual::ssd::{ssd_blocked, ssd_recurrent, ChunkPlan, HeadPattern, SsdInputs};
//!
//! let mut rng = seeded(7);
//! let (t, h, n, p) = (32, 2, 4, 3);
//! let inputs = SsdInputs::new(
//!     normal_tensor(&mut rng, &[t, h, p]),
//!     uniform_tensor(&mut rng, &[t, h], 0.5, 1.0),
//!     normal_tensor(&mut rng, &[t, h, n]),
//!     normal_tensor(&mut rng, &[t, h, n]),
//!     HeadPattern::MultiHead,
//! )
//! .unwrap();
//! let mut ops = OpCounter::new();
//! let (y_rec, _) = ssd_recurrent(&inputs, None, &mut ops).unwrap();
//! let (y_blk, _) = ssd_blocked(&inputs, ChunkPlan::new(8).unwrap(), None, &mut ops).unwrap();
//! assert!(max_rel_diff(y_blk.data(), y_rec.data()) < 1e-10);
//! ```

pub mod architecture;
pub mod error;
pub mod numeric;
pub mod rng;
pub mod scan;
pub mod semiseparable;
pub mod sma;
pub mod ssd;
pub mod ssm;

pub use error::{Error, Result};
pub use numeric::{OpCounter, Real, Tensor};

// Book chapters are compiled as doctests so their snippets stay in sync.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/semiseparable.md")]
    mod semiseparable {}
    #[doc = include_str!("../../../book/src/scan.md")]
    mod scan {}
    #[doc = include_str!("../../../book/src/ssm.md")]
    mod ssm {}
    #[doc = include_str!("../../../book/src/attention.md")]
    mod attention {}
    #[doc = include_str!("../../../book/src/ssd.md")]
    mod ssd {}
    #[doc = include_str!("../../../book/src/parallelism.md")]
    mod parallelism {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
