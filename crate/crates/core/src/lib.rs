//! Coded uplink/downlink scheme for distributed multi-task learning.
//!
//! Workers hold heterogeneous subsets of N data batches. Each local update
//! is split into K - 1 packets; worker k uploads `d_k` coded packets built
//! from the rows of an encoder `A_k` that annihilates the columns of an MDS
//! downlink matrix `B` it cannot compute. The server inverts the stacked
//! encoder `A`, recovers `B v̂`, and broadcasts its first λ rows, from which
//! every worker decodes the packets it lacks.
//!
//! Module map:
//! - [`field`]: GF(2^m) arithmetic.
//! - [`matrix`]: dense exact linear algebra, generic over [`scalar::Scalar`].
//! - [`placement`]: derived quantities, the intersection condition, Hall partition.
//! - [`loads`]: lower bounds, achieved loads and baselines as exact fractions.
//! - [`scheme`]: construction of `B`, `A_k`, `A` and `P = A B`.
//! - [`protocol`]: one simulated round end to end.
//! - [`lsc`]: uplink-only linearly separable computation.

pub mod error;
pub mod field;
pub mod loads;
pub mod lsc;
pub mod matrix;
pub mod placement;
pub mod protocol;
pub mod scalar;
pub mod scheme;

pub use error::{Error, Phase, Result};
pub use field::{FieldElement, FieldSpec};
pub use loads::{LoadPair, LoadReport};
pub use matrix::Matrix;
pub use placement::{ConditionMode, DeriveOptions, Derived, Placement};
pub use scheme::{Scheme, Strategy};

/// Matrix over GF(2^m).
pub type GfMatrix = Matrix<FieldElement>;

/// Matrix over exact rationals.
pub type RationalMatrix = Matrix<num_rational::Rational64>;

/// Exact load value.
pub type Load = num_rational::Rational64;
