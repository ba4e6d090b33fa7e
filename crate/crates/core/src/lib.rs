//! Two-sided operator-norm bounds for random sign matrices `(a_ij ε_ij)`.
//!
//! The crate is organised bottom-up:
//!
//! * [`linalg`] sparse patterns, the spectral norm and its dense oracle;
//! * [`patterns`] circulant graphs, hypercubes, tori and the pattern mini-language;
//! * [`rademacher`] L_p norms of Rademacher sums and the matrix norm `‖A‖_{ε,p}`;
//! * [`bounds`] closed-form bound evaluators;
//! * [`decomp`] lower/upper cubes, the good sequence and the block-diagonal cover;
//! * [`montecarlo`] seeded estimation of `E‖ε·A‖` and distributional checks.

pub mod bounds;
pub mod decomp;
pub mod error;
pub mod linalg;
pub mod montecarlo;
pub mod patterns;
pub mod rademacher;
pub mod rng;

pub use error::{Error, Result};
pub use linalg::{operator_norm, operator_norm_oracle, DenseMatrix, Entry, NormResult, SparsePattern};
