//! Matrix representation and the spectral norm.

mod dense;
mod norm;
mod sparse;

pub use dense::{operator_norm_oracle, symmetric_eigen, top_singular_pair, DenseMatrix, ORACLE_MAX_DIM};
pub use norm::{operator_norm, NormResult, RESTARTS};
pub use sparse::{Entry, SparsePattern};
