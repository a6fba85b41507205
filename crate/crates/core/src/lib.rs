//! Certified estimates of tensor norms on products of finite-dimensional
//! ℓp spaces, the multilinear ideal norms they induce, and numerical checks
//! of the identities relating them.

pub mod error;
pub mod ideal;
pub mod injective;
pub mod io;
pub mod maximize;
pub mod projective;
pub mod rng;
pub mod sigma;
mod search;
pub mod spaces;
pub mod tensors;
pub mod verify;

pub use error::{Error, Result};
pub use spaces::{ConjugatePair, Exponent, NormedSpace};
pub use tensors::{
    Decomposition, GroupedDecomposition, LinearOperator, NormEstimate, RandomStyle, Tensor,
    TensorNormEvaluator, TensorSpace, Term,
};
