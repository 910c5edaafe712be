//! Differentiable operations, implemented as methods on [`Var`](super::tape::Var).

mod conv;
mod elementwise;
mod linalg;
mod norm;
mod pool;
mod reduce;
mod stack;

pub use norm::GROUP_NORM_EPS;
