//! Tensors, reverse-mode differentiation, optimisation and gradient checking.

pub mod gradcheck;
pub mod ops;
pub mod optim;
pub mod params;
pub mod real;
pub mod tape;
pub mod tensor;

pub use gradcheck::{finite_diff_grad, grad_check, CheckedLoss, GradCheckReport};
pub use optim::{ema_update, sgd_momentum_step, warmup_cosine_lr};
pub use params::{Binding, Bound, Param, ParamSet};
pub use real::Real;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
