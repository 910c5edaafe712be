//! Adversarial inference-occlusion self-supervised learning at desk scale.
//!
//! An encoder is trained to make the representation of a masked image match
//! that of the unmasked view, while an occlusion network produces the masks and
//! is trained to make that as hard as possible.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod datasets;
pub mod error;
pub mod eval;
pub mod gradsuite;
pub mod masks;
pub mod nn;
pub mod numerics;
pub mod rng;
pub mod ssl;
pub mod trainer;

pub use error::{AdiosError, Result};
