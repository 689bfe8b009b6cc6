//! A small CPU network kernel: valid 2-D convolutions, ReLU, dropout,
//! flatten and dense layers with hand-written backpropagation, softmax
//! cross-entropy, Adam, and a binary checkpoint format.
//!
//! Batches are `(batch, features)` matrices; each row is one example in
//! height-width-channel order. Convolutions lower to one GEMM via im2col.

mod adam;
mod checkpoint;
mod loss;
mod network;
mod spec;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::Float;

pub use adam::{adam_step, Adam, AdamConfig};
pub use checkpoint::{ModelCheckpoint, Provenance, Tensor};
pub use loss::{cross_entropy, softmax_rows};
pub use network::{dropout, ForwardCache, Gradients, Network, Params};
pub use spec::{LayerSpec, ModelSpec, Shape3};

/// Element type of activations and parameters.
pub trait Scalar:
    LinalgScalar + Float + ScalarOperand + Send + Sync + Debug + Display + Sum + 'static
{
    fn of(x: f64) -> Self;
    fn f64(self) -> f64;
}

impl Scalar for f32 {
    fn of(x: f64) -> Self {
        x as f32
    }
    fn f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn f64(self) -> f64 {
        self
    }
}
