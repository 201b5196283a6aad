//! Small reverse-mode autodiff engine for single-sample CHW convolutional
//! networks in `f64`.
//!
//! Each [`Tape`] records one forward pass; [`Tape::backward`] takes gradient
//! seeds on any recorded values and returns parameter gradients laid out like
//! the [`ParamStore`]. Batches are formed by summing per-sample gradients.

mod gemm;
mod optim;
mod params;
mod tape;

pub use optim::{Adam, AdamConfig, AdamState};
pub use params::{Grads, ParamId, ParamStore};
pub use tape::{ConvSpec, Tape, Var};

/// Dense `channels x height x width` activation.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), channels * height * width, "tensor data length");
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::new(channels, height, width, vec![0.0; channels * height * width])
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }
}
