//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] records every operation applied to its [`Var`]s; calling
//! [`Graph::backward`] on a scalar node sweeps the tape in reverse and
//! returns gradients for every node that depends on a leaf. Heavy kernels
//! (convolution, batched matmul, resampling, ROIAlign) run through
//! [`exec`], which uses rayon when the `parallel` feature is on and plain
//! loops otherwise. Both modes produce bit-identical results.

pub mod exec;
mod graph;
pub mod ops;
mod params;
mod tensor;

pub use graph::{Grads, Graph, Var};
pub use ops::{resize_bilinear, roi_align, Conv2dSpec, RoiAlignSpec, RoiBox};
pub use params::ParamStore;
pub use tensor::Tensor;
