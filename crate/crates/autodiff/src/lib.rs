//! A small dense-tensor engine with tape-based reverse-mode automatic
//! differentiation.
//!
//! Values live in row-major [`Tensor`] buffers. A [`Graph`] records every
//! operation applied to its [`Var`] handles; [`Graph::backward`] walks the
//! recording in reverse and accumulates exact analytic gradients.
//! Trainable weights are kept outside the graph in a [`ParamStore`] and are
//! pulled into each forward pass with [`Graph::param`], so a graph is cheap
//! to throw away after every step.
//!
//! ```
//! use autodiff::{Graph, Tensor};
//!
//! let mut g = Graph::<f64>::new();
//! let x = g.input(Tensor::from_vec(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
//! let sq = g.mul(x, x).unwrap();
//! let loss = g.sum(sq);
//! let grads = g.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[2.0, 4.0, 6.0]);
//! ```
//!
//! Broadcasting is restricted to leading batch dimensions: in a binary
//! elementwise op the smaller operand's shape must be a suffix of the
//! larger one's (a `[n]` bias against a `[b, t, n]` activation), or a
//! single element.

mod checkpoint;
mod error;
mod gradcheck;
mod graph;
mod optim;
mod params;
mod scalar;
mod tensor;

pub use checkpoint::{
    read_tensors, read_tensors_from, write_tensors, write_tensors_to, NamedTensor,
};
pub use error::{Result, TensorError};
pub use gradcheck::{grad_check, grad_check_params, relative_error};
pub use graph::{Gradients, Graph, Var};
pub use optim::{Adam, AdamState};
pub use params::{ParamId, ParamStore};
pub use scalar::Scalar;
pub use tensor::Tensor;

/// Clamp range applied to log standard deviations by
/// [`Graph::gaussian_sample`].
pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Lower bound applied to the argument of [`Graph::log`].
pub const LOG_EPS: f64 = 1e-12;
