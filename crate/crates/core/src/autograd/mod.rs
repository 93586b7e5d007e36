//! Minimal dense-tensor arithmetic with reverse-mode differentiation.
//!
//! Enough machinery to train every encoder in this crate: a fixed set of
//! primitives, each with an exact backward rule, plus Adam and a binary
//! checkpoint format. Training runs in `f32`; every primitive can also be
//! instantiated at `f64`, which the finite-difference checks in
//! [`gradcheck`] rely on.

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod optim;
pub mod tensor;

pub use graph::{Graph, NodeId};
pub use optim::{Adam, ParameterSet, Session};
pub use tensor::{Dtype, Real, Tensor};
