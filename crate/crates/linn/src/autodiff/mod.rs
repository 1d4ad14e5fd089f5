//! Reverse-mode automatic differentiation over small dense tensors.
//!
//! A [`Tape`] records every operation of a forward pass; [`Tape::backward`]
//! replays it in reverse and accumulates parameter gradients into a
//! [`GradBuffer`]. Parameters live in a [`ParamStore`] so the same set of
//! weights can be shared across many short-lived tapes (one per chunk of a
//! training batch).

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod params;
pub mod tape;
pub mod tensor;

pub use adam::Adam;
pub use gradcheck::{check_gradients, GradCheckReport};
pub use params::{GradBuffer, ParamId, ParamStore};
pub use tape::{NodeId, Tape};
pub use tensor::Tensor;
