//! Classical simulation of continuous matrix product states generated by
//! driven, damped cavity QED, with a variational energy search for the
//! Lieb–Liniger gas on top.

// `!(x > 0.0)` guards are deliberate: they reject NaN too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algebra;
pub mod cavity;
pub mod cmps;
pub mod error;
pub mod measure;
pub mod model;
pub mod optimizer;

pub use error::{Error, Result};
