//! Differentiable multiplane-image rendering with a low-rank view-dependent
//! color model.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diffcore;
mod error;
pub mod harness;
pub mod kv;
pub mod losses;
pub mod mpi;
pub mod sampling;
pub mod vdr;

pub use error::{Error, Result};
