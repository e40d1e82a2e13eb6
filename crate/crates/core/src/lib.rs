//! Causal variational principles on finite weighted point clouds.
//!
//! A point cloud with weights is the spacetime `M`; a compactly supported kernel
//! `L(x, y)` defines the action. On top of that the crate builds the linearized
//! field operator on jets, softened surface-layer forms, local weak solutions in
//! lens-shaped regions, their gluing into global solutions, causal Green's
//! operators and the causal relations they induce.

#![allow(
    clippy::needless_range_loop,
    clippy::neg_cmp_op_on_partial_ord,
    clippy::too_many_arguments
)]

pub mod action;
pub mod cli;
pub mod cones;
pub mod error;
pub mod gluing;
pub mod green;
pub mod instance;
pub mod io;
pub mod jets;
pub mod lens;
pub mod linalg;
pub mod linfield;
pub mod surface;

pub use error::{Error, Result};
pub use instance::{Instance, KernelName, KernelSpec};
pub use jets::{JetSpace, JetVector};

/// Relative threshold for numerical supports and for "η equals zero/one" decisions.
pub const EPS: f64 = 1e-9;
