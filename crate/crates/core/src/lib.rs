//! Corner counting in finite abelian groups and the trilinear functional
//! that governs popular corner differences.
//!
//! * [`kernel`]: finite product kernels, the functional `T(f)` and the
//!   constructions applied to kernels (tensor powers, scaling, mixing,
//!   step-function conversion).
//! * [`optimizer`]: projected-gradient search for kernels of small `T` at a
//!   fixed mean.
//! * [`groups`]: finite abelian groups, plane sets and the exact corner census.
//! * [`construction`]: random sets built from a kernel and their census.
//! * [`regularity`]: Walsh analysis, boxings and energy-increment refinement
//!   over `F_2^n`.

pub mod construction;
pub mod error;
pub mod groups;
pub mod kernel;
pub mod optimizer;
pub mod par;
pub mod regularity;
pub mod rng;

pub use error::{Error, Result};
pub use kernel::{DiscreteKernel, PiecewiseKernel};
pub use par::Execution;
