//! Action functionals on the free loop space of a symplectization `ℝ × Σ`.
//!
//! The crate implements the V-shaped family `A_θ` (with `A₁` the functional
//! whose gradient flow is a delay equation), the Rabinowitz functionals `A₂`
//! and `A₃`, explicit integrators for their flows, a critical point solver
//! and the correspondence between `A₁` and `A₃` flow lines.
//!
//! Everything here is allocation-only and `no_std`; file formats and the
//! command line live in the `reeblab` crate.
#![no_std]
// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod contact;
pub mod correspondence;
pub mod critical;
pub mod error;
pub mod flow;
pub mod functionals;
pub mod init;
pub mod loops;

pub use contact::{Ambient, Model, SigmaPoint, SymplPoint, TangentVector, ValidationReport};
pub use correspondence::{Lemma2Report, ScalarSeries};
pub use critical::{find_critical, CriticalReport};
pub use error::{Error, Result};
pub use flow::{energy, flow_step, integrate, Direction, FlowConfig, Integrator, Trajectory};
pub use functionals::{GradReport, ScalingRule};
pub use loops::{DiscreteLoop, TangentField};
