//! Trajectory-based Markovianity analysis for quantum and classical dynamics.
//!
//! A dynamical process is classified by inspecting the geometry of the
//! trajectories it generates in Bloch (or plain phase) space:
//!
//! - **Strictly Markovian (SM)**: the velocity field is single-valued; the
//!   generator is time-independent.
//! - **Initial-state Markovian (IM)**: no trajectory self-intersects, but the
//!   flow is time-dependent (distinct trajectories may cross).
//! - **Non-Markovian (NM)**: some trajectory returns to a past position with a
//!   different velocity.
//!
//! The crate provides SU(n) Bloch-vector machinery ([`bloch`]), time-dependent
//! Lindblad-style generator models ([`model`]), an adaptive integrator with
//! dense output ([`propagate`]), trajectory-set containers and persistence
//! ([`store`]), the self-/cross-intersection detector and classifier
//! ([`detect`]), four rival non-Markovianity criteria ([`criteria`]), a
//! catalog of reference models ([`catalog`]), and a scriptable CLI layer
//! ([`cli`]).
//!
//! See the `examples/` directory for runnable entry points covering each
//! capability.

pub mod bloch;
pub mod catalog;
pub mod cli;
pub mod criteria;
pub mod detect;
pub mod error;
pub mod model;
pub mod propagate;
pub mod store;

pub use bloch::{BlochVector, DensityMatrix, SuBasis};
pub use detect::{ClassificationReport, DetectionParams, IntersectionEvent, Verdict};
pub use error::{Error, Result};
pub use model::{AffineField, GeneratorModel, RateSchedule};
pub use propagate::{AffinePropagator, Trajectory};
pub use store::{SamplerSpec, SamplerStrategy, TrajectorySet};
