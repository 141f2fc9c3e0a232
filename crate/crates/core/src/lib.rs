//! Discrete-time exclusion processes with holdback on a ring.
//!
//! A particle with an empty right neighbor moves one site right in every
//! slot if its left neighbor is empty, and only with probability `p` if the
//! left neighbor is occupied. All particles update in parallel. The crate
//! provides the stepper and its variants (zero-range, slow-to-start, CSMA),
//! random relocations, flux and cluster observables, the limiting fluid
//! dynamics, cyclic ballot counts, and the zero-range fugacity solver.

pub mod analytic;
pub mod ballot;
pub mod error;
pub mod fluid;
pub mod metrics;
pub mod perturb;
pub mod ring;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
pub use ring::{InitSpec, ModelParams, MoveRecord, Policy, RingState, Variant};
pub use sim::{Simulation, SlotOutcome};
