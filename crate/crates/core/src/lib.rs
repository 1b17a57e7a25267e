//! Exact simulation of linear-optical entanglement distribution with heralding.
//!
//! The crate models small photonic circuits on sparse Fock states: polarization-
//! entangled pair sources with realistic pair-number statistics, lossy channels
//! and couplers, number-resolving detection, and the two heralding architectures
//! used to certify entanglement over lossy links — a teleportation-based qubit
//! amplifier and an entanglement-swapping relay. On top of the heralded states it
//! evaluates CHSH correlations and device-independent key rates, and ships a
//! derivative-free optimizer for tuning source and splitter parameters.
//!
//! Everything is computed exactly (no sampling): mixed states are weighted lists
//! of sparse pure states, and detection is expanded analytically per branch.

// Parameter guards are written `!(x > 0.0)` on purpose: the negation also
// rejects NaN, which `x <= 0.0` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chsh;
pub mod error;
pub mod fock;
pub mod heralding;
pub mod optimizer;
pub mod pipeline;
pub mod schemes;
pub mod sources;

mod par;

pub use error::{Error, Result};
