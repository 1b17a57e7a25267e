//! Sparse Fock-state representation for few-photon linear optics.
//!
//! States live on a small set of named bosonic modes (a [`ModeRegistry`]). A
//! [`PureState`] is a sparse map from occupation vectors to complex amplitudes;
//! a [`MixedState`] is a weighted list of pure branches. Branches are kept
//! unnormalized — the physically meaningful measure of a branch is
//! `weight * norm²`, and [`MixedState::total_weight`] sums exactly that, so
//! lossy channels and heralding can simply scale amplitudes.
//!
//! Two-mode unitaries act on creation operators as
//! `a_i† → U11·a_i† + U21·a_j†`, `a_j† → U12·a_i† + U22·a_j†`; loss couples a
//! mode to a fresh vacuum environment and traces it out, splitting each branch
//! by the number of photons lost.

mod mat2;
mod mixed;
mod pure;
mod registry;

pub use mat2::Mat2;
pub use mixed::MixedState;
pub use pure::PureState;
pub use registry::{ModeRegistry, OccupationVector};

/// Amplitudes below this magnitude are dropped when states are built or mapped.
pub const AMPLITUDE_PRUNE: f64 = 1e-14;

/// Branches whose `weight * norm²` falls below this are dropped.
pub const BRANCH_PRUNE: f64 = 1e-16;

/// Tolerance for the unitarity check on two-mode matrices.
pub const UNITARY_TOL: f64 = 1e-12;

/// Highest photon number for which factorial tables are kept. Occupations are
/// capped well below this by every registry.
pub const MAX_PHOTONS: usize = 16;

pub(crate) fn factorial(n: u32) -> f64 {
    debug_assert!((n as usize) <= MAX_PHOTONS);
    FACTORIALS[n as usize]
}

pub(crate) fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    FACTORIALS[n as usize] / (FACTORIALS[k as usize] * FACTORIALS[(n - k) as usize])
}

const FACTORIALS: [f64; MAX_PHOTONS + 1] = {
    let mut table = [1.0; MAX_PHOTONS + 1];
    let mut n = 1;
    while n <= MAX_PHOTONS {
        table[n] = table[n - 1] * n as f64;
        n += 1;
    }
    table
};
