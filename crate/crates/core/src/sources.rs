//! Photon-pair and single-photon source models.
//!
//! Entangled sources emit into four modes (two polarization modes per party).
//! Pump phase randomization is assumed, so emissions with different pair
//! numbers combine incoherently: a source is a [`MixedState`] with one branch
//! per pair number. The n-pair branch is the normalized state obtained by
//! applying the polarization-correlated two-mode squeezer n times,
//! `(a_h†b_h† + a_v†b_v†)^n / (n!·√(n+1)) |vac⟩`, which expands to the uniform
//! superposition `Σ_k |k, n−k⟩_A |k, n−k⟩_B / √(n+1)`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{MixedState, ModeRegistry, PureState};

/// Probability distribution over emitted pair numbers, `probs[n] = P(n pairs)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDistribution {
    probs: Vec<f64>,
}

impl PairDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidConfig(
                "pair distribution needs at least the vacuum entry".into(),
            ));
        }
        let mut sum = 0.0;
        for &p in &probs {
            if !(0.0..=1.0 + 1e-12).contains(&p) {
                return Err(Error::InvalidParameter {
                    name: "pair probability",
                    value: p,
                    constraint: "[0, 1]",
                });
            }
            sum += p;
        }
        if sum > 1.0 + 1e-9 {
            return Err(Error::InvalidParameter {
                name: "pair probability sum",
                value: sum,
                constraint: "at most 1",
            });
        }
        Ok(Self { probs })
    }

    /// Two-outcome source: vacuum with probability `1 − p`, one pair with `p`.
    pub fn single_pair(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter {
                name: "p",
                value: p,
                constraint: "[0, 1]",
            });
        }
        Self::new(vec![1.0 - p, p])
    }

    pub fn vacuum() -> Self {
        Self { probs: vec![1.0] }
    }

    pub fn n_max(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn prob(&self, n: usize) -> f64 {
        self.probs.get(n).copied().unwrap_or(0.0)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// Pair-number statistics of a two-mode-squeezed (parametric down-conversion)
/// source at pump parameter `lambda`: `p_n = (n+1)·λ^n / (1+λ)^(n+2)`,
/// truncated at `n_max`. The omitted tail `1 − Σ p_n` is small for the pump
/// strengths of interest.
pub fn spdc_pair_distribution(lambda: f64, n_max: usize) -> Result<PairDistribution> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter {
            name: "lambda",
            value: lambda,
            constraint: "(0, ∞)",
        });
    }
    let probs = (0..=n_max)
        .map(|n| (n as f64 + 1.0) * lambda.powi(n as i32) / (1.0 + lambda).powi(n as i32 + 2))
        .collect();
    PairDistribution::new(probs)
}

/// Normalized n-pair ket on four modes `(a_h, a_v, b_h, b_v)`.
fn pair_ket(registry: &std::sync::Arc<ModeRegistry>, n: usize) -> Result<PureState> {
    let amp = Complex64::new(1.0 / ((n as f64) + 1.0).sqrt(), 0.0);
    let entries = (0..=n).map(|k| {
        let k = k as u8;
        let r = (n - k as usize) as u8;
        (vec![k, r, k, r], amp)
    });
    PureState::from_amplitudes(registry.clone(), entries)
}

/// Polarization-entangled pair source as an incoherent pair-number mixture.
///
/// `labels` name the four output modes in the order `(a_h, a_v, b_h, b_v)`.
pub fn pair_mixture_source(
    dist: &PairDistribution,
    labels: [&str; 4],
    photon_cap: u32,
) -> Result<MixedState> {
    if dist.n_max() as u32 > photon_cap {
        return Err(Error::InvalidParameter {
            name: "n_max",
            value: dist.n_max() as f64,
            constraint: "at most the photon cap",
        });
    }
    let registry = ModeRegistry::new(labels, photon_cap)?;
    let mut branches = Vec::new();
    for n in 0..=dist.n_max() {
        let p = dist.prob(n);
        if p > 0.0 {
            branches.push((p, pair_ket(&registry, n)?));
        }
    }
    MixedState::from_branches(registry, branches)
}

/// Source that emits one Bell pair with probability `p` and vacuum otherwise.
pub fn bell_pair_source(p: f64, labels: [&str; 4], photon_cap: u32) -> Result<MixedState> {
    pair_mixture_source(&PairDistribution::single_pair(p)?, labels, photon_cap)
}

/// Heralded single-photon source built from a two-mode squeezer.
///
/// The signal/idler pair numbers follow the thermal law
/// `q_n = λ^n / (1+λ)^(n+1)`; the idler hits a number-resolving detector with
/// efficiency `eta_herald` and the source fires when exactly one idler count is
/// registered. The returned signal-mode state is subnormalized — its total
/// weight is the herald probability `Σ_n q_n · n·η·(1−η)^(n−1)`.
pub fn heralded_single_source(
    lambda: f64,
    eta_herald: f64,
    n_max: usize,
    label: &str,
    photon_cap: u32,
) -> Result<MixedState> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter {
            name: "lambda",
            value: lambda,
            constraint: "(0, ∞)",
        });
    }
    if !(0.0..=1.0).contains(&eta_herald) {
        return Err(Error::InvalidParameter {
            name: "eta_herald",
            value: eta_herald,
            constraint: "[0, 1]",
        });
    }
    if n_max as u32 > photon_cap {
        return Err(Error::InvalidParameter {
            name: "n_max",
            value: n_max as f64,
            constraint: "at most the photon cap",
        });
    }
    let registry = ModeRegistry::new([label], photon_cap)?;
    let mut branches = Vec::new();
    for n in 1..=n_max {
        let q = lambda.powi(n as i32) / (1.0 + lambda).powi(n as i32 + 1);
        let herald = n as f64 * eta_herald * (1.0 - eta_herald).powi(n as i32 - 1);
        let w = q * herald;
        if w > 0.0 {
            branches.push((w, PureState::basis(registry.clone(), &[n as u8])?));
        }
    }
    MixedState::from_branches(registry, branches)
}

/// Deterministic one-photon emitter into a single mode.
pub fn ideal_single_source(label: &str, photon_cap: u32) -> Result<MixedState> {
    let registry = ModeRegistry::new([label], photon_cap)?;
    Ok(MixedState::from_pure(
        1.0,
        PureState::basis(registry, &[1])?,
    ))
}
