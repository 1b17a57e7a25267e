//! Number-resolving detection with finite efficiency.
//!
//! A [`DetectionPattern`] asks for exact photon counts on a set of modes.
//! Conditioning works per branch and is diagonal in photon number: components
//! of a branch are grouped by their counts on the measured modes, each group
//! contributes an independent sub-branch weighted by the binomial probability
//! of detecting exactly the requested counts (undetected photons are absorbed
//! by the detector), and the measured modes are removed from the state.
//! This is equivalent to applying photon loss `eta_det` on every measured mode
//! and projecting onto the exact counts, without materializing the loss
//! branches that the projection would discard.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{binomial, MixedState, OccupationVector, PureState, BRANCH_PRUNE};

/// Exact detected photon counts required on a set of labeled modes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionPattern {
    requirements: Vec<(String, u32)>,
}

impl DetectionPattern {
    pub fn new<I, S>(requirements: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, u32)>,
        S: Into<String>,
    {
        let requirements: Vec<(String, u32)> = requirements
            .into_iter()
            .map(|(l, c)| (l.into(), c))
            .collect();
        if requirements.is_empty() {
            return Err(Error::InvalidPattern);
        }
        for (i, (label, _)) in requirements.iter().enumerate() {
            if requirements[..i].iter().any(|(l, _)| l == label) {
                return Err(Error::InvalidPattern);
            }
        }
        Ok(Self { requirements })
    }

    pub fn modes(&self) -> impl Iterator<Item = &str> {
        self.requirements.iter().map(|(l, _)| l.as_str())
    }

    pub fn counts(&self) -> impl Iterator<Item = (&str, u32)> {
        self.requirements.iter().map(|(l, c)| (l.as_str(), *c))
    }

    pub fn total_count(&self) -> u32 {
        self.requirements.iter().map(|(_, c)| c).sum()
    }
}

/// Conditions `state` on each pattern in turn. All patterns must measure the
/// same modes in the same order; the per-branch grouping by measured
/// occupation is shared across them, which is what makes conditioning on the
/// four herald patterns of a Bell measurement a single pass over the state.
pub fn measure_patterns(
    state: &MixedState,
    patterns: &[DetectionPattern],
    eta_det: f64,
) -> Result<Vec<MixedState>> {
    if !(0.0..=1.0).contains(&eta_det) {
        return Err(Error::InvalidParameter {
            name: "eta_det",
            value: eta_det,
            constraint: "[0, 1]",
        });
    }
    let Some(first) = patterns.first() else {
        return Ok(Vec::new());
    };
    let registry = state.registry();
    let measured: Vec<usize> = first
        .modes()
        .map(|l| registry.index_of(l))
        .collect::<Result<_>>()?;
    for pattern in &patterns[1..] {
        if !pattern.modes().eq(first.modes()) {
            return Err(Error::InvalidPattern);
        }
    }
    let required: Vec<Vec<u32>> = patterns
        .iter()
        .map(|p| p.counts().map(|(_, c)| c).collect())
        .collect();

    let (sub_registry, kept) = registry.without(&measured);
    let mut outs: Vec<MixedState> = (0..patterns.len())
        .map(|_| MixedState::zero(sub_registry.clone()))
        .collect();

    for (w, branch) in state.branches() {
        // Group components by their occupation on the measured modes; distinct
        // groups end up in distinguishable detector/environment states, so they
        // decohere into separate branches. Coherence within a group survives.
        let mut groups: BTreeMap<OccupationVector, Vec<(OccupationVector, Complex64)>> =
            BTreeMap::new();
        for (occ, amp) in branch.amplitudes() {
            groups
                .entry(occ.select(&measured))
                .or_default()
                .push((occ.select(&kept), *amp));
        }
        for (meas, members) in groups {
            let mut ket: Option<PureState> = None;
            for (out, req) in outs.iter_mut().zip(&required) {
                let mut prob = 1.0;
                for (slot, &k) in req.iter().enumerate() {
                    let n = meas.count(slot);
                    if n < k {
                        prob = 0.0;
                        break;
                    }
                    prob *= binomial(n, k)
                        * eta_det.powi(k as i32)
                        * (1.0 - eta_det).powi((n - k) as i32);
                }
                if w * prob <= BRANCH_PRUNE {
                    continue;
                }
                let ket = ket.get_or_insert_with(|| {
                    PureState::from_occupations(sub_registry.clone(), members.iter().cloned())
                });
                if w * prob * ket.norm_sqr() > BRANCH_PRUNE {
                    out.push_branch(w * prob, ket.clone());
                }
            }
        }
    }
    Ok(outs)
}

/// Conditions `state` on detecting exactly the pattern counts with detector
/// efficiency `eta_det`. The returned state lives on the remaining modes and
/// is subnormalized: its total weight is the joint probability of the pattern.
pub fn measure_pattern(
    state: &MixedState,
    pattern: &DetectionPattern,
    eta_det: f64,
) -> Result<MixedState> {
    let outs = measure_patterns(state, std::slice::from_ref(pattern), eta_det)?;
    Ok(outs
        .into_iter()
        .next()
        .expect("one pattern in, one state out"))
}

/// Probability of observing the pattern: total weight of the conditioned state.
pub fn pattern_probability(
    state: &MixedState,
    pattern: &DetectionPattern,
    eta_det: f64,
) -> Result<f64> {
    Ok(measure_pattern(state, pattern, eta_det)?.total_weight())
}
