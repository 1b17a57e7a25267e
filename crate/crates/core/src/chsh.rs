//! Measurement devices, CHSH statistics and secret-key-rate bounds.
//!
//! Each party's device is a polarization rotation followed by a polarizing
//! splitter and two number-resolving detectors of efficiency `eta_det`. A
//! round is *conclusive* when exactly one photon is registered, and its value
//! is +1 or −1 by which detector fired; everything else (zero, split or
//! multiple detections) is inconclusive. Detection probabilities are diagonal
//! in the rotated photon-number basis, so joint outcome tables are evaluated
//! analytically per basis state — no detector sampling anywhere.
//!
//! Two post-processings of the inconclusive symbol are supported: conditioning
//! on both-conclusive rounds, and the deterministic assignment of inconclusive
//! to +1 analyzed by Pironio et al., New J. Phys. 11, 045021 (2009). The key
//! rate for either analysis uses the one-way CHSH bound
//! `1 − h(Q) − h((1 + √((S/2)² − 1))/2)` from that protocol family.

use std::f64::consts::{FRAC_PI_4, FRAC_PI_8, SQRT_2};

use crate::error::{Error, Result};
use crate::fock::{Mat2, MixedState};

/// Largest CHSH value quantum mechanics allows (Tsirelson's bound).
pub const CHSH_QUANTUM_BOUND: f64 = 2.0 * SQRT_2;

/// Detector efficiency at which a directly transmitted maximally entangled
/// pair stops violating CHSH under deterministic assignment: `2(√2 − 1)`.
pub fn detection_threshold() -> f64 {
    2.0 * (SQRT_2 - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementSettings {
    /// Alice's two CHSH angles `(a1, a2)`; `a1` doubles as the key setting.
    pub alice: [f64; 2],
    /// Bob's two CHSH angles `(b1, b2)`.
    pub bob: [f64; 2],
    /// Bob's key-generation angle `b3`.
    pub bob_key: f64,
    pub eta_det: f64,
}

impl MeasurementSettings {
    /// The angles maximizing CHSH on the maximally entangled branch:
    /// `a = (0, π/4)`, `b = (π/8, −π/8)`, key setting `b3 = 0`.
    pub fn standard(eta_det: f64) -> Self {
        Self {
            alice: [0.0, FRAC_PI_4],
            bob: [FRAC_PI_8, -FRAC_PI_8],
            bob_key: 0.0,
            eta_det,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta_det) {
            return Err(Error::InvalidParameter {
                name: "eta_det",
                value: self.eta_det,
                constraint: "[0, 1]",
            });
        }
        for angle in self
            .alice
            .iter()
            .chain(self.bob.iter())
            .chain([self.bob_key].iter())
        {
            if !angle.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "angle",
                    value: *angle,
                    constraint: "finite",
                });
            }
        }
        Ok(())
    }
}

/// Index order of the ternary outcome in [`JointDistribution`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Plus = 0,
    Minus = 1,
    Inconclusive = 2,
}

/// Joint probabilities over `{+1, −1, ⊥}²`, normalized over the heralded
/// ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointDistribution {
    p: [[f64; 3]; 3],
}

impl JointDistribution {
    pub fn probability(&self, alice: Outcome, bob: Outcome) -> f64 {
        self.p[alice as usize][bob as usize]
    }

    pub fn total(&self) -> f64 {
        self.p.iter().flatten().sum()
    }

    /// Probability that both outcomes are conclusive.
    pub fn mu_cc(&self) -> f64 {
        self.p[0][0] + self.p[0][1] + self.p[1][0] + self.p[1][1]
    }

    /// Probability of exactly one conclusive outcome — the events that break
    /// the identity between the assigned and conditioned CHSH values.
    pub fn cross_conclusive_probability(&self) -> f64 {
        self.p[0][2] + self.p[1][2] + self.p[2][0] + self.p[2][1]
    }

    /// Correlator conditioned on both-conclusive rounds; `None` when no such
    /// rounds exist.
    pub fn conclusive_correlator(&self) -> Option<f64> {
        let mu = self.mu_cc();
        if mu <= 0.0 {
            return None;
        }
        Some((self.p[0][0] + self.p[1][1] - self.p[0][1] - self.p[1][0]) / mu)
    }

    /// Correlator after deterministically assigning ⊥ → +1 on both sides.
    pub fn deterministic_correlator(&self) -> f64 {
        const VALUE: [f64; 3] = [1.0, -1.0, 1.0];
        let mut e = 0.0;
        for (vi, row) in VALUE.iter().zip(&self.p) {
            for (vj, p) in VALUE.iter().zip(row) {
                e += vi * vj * p;
            }
        }
        e
    }

    /// Correlator when ⊥ is replaced by an unbiased coin; rounds with any
    /// inconclusive outcome average to zero.
    pub fn random_assignment_correlator(&self) -> f64 {
        self.p[0][0] + self.p[1][1] - self.p[0][1] - self.p[1][0]
    }

    /// Disagreement probability conditioned on both-conclusive rounds.
    pub fn error_conclusive(&self) -> Option<f64> {
        let mu = self.mu_cc();
        if mu <= 0.0 {
            return None;
        }
        Some((self.p[0][1] + self.p[1][0]) / mu)
    }

    /// Disagreement probability after assigning ⊥ → +1 on both sides.
    pub fn error_deterministic(&self) -> f64 {
        // Outcomes map to (+, −, +); disagreements pair − with {+, ⊥}.
        self.p[0][1] + self.p[1][0] + self.p[1][2] + self.p[2][1]
    }
}

/// Probabilities of (+1, −1, ⊥) for one party holding `n_h` and `n_v` photons
/// in its rotated modes, with detectors of efficiency `eta`.
fn outcome_probabilities(n_h: u32, n_v: u32, eta: f64) -> [f64; 3] {
    let miss = 1.0 - eta;
    let single = |n: u32, other: u32| -> f64 {
        if n == 0 {
            0.0
        } else {
            n as f64 * eta * miss.powi(n as i32 - 1) * miss.powi(other as i32)
        }
    };
    let plus = single(n_h, n_v);
    let minus = single(n_v, n_h);
    [plus, minus, (1.0 - plus - minus).max(0.0)]
}

/// Joint outcome tables for the heralded state at several angle pairs. The
/// state carries the `(alice_h, alice_v, out_h, out_v)` mode convention of
/// the scheme runners and may be subnormalized; probabilities are normalized
/// by its total weight. Pairs sharing Alice's angle reuse her rotated state,
/// so the five tables of a full rate evaluation cost seven rotations.
pub fn joint_distributions(
    sigma: &MixedState,
    angle_pairs: &[(f64, f64)],
    eta_det: f64,
) -> Result<Vec<JointDistribution>> {
    if !(0.0..=1.0).contains(&eta_det) {
        return Err(Error::InvalidParameter {
            name: "eta_det",
            value: eta_det,
            constraint: "[0, 1]",
        });
    }
    let total = sigma.total_weight();
    if !(total > 0.0) {
        return Err(Error::ZeroWeight);
    }
    let registry = sigma.registry();
    let a = [registry.index_of("alice_h")?, registry.index_of("alice_v")?];
    let b = [registry.index_of("out_h")?, registry.index_of("out_v")?];

    let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
    for (idx, (theta_a, _)) in angle_pairs.iter().enumerate() {
        match groups
            .iter_mut()
            .find(|(seen, _)| seen.to_bits() == theta_a.to_bits())
        {
            Some((_, members)) => members.push(idx),
            None => groups.push((*theta_a, vec![idx])),
        }
    }

    let mut tables = vec![JointDistribution { p: [[0.0; 3]; 3] }; angle_pairs.len()];
    for (theta_a, members) in groups {
        let alice_rotated = sigma.apply_two_mode_unitary(a[0], a[1], &Mat2::rotation(theta_a))?;
        for idx in members {
            let theta_b = angle_pairs[idx].1;
            let rotated =
                alice_rotated.apply_two_mode_unitary(b[0], b[1], &Mat2::rotation(theta_b))?;
            let mut p = [[0.0; 3]; 3];
            for (weight, ket) in rotated.branches() {
                for (occ, amp) in ket.amplitudes() {
                    let mass = weight * amp.norm_sqr() / total;
                    let pa = outcome_probabilities(occ.count(a[0]), occ.count(a[1]), eta_det);
                    let pb = outcome_probabilities(occ.count(b[0]), occ.count(b[1]), eta_det);
                    for (i, &pai) in pa.iter().enumerate() {
                        for (j, &pbj) in pb.iter().enumerate() {
                            p[i][j] += mass * pai * pbj;
                        }
                    }
                }
            }
            let dist = JointDistribution { p };
            debug_assert!((dist.total() - 1.0).abs() < 1e-10);
            tables[idx] = dist;
        }
    }
    Ok(tables)
}

/// Joint outcome table at a single angle pair; see [`joint_distributions`].
pub fn joint_distribution(
    sigma: &MixedState,
    theta_a: f64,
    theta_b: f64,
    eta_det: f64,
) -> Result<JointDistribution> {
    let tables = joint_distributions(sigma, &[(theta_a, theta_b)], eta_det)?;
    Ok(tables[0])
}

fn chsh_angle_pairs(settings: &MeasurementSettings) -> [(f64, f64); 4] {
    [
        (settings.alice[0], settings.bob[0]),
        (settings.alice[0], settings.bob[1]),
        (settings.alice[1], settings.bob[0]),
        (settings.alice[1], settings.bob[1]),
    ]
}

fn chsh_tables(
    sigma: &MixedState,
    settings: &MeasurementSettings,
) -> Result<[JointDistribution; 4]> {
    settings.validate()?;
    let tables = joint_distributions(sigma, &chsh_angle_pairs(settings), settings.eta_det)?;
    Ok([tables[0], tables[1], tables[2], tables[3]])
}

fn chsh_combination(e: [f64; 4]) -> f64 {
    e[0] + e[1] + e[2] - e[3]
}

/// Both-conclusive probability and the CHSH value of the conclusive
/// sub-ensemble; `S_cc` is `None` when no rounds are conclusive. `mu_cc` does
/// not depend on the angles (photon totals are rotation-invariant), so the
/// value at the first setting pair is returned.
pub fn chsh_conclusive(
    sigma: &MixedState,
    settings: &MeasurementSettings,
) -> Result<(f64, Option<f64>)> {
    let tables = chsh_tables(sigma, settings)?;
    let mu_cc = tables[0].mu_cc();
    let mut e = [0.0; 4];
    for (slot, table) in e.iter_mut().zip(tables.iter()) {
        match table.conclusive_correlator() {
            Some(corr) => *slot = corr,
            None => return Ok((mu_cc, None)),
        }
    }
    Ok((mu_cc, Some(chsh_combination(e))))
}

/// CHSH value after deterministically assigning inconclusive outcomes to +1.
pub fn chsh_deterministic(sigma: &MixedState, settings: &MeasurementSettings) -> Result<f64> {
    let tables = chsh_tables(sigma, settings)?;
    Ok(chsh_combination(
        tables.map(|t| t.deterministic_correlator()),
    ))
}

/// CHSH value when inconclusive outcomes are replaced by unbiased coin flips;
/// provided for comparison with the deterministic assignment.
pub fn chsh_random_assignment(sigma: &MixedState, settings: &MeasurementSettings) -> Result<f64> {
    let tables = chsh_tables(sigma, settings)?;
    Ok(chsh_combination(
        tables.map(|t| t.random_assignment_correlator()),
    ))
}

/// Key-basis error rate conditioned on both-conclusive rounds; `None` when no
/// rounds are conclusive.
pub fn qber_conclusive(
    sigma: &MixedState,
    theta_a: f64,
    theta_b: f64,
    eta_det: f64,
) -> Result<Option<f64>> {
    Ok(joint_distribution(sigma, theta_a, theta_b, eta_det)?.error_conclusive())
}

/// Key-basis error rate after the deterministic ⊥ → +1 assignment.
pub fn qber_deterministic(
    sigma: &MixedState,
    theta_a: f64,
    theta_b: f64,
    eta_det: f64,
) -> Result<f64> {
    Ok(joint_distribution(sigma, theta_a, theta_b, eta_det)?.error_deterministic())
}

/// Binary entropy in bits, with `h(0) = h(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidParameter {
            name: "probability",
            value: x,
            constraint: "[0, 1]",
        });
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

/// One-way secret fraction `1 − h(Q) − h((1 + √((S/2)² − 1))/2)`, clamped at
/// zero, with `S` clamped into `[2, 2√2]`.
pub fn secret_fraction(s: f64, qber: f64) -> Result<f64> {
    let s = s.clamp(2.0, CHSH_QUANTUM_BOUND);
    let eve_term = (1.0 + ((s / 2.0).powi(2) - 1.0).max(0.0).sqrt()) / 2.0;
    Ok((1.0 - binary_entropy(qber)? - binary_entropy(eve_term.min(1.0))?).max(0.0))
}

/// Everything the two analyses derive from one heralded state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateReport {
    pub herald_probability: f64,
    /// Probability that both parties get a conclusive outcome in a heralded
    /// round.
    pub mu_cc: f64,
    /// CHSH of the conclusive sub-ensemble; `None` when `mu_cc` is zero.
    pub s_cc: Option<f64>,
    /// CHSH after deterministic ⊥ → +1 assignment.
    pub s_det: f64,
    pub qber_conclusive: Option<f64>,
    pub qber_deterministic: f64,
    /// Secret bits per heralded round, conclusive analysis (includes the
    /// `mu_cc` sifting factor).
    pub secret_fraction_a: f64,
    /// Secret bits per heralded round, deterministic-assignment analysis.
    pub secret_fraction_b: f64,
    /// Secret bits per source pulse: `herald_probability` times the
    /// per-herald fraction.
    pub rate_a: f64,
    pub rate_b: f64,
}

/// Evaluates both analyses on a heralded state.
///
/// Analysis A sifts to both-conclusive rounds (rate carries the `mu_cc`
/// factor) and certifies with `S_cc`; analysis B keeps every round under the
/// deterministic assignment and certifies with `S_det`.
pub fn key_rates(
    sigma: &MixedState,
    herald_probability: f64,
    settings: &MeasurementSettings,
) -> Result<RateReport> {
    settings.validate()?;
    if !(herald_probability >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "herald_probability",
            value: herald_probability,
            constraint: "[0, ∞)",
        });
    }
    // Branches below the floor shift every table entry — and so S, the QBERs,
    // and the rates — by under 1e-9 relative, while the rotation passes scale
    // with the branches that remain.
    let sigma = sigma.canonicalized().pruned(1e-12);
    let mut pairs = chsh_angle_pairs(settings).to_vec();
    pairs.push((settings.alice[0], settings.bob_key));
    let tables = joint_distributions(&sigma, &pairs, settings.eta_det)?;
    let key = tables[4];

    let mu_cc = tables[0].mu_cc();
    let s_cc = tables[..4]
        .iter()
        .map(|t| t.conclusive_correlator())
        .collect::<Option<Vec<f64>>>()
        .map(|e| chsh_combination([e[0], e[1], e[2], e[3]]));
    let s_det = chsh_combination([
        tables[0].deterministic_correlator(),
        tables[1].deterministic_correlator(),
        tables[2].deterministic_correlator(),
        tables[3].deterministic_correlator(),
    ]);
    let qber_c = key.error_conclusive();
    let qber_d = key.error_deterministic();

    let secret_fraction_a = match (s_cc, qber_c) {
        (Some(s), Some(q)) => mu_cc * secret_fraction(s, q)?,
        _ => 0.0,
    };
    let secret_fraction_b = secret_fraction(s_det, qber_d)?;

    Ok(RateReport {
        herald_probability,
        mu_cc,
        s_cc,
        s_det,
        qber_conclusive: qber_c,
        qber_deterministic: qber_d,
        secret_fraction_a,
        secret_fraction_b,
        rate_a: herald_probability * secret_fraction_a,
        rate_b: herald_probability * secret_fraction_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{ModeRegistry, PureState};
    use crate::schemes::{
        closed_form_relay_state, phi_plus_fidelity, run_relay, PairSourceModel, SchemeConfig,
    };
    use crate::sources::PairDistribution;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn pair_registry() -> Arc<ModeRegistry> {
        ModeRegistry::new(["alice_h", "alice_v", "out_h", "out_v"], 4).unwrap()
    }

    fn phi_plus() -> MixedState {
        let amp = Complex64::new(1.0 / 2f64.sqrt(), 0.0);
        let ket = PureState::from_amplitudes(
            pair_registry(),
            [(vec![1, 0, 1, 0], amp), (vec![0, 1, 0, 1], amp)],
        )
        .unwrap();
        MixedState::from_pure(1.0, ket)
    }

    #[test]
    fn perfect_correlations_in_identical_bases() {
        let dist = joint_distribution(&phi_plus(), 0.3, 0.3, 1.0).unwrap();
        assert_abs_diff_eq!(
            dist.probability(Outcome::Plus, Outcome::Plus),
            0.5,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            dist.probability(Outcome::Minus, Outcome::Minus),
            0.5,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            dist.probability(Outcome::Plus, Outcome::Minus),
            0.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(dist.mu_cc(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn correlator_follows_the_angle_difference() {
        for (ta, tb) in [(0.0, 0.0), (0.2, -0.1), (FRAC_PI_8, -FRAC_PI_8), (0.7, 0.1)] {
            let e = joint_distribution(&phi_plus(), ta, tb, 1.0)
                .unwrap()
                .conclusive_correlator()
                .unwrap();
            assert_abs_diff_eq!(e, (2.0 * (ta - tb)).cos(), epsilon = 1e-12);
        }
    }

    #[test]
    fn standard_settings_reach_the_quantum_bound() {
        let (mu, s) = chsh_conclusive(&phi_plus(), &MeasurementSettings::standard(1.0)).unwrap();
        assert_abs_diff_eq!(mu, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.unwrap(), CHSH_QUANTUM_BOUND, epsilon = 1e-10);
    }

    #[test]
    fn two_photons_at_one_party_are_never_conclusive_together() {
        let ket = PureState::basis(pair_registry(), &[1, 1, 0, 0]).unwrap();
        let sigma = MixedState::from_pure(1.0, ket);
        let (mu, s) = chsh_conclusive(&sigma, &MeasurementSettings::standard(1.0)).unwrap();
        assert_eq!(mu, 0.0);
        assert!(s.is_none());
    }

    #[test]
    fn assignment_identity_holds_without_cross_conclusives() {
        let sigma = closed_form_relay_state(0.7, 0.25, 0.05, 4).unwrap();
        let settings = MeasurementSettings::standard(1.0);
        for (ta, tb) in [(0.0, FRAC_PI_8), (FRAC_PI_4, -FRAC_PI_8)] {
            let table = joint_distribution(&sigma, ta, tb, 1.0).unwrap();
            assert_abs_diff_eq!(table.cross_conclusive_probability(), 0.0, epsilon = 1e-12);
        }
        let (mu, s_cc) = chsh_conclusive(&sigma, &settings).unwrap();
        let s_det = chsh_deterministic(&sigma, &settings).unwrap();
        assert_abs_diff_eq!(
            s_det,
            mu * s_cc.unwrap() + 2.0 * (1.0 - mu),
            epsilon = 1e-10
        );
    }

    #[test]
    fn random_assignment_scales_the_conclusive_value() {
        let sigma = closed_form_relay_state(0.7, 0.25, 0.05, 4).unwrap();
        let settings = MeasurementSettings::standard(0.93);
        let (mu, s_cc) = chsh_conclusive(&sigma, &settings).unwrap();
        let s_rand = chsh_random_assignment(&sigma, &settings).unwrap();
        assert_abs_diff_eq!(s_rand, mu * s_cc.unwrap(), epsilon = 1e-12);
        // The deterministic assignment keeps more of the violation.
        assert!(chsh_deterministic(&sigma, &settings).unwrap() > s_rand);
    }

    #[test]
    fn lossy_detection_of_an_ideal_pair_follows_the_known_curve() {
        let sigma = phi_plus();
        let settings_at = MeasurementSettings::standard;
        for eta in [1.0, 0.95, 0.9, 0.8284, 0.8, 0.5] {
            let s = chsh_deterministic(&sigma, &settings_at(eta)).unwrap();
            let expected = CHSH_QUANTUM_BOUND * eta * eta + 2.0 * (1.0 - eta) * (1.0 - eta);
            assert_abs_diff_eq!(s, expected, epsilon = 1e-10);
        }
        // Bisect the S = 2 crossing and pin it against 2(√2 − 1).
        let (mut lo, mut hi) = (0.5, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let s = chsh_deterministic(&sigma, &settings_at(mid)).unwrap();
            if s > 2.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert_abs_diff_eq!(lo, detection_threshold(), epsilon = 1e-9);
        assert_abs_diff_eq!(lo, 0.8284, epsilon = 1e-3);
    }

    #[test]
    fn conclusive_probability_ignores_the_angles() {
        let dist = PairDistribution::new(vec![0.7, 0.25, 0.05]).unwrap();
        let mut cfg = SchemeConfig::relay(
            PairSourceModel::Fixed(dist.clone()),
            PairSourceModel::Fixed(dist),
        );
        cfg.n_max_pairs = 2;
        cfg.eta_det = 0.9;
        let sigma = run_relay(&cfg).unwrap().sigma_ab;
        let settings = MeasurementSettings::standard(0.85);
        let tables = [
            joint_distribution(&sigma, settings.alice[0], settings.bob[0], 0.85).unwrap(),
            joint_distribution(&sigma, settings.alice[0], settings.bob[1], 0.85).unwrap(),
            joint_distribution(&sigma, settings.alice[1], settings.bob[0], 0.85).unwrap(),
            joint_distribution(&sigma, settings.alice[1], settings.bob[1], 0.85).unwrap(),
        ];
        for t in &tables[1..] {
            assert_abs_diff_eq!(t.mu_cc(), tables[0].mu_cc(), epsilon = 1e-10);
        }
    }

    #[test]
    fn key_basis_errors() {
        // Aligned bases on the ideal pair: no errors under either
        // post-processing.
        assert_abs_diff_eq!(
            qber_conclusive(&phi_plus(), 0.0, 0.0, 1.0)
                .unwrap()
                .unwrap(),
            0.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            qber_deterministic(&phi_plus(), 0.0, 0.0, 1.0).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        // A dephased pair read out at 45° is a coin flip.
        let registry = pair_registry();
        let hh = PureState::basis(registry.clone(), &[1, 0, 1, 0]).unwrap();
        let vv = PureState::basis(registry, &[0, 1, 0, 1]).unwrap();
        let dephased =
            MixedState::from_branches(phi_plus().registry().clone(), vec![(0.5, hh), (0.5, vv)])
                .unwrap();
        let q = qber_conclusive(&dephased, FRAC_PI_4, FRAC_PI_4, 1.0)
            .unwrap()
            .unwrap();
        assert_abs_diff_eq!(q, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn entropy_values() {
        assert_abs_diff_eq!(binary_entropy(0.5).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(binary_entropy(0.11).unwrap(), 0.49992, epsilon = 1e-5);
        assert!(binary_entropy(1.2).is_err());
    }

    #[test]
    fn secret_fraction_endpoints() {
        assert_abs_diff_eq!(
            secret_fraction(CHSH_QUANTUM_BOUND, 0.0).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_eq!(secret_fraction(2.0, 0.0).unwrap(), 0.0);
        assert_eq!(secret_fraction(1.5, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn ideal_pair_yields_one_secret_bit_per_herald() {
        let report = key_rates(&phi_plus(), 0.25, &MeasurementSettings::standard(1.0)).unwrap();
        assert_abs_diff_eq!(report.secret_fraction_a, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(report.secret_fraction_b, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(report.rate_a, 0.25, epsilon = 1e-9);
        assert_abs_diff_eq!(report.rate_b, 0.25, epsilon = 1e-9);
    }

    #[test]
    fn small_pump_relay_limits() {
        let mut cfg = SchemeConfig::relay(
            PairSourceModel::Spdc { lambda: 1e-3 },
            PairSourceModel::Spdc { lambda: 1e-3 },
        );
        cfg.n_max_pairs = 4;
        let outcome = run_relay(&cfg).unwrap();
        let settings = MeasurementSettings::standard(1.0);
        let report = key_rates(&outcome.sigma_ab, outcome.herald_probability, &settings).unwrap();
        assert_abs_diff_eq!(report.mu_cc, 0.5, epsilon = 0.01);
        assert_abs_diff_eq!(report.s_det, 1.0 + SQRT_2, epsilon = 0.01);
        let fidelity = phi_plus_fidelity(&outcome.sigma_ab).unwrap();
        assert_abs_diff_eq!(fidelity, 0.5, epsilon = 0.01);
    }

    #[test]
    fn rates_do_not_improve_with_worse_detectors() {
        let mut cfg = SchemeConfig::relay(
            PairSourceModel::Spdc { lambda: 0.05 },
            PairSourceModel::Spdc { lambda: 0.05 },
        );
        cfg.n_max_pairs = 3;
        let mut last = (f64::INFINITY, f64::INFINITY);
        for eta in [1.0, 0.99, 0.97] {
            cfg.eta_det = eta;
            let outcome = crate::schemes::run_scheme(&cfg).unwrap();
            let report = key_rates(
                &outcome.sigma_ab,
                outcome.herald_probability,
                &MeasurementSettings::standard(eta),
            )
            .unwrap();
            assert!(report.rate_a <= last.0 + 1e-12);
            assert!(report.rate_b <= last.1 + 1e-12);
            last = (report.rate_a, report.rate_b);
        }
        assert!(last.0 > 0.0);
    }

    fn arbitrary_sigma() -> impl Strategy<Value = MixedState> {
        // Random low-photon-number mixtures on the standard four modes.
        let occupations: Vec<Vec<u8>> = vec![
            vec![0, 0, 0, 0],
            vec![1, 0, 0, 0],
            vec![0, 1, 0, 0],
            vec![0, 0, 1, 0],
            vec![0, 0, 0, 1],
            vec![1, 0, 1, 0],
            vec![0, 1, 0, 1],
            vec![1, 0, 0, 1],
            vec![0, 1, 1, 0],
            vec![1, 1, 0, 0],
            vec![0, 0, 1, 1],
            vec![2, 0, 1, 0],
            vec![1, 1, 1, 1],
        ];
        let component = (0usize..occupations.len(), -1.0f64..1.0, -1.0f64..1.0);
        let branch = (proptest::collection::vec(component, 1..4), 0.05f64..1.0);
        proptest::collection::vec(branch, 1..4).prop_filter_map(
            "state must have weight",
            move |branches| {
                let registry = pair_registry();
                let mut built = Vec::new();
                for (components, weight) in branches {
                    let entries: Vec<(Vec<u8>, Complex64)> = components
                        .into_iter()
                        .map(|(idx, re, im)| (occupations[idx].clone(), Complex64::new(re, im)))
                        .collect();
                    let ket = PureState::from_amplitudes(registry.clone(), entries).ok()?;
                    if ket.norm_sqr() > 1e-6 {
                        built.push((weight, ket));
                    }
                }
                if built.is_empty() {
                    return None;
                }
                MixedState::from_branches(registry, built).ok()
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn tables_normalize_and_chsh_respects_the_quantum_bound(
            sigma in arbitrary_sigma(),
            ta in -2.0f64..2.0,
            tb in -2.0f64..2.0,
            eta in 0.05f64..=1.0,
        ) {
            let table = joint_distribution(&sigma, ta, tb, eta).unwrap();
            prop_assert!((table.total() - 1.0).abs() < 1e-10);
            for i in 0..3 {
                for j in 0..3 {
                    let p = table.p[i][j];
                    prop_assert!((-1e-12..=1.0 + 1e-12).contains(&p));
                }
            }

            let mut settings = MeasurementSettings::standard(eta);
            settings.alice = [ta, tb];
            settings.bob = [ta - tb, ta + tb];
            let (mu, s_cc) = chsh_conclusive(&sigma, &settings).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&mu));
            if let Some(s) = s_cc {
                prop_assert!(s.abs() <= CHSH_QUANTUM_BOUND + 1e-9);
            }
            let s_det = chsh_deterministic(&sigma, &settings).unwrap();
            prop_assert!(s_det.abs() <= CHSH_QUANTUM_BOUND + 1e-9);
        }
    }
}
