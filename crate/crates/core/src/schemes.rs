//! The two heralding architectures for entanglement distribution over loss.
//!
//! Both schemes condition on a partial Bell-state measurement (BSM): the
//! incoming channel mode interferes with a local mode on a balanced splitter,
//! each output port is split by polarization, and four number-resolving
//! detectors watch the ports. The four two-photon patterns with orthogonal
//! polarizations herald the ψ± Bell states (same-port patterns herald ψ+,
//! cross-port patterns ψ−); a pattern-dependent waveplate rotation on the kept
//! output modes brings every accepted branch to a common frame, so the
//! reported conditional state is the plain sum over accepted patterns and its
//! total weight is the joint herald probability.
//!
//! *Amplifier* (teleportation-based, after Gisin, Pironio and Sangouard,
//! Phys. Rev. Lett. 105, 070501 (2010)): two single-photon sources are merged
//! on a polarizing splitter, tapped by a beamsplitter of transmittance `t`;
//! the reflected arm meets the channel in the BSM and the transmitted arm
//! becomes the output qubit.
//!
//! *Relay* (entanglement swapping): a second pair source sits at the receiver;
//! one side of it meets the channel in the BSM, the other side is the output.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{Mat2, MixedState, ModeRegistry, PureState};
use crate::heralding::{measure_patterns, DetectionPattern};
use crate::par;
use crate::sources::{
    heralded_single_source, ideal_single_source, pair_mixture_source, spdc_pair_distribution,
    PairDistribution,
};

/// Power transmission of a fiber span: `10^(−α·d/10)`.
pub fn channel_transmittance(distance_km: f64, alpha_db_per_km: f64) -> Result<f64> {
    if !(distance_km >= 0.0) || !distance_km.is_finite() {
        return Err(Error::InvalidParameter {
            name: "distance_km",
            value: distance_km,
            constraint: "[0, ∞)",
        });
    }
    if !(alpha_db_per_km >= 0.0) || !alpha_db_per_km.is_finite() {
        return Err(Error::InvalidParameter {
            name: "alpha_db_per_km",
            value: alpha_db_per_km,
            constraint: "[0, ∞)",
        });
    }
    Ok(10f64.powf(-alpha_db_per_km * distance_km / 10.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    Amplifier,
    Relay,
}

impl SchemeKind {
    pub fn name(&self) -> &'static str {
        match self {
            SchemeKind::Amplifier => "amplifier",
            SchemeKind::Relay => "relay",
        }
    }
}

/// Model of an entangled pair source.
#[derive(Debug, Clone, PartialEq)]
pub enum PairSourceModel {
    /// Down-conversion statistics at pump parameter λ, truncated at the
    /// configured pair cap.
    Spdc { lambda: f64 },
    /// Explicit pair-number distribution (used by the closed-form checks).
    Fixed(PairDistribution),
}

/// Model of the amplifier's single-photon inputs.
#[derive(Debug, Clone, PartialEq)]
pub enum SingleSourceModel {
    /// Deterministic one-photon emitters.
    Ideal,
    /// Heralded down-conversion singles at pump parameter λ; both emitters
    /// share one pump.
    SpdcHeralded { lambda: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    pub source_ab: PairSourceModel,
    /// Receiver-side pair source; relay only.
    pub source_bb: PairSourceModel,
    /// Single-photon inputs; amplifier only.
    pub singles: SingleSourceModel,
    /// Transmittance of the amplifier's tap beamsplitter; ignored by the relay.
    pub splitter_transmittance: f64,
    pub distance_km: f64,
    pub alpha_db_per_km: f64,
    /// Coupling transmission at every source output mode.
    pub eta_c: f64,
    /// Efficiency of every number-resolving detector.
    pub eta_det: f64,
    /// Idler-herald efficiency of the single-photon sources; defaults to
    /// `eta_det` when unset.
    pub eta_herald: Option<f64>,
    /// Pair-number truncation of every pair source; the per-mode photon cap is
    /// twice this.
    pub n_max_pairs: usize,
}

pub const DEFAULT_ALPHA_DB_PER_KM: f64 = 0.2;
pub const DEFAULT_N_MAX_PAIRS: usize = 4;

impl SchemeConfig {
    pub fn amplifier(source_ab: PairSourceModel, singles: SingleSourceModel, t: f64) -> Self {
        Self {
            kind: SchemeKind::Amplifier,
            source_ab,
            source_bb: PairSourceModel::Fixed(PairDistribution::vacuum()),
            singles,
            splitter_transmittance: t,
            distance_km: 0.0,
            alpha_db_per_km: DEFAULT_ALPHA_DB_PER_KM,
            eta_c: 1.0,
            eta_det: 1.0,
            eta_herald: None,
            n_max_pairs: DEFAULT_N_MAX_PAIRS,
        }
    }

    pub fn relay(source_ab: PairSourceModel, source_bb: PairSourceModel) -> Self {
        Self {
            kind: SchemeKind::Relay,
            source_ab,
            source_bb,
            singles: SingleSourceModel::Ideal,
            splitter_transmittance: 0.5,
            distance_km: 0.0,
            alpha_db_per_km: DEFAULT_ALPHA_DB_PER_KM,
            eta_c: 1.0,
            eta_det: 1.0,
            eta_herald: None,
            n_max_pairs: DEFAULT_N_MAX_PAIRS,
        }
    }

    pub fn eta_herald(&self) -> f64 {
        self.eta_herald.unwrap_or(self.eta_det)
    }

    pub fn photon_cap(&self) -> u32 {
        (2 * self.n_max_pairs) as u32
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_max_pairs == 0 || 2 * self.n_max_pairs > crate::fock::MAX_PHOTONS {
            return Err(Error::InvalidParameter {
                name: "n_max_pairs",
                value: self.n_max_pairs as f64,
                constraint: "1..=MAX_PHOTONS/2",
            });
        }
        for (name, value) in [("eta_c", self.eta_c), ("eta_det", self.eta_det)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    constraint: "[0, 1]",
                });
            }
        }
        if let Some(eta) = self.eta_herald {
            if !(0.0..=1.0).contains(&eta) {
                return Err(Error::InvalidParameter {
                    name: "eta_herald",
                    value: eta,
                    constraint: "[0, 1]",
                });
            }
        }
        channel_transmittance(self.distance_km, self.alpha_db_per_km)?;
        if self.kind == SchemeKind::Amplifier {
            let t = self.splitter_transmittance;
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::InvalidParameter {
                    name: "splitter_transmittance",
                    value: t,
                    constraint: "(0, 1)",
                });
            }
        }
        let check_pair = |model: &PairSourceModel| -> Result<()> {
            match model {
                PairSourceModel::Spdc { lambda } => {
                    if !(lambda > &0.0) || !lambda.is_finite() {
                        return Err(Error::InvalidParameter {
                            name: "lambda",
                            value: *lambda,
                            constraint: "(0, ∞)",
                        });
                    }
                }
                PairSourceModel::Fixed(dist) => {
                    if dist.n_max() > self.n_max_pairs {
                        return Err(Error::InvalidConfig(format!(
                            "fixed pair distribution extends to {} pairs, cap is {}",
                            dist.n_max(),
                            self.n_max_pairs
                        )));
                    }
                }
            }
            Ok(())
        };
        check_pair(&self.source_ab)?;
        if self.kind == SchemeKind::Relay {
            check_pair(&self.source_bb)?;
        }
        if self.kind == SchemeKind::Amplifier {
            if let SingleSourceModel::SpdcHeralded { lambda } = self.singles {
                if !(lambda > 0.0) || !lambda.is_finite() {
                    return Err(Error::InvalidParameter {
                        name: "lambda_single",
                        value: lambda,
                        constraint: "(0, ∞)",
                    });
                }
            }
        }
        Ok(())
    }
}

/// Heralded state and its probability.
///
/// `sigma_ab` lives on `(alice_h, alice_v, out_h, out_v)` and is subnormalized:
/// `herald_probability == total_weight(sigma_ab)`.
#[derive(Debug, Clone)]
pub struct ConditionalOutcome {
    pub sigma_ab: MixedState,
    pub herald_probability: f64,
}

/// The four accepted detector patterns, named by where the two photons land.
/// `Channel` is the port that continues the channel direction after the
/// balanced splitter; `Local` is the port toward the local arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeraldPattern {
    BothChannelPort,
    BothLocalPort,
    HChannelVLocal,
    VChannelHLocal,
}

impl HeraldPattern {
    pub const ALL: [HeraldPattern; 4] = [
        HeraldPattern::BothChannelPort,
        HeraldPattern::BothLocalPort,
        HeraldPattern::HChannelVLocal,
        HeraldPattern::VChannelHLocal,
    ];

    /// Required detected counts on `(channel_h, channel_v, local_h, local_v)`.
    pub fn counts(&self) -> [u32; 4] {
        match self {
            HeraldPattern::BothChannelPort => [1, 1, 0, 0],
            HeraldPattern::BothLocalPort => [0, 0, 1, 1],
            HeraldPattern::HChannelVLocal => [1, 0, 0, 1],
            HeraldPattern::VChannelHLocal => [0, 1, 1, 0],
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            HeraldPattern::BothChannelPort => "both_channel_port",
            HeraldPattern::BothLocalPort => "both_local_port",
            HeraldPattern::HChannelVLocal => "h_channel_v_local",
            HeraldPattern::VChannelHLocal => "v_channel_h_local",
        }
    }
}

/// Frame corrections for the amplifier: the teleportation resource is
/// cross-polarized, so ψ+ patterns already yield the Φ+-correlated output and
/// ψ− patterns need a π phase between the output polarizations.
fn amplifier_corrections() -> [Mat2; 4] {
    [
        Mat2::identity(),
        Mat2::identity(),
        Mat2::pauli_z(),
        Mat2::pauli_z(),
    ]
}

/// Frame corrections for the relay: swapping a co-polarized pair heralds the
/// cross-correlated ψ states, so every pattern needs the polarization swap and
/// the cross-port patterns need the extra π phase.
fn relay_corrections() -> [Mat2; 4] {
    let zx = Mat2::pauli_z().mul(&Mat2::pauli_x());
    [Mat2::pauli_x(), Mat2::pauli_x(), zx, zx]
}

/// Shared BSM conditioning: balanced splitter between the channel and local
/// mode pairs, the four accepted patterns measured at `eta_det`, and the
/// per-pattern correction applied to the output modes. Branches are processed
/// in fixed-size chunks (possibly in parallel) and merged in chunk order, so
/// results do not depend on thread count.
///
/// `eta_det` is the efficiency seen at the detectors; callers fold any loss
/// acting uniformly on all four interfering modes into it, since uniform loss
/// commutes with the splitters.
fn bsm_pattern_outcomes(
    joint: &MixedState,
    channel: [&str; 2],
    local: [&str; 2],
    out: [&str; 2],
    eta_det: f64,
    corrections: &[Mat2; 4],
) -> Result<Vec<(HeraldPattern, MixedState)>> {
    let registry = joint.registry();
    let ch = [
        registry.index_of(channel[0])?,
        registry.index_of(channel[1])?,
    ];
    let lo = [registry.index_of(local[0])?, registry.index_of(local[1])?];

    let patterns: Vec<DetectionPattern> = HeraldPattern::ALL
        .iter()
        .map(|p| {
            let counts = p.counts();
            DetectionPattern::new([
                (channel[0], counts[0]),
                (channel[1], counts[1]),
                (local[0], counts[2]),
                (local[1], counts[3]),
            ])
        })
        .collect::<Result<_>>()?;

    const CHUNK: usize = 48;
    let branches = joint.branches();
    let n_chunks = branches.len().div_ceil(CHUNK);

    let partials: Vec<Result<Vec<MixedState>>> = par::map_range(n_chunks, |ci| {
        let chunk = &branches[ci * CHUNK..((ci + 1) * CHUNK).min(branches.len())];
        let chunk_state = MixedState::from_branches(registry.clone(), chunk.to_vec())?;
        let mixed = chunk_state
            .apply_two_mode_unitary(ch[0], lo[0], &Mat2::balanced_splitter())?
            .apply_two_mode_unitary(ch[1], lo[1], &Mat2::balanced_splitter())?;
        let conditioned = measure_patterns(&mixed, &patterns, eta_det)?;
        let mut per_pattern = Vec::with_capacity(4);
        for (state, correction) in conditioned.into_iter().zip(corrections.iter()) {
            per_pattern.push(state.apply_two_mode_unitary_by_label(out[0], out[1], correction)?);
        }
        Ok(per_pattern)
    });

    let mut outcomes: Option<Vec<MixedState>> = None;
    for partial in partials {
        let partial = partial?;
        match &mut outcomes {
            None => outcomes = Some(partial),
            Some(acc) => {
                for (dst, src) in acc.iter_mut().zip(partial) {
                    dst.absorb(src)?;
                }
            }
        }
    }
    let outcomes = outcomes.unwrap_or_else(|| {
        let (sub, _) = registry.without(&[ch[0], ch[1], lo[0], lo[1]]);
        vec![MixedState::zero(sub); 4]
    });
    Ok(HeraldPattern::ALL.iter().copied().zip(outcomes).collect())
}

fn build_pair_source(
    model: &PairSourceModel,
    labels: [&str; 4],
    n_max: usize,
    cap: u32,
) -> Result<MixedState> {
    let dist = match model {
        PairSourceModel::Spdc { lambda } => spdc_pair_distribution(*lambda, n_max)?,
        PairSourceModel::Fixed(dist) => dist.clone(),
    };
    pair_mixture_source(&dist, labels, cap)
}

fn build_single(
    model: &SingleSourceModel,
    label: &str,
    eta_herald: f64,
    n_max: usize,
    cap: u32,
) -> Result<MixedState> {
    match model {
        SingleSourceModel::Ideal => ideal_single_source(label, cap),
        SingleSourceModel::SpdcHeralded { lambda } => {
            heralded_single_source(*lambda, eta_herald, n_max, label, cap)
        }
    }
}

/// Spectator and output couplers, deferred past heralding: η_c on all four
/// remaining modes. Merging proportional branches — and dropping those below
/// 1e-12 of the herald weight, which moves the conditional state by under
/// 1e-11 relative — keeps the four-fold loss splitting from multiplying the
/// branch count.
fn apply_deferred_couplers(sigma: MixedState, eta_c: f64) -> Result<MixedState> {
    sigma
        .canonicalized()
        .pruned(1e-12)
        .apply_loss_by_label("alice_h", eta_c)?
        .apply_loss_by_label("alice_v", eta_c)?
        .apply_loss_by_label("out_h", eta_c)?
        .apply_loss_by_label("out_v", eta_c)
}

/// Per-pattern conditional states of the amplifier, after correction and with
/// all source losses included. Summing them gives [`run_amplifier`]'s output.
pub fn amplifier_pattern_outcomes(
    config: &SchemeConfig,
) -> Result<Vec<(HeraldPattern, MixedState)>> {
    amplifier_outcomes_with(config, &amplifier_corrections())?
        .into_iter()
        .map(|(p, sigma)| Ok((p, apply_deferred_couplers(sigma, config.eta_c)?)))
        .collect()
}

fn amplifier_outcomes_with(
    config: &SchemeConfig,
    corrections: &[Mat2; 4],
) -> Result<Vec<(HeraldPattern, MixedState)>> {
    config.validate()?;
    if config.kind != SchemeKind::Amplifier {
        return Err(Error::InvalidConfig("config is not an amplifier".into()));
    }
    let cap = config.photon_cap();
    let eta_t = channel_transmittance(config.distance_km, config.alpha_db_per_km)?;

    let ab = build_pair_source(
        &config.source_ab,
        ["alice_h", "alice_v", "chan_h", "chan_v"],
        config.n_max_pairs,
        cap,
    )?;
    // Every mode carries a coupler η_c somewhere upstream of detection or
    // output. The couplers on the interfering modes act uniformly, so they
    // commute through the tap and the BSM splitters into the detectors; the
    // couplers on the spectator (Alice) and output modes commute past the
    // measurement and are applied after heralding, where the state is small.
    // Only the fiber itself must stay in front of the interference.
    let ab = ab
        .apply_loss_by_label("chan_h", eta_t)?
        .apply_loss_by_label("chan_v", eta_t)?;

    let mut singles = Vec::with_capacity(2);
    for label in ["out_h", "out_v"] {
        singles.push(build_single(
            &config.singles,
            label,
            config.eta_herald(),
            config.n_max_pairs,
            cap,
        )?);
    }
    let arm = MixedState::vacuum(ModeRegistry::new(["arm_h", "arm_v"], cap)?);

    let joint = ab.tensor(&singles[0])?.tensor(&singles[1])?.tensor(&arm)?;

    let t = config.splitter_transmittance;
    let tap = Mat2::beam_splitter(t)?;
    let joint = joint
        .apply_two_mode_unitary_by_label("out_h", "arm_h", &tap)?
        .apply_two_mode_unitary_by_label("out_v", "arm_v", &tap)?;

    bsm_pattern_outcomes(
        &joint,
        ["chan_h", "chan_v"],
        ["arm_h", "arm_v"],
        ["out_h", "out_v"],
        config.eta_det * config.eta_c,
        corrections,
    )
}

/// Per-pattern conditional states of the relay; see
/// [`amplifier_pattern_outcomes`].
pub fn relay_pattern_outcomes(config: &SchemeConfig) -> Result<Vec<(HeraldPattern, MixedState)>> {
    relay_outcomes_with(config, &relay_corrections())?
        .into_iter()
        .map(|(p, sigma)| Ok((p, apply_deferred_couplers(sigma, config.eta_c)?)))
        .collect()
}

fn relay_outcomes_with(
    config: &SchemeConfig,
    corrections: &[Mat2; 4],
) -> Result<Vec<(HeraldPattern, MixedState)>> {
    config.validate()?;
    if config.kind != SchemeKind::Relay {
        return Err(Error::InvalidConfig("config is not a relay".into()));
    }
    let cap = config.photon_cap();
    let eta_t = channel_transmittance(config.distance_km, config.alpha_db_per_km)?;

    let ab = build_pair_source(
        &config.source_ab,
        ["alice_h", "alice_v", "chan_h", "chan_v"],
        config.n_max_pairs,
        cap,
    )?;
    // As in the amplifier: the couplers on the two interfering mode pairs are
    // uniform, commute through the BSM splitters, and merge with the detector
    // efficiency; spectator and output couplers act after heralding. The
    // fiber transmission alone stays in front of the interference.
    let ab = ab
        .apply_loss_by_label("chan_h", eta_t)?
        .apply_loss_by_label("chan_v", eta_t)?;

    let bb = build_pair_source(
        &config.source_bb,
        ["bsm_h", "bsm_v", "out_h", "out_v"],
        config.n_max_pairs,
        cap,
    )?;

    let joint = ab.tensor(&bb)?;

    bsm_pattern_outcomes(
        &joint,
        ["chan_h", "chan_v"],
        ["bsm_h", "bsm_v"],
        ["out_h", "out_v"],
        config.eta_det * config.eta_c,
        corrections,
    )
}

/// Sums the patterns first and defers the output couplers to the merged
/// state; the couplers act branch by branch, so this equals coupling each
/// pattern separately at a fraction of the branch count.
fn combine(outcomes: Vec<(HeraldPattern, MixedState)>, eta_c: f64) -> Result<ConditionalOutcome> {
    let mut iter = outcomes.into_iter();
    let (_, mut sigma_ab) = iter.next().expect("four patterns");
    for (_, s) in iter {
        sigma_ab.absorb(s)?;
    }
    let sigma_ab = apply_deferred_couplers(sigma_ab, eta_c)?;
    let herald_probability = sigma_ab.total_weight();
    Ok(ConditionalOutcome {
        sigma_ab,
        herald_probability,
    })
}

/// Runs the amplifier and returns the heralded state summed over the four
/// accepted patterns.
pub fn run_amplifier(config: &SchemeConfig) -> Result<ConditionalOutcome> {
    combine(
        amplifier_outcomes_with(config, &amplifier_corrections())?,
        config.eta_c,
    )
}

/// Runs the relay and returns the heralded state summed over the four
/// accepted patterns.
pub fn run_relay(config: &SchemeConfig) -> Result<ConditionalOutcome> {
    combine(
        relay_outcomes_with(config, &relay_corrections())?,
        config.eta_c,
    )
}

pub fn run_scheme(config: &SchemeConfig) -> Result<ConditionalOutcome> {
    match config.kind {
        SchemeKind::Amplifier => run_amplifier(config),
        SchemeKind::Relay => run_relay(config),
    }
}

fn sigma_registry(cap: u32) -> Result<std::sync::Arc<ModeRegistry>> {
    ModeRegistry::new(["alice_h", "alice_v", "out_h", "out_v"], cap)
}

fn phi_plus_ket(registry: std::sync::Arc<ModeRegistry>) -> Result<PureState> {
    let amp = Complex64::new(1.0 / 2f64.sqrt(), 0.0);
    PureState::from_amplitudes(registry, [(vec![1, 0, 1, 0], amp), (vec![0, 1, 0, 1], amp)])
}

/// Overlap of the normalized state with the maximally correlated two-photon
/// ket `(|1010⟩ + |0101⟩)/√2` on `(alice_h, alice_v, out_h, out_v)`.
pub fn phi_plus_fidelity(state: &MixedState) -> Result<f64> {
    let total = state.total_weight();
    if total <= 0.0 {
        return Err(Error::ZeroWeight);
    }
    let phi = phi_plus_ket(state.registry().clone())?;
    let mut overlap = 0.0;
    for (w, ket) in state.branches() {
        overlap += w * ket.inner_product(&phi)?.norm_sqr();
    }
    Ok(overlap / total)
}

/// Closed-form conditional state of the amplifier for a single accepted
/// pattern, with a two-outcome pair source (vacuum / one pair at probability
/// `p`), ideal singles and ideal devices: vacuum at `(1−p)(1−t)²/4`, a stray
/// photon on Alice's side at `p(1−η_t)(1−t)²/8` per polarization, and the
/// maximally correlated pair at `p·η_t·t(1−t)/4`.
pub fn closed_form_amplifier_state(p: f64, t: f64, eta_t: f64, cap: u32) -> Result<MixedState> {
    let registry = sigma_registry(cap)?;
    let mut branches = Vec::new();
    let vac = (1.0 - p) * (1.0 - t).powi(2) / 4.0;
    if vac > 0.0 {
        branches.push((vac, PureState::vacuum(registry.clone())));
    }
    let stray = p * (1.0 - eta_t) * (1.0 - t).powi(2) / 8.0;
    if stray > 0.0 {
        branches.push((stray, PureState::basis(registry.clone(), &[1, 0, 0, 0])?));
        branches.push((stray, PureState::basis(registry.clone(), &[0, 1, 0, 0])?));
    }
    let pair = p * eta_t * t * (1.0 - t) / 4.0;
    if pair > 0.0 {
        branches.push((pair, phi_plus_ket(registry.clone())?));
    }
    MixedState::from_branches(registry, branches)
}

/// Closed-form herald probability of the amplifier over all four patterns:
/// `(1−t)·(1−t − p·η_t·(1−2t))`.
pub fn closed_form_amplifier_success(p: f64, t: f64, eta_t: f64) -> f64 {
    (1.0 - t) * ((1.0 - t) - p * eta_t * (1.0 - 2.0 * t))
}

/// Closed-form heralded state of the relay with two three-outcome pair sources
/// `(p0, p1, p2)`, a lossless channel and ideal devices, summed over the four
/// patterns: both photons at one party at `p0·p2/3` per side, the maximally
/// correlated pair at `p1²/2`.
pub fn closed_form_relay_state(p0: f64, p1: f64, p2: f64, cap: u32) -> Result<MixedState> {
    let registry = sigma_registry(cap)?;
    let mut branches = Vec::new();
    let stray = p0 * p2 / 3.0;
    if stray > 0.0 {
        branches.push((stray, PureState::basis(registry.clone(), &[1, 1, 0, 0])?));
        branches.push((stray, PureState::basis(registry.clone(), &[0, 0, 1, 1])?));
    }
    let pair = p1 * p1 / 2.0;
    if pair > 0.0 {
        branches.push((pair, phi_plus_ket(registry.clone())?));
    }
    MixedState::from_branches(registry, branches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ideal_amplifier(p: f64, t: f64, distance_km: f64) -> SchemeConfig {
        let mut cfg = SchemeConfig::amplifier(
            PairSourceModel::Fixed(PairDistribution::single_pair(p).unwrap()),
            SingleSourceModel::Ideal,
            t,
        );
        cfg.distance_km = distance_km;
        cfg.n_max_pairs = 1;
        cfg
    }

    /// Distances whose transmittances hit 1, 0.1 and 0.01 at 0.2 dB/km.
    const GRID_DISTANCES: [f64; 3] = [0.0, 50.0, 100.0];

    #[test]
    fn amplifier_matches_closed_form_per_pattern() {
        for p in [0.1, 0.5, 1.0] {
            for t in [0.5, 0.9, 0.99] {
                for d in GRID_DISTANCES {
                    let cfg = ideal_amplifier(p, t, d);
                    let eta_t = channel_transmittance(d, cfg.alpha_db_per_km).unwrap();
                    let oracle =
                        closed_form_amplifier_state(p, t, eta_t, cfg.photon_cap()).unwrap();
                    for (pattern, sigma) in amplifier_pattern_outcomes(&cfg).unwrap() {
                        let delta = sigma.max_coefficient_delta(&oracle).unwrap();
                        assert!(
                            delta <= 1e-10,
                            "pattern {} deviates by {delta:.3e} at p={p}, t={t}, η_t={eta_t}",
                            pattern.label(),
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn amplifier_herald_matches_closed_form() {
        for p in [0.1, 0.5, 1.0] {
            for t in [0.5, 0.9, 0.99] {
                for d in GRID_DISTANCES {
                    let cfg = ideal_amplifier(p, t, d);
                    let eta_t = channel_transmittance(d, cfg.alpha_db_per_km).unwrap();
                    let outcome = run_amplifier(&cfg).unwrap();
                    let expected = closed_form_amplifier_success(p, t, eta_t);
                    assert_abs_diff_eq!(outcome.herald_probability, expected, epsilon = 1e-10);
                    assert_abs_diff_eq!(
                        outcome.sigma_ab.total_weight(),
                        outcome.herald_probability,
                        epsilon = 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn amplifier_herald_frozen_example() {
        // p = 0.5, η_t = 0.1 (50 km at 0.2 dB/km), t = 0.9.
        let cfg = ideal_amplifier(0.5, 0.9, 50.0);
        let outcome = run_amplifier(&cfg).unwrap();
        assert_abs_diff_eq!(outcome.herald_probability, 0.014, epsilon = 1e-10);
    }

    #[test]
    fn relay_matches_closed_form() {
        let simplex = [
            (1.0, 0.0, 0.0),
            (0.75, 0.25, 0.0),
            (0.5, 0.5, 0.0),
            (0.5, 0.25, 0.25),
            (0.7, 0.25, 0.05),
            (0.25, 0.5, 0.25),
            (0.0, 1.0, 0.0),
            (0.0, 0.5, 0.5),
            (0.2, 0.3, 0.5),
            (0.0, 0.0, 1.0),
        ];
        for (p0, p1, p2) in simplex {
            let dist = PairDistribution::new(vec![p0, p1, p2]).unwrap();
            let mut cfg = SchemeConfig::relay(
                PairSourceModel::Fixed(dist.clone()),
                PairSourceModel::Fixed(dist),
            );
            cfg.n_max_pairs = 2;
            let outcome = run_relay(&cfg).unwrap();
            let oracle = closed_form_relay_state(p0, p1, p2, cfg.photon_cap()).unwrap();
            let delta = outcome.sigma_ab.max_coefficient_delta(&oracle).unwrap();
            assert!(
                delta <= 1e-10,
                "relay deviates by {delta:.3e} at ({p0}, {p1}, {p2})"
            );
            assert_abs_diff_eq!(
                outcome.herald_probability,
                oracle.total_weight(),
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn relay_herald_frozen_example() {
        let dist = PairDistribution::new(vec![0.7, 0.25, 0.05]).unwrap();
        let mut cfg = SchemeConfig::relay(
            PairSourceModel::Fixed(dist.clone()),
            PairSourceModel::Fixed(dist),
        );
        cfg.n_max_pairs = 2;
        let outcome = run_relay(&cfg).unwrap();
        let expected = 2.0 * (0.7 * 0.05) / 3.0 + 0.25f64.powi(2) / 2.0;
        assert_abs_diff_eq!(outcome.herald_probability, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(outcome.herald_probability, 0.0545833, epsilon = 5e-8);
        let fidelity = phi_plus_fidelity(&outcome.sigma_ab).unwrap();
        assert_abs_diff_eq!(
            fidelity,
            (0.25f64.powi(2) / 2.0) / expected,
            epsilon = 1e-10
        );
    }

    #[test]
    fn relay_with_vacuum_source_has_no_entangled_branch() {
        let dist = PairDistribution::new(vec![0.7, 0.25, 0.05]).unwrap();
        let mut cfg = SchemeConfig::relay(
            PairSourceModel::Fixed(dist),
            PairSourceModel::Fixed(PairDistribution::vacuum()),
        );
        cfg.n_max_pairs = 2;
        let outcome = run_relay(&cfg).unwrap();
        let sigma = outcome.sigma_ab.canonicalized();
        // Only the both-photons-at-Alice branch survives.
        assert_eq!(sigma.branch_count(), 1);
        let phi = phi_plus_ket(sigma.registry().clone()).unwrap();
        for (_, ket) in sigma.branches() {
            assert_abs_diff_eq!(
                ket.inner_product(&phi).unwrap().norm(),
                0.0,
                epsilon = 1e-12
            );
        }
        assert_abs_diff_eq!(outcome.herald_probability, 0.05 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn wrong_correction_breaks_the_closed_form() {
        // Dropping the π phase on the cross-port patterns must be caught by the
        // closed-form comparison.
        let cfg = ideal_amplifier(0.5, 0.9, 0.0);
        let eta_t = 1.0;
        let oracle = closed_form_amplifier_state(0.5, 0.9, eta_t, cfg.photon_cap()).unwrap();
        let wrong = [
            Mat2::identity(),
            Mat2::identity(),
            Mat2::identity(),
            Mat2::identity(),
        ];
        let outcomes = amplifier_outcomes_with(&cfg, &wrong).unwrap();
        let mut worst: f64 = 0.0;
        for (_, sigma) in outcomes {
            worst = worst.max(sigma.max_coefficient_delta(&oracle).unwrap());
        }
        assert!(
            worst > 1e-3,
            "sign error went undetected (max delta {worst:.3e})"
        );
    }

    #[test]
    fn herald_probability_monotone_in_distance_and_detector() {
        let mut cfg = SchemeConfig::relay(
            PairSourceModel::Spdc { lambda: 0.1 },
            PairSourceModel::Spdc { lambda: 0.1 },
        );
        cfg.eta_c = 0.95;
        cfg.eta_det = 0.9;
        let mut last = f64::INFINITY;
        for d in [0.0, 20.0, 60.0] {
            cfg.distance_km = d;
            let h = run_relay(&cfg).unwrap().herald_probability;
            assert!(h <= last + 1e-15);
            assert!(h > 0.0);
            last = h;
        }

        let mut amp = SchemeConfig::amplifier(
            PairSourceModel::Spdc { lambda: 0.1 },
            SingleSourceModel::SpdcHeralded { lambda: 0.1 },
            0.8,
        );
        amp.eta_c = 0.95;
        amp.distance_km = 25.0;
        let mut last = 0.0;
        for eta in [0.5, 0.8, 0.95] {
            amp.eta_det = eta;
            let h = run_amplifier(&amp).unwrap().herald_probability;
            assert!(h >= last);
            last = h;
        }
        // Distance monotonicity holds in the amplifier's operating regime
        // (t > 1/2, where the channel photon dominates the heralds).
        let mut last = f64::INFINITY;
        amp.eta_det = 0.9;
        for d in [0.0, 20.0, 60.0] {
            amp.distance_km = d;
            let h = run_amplifier(&amp).unwrap().herald_probability;
            assert!(h <= last + 1e-15);
            last = h;
        }
    }

    #[test]
    fn transmittance_law() {
        assert_abs_diff_eq!(channel_transmittance(0.0, 0.2).unwrap(), 1.0, epsilon = 0.0);
        assert_abs_diff_eq!(
            channel_transmittance(50.0, 0.2).unwrap(),
            0.1,
            epsilon = 1e-15
        );
        assert!(channel_transmittance(-1.0, 0.2).is_err());
    }

    #[test]
    fn config_validation_rejects_bad_parameters() {
        let mut cfg = SchemeConfig::amplifier(
            PairSourceModel::Spdc { lambda: 0.1 },
            SingleSourceModel::Ideal,
            1.0,
        );
        assert!(cfg.validate().is_err()); // t = 1 taps nothing
        cfg.splitter_transmittance = 0.9;
        assert!(cfg.validate().is_ok());
        cfg.eta_det = 1.5;
        assert!(cfg.validate().is_err());
    }
}
