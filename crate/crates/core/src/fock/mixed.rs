use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{Mat2, ModeRegistry, OccupationVector, PureState, AMPLITUDE_PRUNE, BRANCH_PRUNE};

/// Weighted mixture of pure branches over one registry.
///
/// Branch kets are generally unnormalized; the probability carried by a branch
/// is `weight * norm²`. An empty branch list is the zero state.
#[derive(Debug, Clone)]
pub struct MixedState {
    registry: Arc<ModeRegistry>,
    branches: Vec<(f64, PureState)>,
}

impl MixedState {
    pub fn zero(registry: Arc<ModeRegistry>) -> Self {
        Self {
            registry,
            branches: Vec::new(),
        }
    }

    pub fn from_pure(weight: f64, state: PureState) -> Self {
        let registry = state.registry().clone();
        Self {
            registry,
            branches: vec![(weight, state)],
        }
    }

    pub fn vacuum(registry: Arc<ModeRegistry>) -> Self {
        Self::from_pure(1.0, PureState::vacuum(registry))
    }

    pub fn from_branches(
        registry: Arc<ModeRegistry>,
        branches: Vec<(f64, PureState)>,
    ) -> Result<Self> {
        for (w, b) in &branches {
            if *w < 0.0 || !w.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "branch weight",
                    value: *w,
                    constraint: "finite and non-negative",
                });
            }
            if b.registry() != &registry {
                return Err(Error::RegistryMismatch);
            }
        }
        let mut st = Self { registry, branches };
        st.prune();
        Ok(st)
    }

    pub fn registry(&self) -> &Arc<ModeRegistry> {
        &self.registry
    }

    pub fn branches(&self) -> &[(f64, PureState)] {
        &self.branches
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    /// Σ weight · norm² over branches — the total probability carried.
    pub fn total_weight(&self) -> f64 {
        self.branches.iter().map(|(w, b)| w * b.norm_sqr()).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for (w, _) in &mut out.branches {
            *w *= factor;
        }
        out.prune();
        out
    }

    pub(crate) fn push_branch(&mut self, weight: f64, state: PureState) {
        debug_assert!(state.registry() == &self.registry);
        if weight * state.norm_sqr() > BRANCH_PRUNE {
            self.branches.push((weight, state));
        }
    }

    /// Adds every branch of `other` (same registry) to this mixture.
    pub fn absorb(&mut self, other: MixedState) -> Result<()> {
        if other.registry != self.registry {
            return Err(Error::RegistryMismatch);
        }
        self.branches.extend(other.branches);
        Ok(())
    }

    fn prune(&mut self) {
        self.branches
            .retain(|(w, b)| w * b.norm_sqr() > BRANCH_PRUNE);
    }

    /// ρ ⊗ σ on the concatenated registry; weights multiply.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        let registry = self.registry.concat(&other.registry)?;
        let mut branches = Vec::with_capacity(self.branches.len() * other.branches.len());
        for (wa, ba) in &self.branches {
            for (wb, bb) in &other.branches {
                let w = wa * wb;
                let ket = ba.tensor(bb)?;
                if w * ket.norm_sqr() > BRANCH_PRUNE {
                    branches.push((w, ket));
                }
            }
        }
        Ok(Self { registry, branches })
    }

    pub fn apply_two_mode_unitary(&self, i: usize, j: usize, u: &Mat2) -> Result<Self> {
        if i == j || i >= self.registry.len() || j >= self.registry.len() {
            return Err(Error::InvalidParameter {
                name: "mode index",
                value: j as f64,
                constraint: "two distinct registry modes",
            });
        }
        u.ensure_unitary()?;
        // Validated once; every branch shares the entry-power tables.
        let tables = crate::fock::pure::TwoModeTables::new(u, self.registry.photon_cap());
        let branches = self
            .branches
            .iter()
            .map(|(w, b)| Ok((*w, b.apply_two_mode_tables(i, j, &tables)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            registry: self.registry.clone(),
            branches,
        })
    }

    pub fn apply_two_mode_unitary_by_label(&self, i: &str, j: &str, u: &Mat2) -> Result<Self> {
        self.apply_two_mode_unitary(self.registry.index_of(i)?, self.registry.index_of(j)?, u)
    }

    /// Photon loss with transmission `eta` on one mode. Each branch splits into
    /// sub-branches by the number of photons lost; total weight is preserved.
    pub fn apply_loss(&self, mode: usize, eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::InvalidParameter {
                name: "eta",
                value: eta,
                constraint: "[0, 1]",
            });
        }
        let mut branches = Vec::new();
        for (w, b) in &self.branches {
            let max_n = b.max_count(mode);
            for lost in 0..=max_n {
                let sub = b.loss_branch(mode, eta, lost);
                if w * sub.norm_sqr() > BRANCH_PRUNE {
                    branches.push((*w, sub));
                }
            }
        }
        Ok(Self {
            registry: self.registry.clone(),
            branches,
        })
    }

    pub fn apply_loss_by_label(&self, mode: &str, eta: f64) -> Result<Self> {
        self.apply_loss(self.registry.index_of(mode)?, eta)
    }

    /// Drops branches carrying at most `relative_floor` of the total weight.
    /// Any expectation value computed from the result moves by less than the
    /// discarded fraction, `branch_count * relative_floor` at worst.
    pub fn pruned(mut self, relative_floor: f64) -> Self {
        let total = self.total_weight();
        if total <= 0.0 {
            return self;
        }
        let floor = relative_floor * total;
        self.branches.retain(|(w, b)| w * b.norm_sqr() > floor);
        self
    }

    /// Canonical form for comparison and display: branch kets normalized (norm²
    /// folded into the weight), global phase fixed so the first nonzero
    /// amplitude in occupation order is real positive, proportional branches
    /// merged, branches sorted.
    pub fn canonicalized(&self) -> Self {
        let mut canon: Vec<(f64, PureState)> = Vec::new();
        // Candidate branches for merging are looked up by the ket's support
        // (amplitudes well above the comparison tolerance), so the pass stays
        // near-linear in the branch count.
        let mut by_support: BTreeMap<Vec<OccupationVector>, Vec<usize>> = BTreeMap::new();
        for (w, b) in &self.branches {
            let n2 = b.norm_sqr();
            let weight = w * n2;
            if weight <= BRANCH_PRUNE {
                continue;
            }
            let lead_phase = b
                .amplitudes()
                .find(|(_, a)| a.norm() > AMPLITUDE_PRUNE)
                .map(|(_, a)| a / a.norm())
                .unwrap_or(Complex64::new(1.0, 0.0));
            let ket = b.scaled(lead_phase.conj() / n2.sqrt());
            let support: Vec<OccupationVector> = ket
                .amplitudes()
                .filter(|(_, a)| a.norm() > 1e-9)
                .map(|(occ, _)| occ.clone())
                .collect();
            let bucket = by_support.entry(support).or_default();
            if let Some(&idx) = bucket
                .iter()
                .find(|&&idx| kets_equal(&canon[idx].1, &ket, 1e-12))
            {
                canon[idx].0 += weight;
            } else {
                bucket.push(canon.len());
                canon.push((weight, ket));
            }
        }
        canon.sort_by(|(_, a), (_, b)| {
            let ka: Vec<_> = a.amplitudes().map(|(occ, _)| occ.clone()).collect();
            let kb: Vec<_> = b.amplitudes().map(|(occ, _)| occ.clone()).collect();
            ka.cmp(&kb)
        });
        Self {
            registry: self.registry.clone(),
            branches: canon,
        }
    }

    /// Density-matrix entries `⟨m|ρ|n⟩` summed over branches. The map is
    /// independent of how the mixture is split into branches.
    fn density_entries(&self) -> BTreeMap<(OccupationVector, OccupationVector), Complex64> {
        let mut rho = BTreeMap::new();
        for (w, b) in &self.branches {
            let terms: Vec<(&OccupationVector, &Complex64)> = b.amplitudes().collect();
            for (oi, ai) in &terms {
                for (oj, aj) in &terms {
                    let v = *w * *ai * aj.conj();
                    *rho.entry(((*oi).clone(), (*oj).clone()))
                        .or_insert(Complex64::new(0.0, 0.0)) += v;
                }
            }
        }
        rho
    }

    /// Largest difference between density-matrix entries of the two states.
    /// Unlike [`max_coefficient_delta`](Self::max_coefficient_delta) this does
    /// not depend on how either mixture is unraveled into pure branches, so it
    /// is the right comparison when two pipelines produce the same state
    /// through different intermediate decompositions.
    pub fn max_density_delta(&self, other: &Self) -> Result<f64> {
        if self.registry != other.registry {
            return Err(Error::RegistryMismatch);
        }
        let a = self.density_entries();
        let b = other.density_entries();
        let mut delta: f64 = 0.0;
        for (key, va) in &a {
            delta =
                delta.max((va - b.get(key).copied().unwrap_or(Complex64::new(0.0, 0.0))).norm());
        }
        for (key, vb) in &b {
            if !a.contains_key(key) {
                delta = delta.max(vb.norm());
            }
        }
        Ok(delta)
    }

    /// Largest coefficient discrepancy between two states in canonical form:
    /// branch weights and ket amplitudes are compared pairwise, and branches
    /// present on one side only contribute their full weight.
    pub fn max_coefficient_delta(&self, other: &Self) -> Result<f64> {
        if self.registry != other.registry {
            return Err(Error::RegistryMismatch);
        }
        let a = self.canonicalized();
        let b = other.canonicalized();
        let mut delta: f64 = 0.0;
        let mut used = vec![false; b.branches.len()];
        for (wa, ka) in &a.branches {
            let mut matched = false;
            for (idx, (wb, kb)) in b.branches.iter().enumerate() {
                if used[idx] || !kets_equal(ka, kb, 1e-9) {
                    continue;
                }
                used[idx] = true;
                delta = delta.max((wa - wb).abs());
                delta = delta.max(ket_delta(ka, kb) * wa.max(*wb));
                matched = true;
                break;
            }
            if !matched {
                delta = delta.max(*wa);
            }
        }
        for (idx, (wb, _)) in b.branches.iter().enumerate() {
            if !used[idx] {
                delta = delta.max(*wb);
            }
        }
        Ok(delta)
    }
}

fn kets_equal(a: &PureState, b: &PureState, tol: f64) -> bool {
    ket_delta(a, b) <= tol
}

/// Max amplitude difference between two kets over the union of their supports.
fn ket_delta(a: &PureState, b: &PureState) -> f64 {
    let mut d: f64 = 0.0;
    for (occ, amp) in a.amplitudes() {
        d = d.max((amp - b.amplitude(occ)).norm());
    }
    for (occ, amp) in b.amplitudes() {
        d = d.max((amp - a.amplitude(occ)).norm());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn reg(labels: &[&str]) -> Arc<ModeRegistry> {
        ModeRegistry::new(labels.iter().copied(), 8).unwrap()
    }

    #[test]
    fn loss_splits_single_photon() {
        let st = MixedState::from_pure(1.0, PureState::basis(reg(&["m"]), &[1]).unwrap());
        let out = st.apply_loss(0, 0.75).unwrap().canonicalized();
        assert_eq!(out.branch_count(), 2);
        assert_abs_diff_eq!(out.total_weight(), 1.0, epsilon = 1e-12);
        let weights: Vec<f64> = out.branches().iter().map(|(w, _)| *w).collect();
        // Canonical order puts |0⟩ before |1⟩.
        assert_abs_diff_eq!(weights[0], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(weights[1], 0.75, epsilon = 1e-12);
    }

    #[test]
    fn loss_compositions_match() {
        let ket = PureState::from_amplitudes(
            reg(&["m", "n"]),
            [
                (vec![2, 0], Complex64::new(0.6, 0.0)),
                (vec![1, 1], Complex64::new(0.0, 0.8)),
            ],
        )
        .unwrap();
        let st = MixedState::from_pure(1.0, ket);
        let twice = st.apply_loss(0, 0.9).unwrap().apply_loss(0, 0.8).unwrap();
        let once = st.apply_loss(0, 0.72).unwrap();
        assert_abs_diff_eq!(
            twice.max_coefficient_delta(&once).unwrap(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn losses_on_disjoint_modes_commute() {
        let ket = PureState::from_amplitudes(
            reg(&["m", "n"]),
            [
                (vec![2, 1], Complex64::new(0.5, 0.2)),
                (vec![0, 2], Complex64::new(-0.4, 0.6)),
            ],
        )
        .unwrap();
        let st = MixedState::from_pure(1.0, ket);
        let ab = st.apply_loss(0, 0.7).unwrap().apply_loss(1, 0.4).unwrap();
        let ba = st.apply_loss(1, 0.4).unwrap().apply_loss(0, 0.7).unwrap();
        assert_abs_diff_eq!(ab.max_coefficient_delta(&ba).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn total_weight_multiplies_under_tensor() {
        let a = MixedState::from_pure(0.3, PureState::basis(reg(&["a"]), &[1]).unwrap());
        let b = MixedState::from_pure(0.5, PureState::basis(reg(&["b"]), &[2]).unwrap());
        let joint = a.tensor(&b).unwrap();
        assert_abs_diff_eq!(joint.total_weight(), 0.15, epsilon = 1e-12);
    }

    #[test]
    fn unitary_preserves_total_weight() {
        let ket = PureState::from_amplitudes(
            reg(&["a", "b"]),
            [
                (vec![1, 0], Complex64::new(0.8, 0.0)),
                (vec![0, 1], Complex64::new(0.0, 0.6)),
            ],
        )
        .unwrap();
        let st = MixedState::from_pure(0.77, ket);
        let out = st
            .apply_two_mode_unitary(0, 1, &Mat2::rotation(1.1))
            .unwrap();
        assert_abs_diff_eq!(out.total_weight(), st.total_weight(), epsilon = 1e-12);
    }

    #[test]
    fn density_delta_ignores_the_unraveling() {
        // ½|0⟩⟨0| + ½|1⟩⟨1| equals ½|+⟩⟨+| + ½|−⟩⟨−| as an operator even
        // though the branch decompositions share no ket.
        let registry = reg(&["m"]);
        let zero = PureState::basis(registry.clone(), &[0]).unwrap();
        let one = PureState::basis(registry.clone(), &[1]).unwrap();
        let r = 1.0 / 2f64.sqrt();
        let plus = PureState::from_amplitudes(
            registry.clone(),
            [
                (vec![0], Complex64::new(r, 0.0)),
                (vec![1], Complex64::new(r, 0.0)),
            ],
        )
        .unwrap();
        let minus = PureState::from_amplitudes(
            registry.clone(),
            [
                (vec![0], Complex64::new(r, 0.0)),
                (vec![1], Complex64::new(-r, 0.0)),
            ],
        )
        .unwrap();
        let number =
            MixedState::from_branches(registry.clone(), vec![(0.5, zero), (0.5, one)]).unwrap();
        let rotated = MixedState::from_branches(registry, vec![(0.5, plus), (0.5, minus)]).unwrap();
        assert_abs_diff_eq!(
            number.max_density_delta(&rotated).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        assert!(number.max_coefficient_delta(&rotated).unwrap() > 0.2);
    }

    #[test]
    fn canonicalization_merges_proportional_branches() {
        let registry = reg(&["a"]);
        let ket1 = PureState::basis(registry.clone(), &[1]).unwrap();
        let ket2 = ket1.scaled(Complex64::new(0.0, -0.5)); // same ray, phase+scale
        let st = MixedState::from_branches(registry, vec![(0.4, ket1), (0.8, ket2)]).unwrap();
        let canon = st.canonicalized();
        assert_eq!(canon.branch_count(), 1);
        assert_abs_diff_eq!(canon.total_weight(), 0.4 + 0.8 * 0.25, epsilon = 1e-12);
    }

    #[test]
    fn zero_state_has_zero_weight() {
        let st = MixedState::zero(reg(&["a"]));
        assert_eq!(st.total_weight(), 0.0);
        assert_eq!(st.branch_count(), 0);
    }
}
