use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{binomial, factorial, Mat2, ModeRegistry, OccupationVector, AMPLITUDE_PRUNE};

/// Sparse pure state: occupation vectors mapped to complex amplitudes.
///
/// Amplitudes are stored in a `BTreeMap` so iteration order — and therefore
/// every accumulated floating-point sum in the crate — is deterministic.
/// States need not be normalized; norm² carries probability through loss and
/// heralding.
#[derive(Debug, Clone)]
pub struct PureState {
    registry: Arc<ModeRegistry>,
    amps: BTreeMap<OccupationVector, Complex64>,
}

impl PureState {
    pub fn vacuum(registry: Arc<ModeRegistry>) -> Self {
        let mut amps = BTreeMap::new();
        amps.insert(
            OccupationVector::vacuum(registry.len()),
            Complex64::new(1.0, 0.0),
        );
        Self { registry, amps }
    }

    /// Single basis ket `|counts⟩` with amplitude 1.
    pub fn basis(registry: Arc<ModeRegistry>, counts: &[u8]) -> Result<Self> {
        let occ = OccupationVector::checked(counts, &registry)?;
        let mut amps = BTreeMap::new();
        amps.insert(occ, Complex64::new(1.0, 0.0));
        Ok(Self { registry, amps })
    }

    pub fn from_amplitudes<I>(registry: Arc<ModeRegistry>, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<u8>, Complex64)>,
    {
        let mut amps = BTreeMap::new();
        for (counts, amp) in entries {
            let occ = OccupationVector::checked(&counts, &registry)?;
            if amp.norm() > AMPLITUDE_PRUNE {
                *amps.entry(occ).or_insert(Complex64::new(0.0, 0.0)) += amp;
            }
        }
        Ok(Self { registry, amps })
    }

    /// Builds from occupations already known to fit the registry (callers that
    /// derive them from an existing state); skips validation.
    pub(crate) fn from_occupations<I>(registry: Arc<ModeRegistry>, entries: I) -> Self
    where
        I: IntoIterator<Item = (OccupationVector, Complex64)>,
    {
        let mut amps = BTreeMap::new();
        for (occ, amp) in entries {
            debug_assert_eq!(occ.len(), registry.len());
            if amp.norm() > AMPLITUDE_PRUNE {
                *amps.entry(occ).or_insert(Complex64::new(0.0, 0.0)) += amp;
            }
        }
        Self { registry, amps }
    }

    pub fn registry(&self) -> &Arc<ModeRegistry> {
        &self.registry
    }

    pub fn amplitudes(&self) -> impl Iterator<Item = (&OccupationVector, &Complex64)> {
        self.amps.iter()
    }

    pub fn amplitude(&self, occ: &OccupationVector) -> Complex64 {
        self.amps
            .get(occ)
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn term_count(&self) -> usize {
        self.amps.len()
    }

    pub fn is_zero(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum()
    }

    /// ⟨self|other⟩. Both states must share a registry.
    pub fn inner_product(&self, other: &Self) -> Result<Complex64> {
        if self.registry != other.registry {
            return Err(Error::RegistryMismatch);
        }
        let mut acc = Complex64::new(0.0, 0.0);
        if self.amps.len() <= other.amps.len() {
            for (occ, amp) in &self.amps {
                if let Some(b) = other.amps.get(occ) {
                    acc += amp.conj() * b;
                }
            }
        } else {
            for (occ, b) in &other.amps {
                if let Some(amp) = self.amps.get(occ) {
                    acc += amp.conj() * b;
                }
            }
        }
        Ok(acc)
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        let amps = self
            .amps
            .iter()
            .filter_map(|(occ, amp)| {
                let scaled = amp * factor;
                (scaled.norm() > AMPLITUDE_PRUNE).then(|| (occ.clone(), scaled))
            })
            .collect();
        Self {
            registry: self.registry.clone(),
            amps,
        }
    }

    /// |self⟩⊗|other⟩ on the concatenated registry.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        let registry = self.registry.concat(&other.registry)?;
        let mut amps = BTreeMap::new();
        for (occ_a, amp_a) in &self.amps {
            for (occ_b, amp_b) in &other.amps {
                let amp = amp_a * amp_b;
                if amp.norm() > AMPLITUDE_PRUNE {
                    amps.insert(occ_a.concat(occ_b), amp);
                }
            }
        }
        Ok(Self { registry, amps })
    }

    /// Applies a two-mode unitary to modes `i` and `j`.
    ///
    /// Each Fock component |n_i, n_j⟩ expands through the transformed creation
    /// operators; the amplitude routed to |m_i, m_j⟩ (with m_i + m_j = n_i +
    /// n_j) carries the usual √(factorial) normalization factors.
    pub fn apply_two_mode_unitary(&self, i: usize, j: usize, u: &Mat2) -> Result<Self> {
        if i == j || i >= self.registry.len() || j >= self.registry.len() {
            return Err(Error::InvalidParameter {
                name: "mode index",
                value: j as f64,
                constraint: "two distinct registry modes",
            });
        }
        u.ensure_unitary()?;
        let tables = TwoModeTables::new(u, self.registry.photon_cap());
        self.apply_two_mode_tables(i, j, &tables)
    }

    /// Expansion body shared with the mixed-state path, which validates the
    /// unitary and builds the power tables once for all branches.
    ///
    /// Contributions are collected, sorted, and merged in one pass — cheaper
    /// than map insertion at the fan-out this produces, and just as
    /// deterministic.
    pub(crate) fn apply_two_mode_tables(
        &self,
        i: usize,
        j: usize,
        tables: &TwoModeTables,
    ) -> Result<Self> {
        let cap = self.registry.photon_cap();
        let TwoModeTables { p11, p21, p12, p22 } = tables;
        let fan_out: usize = self
            .amps
            .keys()
            .map(|occ| (occ.count(i) as usize + 1) * (occ.count(j) as usize + 1))
            .sum();
        let mut out: Vec<(OccupationVector, Complex64)> = Vec::with_capacity(fan_out);

        for (occ, amp) in &self.amps {
            let ni = occ.count(i);
            let nj = occ.count(j);
            if ni == 0 && nj == 0 {
                out.push((occ.clone(), *amp));
                continue;
            }
            let base = (factorial(ni) * factorial(nj)).sqrt();
            for k in 0..=ni {
                for l in 0..=nj {
                    let mi = k + l;
                    let mj = ni + nj - mi;
                    if mi > cap || mj > cap {
                        return Err(Error::PhotonCapExceeded {
                            mode: self
                                .registry
                                .label(if mi > cap { i } else { j })
                                .to_string(),
                            count: mi.max(mj),
                            cap,
                        });
                    }
                    let coeff =
                        binomial(ni, k) * binomial(nj, l) * (factorial(mi) * factorial(mj)).sqrt()
                            / base;
                    let weight = p11[k as usize]
                        * p21[(ni - k) as usize]
                        * p12[l as usize]
                        * p22[(nj - l) as usize];
                    let contribution = amp * weight * coeff;
                    if contribution.norm() == 0.0 {
                        continue;
                    }
                    out.push((occ.with_counts2(i, mi, j, mj), contribution));
                }
            }
        }

        out.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        let mut amps: BTreeMap<OccupationVector, Complex64> = BTreeMap::new();
        let mut pending: Option<(OccupationVector, Complex64)> = None;
        for (occ, amp) in out {
            match &mut pending {
                Some((cur, acc)) if *cur == occ => *acc += amp,
                _ => {
                    if let Some((cur, acc)) = pending.take() {
                        if acc.norm() > AMPLITUDE_PRUNE {
                            amps.insert(cur, acc);
                        }
                    }
                    pending = Some((occ, amp));
                }
            }
        }
        if let Some((cur, acc)) = pending {
            if acc.norm() > AMPLITUDE_PRUNE {
                amps.insert(cur, acc);
            }
        }
        Ok(Self {
            registry: self.registry.clone(),
            amps,
        })
    }

    /// Kraus branch of photon loss on `mode`: exactly `lost` photons leak to
    /// the environment, each survivor kept with amplitude √eta. Returns the
    /// (unnormalized) post-loss state; summing `norm²` over all `lost` values
    /// recovers the input norm².
    pub fn loss_branch(&self, mode: usize, eta: f64, lost: u32) -> Self {
        let mut amps = BTreeMap::new();
        for (occ, amp) in &self.amps {
            let n = occ.count(mode);
            if n < lost {
                continue;
            }
            let kept = n - lost;
            let factor =
                (binomial(n, lost) * eta.powi(kept as i32) * (1.0 - eta).powi(lost as i32)).sqrt();
            if factor == 0.0 {
                continue;
            }
            let new_amp = amp * factor;
            if new_amp.norm() > AMPLITUDE_PRUNE {
                amps.insert(occ.with_count(mode, kept), new_amp);
            }
        }
        Self {
            registry: self.registry.clone(),
            amps,
        }
    }

    /// Largest photon count present in `mode` across all components.
    pub fn max_count(&self, mode: usize) -> u32 {
        self.amps
            .keys()
            .map(|occ| occ.count(mode))
            .max()
            .unwrap_or(0)
    }
}

/// Powers of the four matrix entries up to the registry photon cap, so a
/// mixture can expand every branch without recomputing them.
pub(crate) struct TwoModeTables {
    p11: Vec<Complex64>,
    p21: Vec<Complex64>,
    p12: Vec<Complex64>,
    p22: Vec<Complex64>,
}

impl TwoModeTables {
    pub(crate) fn new(u: &Mat2, cap: u32) -> Self {
        let pow_table = |z: Complex64| -> Vec<Complex64> {
            let mut t = Vec::with_capacity(cap as usize + 2);
            t.push(Complex64::new(1.0, 0.0));
            for k in 0..=cap as usize {
                t.push(t[k] * z);
            }
            t
        };
        Self {
            p11: pow_table(u.m[0][0]),
            p21: pow_table(u.m[1][0]),
            p12: pow_table(u.m[0][1]),
            p22: pow_table(u.m[1][1]),
        }
    }
}
