use std::fmt;
use std::sync::Arc;

use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Ordered set of named bosonic modes plus the per-mode photon cap.
///
/// Registries are immutable and shared by `Arc`; two states interoperate when
/// their registries have identical labels and cap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeRegistry {
    labels: Vec<String>,
    photon_cap: u32,
}

impl ModeRegistry {
    pub fn new<I, S>(labels: I, photon_cap: u32) -> Result<Arc<Self>>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::DuplicateModeLabel(l.clone()));
            }
        }
        if photon_cap as usize > super::MAX_PHOTONS {
            return Err(Error::InvalidParameter {
                name: "photon_cap",
                value: photon_cap as f64,
                constraint: "at most MAX_PHOTONS",
            });
        }
        Ok(Arc::new(Self { labels, photon_cap }))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn photon_cap(&self) -> u32 {
        self.photon_cap
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(String::as_str)
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownMode(label.to_string()))
    }

    /// Registry for the concatenation of two mode sets. Labels must not clash
    /// and the caps must agree.
    pub fn concat(&self, other: &Self) -> Result<Arc<Self>> {
        if self.photon_cap != other.photon_cap {
            return Err(Error::InvalidParameter {
                name: "photon_cap",
                value: other.photon_cap as f64,
                constraint: "equal caps on tensor factors",
            });
        }
        Self::new(
            self.labels.iter().chain(other.labels.iter()).cloned(),
            self.photon_cap,
        )
    }

    /// Registry with the given mode indices removed, preserving order of the
    /// rest. Returns the new registry and the retained original indices.
    pub fn without(&self, removed: &[usize]) -> (Arc<Self>, Vec<usize>) {
        let kept: Vec<usize> = (0..self.len()).filter(|i| !removed.contains(i)).collect();
        let reg = Arc::new(Self {
            labels: kept.iter().map(|&i| self.labels[i].clone()).collect(),
            photon_cap: self.photon_cap,
        });
        (reg, kept)
    }
}

/// Photon counts per mode, in registry order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OccupationVector(SmallVec<[u8; 12]>);

impl OccupationVector {
    pub fn new(counts: impl Into<SmallVec<[u8; 12]>>) -> Self {
        Self(counts.into())
    }

    pub fn vacuum(n_modes: usize) -> Self {
        Self(smallvec::smallvec![0; n_modes])
    }

    /// Validates length and the per-mode cap against a registry.
    pub fn checked(counts: &[u8], registry: &ModeRegistry) -> Result<Self> {
        if counts.len() != registry.len() {
            return Err(Error::OccupationLength {
                got: counts.len(),
                want: registry.len(),
            });
        }
        for (i, &c) in counts.iter().enumerate() {
            if c as u32 > registry.photon_cap() {
                return Err(Error::PhotonCapExceeded {
                    mode: registry.label(i).to_string(),
                    count: c as u32,
                    cap: registry.photon_cap(),
                });
            }
        }
        Ok(Self(SmallVec::from_slice(counts)))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count(&self, mode: usize) -> u32 {
        self.0[mode] as u32
    }

    pub fn total(&self) -> u32 {
        self.0.iter().map(|&c| c as u32).sum()
    }

    pub(crate) fn with_count(&self, mode: usize, count: u32) -> Self {
        let mut counts = self.0.clone();
        counts[mode] = count as u8;
        Self(counts)
    }

    pub(crate) fn with_counts2(&self, i: usize, ni: u32, j: usize, nj: u32) -> Self {
        let mut counts = self.0.clone();
        counts[i] = ni as u8;
        counts[j] = nj as u8;
        Self(counts)
    }

    pub(crate) fn concat(&self, other: &Self) -> Self {
        let mut counts = self.0.clone();
        counts.extend_from_slice(&other.0);
        Self(counts)
    }

    pub(crate) fn select(&self, kept: &[usize]) -> Self {
        Self(kept.iter().map(|&i| self.0[i]).collect())
    }

    pub fn counts(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Display for OccupationVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "⟩")
    }
}
