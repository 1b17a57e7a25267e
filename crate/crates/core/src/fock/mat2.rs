use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::UNITARY_TOL;

/// 2×2 complex matrix acting on a pair of modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2 {
    pub m: [[Complex64; 2]; 2],
}

impl Mat2 {
    pub fn new(m: [[Complex64; 2]; 2]) -> Self {
        Self { m }
    }

    pub fn from_real(m: [[f64; 2]; 2]) -> Self {
        Self {
            m: [
                [Complex64::new(m[0][0], 0.0), Complex64::new(m[0][1], 0.0)],
                [Complex64::new(m[1][0], 0.0), Complex64::new(m[1][1], 0.0)],
            ],
        }
    }

    pub fn identity() -> Self {
        Self::from_real([[1.0, 0.0], [0.0, 1.0]])
    }

    /// Beamsplitter with transmittance `t`: the first mode keeps amplitude √t.
    /// Real orthogonal convention, so |1,1⟩ on a balanced splitter bunches into
    /// (|2,0⟩ − |0,2⟩)/√2.
    pub fn beam_splitter(t: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidParameter {
                name: "transmittance",
                value: t,
                constraint: "[0, 1]",
            });
        }
        let c = t.sqrt();
        let s = (1.0 - t).sqrt();
        Ok(Self::from_real([[c, s], [s, -c]]))
    }

    pub fn balanced_splitter() -> Self {
        Self::beam_splitter(0.5).expect("0.5 is a valid transmittance")
    }

    /// Polarization rotation by `theta` (radians) on an (h, v) mode pair.
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::from_real([[c, s], [-s, c]])
    }

    /// Mode swap (half-wave plate at 45°).
    pub fn pauli_x() -> Self {
        Self::from_real([[0.0, 1.0], [1.0, 0.0]])
    }

    /// π phase on the second mode (half-wave plate at 0°).
    pub fn pauli_z() -> Self {
        Self::from_real([[1.0, 0.0], [0.0, -1.0]])
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = self.m[i][0] * rhs.m[0][j] + self.m[i][1] * rhs.m[1][j];
            }
        }
        Self { m: out }
    }

    pub fn adjoint(&self) -> Self {
        Self {
            m: [
                [self.m[0][0].conj(), self.m[1][0].conj()],
                [self.m[0][1].conj(), self.m[1][1].conj()],
            ],
        }
    }

    /// Max-norm deviation of U†U from the identity.
    pub fn unitarity_deviation(&self) -> f64 {
        let p = self.adjoint().mul(self);
        let mut dev: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let target = if i == j { 1.0 } else { 0.0 };
                dev = dev.max((p.m[i][j] - target).norm());
            }
        }
        dev
    }

    pub fn ensure_unitary(&self) -> Result<()> {
        let deviation = self.unitarity_deviation();
        if deviation > UNITARY_TOL {
            return Err(Error::NonUnitary { deviation });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_matrices_are_unitary() {
        for m in [
            Mat2::identity(),
            Mat2::balanced_splitter(),
            Mat2::beam_splitter(0.2).unwrap(),
            Mat2::rotation(0.7),
            Mat2::pauli_x(),
            Mat2::pauli_z(),
        ] {
            assert!(m.unitarity_deviation() < 1e-15);
        }
    }

    #[test]
    fn non_unitary_rejected() {
        let m = Mat2::from_real([[1.0, 0.0], [0.0, 0.5]]);
        assert!(m.ensure_unitary().is_err());
    }
}
