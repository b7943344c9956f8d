use super::{c, C64, CMatrix2};
use crate::error::{invalid, Result};
use std::f64::consts::FRAC_1_SQRT_2;

const UNITARY_TOL: f64 = 1e-12;

/// A 2×2 unitary acting on one qubit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleQubitGate(CMatrix2);

impl SingleQubitGate {
    pub fn new(elements: CMatrix2) -> Result<Self> {
        let gate = Self(elements);
        if !gate.is_unitary(UNITARY_TOL) {
            return invalid("single-qubit gate is not unitary within 1e-12");
        }
        Ok(gate)
    }

    pub(crate) fn new_unchecked(elements: CMatrix2) -> Self {
        Self(elements)
    }

    pub fn identity() -> Self {
        Self(CMatrix2::identity())
    }

    pub fn pauli_x() -> Self {
        let o = C64::new(0.0, 0.0);
        let l = C64::new(1.0, 0.0);
        Self(CMatrix2::new(o, l, l, o))
    }

    pub fn pauli_y() -> Self {
        let o = C64::new(0.0, 0.0);
        Self(CMatrix2::new(o, c(0.0, -1.0), c(0.0, 1.0), o))
    }

    pub fn pauli_z() -> Self {
        let o = C64::new(0.0, 0.0);
        Self(CMatrix2::new(c(1.0, 0.0), o, o, c(-1.0, 0.0)))
    }

    pub fn hadamard() -> Self {
        let h = c(FRAC_1_SQRT_2, 0.0);
        Self(CMatrix2::new(h, h, h, -h))
    }

    pub fn matrix(&self) -> &CMatrix2 {
        &self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        let prod = self.0.adjoint() * self.0;
        (prod - CMatrix2::identity()).iter().all(|z| z.norm() <= tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_gates_are_unitary() {
        for g in [
            SingleQubitGate::identity(),
            SingleQubitGate::pauli_x(),
            SingleQubitGate::pauli_y(),
            SingleQubitGate::pauli_z(),
            SingleQubitGate::hadamard(),
        ] {
            assert!(g.is_unitary(1e-15));
        }
    }

    #[test]
    fn rejects_non_unitary() {
        let m = CMatrix2::new(c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0));
        assert!(SingleQubitGate::new(m).is_err());
    }
}
