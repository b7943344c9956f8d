use super::state::validate_keep;
use super::{CMatrix, C64};
use crate::error::{invalid, Error, Result};

const HERMITIAN_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-9;

/// Hermitian, positive semidefinite, unit-trace operator on `n_qubits` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n_qubits: usize,
    elements: CMatrix,
}

impl DensityMatrix {
    /// Validating constructor: Hermitian and unit trace within 1e-10, all
    /// eigenvalues ≥ -1e-9.
    pub fn new(n_qubits: usize, elements: CMatrix) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if n_qubits == 0 || elements.nrows() != dim || elements.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: elements.nrows(),
            });
        }
        let rho = Self { n_qubits, elements };
        if !rho.is_hermitian(HERMITIAN_TOL) {
            return invalid("density matrix is not Hermitian within 1e-10");
        }
        let tr = rho.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return invalid(format!("density matrix trace {tr} differs from 1"));
        }
        let min_eig = rho.eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
        if min_eig < -PSD_TOL {
            return invalid(format!("density matrix has negative eigenvalue {min_eig}"));
        }
        Ok(rho)
    }

    pub(crate) fn from_matrix_unchecked(n_qubits: usize, elements: CMatrix) -> Self {
        Self { n_qubits, elements }
    }

    /// `I / d`.
    pub fn maximally_mixed(n_qubits: usize) -> Self {
        let dim = 1usize << n_qubits;
        Self {
            n_qubits,
            elements: CMatrix::from_diagonal_element(dim, dim, C64::new(1.0 / dim as f64, 0.0)),
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.elements.nrows()
    }

    pub fn elements(&self) -> &CMatrix {
        &self.elements
    }

    pub fn into_elements(self) -> CMatrix {
        self.elements
    }

    /// Real part of the trace.
    pub fn trace(&self) -> f64 {
        self.elements.trace().re
    }

    /// `Tr[ρ²]`.
    pub fn purity(&self) -> f64 {
        // Tr[ρ ρ] = Σ_ij ρ_ij ρ_ji = Σ_ij |ρ_ij|² for Hermitian ρ
        self.elements.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let d = self.dim();
        (0..d).all(|r| (r..d).all(|c| (self.elements[(r, c)] - self.elements[(c, r)].conj()).norm() <= tol))
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = (&self.elements + self.elements.adjoint()) * C64::new(0.5, 0.0);
        let mut eig: Vec<f64> = herm.symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(|a, b| a.total_cmp(b));
        eig
    }

    /// Overlap fidelity `Tr[self · other]`.
    pub fn overlap(&self, other: &DensityMatrix) -> Result<f64> {
        state_fidelity(self, other)
    }
}

/// Overlap fidelity `F = Tr[a·b]`.
///
/// This is the linear overlap, not the Uhlmann fidelity. It is exactly
/// symmetric in its arguments because the sum runs over the same products in
/// the same order either way.
pub fn state_fidelity(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    let d = a.dim();
    // Tr[ab] = Σ_ij a_ij b_ji; pair (i,j) with (j,i) so swapping a and b
    // visits identical terms in identical order
    let mut acc = 0.0;
    for i in 0..d {
        acc += (a.elements[(i, i)] * b.elements[(i, i)]).re;
        for j in (i + 1)..d {
            let t1 = a.elements[(i, j)] * b.elements[(j, i)];
            let t2 = a.elements[(j, i)] * b.elements[(i, j)];
            acc += t1.re + t2.re;
        }
    }
    Ok(acc)
}

/// Reduced density matrix on `keep` (in the order given).
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    let n = rho.n_qubits;
    validate_keep(keep, n)?;
    let traced: Vec<usize> = (0..n).filter(|q| !keep.contains(q)).collect();
    let k = keep.len();
    let sub_dim = 1usize << k;
    let env_dim = 1usize << traced.len();
    let place = |pattern: usize, qubits: &[usize]| -> usize {
        qubits.iter().enumerate().fold(0usize, |idx, (pos, &q)| {
            let bit = (pattern >> (qubits.len() - 1 - pos)) & 1;
            idx | (bit << (n - 1 - q))
        })
    };
    let sub_idx: Vec<usize> = (0..sub_dim).map(|s| place(s, keep)).collect();
    let env_idx: Vec<usize> = (0..env_dim).map(|e| place(e, &traced)).collect();
    let mut out = CMatrix::zeros(sub_dim, sub_dim);
    for r in 0..sub_dim {
        for c in 0..sub_dim {
            out[(r, c)] = env_idx
                .iter()
                .map(|&e| rho.elements[(sub_idx[r] | e, sub_idx[c] | e)])
                .sum();
        }
    }
    Ok(DensityMatrix::from_matrix_unchecked(k, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{PureState, SingleQubitGate};
    use crate::rng::SeededRng;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn pure(amps: &[(f64, f64)]) -> PureState {
        PureState::normalized(amps.iter().map(|&(r, i)| C64::new(r, i)).collect()).unwrap()
    }

    #[test]
    fn product_state_factorizes() {
        // |0⟩ ⊗ |+⟩
        let psi = pure(&[(FRAC_1_SQRT_2, 0.0), (FRAC_1_SQRT_2, 0.0), (0.0, 0.0), (0.0, 0.0)]);
        let r = partial_trace(&psi.outer_product(), &[1]).unwrap();
        for z in r.elements().iter() {
            assert!((z - C64::new(0.5, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn bell_state_reduces_to_maximally_mixed() {
        let bell = pure(&[(1.0, 0.0), (0.0, 0.0), (0.0, 0.0), (1.0, 0.0)]);
        for q in 0..2 {
            let r = partial_trace(&bell.outer_product(), &[q]).unwrap();
            let diff = r.elements() - DensityMatrix::maximally_mixed(1).elements();
            assert!(diff.iter().all(|z| z.norm() < 1e-12));
        }
    }

    #[test]
    fn reduced_random_state_is_a_state() {
        let mut rng = SeededRng::new(11, 0);
        for _ in 0..20 {
            let amps = (0..8).map(|_| C64::new(rng.normal(), rng.normal())).collect();
            let psi = PureState::normalized(amps).unwrap();
            let r = partial_trace(&psi.outer_product(), &[0]).unwrap();
            let eig = r.eigenvalues();
            assert!(eig.iter().all(|&e| (-1e-12..=1.0 + 1e-12).contains(&e)));
            assert!((eig.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            assert!(DensityMatrix::new(1, r.into_elements()).is_ok());
        }
    }

    #[test]
    fn invalid_keep_lists() {
        let rho = DensityMatrix::maximally_mixed(2);
        assert!(partial_trace(&rho, &[]).is_err());
        assert!(partial_trace(&rho, &[2]).is_err());
        assert!(partial_trace(&rho, &[0, 0]).is_err());
    }

    #[test]
    fn fidelity_examples() {
        let zero = PureState::zero(1).unwrap().outer_product();
        assert!((state_fidelity(&zero, &zero).unwrap() - 1.0).abs() < 1e-15);
        let mixed = DensityMatrix::maximally_mixed(1);
        assert!((state_fidelity(&zero, &mixed).unwrap() - 0.5).abs() < 1e-15);
        let mixed3 = DensityMatrix::maximally_mixed(3);
        assert!((state_fidelity(&mixed3, &mixed3).unwrap() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn fidelity_dimension_mismatch() {
        let a = DensityMatrix::maximally_mixed(1);
        let b = DensityMatrix::maximally_mixed(2);
        assert!(state_fidelity(&a, &b).is_err());
    }

    #[test]
    fn validation_rejects_bad_matrices() {
        let mut m = CMatrix::identity(2, 2);
        assert!(DensityMatrix::new(1, m.clone()).is_err()); // trace 2
        m[(0, 0)] = C64::new(1.5, 0.0);
        m[(1, 1)] = C64::new(-0.5, 0.0);
        assert!(DensityMatrix::new(1, m).is_err()); // negative eigenvalue
        let mut h = CMatrix::from_diagonal_element(2, 2, C64::new(0.5, 0.0));
        h[(0, 1)] = C64::new(0.1, 0.0);
        assert!(DensityMatrix::new(1, h).is_err()); // not Hermitian
    }

    #[test]
    fn purity_of_pure_state() {
        let mut psi = PureState::zero(2).unwrap();
        psi.apply_single_qubit_gate(&SingleQubitGate::hadamard(), 1).unwrap();
        assert!((psi.outer_product().purity() - 1.0).abs() < 1e-14);
    }
}
