//! Complex linear algebra and quantum-state primitives.
//!
//! Qubit 0 is the most significant bit of a computational-basis index: for an
//! `n`-qubit register the bit of qubit `q` in index `b` is `(b >> (n - 1 - q)) & 1`.

mod channel;
mod density;
mod gate;
mod haar;
mod state;

pub use channel::{apply_channel, ChannelKind, KrausChannel};
pub use density::{partial_trace, state_fidelity, DensityMatrix};
pub use gate::SingleQubitGate;
pub use haar::{haar_single_qubit, haar_unitary};
pub use state::PureState;

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<Complex64>;
pub type CMatrix2 = Matrix2<Complex64>;

pub(crate) const NORM_TOL: f64 = 1e-10;

#[inline]
pub(crate) fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Bit of `qubit` in basis index `index` for an `n_qubits` register.
#[inline]
pub fn qubit_bit(index: usize, qubit: usize, n_qubits: usize) -> usize {
    (index >> (n_qubits - 1 - qubit)) & 1
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Embeds a 2×2 operator acting on `qubit` into the full `2^n` space.
pub fn embed_single(op: &CMatrix2, qubit: usize, n_qubits: usize) -> CMatrix {
    let mut out = CMatrix::identity(1, 1);
    for q in 0..n_qubits {
        let factor = if q == qubit {
            CMatrix::from_fn(2, 2, |r, col| op[(r, col)])
        } else {
            CMatrix::identity(2, 2)
        };
        out = out.kronecker(&factor);
    }
    out
}

#[cfg(test)]
pub(crate) fn is_unitary(m: &CMatrix, tol: f64) -> bool {
    let prod = m.adjoint() * m;
    let eye = CMatrix::identity(m.nrows(), m.ncols());
    (prod - eye).iter().all(|z| z.norm() <= tol)
}
