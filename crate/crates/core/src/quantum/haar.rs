//! Haar-random unitaries from orthonormalized complex-Gaussian matrices.
//!
//! Gram-Schmidt on i.i.d. complex-Gaussian columns is the QR decomposition
//! with a positive real diagonal in `R`, which is exactly the phase-fixed QR
//! construction that yields the Haar measure.

use super::{CMatrix, CMatrix2, SingleQubitGate, C64};
use crate::rng::SeededRng;

fn gaussian(rng: &mut SeededRng) -> C64 {
    C64::new(rng.normal(), rng.normal())
}

pub fn haar_single_qubit(rng: &mut SeededRng) -> SingleQubitGate {
    loop {
        let (a, b) = (gaussian(rng), gaussian(rng));
        let (c, d) = (gaussian(rng), gaussian(rng));
        let n1 = (a.norm_sqr() + b.norm_sqr()).sqrt();
        if n1 < 1e-12 {
            continue;
        }
        let (e0, e1) = (a / n1, b / n1);
        let proj = e0.conj() * c + e1.conj() * d;
        let (c, d) = (c - proj * e0, d - proj * e1);
        let n2 = (c.norm_sqr() + d.norm_sqr()).sqrt();
        if n2 < 1e-12 {
            continue;
        }
        // columns (e0, e1) and (c, d) / n2
        return SingleQubitGate::new_unchecked(CMatrix2::new(e0, c / n2, e1, d / n2));
    }
}

/// Haar-random `dim × dim` unitary.
pub fn haar_unitary(dim: usize, rng: &mut SeededRng) -> CMatrix {
    'retry: loop {
        let mut m = CMatrix::from_fn(dim, dim, |_, _| gaussian(rng));
        for j in 0..dim {
            for k in 0..j {
                let proj: C64 = (0..dim).map(|i| m[(i, k)].conj() * m[(i, j)]).sum();
                for i in 0..dim {
                    let v = m[(i, k)];
                    m[(i, j)] -= proj * v;
                }
            }
            let norm = m.column(j).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm < 1e-12 {
                continue 'retry;
            }
            m.column_mut(j).iter_mut().for_each(|z| *z /= norm);
        }
        return m;
    }
}
