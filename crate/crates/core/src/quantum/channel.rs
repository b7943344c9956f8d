use super::{c, embed_single, CMatrix, CMatrix2, DensityMatrix, SingleQubitGate, C64};
use crate::error::{invalid, Error, Result};
use serde::{Deserialize, Serialize};

const COMPLETENESS_TOL: f64 = 1e-10;

/// A quantum channel given by Kraus operators `M_k`, acting as
/// `ρ ↦ Σ_k M_k† ρ M_k` with completeness `Σ_k M_k M_k† = I`.
///
/// For Hermitian Kraus sets (projectors, scaled Paulis) this coincides with
/// the more common `Σ M ρ M†` convention.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausChannel {
    operators: Vec<CMatrix>,
    label: String,
}

/// Named single-qubit perturbations shipped with the toolkit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelKind {
    ZMeasure,
    Depolarize,
    Identity,
}

impl ChannelKind {
    pub fn channel(self) -> KrausChannel {
        match self {
            ChannelKind::ZMeasure => KrausChannel::z_measure(),
            ChannelKind::Depolarize => KrausChannel::depolarizing(),
            ChannelKind::Identity => KrausChannel::identity(2),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::ZMeasure => "z-measure",
            ChannelKind::Depolarize => "depolarize",
            ChannelKind::Identity => "identity",
        }
    }
}

impl std::str::FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "z-measure" => Ok(ChannelKind::ZMeasure),
            "depolarize" => Ok(ChannelKind::Depolarize),
            "identity" => Ok(ChannelKind::Identity),
            other => invalid(format!("unknown channel {other:?}")),
        }
    }
}

fn mat2(m: &CMatrix2) -> CMatrix {
    CMatrix::from_fn(2, 2, |r, col| m[(r, col)])
}

impl KrausChannel {
    /// Validates squareness, equal dimensions and completeness.
    pub fn new(operators: Vec<CMatrix>, label: impl Into<String>) -> Result<Self> {
        let Some(first) = operators.first() else {
            return invalid("channel needs at least one Kraus operator");
        };
        let d = first.nrows();
        if d == 0 {
            return invalid("Kraus operators must be nonempty");
        }
        for m in &operators {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: m.ncols().max(m.nrows()),
                });
            }
        }
        let sum = operators
            .iter()
            .fold(CMatrix::zeros(d, d), |acc, m| acc + m * m.adjoint());
        let dev = (sum - CMatrix::identity(d, d))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if dev > COMPLETENESS_TOL {
            return invalid(format!(
                "Kraus operators violate completeness Σ M M† = I (deviation {dev:.3e})"
            ));
        }
        Ok(Self {
            operators,
            label: label.into(),
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            operators: vec![CMatrix::identity(dim, dim)],
            label: "identity".into(),
        }
    }

    /// Single-qubit projective measurement in the Z basis, `{|0⟩⟨0|, |1⟩⟨1|}`.
    pub fn z_measure() -> Self {
        let o = c(0.0, 0.0);
        let l = c(1.0, 0.0);
        Self {
            operators: vec![
                mat2(&CMatrix2::new(l, o, o, o)),
                mat2(&CMatrix2::new(o, o, o, l)),
            ],
            label: "z-measure".into(),
        }
    }

    /// Single-qubit fully depolarizing channel `{σ_μ / 2}`.
    pub fn depolarizing() -> Self {
        let half = C64::new(0.5, 0.0);
        let operators = [
            SingleQubitGate::identity(),
            SingleQubitGate::pauli_x(),
            SingleQubitGate::pauli_y(),
            SingleQubitGate::pauli_z(),
        ]
        .iter()
        .map(|g| mat2(g.matrix()) * half)
        .collect();
        Self {
            operators,
            label: "depolarize".into(),
        }
    }

    pub fn operators(&self) -> &[CMatrix] {
        &self.operators
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.operators[0].nrows()
    }

    /// The operators as 2×2 matrices, if this is a single-qubit channel.
    pub fn local_operators(&self) -> Option<Vec<CMatrix2>> {
        (self.dim() == 2).then(|| {
            self.operators
                .iter()
                .map(|m| CMatrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]))
                .collect()
        })
    }

    /// Operators applied to a ket in a pure-state unraveling: `M_k†`, so that
    /// averaging `M_k†|ψ⟩⟨ψ|M_k` over branches reproduces the channel.
    pub fn ket_branches(&self) -> Option<Vec<CMatrix2>> {
        self.local_operators()
            .map(|ops| ops.iter().map(|m| m.adjoint()).collect())
    }

    /// Lifts a single-qubit channel onto `qubit` of an `n_qubits` register.
    pub fn embed(&self, qubit: usize, n_qubits: usize) -> Result<Self> {
        let ops = self
            .local_operators()
            .ok_or_else(|| Error::InvalidArgument("only single-qubit channels embed".into()))?;
        if qubit >= n_qubits {
            return invalid(format!("qubit {qubit} out of range for {n_qubits} qubits"));
        }
        Ok(Self {
            operators: ops.iter().map(|m| embed_single(m, qubit, n_qubits)).collect(),
            label: format!("{}@q{qubit}", self.label),
        })
    }
}

/// `Λ(ρ) = Σ_k M_k† ρ M_k`.
pub fn apply_channel(rho: &DensityMatrix, channel: &KrausChannel) -> Result<DensityMatrix> {
    if channel.dim() != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            actual: channel.dim(),
        });
    }
    let d = rho.dim();
    let out = channel
        .operators()
        .iter()
        .fold(CMatrix::zeros(d, d), |acc, m| acc + m.adjoint() * rho.elements() * m);
    Ok(DensityMatrix::from_matrix_unchecked(rho.n_qubits(), out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{haar_unitary, PureState};
    use crate::rng::SeededRng;

    fn random_rho(n: usize, rng: &mut SeededRng) -> DensityMatrix {
        let d = 1usize << n;
        let g = CMatrix::from_fn(d, d, |_, _| C64::new(rng.normal(), rng.normal()));
        let m = &g * g.adjoint();
        let tr = m.trace();
        DensityMatrix::new(n, m / tr).unwrap()
    }

    #[test]
    fn shipped_channels_are_complete() {
        for ch in [KrausChannel::identity(2), KrausChannel::z_measure(), KrausChannel::depolarizing()] {
            assert!(KrausChannel::new(ch.operators().to_vec(), ch.label()).is_ok());
            let embedded = ch.embed(1, 3).unwrap();
            assert!(KrausChannel::new(embedded.operators().to_vec(), "e").is_ok());
        }
    }

    #[test]
    fn rejects_incomplete_set() {
        let half = CMatrix::identity(2, 2) * C64::new(0.5, 0.0);
        assert!(KrausChannel::new(vec![half], "bad").is_err());
        assert!(KrausChannel::new(vec![], "empty").is_err());
    }

    #[test]
    fn identity_channel_is_noop() {
        let mut rng = SeededRng::new(21, 0);
        let rho = random_rho(2, &mut rng);
        let out = apply_channel(&rho, &KrausChannel::identity(4)).unwrap();
        assert_eq!(out, rho);
    }

    #[test]
    fn z_measure_dephases() {
        let mut rng = SeededRng::new(22, 0);
        let rho = random_rho(1, &mut rng);
        let out = apply_channel(&rho, &KrausChannel::z_measure()).unwrap();
        assert_eq!(out.elements()[(0, 0)], rho.elements()[(0, 0)]);
        assert_eq!(out.elements()[(1, 1)], rho.elements()[(1, 1)]);
        assert_eq!(out.elements()[(0, 1)], C64::new(0.0, 0.0));
        assert_eq!(out.elements()[(1, 0)], C64::new(0.0, 0.0));
    }

    #[test]
    fn matches_naive_triple_loop() {
        let mut rng = SeededRng::new(23, 0);
        let rho = random_rho(2, &mut rng);
        // random 2-qubit channel: rows of a Haar isometry split into blocks,
        // adjusted for the M M† = I convention (M_k = V_k†)
        let u = haar_unitary(8, &mut rng);
        let ops: Vec<CMatrix> = (0..2)
            .map(|k| u.view((4 * k, 0), (4, 4)).into_owned().adjoint())
            .collect();
        let ch = KrausChannel::new(ops, "random").unwrap();
        let fast = apply_channel(&rho, &ch).unwrap();
        let d = 4;
        let mut naive = CMatrix::zeros(d, d);
        for m in ch.operators() {
            for i in 0..d {
                for j in 0..d {
                    let mut acc = C64::new(0.0, 0.0);
                    for a in 0..d {
                        for b in 0..d {
                            acc += m[(a, i)].conj() * rho.elements()[(a, b)] * m[(b, j)];
                        }
                    }
                    naive[(i, j)] += acc;
                }
            }
        }
        assert!((fast.elements() - naive).iter().all(|z| z.norm() < 1e-12));
        assert!(fast.is_hermitian(1e-12));
    }

    #[test]
    fn dimension_mismatch() {
        let rho = DensityMatrix::maximally_mixed(2);
        assert!(apply_channel(&rho, &KrausChannel::z_measure()).is_err());
    }

    #[test]
    fn trace_preserved_for_shipped_channels() {
        let mut rng = SeededRng::new(24, 0);
        let rho = random_rho(3, &mut rng);
        for ch in [KrausChannel::z_measure(), KrausChannel::depolarizing()] {
            let out = apply_channel(&rho, &ch.embed(2, 3).unwrap()).unwrap();
            assert!((out.trace() - 1.0).abs() < 1e-10);
        }
        let psi = PureState::zero(1).unwrap();
        let out = apply_channel(&psi.outer_product(), &KrausChannel::depolarizing()).unwrap();
        let diff = out.elements() - DensityMatrix::maximally_mixed(1).elements();
        assert!(diff.iter().all(|z| z.norm() < 1e-12));
    }
}
