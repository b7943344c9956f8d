use super::{qubit_bit, CMatrix, CMatrix2, DensityMatrix, SingleQubitGate, C64, NORM_TOL};
use crate::error::{invalid, Error, Result};
use crate::rng::SeededRng;

/// Branches with Born probability below this are treated as impossible.
pub(crate) const DEGENERATE_BRANCH: f64 = 1e-14;

/// Pure state of `n_qubits` qubits stored as a dense amplitude vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    n_qubits: usize,
    amplitudes: Vec<C64>,
}

impl PureState {
    /// `|0...0⟩`.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        Self::basis(n_qubits, 0)
    }

    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > 30 {
            return invalid(format!("n_qubits must be in 1..=30, got {n_qubits}"));
        }
        let dim = 1usize << n_qubits;
        if index >= dim {
            return invalid(format!("basis index {index} out of range for {n_qubits} qubits"));
        }
        let mut amplitudes = vec![C64::new(0.0, 0.0); dim];
        amplitudes[index] = C64::new(1.0, 0.0);
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    /// Builds a state from amplitudes; the vector must already be normalized.
    pub fn from_amplitudes(amplitudes: Vec<C64>) -> Result<Self> {
        let dim = amplitudes.len();
        if dim < 2 || !dim.is_power_of_two() {
            return invalid(format!("amplitude length {dim} is not a power of two ≥ 2"));
        }
        let state = Self {
            n_qubits: dim.trailing_zeros() as usize,
            amplitudes,
        };
        let norm = state.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return invalid(format!("state norm {norm} differs from 1"));
        }
        Ok(state)
    }

    /// Normalizes an arbitrary nonzero vector.
    pub fn normalized(mut amplitudes: Vec<C64>) -> Result<Self> {
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return invalid("cannot normalize the zero vector");
        }
        amplitudes.iter_mut().for_each(|a| *a /= norm);
        Self::from_amplitudes(amplitudes)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &PureState) -> Result<C64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.n_qubits {
            return invalid(format!(
                "qubit index {qubit} out of range for {} qubits",
                self.n_qubits
            ));
        }
        Ok(())
    }

    #[inline]
    fn stride(&self, qubit: usize) -> usize {
        1 << (self.n_qubits - 1 - qubit)
    }

    pub fn apply_single_qubit_gate(&mut self, gate: &SingleQubitGate, qubit: usize) -> Result<()> {
        self.check_qubit(qubit)?;
        self.apply_matrix2_unchecked(gate.matrix(), qubit);
        Ok(())
    }

    /// Applies an arbitrary 2×2 operator without renormalizing.
    pub(crate) fn apply_matrix2_unchecked(&mut self, m: &CMatrix2, qubit: usize) {
        let stride = self.stride(qubit);
        let (m00, m01, m10, m11) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
        for block in self.amplitudes.chunks_exact_mut(2 * stride) {
            let (lo, hi) = block.split_at_mut(stride);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = m00 * x + m01 * y;
                *b = m10 * x + m11 * y;
            }
        }
    }

    pub(crate) fn apply_x_unchecked(&mut self, qubit: usize) {
        let stride = self.stride(qubit);
        for block in self.amplitudes.chunks_exact_mut(2 * stride) {
            let (lo, hi) = block.split_at_mut(stride);
            lo.swap_with_slice(hi);
        }
    }

    pub(crate) fn apply_z_unchecked(&mut self, qubit: usize) {
        let stride = self.stride(qubit);
        for block in self.amplitudes.chunks_exact_mut(2 * stride) {
            block[stride..].iter_mut().for_each(|a| *a = -*a);
        }
    }

    /// Applies `gate` to `target` only on the basis states where `control`
    /// holds `control_value`.
    pub fn apply_controlled_gate(
        &mut self,
        gate: &SingleQubitGate,
        target: usize,
        control: usize,
        control_value: usize,
    ) -> Result<()> {
        self.check_qubit(target)?;
        self.check_qubit(control)?;
        if target == control {
            return invalid("control and target qubits coincide");
        }
        let m = gate.matrix();
        let n = self.n_qubits;
        let stride = self.stride(target);
        for i in 0..self.dim() {
            if qubit_bit(i, target, n) == 0 && qubit_bit(i, control, n) == control_value {
                let j = i + stride;
                let (x, y) = (self.amplitudes[i], self.amplitudes[j]);
                self.amplitudes[i] = m[(0, 0)] * x + m[(0, 1)] * y;
                self.amplitudes[j] = m[(1, 0)] * x + m[(1, 1)] * y;
            }
        }
        Ok(())
    }

    /// Multiplies amplitude `b` by `exp(-i phases[b])`.
    pub fn apply_diagonal_phase(&mut self, phases: &[f64]) -> Result<()> {
        if phases.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: phases.len(),
            });
        }
        for (a, &phi) in self.amplitudes.iter_mut().zip(phases) {
            *a *= C64::from_polar(1.0, -phi);
        }
        Ok(())
    }

    /// Multiplies amplitude `b` by `factors[b >> shift]`; the factor table
    /// addresses the leading `n_qubits - shift` qubits.
    pub(crate) fn apply_leading_diagonal(&mut self, factors: &[C64], shift: usize) {
        debug_assert_eq!(factors.len() << shift, self.dim());
        if shift == 0 {
            for (a, f) in self.amplitudes.iter_mut().zip(factors) {
                *a *= f;
            }
        } else {
            for (chunk, f) in self.amplitudes.chunks_exact_mut(1 << shift).zip(factors) {
                chunk.iter_mut().for_each(|a| *a *= f);
            }
        }
    }

    /// Probability of reading 0 on `qubit` in the Z basis.
    pub fn probability_zero(&self, qubit: usize) -> Result<f64> {
        self.check_qubit(qubit)?;
        let stride = self.stride(qubit);
        Ok(self
            .amplitudes
            .chunks_exact(2 * stride)
            .flat_map(|block| block[..stride].iter())
            .map(|a| a.norm_sqr())
            .sum())
    }

    /// Projective Z measurement with Born-rule sampling; the state collapses
    /// onto the sampled branch and is renormalized.
    pub fn measure_qubit_z(&mut self, qubit: usize, rng: &mut SeededRng) -> Result<usize> {
        let p0 = self.probability_zero(qubit)?.clamp(0.0, 1.0);
        let mut outcome = usize::from(rng.uniform() >= p0);
        let p_branch = if outcome == 0 { p0 } else { 1.0 - p0 };
        if p_branch < DEGENERATE_BRANCH {
            outcome ^= 1;
        }
        self.project_z(qubit, outcome);
        Ok(outcome)
    }

    fn project_z(&mut self, qubit: usize, outcome: usize) {
        let stride = self.stride(qubit);
        for block in self.amplitudes.chunks_exact_mut(2 * stride) {
            let (lo, hi) = block.split_at_mut(stride);
            let dead = if outcome == 0 { hi } else { lo };
            dead.iter_mut().for_each(|a| *a = C64::new(0.0, 0.0));
        }
        self.renormalize();
    }

    fn renormalize(&mut self) {
        let norm = self.norm();
        self.amplitudes.iter_mut().for_each(|a| *a /= norm);
    }

    /// Samples one branch of a single-qubit operator set acting on `qubit`:
    /// branch `k` has weight `‖A_k ψ‖²`, and the state becomes `A_k ψ`
    /// renormalized. Returns the chosen index.
    pub(crate) fn apply_sampled_branch(
        &mut self,
        ops: &[CMatrix2],
        qubit: usize,
        rng: &mut SeededRng,
    ) -> Result<usize> {
        self.check_qubit(qubit)?;
        let stride = self.stride(qubit);
        let weights: Vec<f64> = ops
            .iter()
            .map(|m| {
                self.amplitudes
                    .chunks_exact(2 * stride)
                    .flat_map(|block| block[..stride].iter().zip(&block[stride..]))
                    .map(|(x, y)| {
                        (m[(0, 0)] * x + m[(0, 1)] * y).norm_sqr()
                            + (m[(1, 0)] * x + m[(1, 1)] * y).norm_sqr()
                    })
                    .sum::<f64>()
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let u = rng.uniform() * total;
        let mut acc = 0.0;
        let mut chosen = None;
        for (k, &w) in weights.iter().enumerate() {
            if w < DEGENERATE_BRANCH {
                continue;
            }
            acc += w;
            chosen = Some(k);
            if u < acc {
                break;
            }
        }
        let k = chosen.ok_or_else(|| Error::InvalidArgument("all branches vanish".into()))?;
        self.apply_matrix2_unchecked(&ops[k], qubit);
        self.renormalize();
        Ok(k)
    }

    /// Dense `|ψ⟩⟨ψ|`.
    pub fn outer_product(&self) -> DensityMatrix {
        let v = nalgebra::DVector::from_column_slice(&self.amplitudes);
        DensityMatrix::from_matrix_unchecked(self.n_qubits, &v * v.adjoint())
    }

    /// Reduced density matrix on `keep` (in the given order), computed
    /// directly from the amplitudes.
    pub fn reduced_density_matrix(&self, keep: &[usize]) -> Result<DensityMatrix> {
        let n = self.n_qubits;
        validate_keep(keep, n)?;
        let traced: Vec<usize> = (0..n).filter(|q| !keep.contains(q)).collect();
        let k = keep.len();
        let env_dim = 1usize << traced.len();
        // full index for (kept pattern, environment pattern)
        let compose = |sub: usize, env: usize| -> usize {
            let mut idx = 0usize;
            for (pos, &q) in keep.iter().enumerate() {
                let bit = (sub >> (k - 1 - pos)) & 1;
                idx |= bit << (n - 1 - q);
            }
            for (pos, &q) in traced.iter().enumerate() {
                let bit = (env >> (traced.len() - 1 - pos)) & 1;
                idx |= bit << (n - 1 - q);
            }
            idx
        };
        let sub_dim = 1usize << k;
        let mut rho = CMatrix::zeros(sub_dim, sub_dim);
        let index_table: Vec<Vec<usize>> = (0..sub_dim)
            .map(|s| (0..env_dim).map(|e| compose(s, e)).collect())
            .collect();
        for r in 0..sub_dim {
            for col in r..sub_dim {
                let val: C64 = index_table[r]
                    .iter()
                    .zip(&index_table[col])
                    .map(|(&i, &j)| self.amplitudes[i] * self.amplitudes[j].conj())
                    .sum();
                rho[(r, col)] = val;
                rho[(col, r)] = val.conj();
            }
        }
        Ok(DensityMatrix::from_matrix_unchecked(k, rho))
    }
}

pub(crate) fn validate_keep(keep: &[usize], n_qubits: usize) -> Result<()> {
    if keep.is_empty() {
        return invalid("keep list is empty");
    }
    for (i, &q) in keep.iter().enumerate() {
        if q >= n_qubits {
            return invalid(format!("kept qubit {q} out of range for {n_qubits} qubits"));
        }
        if keep[..i].contains(&q) {
            return invalid(format!("kept qubit {q} listed twice"));
        }
    }
    Ok(())
}
