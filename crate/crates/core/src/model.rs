//! The layered fast-scrambling circuit.
//!
//! One layer applies an independent Haar-random single-qubit gate to every
//! qubit, each optionally followed by Pauli `X` and then Pauli `Z` errors, and
//! finishes with the all-to-all entangler `exp(-i g/(2√n) Σ_{i<j} Z_i Z_j)`.
//! Backward evolution runs the exact inverse layers in reverse order, with its
//! own independent error draws, and continues into independently sampled extra
//! layers once the forward layers are exhausted.
//!
//! Evolution accepts registers wider than the model: the model acts on the
//! leading `n_qubits` qubits and any trailing qubits (an ancilla) are spectators.

use crate::error::{invalid, Result};
use crate::quantum::{haar_single_qubit, CMatrix, PureState, SingleQubitGate, C64};
use crate::rng::SeededRng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n_qubits: usize,
    /// Entangling strength.
    pub g: f64,
    /// Probability of each Pauli error type after each single-qubit gate.
    pub p_err: f64,
}

impl ModelParams {
    pub fn new(n_qubits: usize, g: f64, p_err: f64) -> Result<Self> {
        let params = Self { n_qubits, g, p_err };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=24).contains(&self.n_qubits) {
            return invalid(format!("n_qubits must be in 2..=24, got {}", self.n_qubits));
        }
        if !(self.g.is_finite() && self.g >= 0.0) {
            return invalid(format!("g must be finite and ≥ 0, got {}", self.g));
        }
        if !(0.0..=1.0).contains(&self.p_err) {
            return invalid(format!("p_err must lie in [0, 1], got {}", self.p_err));
        }
        Ok(())
    }
}

/// Per-basis-state phases of the global entangler.
#[derive(Debug, Clone, PartialEq)]
pub struct EntanglerTable {
    n_qubits: usize,
    phases: Vec<f64>,
    forward: Vec<C64>,
    inverse: Vec<C64>,
}

/// `phases[b] = g/(2√n) · Σ_{i<j} z_i z_j` with `z_i = +1` for bit 0 and `-1`
/// for bit 1, evaluated through `Σ_{i<j} z_i z_j = (s² - n)/2`, `s = Σ z_i`.
pub fn build_entangler(params: &ModelParams) -> EntanglerTable {
    let n = params.n_qubits;
    let coupling = params.g / (2.0 * (n as f64).sqrt());
    let phases: Vec<f64> = (0..1usize << n)
        .map(|b| {
            let ones = b.count_ones() as i64;
            let s = n as i64 - 2 * ones;
            let pair_sum = (s * s - n as i64) / 2;
            coupling * pair_sum as f64
        })
        .collect();
    let forward = phases.iter().map(|&p| C64::from_polar(1.0, -p)).collect();
    let inverse = phases.iter().map(|&p| C64::from_polar(1.0, p)).collect();
    EntanglerTable {
        n_qubits: n,
        phases,
        forward,
        inverse,
    }
}

impl EntanglerTable {
    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn apply(&self, state: &mut PureState) {
        state.apply_leading_diagonal(&self.forward, state.n_qubits() - self.n_qubits);
    }

    /// The entangler with negated phases.
    pub fn apply_inverse(&self, state: &mut PureState) {
        state.apply_leading_diagonal(&self.inverse, state.n_qubits() - self.n_qubits);
    }
}

/// Pauli errors that fire after one single-qubit gate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PauliFlip {
    pub x: bool,
    pub z: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub gates: Vec<SingleQubitGate>,
}

impl Layer {
    fn sample(n_qubits: usize, rng: &mut SeededRng) -> Self {
        Self {
            gates: (0..n_qubits).map(|_| haar_single_qubit(rng)).collect(),
        }
    }
}

/// Model parameters plus the precomputed entangler; samples realizations.
#[derive(Debug, Clone)]
pub struct Scrambler {
    params: ModelParams,
    entangler: Arc<EntanglerTable>,
}

impl Scrambler {
    pub fn new(params: ModelParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            entangler: Arc::new(build_entangler(&params)),
            params,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn entangler(&self) -> &EntanglerTable {
        &self.entangler
    }

    /// Draws gates for `depth_forward` layers and `depth_backward` extra
    /// backward layers, then independent error flags for every forward layer
    /// and every possible backward step.
    pub fn sample(&self, depth_forward: usize, depth_backward: usize, rng: &mut SeededRng) -> CircuitRealization {
        let n = self.params.n_qubits;
        let forward_layers = (0..depth_forward).map(|_| Layer::sample(n, rng)).collect();
        let extra_layers = (0..depth_backward).map(|_| Layer::sample(n, rng)).collect();
        let mut circ = CircuitRealization {
            params: self.params,
            entangler: Arc::clone(&self.entangler),
            forward_layers,
            extra_layers,
            forward_errors: Vec::new(),
            backward_errors: Vec::new(),
        };
        circ.resample_errors(rng);
        circ
    }
}

/// Convenience wrapper around [`Scrambler::sample`].
pub fn sample_circuit(
    params: &ModelParams,
    depth_forward: usize,
    depth_backward: usize,
    rng: &mut SeededRng,
) -> Result<CircuitRealization> {
    Ok(Scrambler::new(*params)?.sample(depth_forward, depth_backward, rng))
}

fn sample_flags(n: usize, p: f64, rng: &mut SeededRng) -> Vec<PauliFlip> {
    (0..n)
        .map(|_| PauliFlip {
            x: rng.bernoulli(p),
            z: rng.bernoulli(p),
        })
        .collect()
}

/// A concrete sampled instance of the noisy layered circuit.
#[derive(Debug, Clone)]
pub struct CircuitRealization {
    params: ModelParams,
    entangler: Arc<EntanglerTable>,
    forward_layers: Vec<Layer>,
    extra_layers: Vec<Layer>,
    forward_errors: Vec<Vec<PauliFlip>>,
    backward_errors: Vec<Vec<PauliFlip>>,
}

impl CircuitRealization {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn depth_forward(&self) -> usize {
        self.forward_layers.len()
    }

    pub fn depth_backward(&self) -> usize {
        self.extra_layers.len()
    }

    pub fn forward_layers(&self) -> &[Layer] {
        &self.forward_layers
    }

    pub fn extra_layers(&self) -> &[Layer] {
        &self.extra_layers
    }

    pub fn forward_errors(&self) -> &[Vec<PauliFlip>] {
        &self.forward_errors
    }

    /// Flags for backward step `k`; one entry per forward layer plus one per
    /// extra layer.
    pub fn backward_errors(&self) -> &[Vec<PauliFlip>] {
        &self.backward_errors
    }

    pub fn entangler(&self) -> &EntanglerTable {
        &self.entangler
    }

    /// Redraws every error flag while keeping the gates.
    pub fn resample_errors(&mut self, rng: &mut SeededRng) {
        let (n, p) = (self.params.n_qubits, self.params.p_err);
        let steps_back = self.forward_layers.len() + self.extra_layers.len();
        self.forward_errors = (0..self.forward_layers.len()).map(|_| sample_flags(n, p, rng)).collect();
        self.backward_errors = (0..steps_back).map(|_| sample_flags(n, p, rng)).collect();
    }

    /// The realization restricted to its first `depth_forward` forward layers
    /// and first `depth_backward` extra layers.
    pub fn truncated(&self, depth_forward: usize, depth_backward: usize) -> Result<Self> {
        if depth_forward > self.depth_forward() || depth_backward > self.depth_backward() {
            return invalid(format!(
                "cannot truncate a ({}, {}) realization to ({depth_forward}, {depth_backward})",
                self.depth_forward(),
                self.depth_backward()
            ));
        }
        // backward step k < depth_forward undoes forward layer depth_forward-1-k;
        // keep the flags attached to those layers
        let full_fwd = self.depth_forward();
        let mut backward_errors: Vec<Vec<PauliFlip>> = (0..depth_forward)
            .map(|k| self.backward_errors[full_fwd - depth_forward + k].clone())
            .collect();
        backward_errors.extend(self.backward_errors[full_fwd..full_fwd + depth_backward].iter().cloned());
        Ok(Self {
            params: self.params,
            entangler: Arc::clone(&self.entangler),
            forward_layers: self.forward_layers[..depth_forward].to_vec(),
            extra_layers: self.extra_layers[..depth_backward].to_vec(),
            forward_errors: self.forward_errors[..depth_forward].to_vec(),
            backward_errors,
        })
    }

    fn check_register(&self, state: &PureState) -> Result<()> {
        if state.n_qubits() < self.params.n_qubits {
            return invalid(format!(
                "state has {} qubits but the model needs {}",
                state.n_qubits(),
                self.params.n_qubits
            ));
        }
        Ok(())
    }

    fn apply_flips(state: &mut PureState, qubit: usize, flip: PauliFlip) {
        if flip.x {
            state.apply_x_unchecked(qubit);
        }
        if flip.z {
            state.apply_z_unchecked(qubit);
        }
    }

    fn dense_from_steps(&self, apply: impl Fn(&mut PureState) -> Result<()>) -> Result<CMatrix> {
        let n = self.params.n_qubits;
        let d = 1usize << n;
        let mut u = CMatrix::zeros(d, d);
        for col in 0..d {
            let mut psi = PureState::basis(n, col)?;
            apply(&mut psi)?;
            u.column_mut(col).copy_from_slice(psi.amplitudes());
        }
        Ok(u)
    }

    /// Dense matrix of the first `layers` forward layers, error flags included.
    pub fn dense_forward_unitary(&self, layers: usize) -> Result<CMatrix> {
        self.dense_from_steps(|psi| evolve_forward(psi, self, layers))
    }

    /// Dense matrix of the first `layers` backward steps, error flags included.
    pub fn dense_backward_unitary(&self, layers: usize) -> Result<CMatrix> {
        self.dense_from_steps(|psi| evolve_backward(psi, self, layers))
    }

    /// Applies forward layer `index`.
    pub fn forward_step(&self, state: &mut PureState, index: usize) -> Result<()> {
        self.check_register(state)?;
        if index >= self.depth_forward() {
            return invalid(format!("forward layer {index} beyond depth {}", self.depth_forward()));
        }
        let layer = &self.forward_layers[index];
        for (q, (gate, &flip)) in layer.gates.iter().zip(&self.forward_errors[index]).enumerate() {
            state.apply_matrix2_unchecked(gate.matrix(), q);
            Self::apply_flips(state, q, flip);
        }
        self.entangler.apply(state);
        Ok(())
    }

    /// Applies backward step `step` (0-based). Steps below `depth_forward`
    /// invert forward layers from the last one down; later steps invert the
    /// extra layers in order.
    pub fn backward_step(&self, state: &mut PureState, step: usize) -> Result<()> {
        self.check_register(state)?;
        let fwd = self.depth_forward();
        let layer = if step < fwd {
            &self.forward_layers[fwd - 1 - step]
        } else if step < fwd + self.depth_backward() {
            &self.extra_layers[step - fwd]
        } else {
            return invalid(format!(
                "backward step {step} beyond available {} layers",
                fwd + self.depth_backward()
            ));
        };
        self.entangler.apply_inverse(state);
        for (q, (gate, &flip)) in layer.gates.iter().zip(&self.backward_errors[step]).enumerate() {
            state.apply_matrix2_unchecked(&gate.matrix().adjoint(), q);
            Self::apply_flips(state, q, flip);
        }
        Ok(())
    }
}

/// Runs the first `layers` noisy forward layers.
pub fn evolve_forward(state: &mut PureState, circ: &CircuitRealization, layers: usize) -> Result<()> {
    if layers > circ.depth_forward() {
        return invalid(format!(
            "requested {layers} forward layers but the realization has {}",
            circ.depth_forward()
        ));
    }
    (0..layers).try_for_each(|k| circ.forward_step(state, k))
}

/// Runs `layers` noisy backward steps.
pub fn evolve_backward(state: &mut PureState, circ: &CircuitRealization, layers: usize) -> Result<()> {
    let available = circ.depth_forward() + circ.depth_backward();
    if layers > available {
        return invalid(format!(
            "requested {layers} backward layers but the realization has {available}"
        ));
    }
    (0..layers).try_for_each(|k| circ.backward_step(state, k))
}
