use super::{collect_ordered, CircuitSource};
use crate::error::{invalid, Result};
use crate::model::{evolve_backward, evolve_forward, CircuitRealization, ModelParams, Scrambler};
use crate::quantum::{PureState, SingleQubitGate, C64};
use crate::rng::{stream, SeededRng};
use crate::stats::{mean_stderr, MeanStderr};
use serde::{Deserialize, Serialize};

/// Configuration of the interferometric OTOC measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OtocSpec {
    /// Qubit carrying the ancilla-controlled `X` (operator `V`).
    pub probe_qubit: usize,
    /// Qubit receiving the intermediate `X` (operator `W`).
    pub butterfly_qubit: usize,
    pub depth_max: usize,
    pub trajectories: usize,
    #[serde(default)]
    pub fixed_circuit: bool,
}

impl OtocSpec {
    pub fn new(depth_max: usize, trajectories: usize) -> Self {
        Self {
            probe_qubit: 1,
            butterfly_qubit: 2,
            depth_max,
            trajectories,
            fixed_circuit: false,
        }
    }

    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        if self.probe_qubit >= n_qubits || self.butterfly_qubit >= n_qubits {
            return invalid(format!(
                "probe {} / butterfly {} qubit out of range for {n_qubits} qubits",
                self.probe_qubit, self.butterfly_qubit
            ));
        }
        if self.probe_qubit == self.butterfly_qubit {
            return invalid("probe and butterfly qubits must differ");
        }
        if self.trajectories == 0 {
            return invalid("trajectories must be ≥ 1");
        }
        Ok(())
    }
}

/// Complex OTOC estimate per time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OtocCurve {
    pub times: Vec<usize>,
    pub re: Vec<MeanStderr>,
    pub im: Vec<MeanStderr>,
}

impl OtocCurve {
    pub fn magnitude(&self) -> Vec<f64> {
        self.re.iter().zip(&self.im).map(|(r, i)| r.mean.hypot(i.mean)).collect()
    }
}

/// One interferometric OTOC shot on a joint register of the `n` system qubits
/// followed by one ancilla:
///
/// ancilla in `|+⟩`, `V` on the probe if the ancilla is 0, `t` forward layers,
/// `W` on the butterfly qubit, `t` backward layers, `V` on the probe if the
/// ancilla is 1. Returns `⟨σ_x⟩ + i⟨-σ_y⟩` of the ancilla, which for a
/// noiseless echo equals `⟨W(t) V W(t) V⟩` on `|0…0⟩`.
pub fn otoc_trajectory(circ: &CircuitRealization, spec: &OtocSpec, t: usize) -> Result<C64> {
    let n = circ.params().n_qubits;
    let ancilla = n;
    let x = SingleQubitGate::pauli_x();
    let mut state = PureState::zero(n + 1)?;
    state.apply_single_qubit_gate(&SingleQubitGate::hadamard(), ancilla)?;
    state.apply_controlled_gate(&x, spec.probe_qubit, ancilla, 0)?;
    evolve_forward(&mut state, circ, t)?;
    state.apply_single_qubit_gate(&x, spec.butterfly_qubit)?;
    evolve_backward(&mut state, circ, t)?;
    state.apply_controlled_gate(&x, spec.probe_qubit, ancilla, 1)?;
    let rho = state.reduced_density_matrix(&[ancilla])?;
    // ⟨σ_x⟩ = 2 Re ρ01, ⟨σ_y⟩ = -2 Im ρ01
    Ok(rho.elements()[(0, 1)] * 2.0)
}

/// OTOC curve for `t = 0..=depth_max` averaged over trajectories.
pub fn run_otoc(params: &ModelParams, spec: &OtocSpec, rng: &SeededRng) -> Result<OtocCurve> {
    spec.validate(params.n_qubits)?;
    let scrambler = Scrambler::new(*params)?;
    let source = CircuitSource::new(spec.fixed_circuit, &scrambler, spec.depth_max, 0, rng);
    let mut re = Vec::with_capacity(spec.depth_max + 1);
    let mut im = Vec::with_capacity(spec.depth_max + 1);
    for t in 0..=spec.depth_max {
        let values = collect_ordered(spec.trajectories, |i| {
            let mut traj_rng = rng.fork(stream::id(stream::OTOC, t as u64, i as u64));
            let circ = source.realize(&scrambler, t, 0, &mut traj_rng);
            otoc_trajectory(&circ, spec, t)
        })
        .into_iter()
        .collect::<Result<Vec<C64>>>()?;
        re.push(mean_stderr(&values.iter().map(|z| z.re).collect::<Vec<_>>()));
        im.push(mean_stderr(&values.iter().map(|z| z.im).collect::<Vec<_>>()));
    }
    Ok(OtocCurve {
        times: (0..=spec.depth_max).collect(),
        re,
        im,
    })
}
