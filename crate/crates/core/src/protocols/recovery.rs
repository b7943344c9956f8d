use super::{collect_ordered, CircuitSource};
use crate::error::{invalid, Result};
use crate::model::{evolve_backward, evolve_forward, CircuitRealization, ModelParams, Scrambler};
use crate::quantum::{apply_channel, state_fidelity, CMatrix, CMatrix2, DensityMatrix, KrausChannel, PureState};
use crate::rng::{stream, SeededRng};
use crate::stats::mean_stderr;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;

/// Configuration of the loop-echo recovery protocol.
#[derive(Debug, Clone)]
pub struct RecoverySpec {
    /// Qubit whose fidelity with its initial `|0⟩` is measured.
    pub target_qubit: usize,
    /// Qubit the perturbation acts on.
    pub perturb_qubit: usize,
    /// Single-qubit perturbation channel.
    pub perturbation: KrausChannel,
    pub t1_max: usize,
    pub t2_max: usize,
    pub trajectories: usize,
    /// Keep one circuit for all trajectories instead of averaging over circuits.
    pub fixed_circuit: bool,
}

impl RecoverySpec {
    /// Target qubit 1, perturbation qubit 2, Z-basis projective measurement.
    pub fn new(t_max: usize, trajectories: usize) -> Self {
        Self {
            target_qubit: 1,
            perturb_qubit: 2,
            perturbation: KrausChannel::z_measure(),
            t1_max: t_max,
            t2_max: t_max,
            trajectories,
            fixed_circuit: false,
        }
    }

    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        if self.target_qubit >= n_qubits || self.perturb_qubit >= n_qubits {
            return invalid(format!(
                "target {} / perturbation {} qubit out of range for {n_qubits} qubits",
                self.target_qubit, self.perturb_qubit
            ));
        }
        if self.target_qubit == self.perturb_qubit {
            return invalid("target and perturbation qubits must differ");
        }
        if self.perturbation.dim() != 2 {
            return invalid("perturbation must be a single-qubit channel");
        }
        KrausChannel::new(self.perturbation.operators().to_vec(), self.perturbation.label())?;
        if self.trajectories == 0 {
            return invalid("trajectories must be ≥ 1");
        }
        Ok(())
    }

    fn branches(&self) -> Vec<CMatrix2> {
        self.perturbation.ket_branches().expect("validated single-qubit channel")
    }
}

/// Fidelity time series, mean ± standard error per time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityCurve {
    pub times: Vec<usize>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    #[serde(default)]
    pub meta: BTreeMap<String, Value>,
}

impl FidelityCurve {
    pub fn new(times: Vec<usize>, mean: Vec<f64>, stderr: Vec<f64>) -> Result<Self> {
        if times.len() != mean.len() || times.len() != stderr.len() {
            return invalid("curve columns have different lengths");
        }
        if stderr.iter().any(|s| !(*s >= 0.0)) {
            return invalid("stderr must be nonnegative");
        }
        Ok(Self {
            times,
            mean,
            stderr,
            meta: BTreeMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Fidelity for every `(t1, t2)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryScan {
    pub t1_values: Vec<usize>,
    pub t2_values: Vec<usize>,
    /// `fidelity[i][j]` belongs to `(t1_values[i], t2_values[j])`.
    pub fidelity: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
}

fn target_fidelity(state: &PureState, target: usize) -> Result<f64> {
    let reduced = state.reduced_density_matrix(&[target])?;
    let initial = PureState::zero(1)?.outer_product();
    state_fidelity(&reduced, &initial)
}

fn apply_perturbation(state: &mut PureState, spec: &RecoverySpec, branches: &[CMatrix2], rng: &mut SeededRng) -> Result<()> {
    state.apply_sampled_branch(branches, spec.perturb_qubit, rng).map(|_| ())
}

/// One trajectory of the equal-time loop: `|0…0⟩`, `t` forward layers, a
/// sampled branch of the perturbation, `t` backward steps, then the target
/// qubit's overlap with `|0⟩`.
pub fn recovery_trajectory(circ: &CircuitRealization, spec: &RecoverySpec, t: usize, rng: &mut SeededRng) -> Result<f64> {
    let branches = spec.branches();
    let mut state = PureState::zero(circ.params().n_qubits)?;
    evolve_forward(&mut state, circ, t)?;
    apply_perturbation(&mut state, spec, &branches, rng)?;
    evolve_backward(&mut state, circ, t)?;
    target_fidelity(&state, spec.target_qubit)
}

fn meta_for(params: &ModelParams, spec: &RecoverySpec, protocol: &str) -> BTreeMap<String, Value> {
    let mut meta = BTreeMap::new();
    meta.insert("protocol".into(), Value::from(protocol));
    meta.insert("n_qubits".into(), Value::from(params.n_qubits));
    meta.insert("g".into(), Value::from(params.g));
    meta.insert("p_err".into(), Value::from(params.p_err));
    meta.insert("target_qubit".into(), Value::from(spec.target_qubit));
    meta.insert("perturb_qubit".into(), Value::from(spec.perturb_qubit));
    meta.insert("perturbation".into(), Value::from(spec.perturbation.label()));
    meta.insert("trajectories".into(), Value::from(spec.trajectories));
    meta.insert("fixed_circuit".into(), Value::from(spec.fixed_circuit));
    meta
}

fn curve_from_samples(samples: Vec<Vec<f64>>, meta: BTreeMap<String, Value>) -> Result<FidelityCurve> {
    let stats: Vec<_> = samples.iter().map(|s| mean_stderr(s)).collect();
    let mut curve = FidelityCurve::new(
        (0..samples.len()).collect(),
        stats.iter().map(|s| s.mean).collect(),
        stats.iter().map(|s| s.stderr).collect(),
    )?;
    curve.meta = meta;
    Ok(curve)
}

/// Equal-time recovery fidelity `F(t)` for `t = 0..=t1_max`.
pub fn run_recovery(params: &ModelParams, spec: &RecoverySpec, rng: &SeededRng) -> Result<FidelityCurve> {
    spec.validate(params.n_qubits)?;
    let scrambler = Scrambler::new(*params)?;
    let source = CircuitSource::new(spec.fixed_circuit, &scrambler, spec.t1_max, 0, rng);
    let samples = (0..=spec.t1_max)
        .map(|t| {
            collect_ordered(spec.trajectories, |i| {
                let mut traj_rng = rng.fork(stream::id(stream::TRAJECTORY, t as u64, i as u64));
                let circ = source.realize(&scrambler, t, 0, &mut traj_rng);
                recovery_trajectory(&circ, spec, t, &mut traj_rng)
            })
            .into_iter()
            .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    curve_from_samples(samples, meta_for(params, spec, "recovery"))
}

/// One trajectory of the asymmetric scan at fixed `t1`: fidelities after each
/// of `0..=t2_max` backward steps.
fn scan_trajectory(circ: &CircuitRealization, spec: &RecoverySpec, t1: usize, rng: &mut SeededRng) -> Result<Vec<f64>> {
    let branches = spec.branches();
    let mut state = PureState::zero(circ.params().n_qubits)?;
    evolve_forward(&mut state, circ, t1)?;
    apply_perturbation(&mut state, spec, &branches, rng)?;
    let mut out = Vec::with_capacity(spec.t2_max + 1);
    out.push(target_fidelity(&state, spec.target_qubit)?);
    for step in 0..spec.t2_max {
        circ.backward_step(&mut state, step)?;
        out.push(target_fidelity(&state, spec.target_qubit)?);
    }
    Ok(out)
}

/// Fidelity after `t1` forward and `t2` backward layers for every pair with
/// `t1 ≤ t1_max`, `t2 ≤ t2_max`. Backward steps past `t1` run independently
/// sampled layers.
pub fn run_recovery_scan(params: &ModelParams, spec: &RecoverySpec, rng: &SeededRng) -> Result<RecoveryScan> {
    spec.validate(params.n_qubits)?;
    if spec.t1_max < 1 || spec.t2_max < 1 {
        return invalid("t1_max and t2_max must be ≥ 1");
    }
    let scrambler = Scrambler::new(*params)?;
    let source = CircuitSource::new(spec.fixed_circuit, &scrambler, spec.t1_max, spec.t2_max, rng);
    let mut fidelity = Vec::with_capacity(spec.t1_max + 1);
    let mut stderr = Vec::with_capacity(spec.t1_max + 1);
    for t1 in 0..=spec.t1_max {
        let extra = spec.t2_max.saturating_sub(t1);
        let rows = collect_ordered(spec.trajectories, |i| {
            let mut traj_rng = rng.fork(stream::id(stream::SCAN, t1 as u64, i as u64));
            let circ = source.realize(&scrambler, t1, extra, &mut traj_rng);
            scan_trajectory(&circ, spec, t1, &mut traj_rng)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let (mut f_row, mut e_row) = (Vec::new(), Vec::new());
        for t2 in 0..=spec.t2_max {
            let column: Vec<f64> = rows.iter().map(|r| r[t2]).collect();
            let s = mean_stderr(&column);
            f_row.push(s.mean);
            e_row.push(s.stderr);
        }
        fidelity.push(f_row);
        stderr.push(e_row);
    }
    Ok(RecoveryScan {
        t1_values: (0..=spec.t1_max).collect(),
        t2_values: (0..=spec.t2_max).collect(),
        fidelity,
        stderr,
    })
}

/// One coincidence trajectory: Z-measure the target, run the loop, then
/// repeat the final Z measurement `shots` times on the output state and
/// return the fraction agreeing with the first outcome.
pub fn coincidence_trajectory(
    circ: &CircuitRealization,
    spec: &RecoverySpec,
    t: usize,
    shots: usize,
    rng: &mut SeededRng,
) -> Result<f64> {
    let branches = spec.branches();
    let mut state = PureState::zero(circ.params().n_qubits)?;
    let first = state.measure_qubit_z(spec.target_qubit, rng)?;
    evolve_forward(&mut state, circ, t)?;
    apply_perturbation(&mut state, spec, &branches, rng)?;
    evolve_backward(&mut state, circ, t)?;
    let p0 = state.probability_zero(spec.target_qubit)?;
    let p_same = if first == 0 { p0 } else { 1.0 - p0 };
    let hits = (0..shots).filter(|_| rng.uniform() < p_same).count();
    Ok(hits as f64 / shots as f64)
}

/// Coincidence rate of pre- and post-loop Z measurements of the target qubit.
pub fn run_coincidence(params: &ModelParams, spec: &RecoverySpec, shots: usize, rng: &SeededRng) -> Result<FidelityCurve> {
    spec.validate(params.n_qubits)?;
    if shots == 0 {
        return invalid("shots must be ≥ 1");
    }
    let scrambler = Scrambler::new(*params)?;
    let source = CircuitSource::new(spec.fixed_circuit, &scrambler, spec.t1_max, 0, rng);
    let samples = (0..=spec.t1_max)
        .map(|t| {
            collect_ordered(spec.trajectories, |i| {
                let mut traj_rng = rng.fork(stream::id(stream::COINCIDENCE, t as u64, i as u64));
                let circ = source.realize(&scrambler, t, 0, &mut traj_rng);
                coincidence_trajectory(&circ, spec, t, shots, &mut traj_rng)
            })
            .into_iter()
            .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut meta = meta_for(params, spec, "coincidence");
    meta.insert("shots".into(), Value::from(shots));
    curve_from_samples(samples, meta)
}

/// Dense density-matrix evaluation of the loop for one realization:
/// `B Λ(F ρ F†) B†` with `F` the first `t` forward layers, `B` the first `t`
/// backward steps and `Λ` the perturbation embedded on `perturb_qubit`.
pub fn exact_loop_state(
    circ: &CircuitRealization,
    perturbation: &KrausChannel,
    perturb_qubit: usize,
    rho: &DensityMatrix,
    t: usize,
) -> Result<DensityMatrix> {
    let n = circ.params().n_qubits;
    if rho.n_qubits() != n {
        return invalid(format!("state has {} qubits, model has {n}", rho.n_qubits()));
    }
    let forward = circ.dense_forward_unitary(t)?;
    let backward = circ.dense_backward_unitary(t)?;
    let evolved = DensityMatrix::new(n, &forward * rho.elements() * forward.adjoint())?;
    let perturbed = apply_channel(&evolved, &perturbation.embed(perturb_qubit, n)?)?;
    let out: CMatrix = &backward * perturbed.elements() * backward.adjoint();
    DensityMatrix::new(n, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(t_max: usize, trajectories: usize) -> RecoverySpec {
        RecoverySpec {
            target_qubit: 0,
            perturb_qubit: 1,
            ..RecoverySpec::new(t_max, trajectories)
        }
    }

    #[test]
    fn t_zero_is_perfect() {
        let params = ModelParams::new(4, 1.0, 0.05).unwrap();
        let curve = run_recovery(&params, &spec(0, 50), &SeededRng::new(1, 0)).unwrap();
        assert_eq!(curve.mean, vec![1.0]);
        assert_eq!(curve.stderr, vec![0.0]);
    }

    #[test]
    fn identity_perturbation_without_noise_echoes_perfectly() {
        let params = ModelParams::new(4, 1.0, 0.0).unwrap();
        let s = RecoverySpec {
            perturbation: KrausChannel::identity(2),
            ..spec(8, 20)
        };
        let curve = run_recovery(&params, &s, &SeededRng::new(2, 0)).unwrap();
        assert!(curve.mean.iter().all(|f| (f - 1.0).abs() < 1e-10));
    }

    #[test]
    fn spec_validation() {
        let params = ModelParams::new(3, 1.0, 0.0).unwrap();
        let rng = SeededRng::new(3, 0);
        let same = RecoverySpec {
            target_qubit: 1,
            perturb_qubit: 1,
            ..RecoverySpec::new(2, 5)
        };
        assert!(run_recovery(&params, &same, &rng).is_err());
        let out_of_range = RecoverySpec {
            perturb_qubit: 3,
            ..RecoverySpec::new(2, 5)
        };
        assert!(run_recovery(&params, &out_of_range, &rng).is_err());
        let two_qubit = RecoverySpec {
            perturbation: KrausChannel::identity(4),
            ..RecoverySpec::new(2, 5)
        };
        assert!(run_recovery(&params, &two_qubit, &rng).is_err());
        let mut scan = RecoverySpec::new(0, 5);
        scan.t2_max = 3;
        assert!(run_recovery_scan(&params, &scan, &rng).is_err());
        assert!(run_coincidence(&params, &RecoverySpec::new(2, 5), 0, &rng).is_err());
    }

    #[test]
    fn scan_origin_and_shape() {
        let params = ModelParams::new(4, 1.0, 0.0).unwrap();
        let mut s = spec(3, 40);
        s.t2_max = 5;
        let scan = run_recovery_scan(&params, &s, &SeededRng::new(4, 0)).unwrap();
        assert_eq!(scan.fidelity.len(), 4);
        assert!(scan.fidelity.iter().all(|row| row.len() == 6));
        assert_eq!(scan.fidelity[0][0], 1.0);
    }

    #[test]
    fn coincidence_at_t_zero_is_one() {
        let params = ModelParams::new(4, 1.0, 0.1).unwrap();
        let curve = run_coincidence(&params, &spec(0, 30), 16, &SeededRng::new(5, 0)).unwrap();
        assert_eq!(curve.mean, vec![1.0]);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let params = ModelParams::new(4, 1.0, 0.05).unwrap();
        let s = spec(4, 64);
        let rng = SeededRng::new(6, 0);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| run_recovery(&params, &s, &rng)).unwrap();
        let b = four.install(|| run_recovery(&params, &s, &rng)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fixed_circuit_mode_runs() {
        let params = ModelParams::new(4, 1.0, 0.0).unwrap();
        let s = RecoverySpec {
            fixed_circuit: true,
            perturbation: KrausChannel::identity(2),
            ..spec(5, 10)
        };
        let curve = run_recovery(&params, &s, &SeededRng::new(7, 0)).unwrap();
        assert!(curve.mean.iter().all(|f| (f - 1.0).abs() < 1e-10));
    }
}
