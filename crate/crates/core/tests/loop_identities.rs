use nalgebra::DMatrix;
use scrambench::model::{sample_circuit, ModelParams};
use scrambench::protocols::{
    exact_loop_state, recovery_trajectory, run_coincidence, run_recovery, RecoverySpec,
};
use scrambench::quantum::{partial_trace, state_fidelity, CMatrix, KrausChannel, PureState, C64};
use scrambench::SeededRng;

fn trace(m: &CMatrix) -> C64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

/// `Σ_k Tr[M_k†(t) ρ M_k(t) ρ]` with `M_k(t) = U† M_k U`.
fn heisenberg_sum(u: &CMatrix, channel: &KrausChannel, rho: &CMatrix) -> f64 {
    channel
        .operators()
        .iter()
        .map(|m| {
            let mt: CMatrix = u.adjoint() * m * u;
            trace(&(mt.adjoint() * rho * &mt * rho)).re
        })
        .sum()
}

#[test]
fn schroedinger_loop_matches_heisenberg_sum() {
    let mut rng = SeededRng::new(11, 0);
    for n in 2..=3 {
        let params = ModelParams::new(n, 1.0, 0.0).unwrap();
        let circ = sample_circuit(&params, 8, 0, &mut rng).unwrap();
        let rho = PureState::zero(n).unwrap().outer_product();
        for (perturb_qubit, channel) in [(1, KrausChannel::z_measure()), (n - 1, KrausChannel::depolarizing())] {
            let embedded = channel.embed(perturb_qubit, n).unwrap();
            for t in 0..=8 {
                let sub = circ.truncated(t, 0).unwrap();
                let out = exact_loop_state(&sub, &channel, perturb_qubit, &rho, t).unwrap();
                let schroedinger = state_fidelity(&out, &rho).unwrap();
                let u = sub.dense_forward_unitary(t).unwrap();
                let heisenberg = heisenberg_sum(&u, &embedded, rho.elements());
                assert!(
                    (schroedinger - heisenberg).abs() < 1e-10,
                    "n={n} t={t}: {schroedinger} vs {heisenberg}"
                );
            }
        }
    }
}

#[test]
fn dense_loop_is_hermitian_and_trace_preserving() {
    let mut rng = SeededRng::new(12, 0);
    let params = ModelParams::new(3, 1.5, 0.2).unwrap();
    let circ = sample_circuit(&params, 6, 0, &mut rng).unwrap();
    let rho = PureState::zero(3).unwrap().outer_product();
    let out = exact_loop_state(&circ, &KrausChannel::z_measure(), 2, &rho, 6).unwrap();
    assert!((out.trace() - 1.0).abs() < 1e-10);
    assert!(out.is_hermitian(1e-10));
}

#[test]
fn trajectory_average_converges_to_dense_loop() {
    let params = ModelParams::new(3, 1.0, 0.0).unwrap();
    let mut rng = SeededRng::new(13, 0);
    let circ = sample_circuit(&params, 5, 0, &mut rng).unwrap();
    let spec = RecoverySpec {
        target_qubit: 0,
        perturb_qubit: 2,
        ..RecoverySpec::new(5, 1)
    };
    let rho = PureState::zero(3).unwrap().outer_product();
    let exact = exact_loop_state(&circ, &spec.perturbation, 2, &rho, 5).unwrap();
    let target = partial_trace(&exact, &[0]).unwrap();
    let want = state_fidelity(&target, &PureState::zero(1).unwrap().outer_product()).unwrap();

    let samples: Vec<f64> = (0..20_000)
        .map(|i| recovery_trajectory(&circ, &spec, 5, &mut rng.fork(i)).unwrap())
        .collect();
    let stats = scrambench::stats::mean_stderr(&samples);
    assert!(
        (stats.mean - want).abs() < 4.0 * stats.stderr + 1e-12,
        "{} ± {} vs {want}",
        stats.mean,
        stats.stderr
    );
}

#[test]
fn coincidence_and_recovery_estimators_agree() {
    let params = ModelParams::new(5, 1.0, 0.02).unwrap();
    let spec = RecoverySpec::new(12, 600);
    let rng = SeededRng::new(14, 0);
    let direct = run_recovery(&params, &spec, &rng).unwrap();
    let coincidence = run_coincidence(&params, &spec, 4, &rng).unwrap();
    for t in 0..=12 {
        let combined = direct.stderr[t].hypot(coincidence.stderr[t]);
        let gap = (direct.mean[t] - coincidence.mean[t]).abs();
        assert!(gap <= 3.0 * combined + 1e-12, "t={t}: gap {gap} vs {combined}");
    }
}

#[test]
fn means_are_probabilities_and_stderr_scales() {
    let params = ModelParams::new(5, 1.0, 0.05).unwrap();
    let rng = SeededRng::new(15, 0);
    let small = run_recovery(&params, &RecoverySpec::new(10, 500), &rng).unwrap();
    let large = run_recovery(&params, &RecoverySpec::new(10, 2000), &rng).unwrap();
    for curve in [&small, &large] {
        assert!(curve.mean.iter().all(|f| (0.0..=1.0).contains(f)));
        assert!(curve.stderr.iter().all(|s| *s >= 0.0));
    }
    // four times the trajectories halves the error, up to sampling noise in
    // the error estimate itself
    let ratios: Vec<f64> = (5..=10).map(|t| small.stderr[t] / large.stderr[t]).collect();
    let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!((mean_ratio - 2.0).abs() < 0.3, "{ratios:?}");
}

#[test]
fn channel_output_stays_a_density_matrix() {
    let mut rng = SeededRng::new(16, 0);
    let u = scrambench::quantum::haar_unitary(8, &mut rng);
    let psi = u.column(0).into_owned();
    let rho = scrambench::quantum::DensityMatrix::new(3, &psi * psi.adjoint()).unwrap();
    for channel in [KrausChannel::z_measure(), KrausChannel::depolarizing(), KrausChannel::identity(2)] {
        for q in 0..3 {
            let out = scrambench::quantum::apply_channel(&rho, &channel.embed(q, 3).unwrap()).unwrap();
            assert!((out.trace() - 1.0).abs() < 1e-10);
            assert!(out.eigenvalues()[0] >= -1e-9);
            let diff: DMatrix<C64> = out.elements() - out.elements().adjoint();
            assert!(diff.norm() < 1e-10);
        }
    }
}
