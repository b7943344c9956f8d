use proptest::prelude::*;
use scrambench::asymptotics::{asymptotic_fidelity, asymptotic_state, subsystem_asymptotic_fidelity};
use scrambench::fit::{ansatz, fit_curve, FitOptions};
use scrambench::model::{build_entangler, evolve_backward, evolve_forward, sample_circuit, ModelParams};
use scrambench::protocols::FidelityCurve;
use scrambench::quantum::{
    apply_channel, haar_single_qubit, partial_trace, state_fidelity, KrausChannel, PureState, C64,
};
use scrambench::SeededRng;

fn random_state(n: usize, seed: u64) -> PureState {
    let mut rng = SeededRng::new(seed, 99);
    let amps: Vec<C64> = (0..1usize << n).map(|_| C64::new(rng.normal(), rng.normal())).collect();
    PureState::normalized(amps).unwrap()
}

fn direct_phase(g: f64, n: usize, b: usize) -> f64 {
    let z = |i: usize| if (b >> (n - 1 - i)) & 1 == 0 { 1.0 } else { -1.0 };
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += z(i) * z(j);
        }
    }
    g / (2.0 * (n as f64).sqrt()) * sum
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gates_and_measurements_preserve_norm(n in 1usize..6, seed in any::<u64>(), ops in 1usize..40) {
        let mut rng = SeededRng::new(seed, 0);
        let mut state = random_state(n, seed);
        for _ in 0..ops {
            let q = rng.below(n);
            match rng.below(3) {
                0 => state.apply_single_qubit_gate(&haar_single_qubit(&mut rng), q).unwrap(),
                1 => {
                    state.measure_qubit_z(q, &mut rng).unwrap();
                }
                _ => {
                    let phases: Vec<f64> = (0..state.dim()).map(|_| rng.normal()).collect();
                    state.apply_diagonal_phase(&phases).unwrap();
                }
            }
            prop_assert!((state.norm() - 1.0).abs() < 1e-10);
            prop_assert_eq!(state.amplitudes().len(), 1usize << n);
        }
    }

    #[test]
    fn reduced_state_matches_partial_trace(n in 1usize..5, seed in any::<u64>(), mask in 1usize..16) {
        let state = random_state(n, seed);
        let keep: Vec<usize> = (0..n).filter(|q| mask >> q & 1 == 1).collect();
        prop_assume!(!keep.is_empty());
        let direct = state.reduced_density_matrix(&keep).unwrap();
        let traced = partial_trace(&state.outer_product(), &keep).unwrap();
        prop_assert!((direct.elements() - traced.elements()).norm() < 1e-12);
    }

    #[test]
    fn fidelity_is_symmetric(n in 1usize..4, a in any::<u64>(), b in any::<u64>()) {
        let ra = random_state(n, a).outer_product();
        let rb = apply_channel(&random_state(n, b).outer_product(), &KrausChannel::z_measure().embed(0, n).unwrap()).unwrap();
        prop_assert_eq!(state_fidelity(&ra, &rb).unwrap(), state_fidelity(&rb, &ra).unwrap());
    }

    #[test]
    fn seeded_streams_reproduce(seed in any::<u64>(), stream in any::<u64>()) {
        let mut a = SeededRng::new(seed, stream);
        let mut b = SeededRng::new(seed, stream);
        for _ in 0..16 {
            prop_assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn entangler_shortcut_matches_double_sum(n in 2usize..=6, g in 0.0f64..4.0) {
        let table = build_entangler(&ModelParams::new(n, g, 0.0).unwrap());
        for (b, phase) in table.phases().iter().enumerate() {
            prop_assert!((phase - direct_phase(g, n, b)).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_echo_is_exact(n in 2usize..6, g in 0.0f64..3.0, seed in any::<u64>(), depth in 0usize..12) {
        let params = ModelParams::new(n, g, 0.0).unwrap();
        let circ = sample_circuit(&params, depth, 0, &mut SeededRng::new(seed, 1)).unwrap();
        let initial = random_state(n, seed);
        for t in 0..=depth {
            let sub = circ.truncated(t, 0).unwrap();
            let mut state = initial.clone();
            evolve_forward(&mut state, &sub, t).unwrap();
            evolve_backward(&mut state, &sub, t).unwrap();
            prop_assert!((state.inner(&initial).unwrap().norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn twirl_predictions_are_self_consistent(n in 1usize..4, seed in any::<u64>(), p in 0.0f64..=1.0) {
        let rho = apply_channel(&random_state(n, seed).outer_product(), &KrausChannel::z_measure().embed(0, n).unwrap()).unwrap();
        let mixed = asymptotic_state(&rho, p);
        prop_assert!((state_fidelity(&mixed, &rho).unwrap() - asymptotic_fidelity(&rho, p)).abs() < 1e-12);
    }

    #[test]
    fn subsystem_prediction_commutes_with_partial_trace(n in 2usize..5, p in 0.0f64..=1.0, target in 0usize..5) {
        prop_assume!(target < n);
        let rho = PureState::zero(n).unwrap().outer_product();
        let reduced = partial_trace(&asymptotic_state(&rho, p), &[target]).unwrap();
        let initial = PureState::zero(1).unwrap().outer_product();
        let lhs = state_fidelity(&reduced, &initial).unwrap();
        prop_assert!((lhs - subsystem_asymptotic_fidelity(&initial, p)).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fit_round_trip(
        ratio in 2.0f64..=50.0,
        lambda_d in 0.01f64..0.06,
        a1 in 0.1f64..0.4,
        a2 in 0.1f64..0.4,
    ) {
        let lambda_s = ratio * lambda_d;
        let t_max = 120;
        let times: Vec<usize> = (0..=t_max).collect();
        let mean = times.iter().map(|&t| ansatz(t as f64, a1, lambda_s, a2, lambda_d, 0.5)).collect();
        let curve = FidelityCurve::new(times, mean, vec![0.0; t_max + 1]).unwrap();
        let fit = fit_curve(&curve, &FitOptions::default()).unwrap().result;
        for (got, want) in [(fit.a1, a1), (fit.lambda_s, lambda_s), (fit.a2, a2), (fit.lambda_d, lambda_d)] {
            prop_assert!((got - want).abs() <= 1e-3 * want, "{:?}", fit);
        }
        prop_assert!(fit.residual_rms <= 1e-8);
    }
}
