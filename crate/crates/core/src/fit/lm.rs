//! Damped Gauss-Newton (Levenberg-Marquardt) for small dense problems.

use nalgebra::{DMatrix, DVector};

pub(crate) const MAX_ITERATIONS: usize = 200;
pub(crate) const PARAM_TOL: f64 = 1e-9;

/// A weighted least-squares model `y ≈ f(t; p)`.
pub(crate) trait Model {
    fn n_params(&self) -> usize;
    fn value(&self, t: f64, p: &[f64]) -> f64;
    /// `∂f/∂p_j` at `t`.
    fn gradient(&self, t: f64, p: &[f64], out: &mut [f64]);
    /// Maps a trial point back into the feasible set.
    fn project(&self, _p: &mut [f64]) {}
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub params: Vec<f64>,
    pub converged: bool,
}

fn cost<M: Model>(model: &M, ts: &[f64], ys: &[f64], ws: &[f64], p: &[f64]) -> f64 {
    ts.iter()
        .zip(ys)
        .zip(ws)
        .map(|((&t, &y), &w)| w * (y - model.value(t, p)).powi(2))
        .sum()
}

pub(crate) fn minimize<M: Model>(model: &M, ts: &[f64], ys: &[f64], ws: &[f64], init: &[f64]) -> Outcome {
    let k = model.n_params();
    let mut p = init.to_vec();
    model.project(&mut p);
    let mut current = cost(model, ts, ys, ws, &p);
    let mut mu = 1e-3;
    let mut grad = vec![0.0; k];
    for _ in 0..MAX_ITERATIONS {
        // normal equations JᵀWJ δ = JᵀW r
        let mut jtj = DMatrix::<f64>::zeros(k, k);
        let mut jtr = DVector::<f64>::zeros(k);
        for ((&t, &y), &w) in ts.iter().zip(ys).zip(ws) {
            model.gradient(t, &p, &mut grad);
            let r = y - model.value(t, &p);
            for a in 0..k {
                jtr[a] += w * grad[a] * r;
                for b in 0..k {
                    jtj[(a, b)] += w * grad[a] * grad[b];
                }
            }
        }
        if current == 0.0 {
            return Outcome {
                params: p,
                converged: true,
            };
        }
        let mut accepted = false;
        let mut small_step = false;
        for _ in 0..60 {
            let mut damped = jtj.clone();
            for a in 0..k {
                damped[(a, a)] += mu * (jtj[(a, a)] + 1e-12);
            }
            let Some(delta) = damped.lu().solve(&jtr) else {
                mu *= 10.0;
                continue;
            };
            let mut trial: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, d)| a + d).collect();
            model.project(&mut trial);
            let trial_cost = cost(model, ts, ys, ws, &trial);
            small_step = p
                .iter()
                .zip(&trial)
                .all(|(a, b)| (a - b).abs() <= PARAM_TOL * (a.abs() + PARAM_TOL));
            if trial_cost <= current {
                p = trial;
                current = trial_cost;
                mu = (mu / 3.0).max(1e-15);
                accepted = true;
                break;
            }
            if small_step {
                break;
            }
            mu *= 4.0;
        }
        if small_step || !accepted {
            return Outcome {
                params: p,
                converged: small_step || current == 0.0,
            };
        }
    }
    Outcome {
        params: p,
        converged: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Line;

    impl Model for Line {
        fn n_params(&self) -> usize {
            2
        }
        fn value(&self, t: f64, p: &[f64]) -> f64 {
            p[0] + p[1] * t
        }
        fn gradient(&self, t: f64, _p: &[f64], out: &mut [f64]) {
            out[0] = 1.0;
            out[1] = t;
        }
    }

    struct Decay;

    impl Model for Decay {
        fn n_params(&self) -> usize {
            2
        }
        fn value(&self, t: f64, p: &[f64]) -> f64 {
            p[0] * (-p[1] * t).exp()
        }
        fn gradient(&self, t: f64, p: &[f64], out: &mut [f64]) {
            let e = (-p[1] * t).exp();
            out[0] = e;
            out[1] = -p[0] * t * e;
        }
        fn project(&self, p: &mut [f64]) {
            p[1] = p[1].max(0.0);
        }
    }

    #[test]
    fn solves_linear_problem() {
        let ts: Vec<f64> = (0..10).map(f64::from).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 2.0 - 0.5 * t).collect();
        let out = minimize(&Line, &ts, &ys, &vec![1.0; 10], &[0.0, 0.0]);
        assert!(out.converged);
        assert!((out.params[0] - 2.0).abs() < 1e-9 && (out.params[1] + 0.5).abs() < 1e-9);
    }

    #[test]
    fn recovers_exponential() {
        let ts: Vec<f64> = (0..40).map(f64::from).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 0.7 * (-0.13 * t).exp()).collect();
        let out = minimize(&Decay, &ts, &ys, &vec![1.0; 40], &[1.0, 0.5]);
        assert!(out.converged);
        assert!((out.params[0] - 0.7).abs() < 1e-8 && (out.params[1] - 0.13).abs() < 1e-8);
    }
}
