//! Measurement protocols driven on the trajectory backend.
//!
//! Every trajectory draws from its own stream `(seed, kind | t | index)`, so
//! results do not depend on how rayon schedules the work. Per-trajectory values
//! are collected in index order and reduced sequentially.

mod otoc;
mod recovery;

pub use otoc::{otoc_trajectory, run_otoc, OtocCurve, OtocSpec};
pub use recovery::{
    coincidence_trajectory, exact_loop_state, recovery_trajectory, run_coincidence, run_recovery,
    run_recovery_scan, FidelityCurve, RecoveryScan, RecoverySpec,
};

use crate::model::{CircuitRealization, Scrambler};
use crate::rng::{stream, SeededRng};
use rayon::prelude::*;

/// Circuit averaging mode.
///
/// `Ensemble` draws fresh Haar gates for every trajectory; `Fixed` draws one
/// circuit up front and averages only over error flags and measurement
/// outcomes.
#[derive(Debug, Clone)]
pub(crate) enum CircuitSource {
    Ensemble,
    Fixed(CircuitRealization),
}

impl CircuitSource {
    pub(crate) fn new(
        fixed: bool,
        scrambler: &Scrambler,
        depth_forward: usize,
        depth_backward: usize,
        base: &SeededRng,
    ) -> Self {
        if fixed {
            let mut rng = base.fork(stream::id(stream::FIXED_CIRCUIT, 0, 0));
            CircuitSource::Fixed(scrambler.sample(depth_forward, depth_backward, &mut rng))
        } else {
            CircuitSource::Ensemble
        }
    }

    /// A realization with `depth_forward` forward and `depth_backward` extra
    /// layers, drawing whatever is random from `rng`.
    pub(crate) fn realize(
        &self,
        scrambler: &Scrambler,
        depth_forward: usize,
        depth_backward: usize,
        rng: &mut SeededRng,
    ) -> CircuitRealization {
        match self {
            CircuitSource::Ensemble => scrambler.sample(depth_forward, depth_backward, rng),
            CircuitSource::Fixed(circ) => {
                let mut sub = circ
                    .truncated(depth_forward, depth_backward)
                    .expect("fixed circuit sampled at maximal depth");
                sub.resample_errors(rng);
                sub
            }
        }
    }
}

/// Evaluates `f(trajectory_index)` for every index in parallel and returns the
/// values in index order.
pub(crate) fn collect_ordered<T, F>(trajectories: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..trajectories).into_par_iter().map(f).collect()
}
