//! Simulation and analysis toolkit for benchmarking information scrambling.
//!
//! The crate simulates a layered fast-scrambling circuit (Haar single-qubit
//! gates followed by an all-to-all `ZZ` entangler) under Pauli noise, measures
//! out-of-time-order correlators and loop-echo recovery fidelities, predicts the
//! long-time plateaus of the twirled perturbation, and separates scrambling from
//! decoherence by fitting a two-stage exponential decay.

pub mod asymptotics;
pub mod error;
pub mod fit;
pub mod io;
pub mod model;
pub mod protocols;
pub mod quantum;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use rng::SeededRng;
