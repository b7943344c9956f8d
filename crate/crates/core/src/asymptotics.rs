//! Long-time predictions of the twirled perturbation.
//!
//! Averaging `U Λ(U† ρ U) U†` over Haar unitaries turns any channel into a
//! depolarizing one, `ρ_as = p ρ + (1 - p) I/d`, with
//! `p = (Σ_k Tr M_k Tr M_k† - 1)/(d² - 1)`. The loop fidelity then saturates
//! at `F_as = p Tr[ρ²] + (1 - p)/d`, and the same expression with the
//! subsystem dimension gives the plateau of a measured subsystem.

use crate::error::{invalid, Error, Result};
use crate::quantum::{apply_channel, haar_unitary, CMatrix, DensityMatrix, KrausChannel, C64};
use crate::rng::{stream, SeededRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwirlPrediction {
    pub p_twirl: f64,
    /// Plateau of the full-system fidelity for a pure initial state.
    pub f_as_full: f64,
    /// Plateau of a single pure target qubit.
    pub f_as_subsystem: f64,
    pub d: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// `p = (Σ_k Tr M_k · Tr M_k† - 1) / (d² - 1)` for a channel on dimension `d`.
pub fn twirl_probability(channel: &KrausChannel, d: usize) -> Result<f64> {
    if d < 2 {
        return invalid(format!("twirl probability needs d ≥ 2, got {d}"));
    }
    if channel.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: channel.dim(),
        });
    }
    let sum: f64 = channel
        .operators()
        .iter()
        .map(|m| (m.trace() * m.adjoint().trace()).re)
        .sum();
    let d2 = (d * d) as f64;
    Ok((sum - 1.0) / (d2 - 1.0))
}

/// Twirl probability of a single-qubit channel acting on one qubit of an
/// `n_qubits` register, using `Tr(M ⊗ I) = Tr(M) · 2^(n-1)` instead of
/// building the embedded operators.
pub fn embedded_twirl_probability(local: &KrausChannel, n_qubits: usize) -> Result<f64> {
    if local.dim() != 2 {
        return invalid("embedded twirl probability needs a single-qubit channel");
    }
    if n_qubits == 0 || n_qubits > 30 {
        return invalid(format!("n_qubits must be in 1..=30, got {n_qubits}"));
    }
    let d = (1u64 << n_qubits) as f64;
    let scale = d / 2.0;
    let sum: f64 = local
        .operators()
        .iter()
        .map(|m| (m.trace() * m.adjoint().trace()).re * scale * scale)
        .sum();
    Ok((sum - 1.0) / (d * d - 1.0))
}

/// `p ρ + (1 - p) I/d`.
pub fn asymptotic_state(rho: &DensityMatrix, p_twirl: f64) -> DensityMatrix {
    let d = rho.dim();
    let mixed = CMatrix::from_diagonal_element(d, d, C64::new((1.0 - p_twirl) / d as f64, 0.0));
    let elements = rho.elements() * C64::new(p_twirl, 0.0) + mixed;
    DensityMatrix::from_matrix_unchecked(rho.n_qubits(), elements)
}

/// `p Tr[ρ²] + (1 - p)/d`.
pub fn asymptotic_fidelity(rho: &DensityMatrix, p_twirl: f64) -> f64 {
    p_twirl * rho.purity() + (1.0 - p_twirl) / rho.dim() as f64
}

/// The plateau for a measured subsystem: `p Tr[ρ_sub²] + (1 - p)/d_sub`.
pub fn subsystem_asymptotic_fidelity(rho_sub: &DensityMatrix, p_twirl: f64) -> f64 {
    p_twirl * rho_sub.purity() + (1.0 - p_twirl) / rho_sub.dim() as f64
}

/// Plateaus for a pure initial state of `n_qubits` qubits and a pure target
/// qubit, under a single-qubit perturbation.
pub fn predict(local: &KrausChannel, n_qubits: usize) -> Result<TwirlPrediction> {
    let p = embedded_twirl_probability(local, n_qubits)?;
    let d = 1usize << n_qubits;
    let warning = (!(0.0..=1.0).contains(&p))
        .then(|| format!("twirl probability {p} lies outside [0, 1]"));
    Ok(TwirlPrediction {
        p_twirl: p,
        f_as_full: p + (1.0 - p) / d as f64,
        f_as_subsystem: p + (1.0 - p) / 2.0,
        d,
        warning,
    })
}

/// Monte-Carlo estimate of `E_U[U Λ(U† ρ U) U†]` with its elementwise
/// standard errors.
#[derive(Debug, Clone)]
pub struct TwirlEstimate {
    pub mean: DensityMatrix,
    /// Standard errors of the real parts, row-major.
    pub stderr_re: Vec<f64>,
    /// Standard errors of the imaginary parts, row-major.
    pub stderr_im: Vec<f64>,
    pub samples: usize,
}

const ORACLE_CHUNK: usize = 256;

/// Brute-force Haar average of the twirled channel, for `d ≤ 16`.
pub fn haar_twirl_oracle(
    channel: &KrausChannel,
    rho: &DensityMatrix,
    samples: usize,
    rng: &SeededRng,
) -> Result<TwirlEstimate> {
    let d = rho.dim();
    if d > 16 {
        return invalid(format!("Haar oracle supports d ≤ 16, got {d}"));
    }
    if samples == 0 {
        return invalid("samples must be ≥ 1");
    }
    if channel.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: channel.dim(),
        });
    }
    let chunks = samples.div_ceil(ORACLE_CHUNK);
    // per chunk: Σx, Σ(Re x)², Σ(Im x)² elementwise, summed in sample order
    let partials: Vec<Result<(CMatrix, Vec<f64>, Vec<f64>)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut sum = CMatrix::zeros(d, d);
            let mut sq_re = vec![0.0; d * d];
            let mut sq_im = vec![0.0; d * d];
            let lo = c * ORACLE_CHUNK;
            let hi = (lo + ORACLE_CHUNK).min(samples);
            for i in lo..hi {
                let mut r = rng.fork(stream::id(stream::HAAR_ORACLE, 0, i as u64));
                let u = haar_unitary(d, &mut r);
                let inner = DensityMatrix::from_matrix_unchecked(rho.n_qubits(), u.adjoint() * rho.elements() * &u);
                let out = &u * apply_channel(&inner, channel)?.elements() * u.adjoint();
                for row in 0..d {
                    for col in 0..d {
                        let z = out[(row, col)];
                        sq_re[row * d + col] += z.re * z.re;
                        sq_im[row * d + col] += z.im * z.im;
                    }
                }
                sum += out;
            }
            Ok((sum, sq_re, sq_im))
        })
        .collect();
    let mut sum = CMatrix::zeros(d, d);
    let mut sq_re = vec![0.0; d * d];
    let mut sq_im = vec![0.0; d * d];
    for part in partials {
        let (s, r, i) = part?;
        sum += s;
        sq_re.iter_mut().zip(r).for_each(|(a, b)| *a += b);
        sq_im.iter_mut().zip(i).for_each(|(a, b)| *a += b);
    }
    let n = samples as f64;
    let mean = sum / C64::new(n, 0.0);
    let stderr = |sq: &[f64], part: fn(C64) -> f64| -> Vec<f64> {
        (0..d * d)
            .map(|k| {
                let m = part(mean[(k / d, k % d)]);
                let var = if samples > 1 {
                    ((sq[k] - n * m * m) / (n - 1.0)).max(0.0)
                } else {
                    0.0
                };
                (var / n).sqrt()
            })
            .collect()
    };
    let stderr_re = stderr(&sq_re, |z| z.re);
    let stderr_im = stderr(&sq_im, |z| z.im);
    Ok(TwirlEstimate {
        mean: DensityMatrix::from_matrix_unchecked(rho.n_qubits(), mean),
        stderr_re,
        stderr_im,
        samples,
    })
}
