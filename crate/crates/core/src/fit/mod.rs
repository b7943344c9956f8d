//! Separating scrambling from decoherence in a measured fidelity decay.
//!
//! The model is the two-stage ansatz
//!
//! ```text
//! F(t) = (a1 e^{-λs t} + a2) e^{-λd t} + F_as^d
//! ```
//!
//! fitted in stages: locate where the curve becomes a single exponential
//! ([`detect_two_stage`]), fit the tail for `(a2, λd)` ([`fit_tail`]), then fit
//! the early stage for `(a1, λs)` with the tail frozen ([`fit_full`]). The
//! pipeline in [`fit_curve`] finishes with a joint polish of all four rates and
//! amplitudes starting from the staged solution.

mod detect;
mod lm;

pub use detect::{detect_two_stage, Detection};

use crate::error::{Error, Result};
use crate::protocols::FidelityCurve;
use lm::{minimize, Model};
use serde::{Deserialize, Serialize};

/// Extracted ansatz parameters and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub a1: f64,
    pub a2: f64,
    pub lambda_s: f64,
    pub lambda_d: f64,
    pub f_as_d: f64,
    pub residual_rms: f64,
    pub tail_start: usize,
    pub converged: bool,
    /// False when the early stage is absent (`a1 = 0`) and `λs` carries no
    /// information.
    pub lambda_s_determined: bool,
    pub two_stage_detected: bool,
}

impl FitResult {
    pub fn evaluate(&self, t: f64) -> f64 {
        ansatz(t, self.a1, self.lambda_s, self.a2, self.lambda_d, self.f_as_d)
    }

    /// Plateau reached once scrambling completes, ignoring decoherence:
    /// `a2 + F_as^d`.
    pub fn scrambled_plateau(&self) -> f64 {
        self.a2 + self.f_as_d
    }
}

/// `(a1 e^{-λs t} + a2) e^{-λd t} + f`.
pub fn ansatz(t: f64, a1: f64, lambda_s: f64, a2: f64, lambda_d: f64, f_as_d: f64) -> f64 {
    (a1 * (-lambda_s * t).exp() + a2) * (-lambda_d * t).exp() + f_as_d
}

/// Single-stage decay `(1 - plateau) e^{-rate t} + plateau`, the limit of the
/// ansatz when one rate dominates.
pub fn single_stage(t: f64, rate: f64, plateau: f64) -> f64 {
    (1.0 - plateau) * (-rate * t).exp() + plateau
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub a2: f64,
    pub lambda_d: f64,
    pub f_as_d: f64,
}

/// How the decohered asymptote is treated by [`fit_tail`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Asymptote {
    Fixed(f64),
    /// Fitted, starting from the given value.
    Free(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub f_as_d: f64,
    pub free_asymptote: bool,
    /// First time included in the fit. Earlier points belong to the
    /// non-exponential onset of the decay.
    pub t_min: usize,
    /// Skip detection and use this tail start.
    pub tail_start: Option<usize>,
    /// Refit all of `(a1, λs, a2, λd)` jointly after the staged fit.
    pub joint_polish: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            f_as_d: 0.5,
            free_asymptote: false,
            t_min: DEFAULT_T_MIN,
            tail_start: None,
            joint_polish: true,
        }
    }
}

/// Default first fitted time. At `t = 0` the loop is trivially perfect and a
/// perturbation diagonal in `Z` commutes with the last entangler, so `F(1)`
/// still sits on the quadratic onset.
pub const DEFAULT_T_MIN: usize = 2;

/// Weighted points `(t, F, weight)`.
#[derive(Debug, Clone)]
pub(crate) struct Points {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub stderr: Vec<f64>,
    pub w: Vec<f64>,
    pub times: Vec<usize>,
}

impl Points {
    pub(crate) fn from_curve(curve: &FidelityCurve, t_min: usize) -> Self {
        let keep: Vec<usize> = (0..curve.len()).filter(|&i| curve.times[i] >= t_min).collect();
        let stderr: Vec<f64> = keep.iter().map(|&i| curve.stderr[i]).collect();
        let weighted = !stderr.is_empty() && stderr.iter().all(|&s| s > 0.0);
        Self {
            t: keep.iter().map(|&i| curve.times[i] as f64).collect(),
            y: keep.iter().map(|&i| curve.mean[i]).collect(),
            w: stderr
                .iter()
                .map(|&s| if weighted { 1.0 / (s * s) } else { 1.0 })
                .collect(),
            times: keep.iter().map(|&i| curve.times[i]).collect(),
            stderr,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.t.len()
    }

    pub(crate) fn weighted(&self) -> bool {
        self.stderr.iter().all(|&s| s > 0.0)
    }

    pub(crate) fn slice(&self, lo: usize, hi: usize) -> Points {
        Points {
            t: self.t[lo..hi].to_vec(),
            y: self.y[lo..hi].to_vec(),
            stderr: self.stderr[lo..hi].to_vec(),
            w: self.w[lo..hi].to_vec(),
            times: self.times[lo..hi].to_vec(),
        }
    }
}

/// Weighted linear regression `y = c0 + c1 x`. Returns `(c0, c1)`.
pub(crate) fn linear_regression(x: &[f64], y: &[f64], w: &[f64]) -> Option<(f64, f64)> {
    let sw: f64 = w.iter().sum();
    if x.len() < 2 || sw <= 0.0 {
        return None;
    }
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(a, b)| b * (a - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).zip(w).map(|((a, c), b)| b * (a - mx) * (c - my)).sum();
    let slope = sxy / sxx;
    Some((my - slope * mx, slope))
}

/// Log-linear fit of `F - f = a e^{-λ t}` on `points`. Weights follow the
/// propagated variance of `ln(F - f)`, `σ² / (F - f)²`, when standard errors
/// are available.
pub(crate) fn log_linear(points: &Points, f: f64) -> Option<(f64, f64)> {
    let excess: Vec<f64> = points.y.iter().map(|y| y - f).collect();
    if excess.iter().any(|&e| e <= 0.0) {
        return None;
    }
    let logs: Vec<f64> = excess.iter().map(|e| e.ln()).collect();
    let weights: Vec<f64> = if points.weighted() {
        excess.iter().zip(&points.stderr).map(|(e, s)| (e / s).powi(2)).collect()
    } else {
        vec![1.0; excess.len()]
    };
    let (c0, c1) = linear_regression(&points.t, &logs, &weights)?;
    Some((c0.exp(), -c1))
}

const TAIL_BELOW: &str = "tail below asymptote; widen tail_start or free f_as_d";

struct TailModel {
    free: bool,
    fixed_f: f64,
}

impl Model for TailModel {
    fn n_params(&self) -> usize {
        if self.free {
            3
        } else {
            2
        }
    }
    fn value(&self, t: f64, p: &[f64]) -> f64 {
        let f = if self.free { p[2] } else { self.fixed_f };
        p[0] * (-p[1] * t).exp() + f
    }
    fn gradient(&self, t: f64, p: &[f64], out: &mut [f64]) {
        let e = (-p[1] * t).exp();
        out[0] = e;
        out[1] = -p[0] * t * e;
        if self.free {
            out[2] = 1.0;
        }
    }
    fn project(&self, p: &mut [f64]) {
        p[1] = p[1].max(0.0);
    }
}

fn tail_points(curve: &FidelityCurve, tail_start: usize) -> Result<Points> {
    let tail = Points::from_curve(curve, tail_start);
    if tail.len() < 4 {
        return Err(Error::Fit(format!(
            "need at least 4 points with t ≥ {tail_start}, found {}",
            tail.len()
        )));
    }
    Ok(tail)
}

/// Fits the long-time tail `a2 e^{-λd t} + F_as^d` on points with
/// `t ≥ tail_start`.
///
/// With a fixed asymptote this is a weighted regression of `ln(F - F_as^d)`
/// on `t`; with a free asymptote it is a damped least-squares fit of all three
/// parameters started from the fixed-asymptote solution.
pub fn fit_tail(curve: &FidelityCurve, tail_start: usize, asymptote: Asymptote) -> Result<TailFit> {
    let tail = tail_points(curve, tail_start)?;
    match asymptote {
        Asymptote::Fixed(f) => {
            let (a2, lambda_d) = log_linear(&tail, f).ok_or_else(|| Error::Fit(TAIL_BELOW.into()))?;
            Ok(TailFit {
                a2,
                lambda_d,
                f_as_d: f,
            })
        }
        Asymptote::Free(f0) => {
            let (lo, hi) = tail
                .y
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| (lo.min(y), hi.max(y)));
            // start below every tail point so the log fit exists
            let start_f = if lo > f0 { f0 } else { lo - 1e-3 * (hi - lo).max(1e-3) };
            let (a2, lambda_d) = log_linear(&tail, start_f).ok_or_else(|| Error::Fit(TAIL_BELOW.into()))?;
            let model = TailModel {
                free: true,
                fixed_f: start_f,
            };
            let out = minimize(&model, &tail.t, &tail.y, &tail.w, &[a2, lambda_d.max(0.0), start_f]);
            Ok(TailFit {
                a2: out.params[0],
                lambda_d: out.params[1],
                f_as_d: out.params[2],
            })
        }
    }
}

struct EarlyModel {
    tail: TailFit,
}

impl Model for EarlyModel {
    fn n_params(&self) -> usize {
        2
    }
    fn value(&self, t: f64, p: &[f64]) -> f64 {
        ansatz(t, p[0], p[1], self.tail.a2, self.tail.lambda_d, self.tail.f_as_d)
    }
    fn gradient(&self, t: f64, p: &[f64], out: &mut [f64]) {
        let e = (-(p[1] + self.tail.lambda_d) * t).exp();
        out[0] = e;
        out[1] = -p[0] * t * e;
    }
    fn project(&self, p: &mut [f64]) {
        p[1] = p[1].max(0.0);
    }
}

struct JointModel {
    f_as_d: f64,
}

impl Model for JointModel {
    fn n_params(&self) -> usize {
        4
    }
    fn value(&self, t: f64, p: &[f64]) -> f64 {
        ansatz(t, p[0], p[1], p[2], p[3], self.f_as_d)
    }
    fn gradient(&self, t: f64, p: &[f64], out: &mut [f64]) {
        let es = (-p[1] * t).exp();
        let ed = (-p[3] * t).exp();
        out[0] = es * ed;
        out[1] = -p[0] * t * es * ed;
        out[2] = ed;
        out[3] = -t * (p[0] * es + p[2]) * ed;
    }
    fn project(&self, p: &mut [f64]) {
        p[1] = p[1].max(0.0);
        p[3] = p[3].max(0.0);
    }
}

fn rms(points: &Points, f: impl Fn(f64) -> f64) -> f64 {
    let n = points.len().max(1) as f64;
    (points.t.iter().zip(&points.y).map(|(&t, &y)| (y - f(t)).powi(2)).sum::<f64>() / n).sqrt()
}

/// Early-stage amplitudes below this are treated as an absent scrambling stage.
const DEGENERATE_A1: f64 = 1e-12;

fn early_start(points: &Points, tail: &TailFit, tail_start: usize) -> Option<(f64, f64)> {
    // r(t) e^{λd t} = a1 e^{-λs t} on the early points
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &y) in points.t.iter().zip(&points.y) {
        if t as usize >= tail_start && xs.len() >= 2 {
            break;
        }
        let r = (y - tail.a2 * (-tail.lambda_d * t).exp() - tail.f_as_d) * (tail.lambda_d * t).exp();
        if r <= DEGENERATE_A1 {
            break;
        }
        xs.push(t);
        ys.push(r.ln());
    }
    match xs.len() {
        0 => None,
        1 => Some((ys[0].exp(), 0.0)),
        _ => {
            let (c0, c1) = linear_regression(&xs, &ys, &vec![1.0; xs.len()])?;
            Some((c0.exp(), (-c1).max(0.0)))
        }
    }
}

/// Fits `(a1, λs)` with the tail parameters frozen. Uses every point of the
/// curve; `residual_rms` is the unweighted RMS over all of them.
pub fn fit_full(curve: &FidelityCurve, tail: TailFit, tail_start: usize) -> Result<FitResult> {
    fit_full_points(&Points::from_curve(curve, 0), tail, tail_start)
}

fn fit_full_points(points: &Points, tail: TailFit, tail_start: usize) -> Result<FitResult> {
    if points.len() < 2 {
        return Err(Error::Fit("need at least 2 points".into()));
    }
    let mut result = FitResult {
        a1: 0.0,
        a2: tail.a2,
        lambda_s: 0.0,
        lambda_d: tail.lambda_d,
        f_as_d: tail.f_as_d,
        residual_rms: 0.0,
        tail_start,
        converged: true,
        lambda_s_determined: false,
        two_stage_detected: false,
    };
    let Some((a1_0, ls_0)) = early_start(points, &tail, tail_start) else {
        result.residual_rms = rms(points, |t| result.evaluate(t));
        return Ok(result);
    };
    let model = EarlyModel { tail };
    let out = minimize(&model, &points.t, &points.y, &points.w, &[a1_0, ls_0]);
    result.a1 = out.params[0];
    result.lambda_s = out.params[1];
    result.converged = out.converged;
    result.lambda_s_determined = result.a1.abs() > DEGENERATE_A1;
    result.residual_rms = rms(points, |t| result.evaluate(t));
    Ok(result)
}

fn polish(points: &Points, staged: &FitResult) -> FitResult {
    let model = JointModel { f_as_d: staged.f_as_d };
    let init = [staged.a1, staged.lambda_s, staged.a2, staged.lambda_d];
    let out = minimize(&model, &points.t, &points.y, &points.w, &init);
    let mut result = staged.clone();
    result.a1 = out.params[0];
    result.lambda_s = out.params[1];
    result.a2 = out.params[2];
    result.lambda_d = out.params[3];
    result.converged = out.converged;
    result.residual_rms = rms(points, |t| result.evaluate(t));
    result
}

/// Fit output plus the model evaluated at every input time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub result: FitResult,
    pub detection: Detection,
    pub times: Vec<usize>,
    pub fitted: Vec<f64>,
}

/// Detection, tail fit, early fit and joint polish.
pub fn fit_curve(curve: &FidelityCurve, opts: &FitOptions) -> Result<FitReport> {
    let points = Points::from_curve(curve, opts.t_min);
    let detection = match opts.tail_start {
        Some(t) => Detection {
            tail_start: t,
            two_stage: true,
            message: None,
        },
        None => detect::detect_points(&points, opts.f_as_d)?,
    };
    let asymptote = if opts.free_asymptote {
        Asymptote::Free(opts.f_as_d)
    } else {
        Asymptote::Fixed(opts.f_as_d)
    };
    let tail = fit_tail(curve, detection.tail_start.max(opts.t_min), asymptote)?;
    let mut result = fit_full_points(&points, tail, detection.tail_start)?;
    if opts.joint_polish && result.lambda_s_determined {
        result = polish(&points, &result);
    }
    result.two_stage_detected = detection.two_stage;
    let fitted = curve.times.iter().map(|&t| result.evaluate(t as f64)).collect();
    Ok(FitReport {
        result,
        detection,
        times: curve.times.clone(),
        fitted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn synthetic(times: impl Iterator<Item = usize>, f: impl Fn(f64) -> f64) -> FidelityCurve {
        let times: Vec<usize> = times.collect();
        let mean = times.iter().map(|&t| f(t as f64)).collect();
        let stderr = vec![0.0; times.len()];
        FidelityCurve::new(times, mean, stderr).unwrap()
    }

    #[test]
    fn exact_tail_fixed_asymptote() {
        let curve = synthetic(0..60, |t| 0.3 * (-0.04 * t).exp() + 0.5);
        let tail = fit_tail(&curve, 10, Asymptote::Fixed(0.5)).unwrap();
        assert!((tail.a2 - 0.3).abs() < 1e-10);
        assert!((tail.lambda_d - 0.04).abs() < 1e-10);
    }

    #[test]
    fn constant_tail_free_asymptote() {
        let curve = synthetic(0..40, |_| 0.5);
        let tail = fit_tail(&curve, 5, Asymptote::Free(0.5)).unwrap();
        assert!(tail.lambda_d.abs() < 1e-8, "{tail:?}");
        assert!(tail.a2.abs() < 1e-4, "{tail:?}");
        assert!((tail.a2 + tail.f_as_d - 0.5).abs() < 1e-10);
    }

    #[test]
    fn free_asymptote_recovers_offset() {
        let curve = synthetic(0..80, |t| 0.2 * (-0.05 * t).exp() + 0.45);
        let tail = fit_tail(&curve, 0, Asymptote::Free(0.5)).unwrap();
        assert!((tail.f_as_d - 0.45).abs() < 1e-8, "{tail:?}");
        assert!((tail.lambda_d - 0.05).abs() < 1e-8);
    }

    #[test]
    fn tail_below_asymptote_is_an_error() {
        let curve = synthetic(0..30, |t| 0.1 * (-0.04 * t).exp() + 0.45);
        let err = fit_tail(&curve, 10, Asymptote::Fixed(0.5)).unwrap_err();
        assert!(err.to_string().contains("tail below asymptote"));
        let short = synthetic(0..12, |t| 0.3 * (-0.04 * t).exp() + 0.5);
        assert!(fit_tail(&short, 10, Asymptote::Fixed(0.5)).is_err());
    }

    #[test]
    fn noisy_tail_recovery_study() {
        // Gaussian noise σ = 0.005 on 0.3 e^{-0.04 t} + 0.5, t = 10..60
        let sigma = 0.005;
        for seed in 0..100 {
            let mut rng = SeededRng::new(seed, 0);
            let times: Vec<usize> = (10..=60).collect();
            let mean = times
                .iter()
                .map(|&t| 0.3 * (-0.04 * t as f64).exp() + 0.5 + sigma * rng.normal())
                .collect();
            let curve = FidelityCurve::new(times.clone(), mean, vec![sigma; times.len()]).unwrap();
            let tail = fit_tail(&curve, 10, Asymptote::Fixed(0.5)).unwrap();
            let rel = (tail.lambda_d - 0.04).abs() / 0.04;
            assert!(rel < 0.15, "seed {seed}: λd = {}", tail.lambda_d);
        }
    }

    #[test]
    fn full_fit_recovers_reference_rates() {
        let (a1, a2, ls, ld, f) = (0.25, 0.25, 0.216, 0.040, 0.5);
        let curve = synthetic(0..=120, |t| ansatz(t, a1, ls, a2, ld, f));
        let detection = detect_two_stage(&curve).unwrap();
        let tail = fit_tail(&curve, detection.tail_start, Asymptote::Fixed(f)).unwrap();
        let fit = fit_full(&curve, tail, detection.tail_start).unwrap();
        for (got, want) in [(fit.a1, a1), (fit.a2, a2), (fit.lambda_s, ls), (fit.lambda_d, ld)] {
            assert!((got - want).abs() < 1e-3, "{fit:?}");
        }
        assert!(fit.converged && fit.lambda_s_determined);
    }

    #[test]
    fn pipeline_residual_on_exact_data() {
        let curve = synthetic(0..=120, |t| ansatz(t, 0.25, 0.216, 0.25, 0.04, 0.5));
        let report = fit_curve(&curve, &FitOptions::default()).unwrap();
        assert!(report.result.residual_rms <= 1e-8, "{:?}", report.result);
        assert!(report.result.two_stage_detected);
        assert_eq!(report.fitted.len(), curve.len());
    }

    #[test]
    fn absent_early_stage() {
        let curve = synthetic(0..60, |t| 0.3 * (-0.04 * t).exp() + 0.5);
        let tail = fit_tail(&curve, 20, Asymptote::Fixed(0.5)).unwrap();
        let fit = fit_full(&curve, tail, 20).unwrap();
        assert_eq!(fit.a1, 0.0);
        assert!(fit.converged);
        assert!(!fit.lambda_s_determined);
    }

    #[test]
    fn zero_decoherence_limit_is_single_stage() {
        let (a2, f, ls) = (0.25, 0.5, 0.3);
        let plateau = a2 + f;
        for t in 0..30 {
            let t = t as f64;
            let full = ansatz(t, 1.0 - plateau, ls, a2, 0.0, f);
            assert!((full - single_stage(t, ls, plateau)).abs() < 1e-15);
        }
        // and the opposite extreme: no scrambled plateau
        for t in 0..30 {
            let t = t as f64;
            let full = ansatz(t, 0.0, 1.0, 1.0 - f, 0.07, f);
            assert!((full - single_stage(t, 0.07, f)).abs() < 1e-15);
        }
    }

    #[test]
    fn weights_fall_back_to_unit_with_zero_stderr() {
        let curve = FidelityCurve::new(vec![0, 1, 2], vec![1.0, 0.9, 0.8], vec![0.0, 0.1, 0.1]).unwrap();
        let pts = Points::from_curve(&curve, 0);
        assert_eq!(pts.w, vec![1.0; 3]);
        let pts = Points::from_curve(&curve, 1);
        assert!(pts.w.iter().all(|w| (w - 100.0).abs() < 1e-9));
    }
}
