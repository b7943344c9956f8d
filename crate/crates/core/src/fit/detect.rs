use super::{linear_regression, log_linear, Points, DEFAULT_T_MIN};
use crate::error::{Error, Result};
use crate::protocols::FidelityCurve;
use serde::{Deserialize, Serialize};

pub const NO_TWO_STAGE: &str = "no clear two-stage structure";

/// Largest tolerated deviation of `ln(F - f)` from the tail line when the
/// curve carries no error bars. Calibrated so that exact curves split where
/// the early component has fallen to about 1% of the plateau amplitude.
pub(crate) const LOG_RESIDUAL_FLOOR: f64 = 6.5e-3;
/// Minimum ratio of early to tail rate for a split to count as two-stage.
pub(crate) const RATE_RATIO: f64 = 1.1;
/// Excess over the asymptote below which `ln(F - f)` is dominated by rounding.
const MIN_EXCESS: f64 = 1e-9;
const MIN_EARLY: usize = 2;
const MIN_TAIL: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub tail_start: usize,
    pub two_stage: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

/// Earliest split of the curve whose tail is a single exponential towards
/// `F_as^d = 0.5`, with a faster early segment. Points before
/// [`DEFAULT_T_MIN`] are ignored.
pub fn detect_two_stage(curve: &FidelityCurve) -> Result<Detection> {
    detect_points(&Points::from_curve(curve, DEFAULT_T_MIN), 0.5)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let m = xs.len() / 2;
    if xs.len() % 2 == 0 {
        0.5 * (xs[m - 1] + xs[m])
    } else {
        xs[m]
    }
}

/// RMS and maximum absolute deviation of `ln(F - f)` from the fitted line.
fn log_residuals(points: &Points, f: f64, amp: f64, rate: f64) -> (f64, f64) {
    let (sum, max) = points
        .t
        .iter()
        .zip(&points.y)
        .map(|(&t, &y)| (y - f).ln() - (amp.ln() - rate * t))
        .fold((0.0, 0.0_f64), |(s, m), r| (s + r * r, m.max(r.abs())));
    ((sum / points.len() as f64).sqrt(), max)
}

fn early_rate(points: &Points, f: f64) -> Option<f64> {
    let xs = &points.t;
    let ys: Vec<f64> = points.y.iter().map(|y| (y - f).ln()).collect();
    let (_, slope) = linear_regression(xs, &ys, &vec![1.0; xs.len()])?;
    Some(-slope)
}

pub(crate) fn detect_points(points: &Points, f: f64) -> Result<Detection> {
    if points.len() < 8 {
        return Err(Error::Fit(format!(
            "two-stage detection needs at least 8 points, found {}",
            points.len()
        )));
    }
    let midpoint = points.times[points.len() / 2];
    let fallback = Detection {
        tail_start: midpoint,
        two_stage: false,
        message: Some(NO_TWO_STAGE.into()),
    };
    // once the excess drops to zero the log model is undefined
    let usable = points.y.iter().position(|&y| y - f <= MIN_EXCESS).unwrap_or(points.len());
    if usable < MIN_EARLY + MIN_TAIL {
        return Ok(fallback);
    }
    let points = points.slice(0, usable);
    for c in MIN_EARLY..=usable - MIN_TAIL {
        let tail = points.slice(c, usable);
        let Some((amp, rate)) = log_linear(&tail, f) else {
            continue;
        };
        let (rms, max_abs) = log_residuals(&tail, f, amp, rate);
        let single_exponential = if tail.weighted() {
            let rel: Vec<f64> = tail.stderr.iter().zip(&tail.y).map(|(s, y)| s / (y - f)).collect();
            rms <= (2.0 * median(rel)).max(LOG_RESIDUAL_FLOOR)
        } else {
            max_abs <= LOG_RESIDUAL_FLOOR
        };
        if !single_exponential {
            continue;
        }
        let Some(early) = early_rate(&points.slice(0, c + 1), f) else {
            continue;
        };
        if early > RATE_RATIO * rate.max(0.0) && early > 0.0 {
            return Ok(Detection {
                tail_start: points.times[c],
                two_stage: true,
                message: None,
            });
        }
        // the first acceptable tail already extends back to the start
        break;
    }
    Ok(fallback)
}
