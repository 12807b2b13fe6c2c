//! Cross-run statistics: confidence intervals, quartiles, tail risk and
//! convergence detection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("alpha {0} outside (0, 1]")]
    InvalidAlpha(f64),
    #[error("confidence level {0} outside (0, 1)")]
    InvalidLevel(f64),
    #[error("non-finite sample")]
    NonFinite,
}

fn require(samples: &[f64], needed: usize) -> Result<(), StatsError> {
    if samples.len() < needed {
        return Err(StatsError::InsufficientData {
            needed,
            got: samples.len(),
        });
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

fn check_level(level: f64) -> Result<(), StatsError> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(StatsError::InvalidLevel(level))
    }
}

pub fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_std(samples: &[f64]) -> f64 {
    let m = mean(samples);
    let ss: f64 = samples.iter().map(|x| (x - m).powi(2)).sum();
    (ss / (samples.len() - 1) as f64).sqrt()
}

/// Student-t interval on the mean: `mean ± t · s / √n`.
pub fn mean_ci(samples: &[f64], level: f64) -> Result<(f64, f64, f64), StatsError> {
    require(samples, 2)?;
    check_level(level)?;
    let n = samples.len() as f64;
    let m = mean(samples);
    let s = sample_std(samples);
    let t = StudentsT::new(0.0, 1.0, n - 1.0)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.5 + level / 2.0);
    let half = t * s / n.sqrt();
    Ok((m, m - half, m + half))
}

/// Percentile bootstrap interval on the mean.
pub fn bootstrap_ci(samples: &[f64], level: f64, resamples: usize, seed: u64) -> Result<(f64, f64, f64), StatsError> {
    require(samples, 2)?;
    check_level(level)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = samples.len();
    let mut means: Vec<f64> = (0..resamples.max(1))
        .map(|_| (0..n).map(|_| samples[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let m = mean(samples);
    let lo = quantile_sorted(&means, tail).min(m);
    let hi = quantile_sorted(&means, 1.0 - tail).max(m);
    Ok((m, lo, hi))
}

/// Linear-interpolation quantile (`h = (n - 1) p`) of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(samples: &[f64], p: f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, p)
}

/// First and third quartiles.
pub fn iqr(samples: &[f64]) -> Result<(f64, f64), StatsError> {
    require(samples, 4)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok((quantile_sorted(&sorted, 0.25), quantile_sorted(&sorted, 0.75)))
}

/// Mean of the worst (lowest) `⌈alpha · n⌉` samples.
pub fn cvar(samples: &[f64], alpha: f64) -> Result<f64, StatsError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(StatsError::InvalidAlpha(alpha));
    }
    require(samples, 1)?;
    let n = samples.len();
    // Guard against products like 0.3 * 10 = 3.0000000000000004.
    let k = ((alpha * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(mean(&sorted[..k]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum CiMethod {
    #[default]
    StudentT,
    Bootstrap {
        resamples: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsOptions {
    pub ci_level: f64,
    pub cvar_alpha: f64,
    pub ci_method: CiMethod,
}

impl Default for StatsOptions {
    fn default() -> Self {
        StatsOptions {
            ci_level: 0.95,
            cvar_alpha: 0.1,
            ci_method: CiMethod::StudentT,
        }
    }
}

/// Summary of one score per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    pub n_runs: usize,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_level: f64,
    /// Absent when fewer than four runs are available.
    pub iqr: Option<(f64, f64)>,
    pub cvar: (f64, f64),
}

impl EvalStats {
    pub fn from_samples(samples: &[f64], opts: &StatsOptions) -> Result<Self, StatsError> {
        let (mean, ci_low, ci_high) = match opts.ci_method {
            CiMethod::StudentT => mean_ci(samples, opts.ci_level)?,
            CiMethod::Bootstrap { resamples, seed } => bootstrap_ci(samples, opts.ci_level, resamples, seed)?,
        };
        Ok(EvalStats {
            n_runs: samples.len(),
            mean,
            ci_low,
            ci_high,
            ci_level: opts.ci_level,
            iqr: iqr(samples).ok(),
            cvar: (opts.cvar_alpha, cvar(samples, opts.cvar_alpha)?),
        })
    }

    pub fn half_width(&self) -> f64 {
        (self.ci_high - self.ci_low) / 2.0
    }

    /// Whether the two confidence intervals share no point.
    pub fn ci_disjoint(&self, other: &EvalStats) -> bool {
        self.ci_high < other.ci_low || other.ci_high < self.ci_low
    }

    /// Score as printed in result tables, e.g. `-17.2`.
    pub fn score_text(&self) -> String {
        one_decimal(self.mean)
    }

    /// Interval as printed in result tables: upper bound first, e.g.
    /// `(-16.7, -17.7)`.
    pub fn ci_text(&self) -> String {
        format!("({}, {})", one_decimal(self.ci_high), one_decimal(self.ci_low))
    }
}

/// One-decimal table formatting; values that round to zero print as `0.0`, never `-0.0`.
pub fn one_decimal(x: f64) -> String {
    let s = format!("{x:.1}");
    if s == "-0.0" {
        "0.0".into()
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceVerdict {
    pub converged: bool,
    /// Timestep where the first qualifying window starts.
    pub step_of_convergence: Option<u64>,
    pub window: usize,
    pub epsilon: f64,
}

/// Tolerances below this magnitude are raised to it, so a flat curve at
/// zero is not held to an unreachable bound.
pub const CONVERGENCE_TOLERANCE_FLOOR: f64 = 1.0;

/// Scans `(timestep, score)` pairs for the first point where the latest
/// `window` scores have a mean within tolerance of the preceding window and
/// a standard deviation within the same tolerance. The tolerance is
/// `epsilon` times the larger of the preceding window's magnitude and the
/// range the curve has covered so far, so a curve that has climbed to a
/// score near zero is judged against the progress it made.
pub fn detect_convergence(curve: &[(u64, f64)], window: usize, epsilon: f64) -> Result<ConvergenceVerdict, StatsError> {
    check_curve(curve, window)?;
    let scores: Vec<f64> = curve.iter().map(|p| p.1).collect();
    require(&scores, 2)?;
    let found = (2 * window..=curve.len()).find(|&end| window_stable(&scores[..end], window, epsilon));
    Ok(ConvergenceVerdict {
        converged: found.is_some(),
        step_of_convergence: found.map(|end| curve[end - window].0),
        window,
        epsilon,
    })
}

/// Whether the final pair of windows of `curve` passes the stability test.
pub fn converged_at_end(curve: &[(u64, f64)], window: usize, epsilon: f64) -> Result<bool, StatsError> {
    check_curve(curve, window)?;
    let scores: Vec<f64> = curve.iter().map(|p| p.1).collect();
    Ok(window_stable(&scores, window, epsilon))
}

fn check_curve(curve: &[(u64, f64)], window: usize) -> Result<(), StatsError> {
    if window == 0 || curve.len() < 2 * window {
        return Err(StatsError::InsufficientData {
            needed: 2 * window.max(1),
            got: curve.len(),
        });
    }
    Ok(())
}

/// Stability of the last two windows of `history`.
fn window_stable(history: &[f64], window: usize, epsilon: f64) -> bool {
    let (prev, last) = history[history.len() - 2 * window..].split_at(window);
    let prev_mean = mean(prev);
    let lo = history.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = epsilon * prev_mean.abs().max(hi - lo).max(CONVERGENCE_TOLERANCE_FLOOR);
    let std = if window > 1 { sample_std(last) } else { 0.0 };
    (mean(last) - prev_mean).abs() <= tol && std <= tol
}
