//! Empirical checks on simulated trajectories: decay-rate fits, the
//! exponential stability bound, and translation-number scans as a finite
//! proxy for almost periodicity.

use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::conditions::Certificate;
use crate::kv::{fmt_f64, KvMap};
use crate::simulator::{distance_series, history_norm, SimError, Trajectory};
use crate::network::HistorySpec;
use crate::timescale::{circle_minus, log_nabla_exp, TimeScale};

/// Distances below this are treated as exact convergence.
pub const CONVERGED_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyzerError {
    #[error("need at least {need} usable points after burn-in, found {found}")]
    TooFewPoints { need: usize, found: usize },
    #[error("series does not cover t = {0}")]
    CoverageGap(f64),
    #[error(transparent)]
    Sim(#[from] SimError),
}

pub type Result<T> = std::result::Result<T, AnalyzerError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// Negated slope of `log d` against `t`; `+inf` when the series has
    /// collapsed below [`CONVERGED_FLOOR`].
    pub lambda_fit: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least-squares fit of `log d = a - lambda t` over points with `t >= burn_in`.
///
/// Points below [`CONVERGED_FLOOR`] carry only rounding noise and are left
/// out of the fit.
pub fn decay_fit(series: &[(f64, f64)], burn_in: f64) -> Result<DecayFit> {
    let after: Vec<(f64, f64)> = series.iter().copied().filter(|p| p.0 >= burn_in).collect();
    if after.len() >= 10 && after.iter().all(|p| p.1 < CONVERGED_FLOOR) {
        return Ok(DecayFit {
            lambda_fit: f64::INFINITY,
            r_squared: 1.0,
            points: after.len(),
        });
    }
    let pts: Vec<(f64, f64)> = after
        .iter()
        .filter(|p| p.1 >= CONVERGED_FLOOR)
        .map(|&(t, d)| (t, d.ln()))
        .collect();
    if pts.len() < 10 {
        return Err(AnalyzerError::TooFewPoints {
            need: 10,
            found: pts.len(),
        });
    }
    let m = pts.len() as f64;
    let mean_t = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for &(t, y) in &pts {
        stt += (t - mean_t) * (t - mean_t);
        sty += (t - mean_t) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    let slope = if stt > 0.0 { sty / stt } else { 0.0 };
    let r_squared = if syy > 0.0 { (sty * sty) / (stt * syy) } else { 1.0 };
    Ok(DecayFit {
        lambda_fit: -slope,
        r_squared,
        points: pts.len(),
    })
}

/// One row of the stability table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSample {
    pub t: f64,
    pub distance: f64,
    pub bound: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub lambda: f64,
    pub m: f64,
    pub initial_norm: f64,
    pub fit: Option<DecayFit>,
    pub bound_margin: f64,
    pub violated: bool,
    /// Set when the negated rate is not positively regressive, so the
    /// exponential bound has no meaning on this scale.
    pub inadmissible: bool,
    pub samples: Vec<BoundSample>,
}

impl StabilityReport {
    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new();
        kv.push_f64("lambda", self.lambda);
        kv.push_f64("M", self.m);
        kv.push_f64("initial_norm", self.initial_norm);
        match &self.fit {
            Some(fit) => {
                kv.push_f64("lambda_fit", fit.lambda_fit);
                kv.push_f64("r_squared", fit.r_squared);
            }
            None => {
                kv.push("lambda_fit", "none");
                kv.push("r_squared", "none");
            }
        }
        kv.push_f64("bound_margin", self.bound_margin);
        kv.push("inadmissible", self.inadmissible);
        kv.push("violated", self.violated);
        kv
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,distance,bound,margin")?;
        for s in &self.samples {
            writeln!(
                w,
                "{},{},{},{}",
                fmt_f64(s.t),
                fmt_f64(s.distance),
                fmt_f64(s.bound),
                fmt_f64(s.margin)
            )?;
        }
        Ok(())
    }
}

/// Violation threshold for a bound value: absolute 1e-9 plus 1e-6 relative.
pub fn tolerance(bound: f64) -> f64 {
    1e-9 + 1e-6 * bound.abs()
}

/// Checks `||Z - Z*||(t) <= M e_{(-)lambda}(t, t0) ||psi - psi*||_0` at
/// every grid point from the initial time on.
pub fn verify_bound(
    a: &Trajectory,
    b: &Trajectory,
    ha: &HistorySpec,
    hb: &HistorySpec,
    cert: &Certificate,
    ts: &TimeScale,
    burn_in_fraction: f64,
) -> Result<StabilityReport> {
    let series = distance_series(a, b)?;
    let t0 = a.t0();
    let initial_norm = history_norm(ha, hb, ts, (a.start(), t0));
    let lambda = cert.lambda;
    let rate = |t: f64| {
        let nu = ts.graininess(t).unwrap_or(0.0);
        circle_minus(lambda, nu).unwrap_or(f64::NEG_INFINITY)
    };
    let mut samples = Vec::with_capacity(series.len());
    let mut log_exp = 0.0;
    let mut inadmissible = false;
    let mut prev_t = t0;
    for &(t, distance) in &series {
        if !inadmissible && t > prev_t {
            match log_nabla_exp(rate, ts, t, prev_t) {
                Ok(v) if v.is_finite() => log_exp += v,
                _ => inadmissible = true,
            }
        }
        prev_t = t;
        let bound = if inadmissible {
            0.0
        } else {
            cert.m * log_exp.exp() * initial_norm
        };
        samples.push(BoundSample {
            t,
            distance,
            bound,
            margin: bound - distance,
        });
    }
    let violated = samples.iter().any(|s| s.margin < -tolerance(s.bound))
        || (inadmissible && samples.iter().any(|s| s.distance > 0.0));
    let bound_margin = samples
        .iter()
        .map(|s| s.margin)
        .fold(f64::INFINITY, f64::min);
    let horizon = series.last().map(|p| p.0).unwrap_or(t0);
    let burn_in = t0 + burn_in_fraction * (horizon - t0);
    Ok(StabilityReport {
        lambda,
        m: cert.m,
        initial_norm,
        fit: decay_fit(&series, burn_in).ok(),
        bound_margin,
        violated,
        inadmissible,
        samples,
    })
}

/// A sampled scalar series with linear interpolation between samples.
#[derive(Debug, Clone, Copy)]
pub struct Series<'a> {
    pub times: &'a [f64],
    pub values: &'a [f64],
}

impl<'a> Series<'a> {
    pub fn new(times: &'a [f64], values: &'a [f64]) -> Self {
        Series { times, values }
    }

    pub fn at(&self, t: f64) -> Option<f64> {
        let k = self.times.partition_point(|&s| s < t);
        self.at_index(t, k)
    }

    /// Interpolated value at `t`, given `k`, the first sample index with
    /// `times[k] >= t`.
    fn at_index(&self, t: f64, k: usize) -> Option<f64> {
        let times = self.times;
        let last = *times.last()?;
        if t < times[0] - 1e-9 || t > last + 1e-9 {
            return None;
        }
        if k == 0 {
            return Some(self.values[0]);
        }
        if k >= times.len() {
            return Some(self.values[times.len() - 1]);
        }
        if times[k] == t {
            return Some(self.values[k]);
        }
        let (t0, t1) = (times[k - 1], times[k]);
        let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
        Some(self.values[k - 1] + w * (self.values[k] - self.values[k - 1]))
    }

    /// `max |v|` over samples inside `window`.
    pub fn amplitude(&self, window: (f64, f64)) -> f64 {
        self.times
            .iter()
            .zip(self.values)
            .filter(|(t, _)| **t >= window.0 && **t <= window.1)
            .fold(0.0, |m, (_, v)| m.max(v.abs()))
    }
}

/// `sup |x(t + tau) - x(t)|` over the samples of `window`.
pub fn translation_error(series: &Series<'_>, tau: f64, window: (f64, f64)) -> Result<f64> {
    for edge in [window.0, window.1, window.0 + tau, window.1 + tau] {
        if series.at(edge).is_none() {
            return Err(AnalyzerError::CoverageGap(edge));
        }
    }
    let times = series.times;
    let first = times.partition_point(|&s| s < window.0);
    // shifted times increase with t, so the lookup cursor only moves forward
    let mut cursor = times.partition_point(|&s| s < window.0 + tau);
    let mut worst: f64 = 0.0;
    for (&t, &v) in times[first..].iter().zip(&series.values[first..]) {
        if t > window.1 {
            break;
        }
        let target = t + tau;
        while cursor < times.len() && times[cursor] < target {
            cursor += 1;
        }
        let shifted = series
            .at_index(target, cursor)
            .ok_or(AnalyzerError::CoverageGap(target))?;
        worst = worst.max((shifted - v).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslationScan {
    pub hits: Vec<f64>,
    /// Largest distance between consecutive hits, counting the distances
    /// from the ends of the scanned range to the first and last hit.
    pub max_gap: f64,
}

/// All shifts `tau` on the `tau_step` lattice of `tau_range` whose
/// translation error is at most `epsilon`.
pub fn scan_translation_numbers(
    series: &Series<'_>,
    window: (f64, f64),
    epsilon: f64,
    tau_range: (f64, f64),
    tau_step: f64,
) -> Result<TranslationScan> {
    assert!(tau_step > 0.0, "tau_step must be positive");
    let count = ((tau_range.1 - tau_range.0) / tau_step + 1e-9).floor() as usize + 1;
    let taus: Vec<f64> = (0..count)
        .map(|k| tau_range.0 + k as f64 * tau_step)
        .collect();
    let errors: Vec<Result<f64>> = taus
        .par_iter()
        .map(|&tau| translation_error(series, tau, window))
        .collect();
    let mut hits = Vec::new();
    for (tau, err) in taus.iter().zip(errors) {
        if err? <= epsilon {
            hits.push(*tau);
        }
    }
    let max_gap = if hits.is_empty() {
        tau_range.1 - tau_range.0
    } else {
        let inner = hits.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        inner
            .max(hits[0] - tau_range.0)
            .max(tau_range.1 - hits[hits.len() - 1])
    };
    Ok(TranslationScan { hits, max_gap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn fit_exact_exponential() {
        let s: Vec<(f64, f64)> = (0..200).map(|k| {
            let t = k as f64 * 0.1;
            (t, (-0.3 * t).exp())
        }).collect();
        let fit = decay_fit(&s, 2.0).unwrap();
        assert_abs_diff_eq!(fit.lambda_fit, 0.3, epsilon = 1e-6);
        assert!(fit.r_squared > 1.0 - 1e-9);
    }

    #[test]
    fn fit_constant_and_degenerate() {
        let s: Vec<(f64, f64)> = (0..50).map(|k| (k as f64, 0.7)).collect();
        let fit = decay_fit(&s, 0.0).unwrap();
        assert_abs_diff_eq!(fit.lambda_fit, 0.0, epsilon = 1e-9);
        let zero: Vec<(f64, f64)> = (0..50).map(|k| (k as f64, 0.0)).collect();
        assert_eq!(decay_fit(&zero, 0.0).unwrap().lambda_fit, f64::INFINITY);
        assert!(decay_fit(&s[..5], 0.0).is_err());
    }

    #[test]
    fn translation_of_sine() {
        let times: Vec<f64> = (0..=4000).map(|k| k as f64 * 0.01).collect();
        let values: Vec<f64> = times.iter().map(|t| t.sin()).collect();
        let s = Series::new(&times, &values);
        let w = (0.0, 10.0);
        assert_eq!(translation_error(&s, 0.0, w).unwrap(), 0.0);
        assert!(translation_error(&s, 2.0 * PI, w).unwrap() < 1e-4);
        assert!(translation_error(&s, PI, w).unwrap() > 1.9);
        assert!(matches!(
            translation_error(&s, 35.0, w),
            Err(AnalyzerError::CoverageGap(_))
        ));
        let scan = scan_translation_numbers(&s, w, 1e-3, (0.0, 20.0), 0.0005).unwrap();
        assert!(scan.hits.iter().any(|&t| t < 0.01));
        assert!(scan.hits.iter().any(|&t| (t - 2.0 * PI).abs() < 0.01));
        assert!(scan.hits.iter().all(|&t| {
            let r = t.rem_euclid(2.0 * PI);
            r < 0.01 || 2.0 * PI - r < 0.01
        }));
    }

    #[test]
    fn constant_series_hits_everything() {
        let times: Vec<f64> = (0..=300).map(|k| k as f64 * 0.1).collect();
        let values = vec![0.4; times.len()];
        let s = Series::new(&times, &values);
        let scan = scan_translation_numbers(&s, (0.0, 10.0), 1e-6, (0.0, 20.0), 0.5).unwrap();
        assert_eq!(scan.hits.len(), 41);
        assert_abs_diff_eq!(scan.max_gap, 0.5, epsilon = 1e-12);
    }
}
