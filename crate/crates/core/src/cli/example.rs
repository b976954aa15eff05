//! Built-in two-neuron configuration with quasi-periodic coefficients.
//!
//! Bounds ship as user overrides: the listed delay bounds are far below the
//! true sups of the delay expressions (which reach 1), and the checker is
//! meant to reproduce the published arithmetic from the listed numbers. Two
//! listed values are replaced by the ones the published arithmetic actually
//! uses: `varsigma_1+ = 0.04` (listed 0.4) and `varsigma_2+ = 0.05` (listed
//! 0.5), and `E_2+ = 0.21` (listed 0.16). The transmission delays `tau_ij`
//! are not given, so they are zero.

use std::f64::consts::PI;

use crate::coeffs::{BoundPair, CoeffExpr};
use crate::network::{Activation, ActivationKind, CoeffKey, HistorySpec, NetworkSpec};
use crate::timescale::TimeScale;

use super::config::{default_r_grid, RunConfig, RunSection};

fn t() -> CoeffExpr {
    CoeffExpr::t()
}

/// `base + amp * sin(omega t)`
fn around_sin(base: f64, amp: f64, omega: f64) -> CoeffExpr {
    CoeffExpr::constant(base).add(t().affine(omega, 0.0).sin().scale(amp))
}

/// `base + amp * cos(omega t)`
fn around_cos(base: f64, amp: f64, omega: f64) -> CoeffExpr {
    CoeffExpr::constant(base).add(t().affine(omega, 0.0).cos().scale(amp))
}

fn sin_wave(amp: f64, omega: f64) -> CoeffExpr {
    t().affine(omega, 0.0).sin().scale(amp)
}

fn cos_wave(amp: f64, omega: f64) -> CoeffExpr {
    t().affine(omega, 0.0).cos().scale(amp)
}

/// `exp(-k |sin(omega t + phase)|)`
fn pulse_sin(k: f64, omega: f64, phase: f64) -> CoeffExpr {
    t().affine(omega, phase).sin().abs().scale(-k).exp()
}

/// `exp(-k |cos(omega t + phase)|)`
fn pulse_cos(k: f64, omega: f64, phase: f64) -> CoeffExpr {
    t().affine(omega, phase).cos().abs().scale(-k).exp()
}

/// Listed bound of the stimulus weights, `1 / (pi e^{2 pi})`.
pub fn stimulus_bound() -> f64 {
    1.0 / (PI * (2.0 * PI).exp())
}

pub fn example_network() -> NetworkSpec {
    let mut spec = NetworkSpec::zeros(2);
    let s2 = 2f64.sqrt();
    let s3 = 3f64.sqrt();
    let s5 = 5f64.sqrt();
    let s7 = 7f64.sqrt();
    let s11 = 11f64.sqrt();
    spec.activations = vec![Activation::new(ActivationKind::SinHalf, 1.0); 2];
    spec.alpha = vec![around_sin(0.895, 0.005, s7), around_cos(0.79, 0.01, s11)];
    spec.c = vec![around_sin(0.285, 0.005, s5), around_cos(0.275, 0.005, s3)];
    let weights = vec![
        vec![sin_wave(0.05, 1.0), sin_wave(0.05, 1.0)],
        vec![cos_wave(0.05, 1.0), cos_wave(0.05, 1.0)],
    ];
    spec.d = weights.clone();
    spec.dtau = weights.clone();
    spec.dbar = weights.clone();
    spec.dtilde = weights;
    let stim = stimulus_bound();
    spec.b = vec![sin_wave(stim, s2), cos_wave(stim, 1.0)];
    spec.e = vec![sin_wave(0.21, 1.0), cos_wave(0.16, s3)];
    spec.input_x = vec![sin_wave(0.08, s7), cos_wave(0.1, 1.0)];
    spec.input_s = vec![sin_wave(0.01, s2), cos_wave(0.02, s3)];
    spec.eta = vec![pulse_cos(5.0, PI, 1.5 * PI), pulse_cos(4.0, PI, 0.5 * PI)];
    spec.sigma = vec![
        vec![pulse_sin(4.0, PI, 0.0), pulse_cos(5.0, PI, 1.5 * PI)],
        vec![pulse_cos(6.0, PI, -1.5 * PI), pulse_sin(4.0, 3.0 * PI, 0.0)],
    ];
    spec.zeta = vec![
        vec![pulse_sin(7.0, 2.0 * PI, 0.0), pulse_sin(5.0, 5.0 * PI, 0.0)],
        vec![pulse_cos(4.0, PI, 2.5 * PI), pulse_cos(5.0, PI, 0.5 * PI)],
    ];
    spec.varsigma = vec![pulse_cos(4.0, PI, 1.5 * PI), pulse_sin(7.0, 3.0 * PI, 0.0)];

    let mut put = |key: CoeffKey, sup: f64, inf: f64| {
        spec.overrides.insert(key, BoundPair::user(sup, inf, false));
    };
    put(CoeffKey::Alpha(0), 0.9, 0.89);
    put(CoeffKey::Alpha(1), 0.8, 0.78);
    put(CoeffKey::C(0), 0.29, 0.28);
    put(CoeffKey::C(1), 0.28, 0.27);
    for i in 0..2 {
        for j in 0..2 {
            for make in [CoeffKey::D, CoeffKey::Dtau, CoeffKey::Dbar, CoeffKey::Dtilde] {
                put(make(i, j), 0.05, 0.0);
            }
            put(CoeffKey::Tau(i, j), 0.0, 0.0);
        }
        put(CoeffKey::B(i), stim, 0.0);
    }
    put(CoeffKey::E(0), 0.21, 0.0);
    put(CoeffKey::E(1), 0.21, 0.0);
    put(CoeffKey::I(0), 0.08, 0.0);
    put(CoeffKey::I(1), 0.1, 0.0);
    put(CoeffKey::J(0), 0.01, 0.0);
    put(CoeffKey::J(1), 0.02, 0.0);
    put(CoeffKey::Eta(0), 0.06, 0.0);
    put(CoeffKey::Eta(1), 0.05, 0.0);
    put(CoeffKey::Sigma(0, 0), 0.08, 0.0);
    put(CoeffKey::Sigma(0, 1), 0.07, 0.0);
    put(CoeffKey::Sigma(1, 0), 0.04, 0.0);
    put(CoeffKey::Sigma(1, 1), 0.02, 0.0);
    put(CoeffKey::Zeta(0, 0), 0.06, 0.0);
    put(CoeffKey::Zeta(0, 1), 0.05, 0.0);
    put(CoeffKey::Zeta(1, 0), 0.02, 0.0);
    put(CoeffKey::Zeta(1, 1), 0.03, 0.0);
    put(CoeffKey::Varsigma(0), 0.04, 0.0);
    put(CoeffKey::Varsigma(1), 0.05, 0.0);
    spec
}

/// The two initial functions used by the stability experiment.
pub fn example_histories() -> (HistorySpec, HistorySpec) {
    (
        HistorySpec::constant(&[0.5, -0.4], &[0.3, -0.2]),
        HistorySpec::constant(&[-0.3, 0.6], &[-0.1, 0.4]),
    )
}

/// Radius used by the published arithmetic.
pub const EXAMPLE_R: f64 = 0.45;

pub fn example_config(timescale: TimeScale, t_end: f64) -> RunConfig {
    let (a, b) = example_histories();
    RunConfig {
        network: example_network(),
        timescale,
        history: Some(a),
        history2: Some(b),
        run: RunSection {
            t_end,
            corrector_iters: 4,
            r_grid: default_r_grid(),
            r: Some(EXAMPLE_R),
            burn_in: 0.2,
            out: None,
        },
    }
}

/// Discrete variant: the integers, 200 steps.
pub fn example_integers() -> RunConfig {
    example_config(TimeScale::integers(), 200.0)
}

/// Continuous variant: the real line with step 0.01 up to t = 50.
pub fn example_reals() -> RunConfig {
    example_config(TimeScale::reals(0.01), 50.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficients_at_zero() {
        let spec = example_network();
        assert_eq!(spec.alpha[0].eval(0.0), 0.895);
        assert_eq!(spec.alpha[1].eval(0.0), 0.8);
        assert_eq!(spec.sigma[0][0].eval(0.0), 1.0);
        assert!((spec.eta[0].eval(0.0) - 1.0).abs() < 1e-12);
        assert_eq!(spec.d[1][0].eval(0.0), 0.05);
    }

    #[test]
    fn config_text_round_trips() {
        for cfg in [example_integers(), example_reals()] {
            let again = RunConfig::parse(&cfg.to_text()).unwrap();
            assert_eq!(again, cfg);
        }
    }
}
