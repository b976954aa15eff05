//! Existence and stability arithmetic over coefficient bounds.
//!
//! Everything here works on a [`BoundSet`] of plain numbers: the radius test
//! and contraction constant for the almost periodic solution, the four
//! rate functions whose common positivity region yields the decay rate, and
//! the overshoot constant of the stability estimate.

use thiserror::Error;

use crate::coeffs::{CoeffError, SamplingGrid};
use crate::kv::{KvError, KvMap};
use crate::network::{CoeffKey, NetworkSpec};
use crate::timescale::TimeScale;

/// Bisection stops once the bracket is narrower than this.
pub const LAMBDA_TOL: f64 = 1e-8;
/// Rate functions must exceed this at the returned decay rate.
pub const POSITIVITY_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConditionsError {
    #[error("degenerate decay: inf |{0}| = 0")]
    DegenerateDecay(String),
    #[error("graininess is unbounded on the working window")]
    UnboundedGraininess,
    #[error("contraction constant kappa = {0} is not below 1")]
    Infeasible(f64),
    #[error("no positive decay rate keeps all rate functions positive")]
    NoLambda,
    #[error("overshoot constant M = {0} is not a finite number above 1")]
    BadOvershoot(f64),
    #[error(transparent)]
    Coeff(#[from] CoeffError),
    #[error(transparent)]
    Kv(#[from] KvError),
}

pub type Result<T> = std::result::Result<T, ConditionsError>;

/// Sup bounds of every coefficient and delay, inf bounds of the decay rates.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundSet {
    pub n: usize,
    pub alpha_sup: Vec<f64>,
    pub alpha_inf: Vec<f64>,
    pub c_sup: Vec<f64>,
    pub c_inf: Vec<f64>,
    pub d: Vec<Vec<f64>>,
    pub dtau: Vec<Vec<f64>>,
    pub dbar: Vec<Vec<f64>>,
    pub dtilde: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub e: Vec<f64>,
    pub input_x: Vec<f64>,
    pub input_s: Vec<f64>,
    pub eta: Vec<f64>,
    pub varsigma: Vec<f64>,
    pub tau: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    pub zeta: Vec<Vec<f64>>,
    pub nu_sup: f64,
}

impl BoundSet {
    pub fn zeros(n: usize) -> Self {
        let v = || vec![0.0; n];
        let m = || vec![vec![0.0; n]; n];
        BoundSet {
            n,
            alpha_sup: v(),
            alpha_inf: v(),
            c_sup: v(),
            c_inf: v(),
            d: m(),
            dtau: m(),
            dbar: m(),
            dtilde: m(),
            b: v(),
            e: v(),
            input_x: v(),
            input_s: v(),
            eta: v(),
            varsigma: v(),
            tau: m(),
            sigma: m(),
            zeta: m(),
            nu_sup: 0.0,
        }
    }

    /// Multiplies every connection weight bound (`D`, `Dtau`, `Dbar`,
    /// `Dtilde`, `B`, `E`) by `k`.
    pub fn scale_weights(&self, k: f64) -> Self {
        let mut out = self.clone();
        for m in [&mut out.d, &mut out.dtau, &mut out.dbar, &mut out.dtilde] {
            m.iter_mut().flatten().for_each(|v| *v *= k);
        }
        out.b.iter_mut().for_each(|v| *v *= k);
        out.e.iter_mut().for_each(|v| *v *= k);
        out
    }

    pub fn with_nu_sup(&self, nu_sup: f64) -> Self {
        BoundSet {
            nu_sup,
            ..self.clone()
        }
    }

    fn set(&mut self, key: CoeffKey, sup: f64, inf: f64) {
        match key {
            CoeffKey::Alpha(i) => {
                self.alpha_sup[i] = sup;
                self.alpha_inf[i] = inf;
            }
            CoeffKey::C(i) => {
                self.c_sup[i] = sup;
                self.c_inf[i] = inf;
            }
            CoeffKey::D(i, j) => self.d[i][j] = sup,
            CoeffKey::Dtau(i, j) => self.dtau[i][j] = sup,
            CoeffKey::Dbar(i, j) => self.dbar[i][j] = sup,
            CoeffKey::Dtilde(i, j) => self.dtilde[i][j] = sup,
            CoeffKey::B(i) => self.b[i] = sup,
            CoeffKey::E(i) => self.e[i] = sup,
            CoeffKey::I(i) => self.input_x[i] = sup,
            CoeffKey::J(i) => self.input_s[i] = sup,
            CoeffKey::Eta(i) => self.eta[i] = sup,
            CoeffKey::Varsigma(i) => self.varsigma[i] = sup,
            CoeffKey::Tau(i, j) => self.tau[i][j] = sup,
            CoeffKey::Sigma(i, j) => self.sigma[i][j] = sup,
            CoeffKey::Zeta(i, j) => self.zeta[i][j] = sup,
        }
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new();
        kv.push("n", self.n);
        kv.push_f64("nu_sup", self.nu_sup);
        for key in CoeffKey::all(self.n) {
            let sup = self.sup(key);
            kv.push_f64(format!("{key}.sup"), sup);
            match key {
                CoeffKey::Alpha(i) => kv.push_f64(format!("{key}.inf"), self.alpha_inf[i]),
                CoeffKey::C(i) => kv.push_f64(format!("{key}.inf"), self.c_inf[i]),
                _ => {}
            }
        }
        kv
    }

    pub fn sup(&self, key: CoeffKey) -> f64 {
        match key {
            CoeffKey::Alpha(i) => self.alpha_sup[i],
            CoeffKey::C(i) => self.c_sup[i],
            CoeffKey::D(i, j) => self.d[i][j],
            CoeffKey::Dtau(i, j) => self.dtau[i][j],
            CoeffKey::Dbar(i, j) => self.dbar[i][j],
            CoeffKey::Dtilde(i, j) => self.dtilde[i][j],
            CoeffKey::B(i) => self.b[i],
            CoeffKey::E(i) => self.e[i],
            CoeffKey::I(i) => self.input_x[i],
            CoeffKey::J(i) => self.input_s[i],
            CoeffKey::Eta(i) => self.eta[i],
            CoeffKey::Varsigma(i) => self.varsigma[i],
            CoeffKey::Tau(i, j) => self.tau[i][j],
            CoeffKey::Sigma(i, j) => self.sigma[i][j],
            CoeffKey::Zeta(i, j) => self.zeta[i][j],
        }
    }
}

/// Collects bounds for every coefficient (override or sampled) and the
/// graininess sup over `window`.
pub fn compute_bounds(
    spec: &NetworkSpec,
    ts: &TimeScale,
    window: (f64, f64),
    grid: &SamplingGrid,
) -> Result<BoundSet> {
    let mut out = BoundSet::zeros(spec.n);
    for key in spec.keys() {
        let pair = spec.bound(key, grid).map_err(|e| match e {
            crate::network::NetworkError::Coeff(c) => ConditionsError::Coeff(c),
            other => ConditionsError::DegenerateDecay(other.to_string()),
        })?;
        out.set(key, pair.sup_abs, pair.inf_abs);
    }
    for i in 0..spec.n {
        if out.alpha_inf[i] <= 0.0 {
            return Err(ConditionsError::DegenerateDecay(CoeffKey::Alpha(i).to_string()));
        }
        if out.c_inf[i] <= 0.0 {
            return Err(ConditionsError::DegenerateDecay(CoeffKey::C(i).to_string()));
        }
    }
    out.nu_sup = ts.nu_sup(window.0, window.1);
    if !out.nu_sup.is_finite() {
        return Err(ConditionsError::UnboundedGraininess);
    }
    Ok(out)
}

/// Lipschitz constants of the activations.
pub fn lipschitz(spec: &NetworkSpec) -> Vec<f64> {
    spec.activations.iter().map(|a| a.lipschitz).collect()
}

/// `|f_j(0)|` for each activation.
pub fn f_zero_abs(spec: &NetworkSpec) -> Vec<f64> {
    spec.activations.iter().map(|a| a.at_zero().abs()).collect()
}

/// Radius-dependent quantities `(P, Q)`.
pub fn compute_pq(b: &BoundSet, lip: &[f64], f0: &[f64], r: f64) -> (Vec<f64>, Vec<f64>) {
    let n = b.n;
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for i in 0..n {
        let mut acc = b.alpha_sup[i] * b.eta[i] * r;
        for j in 0..n {
            let g = lip[j] * r + f0[j];
            acc += (b.d[i][j] + b.dtau[i][j]) * g;
            acc += b.dbar[i][j] * b.sigma[i][j] * g;
            acc += b.dtilde[i][j] * b.zeta[i][j] * g;
        }
        p[i] = acc + b.b[i] * r + b.input_x[i];
        q[i] = b.c_sup[i] * b.varsigma[i] * r + b.e[i] * (lip[i] * r + f0[i]) + b.input_s[i];
    }
    (p, q)
}

/// Radius-free quantities `(Pbar, Qbar)`, the Lipschitz parts of `(P, Q)`.
pub fn compute_pq_bar(b: &BoundSet, lip: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = b.n;
    let p = (0..n).map(|i| stm_gain(b, lip, i, 0.0) + b.b[i]).collect();
    let q = (0..n)
        .map(|i| b.c_sup[i] * b.varsigma[i] + b.e[i] * lip[i])
        .collect();
    (p, q)
}

/// Delay-weighted STM feedback sum with each delayed term amplified by
/// `exp(beta * delay)`; `beta = 0` gives the plain sum without `B`.
#[allow(clippy::needless_range_loop)]
fn stm_gain(b: &BoundSet, lip: &[f64], i: usize, beta: f64) -> f64 {
    let amp = |delay: f64| (beta * delay).exp();
    let mut acc = b.alpha_sup[i] * b.eta[i] * amp(b.eta[i]);
    for j in 0..b.n {
        acc += b.d[i][j] * lip[j];
        acc += b.dtau[i][j] * lip[j] * amp(b.tau[i][j]);
        acc += b.dbar[i][j] * lip[j] * b.sigma[i][j] * amp(b.sigma[i][j]);
        acc += b.dtilde[i][j] * lip[j] * b.zeta[i][j] * amp(b.zeta[i][j]);
    }
    acc
}

/// The four ratios compared against a threshold for one neuron:
/// `[P/a-, (1 + a+/a-) P, Q/c-, (1 + c+/c-) Q]`.
fn ratio_row(b: &BoundSet, i: usize, p: f64, q: f64) -> [f64; 4] {
    let (ap, am) = (b.alpha_sup[i], b.alpha_inf[i]);
    let (cp, cm) = (b.c_sup[i], b.c_inf[i]);
    [p / am, (1.0 + ap / am) * p, q / cm, (1.0 + cp / cm) * q]
}

fn row_max(rows: &[[f64; 4]]) -> f64 {
    rows.iter()
        .flatten()
        .fold(f64::NEG_INFINITY, |m, &v| m.max(v))
}

#[derive(Debug, Clone, PartialEq)]
pub struct H3Report {
    pub r: f64,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub p_bar: Vec<f64>,
    pub q_bar: Vec<f64>,
    /// Per neuron `[P/a-, (1 + a+/a-) P, Q/c-, (1 + c+/c-) Q]`.
    pub r_ratios: Vec<[f64; 4]>,
    /// Same layout with `Pbar`, `Qbar`.
    pub kappa_ratios: Vec<[f64; 4]>,
    pub max_r_expr: f64,
    pub kappa: f64,
    pub feasible: bool,
}

impl H3Report {
    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new();
        kv.push_f64("r", self.r);
        for i in 0..self.p.len() {
            let k = i + 1;
            kv.push_f64(format!("P_{k}"), self.p[i]);
            kv.push_f64(format!("Q_{k}"), self.q[i]);
            kv.push_f64(format!("Pbar_{k}"), self.p_bar[i]);
            kv.push_f64(format!("Qbar_{k}"), self.q_bar[i]);
        }
        let names = ["P_over_alpha_inf", "P_amplified", "Q_over_c_inf", "Q_amplified"];
        for (i, (row, bar)) in self.r_ratios.iter().zip(&self.kappa_ratios).enumerate() {
            for (k, name) in names.iter().enumerate() {
                kv.push_f64(format!("ratio.{name}_{}", i + 1), row[k]);
                kv.push_f64(format!("ratio_bar.{name}_{}", i + 1), bar[k]);
            }
        }
        kv.push_f64("max_r_expr", self.max_r_expr);
        kv.push_f64("kappa", self.kappa);
        kv.push("feasible", self.feasible);
        kv
    }
}

/// Radius test and contraction constant at radius `r`.
pub fn check_h3(b: &BoundSet, lip: &[f64], f0: &[f64], r: f64) -> H3Report {
    let (p, q) = compute_pq(b, lip, f0, r);
    let (p_bar, q_bar) = compute_pq_bar(b, lip);
    let r_ratios: Vec<[f64; 4]> = (0..b.n).map(|i| ratio_row(b, i, p[i], q[i])).collect();
    let kappa_ratios: Vec<[f64; 4]> = (0..b.n)
        .map(|i| ratio_row(b, i, p_bar[i], q_bar[i]))
        .collect();
    let max_r_expr = row_max(&r_ratios);
    let kappa = row_max(&kappa_ratios);
    H3Report {
        r,
        feasible: max_r_expr <= r && kappa < 1.0,
        p,
        q,
        p_bar,
        q_bar,
        r_ratios,
        kappa_ratios,
        max_r_expr,
        kappa,
    }
}

/// Contraction constant alone; it does not depend on the radius.
pub fn kappa(b: &BoundSet, lip: &[f64]) -> f64 {
    let (p_bar, q_bar) = compute_pq_bar(b, lip);
    let rows: Vec<[f64; 4]> = (0..b.n)
        .map(|i| ratio_row(b, i, p_bar[i], q_bar[i]))
        .collect();
    row_max(&rows)
}

/// Smallest radius of `r_grid` that passes [`check_h3`].
pub fn search_r(b: &BoundSet, lip: &[f64], f0: &[f64], r_grid: &[f64]) -> Option<f64> {
    r_grid
        .iter()
        .copied()
        .find(|&r| check_h3(b, lip, f0, r).feasible)
}

/// The four rate functions, one entry per neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct HValues {
    pub h: Vec<f64>,
    pub h_bar: Vec<f64>,
    pub h_star: Vec<f64>,
    pub h_bar_star: Vec<f64>,
}

impl HValues {
    pub fn all(&self) -> impl Iterator<Item = f64> + '_ {
        self.h
            .iter()
            .chain(&self.h_bar)
            .chain(&self.h_star)
            .chain(&self.h_bar_star)
            .copied()
    }

    pub fn min(&self) -> f64 {
        self.all().fold(f64::INFINITY, f64::min)
    }
}

pub fn h_functions(b: &BoundSet, lip: &[f64], beta: f64) -> HValues {
    let n = b.n;
    let grain = (beta * b.nu_sup).exp();
    let mut out = HValues {
        h: vec![0.0; n],
        h_bar: vec![0.0; n],
        h_star: vec![0.0; n],
        h_bar_star: vec![0.0; n],
    };
    for i in 0..n {
        let (ap, am) = (b.alpha_sup[i], b.alpha_inf[i]);
        let (cp, cm) = (b.c_sup[i], b.c_inf[i]);
        let gain = stm_gain(b, lip, i, beta);
        let slow = cp * b.varsigma[i] * (beta * b.varsigma[i]).exp();
        let self_act = b.e[i] * lip[i];
        out.h[i] = am - beta - (grain * gain + b.b[i]);
        out.h_bar[i] = cm - beta - (grain * slow + self_act);
        out.h_star[i] = am - beta - (ap * grain + am - beta) * (gain + b.b[i]);
        out.h_bar_star[i] = cm - beta - (cp * grain + cm - beta) * (slow + self_act);
    }
    out
}

/// Decay rate and overshoot constant of the exponential stability estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub lambda: f64,
    pub m: f64,
    pub nu_sup: f64,
    /// Exclusive upper limit of the search interval.
    pub lambda_upper: f64,
    pub h_values: HValues,
}

impl Certificate {
    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new();
        kv.push_f64("lambda", self.lambda);
        kv.push_f64("M", self.m);
        kv.push_f64("nu_sup", self.nu_sup);
        kv.push_f64("lambda_upper", self.lambda_upper);
        let hv = &self.h_values;
        for i in 0..hv.h.len() {
            kv.push_f64(format!("H_{}", i + 1), hv.h[i]);
            kv.push_f64(format!("Hbar_{}", i + 1), hv.h_bar[i]);
            kv.push_f64(format!("Hstar_{}", i + 1), hv.h_star[i]);
            kv.push_f64(format!("Hbarstar_{}", i + 1), hv.h_bar_star[i]);
        }
        kv
    }

    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        let mut h_values = HValues {
            h: vec![],
            h_bar: vec![],
            h_star: vec![],
            h_bar_star: vec![],
        };
        let mut i = 1;
        while kv.get(&format!("H_{i}")).is_some() {
            h_values.h.push(kv.get_f64(&format!("H_{i}"))?);
            h_values.h_bar.push(kv.get_f64(&format!("Hbar_{i}"))?);
            h_values.h_star.push(kv.get_f64(&format!("Hstar_{i}"))?);
            h_values.h_bar_star.push(kv.get_f64(&format!("Hbarstar_{i}"))?);
            i += 1;
        }
        Ok(Certificate {
            lambda: kv.get_f64("lambda")?,
            m: kv.get_f64("M")?,
            nu_sup: kv.get_f64("nu_sup")?,
            lambda_upper: kv.get_f64("lambda_upper")?,
            h_values,
        })
    }
}

/// Exclusive upper end of the decay-rate search: the smallest decay inf, and
/// `1 / nu_sup` so that the negated rate stays positively regressive.
pub fn lambda_upper(b: &BoundSet) -> f64 {
    let mut upper = b
        .alpha_inf
        .iter()
        .chain(&b.c_inf)
        .fold(f64::INFINITY, |m, &v| m.min(v));
    if b.nu_sup > 0.0 {
        upper = upper.min(1.0 / b.nu_sup);
    }
    upper
}

/// `max_i { alpha_i- / Pbar_i, c_i- / Qbar_i }`.
pub fn overshoot(b: &BoundSet, lip: &[f64]) -> f64 {
    let (p_bar, q_bar) = compute_pq_bar(b, lip);
    (0..b.n)
        .flat_map(|i| [b.alpha_inf[i] / p_bar[i], b.c_inf[i] / q_bar[i]])
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest decay rate (to within [`LAMBDA_TOL`]) at which all four rate
/// functions stay above [`POSITIVITY_MARGIN`] for every neuron.
pub fn find_lambda(b: &BoundSet, lip: &[f64]) -> Result<Certificate> {
    for i in 0..b.n {
        if b.alpha_inf[i] <= 0.0 {
            return Err(ConditionsError::DegenerateDecay(CoeffKey::Alpha(i).to_string()));
        }
        if b.c_inf[i] <= 0.0 {
            return Err(ConditionsError::DegenerateDecay(CoeffKey::C(i).to_string()));
        }
    }
    if !b.nu_sup.is_finite() {
        return Err(ConditionsError::UnboundedGraininess);
    }
    let k = kappa(b, lip);
    if !(k < 1.0) {
        return Err(ConditionsError::Infeasible(k));
    }
    let positive = |beta: f64| h_functions(b, lip, beta).min() >= POSITIVITY_MARGIN;
    let upper = lambda_upper(b);
    let (mut lo, mut hi) = (0.0, upper);
    if !positive(LAMBDA_TOL.min(0.5 * upper)) {
        return Err(ConditionsError::NoLambda);
    }
    while hi - lo > LAMBDA_TOL {
        let mid = 0.5 * (lo + hi);
        if positive(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if !(lo > 0.0) {
        return Err(ConditionsError::NoLambda);
    }
    let m = overshoot(b, lip);
    if !m.is_finite() || !(m > 1.0) {
        return Err(ConditionsError::BadOvershoot(m));
    }
    Ok(Certificate {
        lambda: lo,
        m,
        nu_sup: b.nu_sup,
        lambda_upper: upper,
        h_values: h_functions(b, lip, lo),
    })
}

/// True when a 1% larger rate breaks positivity or leaves the search range.
pub fn maximality_witness(b: &BoundSet, lip: &[f64], cert: &Certificate) -> bool {
    let bumped = 1.01 * cert.lambda;
    bumped >= cert.lambda_upper || h_functions(b, lip, bumped).all().any(|v| v <= 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Two-neuron bound set with round numbers.
    fn toy() -> BoundSet {
        let mut b = BoundSet::zeros(2);
        b.alpha_sup = vec![1.0, 1.0];
        b.alpha_inf = vec![0.8, 0.9];
        b.c_sup = vec![0.5, 0.6];
        b.c_inf = vec![0.4, 0.5];
        b.d = vec![vec![0.1, 0.05], vec![0.0, 0.1]];
        b.e = vec![0.1, 0.05];
        b.eta = vec![0.1, 0.0];
        b.varsigma = vec![0.2, 0.1];
        b.b = vec![0.02, 0.0];
        b.input_x = vec![0.1, 0.2];
        b.input_s = vec![0.05, 0.0];
        b
    }

    #[test]
    fn zero_bounds_give_zero_quantities() {
        let b = BoundSet::zeros(3);
        let (p, q) = compute_pq(&b, &[1.0; 3], &[0.0; 3], 0.7);
        assert!(p.iter().chain(&q).all(|&v| v == 0.0));
        let (pb, qb) = compute_pq_bar(&b, &[1.0; 3]);
        assert!(pb.iter().chain(&qb).all(|&v| v == 0.0));
    }

    #[test]
    fn pq_by_hand() {
        let b = toy();
        let lip = [1.0, 1.0];
        let r = 0.5;
        let (p, q) = compute_pq(&b, &lip, &[0.0, 0.0], r);
        assert_abs_diff_eq!(p[0], 1.0 * 0.1 * 0.5 + 0.15 * 0.5 + 0.02 * 0.5 + 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(q[1], 0.6 * 0.1 * 0.5 + 0.05 * 0.5, epsilon = 1e-15);
        // with f(0) = 0 the radius enters linearly
        let (pb, qb) = compute_pq_bar(&b, &lip);
        assert_abs_diff_eq!(p[0], r * pb[0] + b.input_x[0], epsilon = 1e-15);
        assert_abs_diff_eq!(q[0], r * qb[0] + b.input_s[0], epsilon = 1e-15);
        // f(0) shifts by weight times |f(0)|
        let (p2, _) = compute_pq(&b, &lip, &[0.5, 0.0], r);
        assert_abs_diff_eq!(p2[0] - p[0], 0.1 * 0.5, epsilon = 1e-15);
    }

    #[test]
    fn h3_report_consistency() {
        let b = toy();
        let rep = check_h3(&b, &[1.0, 1.0], &[0.0, 0.0], 1.0);
        assert_eq!(rep.feasible, rep.max_r_expr <= 1.0 && rep.kappa < 1.0);
        assert_eq!(rep.kappa, kappa(&b, &[1.0, 1.0]));
        let r = search_r(&b, &[1.0, 1.0], &[0.0, 0.0], &[0.01, 0.1, 0.5, 1.0, 2.0]).unwrap();
        assert!(check_h3(&b, &[1.0, 1.0], &[0.0, 0.0], r).feasible);
        let kv = rep.to_kv();
        assert_eq!(kv.get("feasible"), Some(if rep.feasible { "true" } else { "false" }));
    }

    #[test]
    fn search_r_zero_system() {
        let mut b = BoundSet::zeros(1);
        b.alpha_sup = vec![1.0];
        b.alpha_inf = vec![1.0];
        b.c_sup = vec![1.0];
        b.c_inf = vec![1.0];
        assert_eq!(search_r(&b, &[1.0], &[0.0], &[0.1, 0.2]), Some(0.1));
        let heavy = toy().scale_weights(40.0);
        assert_eq!(search_r(&heavy, &[1.0, 1.0], &[0.0, 0.0], &[0.1, 1.0, 10.0]), None);
    }

    #[test]
    fn h_functions_at_zero_match_closed_form() {
        let b = toy();
        let lip = [1.0, 1.0];
        let h = h_functions(&b, &lip, 0.0);
        let (pb, qb) = compute_pq_bar(&b, &lip);
        for i in 0..2 {
            assert_abs_diff_eq!(h.h[i], b.alpha_inf[i] - pb[i], epsilon = 1e-15);
            assert_abs_diff_eq!(h.h_bar[i], b.c_inf[i] - qb[i], epsilon = 1e-15);
            assert_abs_diff_eq!(
                h.h_star[i],
                b.alpha_inf[i] - (b.alpha_sup[i] + b.alpha_inf[i]) * pb[i],
                epsilon = 1e-15
            );
        }
        // the growth of exp(beta * nu_sup) is what drives the starred
        // functions negative; on a dense scale they need not be
        let grainy = b.with_nu_sup(1.0);
        assert!(h_functions(&grainy, &lip, 1e3).all().all(|v| v < 0.0));
    }

    #[test]
    fn lambda_certificate_toy() {
        let b = toy().with_nu_sup(1.0);
        let lip = [1.0, 1.0];
        let cert = find_lambda(&b, &lip).unwrap();
        assert!(cert.lambda > 0.0 && cert.lambda < lambda_upper(&b));
        assert!(cert.h_values.min() > 0.0);
        assert!(maximality_witness(&b, &lip, &cert));
        assert!(cert.m > 1.0);
        let dense = find_lambda(&b.with_nu_sup(0.0), &lip).unwrap();
        assert!(dense.lambda >= cert.lambda);
        let back = Certificate::from_kv(&KvMap::parse(&cert.to_kv().render()).unwrap()).unwrap();
        assert_eq!(back, cert);
    }

    #[test]
    fn lambda_rejects_infeasible() {
        let b = toy().scale_weights(40.0);
        assert!(matches!(
            find_lambda(&b, &[1.0, 1.0]),
            Err(ConditionsError::Infeasible(_))
        ));
        let mut degenerate = toy();
        degenerate.c_inf[1] = 0.0;
        assert!(matches!(
            find_lambda(&degenerate, &[1.0, 1.0]),
            Err(ConditionsError::DegenerateDecay(_))
        ));
    }
}
