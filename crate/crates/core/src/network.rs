//! Parameterisation of the competitive network and its right-hand sides.
//!
//! Each neuron carries a fast state `x_i` and a slow state `S_i`. The fast
//! equation combines a leakage term with a delay, instantaneous, delayed,
//! distributed and neutral couplings, the slow state and an input; the slow
//! equation has its own leakage delay, a self-activation term and an input.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use thiserror::Error;

use crate::coeffs::{resolve_bound, BoundPair, CoeffError, CoeffExpr, SamplingGrid};
use crate::timescale::{is_positively_regressive, TimeScale};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("no state available at t = {0} (history does not reach that far back)")]
    HistoryUnderflow(f64),
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error(transparent)]
    Coeff(#[from] CoeffError),
}

pub type Result<T> = std::result::Result<T, NetworkError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationKind {
    /// `sin(x / 2)`
    SinHalf,
    Tanh,
    Identity,
}

impl ActivationKind {
    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::SinHalf => "sin_half",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Identity => "identity",
        }
    }
}

impl FromStr for ActivationKind {
    type Err = NetworkError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sin_half" => Ok(ActivationKind::SinHalf),
            "tanh" => Ok(ActivationKind::Tanh),
            "identity" => Ok(ActivationKind::Identity),
            other => Err(NetworkError::Invalid(format!("unknown activation '{other}'"))),
        }
    }
}

/// An activation together with the Lipschitz constant the user assigns to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Activation {
    pub kind: ActivationKind,
    pub lipschitz: f64,
}

impl Activation {
    pub fn new(kind: ActivationKind, lipschitz: f64) -> Self {
        Activation { kind, lipschitz }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.kind {
            ActivationKind::SinHalf => (0.5 * x).sin(),
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Identity => x,
        }
    }

    pub fn at_zero(&self) -> f64 {
        self.eval(0.0)
    }
}

/// Identifies one coefficient or delay; indices are zero-based internally
/// and printed one-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CoeffKey {
    Alpha(usize),
    C(usize),
    D(usize, usize),
    Dtau(usize, usize),
    Dbar(usize, usize),
    Dtilde(usize, usize),
    B(usize),
    E(usize),
    I(usize),
    J(usize),
    Eta(usize),
    Varsigma(usize),
    Tau(usize, usize),
    Sigma(usize, usize),
    Zeta(usize, usize),
}

impl CoeffKey {
    pub fn is_delay(&self) -> bool {
        matches!(
            self,
            CoeffKey::Eta(_)
                | CoeffKey::Varsigma(_)
                | CoeffKey::Tau(..)
                | CoeffKey::Sigma(..)
                | CoeffKey::Zeta(..)
        )
    }

    /// Every key of an `n`-neuron network, in a stable order.
    pub fn all(n: usize) -> Vec<CoeffKey> {
        let mut out = Vec::new();
        for i in 0..n {
            out.push(CoeffKey::Alpha(i));
        }
        for i in 0..n {
            out.push(CoeffKey::C(i));
        }
        type Pair = fn(usize, usize) -> CoeffKey;
        let pairs: [Pair; 4] = [CoeffKey::D, CoeffKey::Dtau, CoeffKey::Dbar, CoeffKey::Dtilde];
        for make in pairs {
            for i in 0..n {
                for j in 0..n {
                    out.push(make(i, j));
                }
            }
        }
        type Single = fn(usize) -> CoeffKey;
        let singles: [Single; 6] = [
            CoeffKey::B,
            CoeffKey::E,
            CoeffKey::I,
            CoeffKey::J,
            CoeffKey::Eta,
            CoeffKey::Varsigma,
        ];
        for make in singles {
            for i in 0..n {
                out.push(make(i));
            }
        }
        let delays: [Pair; 3] = [CoeffKey::Tau, CoeffKey::Sigma, CoeffKey::Zeta];
        for make in delays {
            for i in 0..n {
                for j in 0..n {
                    out.push(make(i, j));
                }
            }
        }
        out
    }

    fn indices(&self) -> (usize, Option<usize>) {
        match *self {
            CoeffKey::Alpha(i)
            | CoeffKey::C(i)
            | CoeffKey::B(i)
            | CoeffKey::E(i)
            | CoeffKey::I(i)
            | CoeffKey::J(i)
            | CoeffKey::Eta(i)
            | CoeffKey::Varsigma(i) => (i, None),
            CoeffKey::D(i, j)
            | CoeffKey::Dtau(i, j)
            | CoeffKey::Dbar(i, j)
            | CoeffKey::Dtilde(i, j)
            | CoeffKey::Tau(i, j)
            | CoeffKey::Sigma(i, j)
            | CoeffKey::Zeta(i, j) => (i, Some(j)),
        }
    }

    fn family(&self) -> &'static str {
        match self {
            CoeffKey::Alpha(_) => "alpha",
            CoeffKey::C(_) => "c",
            CoeffKey::D(..) => "D",
            CoeffKey::Dtau(..) => "Dtau",
            CoeffKey::Dbar(..) => "Dbar",
            CoeffKey::Dtilde(..) => "Dtilde",
            CoeffKey::B(_) => "B",
            CoeffKey::E(_) => "E",
            CoeffKey::I(_) => "I",
            CoeffKey::J(_) => "J",
            CoeffKey::Eta(_) => "eta",
            CoeffKey::Varsigma(_) => "varsigma",
            CoeffKey::Tau(..) => "tau",
            CoeffKey::Sigma(..) => "sigma",
            CoeffKey::Zeta(..) => "zeta",
        }
    }
}

impl fmt::Display for CoeffKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.indices() {
            (i, None) => write!(f, "{}_{}", self.family(), i + 1),
            (i, Some(j)) => write!(f, "{}_{}_{}", self.family(), i + 1, j + 1),
        }
    }
}

impl FromStr for CoeffKey {
    type Err = NetworkError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || NetworkError::Invalid(format!("unknown coefficient key '{s}'"));
        let mut parts = s.split('_');
        let family = parts.next().ok_or_else(bad)?;
        let idx: Vec<usize> = parts
            .map(|p| p.parse::<usize>().ok().filter(|&v| v >= 1).map(|v| v - 1))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(bad)?;
        let key = match (family, idx.as_slice()) {
            ("alpha", [i]) => CoeffKey::Alpha(*i),
            ("c", [i]) => CoeffKey::C(*i),
            ("B", [i]) => CoeffKey::B(*i),
            ("E", [i]) => CoeffKey::E(*i),
            ("I", [i]) => CoeffKey::I(*i),
            ("J", [i]) => CoeffKey::J(*i),
            ("eta", [i]) => CoeffKey::Eta(*i),
            ("varsigma", [i]) => CoeffKey::Varsigma(*i),
            ("D", [i, j]) => CoeffKey::D(*i, *j),
            ("Dtau", [i, j]) => CoeffKey::Dtau(*i, *j),
            ("Dbar", [i, j]) => CoeffKey::Dbar(*i, *j),
            ("Dtilde", [i, j]) => CoeffKey::Dtilde(*i, *j),
            ("tau", [i, j]) => CoeffKey::Tau(*i, *j),
            ("sigma", [i, j]) => CoeffKey::Sigma(*i, *j),
            ("zeta", [i, j]) => CoeffKey::Zeta(*i, *j),
            _ => return Err(bad()),
        };
        Ok(key)
    }
}

/// Full parameter set of an `n`-neuron network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub n: usize,
    pub alpha: Vec<CoeffExpr>,
    pub c: Vec<CoeffExpr>,
    pub d: Vec<Vec<CoeffExpr>>,
    pub dtau: Vec<Vec<CoeffExpr>>,
    pub dbar: Vec<Vec<CoeffExpr>>,
    pub dtilde: Vec<Vec<CoeffExpr>>,
    pub b: Vec<CoeffExpr>,
    pub e: Vec<CoeffExpr>,
    pub input_x: Vec<CoeffExpr>,
    pub input_s: Vec<CoeffExpr>,
    pub eta: Vec<CoeffExpr>,
    pub varsigma: Vec<CoeffExpr>,
    pub tau: Vec<Vec<CoeffExpr>>,
    pub sigma: Vec<Vec<CoeffExpr>>,
    pub zeta: Vec<Vec<CoeffExpr>>,
    pub activations: Vec<Activation>,
    pub overrides: BTreeMap<CoeffKey, BoundPair>,
}

impl NetworkSpec {
    /// Every coefficient zero, identity activations with `L = 1`.
    pub fn zeros(n: usize) -> Self {
        let v = || vec![CoeffExpr::zero(); n];
        let m = || vec![vec![CoeffExpr::zero(); n]; n];
        NetworkSpec {
            n,
            alpha: v(),
            c: v(),
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
            activations: vec![Activation::new(ActivationKind::Identity, 1.0); n],
            overrides: BTreeMap::new(),
        }
    }

    pub fn expr(&self, key: CoeffKey) -> &CoeffExpr {
        match key {
            CoeffKey::Alpha(i) => &self.alpha[i],
            CoeffKey::C(i) => &self.c[i],
            CoeffKey::D(i, j) => &self.d[i][j],
            CoeffKey::Dtau(i, j) => &self.dtau[i][j],
            CoeffKey::Dbar(i, j) => &self.dbar[i][j],
            CoeffKey::Dtilde(i, j) => &self.dtilde[i][j],
            CoeffKey::B(i) => &self.b[i],
            CoeffKey::E(i) => &self.e[i],
            CoeffKey::I(i) => &self.input_x[i],
            CoeffKey::J(i) => &self.input_s[i],
            CoeffKey::Eta(i) => &self.eta[i],
            CoeffKey::Varsigma(i) => &self.varsigma[i],
            CoeffKey::Tau(i, j) => &self.tau[i][j],
            CoeffKey::Sigma(i, j) => &self.sigma[i][j],
            CoeffKey::Zeta(i, j) => &self.zeta[i][j],
        }
    }

    pub fn expr_mut(&mut self, key: CoeffKey) -> &mut CoeffExpr {
        match key {
            CoeffKey::Alpha(i) => &mut self.alpha[i],
            CoeffKey::C(i) => &mut self.c[i],
            CoeffKey::D(i, j) => &mut self.d[i][j],
            CoeffKey::Dtau(i, j) => &mut self.dtau[i][j],
            CoeffKey::Dbar(i, j) => &mut self.dbar[i][j],
            CoeffKey::Dtilde(i, j) => &mut self.dtilde[i][j],
            CoeffKey::B(i) => &mut self.b[i],
            CoeffKey::E(i) => &mut self.e[i],
            CoeffKey::I(i) => &mut self.input_x[i],
            CoeffKey::J(i) => &mut self.input_s[i],
            CoeffKey::Eta(i) => &mut self.eta[i],
            CoeffKey::Varsigma(i) => &mut self.varsigma[i],
            CoeffKey::Tau(i, j) => &mut self.tau[i][j],
            CoeffKey::Sigma(i, j) => &mut self.sigma[i][j],
            CoeffKey::Zeta(i, j) => &mut self.zeta[i][j],
        }
    }

    pub fn set(&mut self, key: CoeffKey, expr: CoeffExpr) {
        *self.expr_mut(key) = expr;
    }

    pub fn keys(&self) -> Vec<CoeffKey> {
        CoeffKey::all(self.n)
    }

    pub fn check_key(&self, key: CoeffKey) -> Result<()> {
        let (i, j) = key.indices();
        if i >= self.n || j.is_some_and(|j| j >= self.n) {
            return Err(NetworkError::Invalid(format!(
                "key {key} out of range for n = {}",
                self.n
            )));
        }
        Ok(())
    }

    /// Override if present, otherwise sampled.
    pub fn bound(&self, key: CoeffKey, grid: &SamplingGrid) -> Result<BoundPair> {
        Ok(resolve_bound(self.expr(key), self.overrides.get(&key), grid)?)
    }

    /// Structural and hypothesis checks on a window of the working scale.
    pub fn validate(&self, ts: &TimeScale, window: (f64, f64)) -> Result<()> {
        let n = self.n;
        if n == 0 {
            return Err(NetworkError::Invalid("n must be positive".into()));
        }
        let sizes_ok = [&self.alpha, &self.c, &self.b, &self.e, &self.input_x, &self.input_s, &self.eta, &self.varsigma]
            .iter()
            .all(|v| v.len() == n)
            && [&self.d, &self.dtau, &self.dbar, &self.dtilde, &self.tau, &self.sigma, &self.zeta]
                .iter()
                .all(|m| m.len() == n && m.iter().all(|row| row.len() == n))
            && self.activations.len() == n;
        if !sizes_ok {
            return Err(NetworkError::Invalid(format!("inconsistent sizes for n = {n}")));
        }
        for key in self.overrides.keys() {
            self.check_key(*key)?;
        }
        for (j, act) in self.activations.iter().enumerate() {
            check_lipschitz(act).map_err(|msg| {
                NetworkError::Invalid(format!("activation {}: {msg}", j + 1))
            })?;
        }
        let grid = ts.grid(window.0, window.1);
        for key in self.keys().into_iter().filter(CoeffKey::is_delay) {
            let expr = self.expr(key);
            if let Some(gp) = grid.iter().find(|gp| expr.eval(gp.t) < 0.0) {
                return Err(NetworkError::Invalid(format!(
                    "delay {key} is negative at t = {}",
                    gp.t
                )));
            }
        }
        for i in 0..n {
            for (name, expr) in [("alpha", &self.alpha[i]), ("c", &self.c[i])] {
                if !is_positively_regressive(|t| expr.eval(t), ts, window.0, window.1) {
                    return Err(NetworkError::Invalid(format!(
                        "{name}_{} is not positively regressive on the time scale",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

fn check_lipschitz(act: &Activation) -> std::result::Result<(), String> {
    if !(act.lipschitz > 0.0) {
        return Err(format!("Lipschitz constant {} must be positive", act.lipschitz));
    }
    let mut rng = StdRng::seed_from_u64(0x5eed_1234);
    for _ in 0..1000 {
        let x: f64 = rng.gen_range(-10.0..10.0);
        let y: f64 = rng.gen_range(-10.0..10.0);
        let lhs = (act.eval(x) - act.eval(y)).abs();
        if lhs > act.lipschitz * (x - y).abs() + 1e-12 {
            return Err(format!(
                "|f({x}) - f({y})| = {lhs} exceeds L |x - y| with L = {}",
                act.lipschitz
            ));
        }
    }
    Ok(())
}

/// Largest delay bound, overrides first, with the leakage delay `eta` in the
/// role of the otherwise unspecified delay family.
pub fn theta(spec: &NetworkSpec, grid: &SamplingGrid) -> Result<f64> {
    let mut out: f64 = 0.0;
    for key in spec.keys().into_iter().filter(CoeffKey::is_delay) {
        out = out.max(spec.bound(key, grid)?.sup_abs);
    }
    Ok(out)
}

/// Depth of history needed to evaluate the right-hand sides: the larger of
/// [`theta`] and the sampled delay sup (overrides may understate the latter).
pub fn history_depth(spec: &NetworkSpec, grid: &SamplingGrid) -> Result<f64> {
    let mut out = theta(spec, grid)?;
    for key in spec.keys().into_iter().filter(CoeffKey::is_delay) {
        out = out.max(crate::coeffs::bound_sup_inf(spec.expr(key), grid)?.sup_abs);
    }
    Ok(out)
}

/// State component selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    S,
    Dx,
    Ds,
}

/// Read access to a (possibly partially computed) solution.
pub trait StateAccess {
    /// Value of `var_i` at `t`; `t` is already a point of the time scale.
    fn state(&self, var: Var, i: usize, t: f64) -> Result<f64>;

    /// Nabla integral of `f_j(x_j)` over `(from, to]`.
    fn activation_integral(&self, j: usize, act: &Activation, from: f64, to: f64) -> Result<f64>;

    /// Nabla integral of `f_j(x_j^nabla)` over `(from, to]`.
    fn neutral_integral(&self, j: usize, act: &Activation, from: f64, to: f64) -> Result<f64>;
}

/// Point of the scale at or below `t - delay`.
pub fn lag_time(ts: &TimeScale, t: f64, delay: f64) -> Result<f64> {
    let s = t - delay;
    ts.snap_down(s).ok_or(NetworkError::HistoryUnderflow(s))
}

/// Right-hand side of the fast (STM) equation for neuron `i` at `t`.
pub fn rhs_stm<A: StateAccess + ?Sized>(
    spec: &NetworkSpec,
    acc: &A,
    ts: &TimeScale,
    t: f64,
    i: usize,
) -> Result<f64> {
    let mut total = spec.input_x[i].eval(t);
    let alpha = spec.alpha[i].eval(t);
    if alpha != 0.0 {
        let lag = lag_time(ts, t, spec.eta[i].eval(t))?;
        total -= alpha * acc.state(Var::X, i, lag)?;
    }
    for j in 0..spec.n {
        let act = &spec.activations[j];
        let d = spec.d[i][j].eval(t);
        if d != 0.0 {
            total += d * act.eval(acc.state(Var::X, j, t)?);
        }
        let dtau = spec.dtau[i][j].eval(t);
        if dtau != 0.0 {
            let lag = lag_time(ts, t, spec.tau[i][j].eval(t))?;
            total += dtau * act.eval(acc.state(Var::X, j, lag)?);
        }
        let dbar = spec.dbar[i][j].eval(t);
        if dbar != 0.0 {
            let from = lag_time(ts, t, spec.sigma[i][j].eval(t))?;
            total += dbar * acc.activation_integral(j, act, from, t)?;
        }
        let dtilde = spec.dtilde[i][j].eval(t);
        if dtilde != 0.0 {
            let from = lag_time(ts, t, spec.zeta[i][j].eval(t))?;
            total += dtilde * acc.neutral_integral(j, act, from, t)?;
        }
    }
    let b = spec.b[i].eval(t);
    if b != 0.0 {
        total += b * acc.state(Var::S, i, t)?;
    }
    Ok(total)
}

/// Right-hand side of the slow (LTM) equation for neuron `i` at `t`.
pub fn rhs_ltm<A: StateAccess + ?Sized>(
    spec: &NetworkSpec,
    acc: &A,
    ts: &TimeScale,
    t: f64,
    i: usize,
) -> Result<f64> {
    let mut total = spec.input_s[i].eval(t);
    let c = spec.c[i].eval(t);
    if c != 0.0 {
        let lag = lag_time(ts, t, spec.varsigma[i].eval(t))?;
        total -= c * acc.state(Var::S, i, lag)?;
    }
    let e = spec.e[i].eval(t);
    if e != 0.0 {
        total += e * spec.activations[i].eval(acc.state(Var::X, i, t)?);
    }
    Ok(total)
}

/// Initial functions on `[-theta, 0]`, given as expressions.
#[derive(Debug, Clone, PartialEq)]
pub struct HistorySpec {
    pub phi: Vec<CoeffExpr>,
    pub phi_nabla: Vec<CoeffExpr>,
    pub psi: Vec<CoeffExpr>,
    pub psi_nabla: Vec<CoeffExpr>,
}

impl HistorySpec {
    /// Constant history with zero derivatives.
    pub fn constant(x: &[f64], s: &[f64]) -> Self {
        let c = |v: &[f64]| v.iter().map(|&a| CoeffExpr::constant(a)).collect::<Vec<_>>();
        HistorySpec {
            phi: c(x),
            phi_nabla: vec![CoeffExpr::zero(); x.len()],
            psi: c(s),
            psi_nabla: vec![CoeffExpr::zero(); s.len()],
        }
    }

    pub fn n(&self) -> usize {
        self.phi.len()
    }

    pub fn value(&self, var: Var, i: usize, t: f64) -> f64 {
        match var {
            Var::X => self.phi[i].eval(t),
            Var::S => self.psi[i].eval(t),
            Var::Dx => self.phi_nabla[i].eval(t),
            Var::Ds => self.psi_nabla[i].eval(t),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if [&self.phi, &self.phi_nabla, &self.psi, &self.psi_nabla]
            .iter()
            .any(|v| v.len() != n)
        {
            return Err(NetworkError::Invalid(format!(
                "history does not have {n} components in every field"
            )));
        }
        Ok(())
    }
}

/// Accessor backed by closed-form functions of time. Integrals are computed
/// with the time-scale nabla integral, so this is the reference accessor for
/// checking right-hand sides independently of the simulator.
pub struct FunctionHistory<'a> {
    pub ts: &'a TimeScale,
    #[allow(clippy::type_complexity)]
    pub f: Box<dyn Fn(Var, usize, f64) -> f64 + 'a>,
}

impl<'a> FunctionHistory<'a> {
    pub fn new(ts: &'a TimeScale, f: impl Fn(Var, usize, f64) -> f64 + 'a) -> Self {
        FunctionHistory { ts, f: Box::new(f) }
    }

    pub fn from_spec(ts: &'a TimeScale, h: &'a HistorySpec) -> Self {
        Self::new(ts, move |var, i, t| h.value(var, i, t))
    }
}

impl StateAccess for FunctionHistory<'_> {
    fn state(&self, var: Var, i: usize, t: f64) -> Result<f64> {
        Ok((self.f)(var, i, t))
    }

    fn activation_integral(&self, j: usize, act: &Activation, from: f64, to: f64) -> Result<f64> {
        crate::timescale::nabla_integral(|s| act.eval((self.f)(Var::X, j, s)), self.ts, from, to)
            .map_err(|_| NetworkError::HistoryUnderflow(from))
    }

    fn neutral_integral(&self, j: usize, act: &Activation, from: f64, to: f64) -> Result<f64> {
        crate::timescale::nabla_integral(|s| act.eval((self.f)(Var::Dx, j, s)), self.ts, from, to)
            .map_err(|_| NetworkError::HistoryUnderflow(from))
    }
}
