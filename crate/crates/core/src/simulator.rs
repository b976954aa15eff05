//! Forward integration of the network on a time scale.
//!
//! The grid is the discretised time scale from the start of the history
//! window to `t_end`. Left-scattered points take an implicit backward step
//! solved by a predictor and a fixed number of corrector passes. Dense points
//! take an explicit step followed by one trapezoidal corrector.
//!
//! Delayed states are exact at grid points and piecewise linear between dense
//! grid points. Distributed and neutral integrals are read from running sums
//! kept alongside the states; the neutral integrand on a dense interval is the
//! slope of the linear interpolant, which keeps it consistent with the state
//! integral.

use std::io::{self, Write};

use thiserror::Error;

use crate::coeffs::SamplingGrid;
use crate::kv::fmt_f64;
use crate::network::{
    history_depth, rhs_ltm, rhs_stm, Activation, HistorySpec, NetworkError, NetworkSpec,
    StateAccess, Var,
};
use crate::timescale::{TimeScale, TIME_TOL};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("step failure at t = {t}: corrector increments stopped shrinking")]
    StepFailure { t: f64 },
    #[error("invalid simulation request: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    /// Internal step for dense pieces; `None` keeps the time scale's own.
    pub h: Option<f64>,
    pub corrector_iters: usize,
    /// Grid used to sample delay sups when sizing the history window.
    pub sampling: SamplingGrid,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            h: None,
            corrector_iters: 4,
            sampling: SamplingGrid::default(),
        }
    }
}

/// States and nabla derivatives on the simulation grid, history included.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub n: usize,
    pub times: Vec<f64>,
    pub nu: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub s: Vec<Vec<f64>>,
    pub dx: Vec<Vec<f64>>,
    pub ds: Vec<Vec<f64>>,
    /// Index of the initial time; earlier entries are history samples.
    pub origin: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t0(&self) -> f64 {
        self.times[self.origin]
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn series(&self, var: Var) -> &Vec<Vec<f64>> {
        match var {
            Var::X => &self.x,
            Var::S => &self.s,
            Var::Dx => &self.dx,
            Var::Ds => &self.ds,
        }
    }

    /// Index of the grid point at `t`, if any.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = self.times.partition_point(|&s| s < t - TIME_TOL);
        (k < self.times.len() && (self.times[k] - t).abs() <= TIME_TOL).then_some(k)
    }

    /// Value at any time in the grid's hull: exact at grid points, linear
    /// across dense intervals, held across gaps.
    pub fn value_at(&self, var: Var, i: usize, t: f64) -> Option<f64> {
        let data = &self.series(var)[i];
        lookup(&self.times, &self.nu, data, t, self.times.len() - 1)
    }

    /// Post-forward samples of one component.
    pub fn component(&self, var: Var, i: usize) -> (&[f64], &[f64]) {
        (&self.times[self.origin..], &self.series(var)[i][self.origin..])
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.n;
        let mut header = vec!["t".to_string()];
        for prefix in ["x", "S", "dx", "dS"] {
            for i in 1..=n {
                header.push(format!("{prefix}_{i}"));
            }
        }
        writeln!(w, "{}", header.join(","))?;
        for k in 0..self.len() {
            let mut row = vec![fmt_f64(self.times[k])];
            for series in [&self.x, &self.s, &self.dx, &self.ds] {
                row.extend(series.iter().map(|c| fmt_f64(c[k])));
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Lookup in `data[..=upto]` with the interpolation rules of [`Trajectory::value_at`].
fn lookup(times: &[f64], nu: &[f64], data: &[f64], t: f64, upto: usize) -> Option<f64> {
    let times = &times[..=upto];
    if t < times[0] - TIME_TOL || t > times[upto] + TIME_TOL {
        return None;
    }
    let k = times.partition_point(|&s| s < t - TIME_TOL);
    if (times[k] - t).abs() <= TIME_TOL {
        return Some(data[k]);
    }
    // times[k - 1] < t < times[k]
    if nu[k] > 0.0 {
        return Some(data[k - 1]);
    }
    let w = (t - times[k - 1]) / (times[k] - times[k - 1]);
    Some(data[k - 1] + w * (data[k] - data[k - 1]))
}

/// Working storage of a running simulation.
struct Sim<'a> {
    spec: &'a NetworkSpec,
    history: &'a HistorySpec,
    times: Vec<f64>,
    nu: Vec<f64>,
    x: Vec<Vec<f64>>,
    s: Vec<Vec<f64>>,
    dx: Vec<Vec<f64>>,
    ds: Vec<Vec<f64>>,
    /// Running nabla integral of `f_j(x_j)` from the first grid point.
    cum_act: Vec<Vec<f64>>,
    /// Running nabla integral of `f_j(x_j^nabla)` from the first grid point.
    cum_neu: Vec<Vec<f64>>,
    origin: usize,
    /// Last index holding valid (possibly tentative) data.
    upto: usize,
}

impl Sim<'_> {
    fn act(&self, j: usize) -> &Activation {
        &self.spec.activations[j]
    }

    /// Recomputes the running sums at index `k` from index `k - 1`.
    fn refresh_sums(&mut self, k: usize) {
        for j in 0..self.spec.n {
            if k == 0 {
                self.cum_act[j][0] = 0.0;
                self.cum_neu[j][0] = 0.0;
                continue;
            }
            let act = *self.act(j);
            let nu = self.nu[k];
            let (a, n) = if nu > 0.0 {
                (nu * act.eval(self.x[j][k]), nu * act.eval(self.dx[j][k]))
            } else {
                let dt = self.times[k] - self.times[k - 1];
                let slope = (self.x[j][k] - self.x[j][k - 1]) / dt;
                (
                    0.5 * dt * (act.eval(self.x[j][k - 1]) + act.eval(self.x[j][k])),
                    dt * act.eval(slope),
                )
            };
            self.cum_act[j][k] = self.cum_act[j][k - 1] + a;
            self.cum_neu[j][k] = self.cum_neu[j][k - 1] + n;
        }
    }

    /// Running sum evaluated at an arbitrary time, splitting a dense interval
    /// at `t` when needed.
    fn sum_at(&self, j: usize, neutral: bool, t: f64) -> std::result::Result<f64, NetworkError> {
        let times = &self.times[..=self.upto];
        if t < times[0] - TIME_TOL || t > times[self.upto] + TIME_TOL {
            return Err(NetworkError::HistoryUnderflow(t));
        }
        let cum = if neutral { &self.cum_neu[j] } else { &self.cum_act[j] };
        let k = times.partition_point(|&s| s < t - TIME_TOL);
        if (times[k] - t).abs() <= TIME_TOL {
            return Ok(cum[k]);
        }
        if self.nu[k] > 0.0 {
            return Ok(cum[k - 1]);
        }
        let act = self.act(j);
        let (t0, t1) = (times[k - 1], times[k]);
        let (x0, x1) = (self.x[j][k - 1], self.x[j][k]);
        let part = t - t0;
        let extra = if neutral {
            part * act.eval((x1 - x0) / (t1 - t0))
        } else {
            let xt = x0 + (x1 - x0) * part / (t1 - t0);
            0.5 * part * (act.eval(x0) + act.eval(xt))
        };
        Ok(cum[k - 1] + extra)
    }

    fn rhs_all(&self, ts: &TimeScale, k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let t = self.times[k];
        let n = self.spec.n;
        let mut rx = vec![0.0; n];
        let mut rs = vec![0.0; n];
        for i in 0..n {
            rx[i] = rhs_stm(self.spec, self, ts, t, i)?;
            rs[i] = rhs_ltm(self.spec, self, ts, t, i)?;
        }
        Ok((rx, rs))
    }

    fn store(&mut self, k: usize, x: &[f64], s: &[f64], dx: &[f64], ds: &[f64]) {
        for i in 0..self.spec.n {
            self.x[i][k] = x[i];
            self.s[i][k] = s[i];
            self.dx[i][k] = dx[i];
            self.ds[i][k] = ds[i];
        }
        self.refresh_sums(k);
    }

    fn column(&self, data: &[Vec<f64>], k: usize) -> Vec<f64> {
        data.iter().map(|c| c[k]).collect()
    }
}

impl StateAccess for Sim<'_> {
    fn state(&self, var: Var, i: usize, t: f64) -> std::result::Result<f64, NetworkError> {
        if t < self.times[0] - TIME_TOL {
            return Err(NetworkError::HistoryUnderflow(t));
        }
        if t <= self.times[self.origin] + TIME_TOL {
            return Ok(self.history.value(var, i, t));
        }
        let data = match var {
            Var::X => &self.x[i],
            Var::S => &self.s[i],
            Var::Dx => &self.dx[i],
            Var::Ds => &self.ds[i],
        };
        lookup(&self.times, &self.nu, data, t, self.upto).ok_or(NetworkError::HistoryUnderflow(t))
    }

    fn activation_integral(
        &self,
        j: usize,
        _act: &Activation,
        from: f64,
        to: f64,
    ) -> std::result::Result<f64, NetworkError> {
        Ok(self.sum_at(j, false, to)? - self.sum_at(j, false, from)?)
    }

    fn neutral_integral(
        &self,
        j: usize,
        _act: &Activation,
        from: f64,
        to: f64,
    ) -> std::result::Result<f64, NetworkError> {
        Ok(self.sum_at(j, true, to)? - self.sum_at(j, true, from)?)
    }
}

/// Initial time: zero when it lies in the scale, otherwise the nearest
/// point below (or above, when nothing lies below).
pub fn initial_time(ts: &TimeScale) -> Option<f64> {
    ts.snap_down(0.0).or_else(|| ts.snap_up(0.0))
}

/// First grid point of the history window for a given depth.
pub fn history_start(ts: &TimeScale, t0: f64, depth: f64) -> f64 {
    if depth <= 0.0 {
        return t0;
    }
    // a little slack so that delays sampled slightly below their sup still
    // land inside the stored window
    let margin = ts.step().max(0.05 * depth);
    ts.snap_down(t0 - depth - margin)
        .or_else(|| ts.min())
        .unwrap_or(t0)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, &a| m.max(a.abs()))
}

/// Integrates the network from `history` up to `t_end`.
pub fn simulate(
    spec: &NetworkSpec,
    history: &HistorySpec,
    ts: &TimeScale,
    t_end: f64,
    opts: &SimOptions,
) -> Result<Trajectory> {
    let ts = match opts.h {
        Some(h) => ts.with_step(h),
        None => ts.clone(),
    };
    if !(t_end > 0.0) {
        return Err(SimError::Invalid(format!("t_end = {t_end} must be positive")));
    }
    history
        .validate(spec.n)
        .map_err(SimError::Network)?;
    let t0 = initial_time(&ts)
        .ok_or_else(|| SimError::Invalid("time scale has no point near 0".into()))?;
    if t0 >= t_end {
        return Err(SimError::Invalid(format!("t_end = {t_end} is not after t0 = {t0}")));
    }
    let depth = history_depth(spec, &opts.sampling)?;
    let start = history_start(&ts, t0, depth);
    let grid = ts.grid(start, t_end);
    let n = spec.n;
    let len = grid.len();
    let origin = grid
        .iter()
        .position(|g| (g.t - t0).abs() <= TIME_TOL)
        .ok_or_else(|| SimError::Invalid("initial time missing from grid".into()))?;
    let mat = || vec![vec![0.0; len]; n];
    let mut sim = Sim {
        spec,
        history,
        times: grid.iter().map(|g| g.t).collect(),
        nu: grid.iter().map(|g| g.nu).collect(),
        x: mat(),
        s: mat(),
        dx: mat(),
        ds: mat(),
        cum_act: mat(),
        cum_neu: mat(),
        origin,
        upto: 0,
    };
    for k in 0..=origin {
        let t = sim.times[k];
        for i in 0..n {
            sim.x[i][k] = history.value(Var::X, i, t);
            sim.s[i][k] = history.value(Var::S, i, t);
            sim.dx[i][k] = history.value(Var::Dx, i, t);
            sim.ds[i][k] = history.value(Var::Ds, i, t);
        }
        sim.upto = k;
        sim.refresh_sums(k);
    }

    // right-hand side at the previous point, used by explicit dense steps
    let mut last_rhs: Option<(Vec<f64>, Vec<f64>)> = None;
    for k in origin + 1..len {
        sim.upto = k;
        let nu = sim.nu[k];
        let t = sim.times[k];
        let xp = sim.column(&sim.x, k - 1);
        let sp = sim.column(&sim.s, k - 1);
        if nu > 0.0 {
            let dxp = sim.column(&sim.dx, k - 1);
            let dsp = sim.column(&sim.ds, k - 1);
            let mut x: Vec<f64> = (0..n).map(|i| xp[i] + nu * dxp[i]).collect();
            let mut s: Vec<f64> = (0..n).map(|i| sp[i] + nu * dsp[i]).collect();
            sim.store(k, &x, &s, &dxp, &dsp);
            let mut prev_inc = f64::INFINITY;
            let mut rhs = (dxp, dsp);
            for it in 0..opts.corrector_iters {
                let (rx, rs) = sim.rhs_all(&ts, k)?;
                let nx: Vec<f64> = (0..n).map(|i| xp[i] + nu * rx[i]).collect();
                let ns: Vec<f64> = (0..n).map(|i| sp[i] + nu * rs[i]).collect();
                let inc = (0..n)
                    .map(|i| (nx[i] - x[i]).abs().max((ns[i] - s[i]).abs()))
                    .fold(0.0, f64::max);
                let scale = 1.0 + max_abs(&nx).max(max_abs(&ns));
                if !inc.is_finite() || (it > 0 && inc >= prev_inc && inc > 1e-9 * scale) {
                    return Err(SimError::StepFailure { t });
                }
                prev_inc = inc;
                x = nx;
                s = ns;
                sim.store(k, &x, &s, &rx, &rs);
                rhs = (rx, rs);
            }
            last_rhs = Some(rhs);
        } else {
            let dt = t - sim.times[k - 1];
            let (rxp, rsp) = match last_rhs.take() {
                Some(r) => r,
                None => {
                    sim.upto = k - 1;
                    let r = sim.rhs_all(&ts, k - 1)?;
                    sim.upto = k;
                    r
                }
            };
            let x: Vec<f64> = (0..n).map(|i| xp[i] + dt * rxp[i]).collect();
            let s: Vec<f64> = (0..n).map(|i| sp[i] + dt * rsp[i]).collect();
            sim.store(k, &x, &s, &rxp, &rsp);
            let (rx, rs) = sim.rhs_all(&ts, k)?;
            let x: Vec<f64> = (0..n).map(|i| xp[i] + 0.5 * dt * (rxp[i] + rx[i])).collect();
            let s: Vec<f64> = (0..n).map(|i| sp[i] + 0.5 * dt * (rsp[i] + rs[i])).collect();
            sim.store(k, &x, &s, &rx, &rs);
            let (rx, rs) = sim.rhs_all(&ts, k)?;
            if rx.iter().chain(&rs).any(|v| !v.is_finite()) {
                return Err(SimError::StepFailure { t });
            }
            sim.store(k, &x, &s, &rx, &rs);
            last_rhs = Some((rx, rs));
        }
    }
    Ok(Trajectory {
        n,
        times: sim.times,
        nu: sim.nu,
        x: sim.x,
        s: sim.s,
        dx: sim.dx,
        ds: sim.ds,
        origin,
    })
}

/// `max_i { |dx_i|, |dS_i|, |d(x_i^nabla)|, |d(S_i^nabla)| }` at grid time `t`.
pub fn trajectory_norm_distance(a: &Trajectory, b: &Trajectory, t: f64) -> Result<f64> {
    check_same_grid(a, b)?;
    let k = a
        .index_of(t)
        .ok_or_else(|| SimError::Invalid(format!("t = {t} is not a grid point")))?;
    Ok(distance_at(a, b, k))
}

fn distance_at(a: &Trajectory, b: &Trajectory, k: usize) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..a.n {
        d = d
            .max((a.x[i][k] - b.x[i][k]).abs())
            .max((a.s[i][k] - b.s[i][k]).abs())
            .max((a.dx[i][k] - b.dx[i][k]).abs())
            .max((a.ds[i][k] - b.ds[i][k]).abs());
    }
    d
}

fn check_same_grid(a: &Trajectory, b: &Trajectory) -> Result<()> {
    if a.n != b.n || a.origin != b.origin || a.times != b.times {
        return Err(SimError::Invalid("trajectories do not share a grid".into()));
    }
    Ok(())
}

/// `(t, distance)` for every grid point from the initial time on.
pub fn distance_series(a: &Trajectory, b: &Trajectory) -> Result<Vec<(f64, f64)>> {
    check_same_grid(a, b)?;
    Ok((a.origin..a.len())
        .map(|k| (a.times[k], distance_at(a, b, k)))
        .collect())
}

/// Sup over the grid of `window` of the component-wise distance between two
/// histories, derivatives included.
pub fn history_norm(a: &HistorySpec, b: &HistorySpec, ts: &TimeScale, window: (f64, f64)) -> f64 {
    let n = a.n().min(b.n());
    let mut out: f64 = 0.0;
    for gp in ts.grid(window.0, window.1) {
        for i in 0..n {
            for var in [Var::X, Var::S, Var::Dx, Var::Ds] {
                out = out.max((a.value(var, i, gp.t) - b.value(var, i, gp.t)).abs());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::CoeffExpr;
    use approx::assert_abs_diff_eq;

    fn scalar(alpha: f64, input: f64) -> NetworkSpec {
        let mut spec = NetworkSpec::zeros(1);
        spec.alpha[0] = CoeffExpr::constant(alpha);
        spec.input_x[0] = CoeffExpr::constant(input);
        spec
    }

    #[test]
    fn zero_system_stays_zero() {
        let spec = NetworkSpec::zeros(2);
        let h = HistorySpec::constant(&[0.0, 0.0], &[0.0, 0.0]);
        for ts in [TimeScale::integers(), TimeScale::reals(0.05)] {
            let tr = simulate(&spec, &h, &ts, 5.0, &SimOptions::default()).unwrap();
            assert!(tr.x.iter().chain(&tr.s).chain(&tr.dx).chain(&tr.ds).flatten().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn integer_decay_matches_recurrence() {
        let spec = scalar(0.5, 0.0);
        let h = HistorySpec::constant(&[1.0], &[0.0]);
        let opts = SimOptions::default();
        let tr = simulate(&spec, &h, &TimeScale::integers(), 50.0, &opts).unwrap();
        // predictor x + dx, then corrector passes x = x_prev - 0.5 x
        let (mut x, mut dx) = (1.0f64, 0.0f64);
        for k in 1..=50 {
            let prev = x;
            let mut cur = prev + dx;
            let mut r = dx;
            for _ in 0..opts.corrector_iters {
                r = -0.5 * cur;
                cur = prev + r;
            }
            x = cur;
            dx = r;
            let idx = tr.index_of(k as f64).unwrap();
            assert!((tr.x[0][idx] - x).abs() <= 1e-12);
            assert!((tr.dx[0][idx] - dx).abs() <= 1e-12);
        }
    }

    #[test]
    fn real_line_relaxation() {
        let spec = scalar(1.0, 1.0);
        let h = HistorySpec::constant(&[0.0], &[0.0]);
        let opts = SimOptions {
            h: Some(1e-3),
            ..SimOptions::default()
        };
        let tr = simulate(&spec, &h, &TimeScale::reals(0.01), 5.0, &opts).unwrap();
        let v = tr.value_at(Var::X, 0, 5.0).unwrap();
        assert_abs_diff_eq!(v, 1.0 - (-5.0f64).exp(), epsilon = 2e-3);
    }

    #[test]
    fn unstable_implicit_step_fails() {
        let spec = scalar(1.5, 0.0);
        let h = HistorySpec::constant(&[1.0], &[0.0]);
        let err = simulate(&spec, &h, &TimeScale::integers(), 10.0, &SimOptions::default()).unwrap_err();
        assert_eq!(err, SimError::StepFailure { t: 1.0 });
    }

    #[test]
    fn history_window_covers_delays() {
        let mut spec = scalar(0.5, 0.0);
        spec.eta[0] = CoeffExpr::constant(1.0);
        let h = HistorySpec::constant(&[1.0], &[0.0]);
        let tr = simulate(&spec, &h, &TimeScale::reals(0.1), 3.0, &SimOptions::default()).unwrap();
        assert!(tr.start() <= -1.0);
        assert_eq!(tr.t0(), 0.0);
        // x' = -0.5 x(t - 1) with unit history gives 1 - t/2 on [0, 1]
        assert_abs_diff_eq!(tr.value_at(Var::X, 0, 1.0).unwrap(), 0.5, epsilon = 1e-9);
    }

    #[test]
    fn lookup_rules() {
        let times = [0.0, 1.0, 3.0, 3.5];
        let nu = [0.0, 0.0, 2.0, 0.0];
        let data = [0.0, 2.0, 10.0, 11.0];
        assert_eq!(lookup(&times, &nu, &data, 0.5, 3), Some(1.0));
        assert_eq!(lookup(&times, &nu, &data, 2.0, 3), Some(2.0));
        assert_eq!(lookup(&times, &nu, &data, 3.25, 3), Some(10.5));
        assert_eq!(lookup(&times, &nu, &data, 3.25, 2), None);
        assert_eq!(lookup(&times, &nu, &data, -0.1, 3), None);
    }

    #[test]
    fn csv_layout() {
        let spec = scalar(0.5, 0.1);
        let h = HistorySpec::constant(&[1.0], &[0.0]);
        let tr = simulate(&spec, &h, &TimeScale::integers(), 3.0, &SimOptions::default()).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x_1,S_1,dx_1,dS_1");
        assert_eq!(lines.len(), 1 + tr.len());
        assert!(lines[1].starts_with("0,"));
    }

    #[test]
    fn distances_and_history_norm() {
        let spec = scalar(0.5, 0.0);
        let ha = HistorySpec::constant(&[1.0], &[0.0]);
        let hb = HistorySpec::constant(&[0.8], &[0.0]);
        let ts = TimeScale::integers();
        let a = simulate(&spec, &ha, &ts, 10.0, &SimOptions::default()).unwrap();
        let b = simulate(&spec, &hb, &ts, 10.0, &SimOptions::default()).unwrap();
        assert_eq!(trajectory_norm_distance(&a, &a, 3.0).unwrap(), 0.0);
        let d0 = trajectory_norm_distance(&a, &b, 0.0).unwrap();
        assert_abs_diff_eq!(d0, 0.2, epsilon = 1e-15);
        let series = distance_series(&a, &b).unwrap();
        assert!(series.last().unwrap().1 < d0);
        assert_abs_diff_eq!(history_norm(&ha, &hb, &ts, (-2.0, 0.0)), 0.2, epsilon = 1e-15);
        assert_eq!(history_norm(&ha, &ha, &ts, (-2.0, 0.0)), 0.0);
        let short = simulate(&spec, &ha, &ts, 5.0, &SimOptions::default()).unwrap();
        assert!(distance_series(&a, &short).is_err());
    }
}
