//! Time scales and the nabla (backward) calculus on them.
//!
//! A [`TimeScale`] is an ordered union of closed pieces, each either a dense
//! interval or an arithmetic lattice. Dense pieces carry an internal step that
//! is only used to discretise derivatives, integrals and exponentials; it is
//! not part of the set itself.
//!
//! The nabla exponential is accumulated as a sum of cylinder-transform values
//! and exponentiated once, so long horizons do not underflow.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Absolute tolerance used when comparing time values.
pub const TIME_TOL: f64 = 1e-12;

/// Default internal step for dense pieces.
pub const DEFAULT_STEP: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TimeScaleError {
    #[error("time {0} does not belong to the time scale")]
    NotInScale(f64),
    #[error("nabla derivative is undefined at the minimum {0} of the time scale")]
    UndefinedDerivative(f64),
    #[error("cylinder transform undefined: 1 - h*z = {factor} <= 0 (h = {h}, z = {z})")]
    CylinderDomain { h: f64, z: f64, factor: f64 },
    #[error("regressivity violated at t = {t}: 1 - nu*p = {factor}")]
    Regressivity { t: f64, factor: f64 },
    #[error("invalid time scale: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, TimeScaleError>;

/// One closed piece of a time scale.
#[derive(Debug, Clone, PartialEq)]
pub enum Piece {
    /// Every real in `[start, end]`; either end may be infinite.
    Interval { start: f64, end: f64 },
    /// The points `origin + k * spacing` lying in `[start, end]`.
    Lattice {
        origin: f64,
        spacing: f64,
        start: f64,
        end: f64,
    },
}

impl Piece {
    pub fn interval(start: f64, end: f64) -> Self {
        Piece::Interval { start, end }
    }

    /// Lattice `{start, start + spacing, ...}` up to `end`.
    pub fn lattice(start: f64, spacing: f64, end: f64) -> Self {
        let origin = if start.is_finite() { start } else { 0.0 };
        Piece::Lattice {
            origin,
            spacing,
            start,
            end,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Piece::Interval { start, end } => {
                if start.is_nan() || end.is_nan() || start > end {
                    return Err(TimeScaleError::Invalid(format!(
                        "interval [{start}, {end}] is empty"
                    )));
                }
            }
            Piece::Lattice {
                origin,
                spacing,
                start,
                end,
            } => {
                if !(spacing > 0.0) || !spacing.is_finite() || !origin.is_finite() {
                    return Err(TimeScaleError::Invalid(format!(
                        "lattice spacing {spacing} must be positive and finite"
                    )));
                }
                if start.is_nan() || end.is_nan() || start > end {
                    return Err(TimeScaleError::Invalid(format!(
                        "lattice bounds [{start}, {end}] are empty"
                    )));
                }
                if let (Some(a), Some(b)) = (self.first_point(), self.last_point()) {
                    if a > b + TIME_TOL {
                        return Err(TimeScaleError::Invalid(format!(
                            "lattice on [{start}, {end}] contains no points"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn lattice_index(origin: f64, spacing: f64, t: f64) -> f64 {
        ((t - origin) / spacing).round()
    }

    /// Smallest point of the piece, `None` when unbounded below.
    pub fn first_point(&self) -> Option<f64> {
        match *self {
            Piece::Interval { start, .. } => start.is_finite().then_some(start),
            Piece::Lattice {
                origin,
                spacing,
                start,
                ..
            } => {
                if !start.is_finite() {
                    return None;
                }
                let k = ((start - origin - TIME_TOL) / spacing).ceil();
                Some(origin + k * spacing)
            }
        }
    }

    /// Largest point of the piece, `None` when unbounded above.
    pub fn last_point(&self) -> Option<f64> {
        match *self {
            Piece::Interval { end, .. } => end.is_finite().then_some(end),
            Piece::Lattice {
                origin,
                spacing,
                end,
                ..
            } => {
                if !end.is_finite() {
                    return None;
                }
                let k = ((end - origin + TIME_TOL) / spacing).floor();
                Some(origin + k * spacing)
            }
        }
    }

    fn lower(&self) -> f64 {
        self.first_point().unwrap_or(f64::NEG_INFINITY)
    }

    fn upper(&self) -> f64 {
        self.last_point().unwrap_or(f64::INFINITY)
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, Piece::Interval { .. })
    }

    pub fn contains(&self, t: f64) -> bool {
        if !t.is_finite() {
            return false;
        }
        match *self {
            Piece::Interval { start, end } => t >= start - TIME_TOL && t <= end + TIME_TOL,
            Piece::Lattice {
                origin, spacing, ..
            } => {
                if t < self.lower() - TIME_TOL || t > self.upper() + TIME_TOL {
                    return false;
                }
                let k = Self::lattice_index(origin, spacing, t);
                (origin + k * spacing - t).abs() <= TIME_TOL
            }
        }
    }

    /// Canonical representative of `t` inside this piece (exact lattice point).
    fn canonical(&self, t: f64) -> f64 {
        match *self {
            Piece::Interval { .. } => t,
            Piece::Lattice {
                origin, spacing, ..
            } => origin + Self::lattice_index(origin, spacing, t) * spacing,
        }
    }

    /// Largest point of the piece that is `<= t` (with tolerance), if any.
    fn floor_point(&self, t: f64) -> Option<f64> {
        if t < self.lower() - TIME_TOL {
            return None;
        }
        if t > self.upper() + TIME_TOL {
            return self.last_point();
        }
        match *self {
            Piece::Interval { .. } => Some(t),
            Piece::Lattice {
                origin, spacing, ..
            } => {
                let k = ((t - origin + TIME_TOL) / spacing).floor();
                Some(origin + k * spacing)
            }
        }
    }
}

/// Classification of one point of a time scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub t: f64,
    pub is_left_dense: bool,
    /// Backward graininess `t - rho(t)`.
    pub nu: f64,
}

/// A nonempty closed subset of the reals, stored as ordered disjoint pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeScale {
    pieces: Vec<Piece>,
    step: f64,
}

impl TimeScale {
    /// The integers.
    pub fn integers() -> Self {
        Self::lattice(0.0, 1.0)
    }

    /// `{origin + k * spacing : k in Z}`.
    pub fn lattice(origin: f64, spacing: f64) -> Self {
        TimeScale {
            pieces: vec![Piece::Lattice {
                origin,
                spacing,
                start: f64::NEG_INFINITY,
                end: f64::INFINITY,
            }],
            step: DEFAULT_STEP,
        }
    }

    /// The whole real line, discretised with `step`.
    pub fn reals(step: f64) -> Self {
        TimeScale {
            pieces: vec![Piece::interval(f64::NEG_INFINITY, f64::INFINITY)],
            step,
        }
    }

    pub fn interval(start: f64, end: f64, step: f64) -> Result<Self> {
        Self::union(vec![Piece::interval(start, end)], step)
    }

    /// Builds a time scale from ordered, pairwise disjoint pieces.
    pub fn union(pieces: Vec<Piece>, step: f64) -> Result<Self> {
        if pieces.is_empty() {
            return Err(TimeScaleError::Invalid("no pieces".into()));
        }
        if !(step > 0.0) || !step.is_finite() {
            return Err(TimeScaleError::Invalid(format!(
                "internal step {step} must be positive"
            )));
        }
        for p in &pieces {
            p.validate()?;
        }
        for (k, pair) in pieces.windows(2).enumerate() {
            let (a, b) = (&pair[0], &pair[1]);
            if !(a.upper() < b.lower() - TIME_TOL) {
                return Err(TimeScaleError::Invalid(format!(
                    "pieces {k} and {} overlap or are out of order",
                    k + 1
                )));
            }
        }
        Ok(TimeScale { pieces, step })
    }

    pub fn with_step(&self, step: f64) -> Self {
        TimeScale {
            pieces: self.pieces.clone(),
            step,
        }
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn is_integers(&self) -> bool {
        matches!(self.pieces.as_slice(), [Piece::Lattice { origin, spacing, start, end }]
            if *origin == 0.0 && *spacing == 1.0 && start.is_infinite() && end.is_infinite())
    }

    pub fn is_reals(&self) -> bool {
        matches!(self.pieces.as_slice(), [Piece::Interval { start, end }]
            if start.is_infinite() && end.is_infinite())
    }

    pub fn min(&self) -> Option<f64> {
        self.pieces[0].first_point()
    }

    pub fn max(&self) -> Option<f64> {
        self.pieces[self.pieces.len() - 1].last_point()
    }

    fn piece_index(&self, t: f64) -> Option<usize> {
        self.pieces.iter().position(|p| p.contains(t))
    }

    pub fn contains(&self, t: f64) -> bool {
        self.piece_index(t).is_some()
    }

    fn previous_last(&self, idx: usize) -> Option<f64> {
        if idx == 0 {
            None
        } else {
            self.pieces[idx - 1].last_point()
        }
    }

    /// `rho(t) = sup{s in T : s < t}`; the minimum maps to itself.
    pub fn backward_jump(&self, t: f64) -> Result<f64> {
        let idx = self
            .piece_index(t)
            .ok_or(TimeScaleError::NotInScale(t))?;
        let piece = &self.pieces[idx];
        let t = piece.canonical(t);
        match *piece {
            Piece::Interval { start, .. } => {
                if t > start + TIME_TOL {
                    Ok(t)
                } else {
                    Ok(self.previous_last(idx).unwrap_or(t))
                }
            }
            Piece::Lattice { spacing, .. } => {
                let prev = t - spacing;
                if prev >= piece.lower() - TIME_TOL {
                    Ok(piece.canonical(prev))
                } else {
                    Ok(self.previous_last(idx).unwrap_or(t))
                }
            }
        }
    }

    /// `sigma(t) = inf{s in T : s > t}`; the maximum maps to itself.
    pub fn forward_jump(&self, t: f64) -> Result<f64> {
        let idx = self
            .piece_index(t)
            .ok_or(TimeScaleError::NotInScale(t))?;
        let piece = &self.pieces[idx];
        let t = piece.canonical(t);
        let next_first = self.pieces.get(idx + 1).and_then(Piece::first_point);
        match *piece {
            Piece::Interval { end, .. } => {
                if t < end - TIME_TOL {
                    Ok(t)
                } else {
                    Ok(next_first.unwrap_or(t))
                }
            }
            Piece::Lattice { spacing, .. } => {
                let next = t + spacing;
                if next <= piece.upper() + TIME_TOL {
                    Ok(piece.canonical(next))
                } else {
                    Ok(next_first.unwrap_or(t))
                }
            }
        }
    }

    /// Backward graininess `nu(t) = t - rho(t)`.
    pub fn graininess(&self, t: f64) -> Result<f64> {
        let rho = self.backward_jump(t)?;
        let idx = self.piece_index(t).expect("checked by backward_jump");
        Ok(self.pieces[idx].canonical(t) - rho)
    }

    pub fn grid_point(&self, t: f64) -> Result<GridPoint> {
        let nu = self.graininess(t)?;
        let idx = self.piece_index(t).expect("checked by graininess");
        Ok(GridPoint {
            t: self.pieces[idx].canonical(t),
            is_left_dense: nu == 0.0,
            nu,
        })
    }

    /// Largest point of the scale that is `<= t`, or `None` below the minimum.
    pub fn snap_down(&self, t: f64) -> Option<f64> {
        if let Some(idx) = self.piece_index(t) {
            return Some(self.pieces[idx].canonical(t));
        }
        self.pieces
            .iter()
            .rev()
            .find_map(|p| p.floor_point(t))
    }

    /// Smallest point of the scale that is `>= t`, or `None` above the maximum.
    pub fn snap_up(&self, t: f64) -> Option<f64> {
        if let Some(idx) = self.piece_index(t) {
            return Some(self.pieces[idx].canonical(t));
        }
        for p in &self.pieces {
            if t <= p.upper() + TIME_TOL {
                if t <= p.lower() {
                    return p.first_point();
                }
                return match *p {
                    Piece::Interval { .. } => Some(t),
                    Piece::Lattice {
                        origin, spacing, ..
                    } => {
                        let k = ((t - origin - TIME_TOL) / spacing).ceil();
                        Some(origin + k * spacing)
                    }
                };
            }
        }
        None
    }

    /// Discretised points of `T ∩ [a, b]`, in increasing order.
    ///
    /// Lattice points are listed exactly. Dense pieces contribute their
    /// clipped end points plus the nodes `anchor + k * step`, where the anchor
    /// is the piece start (or zero for pieces unbounded below), so grids over
    /// overlapping windows share their interior nodes.
    pub fn grid(&self, a: f64, b: f64) -> Vec<GridPoint> {
        let mut out: Vec<GridPoint> = Vec::new();
        if !(a <= b) {
            return out;
        }
        for (idx, piece) in self.pieces.iter().enumerate() {
            if piece.upper() < a - TIME_TOL || piece.lower() > b + TIME_TOL {
                continue;
            }
            let first_nu = |t: f64| -> f64 {
                // graininess of the first listed point of this piece
                let prev_in_piece = match *piece {
                    Piece::Interval { start, .. } => {
                        if t > start + TIME_TOL {
                            Some(t)
                        } else {
                            None
                        }
                    }
                    Piece::Lattice { spacing, .. } => {
                        let prev = t - spacing;
                        (prev >= piece.lower() - TIME_TOL).then_some(prev)
                    }
                };
                match prev_in_piece.or_else(|| self.previous_last(idx)) {
                    Some(rho) => t - rho,
                    None => 0.0,
                }
            };
            match *piece {
                Piece::Interval { start, end } => {
                    let lo = start.max(a);
                    let hi = end.min(b);
                    if lo > hi + TIME_TOL {
                        continue;
                    }
                    let nu0 = first_nu(lo);
                    out.push(GridPoint {
                        t: lo,
                        is_left_dense: nu0 == 0.0,
                        nu: nu0,
                    });
                    if hi <= lo + TIME_TOL {
                        continue;
                    }
                    let h = self.step;
                    let anchor = if start.is_finite() { start } else { 0.0 };
                    let sliver = (h * 1e-6).max(TIME_TOL);
                    let k0 = ((lo - anchor) / h).floor() as i64;
                    let k1 = ((hi - anchor) / h).ceil() as i64;
                    for k in k0..=k1 {
                        let t = anchor + k as f64 * h;
                        if t > lo + sliver && t < hi - sliver {
                            out.push(GridPoint {
                                t,
                                is_left_dense: true,
                                nu: 0.0,
                            });
                        }
                    }
                    out.push(GridPoint {
                        t: hi,
                        is_left_dense: true,
                        nu: 0.0,
                    });
                }
                Piece::Lattice {
                    origin, spacing, ..
                } => {
                    let lo = a.max(piece.lower());
                    let hi = b.min(piece.upper());
                    let k0 = ((lo - origin - TIME_TOL) / spacing).ceil() as i64;
                    let k1 = ((hi - origin + TIME_TOL) / spacing).floor() as i64;
                    for k in k0..=k1 {
                        let t = origin + k as f64 * spacing;
                        let nu = if k == k0 { first_nu(t) } else { spacing };
                        out.push(GridPoint {
                            t,
                            is_left_dense: nu == 0.0,
                            nu,
                        });
                    }
                }
            }
        }
        out
    }

    /// Largest graininess over the points of `T ∩ [a, b]`.
    pub fn nu_sup(&self, a: f64, b: f64) -> f64 {
        // dense nodes have nu = 0, so only piece starts and lattices matter
        let mut sup: f64 = 0.0;
        for (idx, piece) in self.pieces.iter().enumerate() {
            if piece.upper() < a - TIME_TOL || piece.lower() > b + TIME_TOL {
                continue;
            }
            if let Piece::Lattice { spacing, .. } = *piece {
                let lo = a.max(piece.lower());
                let hi = b.min(piece.upper());
                if hi - lo >= spacing - TIME_TOL {
                    sup = sup.max(spacing);
                }
            }
            if let (Some(first), Some(prev)) = (piece.first_point(), self.previous_last(idx)) {
                if first >= a - TIME_TOL && first <= b + TIME_TOL {
                    sup = sup.max(first - prev);
                }
            }
        }
        sup
    }

    /// Node panel `[n0, n1]` of the dense piece containing `t`: consecutive
    /// quadrature nodes, clipped to the piece.
    fn dense_panel(&self, t: f64) -> Option<(f64, f64)> {
        let idx = self.piece_index(t)?;
        let Piece::Interval { start, end } = self.pieces[idx] else {
            return None;
        };
        let h = self.step;
        let anchor = if start.is_finite() { start } else { 0.0 };
        let k = ((t - anchor) / h).floor();
        let n0 = (anchor + k * h).max(start);
        let n1 = (anchor + (k + 1.0) * h).min(end);
        Some((n0, n1))
    }

    /// Integral over `[a, b]`, both inside one node panel, of the linear
    /// interpolant of `f` through the panel nodes. Window ends that fall
    /// between nodes therefore see the same integrand as a full panel,
    /// which keeps the quadrature additive under subdivision.
    fn dense_segment<F: Fn(f64) -> f64>(&self, f: &F, a: f64, fa: f64, b: f64, fb: f64) -> f64 {
        let width = b - a;
        let Some((n0, n1)) = self.dense_panel(0.5 * (a + b)) else {
            return 0.5 * width * (fa + fb);
        };
        let sliver = (self.step * 1e-6).max(TIME_TOL);
        let a_node = (a - n0).abs() <= sliver;
        let b_node = (b - n1).abs() <= sliver;
        // (a, b] excludes a; at the left-scattered start of a piece the
        // integrand may jump (it can depend on nu), so take the value just
        // inside the piece
        let scattered_start = self.graininess(n0).is_ok_and(|nu| nu > 0.0);
        let f0 = if scattered_start {
            f(n0 + sliver)
        } else if a_node {
            fa
        } else {
            f(n0)
        };
        let fa = if a_node { f0 } else { fa };
        if (a_node && b_node) || n1 - n0 <= sliver {
            return 0.5 * width * (fa + fb);
        }
        let f1 = if b_node { fb } else { f(n1) };
        let slope = (f1 - f0) / (n1 - n0);
        let ga = f0 + slope * (a - n0);
        let gb = f0 + slope * (b - n0);
        0.5 * width * (ga + gb)
    }

    fn require(&self, t: f64) -> Result<f64> {
        self.piece_index(t)
            .map(|idx| self.pieces[idx].canonical(t))
            .ok_or(TimeScaleError::NotInScale(t))
    }
}

impl fmt::Display for TimeScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integers() {
            return write!(f, "Z");
        }
        if self.is_reals() {
            return write!(f, "R");
        }
        write!(f, "union:")?;
        for (k, piece) in self.pieces.iter().enumerate() {
            if k > 0 {
                write!(f, "+")?;
            }
            match *piece {
                Piece::Interval { start, end } => write!(f, "[{start},{end}]")?,
                Piece::Lattice {
                    origin,
                    spacing,
                    start,
                    end,
                } => {
                    let a = if start.is_finite() { start } else { origin };
                    if start.is_finite() {
                        write!(f, "{{{a}:{spacing}:{end}}}")?
                    } else {
                        write!(f, "{{-inf:{spacing}:{end}}}")?
                    }
                }
            }
        }
        Ok(())
    }
}

fn parse_bound(s: &str) -> Result<f64> {
    match s.trim() {
        "inf" | "+inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        other => other
            .parse::<f64>()
            .map_err(|_| TimeScaleError::Invalid(format!("bad number '{other}'"))),
    }
}

impl TimeScale {
    /// Parses `Z`, `R` or `union:<piece>+<piece>...` where a piece is a dense
    /// interval `[a,b]` or a lattice `{a:spacing:b}`.
    pub fn parse_with_step(text: &str, step: f64) -> Result<Self> {
        let text = text.trim();
        match text {
            "Z" => return Ok(Self::integers().with_step(step)),
            "R" => return Ok(Self::reals(step)),
            _ => {}
        }
        let body = text
            .strip_prefix("union:")
            .ok_or_else(|| TimeScaleError::Invalid(format!("unknown time scale '{text}'")))?;
        let mut pieces = Vec::new();
        for raw in split_pieces(body) {
            let raw = raw.trim();
            if let Some(inner) = raw.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
                let (a, b) = inner
                    .split_once(',')
                    .ok_or_else(|| TimeScaleError::Invalid(format!("bad interval '{raw}'")))?;
                pieces.push(Piece::interval(parse_bound(a)?, parse_bound(b)?));
            } else if let Some(inner) = raw.strip_prefix('{').and_then(|r| r.strip_suffix('}')) {
                let parts: Vec<&str> = inner.split(':').collect();
                if parts.len() != 3 {
                    return Err(TimeScaleError::Invalid(format!("bad lattice '{raw}'")));
                }
                pieces.push(Piece::lattice(
                    parse_bound(parts[0])?,
                    parse_bound(parts[1])?,
                    parse_bound(parts[2])?,
                ));
            } else {
                return Err(TimeScaleError::Invalid(format!("bad piece '{raw}'")));
            }
        }
        Self::union(pieces, step)
    }
}

fn split_pieces(body: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (k, ch) in body.char_indices() {
        match ch {
            '[' | '{' => depth += 1,
            ']' | '}' => depth -= 1,
            '+' if depth == 0 => {
                out.push(&body[start..k]);
                start = k + 1;
            }
            _ => {}
        }
    }
    out.push(&body[start..]);
    out
}

impl FromStr for TimeScale {
    type Err = TimeScaleError;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse_with_step(s, DEFAULT_STEP)
    }
}

/// Backward jump operator.
pub fn backward_jump(ts: &TimeScale, t: f64) -> Result<f64> {
    ts.backward_jump(t)
}

/// Backward graininess `nu(t) = t - rho(t)`.
pub fn graininess_nu(ts: &TimeScale, t: f64) -> Result<f64> {
    ts.graininess(t)
}

/// Nabla derivative of `f` at `t`.
///
/// Exact backward quotient at left-scattered points. At left-dense points a
/// central difference with step `h` is used when both neighbours lie in the
/// same dense piece, otherwise a backward difference.
pub fn nabla_derivative<F: Fn(f64) -> f64>(f: F, ts: &TimeScale, t: f64, h: f64) -> Result<f64> {
    let gp = ts.grid_point(t)?;
    let t = gp.t;
    if Some(t) == ts.min() {
        return Err(TimeScaleError::UndefinedDerivative(t));
    }
    if gp.nu > 0.0 {
        let rho = t - gp.nu;
        return Ok((f(t) - f(rho)) / gp.nu);
    }
    let idx = ts.piece_index(t).expect("grid_point checked membership");
    let piece = &ts.pieces[idx];
    let left_ok = piece.contains(t - h);
    let right_ok = piece.contains(t + h);
    if left_ok && right_ok {
        Ok((f(t + h) - f(t - h)) / (2.0 * h))
    } else if left_ok {
        Ok((f(t) - f(t - h)) / h)
    } else {
        let span = t - piece.lower();
        Ok((f(t) - f(t - span)) / span)
    }
}

/// Nabla integral of `f` over `(a, b]`.
///
/// Scattered stretches contribute `nu(t) f(t)`, dense stretches use the
/// composite trapezoidal rule on the internal step (nodes anchored at the
/// piece start; a partial panel at a window end integrates the chord of the
/// full panel). Reversed bounds flip the sign.
pub fn nabla_integral<F: Fn(f64) -> f64>(f: F, ts: &TimeScale, a: f64, b: f64) -> Result<f64> {
    let a = ts.require(a)?;
    let b = ts.require(b)?;
    if a > b {
        return nabla_integral(f, ts, b, a).map(|v| -v);
    }
    let grid = ts.grid(a, b);
    let mut total = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for gp in &grid {
        let ft = f(gp.t);
        if let Some((tp, fp)) = prev {
            if gp.nu > 0.0 {
                total += gp.nu * ft;
            } else {
                total += ts.dense_segment(&f, tp, fp, gp.t, ft);
            }
        }
        prev = Some((gp.t, ft));
    }
    Ok(total)
}

/// The nu-cylinder transform `-log(1 - h z) / h`, or `z` when `h = 0`.
pub fn cylinder(h: f64, z: f64) -> Result<f64> {
    if h == 0.0 {
        return Ok(z);
    }
    let factor = 1.0 - h * z;
    if !(factor > 0.0) {
        return Err(TimeScaleError::CylinderDomain { h, z, factor });
    }
    Ok(-factor.ln() / h)
}

/// `log ê_p(t, s)`.
pub fn log_nabla_exp<P: Fn(f64) -> f64>(p: P, ts: &TimeScale, t: f64, s: f64) -> Result<f64> {
    let t = ts.require(t)?;
    let s = ts.require(s)?;
    if t == s {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if s < t { (s, t, 1.0) } else { (t, s, -1.0) };
    let grid = ts.grid(lo, hi);
    let mut total = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for gp in &grid {
        let pt = p(gp.t);
        if let Some((tp, pp)) = prev {
            if gp.nu > 0.0 {
                let factor = 1.0 - gp.nu * pt;
                if !(factor > 0.0) {
                    return Err(TimeScaleError::Regressivity { t: gp.t, factor });
                }
                total -= factor.ln();
            } else {
                total += ts.dense_segment(&p, tp, pp, gp.t, pt);
            }
        }
        prev = Some((gp.t, pt));
    }
    Ok(sign * total)
}

/// Nabla exponential `ê_p(t, s)`.
pub fn nabla_exp<P: Fn(f64) -> f64>(p: P, ts: &TimeScale, t: f64, s: f64) -> Result<f64> {
    log_nabla_exp(p, ts, t, s).map(f64::exp)
}

/// `p ⊕_nu q = p + q - nu p q`.
pub fn circle_plus(p: f64, q: f64, nu: f64) -> f64 {
    p + q - nu * p * q
}

/// `⊖_nu p = -p / (1 - nu p)`.
pub fn circle_minus(p: f64, nu: f64) -> Result<f64> {
    let factor = 1.0 - nu * p;
    if factor == 0.0 {
        return Err(TimeScaleError::CylinderDomain { h: nu, z: p, factor });
    }
    Ok(-p / factor)
}

/// True iff `1 - nu(t) p(t) > 0` at every grid point of `T ∩ [a, b]`.
pub fn is_positively_regressive<P: Fn(f64) -> f64>(p: P, ts: &TimeScale, a: f64, b: f64) -> bool {
    ts.grid(a, b)
        .iter()
        .all(|gp| 1.0 - gp.nu * p(gp.t) > 0.0)
}
