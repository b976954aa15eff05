//! Coefficient and delay functions as small expression trees.
//!
//! Expressions are written in a prefix form such as
//! `add(const 0.895, scale 0.005 (sin (affine 2.6458 0 t)))`. Unary
//! operators take one operand, optionally parenthesised; `add` and `mul` take
//! two comma-separated operands inside parentheses. Numbers are decimal
//! literals or `pi` (optionally negated, `-pi`).

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub enum CoeffExpr {
    Const(f64),
    Time,
    Sin(Box<CoeffExpr>),
    Cos(Box<CoeffExpr>),
    Abs(Box<CoeffExpr>),
    Exp(Box<CoeffExpr>),
    Neg(Box<CoeffExpr>),
    Add(Box<CoeffExpr>, Box<CoeffExpr>),
    Mul(Box<CoeffExpr>, Box<CoeffExpr>),
    Scale(f64, Box<CoeffExpr>),
    /// `omega * arg + phase`
    Affine {
        omega: f64,
        phase: f64,
        arg: Box<CoeffExpr>,
    },
}

// builder names mirror the expression syntax rather than operator traits
#[allow(clippy::should_implement_trait)]
impl CoeffExpr {
    pub fn constant(v: f64) -> Self {
        CoeffExpr::Const(v)
    }

    pub fn zero() -> Self {
        CoeffExpr::Const(0.0)
    }

    pub fn t() -> Self {
        CoeffExpr::Time
    }

    pub fn sin(self) -> Self {
        CoeffExpr::Sin(Box::new(self))
    }

    pub fn cos(self) -> Self {
        CoeffExpr::Cos(Box::new(self))
    }

    pub fn abs(self) -> Self {
        CoeffExpr::Abs(Box::new(self))
    }

    pub fn exp(self) -> Self {
        CoeffExpr::Exp(Box::new(self))
    }

    pub fn neg(self) -> Self {
        CoeffExpr::Neg(Box::new(self))
    }

    pub fn add(self, rhs: CoeffExpr) -> Self {
        CoeffExpr::Add(Box::new(self), Box::new(rhs))
    }

    pub fn mul(self, rhs: CoeffExpr) -> Self {
        CoeffExpr::Mul(Box::new(self), Box::new(rhs))
    }

    pub fn scale(self, k: f64) -> Self {
        CoeffExpr::Scale(k, Box::new(self))
    }

    pub fn affine(self, omega: f64, phase: f64) -> Self {
        CoeffExpr::Affine {
            omega,
            phase,
            arg: Box::new(self),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            CoeffExpr::Const(v) => *v,
            CoeffExpr::Time => t,
            CoeffExpr::Sin(a) => a.eval(t).sin(),
            CoeffExpr::Cos(a) => a.eval(t).cos(),
            CoeffExpr::Abs(a) => a.eval(t).abs(),
            CoeffExpr::Exp(a) => a.eval(t).exp(),
            CoeffExpr::Neg(a) => -a.eval(t),
            CoeffExpr::Add(l, r) => l.eval(t) + r.eval(t),
            CoeffExpr::Mul(l, r) => l.eval(t) * r.eval(t),
            CoeffExpr::Scale(k, a) => k * a.eval(t),
            CoeffExpr::Affine { omega, phase, arg } => omega * arg.eval(t) + phase,
        }
    }

    /// `Some(v)` when the expression is a literal constant.
    pub fn as_const(&self) -> Option<f64> {
        match self {
            CoeffExpr::Const(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }
}

/// Free-function form of [`CoeffExpr::eval`].
pub fn eval(expr: &CoeffExpr, t: f64) -> f64 {
    expr.eval(t)
}

impl fmt::Display for CoeffExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoeffExpr::Const(v) => write!(f, "const {v}"),
            CoeffExpr::Time => write!(f, "t"),
            CoeffExpr::Sin(a) => write!(f, "sin ({a})"),
            CoeffExpr::Cos(a) => write!(f, "cos ({a})"),
            CoeffExpr::Abs(a) => write!(f, "abs ({a})"),
            CoeffExpr::Exp(a) => write!(f, "exp ({a})"),
            CoeffExpr::Neg(a) => write!(f, "neg ({a})"),
            CoeffExpr::Add(l, r) => write!(f, "add({l}, {r})"),
            CoeffExpr::Mul(l, r) => write!(f, "mul({l}, {r})"),
            CoeffExpr::Scale(k, a) => write!(f, "scale {k} ({a})"),
            CoeffExpr::Affine { omega, phase, arg } => {
                write!(f, "affine {omega} {phase} ({arg})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoeffError {
    #[error("expression parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("sampling grid is empty")]
    EmptyGrid,
    #[error("sampled sup {sampled} exceeds analytic override {analytic}")]
    OverrideBelowSample { sampled: f64, analytic: f64 },
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Word(String),
    Number(f64),
    LParen,
    RParen,
    Comma,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token)>, CoeffError> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut k = 0;
    while k < bytes.len() {
        let c = bytes[k] as char;
        if c.is_whitespace() {
            k += 1;
            continue;
        }
        match c {
            '(' => out.push((k, Token::LParen)),
            ')' => out.push((k, Token::RParen)),
            ',' => out.push((k, Token::Comma)),
            _ => {
                let start = k;
                while k < bytes.len() {
                    let ch = bytes[k] as char;
                    if ch.is_whitespace() || matches!(ch, '(' | ')' | ',') {
                        break;
                    }
                    k += 1;
                }
                let word = &text[start..k];
                let token = match word {
                    "pi" => Token::Number(std::f64::consts::PI),
                    "-pi" => Token::Number(-std::f64::consts::PI),
                    _ => match word.parse::<f64>() {
                        Ok(v) if word.starts_with(|ch: char| ch.is_ascii_digit() || ch == '-' || ch == '+' || ch == '.') => {
                            Token::Number(v)
                        }
                        _ => Token::Word(word.to_string()),
                    },
                };
                out.push((start, token));
                continue;
            }
        }
        k += 1;
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    len: usize,
}

impl Parser {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, CoeffError> {
        let pos = self.tokens.get(self.pos).map(|t| t.0).unwrap_or(self.len);
        Err(CoeffError::Parse {
            pos,
            msg: msg.into(),
        })
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|t| t.1.clone());
        self.pos += 1;
        t
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|t| &t.1)
    }

    fn expect(&mut self, want: Token) -> Result<(), CoeffError> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected {want:?}"))
        }
    }

    fn number(&mut self) -> Result<f64, CoeffError> {
        match self.peek() {
            Some(Token::Number(v)) => {
                let v = *v;
                self.pos += 1;
                Ok(v)
            }
            _ => self.err("expected a number"),
        }
    }

    fn expr(&mut self) -> Result<CoeffExpr, CoeffError> {
        match self.next() {
            Some(Token::LParen) => {
                let e = self.expr()?;
                self.expect(Token::RParen)?;
                Ok(e)
            }
            Some(Token::Number(v)) => Ok(CoeffExpr::Const(v)),
            Some(Token::Word(w)) => match w.as_str() {
                "t" => Ok(CoeffExpr::Time),
                "const" => Ok(CoeffExpr::Const(self.number()?)),
                "sin" => Ok(self.expr()?.sin()),
                "cos" => Ok(self.expr()?.cos()),
                "abs" => Ok(self.expr()?.abs()),
                "exp" => Ok(self.expr()?.exp()),
                "neg" => Ok(self.expr()?.neg()),
                "scale" => {
                    let k = self.number()?;
                    Ok(self.expr()?.scale(k))
                }
                "affine" => {
                    let omega = self.number()?;
                    let phase = self.number()?;
                    Ok(self.expr()?.affine(omega, phase))
                }
                "add" | "mul" => {
                    self.expect(Token::LParen)?;
                    let l = self.expr()?;
                    self.expect(Token::Comma)?;
                    let r = self.expr()?;
                    self.expect(Token::RParen)?;
                    Ok(if w == "add" { l.add(r) } else { l.mul(r) })
                }
                other => {
                    self.pos -= 1;
                    self.err(format!("unknown operator '{other}'"))
                }
            },
            Some(tok) => {
                self.pos -= 1;
                self.err(format!("unexpected {tok:?}"))
            }
            None => self.err("unexpected end of expression"),
        }
    }
}

impl FromStr for CoeffExpr {
    type Err = CoeffError;

    fn from_str(text: &str) -> Result<Self, CoeffError> {
        let tokens = tokenize(text)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            len: text.len(),
        };
        let e = p.expr()?;
        if p.pos < p.tokens.len() {
            return p.err("trailing input");
        }
        Ok(e)
    }
}

/// Where a bound came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundSource {
    Sampled,
    /// Supplied by the user; `analytic` marks a claimed true supremum.
    UserOverride { analytic: bool },
}

/// Sup and inf of `|expr|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundPair {
    pub sup_abs: f64,
    pub inf_abs: f64,
    pub source: BoundSource,
}

impl BoundPair {
    pub fn user(sup_abs: f64, inf_abs: f64, analytic: bool) -> Self {
        BoundPair {
            sup_abs,
            inf_abs,
            source: BoundSource::UserOverride { analytic },
        }
    }

    pub fn is_override(&self) -> bool {
        matches!(self.source, BoundSource::UserOverride { .. })
    }
}

/// Sample locations used for bound extraction.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplingGrid {
    Uniform { start: f64, end: f64, count: usize },
    Points(Vec<f64>),
}

impl Default for SamplingGrid {
    fn default() -> Self {
        SamplingGrid::Uniform {
            start: 0.0,
            end: 1000.0,
            count: 100_000,
        }
    }
}

impl SamplingGrid {
    pub fn len(&self) -> usize {
        match self {
            SamplingGrid::Uniform { count, .. } => *count,
            SamplingGrid::Points(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> Box<dyn Iterator<Item = f64> + '_> {
        match self {
            SamplingGrid::Uniform { start, end, count } => {
                let (start, end, count) = (*start, *end, *count);
                let step = if count > 1 {
                    (end - start) / (count - 1) as f64
                } else {
                    0.0
                };
                Box::new((0..count).map(move |k| start + k as f64 * step))
            }
            SamplingGrid::Points(p) => Box::new(p.iter().copied()),
        }
    }
}

/// Max and min of `|expr|` over the grid.
pub fn bound_sup_inf(expr: &CoeffExpr, grid: &SamplingGrid) -> Result<BoundPair, CoeffError> {
    if grid.is_empty() {
        return Err(CoeffError::EmptyGrid);
    }
    if let Some(v) = expr.as_const() {
        return Ok(BoundPair {
            sup_abs: v.abs(),
            inf_abs: v.abs(),
            source: BoundSource::Sampled,
        });
    }
    let (mut sup, mut inf) = (0.0f64, f64::INFINITY);
    for t in grid.points() {
        let v = expr.eval(t).abs();
        sup = sup.max(v);
        inf = inf.min(v);
    }
    Ok(BoundPair {
        sup_abs: sup,
        inf_abs: inf,
        source: BoundSource::Sampled,
    })
}

/// Sampled bounds unless `user` is given, in which case the override wins.
pub fn resolve_bound(
    expr: &CoeffExpr,
    user: Option<&BoundPair>,
    grid: &SamplingGrid,
) -> Result<BoundPair, CoeffError> {
    match user {
        Some(b) => Ok(*b),
        None => bound_sup_inf(expr, grid),
    }
}

/// Rejects an analytic override whose sup is below a sampled value.
pub fn check_override(
    expr: &CoeffExpr,
    user: &BoundPair,
    grid: &SamplingGrid,
) -> Result<(), CoeffError> {
    if let BoundSource::UserOverride { analytic: true } = user.source {
        let sampled = bound_sup_inf(expr, grid)?;
        if sampled.sup_abs > user.sup_abs + 1e-12 {
            return Err(CoeffError::OverrideBelowSample {
                sampled: sampled.sup_abs,
                analytic: user.sup_abs,
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn alpha1() -> CoeffExpr {
        CoeffExpr::constant(0.895).add(CoeffExpr::t().affine(7f64.sqrt(), 0.0).sin().scale(0.005))
    }

    #[test]
    fn eval_examples() {
        assert_eq!(CoeffExpr::constant(0.9).eval(123.4), 0.9);
        assert_eq!(alpha1().eval(0.0), 0.895);
        let delay = CoeffExpr::t().affine(PI, 0.0).sin().abs().scale(-4.0).exp();
        assert_eq!(delay.eval(0.0), 1.0);
    }

    #[test]
    fn bound_examples() {
        let grid = SamplingGrid::default();
        let b = bound_sup_inf(&alpha1(), &grid).unwrap();
        assert_abs_diff_eq!(b.sup_abs, 0.9, epsilon = 1e-3);
        assert_abs_diff_eq!(b.inf_abs, 0.89, epsilon = 1e-3);
        let c = bound_sup_inf(&CoeffExpr::constant(-0.3), &grid).unwrap();
        assert_eq!((c.sup_abs, c.inf_abs), (0.3, 0.3));
        let w = CoeffExpr::t().sin().scale(1.0 / 20.0);
        let b = bound_sup_inf(&w, &grid).unwrap();
        assert_abs_diff_eq!(b.sup_abs, 0.05, epsilon = 1e-3);
        assert_abs_diff_eq!(b.inf_abs, 0.0, epsilon = 1e-3);
        assert_eq!(
            bound_sup_inf(&w, &SamplingGrid::Points(vec![])),
            Err(CoeffError::EmptyGrid)
        );
    }

    #[test]
    fn override_takes_precedence() {
        let grid = SamplingGrid::default();
        let user = BoundPair::user(0.06, 0.0, false);
        let delay = CoeffExpr::t().affine(PI, 1.5 * PI).cos().abs().scale(-5.0).exp();
        let b = resolve_bound(&delay, Some(&user), &grid).unwrap();
        assert_eq!(b, user);
        // non-analytic overrides are taken on trust
        assert!(check_override(&delay, &user, &grid).is_ok());
        let claimed = BoundPair::user(0.06, 0.0, true);
        assert!(check_override(&delay, &claimed, &grid).is_err());
    }

    #[test]
    fn parse_example_syntax() {
        let e: CoeffExpr = "add(const 0.895, scale 0.005 (sin (affine 2.6458 0 t)))"
            .parse()
            .unwrap();
        assert_abs_diff_eq!(e.eval(1.0), 0.895 + 0.005 * 2.6458f64.sin(), epsilon = 1e-15);
        let e: CoeffExpr = "exp (scale -4 (abs (sin (affine pi 0 t))))".parse().unwrap();
        assert_eq!(e.eval(0.0), 1.0);
        let e: CoeffExpr = "mul(t, neg t)".parse().unwrap();
        assert_eq!(e.eval(3.0), -9.0);
        assert_eq!("0.25".parse::<CoeffExpr>().unwrap(), CoeffExpr::Const(0.25));
    }

    #[test]
    fn parse_errors_report_position() {
        match "add(t t)".parse::<CoeffExpr>() {
            Err(CoeffError::Parse { pos, .. }) => assert_eq!(pos, 6),
            other => panic!("unexpected {other:?}"),
        }
        assert!("frob t".parse::<CoeffExpr>().is_err());
        assert!("sin".parse::<CoeffExpr>().is_err());
        assert!("t t".parse::<CoeffExpr>().is_err());
    }

    #[test]
    fn display_round_trip() {
        let exprs = [
            alpha1(),
            CoeffExpr::t().affine(PI, -1.5 * PI).cos().abs().scale(-5.0).exp(),
            CoeffExpr::t().mul(CoeffExpr::constant(-2.5e-7)).neg(),
        ];
        for e in exprs {
            let back: CoeffExpr = e.to_string().parse().unwrap();
            assert_eq!(back, e);
        }
    }
}
