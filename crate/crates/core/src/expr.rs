//! Coordinate expressions for implicit set membership: polynomials in the
//! group coordinates plus the half-line indicator step(·) = 1_{[0,∞)}.
//! Evaluation is exact over the rationals; float mode refuses to decide
//! signs inside a small band around the indicator kink.

use crate::error::{CarnotError, Result};
use crate::groups::GroupDescriptor;
use crate::scalar::{parse_rat, Jet, Rat, Scalar};
use num_traits::Signed;
use std::cmp::Ordering;

/// Half-width of the float-mode kink exclusion band.
pub const KINK_BAND: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(Rat),
    Var(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, u32),
    Step(Box<Expr>),
}

/// Scalars an expression can be evaluated over: need a decidable (or
/// explicitly undecidable) comparison against zero for the indicator.
pub trait ExprScalar: Scalar {
    /// `None` means the sign cannot be decided (float kink band, or a jet
    /// seated exactly on the kink, where the derivative does not exist).
    fn cmp_zero(&self) -> Option<Ordering>;
    /// Whether step(0) may be evaluated (exact scalars only).
    const EXACT_KINK: bool;
}

impl ExprScalar for Rat {
    fn cmp_zero(&self) -> Option<Ordering> {
        Some(if Signed::is_positive(self) {
            Ordering::Greater
        } else if Signed::is_negative(self) {
            Ordering::Less
        } else {
            Ordering::Equal
        })
    }
    const EXACT_KINK: bool = true;
}

impl ExprScalar for f64 {
    fn cmp_zero(&self) -> Option<Ordering> {
        if self.abs() <= KINK_BAND {
            None
        } else if *self > 0.0 {
            Some(Ordering::Greater)
        } else {
            Some(Ordering::Less)
        }
    }
    const EXACT_KINK: bool = false;
}

impl<S: ExprScalar> ExprScalar for Jet<S> {
    fn cmp_zero(&self) -> Option<Ordering> {
        // The indicator has no two-sided derivative at the kink, so a jet
        // sitting exactly on it is undecidable even in exact mode.
        match self.val.cmp_zero() {
            Some(Ordering::Equal) => None,
            other => other,
        }
    }
    const EXACT_KINK: bool = false;
}

impl Expr {
    pub fn constant(q: Rat) -> Expr {
        Expr::Const(q)
    }

    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn add(self, rhs: Expr) -> Expr {
        Expr::Add(Box::new(self), Box::new(rhs))
    }

    pub fn sub(self, rhs: Expr) -> Expr {
        Expr::Sub(Box::new(self), Box::new(rhs))
    }

    pub fn mul(self, rhs: Expr) -> Expr {
        Expr::Mul(Box::new(self), Box::new(rhs))
    }

    pub fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }

    pub fn pow(self, e: u32) -> Expr {
        Expr::Pow(Box::new(self), e)
    }

    pub fn step(self) -> Expr {
        Expr::Step(Box::new(self))
    }

    /// Largest variable index used, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                match (a.max_var(), b.max_var()) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                }
            }
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Step(a) => a.max_var(),
        }
    }

    /// Evaluate over any expression scalar. `Err` marks an undecidable
    /// indicator sign, not a malformed expression.
    pub fn eval<S: ExprScalar>(&self, coords: &[S]) -> Result<S> {
        Ok(match self {
            Expr::Const(q) => S::from_rat(q),
            Expr::Var(i) => coords
                .get(*i)
                .cloned()
                .ok_or(CarnotError::DimensionMismatch { expected: *i + 1, got: coords.len() })?,
            Expr::Add(a, b) => a.eval(coords)?.add(&b.eval(coords)?),
            Expr::Sub(a, b) => a.eval(coords)?.sub(&b.eval(coords)?),
            Expr::Mul(a, b) => a.eval(coords)?.mul(&b.eval(coords)?),
            Expr::Neg(a) => a.eval(coords)?.neg(),
            Expr::Pow(a, e) => {
                let base = a.eval(coords)?;
                let mut acc = S::one();
                for _ in 0..*e {
                    acc = acc.mul(&base);
                }
                acc
            }
            Expr::Step(a) => {
                let arg = a.eval(coords)?;
                match arg.cmp_zero() {
                    Some(Ordering::Greater) => S::one(),
                    Some(Ordering::Less) => S::zero(),
                    Some(Ordering::Equal) if S::EXACT_KINK => S::one(),
                    _ => {
                        return Err(CarnotError::SolverFailure(
                            "indicator kink: sign undecidable here".into(),
                        ))
                    }
                }
            }
        })
    }
}

/// Resolve a coordinate name for the given descriptor: `x1...xn` always
/// work; filiform groups also accept `x`, `y`, `t1...tp`, and step-two
/// groups accept `t1...tl` for the vertical block.
pub fn var_index(g: &GroupDescriptor, name: &str) -> Option<usize> {
    let n = g.n();
    if let Some(rest) = name.strip_prefix('x') {
        if let Ok(i) = rest.parse::<usize>() {
            return (1..=n).contains(&i).then(|| i - 1);
        }
    }
    match g {
        GroupDescriptor::Filiform(f) => match name {
            "x" => Some(0),
            "y" => Some(1),
            _ => name.strip_prefix('t').and_then(|rest| {
                let k = rest.parse::<usize>().ok()?;
                (1..=f.p()).contains(&k).then(|| k + 1)
            }),
        },
        GroupDescriptor::StepTwo(s) => name.strip_prefix('t').and_then(|rest| {
            let k = rest.parse::<usize>().ok()?;
            (1..=s.l()).contains(&k).then(|| s.m() + k - 1)
        }),
        GroupDescriptor::Free32 => None,
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    g: &'a GroupDescriptor,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek()?;
        self.pos += 1;
        Some(c)
    }

    fn err(&self, msg: &str) -> CarnotError {
        CarnotError::Parse(format!("{msg} at byte {}", self.pos))
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(c) = self.peek() {
            match c {
                b'+' => {
                    self.bump();
                    lhs = lhs.add(self.term()?);
                }
                b'-' => {
                    self.bump();
                    lhs = lhs.sub(self.term()?);
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(b'*') {
            self.bump();
            lhs = lhs.mul(self.unary()?);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek() == Some(b'-') {
            self.bump();
            return Ok(self.unary()?.neg());
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.bump();
            let e = self.unsigned()?;
            return Ok(base.pow(e));
        }
        Ok(base)
    }

    fn unsigned(&mut self) -> Result<u32> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected an exponent"));
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|e| self.err(&format!("bad exponent: {e}")))
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.bump();
                let inner = self.expr()?;
                if self.bump() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let name = self.ident();
                if name == "step" {
                    if self.bump() != Some(b'(') {
                        return Err(self.err("step needs parentheses"));
                    }
                    let inner = self.expr()?;
                    if self.bump() != Some(b')') {
                        return Err(self.err("expected ')' after step argument"));
                    }
                    return Ok(inner.step());
                }
                var_index(self.g, &name)
                    .map(Expr::var)
                    .ok_or_else(|| self.err(&format!("unknown coordinate {name:?}")))
            }
            _ => Err(self.err("expected a number, coordinate or '('")),
        }
    }

    fn ident(&mut self) -> String {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    fn number(&mut self) -> Result<Expr> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_digit()
                || self.src[self.pos] == b'.'
                || self.src[self.pos] == b'/')
        {
            // A '/' is part of the literal only when followed by a digit.
            if self.src[self.pos] == b'/'
                && !self.src.get(self.pos + 1).is_some_and(|c| c.is_ascii_digit())
            {
                break;
            }
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        parse_rat(text).map(Expr::Const).map_err(CarnotError::Parse)
    }
}

/// Parse an expression over the coordinates of `g`. Operators: `+ - * ^`,
/// rational and decimal literals, parentheses and `step(...)`.
pub fn parse_expr(g: &GroupDescriptor, source: &str) -> Result<Expr> {
    let mut parser = Parser { src: source.as_bytes(), pos: 0, g };
    let expr = parser.expr()?;
    parser.skip_ws();
    if parser.pos != parser.src.len() {
        return Err(parser.err("trailing input"));
    }
    if let Some(max) = expr.max_var() {
        if max >= g.n() {
            return Err(CarnotError::Parse(format!(
                "coordinate index {} exceeds dimension {}",
                max + 1,
                g.n()
            )));
        }
    }
    Ok(expr)
}
