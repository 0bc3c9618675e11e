//! Scalars the group laws are evaluated over.
//!
//! Every group law in this crate is polynomial with rational coefficients, so
//! the same code path serves exact rational arithmetic, `f64`, first-order
//! jets (for exact differentials) and the square-root extension ring used by
//! the step-two chain solver.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use smallvec::SmallVec;
use std::fmt;
use std::sync::Arc;

/// Exact rational scalar.
pub type Rat = BigRational;

/// Commutative ring with a ℚ-action. `add`/`mul` take references to avoid
/// cloning big integers in the hot exact paths.
pub trait Scalar: Clone + PartialEq + fmt::Debug + 'static {
    fn zero() -> Self;
    fn one() -> Self;
    fn from_rat(q: &Rat) -> Self;
    fn add(&self, rhs: &Self) -> Self;
    fn sub(&self, rhs: &Self) -> Self;
    fn mul(&self, rhs: &Self) -> Self;
    fn neg(&self) -> Self;
    fn is_zero(&self) -> bool;

    fn from_int(n: i64) -> Self {
        Self::from_rat(&rat_i(n))
    }
    /// Multiply by a rational constant (coefficients of the group laws).
    fn scale(&self, q: &Rat) -> Self {
        self.mul(&Self::from_rat(q))
    }
    /// `Some(self > 0)` for ordered scalars, `None` where sign is undecidable.
    fn positivity(&self) -> Option<bool> {
        None
    }
}

/// `n` as a rational.
pub fn rat_i(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// `n/d` as a rational.
pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_to_f64(q: &Rat) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

/// Exact rational value of a finite `f64` (every finite float is dyadic).
pub fn f64_to_rat(x: f64) -> Rat {
    Rat::from_float(x).expect("finite float")
}

/// Parse "3", "-5/7", "0.25" or "2e-3" into an exact rational. Decimal
/// strings are read as exact decimal fractions, not as floats.
pub fn parse_rat(s: &str) -> Result<Rat, String> {
    let s = s.trim();
    if s.is_empty() {
        return Err("empty number".into());
    }
    if let Some((num, den)) = s.split_once('/') {
        let n: BigInt = num.trim().parse().map_err(|e| format!("bad numerator {num:?}: {e}"))?;
        let d: BigInt = den.trim().parse().map_err(|e| format!("bad denominator {den:?}: {e}"))?;
        if d.is_zero() {
            return Err(format!("zero denominator in {s:?}"));
        }
        return Ok(Rat::new(n, d));
    }
    // mantissa [.fraction] [e exponent]
    let (mantissa, exp) = match s.split_once(['e', 'E']) {
        Some((m, e)) => {
            let exp: i64 = e.parse().map_err(|e| format!("bad exponent in {s:?}: {e}"))?;
            (m, exp)
        }
        None => (s, 0),
    };
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((i, f)) => (i, f),
        None => (mantissa, ""),
    };
    let digits = format!(
        "{}{}",
        if int_part.is_empty() || int_part == "-" || int_part == "+" {
            format!("{int_part}0")
        } else {
            int_part.to_string()
        },
        frac_part
    );
    let n: BigInt = digits.parse().map_err(|e| format!("bad number {s:?}: {e}"))?;
    let shift = exp - frac_part.len() as i64;
    let ten = BigInt::from(10);
    let pow = ten.pow(shift.unsigned_abs() as u32);
    Ok(if shift >= 0 {
        Rat::from_integer(n * pow)
    } else {
        Rat::new(n, pow)
    })
}

/// "num/den" for non-integers, plain integer string otherwise.
pub fn rat_to_string(q: &Rat) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

impl Scalar for Rat {
    fn zero() -> Self {
        <Rat as Zero>::zero()
    }
    fn one() -> Self {
        <Rat as One>::one()
    }
    fn from_rat(q: &Rat) -> Self {
        q.clone()
    }
    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn sub(&self, rhs: &Self) -> Self {
        self - rhs
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn neg(&self) -> Self {
        -self
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn positivity(&self) -> Option<bool> {
        Some(Signed::is_positive(self))
    }
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_rat(q: &Rat) -> Self {
        rat_to_f64(q)
    }
    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn sub(&self, rhs: &Self) -> Self {
        self - rhs
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn neg(&self) -> Self {
        -self
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn positivity(&self) -> Option<bool> {
        Some(*self > 0.0)
    }
}

/// Gradient storage: inline up to 8 directions, heap beyond.
pub type Grad<S> = SmallVec<[S; 8]>;

/// First-order jet: value plus gradient with respect to a fixed direction
/// set. Gradients of different lengths are padded with zeros, so constants
/// carry an empty gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet<S> {
    pub val: S,
    pub grad: Grad<S>,
}

impl<S: Scalar> Jet<S> {
    pub fn constant(val: S) -> Self {
        Jet { val, grad: Grad::new() }
    }

    /// Seed the `idx`-th of `dim` independent directions.
    pub fn variable(val: S, idx: usize, dim: usize) -> Self {
        let mut grad = Grad::from_elem(S::zero(), dim);
        grad[idx] = S::one();
        Jet { val, grad }
    }

    pub fn derivative(&self, idx: usize) -> S {
        self.grad.get(idx).cloned().unwrap_or_else(S::zero)
    }
}

fn zip_grad<S: Scalar>(a: &[S], b: &[S], f: impl Fn(&S, &S) -> S) -> Grad<S> {
    let len = a.len().max(b.len());
    let zero = S::zero();
    (0..len)
        .map(|i| f(a.get(i).unwrap_or(&zero), b.get(i).unwrap_or(&zero)))
        .collect()
}

impl<S: Scalar> Scalar for Jet<S> {
    fn zero() -> Self {
        Jet::constant(S::zero())
    }
    fn one() -> Self {
        Jet::constant(S::one())
    }
    fn from_rat(q: &Rat) -> Self {
        Jet::constant(S::from_rat(q))
    }
    fn add(&self, rhs: &Self) -> Self {
        Jet {
            val: self.val.add(&rhs.val),
            grad: zip_grad(&self.grad, &rhs.grad, |a, b| a.add(b)),
        }
    }
    fn sub(&self, rhs: &Self) -> Self {
        Jet {
            val: self.val.sub(&rhs.val),
            grad: zip_grad(&self.grad, &rhs.grad, |a, b| a.sub(b)),
        }
    }
    fn mul(&self, rhs: &Self) -> Self {
        let grad = zip_grad(&self.grad, &rhs.grad, |da, db| {
            self.val.mul(db).add(&rhs.val.mul(da))
        });
        Jet { val: self.val.mul(&rhs.val), grad }
    }
    fn neg(&self) -> Self {
        Jet {
            val: self.val.neg(),
            grad: self.grad.iter().map(|g| g.neg()).collect(),
        }
    }
    fn is_zero(&self) -> bool {
        self.val.is_zero() && self.grad.iter().all(|g| g.is_zero())
    }
    fn positivity(&self) -> Option<bool> {
        self.val.positivity()
    }
}

/// Context for the ring ℚ[s₁,…,s_L] / (s_α² − d_α) with d_α ≥ 0, used to
/// carry the √|c_α| terms of the step-two chain solver exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct SqrtCtx {
    pub radicands: Vec<Rat>,
}

impl SqrtCtx {
    pub fn new(radicands: Vec<Rat>) -> Arc<Self> {
        assert!(
            radicands.iter().all(|d| !Signed::is_negative(d)),
            "radicands must be nonnegative"
        );
        Arc::new(SqrtCtx { radicands })
    }

    fn dim(&self) -> usize {
        1 << self.radicands.len()
    }
}

/// Element of the square-root extension ring. Coefficients are indexed by
/// square-free monomials in the adjoined symbols (bitmask over symbols).
/// Pure rationals carry no context and promote on demand.
#[derive(Clone, Debug)]
pub struct SqrtElem {
    ctx: Option<Arc<SqrtCtx>>,
    coeffs: Vec<Rat>,
}

impl SqrtElem {
    pub fn rational(q: Rat) -> Self {
        SqrtElem { ctx: None, coeffs: vec![q] }
    }

    /// The square root of `radicands[alpha]`: the exact rational root when the
    /// radicand is a perfect square, the formal symbol s_alpha otherwise.
    pub fn symbol(ctx: &Arc<SqrtCtx>, alpha: usize) -> Self {
        if let Some(root) = rat_sqrt_exact(&ctx.radicands[alpha]) {
            return SqrtElem::rational(root);
        }
        let mut coeffs = vec![<Rat as Zero>::zero(); ctx.dim()];
        coeffs[1 << alpha] = <Rat as One>::one();
        SqrtElem { ctx: Some(ctx.clone()), coeffs }
    }

    fn unify(&self, rhs: &Self) -> Option<Arc<SqrtCtx>> {
        match (&self.ctx, &rhs.ctx) {
            (None, None) => None,
            (Some(c), None) | (None, Some(c)) => Some(c.clone()),
            (Some(a), Some(b)) => {
                assert!(
                    Arc::ptr_eq(a, b) || a.radicands == b.radicands,
                    "mixed square-root contexts"
                );
                Some(a.clone())
            }
        }
    }

    fn promoted(&self, ctx: &Option<Arc<SqrtCtx>>) -> Vec<Rat> {
        let dim = ctx.as_ref().map_or(1, |c| c.dim());
        let mut coeffs = vec![<Rat as Zero>::zero(); dim];
        for (i, c) in self.coeffs.iter().enumerate() {
            coeffs[i] = c.clone();
        }
        coeffs
    }

    /// Coefficient of the square-free monomial with the given symbol mask
    /// (mask 0 is the rational part).
    pub fn coefficient(&self, mask: usize) -> Rat {
        self.coeffs.get(mask).cloned().unwrap_or_else(<Rat as Zero>::zero)
    }

    pub fn context(&self) -> Option<&Arc<SqrtCtx>> {
        self.ctx.as_ref()
    }

    /// Exact rational value, if the element lies in ℚ.
    pub fn as_rat(&self) -> Option<Rat> {
        if self.coeffs.iter().skip(1).all(|c| Zero::is_zero(c)) {
            Some(self.coeffs.first().cloned().unwrap_or_else(<Rat as Zero>::zero))
        } else {
            None
        }
    }

    pub fn to_f64(&self) -> f64 {
        let mut total = 0.0;
        for (mask, c) in self.coeffs.iter().enumerate() {
            if Zero::is_zero(c) {
                continue;
            }
            let mut term = rat_to_f64(c);
            if mask != 0 {
                let ctx = self.ctx.as_ref().expect("nonconstant term needs a context");
                for (alpha, d) in ctx.radicands.iter().enumerate() {
                    if mask & (1 << alpha) != 0 {
                        term *= rat_to_f64(d).sqrt();
                    }
                }
            }
            total += term;
        }
        total
    }
}

impl PartialEq for SqrtElem {
    fn eq(&self, other: &Self) -> bool {
        let ctx = self.unify(other);
        self.promoted(&ctx) == other.promoted(&ctx)
    }
}

impl Scalar for SqrtElem {
    fn zero() -> Self {
        SqrtElem::rational(<Rat as Zero>::zero())
    }
    fn one() -> Self {
        SqrtElem::rational(<Rat as One>::one())
    }
    fn from_rat(q: &Rat) -> Self {
        SqrtElem::rational(q.clone())
    }
    fn add(&self, rhs: &Self) -> Self {
        let ctx = self.unify(rhs);
        let mut coeffs = self.promoted(&ctx);
        for (c, r) in coeffs.iter_mut().zip(rhs.promoted(&ctx)) {
            *c += r;
        }
        SqrtElem { ctx, coeffs }
    }
    fn sub(&self, rhs: &Self) -> Self {
        self.add(&rhs.neg())
    }
    fn mul(&self, rhs: &Self) -> Self {
        let ctx = self.unify(rhs);
        let a = self.promoted(&ctx);
        let b = rhs.promoted(&ctx);
        let dim = a.len();
        let mut coeffs = vec![<Rat as Zero>::zero(); dim];
        for (i, ai) in a.iter().enumerate() {
            if Zero::is_zero(ai) {
                continue;
            }
            for (j, bj) in b.iter().enumerate() {
                if Zero::is_zero(bj) {
                    continue;
                }
                let mut term = ai * bj;
                let common = i & j;
                if common != 0 {
                    let c = ctx.as_ref().expect("context required");
                    for (alpha, d) in c.radicands.iter().enumerate() {
                        if common & (1 << alpha) != 0 {
                            term *= d;
                        }
                    }
                }
                coeffs[i ^ j] += term;
            }
        }
        SqrtElem { ctx, coeffs }
    }
    fn neg(&self) -> Self {
        SqrtElem {
            ctx: self.ctx.clone(),
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
        }
    }
    fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| Zero::is_zero(c))
    }
}

/// Exact square root of a nonnegative rational, when it is rational.
pub fn rat_sqrt_exact(q: &Rat) -> Option<Rat> {
    if Signed::is_negative(q) {
        return None;
    }
    let ns = q.numer().sqrt();
    let ds = q.denom().sqrt();
    (&ns * &ns == *q.numer() && &ds * &ds == *q.denom()).then(|| Rat::new(ns, ds))
}

/// Random rational with numerator in `[-max_num, max_num]` and denominator
/// in `[1, max_den]`.
pub fn rand_rat(rng: &mut impl rand::Rng, max_num: i64, max_den: i64) -> Rat {
    let n = rng.random_range(-max_num..=max_num);
    let d = rng.random_range(1..=max_den);
    rat(n, d)
}
