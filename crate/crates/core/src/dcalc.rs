//! Symbolic derivation calculus for constructible distances.
//!
//! Expressions over {rational literals, +, -, *, /, sqrt} denote
//! non-negative reals in the real quadratic closure of Q. `derive`
//! produces a tree of closure-rule applications whose root value equals
//! the expression's value; every node is checkable by rigorous interval
//! arithmetic (`eval_interval`, `check_derivation`), and `size_account`
//! folds each rule's union arity into a witness-size upper bound.
//!
//! No points are materialized here: coordinates realizing these rules
//! are irrational in general, so the calculus stays symbolic. The
//! geometric pipeline in [`crate::witness`] covers the distances it can
//! reach with exact rational coordinates.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::exactq::Rat;

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum DcalcError {
    #[error("syntax error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("division by zero literal at byte {pos}")]
    DivisionByZero { pos: usize },
    #[error("DomainError: {0}")]
    Domain(String),
    #[error("ZeroDivisor")]
    ZeroDivisor,
    #[error("NegativeDistance")]
    NegativeDistance,
    #[error("NoDerivation: {0}")]
    NoDerivation(String),
    #[error("interval check failed: {0}")]
    CheckFailed(String),
    #[error("Unsupported: {0}")]
    Unsupported(String),
}

// ---------------------------------------------------------------------------
// Expressions
// ---------------------------------------------------------------------------

/// Expression tree over the quadratic closure of Q.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Lit(Rat),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Sqrt(Box<Expr>),
}

impl Expr {
    pub fn int(n: i64) -> Expr {
        Expr::Lit(Rat::from_int(n))
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::Add(Box::new(a), Box::new(b))
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::Sub(Box::new(a), Box::new(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::Mul(Box::new(a), Box::new(b))
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        Expr::Div(Box::new(a), Box::new(b))
    }

    pub fn sqrt(a: Expr) -> Expr {
        Expr::Sqrt(Box::new(a))
    }
}

fn fmt_prec(e: &Expr, min_prec: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let (prec, op, l, r) = match e {
        Expr::Lit(v) => return write!(f, "{v}"),
        Expr::Sqrt(a) => {
            write!(f, "sqrt(")?;
            fmt_prec(a, 0, f)?;
            return write!(f, ")");
        }
        Expr::Add(l, r) => (1, '+', l, r),
        Expr::Sub(l, r) => (1, '-', l, r),
        Expr::Mul(l, r) => (2, '*', l, r),
        Expr::Div(l, r) => (2, '/', l, r),
    };
    let parens = prec < min_prec;
    if parens {
        write!(f, "(")?;
    }
    fmt_prec(l, prec, f)?;
    write!(f, "{op}")?;
    // The right operand gets a strictly higher minimum so the printed
    // string reparses to the identical tree (no silent reassociation).
    fmt_prec(r, prec + 1, f)?;
    if parens {
        write!(f, ")")?;
    }
    Ok(())
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_prec(self, 0, f)
    }
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(BigInt),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    Sqrt,
}

fn tokenize(s: &str) -> Result<Vec<(Tok, usize)>, DcalcError> {
    let bytes = s.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'+' => {
                toks.push((Tok::Plus, i));
                i += 1;
            }
            b'-' => {
                toks.push((Tok::Minus, i));
                i += 1;
            }
            b'*' => {
                toks.push((Tok::Star, i));
                i += 1;
            }
            b'/' => {
                toks.push((Tok::Slash, i));
                i += 1;
            }
            b'(' => {
                toks.push((Tok::LParen, i));
                i += 1;
            }
            b')' => {
                toks.push((Tok::RParen, i));
                i += 1;
            }
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let n: BigInt = s[start..i].parse().expect("digit run");
                toks.push((Tok::Int(n), start));
            }
            _ if s[i..].starts_with("sqrt") => {
                toks.push((Tok::Sqrt, i));
                i += 4;
            }
            _ => {
                return Err(DcalcError::Parse {
                    pos: i,
                    msg: format!("unexpected character {:?}", s[i..].chars().next().unwrap()),
                })
            }
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&(Tok, usize)> {
        self.toks.get(self.pos)
    }

    fn here(&self) -> usize {
        self.peek().map(|(_, p)| *p).unwrap_or(self.end)
    }

    fn err(&self, msg: &str) -> DcalcError {
        DcalcError::Parse {
            pos: self.here(),
            msg: msg.to_string(),
        }
    }

    fn expr(&mut self) -> Result<Expr, DcalcError> {
        let mut acc = self.term()?;
        while let Some((tok, _)) = self.peek() {
            let plus = match tok {
                Tok::Plus => true,
                Tok::Minus => false,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.term()?;
            acc = if plus { Expr::add(acc, rhs) } else { Expr::sub(acc, rhs) };
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Expr, DcalcError> {
        let mut acc = self.factor()?;
        while let Some((tok, _)) = self.peek() {
            let mul = match tok {
                Tok::Star => true,
                Tok::Slash => false,
                _ => break,
            };
            self.pos += 1;
            let rhs_pos = self.here();
            let rhs = self.factor()?;
            if !mul {
                if let Expr::Lit(v) = &rhs {
                    if v.is_zero() {
                        return Err(DcalcError::DivisionByZero { pos: rhs_pos });
                    }
                }
            }
            acc = if mul { Expr::mul(acc, rhs) } else { Expr::div(acc, rhs) };
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Expr, DcalcError> {
        match self.peek().cloned() {
            Some((Tok::Int(n), _)) => {
                self.pos += 1;
                Ok(Expr::Lit(Rat::from_big(n, BigInt::one()).expect("unit denominator")))
            }
            Some((Tok::Sqrt, _)) => {
                self.pos += 1;
                match self.peek() {
                    Some((Tok::LParen, _)) => self.pos += 1,
                    _ => return Err(self.err("expected '(' after sqrt")),
                }
                let inner = self.expr()?;
                match self.peek() {
                    Some((Tok::RParen, _)) => self.pos += 1,
                    _ => return Err(self.err("expected ')'")),
                }
                Ok(Expr::sqrt(inner))
            }
            Some((Tok::LParen, _)) => {
                self.pos += 1;
                let inner = self.expr()?;
                match self.peek() {
                    Some((Tok::RParen, _)) => self.pos += 1,
                    _ => return Err(self.err("expected ')'")),
                }
                Ok(inner)
            }
            _ => Err(self.err("expected a number, 'sqrt', or '('")),
        }
    }
}

/// Parse an expression: precedence `sqrt` > `* /` > `+ -`, parentheses,
/// non-negative integer literals (rationals are written `p/q`).
pub fn parse_expr(s: &str) -> Result<Expr, DcalcError> {
    let toks = tokenize(s)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: s.len(),
    };
    let e = p.expr()?;
    if p.peek().is_some() {
        return Err(p.err("trailing input"));
    }
    Ok(e)
}

// ---------------------------------------------------------------------------
// Interval arithmetic
// ---------------------------------------------------------------------------

/// Closed interval with exact rational endpoints, `lo <= hi`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interval {
    pub lo: Rat,
    pub hi: Rat,
}

impl Interval {
    fn point(r: Rat) -> Interval {
        Interval {
            lo: r.clone(),
            hi: r,
        }
    }

    pub fn width(&self) -> Rat {
        &self.hi - &self.lo
    }

    pub fn mid(&self) -> Rat {
        &(&self.lo + &self.hi) * &Rat::new(1, 2).unwrap()
    }

    pub fn contains(&self, r: &Rat) -> bool {
        &self.lo <= r && r <= &self.hi
    }

    pub fn intersects(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    fn add(&self, o: &Interval) -> Interval {
        Interval {
            lo: &self.lo + &o.lo,
            hi: &self.hi + &o.hi,
        }
    }

    fn sub(&self, o: &Interval) -> Interval {
        Interval {
            lo: &self.lo - &o.hi,
            hi: &self.hi - &o.lo,
        }
    }

    fn mul(&self, o: &Interval) -> Interval {
        let cands = [
            &self.lo * &o.lo,
            &self.lo * &o.hi,
            &self.hi * &o.lo,
            &self.hi * &o.hi,
        ];
        let lo = cands.iter().min().unwrap().clone();
        let hi = cands.iter().max().unwrap().clone();
        Interval { lo, hi }
    }

    /// None when the divisor interval touches zero.
    fn div(&self, o: &Interval) -> Option<Interval> {
        if o.lo.is_positive() || o.hi.is_negative() {
            let inv = Interval {
                lo: o.hi.recip(),
                hi: o.lo.recip(),
            };
            Some(self.mul(&inv))
        } else {
            None
        }
    }

    fn scale_int(&self, k: i64) -> Interval {
        let k = Rat::from_int(k);
        if k.is_negative() {
            Interval {
                lo: &self.hi * &k,
                hi: &self.lo * &k,
            }
        } else {
            Interval {
                lo: &self.lo * &k,
                hi: &self.hi * &k,
            }
        }
    }

    /// Square-root enclosure: dyadic endpoints with denominator 2^prec,
    /// so the result width is at most 2^(1-prec). Negative lower ends are
    /// clamped to 0; an interval entirely below 0 is a domain error.
    fn sqrt(&self, prec: u32) -> Result<Interval, DcalcError> {
        if self.hi.is_negative() {
            return Err(DcalcError::Domain(
                "sqrt of an interval entirely below 0".to_string(),
            ));
        }
        let lo = if self.lo.is_negative() {
            Rat::zero()
        } else {
            sqrt_lower(&self.lo, prec)
        };
        let hi = sqrt_upper(&self.hi, prec);
        Ok(Interval { lo, hi })
    }
}

/// Largest s/2^prec with (s/2^prec)^2 <= r, via the integer square root
/// of the scaled numerator.
fn sqrt_lower(r: &Rat, prec: u32) -> Rat {
    debug_assert!(!r.is_negative());
    let scaled: BigInt = (r.numer() << (2 * prec as usize)) / r.denom();
    let s = scaled.sqrt();
    Rat::from_big(s, BigInt::one() << prec as usize).unwrap()
}

/// Upper companion of `sqrt_lower`: (s+1)/2^prec with s the integer root
/// of the ceiling-scaled numerator.
fn sqrt_upper(r: &Rat, prec: u32) -> Rat {
    debug_assert!(!r.is_negative());
    let num: BigInt = r.numer() << (2 * prec as usize);
    let scaled: BigInt = (num + r.denom() - BigInt::one()) / r.denom();
    let s = scaled.sqrt() + BigInt::one();
    Rat::from_big(s, BigInt::one() << prec as usize).unwrap()
}

/// Exact rational value of an expression when one exists along the tree
/// (sqrt only when the radicand is a perfect rational square).
pub fn exact_rat(e: &Expr) -> Option<Rat> {
    match e {
        Expr::Lit(v) => Some(v.clone()),
        Expr::Add(a, b) => Some(&exact_rat(a)? + &exact_rat(b)?),
        Expr::Sub(a, b) => Some(&exact_rat(a)? - &exact_rat(b)?),
        Expr::Mul(a, b) => {
            let ea = exact_rat(a);
            let eb = exact_rat(b);
            // A zero factor annihilates an irrational cofactor.
            if matches!(&ea, Some(v) if v.is_zero()) || matches!(&eb, Some(v) if v.is_zero()) {
                return Some(Rat::zero());
            }
            Some(&ea? * &eb?)
        }
        Expr::Div(a, b) => {
            let eb = exact_rat(b)?;
            if eb.is_zero() {
                return None;
            }
            Some(&exact_rat(a)? / &eb)
        }
        Expr::Sqrt(a) => {
            let ea = exact_rat(a)?;
            if ea.is_negative() {
                None
            } else {
                ea.sqrt_exact()
            }
        }
    }
}

/// Evaluation at fixed working precision. `Indeterminate` means the
/// divisor interval touched zero without being exactly zero — retried at
/// higher precision by `eval_interval`.
enum EvalFail {
    Hard(DcalcError),
    Indeterminate,
}

fn eval_at(e: &Expr, prec: u32) -> Result<Interval, EvalFail> {
    match e {
        Expr::Lit(v) => Ok(Interval::point(v.clone())),
        Expr::Add(a, b) => Ok(eval_at(a, prec)?.add(&eval_at(b, prec)?)),
        Expr::Sub(a, b) => Ok(eval_at(a, prec)?.sub(&eval_at(b, prec)?)),
        Expr::Mul(a, b) => Ok(eval_at(a, prec)?.mul(&eval_at(b, prec)?)),
        Expr::Div(a, b) => {
            let ia = eval_at(a, prec)?;
            let ib = eval_at(b, prec)?;
            match ia.div(&ib) {
                Some(iv) => Ok(iv),
                None => {
                    if matches!(exact_rat(b), Some(v) if v.is_zero()) {
                        Err(EvalFail::Hard(DcalcError::ZeroDivisor))
                    } else {
                        Err(EvalFail::Indeterminate)
                    }
                }
            }
        }
        Expr::Sqrt(a) => eval_at(a, prec)?.sqrt(prec).map_err(EvalFail::Hard),
    }
}

/// Rigorous enclosure of the expression's value with width at most
/// 2^(1-bits) * max(1, |value|). Requires `bits >= 16`.
pub fn eval_interval(e: &Expr, bits: u32) -> Result<Interval, DcalcError> {
    if bits < 16 {
        return Err(DcalcError::Unsupported(format!(
            "eval_interval needs bits >= 16, got {bits}"
        )));
    }
    for extra in [32u32, 64, 128, 256, 512, 1024] {
        match eval_at(e, bits + extra) {
            Ok(iv) => {
                // The allowance scales with |value|; with endpoints of
                // mixed sign only the absolute floor of 1 applies.
                let mag = if iv.lo.is_positive() {
                    iv.lo.clone()
                } else if iv.hi.is_negative() {
                    iv.hi.abs()
                } else {
                    Rat::zero()
                };
                let scale = if mag > Rat::one() { mag } else { Rat::one() };
                let tol = &Rat::from_big(BigInt::one(), BigInt::one() << (bits - 1) as usize)
                    .unwrap()
                    * &scale;
                if iv.width() <= tol {
                    return Ok(iv);
                }
            }
            Err(EvalFail::Indeterminate) => {}
            Err(EvalFail::Hard(err)) => return Err(err),
        }
    }
    Err(DcalcError::Unsupported(
        "interval precision cap exceeded".to_string(),
    ))
}

/// Sign of the expression's value. `Equal` is only reported when the
/// value is exactly rational zero; an irrational-looking expression that
/// cannot be separated from zero is a strategy failure.
fn sign_of(e: &Expr) -> Result<Ordering, DcalcError> {
    if let Some(v) = exact_rat(e) {
        return Ok(v.cmp(&Rat::zero()));
    }
    for bits in [64u32, 128, 256, 512] {
        let iv = eval_interval(e, bits)?;
        if iv.lo.is_positive() {
            return Ok(Ordering::Greater);
        }
        if iv.hi.is_negative() {
            return Ok(Ordering::Less);
        }
    }
    Err(DcalcError::NoDerivation(format!(
        "cannot separate the value of {e} from zero"
    )))
}

fn floor_rat(r: &Rat) -> BigInt {
    r.numer().div_floor(r.denom())
}

/// Best rational approximation of `x` within `tol`, by walking the
/// continued-fraction convergents of `x`. Falls back to `x` itself when
/// no earlier convergent is both positive and close enough.
fn cf_approx(x: &Rat, tol: &Rat) -> Rat {
    let (mut h0, mut k0) = (BigInt::zero(), BigInt::one());
    let (mut h1, mut k1) = (BigInt::one(), BigInt::zero());
    let mut num = x.numer().clone();
    let mut den = x.denom().clone();
    while !den.is_zero() {
        let a = num.div_floor(&den);
        let h2 = &a * &h1 + &h0;
        let k2 = &a * &k1 + &k0;
        let conv = Rat::from_big(h2.clone(), k2.clone()).unwrap();
        if conv.is_positive() && (&conv - x).abs() <= *tol {
            return conv;
        }
        let rem = &num - &a * &den;
        num = den;
        den = rem;
        h0 = h1;
        k0 = k1;
        h1 = h2;
        k1 = k2;
    }
    x.clone()
}

// ---------------------------------------------------------------------------
// Derivations
// ---------------------------------------------------------------------------

/// Closure rule applied at a derivation node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RuleName {
    /// Distance 0 (a point).
    Axiom0,
    /// Distance 1 (a unit edge).
    Axiom1,
    /// d -> sqrt(2+2/n)*d via the bipyramid configuration.
    Sqrt2Plus,
    /// d -> 2*d via midpoint forcing.
    Double,
    /// d -> k*d via a collinear chain.
    TimesK(u32),
    /// d -> d/k via an isoceles triangle shrink.
    DivK(u32),
    /// (a, b) -> sqrt(a^2 - b^2) via a kite.
    PythMinus,
    /// (a, b) -> a - b via a simplex collar plus an approximation leg.
    Minus,
    /// (a, b) -> a + b = 2a - (a - b).
    Plus,
    /// (a, b, c) -> a*b/c; m is the least positive integer with b < 2mc.
    MulDiv(u32),
    /// a -> sqrt(a); `reciprocal` marks the 0 < a < 1 branch
    /// sqrt(a) = 1/sqrt(1/a), otherwise sqrt(a) = (1/2)sqrt((a+1)^2-(a-1)^2).
    Sqrt { reciprocal: bool },
}

impl RuleName {
    /// Stable key used in rule-count summaries (parameters stripped).
    pub fn key(&self) -> &'static str {
        match self {
            RuleName::Axiom0 => "AXIOM_0",
            RuleName::Axiom1 => "AXIOM_1",
            RuleName::Sqrt2Plus => "R_SQRT2PLUS",
            RuleName::Double => "R_DOUBLE",
            RuleName::TimesK(_) => "R_TIMES_K",
            RuleName::DivK(_) => "R_DIV_K",
            RuleName::PythMinus => "R_PYTH_MINUS",
            RuleName::Minus => "R_MINUS",
            RuleName::Plus => "R_PLUS",
            RuleName::MulDiv(_) => "R_MULDIV",
            RuleName::Sqrt { .. } => "R_SQRT",
        }
    }
}

impl fmt::Display for RuleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleName::TimesK(k) => write!(f, "R_TIMES_K({k})"),
            RuleName::DivK(k) => write!(f, "R_DIV_K({k})"),
            RuleName::MulDiv(m) => write!(f, "R_MULDIV(m={m})"),
            RuleName::Sqrt { reciprocal: true } => write!(f, "R_SQRT(reciprocal)"),
            other => write!(f, "{}", other.key()),
        }
    }
}

/// Rational legs chosen for the approximation gadget attached to a
/// difference node: a two-edge path x–z–y with |z−y| <= eps/2 and |x−z|
/// within eps/2 of the target distance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpsLegs {
    pub leg_xz: Rat,
    pub leg_zy: Rat,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub rule: RuleName,
    pub value: Expr,
    pub legs: Option<EpsLegs>,
    pub children: Vec<Node>,
}

impl Node {
    fn leaf(rule: RuleName, value: Expr) -> Node {
        Node {
            rule,
            value,
            legs: None,
            children: Vec::new(),
        }
    }
}

/// A derivation that a distance lies in the forced set for Q^n.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Derivation {
    /// Ambient dimension parameter (>= 2); fixes the simplex arities.
    pub n: u32,
    pub root: Node,
}

fn rat_to_u32(b: &BigInt, what: &str) -> Result<u32, DcalcError> {
    b.to_u32()
        .ok_or_else(|| DcalcError::Unsupported(format!("{what} {b} exceeds u32")))
}

/// AXIOM_1 followed by R_TIMES_K(p) and R_DIV_K(q) as needed.
fn rational_chain(v: &Rat) -> Result<Node, DcalcError> {
    if v.is_negative() {
        return Err(DcalcError::NegativeDistance);
    }
    if v.is_zero() {
        return Ok(Node::leaf(RuleName::Axiom0, Expr::Lit(Rat::zero())));
    }
    let p = rat_to_u32(v.numer(), "numerator")?;
    let q = rat_to_u32(v.denom(), "denominator")?;
    let mut node = Node::leaf(RuleName::Axiom1, Expr::Lit(Rat::one()));
    if p > 1 {
        node = Node {
            rule: RuleName::TimesK(p),
            value: Expr::Lit(Rat::from_int(p as i64)),
            legs: None,
            children: vec![node],
        };
    }
    if q > 1 {
        node = Node {
            rule: RuleName::DivK(q),
            value: Expr::Lit(v.clone()),
            legs: None,
            children: vec![node],
        };
    }
    Ok(node)
}

/// Interval of `e` refined until its width is at most `tol` (> 0).
fn interval_within(e: &Expr, tol: &Rat) -> Result<Interval, DcalcError> {
    for bits in [64u32, 128, 256, 512, 1024] {
        let iv = eval_interval(e, bits)?;
        if &iv.width() <= tol {
            return Ok(iv);
        }
    }
    Err(DcalcError::Unsupported(
        "interval precision cap exceeded".to_string(),
    ))
}

/// Positive lower bound on a value already known to be positive.
fn positive_lower(e: &Expr) -> Result<Rat, DcalcError> {
    for bits in [64u32, 128, 256, 512] {
        let iv = eval_interval(e, bits)?;
        if iv.lo.is_positive() {
            return Ok(iv.lo);
        }
    }
    Err(DcalcError::NoDerivation(format!(
        "cannot bound {e} away from zero"
    )))
}

/// Largest dyadic with denominator 2^32 at or below `x` (assumed > 0);
/// the shift grows if that truncation collapses to zero.
fn dyadic_below(x: &Rat) -> Rat {
    let mut shift = 32usize;
    loop {
        let scaled = floor_rat(&(x * &Rat::from_big(BigInt::one() << shift, BigInt::one()).unwrap()));
        if scaled.is_positive() {
            return Rat::from_big(scaled, BigInt::one() << shift).unwrap();
        }
        shift += 32;
    }
}

/// Legs for the approximation gadget of a difference node: target
/// distance `diff` (= a - b > 0), tolerance `eps` (= the subtrahend b).
fn minus_legs(diff: &Expr, eps: &Expr) -> Result<EpsLegs, DcalcError> {
    let eps_lo = positive_lower(eps)?;
    let half = Rat::new(1, 2).unwrap();
    let leg_zy = match exact_rat(eps) {
        Some(v) => &v * &half,
        None => dyadic_below(&(&eps_lo * &half)),
    };
    let leg_xz = match exact_rat(diff) {
        Some(v) => v,
        None => {
            // Width <= eps/4 and approximation error <= eps/4 keeps the
            // chosen rational within eps/2 of the true difference.
            let tol = &eps_lo * &Rat::new(1, 4).unwrap();
            let iv = interval_within(diff, &tol)?;
            let approx = cf_approx(&iv.mid(), &tol);
            if approx.is_positive() {
                approx
            } else {
                iv.mid()
            }
        }
    };
    Ok(EpsLegs { leg_xz, leg_zy })
}

/// Least positive integer m with `b < 2*m*c`, from interval bounds: an
/// upper bound on b and a positive lower bound on c.
fn least_m(b: &Expr, c: &Expr) -> Result<u32, DcalcError> {
    let b_hi = eval_interval(b, 64)?.hi;
    let c_lo = positive_lower(c)?;
    let ratio = &b_hi / &(&c_lo * &Rat::from_int(2));
    let m = floor_rat(&ratio) + BigInt::one();
    rat_to_u32(&m, "Figure-of-merit m")
}

fn zero() -> Expr {
    Expr::Lit(Rat::zero())
}

struct Deriver;

impl Deriver {
    fn go(&self, e: &Expr) -> Result<Node, DcalcError> {
        if let Some(v) = exact_rat(e) {
            return rational_chain(&v);
        }
        match e {
            Expr::Lit(_) => unreachable!("literals are exact"),
            Expr::Add(a, b) => self.go_add(a, b, e),
            Expr::Sub(a, b) => self.go_sub(a, b, e),
            Expr::Mul(a, b) => self.go_mul(a, b, e),
            Expr::Div(a, b) => self.go_div(a, b, e),
            Expr::Sqrt(a) => self.go_sqrt(a, e),
        }
    }

    fn go_add(&self, a: &Expr, b: &Expr, e: &Expr) -> Result<Node, DcalcError> {
        match (sign_of(a)?, sign_of(b)?) {
            (Ordering::Equal, _) => self.go(b),
            (_, Ordering::Equal) => self.go(a),
            // A negative summand turns the sum into a difference.
            (Ordering::Less, _) => self.go(&Expr::sub(b.clone(), Expr::sub(zero(), a.clone()))),
            (_, Ordering::Less) => self.go(&Expr::sub(a.clone(), Expr::sub(zero(), b.clone()))),
            (Ordering::Greater, Ordering::Greater) => {
                let ca = self.go(a)?;
                let cb = self.go(b)?;
                // a + b = 2a - (a - b): the expansion bottoms out in a
                // difference, whose approximation legs use eps = a - b.
                let diff = Expr::sub(a.clone(), b.clone());
                let legs = match sign_of(&diff)? {
                    Ordering::Greater => Some(minus_legs(e, &diff)?),
                    // Swap roles so the expansion's subtrahend is positive.
                    _ => {
                        let diff = Expr::sub(b.clone(), a.clone());
                        match sign_of(&diff)? {
                            Ordering::Greater => Some(minus_legs(e, &diff)?),
                            // a = b exactly: a + b = 2a needs no legs.
                            _ => None,
                        }
                    }
                };
                Ok(Node {
                    rule: RuleName::Plus,
                    value: e.clone(),
                    legs,
                    children: vec![ca, cb],
                })
            }
        }
    }

    fn go_sub(&self, a: &Expr, b: &Expr, e: &Expr) -> Result<Node, DcalcError> {
        match sign_of(b)? {
            Ordering::Equal => return self.go(a),
            Ordering::Less => {
                return self.go(&Expr::add(a.clone(), Expr::sub(zero(), b.clone())))
            }
            Ordering::Greater => {}
        }
        match sign_of(e)? {
            Ordering::Less => return Err(DcalcError::NegativeDistance),
            Ordering::Equal => return Ok(Node::leaf(RuleName::Axiom0, e.clone())),
            Ordering::Greater => {}
        }
        if sign_of(a)? != Ordering::Greater {
            // a <= 0 < b makes a - b negative; caught above, so a > 0 here.
            return Err(DcalcError::NegativeDistance);
        }
        let legs = minus_legs(e, b)?;
        Ok(Node {
            rule: RuleName::Minus,
            value: e.clone(),
            legs: Some(legs),
            children: vec![self.go(a)?, self.go(b)?],
        })
    }

    fn go_mul(&self, a: &Expr, b: &Expr, e: &Expr) -> Result<Node, DcalcError> {
        let (a, b) = match (sign_of(a)?, sign_of(b)?) {
            (Ordering::Greater, Ordering::Greater) => (a.clone(), b.clone()),
            (Ordering::Less, Ordering::Less) => (
                Expr::sub(zero(), a.clone()),
                Expr::sub(zero(), b.clone()),
            ),
            _ => return Err(DcalcError::NegativeDistance),
        };
        let one = Expr::Lit(Rat::one());
        let m = least_m(&b, &one)?;
        Ok(Node {
            rule: RuleName::MulDiv(m),
            value: e.clone(),
            legs: None,
            children: vec![
                self.go(&a)?,
                self.go(&b)?,
                Node::leaf(RuleName::Axiom1, one),
            ],
        })
    }

    fn go_div(&self, a: &Expr, b: &Expr, e: &Expr) -> Result<Node, DcalcError> {
        let (a, b) = match (sign_of(a)?, sign_of(b)?) {
            (_, Ordering::Equal) => return Err(DcalcError::ZeroDivisor),
            (Ordering::Equal, _) => return Ok(Node::leaf(RuleName::Axiom0, e.clone())),
            (Ordering::Greater, Ordering::Greater) => (a.clone(), b.clone()),
            (Ordering::Less, Ordering::Less) => (
                Expr::sub(zero(), a.clone()),
                Expr::sub(zero(), b.clone()),
            ),
            _ => return Err(DcalcError::NegativeDistance),
        };
        let one = Expr::Lit(Rat::one());
        let m = least_m(&one, &b)?;
        Ok(Node {
            rule: RuleName::MulDiv(m),
            value: e.clone(),
            legs: None,
            children: vec![
                self.go(&a)?,
                Node::leaf(RuleName::Axiom1, one),
                self.go(&b)?,
            ],
        })
    }

    fn go_sqrt(&self, a: &Expr, e: &Expr) -> Result<Node, DcalcError> {
        if let Some(r) = exact_rat(a) {
            match r.cmp(&Rat::zero()) {
                Ordering::Less => {
                    return Err(DcalcError::Domain(
                        "sqrt of a negative rational".to_string(),
                    ))
                }
                Ordering::Equal => return Ok(Node::leaf(RuleName::Axiom0, e.clone())),
                Ordering::Greater => {}
            }
            if r == Rat::one() {
                return Ok(Node::leaf(RuleName::Axiom1, e.clone()));
            }
            if let Some(s) = r.sqrt_exact() {
                return rational_chain(&s);
            }
            if r == Rat::from_int(3) {
                // sqrt(3) = sqrt(2^2 - 1^2)
                return Ok(Node {
                    rule: RuleName::PythMinus,
                    value: e.clone(),
                    legs: None,
                    children: vec![
                        rational_chain(&Rat::from_int(2))?,
                        rational_chain(&Rat::one())?,
                    ],
                });
            }
            if r == Rat::from_int(2) {
                // sqrt(2) = sqrt(sqrt(3)^2 - 1^2)
                return Ok(Node {
                    rule: RuleName::PythMinus,
                    value: e.clone(),
                    legs: None,
                    children: vec![
                        self.go_sqrt(&Expr::int(3), &Expr::sqrt(Expr::int(3)))?,
                        rational_chain(&Rat::one())?,
                    ],
                });
            }
        }
        let shifted = Expr::sub(a.clone(), Expr::Lit(Rat::one()));
        match sign_of(&shifted)? {
            Ordering::Less => {
                if sign_of(a)? != Ordering::Greater {
                    return Err(DcalcError::Domain(
                        "sqrt of a non-positive value".to_string(),
                    ));
                }
                // 0 < a < 1: sqrt(a) = 1 / sqrt(1/a), and 1/a > 1.
                let recip = Expr::sqrt(Expr::div(Expr::Lit(Rat::one()), a.clone()));
                Ok(Node {
                    rule: RuleName::Sqrt { reciprocal: true },
                    value: e.clone(),
                    legs: None,
                    children: vec![self.go(&recip)?],
                })
            }
            Ordering::Equal => Ok(Node::leaf(RuleName::Axiom1, e.clone())),
            Ordering::Greater => {
                // a > 1: sqrt(a) = (1/2) sqrt((a+1)^2 - (a-1)^2).
                let plus = Expr::add(a.clone(), Expr::Lit(Rat::one()));
                Ok(Node {
                    rule: RuleName::Sqrt { reciprocal: false },
                    value: e.clone(),
                    legs: None,
                    children: vec![self.go(&plus)?, self.go(&shifted)?],
                })
            }
        }
    }
}

/// Derive the non-negative value of `e` through the closure rules for
/// dimension parameter `n >= 2`. Deterministic in (`e`, `n`).
pub fn derive(e: &Expr, n: u32) -> Result<Derivation, DcalcError> {
    if n < 2 {
        return Err(DcalcError::Unsupported(format!("n must be >= 2, got {n}")));
    }
    // Surface domain and divisor errors before strategy dispatch.
    eval_interval(e, 64)?;
    let root = match sign_of(e)? {
        Ordering::Less => return Err(DcalcError::NegativeDistance),
        Ordering::Equal => Node::leaf(RuleName::Axiom0, e.clone()),
        Ordering::Greater => Deriver.go(e)?,
    };
    Ok(Derivation { n, root })
}

// ---------------------------------------------------------------------------
// Derivation checking
// ---------------------------------------------------------------------------

fn arity(node: &Node) -> Result<usize, DcalcError> {
    let want = match node.rule {
        RuleName::Axiom0 | RuleName::Axiom1 => 0,
        RuleName::Sqrt2Plus | RuleName::Double | RuleName::TimesK(_) | RuleName::DivK(_) => 1,
        RuleName::PythMinus | RuleName::Minus | RuleName::Plus => 2,
        RuleName::MulDiv(_) => 3,
        RuleName::Sqrt { reciprocal } => {
            if reciprocal {
                1
            } else {
                2
            }
        }
    };
    if node.children.len() != want {
        return Err(DcalcError::CheckFailed(format!(
            "{} expects {} children, found {}",
            node.rule,
            want,
            node.children.len()
        )));
    }
    Ok(want)
}

fn check_node(node: &Node, n: u32, bits: u32) -> Result<Interval, DcalcError> {
    arity(node)?;
    let own = eval_interval(&node.value, bits)?;
    let kids: Vec<Interval> = node
        .children
        .iter()
        .map(|c| check_node(c, n, bits))
        .collect::<Result<_, _>>()?;
    let prec = bits + 32;
    let formula: Interval = match &node.rule {
        RuleName::Axiom0 => Interval::point(Rat::zero()),
        RuleName::Axiom1 => Interval::point(Rat::one()),
        RuleName::TimesK(k) => kids[0].scale_int(*k as i64),
        RuleName::DivK(k) => kids[0]
            .div(&Interval::point(Rat::from_int(*k as i64)))
            .expect("nonzero integer divisor"),
        RuleName::Sqrt2Plus => {
            let factor = Interval::point(
                &Rat::from_int(2) + &Rat::new(2, n as i64).unwrap(),
            )
            .sqrt(prec)?;
            factor.mul(&kids[0])
        }
        RuleName::Double => kids[0].scale_int(2),
        RuleName::PythMinus => kids[0].mul(&kids[0]).sub(&kids[1].mul(&kids[1])).sqrt(prec)?,
        RuleName::Minus => kids[0].sub(&kids[1]),
        RuleName::Plus => kids[0].add(&kids[1]),
        RuleName::MulDiv(m) => {
            // Sanity on the recorded parameter: b < 2mc must be
            // satisfiable within the children's enclosures.
            let bound = kids[2].scale_int(2 * *m as i64);
            if kids[1].lo >= bound.hi {
                return Err(DcalcError::CheckFailed(format!(
                    "R_MULDIV parameter m={m} violates b < 2mc"
                )));
            }
            kids[0]
                .mul(&kids[1])
                .div(&kids[2])
                .ok_or(DcalcError::ZeroDivisor)?
        }
        RuleName::Sqrt { reciprocal: true } => Interval::point(Rat::one())
            .div(&kids[0])
            .ok_or(DcalcError::ZeroDivisor)?,
        RuleName::Sqrt { reciprocal: false } => {
            let inner = kids[0].mul(&kids[0]).sub(&kids[1].mul(&kids[1])).sqrt(prec)?;
            inner
                .div(&Interval::point(Rat::from_int(2)))
                .expect("divisor 2")
        }
    };
    if !own.intersects(&formula) {
        return Err(DcalcError::CheckFailed(format!(
            "{} value {} disagrees with the rule formula",
            node.rule, node.value
        )));
    }
    Ok(own)
}

/// Verify every node: its value interval must meet the interval of the
/// rule formula applied to its children's values.
pub fn check_derivation(d: &Derivation, bits: u32) -> Result<(), DcalcError> {
    check_node(&d.root, d.n, bits).map(|_| ())
}

// ---------------------------------------------------------------------------
// Size accounting
// ---------------------------------------------------------------------------

/// Rule-application counts and a witness-size upper bound obtained by
/// folding each rule's union arity over the tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SizeAccount {
    pub node_count: u64,
    pub rule_counts: BTreeMap<String, u64>,
    pub points: u128,
    pub edges: u128,
}

/// Point/edge budget of one (sub-)witness; all arithmetic saturates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Size {
    pub points: u128,
    pub edges: u128,
}

impl Size {
    fn pts(points: u128) -> Size {
        Size { points, edges: 0 }
    }

    fn plus(self, o: Size) -> Size {
        Size {
            points: self.points.saturating_add(o.points),
            edges: self.edges.saturating_add(o.edges),
        }
    }

    fn times(self, k: u128) -> Size {
        Size {
            points: self.points.saturating_mul(k),
            edges: self.edges.saturating_mul(k),
        }
    }
}

/// Recurrences below mirror the unions printed under each configuration;
/// `s` is the size of the sub-witness for the input distance.
struct Arity {
    n: u128,
}

impl Arity {
    fn unit(&self) -> Size {
        Size { points: 2, edges: 1 }
    }

    fn pairs(&self) -> u128 {
        self.n * (self.n - 1) / 2
    }

    /// d -> sqrt(2+2/n) d: bipyramid over two regular simplices.
    fn sqrt2plus(&self, s: Size) -> Size {
        let subs = 4 * self.n + 2 * self.pairs() + 1;
        Size::pts(2 * self.n + 3).plus(s.times(subs))
    }

    /// Upper-bound collar forcing |y-t| <= (2/n) d.
    fn zset(&self, s: Size) -> Size {
        Size::pts(self.n + 2)
            .plus(s.times(2 * self.n))
            .plus(self.sqrt2plus(s).times(self.pairs()))
    }

    /// d -> 2d: midpoint with collar; the long diagonal is (2+2/n) d.
    fn double(&self, s: Size) -> Size {
        Size::pts(4)
            .plus(s.times(2))
            .plus(self.sqrt2plus(self.sqrt2plus(s)))
            .plus(self.zset(s))
    }

    /// d -> k d: collinear chain of k unit steps, each doubled pair tied.
    fn times_k(&self, s: Size, k: u128) -> Size {
        Size::pts(k + 1)
            .plus(s.times(k))
            .plus(self.double(s).times(k - 1))
    }

    /// d -> d/k: isoceles triangle with integer side multiples.
    fn div_k(&self, s: Size, k: u128) -> Size {
        let shrink = |mult: u128| {
            if mult <= 1 {
                s
            } else {
                self.times_k(s, mult)
            }
        };
        Size::pts(5)
            .plus(s.times(3))
            .plus(shrink(k).times(2))
            .plus(shrink(k - 1).times(2))
    }

    /// (a, b) -> sqrt(a^2 - b^2): kite with base 2b and sides a.
    fn pyth(&self, sa: Size, sb: Size) -> Size {
        Size::pts(4)
            .plus(sb.times(2))
            .plus(self.double(sb))
            .plus(sa.times(2))
    }

    /// (u, w) -> sqrt(u^2 + w^2) via
    /// sqrt(u^2 + w^2) = sqrt((sqrt(2) u)^2 - (sqrt(u^2 - w^2))^2),
    /// sqrt(2) u = sqrt((sqrt(3) u)^2 - u^2), sqrt(3) u = sqrt((2u)^2 - u^2).
    fn pyth_plus(&self, su: Size, sw: Size) -> Size {
        let sqrt3u = self.pyth(self.times_k(su, 2), su);
        let sqrt2u = self.pyth(sqrt3u, su);
        self.pyth(sqrt2u, self.pyth(su, sw))
    }

    fn rational(&self, v: &Rat) -> Size {
        let p = v.numer().abs().to_u128().unwrap_or(u128::MAX);
        let q = v.denom().to_u128().unwrap_or(u128::MAX);
        let mut s = self.unit();
        if p > 1 {
            s = self.times_k(s, p);
        }
        if q > 1 {
            s = self.div_k(s, q);
        }
        s
    }

    /// (a, b) -> a - b: regular (n-1)-simplex collar around the segment
    /// plus a two-leg rational approximation path.
    fn minus(&self, sa: Size, sb: Size, legs: &EpsLegs) -> Size {
        let s1 = self.unit();
        // |z - p_i| = sqrt(1 - 1/n^2) built from unit and 1/n legs.
        let h = self.pyth(s1, self.div_k(s1, self.n));
        let xp = self.pyth_plus(sa, h);
        let yp = self.pyth_plus(sb, h);
        let t = self
            .rational(&legs.leg_xz)
            .plus(self.rational(&legs.leg_zy));
        Size::pts(self.n + 3)
            .plus(self.sqrt2plus(s1).times(self.pairs()))
            .plus(xp.times(self.n))
            .plus(yp.times(self.n))
            .plus(t)
    }

    /// (a, b) -> a + b = 2a - (a - b): two nested difference collars.
    fn plus_rule(&self, sa: Size, sb: Size, legs: &EpsLegs) -> Size {
        let inner = self.minus(sa, sb, legs);
        self.minus(self.times_k(sa, 2), inner, legs)
    }

    /// (a, b, c) -> a b / c: the seven-part union over O, A, B and their
    /// twins; sub-distances are charged to the children in a fixed
    /// assignment (OA, A-twin to a; OB, B-twin to b; the rest to c).
    fn muldiv(&self, sa: Size, sb: Size, sc: Size) -> Size {
        Size::pts(5)
            .plus(sa.times(2))
            .plus(sb.times(2))
            .plus(sc.times(3))
    }
}

fn size_node(node: &Node, a: &Arity) -> Size {
    let kids: Vec<Size> = node.children.iter().map(|c| size_node(c, a)).collect();
    let fallback = EpsLegs {
        leg_xz: Rat::one(),
        leg_zy: Rat::one(),
    };
    let legs = node.legs.as_ref().unwrap_or(&fallback);
    match &node.rule {
        RuleName::Axiom0 => Size { points: 1, edges: 0 },
        RuleName::Axiom1 => a.unit(),
        RuleName::Sqrt2Plus => a.sqrt2plus(kids[0]),
        RuleName::Double => a.double(kids[0]),
        RuleName::TimesK(k) => a.times_k(kids[0], *k as u128),
        RuleName::DivK(k) => a.div_k(kids[0], *k as u128),
        RuleName::PythMinus => a.pyth(kids[0], kids[1]),
        RuleName::Minus => a.minus(kids[0], kids[1], legs),
        RuleName::Plus => a.plus_rule(kids[0], kids[1], legs),
        RuleName::MulDiv(_) => a.muldiv(kids[0], kids[1], kids[2]),
        RuleName::Sqrt { reciprocal: true } => a.muldiv(a.unit(), a.unit(), kids[0]),
        RuleName::Sqrt { reciprocal: false } => a.div_k(a.pyth(kids[0], kids[1]), 2),
    }
}

fn count_rules(node: &Node, counts: &mut BTreeMap<String, u64>, nodes: &mut u64) {
    *nodes += 1;
    *counts.entry(node.rule.key().to_string()).or_insert(0) += 1;
    for c in &node.children {
        count_rules(c, counts, nodes);
    }
}

/// Fold the union arities over the derivation tree.
pub fn size_account(d: &Derivation) -> SizeAccount {
    let a = Arity { n: d.n as u128 };
    let size = size_node(&d.root, &a);
    let mut rule_counts = BTreeMap::new();
    let mut node_count = 0;
    count_rules(&d.root, &mut rule_counts, &mut node_count);
    SizeAccount {
        node_count,
        rule_counts,
        points: size.points,
        edges: size.edges,
    }
}
