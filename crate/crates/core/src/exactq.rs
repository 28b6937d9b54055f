//! Exact arbitrary-precision rational scalars and points of Q^n.
//!
//! Everything downstream (reflections, configurations, witness sets) is
//! built on these two types. Distances are always handled as *squared*
//! distances, which stay rational for rational points; no floating point
//! enters any module except the falsifier.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum ExactError {
    #[error("ZeroDenominator")]
    ZeroDenominator,
    #[error("DimMismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("ParseRat: {0}")]
    ParseRat(String),
}

/// Arbitrary-precision rational in canonical lowest terms, denominator > 0.
///
/// `BigRational` maintains the canonical form on every operation; this
/// newtype pins down the string format (`p/q`, denominator omitted when 1)
/// and the domain-specific helpers.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rat(BigRational);

impl Rat {
    pub fn new(numer: i64, denom: i64) -> Result<Rat, ExactError> {
        if denom == 0 {
            return Err(ExactError::ZeroDenominator);
        }
        Ok(Rat(BigRational::new(BigInt::from(numer), BigInt::from(denom))))
    }

    pub fn from_big(numer: BigInt, denom: BigInt) -> Result<Rat, ExactError> {
        if denom.is_zero() {
            return Err(ExactError::ZeroDenominator);
        }
        Ok(Rat(BigRational::new(numer, denom)))
    }

    pub fn from_int(n: i64) -> Rat {
        Rat(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn zero() -> Rat {
        Rat(BigRational::zero())
    }

    pub fn one() -> Rat {
        Rat(BigRational::one())
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn abs(&self) -> Rat {
        Rat(self.0.abs())
    }

    pub fn recip(&self) -> Rat {
        Rat(self.0.recip())
    }

    pub fn square(&self) -> Rat {
        Rat(&self.0 * &self.0)
    }

    /// Exact rational square root, if one exists.
    ///
    /// A non-negative rational in lowest terms is a perfect square iff both
    /// numerator and denominator are perfect squares.
    pub fn sqrt_exact(&self) -> Option<Rat> {
        if self.is_negative() {
            return None;
        }
        let sn = self.0.numer().sqrt();
        let sd = self.0.denom().sqrt();
        if &(&sn * &sn) == self.0.numer() && &(&sd * &sd) == self.0.denom() {
            Some(Rat(BigRational::new(sn, sd)))
        } else {
            None
        }
    }

    /// Lossy conversion for the numerical falsifier.
    pub fn to_f64(&self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self.0).expect("finite rational")
    }

}

impl fmt::Display for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.denom().is_one() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl FromStr for Rat {
    type Err = ExactError;

    /// Grammar: optional '-', digits, optionally '/' and positive digits.
    fn from_str(s: &str) -> Result<Rat, ExactError> {
        let bad = || ExactError::ParseRat(s.to_string());
        let (numer, denom) = match s.split_once('/') {
            Some((n, d)) => (n, d),
            None => (s, "1"),
        };
        let check = |t: &str, allow_sign: bool| -> Result<(), ExactError> {
            let digits = t.strip_prefix('-').map_or(t, |r| if allow_sign { r } else { t });
            if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            Ok(())
        };
        check(numer, true)?;
        check(denom, false)?;
        let n: BigInt = numer.parse().map_err(|_| bad())?;
        let d: BigInt = denom.parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(ExactError::ZeroDenominator);
        }
        Ok(Rat(BigRational::new(n, d)))
    }
}

impl Serialize for Rat {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Rat {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Rat, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

macro_rules! rat_binop {
    ($trait:ident, $method:ident) => {
        impl $trait for &Rat {
            type Output = Rat;
            fn $method(self, rhs: &Rat) -> Rat {
                Rat((&self.0).$method(&rhs.0))
            }
        }
        impl $trait for Rat {
            type Output = Rat;
            fn $method(self, rhs: Rat) -> Rat {
                Rat(self.0.$method(rhs.0))
            }
        }
    };
}

rat_binop!(Add, add);
rat_binop!(Sub, sub);
rat_binop!(Mul, mul);
rat_binop!(Div, div);

impl Neg for &Rat {
    type Output = Rat;
    fn neg(self) -> Rat {
        Rat(-&self.0)
    }
}

impl Neg for Rat {
    type Output = Rat;
    fn neg(self) -> Rat {
        Rat(-self.0)
    }
}

/// Convenience constructor used pervasively in configs and tests.
pub fn rat(numer: i64, denom: i64) -> Result<Rat, ExactError> {
    Rat::new(numer, denom)
}

/// Point of Q^n with a fixed dimension.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point {
    coords: Vec<Rat>,
}

impl Point {
    pub fn new(coords: Vec<Rat>) -> Point {
        assert!(!coords.is_empty(), "zero-dimensional point");
        Point { coords }
    }

    /// Point from integer coordinates, each divided by a common denominator.
    pub fn scaled(numers: &[i64], denom: i64) -> Point {
        Point::new(
            numers
                .iter()
                .map(|&n| Rat::new(n, denom).expect("nonzero denom"))
                .collect(),
        )
    }

    pub fn origin(dim: usize) -> Point {
        Point::new(vec![Rat::zero(); dim])
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[Rat] {
        &self.coords
    }

    pub fn scale(&self, s: &Rat) -> Point {
        Point::new(self.coords.iter().map(|c| c * s).collect())
    }

    fn check_dim(&self, other: &Point) -> Result<(), ExactError> {
        if self.dim() != other.dim() {
            return Err(ExactError::DimMismatch(self.dim(), other.dim()));
        }
        Ok(())
    }
}

/// Exact squared euclidean distance.
pub fn sqdist(p: &Point, q: &Point) -> Result<Rat, ExactError> {
    p.check_dim(q)?;
    let mut acc = Rat::zero();
    for (a, b) in p.coords.iter().zip(&q.coords) {
        let d = a - b;
        acc = acc + d.square();
    }
    Ok(acc)
}

/// P + t * (Q - P), componentwise exact.
pub fn affine(p: &Point, q: &Point, t: &Rat) -> Result<Point, ExactError> {
    p.check_dim(q)?;
    Ok(Point::new(
        p.coords
            .iter()
            .zip(&q.coords)
            .map(|(a, b)| a + &(t * &(b - a)))
            .collect(),
    ))
}
