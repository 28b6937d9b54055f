//! Number-theoretic constructions: four-square decompositions and
//! rational isoceles triangles in Q^8.

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::exactq::{Point, Rat};

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum ArithError {
    #[error("NegativeInput")]
    NegativeInput,
    #[error("TriangleInequality")]
    TriangleInequality,
}

/// k^2 + l^2 + m^2 + n^2 equals the decomposed value exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FourSquare {
    pub k: Rat,
    pub l: Rat,
    pub m: Rat,
    pub n: Rat,
}

impl FourSquare {
    pub fn entries(&self) -> [&Rat; 4] {
        [&self.k, &self.l, &self.m, &self.n]
    }

    pub fn sum_of_squares(&self) -> Rat {
        self.entries()
            .iter()
            .fold(Rat::zero(), |acc, e| acc + e.square())
    }
}

// Greedy descending DFS over k >= l >= m >= n >= 0. The first complete
// solution is the lexicographically largest one, which pins golden outputs.
fn dfs(rem: &BigInt, max: &BigInt, slots: u32, out: &mut Vec<BigInt>) -> bool {
    if slots == 0 {
        return rem.is_zero();
    }
    let mut v = rem.sqrt().min(max.clone());
    let slots_big = BigInt::from(slots);
    while v >= BigInt::zero() {
        // All remaining slots are bounded by v; give up once they can't cover.
        if &(&slots_big * &v * &v) < rem {
            return false;
        }
        out.push(v.clone());
        let next = rem - &v * &v;
        if dfs(&next, &v, slots - 1, out) {
            return true;
        }
        out.pop();
        v -= 1;
    }
    false
}

/// Four integer squares with k >= l >= m >= n >= 0 summing to `n`.
pub fn four_square_int(value: &BigInt) -> Result<FourSquare, ArithError> {
    if value.is_negative() {
        return Err(ArithError::NegativeInput);
    }
    let mut out = Vec::with_capacity(4);
    let found = dfs(value, &value.sqrt(), 4, &mut out);
    debug_assert!(found, "four-square decomposition always exists");
    let one = BigInt::from(1);
    let mut it = out.into_iter();
    let mut next = || Rat::from_big(it.next().unwrap(), one.clone()).unwrap();
    Ok(FourSquare {
        k: next(),
        l: next(),
        m: next(),
        n: next(),
    })
}

/// Four rational squares summing to `q`: decompose numer * denom as an
/// integer and divide each entry by the denominator.
pub fn four_square_rat(q: &Rat) -> Result<FourSquare, ArithError> {
    if q.is_negative() {
        return Err(ArithError::NegativeInput);
    }
    let scaled = q.numer() * q.denom();
    let int = four_square_int(&scaled)?;
    let denom = Rat::from_big(q.denom().clone(), BigInt::from(1)).unwrap();
    Ok(FourSquare {
        k: &int.k / &denom,
        l: &int.l / &denom,
        m: &int.m / &denom,
        n: &int.n / &denom,
    })
}

/// Triangle in Q^8 with sides b, a, a:
/// [-b/2, 0, ...], [b/2, 0, ...], [0, k, l, m, n, 0, 0, 0]
/// where k^2 + l^2 + m^2 + n^2 = a^2 - (b/2)^2.
pub fn isoceles_triangle(b: &Rat, a: &Rat) -> Result<(Point, Point, Point), ArithError> {
    if !b.is_positive() || b >= &(Rat::from_int(2) * a.clone()) {
        return Err(ArithError::TriangleInequality);
    }
    let half_b = b * &Rat::new(1, 2).unwrap();
    let apex_sq = a.square() - half_b.square();
    let fs = four_square_rat(&apex_sq)?;
    let zero = Rat::zero;
    let base_a = Point::new(vec![
        -&half_b,
        zero(),
        zero(),
        zero(),
        zero(),
        zero(),
        zero(),
        zero(),
    ]);
    let base_b = Point::new(vec![
        half_b,
        zero(),
        zero(),
        zero(),
        zero(),
        zero(),
        zero(),
        zero(),
    ]);
    let apex = Point::new(vec![
        zero(),
        fs.k,
        fs.l,
        fs.m,
        fs.n,
        zero(),
        zero(),
        zero(),
    ]);
    Ok((base_a, base_b, apex))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactq::{rat, sqdist};
    use proptest::prelude::*;

    fn int(n: i64) -> BigInt {
        BigInt::from(n)
    }

    #[test]
    fn small_golden_cases() {
        let z = four_square_int(&int(0)).unwrap();
        assert_eq!(z.sum_of_squares(), Rat::zero());
        assert_eq!(z.k, Rat::zero());

        // Brute-force oracle for 7 gives (2,1,1,1) as the lexicographically
        // largest decomposition.
        let seven = four_square_int(&int(7)).unwrap();
        assert_eq!(
            seven.entries().map(|e| e.to_string()),
            ["2", "1", "1", "1"]
        );
        assert_eq!(four_square_int(&int(-1)), Err(ArithError::NegativeInput));
    }

    #[test]
    fn exhaustive_small_range() {
        for n in 0..2000i64 {
            let fs = four_square_int(&int(n)).unwrap();
            assert_eq!(fs.sum_of_squares(), Rat::from_int(n));
            assert!(fs.k >= fs.l && fs.l >= fs.m && fs.m >= fs.n);
            assert!(!fs.n.is_negative());
        }
    }

    #[test]
    fn lexicographically_largest_tie_break() {
        // 18 = 16+1+1+0 = 9+9+0+0; greedy picks (4,1,1,0).
        let fs = four_square_int(&int(18)).unwrap();
        assert_eq!(fs.entries().map(|e| e.to_string()), ["4", "1", "1", "0"]);
    }

    #[test]
    fn rational_decomposition() {
        let q = rat(3, 4).unwrap();
        let fs = four_square_rat(&q).unwrap();
        assert_eq!(fs.sum_of_squares(), q);

        let two = Rat::from_int(2);
        assert_eq!(four_square_rat(&two).unwrap().sum_of_squares(), two);
        assert_eq!(
            four_square_rat(&Rat::zero()).unwrap().sum_of_squares(),
            Rat::zero()
        );
        assert_eq!(
            four_square_rat(&rat(-1, 2).unwrap()),
            Err(ArithError::NegativeInput)
        );
    }

    #[test]
    fn triangle_sides_check_out() {
        for (b, a) in [
            (rat(1, 1).unwrap(), rat(1, 1).unwrap()),
            (rat(1, 1).unwrap(), rat(4, 1).unwrap()),
            (rat(1999, 1000).unwrap(), rat(1, 1).unwrap()),
        ] {
            let (p, q, apex) = isoceles_triangle(&b, &a).unwrap();
            assert_eq!(sqdist(&p, &q).unwrap(), b.square());
            assert_eq!(sqdist(&p, &apex).unwrap(), a.square());
            assert_eq!(sqdist(&q, &apex).unwrap(), a.square());
            // The template keeps the last three coordinates zero.
            for pt in [&p, &q, &apex] {
                assert!(pt.coords()[5..].iter().all(|c| c.is_zero()));
            }
        }
    }

    #[test]
    fn triangle_inequality_enforced() {
        let one = Rat::one();
        assert_eq!(
            isoceles_triangle(&Rat::from_int(2), &one),
            Err(ArithError::TriangleInequality)
        );
        assert_eq!(
            isoceles_triangle(&Rat::zero(), &one),
            Err(ArithError::TriangleInequality)
        );
    }

    proptest! {
        #[test]
        fn rat_decomposition_sums_exactly(n in 0i64..1_000_000, d in 1i64..1_000_000) {
            let q = rat(n, d).unwrap();
            prop_assert_eq!(four_square_rat(&q).unwrap().sum_of_squares(), q);
        }
    }
}
