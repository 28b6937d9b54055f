//! Rational reflections and pair-to-pair isometries of Q^n.
//!
//! The reflection across the perpendicular bisector of a segment with
//! rational endpoints takes rational points to rational points, and any
//! two congruent rational segments are related by at most two such
//! reflections. That is all the rigid motion machinery the witness
//! pipeline needs: canonical configurations are transported onto
//! arbitrary target pairs.

use thiserror::Error;

use crate::exactq::{sqdist, ExactError, Point, Rat};

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum IsometryError {
    #[error("DegenerateMirror")]
    DegenerateMirror,
    #[error("IncongruentPairs")]
    IncongruentPairs,
    #[error(transparent)]
    Exact(#[from] ExactError),
}

/// Mirror data for one perpendicular-bisector reflection.
///
/// Stored as the segment endpoints, not a matrix: application is O(dim)
/// and stays exact.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Mirror {
    a: Point,
    b: Point,
}

impl Mirror {
    fn apply(&self, p: &Point) -> Result<Point, IsometryError> {
        reflect_bisector(&self.a, &self.b, p)
    }
}

/// Identity, one reflection, or a composition of two reflections.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Isometry {
    // Applied in order.
    mirrors: Vec<Mirror>,
}

impl Isometry {
    pub fn identity() -> Isometry {
        Isometry { mirrors: Vec::new() }
    }

    pub fn reflection(a: Point, b: Point) -> Result<Isometry, IsometryError> {
        if a == b {
            return Err(IsometryError::DegenerateMirror);
        }
        Ok(Isometry {
            mirrors: vec![Mirror { a, b }],
        })
    }

    pub fn reflection_count(&self) -> usize {
        self.mirrors.len()
    }

    pub fn apply(&self, p: &Point) -> Result<Point, IsometryError> {
        let mut q = p.clone();
        for m in &self.mirrors {
            q = m.apply(&q)?;
        }
        Ok(q)
    }
}

/// Reflect `p` across the hyperplane of points equidistant from `a` and `b`.
///
/// With u = b - a and m = (a+b)/2 the image is p - 2 ((p-m)·u / u·u) u.
pub fn reflect_bisector(a: &Point, b: &Point, p: &Point) -> Result<Point, IsometryError> {
    if a == b {
        return Err(IsometryError::DegenerateMirror);
    }
    if a.dim() != b.dim() || a.dim() != p.dim() {
        return Err(ExactError::DimMismatch(a.dim(), b.dim().max(p.dim())).into());
    }
    let half = Rat::new(1, 2).unwrap();
    let mut dot_pu = Rat::zero();
    let mut dot_uu = Rat::zero();
    let u: Vec<Rat> = a
        .coords()
        .iter()
        .zip(b.coords())
        .map(|(ai, bi)| bi - ai)
        .collect();
    for ((ai, bi), (pi, ui)) in a.coords().iter().zip(b.coords()).zip(p.coords().iter().zip(&u)) {
        let mi = &(ai + bi) * &half;
        dot_pu = dot_pu + (pi - &mi) * ui.clone();
        dot_uu = dot_uu + ui.square();
    }
    let t = &(&dot_pu / &dot_uu) * &Rat::from_int(2);
    Ok(Point::new(
        p.coords()
            .iter()
            .zip(&u)
            .map(|(pi, ui)| pi - &(&t * ui))
            .collect(),
    ))
}

/// Isometry of Q^n mapping segment (a, b) onto the congruent segment
/// (a2, b2), built from at most two bisector reflections.
pub fn segment_isometry(
    a: &Point,
    b: &Point,
    a2: &Point,
    b2: &Point,
) -> Result<Isometry, IsometryError> {
    if sqdist(a, b)? != sqdist(a2, b2)? {
        return Err(IsometryError::IncongruentPairs);
    }
    if a == a2 {
        if b == b2 {
            return Ok(Isometry::identity());
        }
        return Isometry::reflection(b.clone(), b2.clone());
    }
    let first = Mirror {
        a: a.clone(),
        b: a2.clone(),
    };
    let b1 = first.apply(b)?;
    if &b1 == b2 {
        return Ok(Isometry {
            mirrors: vec![first],
        });
    }
    // |a2 - b1| = |a - b| = |a2 - b2|, so a2 lies on the second mirror.
    let second = Mirror {
        a: b1,
        b: b2.clone(),
    };
    Ok(Isometry {
        mirrors: vec![first, second],
    })
}
