//! Canonical coordinate catalog for the Q^8 forcing configurations,
//! with exact validation of every claimed squared distance.
//!
//! The simplex-gadget coordinates (`fig1_q8`, `fig2_q8`) are fixed
//! rational lists; the remaining layouts are computed from their
//! parameters. Every constructor returns a [`Config`] whose claim list
//! can be re-checked from scratch by [`validate`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arith::{isoceles_triangle, four_square_rat, ArithError};
use crate::exactq::{affine, rat, sqdist, ExactError, Point, Rat};
use crate::isometry::{reflect_bisector, IsometryError};

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum ConfigError {
    #[error("BadScale")]
    BadScale,
    #[error("WrongDistance: expected sqdist {expected}, got {got}")]
    WrongDistance { expected: String, got: String },
    #[error("DegenerateHalf")]
    DegenerateHalf,
    #[error("BadDistance")]
    BadDistance,
    #[error("BadParameter: {0}")]
    BadParameter(String),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    Isometry(#[from] IsometryError),
    #[error(transparent)]
    Arith(#[from] ArithError),
}

/// One asserted squared distance between two labeled points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub a: String,
    pub b: String,
    pub sq: Rat,
}

/// Labeled point set plus its claimed squared-distance list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Config {
    pub name: String,
    pub points: BTreeMap<String, Point>,
    pub claims: Vec<Claim>,
}

impl Config {
    fn claim(&mut self, a: &str, b: &str, sq: Rat) {
        self.claims.push(Claim {
            a: a.to_string(),
            b: b.to_string(),
            sq,
        });
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClaimResult {
    pub a: String,
    pub b: String,
    pub claimed: Rat,
    pub actual: Rat,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub results: Vec<ClaimResult>,
    /// Label pairs with exactly equal coordinates.
    pub coincident: Vec<(String, String)>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.results.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ClaimResult> {
        self.results.iter().filter(|r| !r.pass)
    }
}

/// Re-checks every claim by exact squared distance and lists coincident
/// labels. Failures are report entries, never errors.
pub fn validate(config: &Config) -> ValidationReport {
    let mut results = Vec::with_capacity(config.claims.len());
    for c in &config.claims {
        let actual = sqdist(&config.points[&c.a], &config.points[&c.b])
            .expect("config points share a dimension");
        results.push(ClaimResult {
            pass: actual == c.sq,
            a: c.a.clone(),
            b: c.b.clone(),
            claimed: c.sq.clone(),
            actual,
        });
    }
    let labels: Vec<&String> = config.points.keys().collect();
    let mut coincident = Vec::new();
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            if config.points[labels[i]] == config.points[labels[j]] {
                coincident.push((labels[i].clone(), labels[j].clone()));
            }
        }
    }
    ValidationReport { results, coincident }
}

/// The fixed p_1..p_8 simplex of the d = 1 gadget.
pub fn fig1_simplex_points() -> Vec<Point> {
    vec![
        Point::scaled(&[-1, 0, 0, 0, 0, 0, 0, 0], 1),
        Point::scaled(&[-1, 1, 0, 0, 0, 0, 1, -1], 2),
        Point::scaled(&[-1, -1, 0, 0, 0, 0, 1, -1], 2),
        Point::scaled(&[-1, 0, 1, 0, 0, 1, 0, -1], 2),
        Point::scaled(&[-1, 0, -1, 0, 0, 1, 0, -1], 2),
        Point::scaled(&[-1, 0, 0, 1, 1, 0, 0, -1], 2),
        Point::scaled(&[-1, 0, 0, -1, 1, 0, 0, -1], 2),
        Point::scaled(&[-1, 0, 0, 0, 1, 1, 1, 0], 2),
    ]
}

/// Double-simplex gadget at unit d, scaled by `scale`: 19 labeled points
/// x, y, y~, p1..p8, p~1..p~8. The p~i are obtained by reflecting p_i
/// across the bisector of (y, y~), which keeps them rational.
///
/// Claims: the 89 pairs at squared distance scale^2, plus the two apex
/// pairs (x, y) and (x, y~) at squared distance (9/4) scale^2.
pub fn fig1_q8(scale: &Rat) -> Result<Config, ConfigError> {
    if !scale.is_positive() {
        return Err(ConfigError::BadScale);
    }
    let x = Point::origin(8).scale(scale);
    let y = Point::scaled(&[-9, 0, 0, 0, 3, 3, 3, -6], 8).scale(scale);
    let yt = Point::scaled(&[-8, 1, 1, 3, 1, 0, -1, -2], 6).scale(scale);
    let ps: Vec<Point> = fig1_simplex_points()
        .into_iter()
        .map(|p| p.scale(scale))
        .collect();
    let pts: Vec<Point> = ps
        .iter()
        .map(|p| reflect_bisector(&y, &yt, p))
        .collect::<Result<_, _>>()?;

    let mut cfg = Config {
        name: "fig1".to_string(),
        points: BTreeMap::new(),
        claims: Vec::new(),
    };
    cfg.points.insert("x".into(), x);
    cfg.points.insert("y".into(), y);
    cfg.points.insert("y~".into(), yt);
    for (i, p) in ps.iter().enumerate() {
        cfg.points.insert(format!("p{}", i + 1), p.clone());
    }
    for (i, p) in pts.iter().enumerate() {
        cfg.points.insert(format!("p~{}", i + 1), p.clone());
    }

    let unit = scale.square();
    cfg.claim("y", "y~", unit.clone());
    for i in 1..=8 {
        cfg.claim("x", &format!("p{i}"), unit.clone());
    }
    for i in 1..=8 {
        cfg.claim("y", &format!("p{i}"), unit.clone());
    }
    for i in 1..=8 {
        for j in i + 1..=8 {
            cfg.claim(&format!("p{i}"), &format!("p{j}"), unit.clone());
        }
    }
    for i in 1..=8 {
        cfg.claim("x", &format!("p~{i}"), unit.clone());
    }
    for i in 1..=8 {
        cfg.claim("y~", &format!("p~{i}"), unit.clone());
    }
    for i in 1..=8 {
        for j in i + 1..=8 {
            cfg.claim(&format!("p~{i}"), &format!("p~{j}"), unit.clone());
        }
    }
    let apex = rat(9, 4).unwrap() * unit;
    cfg.claim("x", "y", apex.clone());
    cfg.claim("x", "y~", apex);
    Ok(cfg)
}

/// Bound-set gadget at d = 1: 10 points p1..p8, x, y with
/// sqdist(x, p_i) = sqdist(y, p_i) = 1, sqdist(p_i, p_j) = 9/4 and
/// sqdist(x, y) = 1/16.
pub fn fig2_q8() -> Config {
    let ps = [
        Point::scaled(&[-3, 0, 0, 0, 0, 0, 0, 0], 2),
        Point::scaled(&[-3, 3, 0, 0, 0, 0, 3, -3], 4),
        Point::scaled(&[-3, -3, 0, 0, 0, 0, 3, -3], 4),
        Point::scaled(&[-3, 0, 3, 0, 0, 3, 0, -3], 4),
        Point::scaled(&[-3, 0, -3, 0, 0, 3, 0, -3], 4),
        Point::scaled(&[-3, 0, 0, 3, 3, 0, 0, -3], 4),
        Point::scaled(&[-3, 0, 0, -3, 3, 0, 0, -3], 4),
        Point::scaled(&[-3, 0, 0, 0, 3, 3, 3, 0], 4),
    ];
    let x = Point::scaled(&[-3, 0, 0, 0, 1, 1, 1, -2], 4);
    let y = Point::scaled(&[-15, 0, 0, 0, 5, 5, 5, -10], 16);

    let mut cfg = Config {
        name: "fig2".to_string(),
        points: BTreeMap::new(),
        claims: Vec::new(),
    };
    for (i, p) in ps.iter().enumerate() {
        cfg.points.insert(format!("p{}", i + 1), p.clone());
    }
    cfg.points.insert("x".into(), x);
    cfg.points.insert("y".into(), y);

    let one = Rat::one();
    for i in 1..=8 {
        cfg.claim("x", &format!("p{i}"), one.clone());
    }
    for i in 1..=8 {
        cfg.claim("y", &format!("p{i}"), one.clone());
    }
    let simplex = rat(9, 4).unwrap();
    for i in 1..=8 {
        for j in i + 1..=8 {
            cfg.claim(&format!("p{i}"), &format!("p{j}"), simplex.clone());
        }
    }
    cfg.claim("x", "y", rat(1, 16).unwrap());
    cfg
}

fn expect_sqdist(x: &Point, y: &Point, expected: &Rat) -> Result<(), ConfigError> {
    let got = sqdist(x, y)?;
    if &got != expected {
        return Err(ConfigError::WrongDistance {
            expected: expected.to_string(),
            got: got.to_string(),
        });
    }
    Ok(())
}

/// Doubling layout for sqdist(x, y) = 4: midpoint s and overshoot point
/// t = x + (9/8)(y - x), giving sqdist(x, t) = 81/16, sqdist(y, t) = 1/16.
pub fn fig3_layout(x: &Point, y: &Point) -> Result<(Point, Point), ConfigError> {
    expect_sqdist(x, y, &Rat::from_int(4))?;
    let s = affine(x, y, &rat(1, 2).unwrap())?;
    let t = affine(x, y, &rat(9, 8).unwrap())?;
    Ok((s, t))
}

/// Equally spaced chain w_0..w_k between x and y with sqdist(x, y) = k^2.
pub fn fig4_chain(x: &Point, y: &Point, k: u32) -> Result<Vec<Point>, ConfigError> {
    if k == 0 {
        return Err(ConfigError::BadParameter("k must be positive".into()));
    }
    expect_sqdist(x, y, &Rat::from_int(i64::from(k)).square())?;
    let mut out = Vec::with_capacity(k as usize + 1);
    for i in 0..=k {
        out.push(affine(x, y, &Rat::new(i64::from(i), i64::from(k)).unwrap())?);
    }
    Ok(out)
}

/// Distance-division layout realizing sqdist(x, y) = (p/q)^2 from a
/// rational isoceles triangle with sides p, qp, qp.
///
/// x and y sit on the segments z-x~ and z-y~ at parameter 1/q, so every
/// one of the seven sub-distances is an integer multiple of p.
pub fn fig5_layout(p: u32, q: u32) -> Result<Config, ConfigError> {
    if p == 0 {
        return Err(ConfigError::BadParameter("p must be positive".into()));
    }
    if q < 2 {
        return Err(ConfigError::BadParameter("q must be at least 2".into()));
    }
    let pr = Rat::from_int(i64::from(p));
    let qr = Rat::from_int(i64::from(q));
    let side = &qr * &pr;
    let (xt, yt, z) = isoceles_triangle(&pr, &side)?;
    let x = affine(&z, &xt, &qr.recip())?;
    let y = affine(&z, &yt, &qr.recip())?;

    let mut cfg = Config {
        name: "fig5".to_string(),
        points: BTreeMap::new(),
        claims: Vec::new(),
    };
    cfg.points.insert("x~".into(), xt);
    cfg.points.insert("y~".into(), yt);
    cfg.points.insert("z".into(), z);
    cfg.points.insert("x".into(), x);
    cfg.points.insert("y".into(), y);

    let q1 = &qr - &Rat::one();
    cfg.claim("x~", "y~", pr.square());
    cfg.claim("x~", "z", side.square());
    cfg.claim("y~", "z", side.square());
    cfg.claim("x", "z", pr.square());
    cfg.claim("y", "z", pr.square());
    cfg.claim("x~", "x", (&q1 * &pr).square());
    cfg.claim("y~", "y", (&q1 * &pr).square());
    cfg.claim("x", "y", (&pr / &qr).square());
    Ok(cfg)
}

/// Right-angle closing layout for an arbitrary target squared distance
/// r2 = sqdist(x, y): s = [-b, 0...], x = 0, t = [b, 0...],
/// y = [0, k, l, m, n, 0, 0, 0] with a = r2 + 1/4, b = |r2 - 1/4| and
/// k^2 + l^2 + m^2 + n^2 = r2, so that a^2 - b^2 = r2.
pub fn fig7_layout(r2: &Rat) -> Result<Config, ConfigError> {
    if !r2.is_positive() {
        return Err(ConfigError::BadDistance);
    }
    let quarter = rat(1, 4).unwrap();
    if r2 == &quarter {
        return Err(ConfigError::DegenerateHalf);
    }
    let a = r2 + &quarter;
    let b = (r2 - &quarter).abs();
    let fs = four_square_rat(r2)?;

    let zero = Rat::zero;
    let s = Point::new(vec![-&b, zero(), zero(), zero(), zero(), zero(), zero(), zero()]);
    let x = Point::origin(8);
    let t = Point::new(vec![b.clone(), zero(), zero(), zero(), zero(), zero(), zero(), zero()]);
    let y = Point::new(vec![zero(), fs.k, fs.l, fs.m, fs.n, zero(), zero(), zero()]);

    let mut cfg = Config {
        name: "fig7".to_string(),
        points: BTreeMap::new(),
        claims: Vec::new(),
    };
    cfg.points.insert("s".into(), s);
    cfg.points.insert("x".into(), x);
    cfg.points.insert("t".into(), t);
    cfg.points.insert("y".into(), y);

    cfg.claim("s", "x", b.square());
    cfg.claim("x", "t", b.square());
    cfg.claim("s", "t", Rat::from_int(4) * b.square());
    cfg.claim("s", "y", a.square());
    cfg.claim("t", "y", a.square());
    cfg.claim("x", "y", r2.clone());
    Ok(cfg)
}
