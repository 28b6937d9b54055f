//! Recursive construction of witness sets S_xy in Q^8.
//!
//! A witness set for a pair (x, y) is a finite rational point set whose
//! unit-distance graph forces every unit-distance-preserving map into R^8
//! to preserve |x - y|. The builder dispatches on the target squared
//! distance: unit pairs are a single edge, rational distances go through
//! the double-simplex, doubling, chain and division gadgets, and
//! irrational distances close through the right-angle layout. Canonical
//! sets are memoized per squared distance and transported onto concrete
//! pairs by exact isometries.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::rc::Rc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{self, Config, ConfigError};
use crate::exactq::{rat, sqdist, ExactError, Point, Rat};
use crate::isometry::{segment_isometry, IsometryError};

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum WitnessError {
    #[error("BudgetExceeded: more than {0} interned points")]
    BudgetExceeded(usize),
    #[error("DegeneratePair")]
    DegeneratePair,
    #[error("DimMismatch: expected dimension 8, got {0}")]
    DimMismatch(usize),
    #[error("WrongDistance: expected sqdist {expected}, got {got}")]
    WrongDistance { expected: String, got: String },
    #[error("BadDistance: {0}")]
    BadDistance(String),
    #[error("Unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Isometry(#[from] IsometryError),
    #[error(transparent)]
    Exact(#[from] ExactError),
}

/// Dense id of an interned point.
pub type PointId = u32;

/// Exact hash-consing table: identical coordinates imply identical id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PointStore {
    points: Vec<Point>,
    index: HashMap<Point, PointId>,
    coincidences: u64,
}

impl PointStore {
    pub fn new() -> PointStore {
        PointStore::default()
    }

    /// Interns a point, returning its id. Dedup is by exact coordinate
    /// equality, never by tolerance. `budget` bounds the table size.
    pub fn intern(&mut self, p: Point, budget: usize) -> Result<PointId, WitnessError> {
        if let Some(&id) = self.index.get(&p) {
            self.coincidences += 1;
            return Ok(id);
        }
        if self.points.len() >= budget {
            return Err(WitnessError::BudgetExceeded(budget));
        }
        let id = self.points.len() as PointId;
        self.points.push(p.clone());
        self.index.insert(p, id);
        Ok(id)
    }

    pub fn get(&self, id: PointId) -> &Point {
        &self.points[id as usize]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// Number of intern calls that hit an already-present point.
    pub fn coincidences(&self) -> u64 {
        self.coincidences
    }

    fn from_points(points: Vec<Point>) -> PointStore {
        let index = points
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i as PointId))
            .collect();
        PointStore {
            points,
            index,
            coincidences: 0,
        }
    }
}

/// Construction rule applied at one provenance node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    #[serde(rename = "BASE")]
    Base,
    #[serde(rename = "FIG1")]
    Fig1,
    #[serde(rename = "FIG2")]
    Fig2,
    #[serde(rename = "FIG3")]
    Fig3,
    #[serde(rename = "FIG4")]
    Fig4,
    #[serde(rename = "FIG5")]
    Fig5,
    #[serde(rename = "FIG7")]
    Fig7,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::Base => "BASE",
            Rule::Fig1 => "FIG1",
            Rule::Fig2 => "FIG2",
            Rule::Fig3 => "FIG3",
            Rule::Fig4 => "FIG4",
            Rule::Fig5 => "FIG5",
            Rule::Fig7 => "FIG7",
        };
        f.write_str(s)
    }
}

/// One provenance step: the rule that forced the (i, j) distance, with
/// the sub-steps it relies on. Leaves are always BASE.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub rule: Rule,
    pub i: PointId,
    pub j: PointId,
    pub sq: Rat,
    /// True for bound-set nodes: the claim is <=, not =.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub bound_only: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetPair {
    pub i: PointId,
    pub j: PointId,
    pub sqdist: Rat,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub bound_only: bool,
}

/// Interned points, unit-distance edges, distinguished target pair, and
/// the provenance tree of construction steps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WitnessSet {
    pub dim: usize,
    pub store: PointStore,
    pub unit_edges: BTreeSet<(PointId, PointId)>,
    pub target: TargetPair,
    pub provenance: Step,
}

fn norm_edge(i: PointId, j: PointId) -> (PointId, PointId) {
    if i <= j {
        (i, j)
    } else {
        (j, i)
    }
}

impl WitnessSet {
    pub fn point_count(&self) -> usize {
        self.store.len()
    }

    pub fn edge_count(&self) -> usize {
        self.unit_edges.len()
    }
}

// ---------------------------------------------------------------------------
// Route dispatch
// ---------------------------------------------------------------------------

/// Which gadget realizes a given target squared distance. Shared between
/// the materializing builder and the symbolic size estimator so the two
/// can never diverge.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Route {
    Base,
    /// Double simplex at the given edge scale (1 or 3/2).
    Fig1 { scale: Rat },
    /// Doubling layout for sqdist 4.
    Fig3,
    /// Chain of k unit steps, k >= 3.
    Fig4 { k: u32 },
    /// Division layout for |x - y| = p/q, q >= 2.
    Fig5 { p: u32, q: u32 },
    /// Right-angle closing layout for irrational |x - y|.
    Fig7,
}

fn route_for(r2: &Rat) -> Result<Route, WitnessError> {
    if !r2.is_positive() {
        return Err(WitnessError::BadDistance(r2.to_string()));
    }
    if r2 == &Rat::one() {
        return Ok(Route::Base);
    }
    match r2.sqrt_exact() {
        Some(r) => {
            if r == rat(3, 2).unwrap() {
                Ok(Route::Fig1 { scale: Rat::one() })
            } else if r == rat(9, 4).unwrap() {
                Ok(Route::Fig1 {
                    scale: rat(3, 2).unwrap(),
                })
            } else if r == Rat::from_int(2) {
                Ok(Route::Fig3)
            } else if r.is_integer() {
                let k = u32::try_from(r.numer().clone())
                    .map_err(|_| WitnessError::Unsupported(format!("chain length {r}")))?;
                Ok(Route::Fig4 { k })
            } else {
                let p = u32::try_from(r.numer().clone())
                    .map_err(|_| WitnessError::Unsupported(format!("ratio {r}")))?;
                let q = u32::try_from(r.denom().clone())
                    .map_err(|_| WitnessError::Unsupported(format!("ratio {r}")))?;
                Ok(Route::Fig5 { p, q })
            }
        }
        None => Ok(Route::Fig7),
    }
}

/// Sub-pair of a gadget: labels into its config, claimed squared distance,
/// and whether only the upper bound is forced.
struct SubPair {
    a: String,
    b: String,
    sq: Rat,
    bound: bool,
}

impl SubPair {
    fn new(a: &str, b: &str, sq: Rat, bound: bool) -> SubPair {
        SubPair {
            a: a.to_string(),
            b: b.to_string(),
            sq,
            bound,
        }
    }
}

fn fig3_config(x: &Point, y: &Point) -> Result<Config, WitnessError> {
    let (s, t) = config::fig3_layout(x, y)?;
    let mut points = BTreeMap::new();
    points.insert("x".to_string(), x.clone());
    points.insert("y".to_string(), y.clone());
    points.insert("s".to_string(), s);
    points.insert("t".to_string(), t);
    Ok(Config {
        name: "fig3".into(),
        points,
        claims: Vec::new(),
    })
}

fn fig3_subpairs() -> Vec<SubPair> {
    vec![
        SubPair::new("x", "s", Rat::one(), false),
        SubPair::new("s", "y", Rat::one(), false),
        SubPair::new("y", "t", rat(1, 16).unwrap(), true),
        SubPair::new("x", "t", rat(81, 16).unwrap(), false),
    ]
}

// ---------------------------------------------------------------------------
// Builder
// ---------------------------------------------------------------------------

/// Witness-set builder with a per-squared-distance memo of canonical sets.
pub struct Builder {
    budget: usize,
    canonical: HashMap<Rat, Rc<WitnessSet>>,
    canonical_bound: Option<Rc<WitnessSet>>,
}

impl Builder {
    pub fn new(budget: usize) -> Builder {
        Builder {
            budget,
            canonical: HashMap::new(),
            canonical_bound: None,
        }
    }

    /// Witness set forcing |f(x) - f(y)| = |x - y| for x != y in Q^8.
    pub fn build_witness(&mut self, x: &Point, y: &Point) -> Result<WitnessSet, WitnessError> {
        if x.dim() != 8 {
            return Err(WitnessError::DimMismatch(x.dim()));
        }
        if y.dim() != 8 {
            return Err(WitnessError::DimMismatch(y.dim()));
        }
        if x == y {
            return Err(WitnessError::DegeneratePair);
        }
        let r2 = sqdist(x, y)?;
        let canon = self.canonical_witness(&r2)?;
        self.transport(&canon, x, y)
    }

    /// Bound set Z_xy for sqdist(x, y) = 1/16: forces only
    /// |f(x) - f(y)| <= |x - y|.
    pub fn bound_set(&mut self, x: &Point, y: &Point) -> Result<WitnessSet, WitnessError> {
        if x.dim() != 8 || y.dim() != 8 {
            return Err(WitnessError::DimMismatch(x.dim().max(y.dim())));
        }
        let r2 = sqdist(x, y)?;
        let expected = rat(1, 16).unwrap();
        if r2 != expected {
            return Err(WitnessError::WrongDistance {
                expected: expected.to_string(),
                got: r2.to_string(),
            });
        }
        let canon = self.canonical_bound()?;
        self.transport(&canon, x, y)
    }

    /// Transports a canonical witness onto a concrete congruent pair,
    /// producing a fresh set with its own store.
    fn transport(&self, canon: &WitnessSet, x: &Point, y: &Point) -> Result<WitnessSet, WitnessError> {
        let cx = canon.store.get(canon.target.i);
        let cy = canon.store.get(canon.target.j);
        let iso = segment_isometry(cx, cy, x, y)?;
        let mut store = PointStore::new();
        let mut id_map = Vec::with_capacity(canon.store.len());
        for p in canon.store.points() {
            id_map.push(store.intern(iso.apply(p)?, self.budget)?);
        }
        let unit_edges = canon
            .unit_edges
            .iter()
            .map(|&(i, j)| norm_edge(id_map[i as usize], id_map[j as usize]))
            .collect();
        let target = TargetPair {
            i: id_map[canon.target.i as usize],
            j: id_map[canon.target.j as usize],
            sqdist: canon.target.sqdist.clone(),
            bound_only: canon.target.bound_only,
        };
        let provenance = remap_step(&canon.provenance, &id_map);
        Ok(WitnessSet {
            dim: canon.dim,
            store,
            unit_edges,
            target,
            provenance,
        })
    }

    fn canonical_witness(&mut self, r2: &Rat) -> Result<Rc<WitnessSet>, WitnessError> {
        if let Some(w) = self.canonical.get(r2) {
            return Ok(Rc::clone(w));
        }
        let built = Rc::new(self.build_canonical(r2)?);
        self.canonical.insert(r2.clone(), Rc::clone(&built));
        Ok(built)
    }

    fn canonical_bound(&mut self) -> Result<Rc<WitnessSet>, WitnessError> {
        if let Some(w) = &self.canonical_bound {
            return Ok(Rc::clone(w));
        }
        let cfg = config::fig2_q8();
        let mut subs = Vec::new();
        let nine_quarters = rat(9, 4).unwrap();
        for c in &cfg.claims {
            if c.a == "x" && c.b == "y" {
                continue; // the bound target itself
            }
            subs.push(SubPair::new(&c.a, &c.b, c.sq.clone(), false));
        }
        debug_assert!(subs.iter().filter(|s| s.sq == nine_quarters).count() == 28);
        let built = Rc::new(self.assemble(
            Rule::Fig2,
            &cfg,
            subs,
            ("x", "y"),
            rat(1, 16).unwrap(),
            true,
        )?);
        self.canonical_bound = Some(Rc::clone(&built));
        Ok(built)
    }

    fn build_canonical(&mut self, r2: &Rat) -> Result<WitnessSet, WitnessError> {
        match route_for(r2)? {
            Route::Base => {
                let x = Point::origin(8);
                let y = Point::scaled(&[1, 0, 0, 0, 0, 0, 0, 0], 1);
                let mut store = PointStore::new();
                let i = store.intern(x, self.budget)?;
                let j = store.intern(y, self.budget)?;
                let mut unit_edges = BTreeSet::new();
                unit_edges.insert(norm_edge(i, j));
                Ok(WitnessSet {
                    dim: 8,
                    store,
                    unit_edges,
                    target: TargetPair {
                        i,
                        j,
                        sqdist: Rat::one(),
                        bound_only: false,
                    },
                    provenance: Step {
                        rule: Rule::Base,
                        i,
                        j,
                        sq: Rat::one(),
                        bound_only: false,
                        children: Vec::new(),
                    },
                })
            }
            Route::Fig1 { scale } => {
                let cfg = config::fig1_q8(&scale)?;
                let gadget_sq = scale.square();
                let subs: Vec<SubPair> = cfg
                    .claims
                    .iter()
                    .filter(|c| c.sq == gadget_sq)
                    .map(|c| SubPair::new(&c.a, &c.b, c.sq.clone(), false))
                    .collect();
                self.assemble(Rule::Fig1, &cfg, subs, ("x", "y"), r2.clone(), false)
            }
            Route::Fig3 => {
                let x = Point::origin(8);
                let y = Point::scaled(&[2, 0, 0, 0, 0, 0, 0, 0], 1);
                let cfg = fig3_config(&x, &y)?;
                self.assemble(Rule::Fig3, &cfg, fig3_subpairs(), ("x", "y"), r2.clone(), false)
            }
            Route::Fig4 { k } => {
                let x = Point::origin(8);
                let y = Point::scaled(&[i64::from(k), 0, 0, 0, 0, 0, 0, 0], 1);
                let chain = config::fig4_chain(&x, &y, k)?;
                let mut points = BTreeMap::new();
                for (i, w) in chain.iter().enumerate() {
                    points.insert(format!("w{i}"), w.clone());
                }
                let cfg = Config {
                    name: "fig4".into(),
                    points,
                    claims: Vec::new(),
                };
                let mut subs = Vec::new();
                for i in 0..k as usize {
                    subs.push(SubPair::new(
                        &format!("w{i}"),
                        &format!("w{}", i + 1),
                        Rat::one(),
                        false,
                    ));
                }
                for i in 0..(k as usize - 1) {
                    subs.push(SubPair::new(
                        &format!("w{i}"),
                        &format!("w{}", i + 2),
                        Rat::from_int(4),
                        false,
                    ));
                }
                let last = format!("w{k}");
                self.assemble(Rule::Fig4, &cfg, subs, ("w0", &last), r2.clone(), false)
            }
            Route::Fig5 { p, q } => {
                let cfg = config::fig5_layout(p, q)?;
                let subs: Vec<SubPair> = cfg
                    .claims
                    .iter()
                    .filter(|c| !(c.a == "x" && c.b == "y"))
                    .map(|c| SubPair::new(&c.a, &c.b, c.sq.clone(), false))
                    .collect();
                self.assemble(Rule::Fig5, &cfg, subs, ("x", "y"), r2.clone(), false)
            }
            Route::Fig7 => {
                let cfg = config::fig7_layout(r2)?;
                let subs: Vec<SubPair> = cfg
                    .claims
                    .iter()
                    .filter(|c| !(c.a == "x" && c.b == "y"))
                    .map(|c| SubPair::new(&c.a, &c.b, c.sq.clone(), false))
                    .collect();
                self.assemble(Rule::Fig7, &cfg, subs, ("x", "y"), r2.clone(), false)
            }
        }
    }

    /// Interns a gadget's points, forces every sub-pair (directly for unit
    /// pairs, recursively otherwise) and assembles the provenance node.
    fn assemble(
        &mut self,
        rule: Rule,
        cfg: &Config,
        subs: Vec<SubPair>,
        target_labels: (&str, &str),
        target_sq: Rat,
        bound_only: bool,
    ) -> Result<WitnessSet, WitnessError> {
        let mut store = PointStore::new();
        let mut ids: BTreeMap<String, PointId> = BTreeMap::new();
        for (label, point) in &cfg.points {
            ids.insert(label.clone(), store.intern(point.clone(), self.budget)?);
        }
        let mut unit_edges = BTreeSet::new();
        let mut children = Vec::new();
        let mut w = WitnessSet {
            dim: 8,
            store,
            unit_edges: BTreeSet::new(),
            target: TargetPair {
                i: ids[target_labels.0],
                j: ids[target_labels.1],
                sqdist: target_sq.clone(),
                bound_only,
            },
            provenance: Step {
                rule,
                i: ids[target_labels.0],
                j: ids[target_labels.1],
                sq: target_sq.clone(),
                bound_only,
                children: Vec::new(),
            },
        };
        for sub in subs {
            let (ia, ib) = (ids[&sub.a], ids[&sub.b]);
            if sub.sq == Rat::one() && !sub.bound {
                unit_edges.insert(norm_edge(ia, ib));
                children.push(Step {
                    rule: Rule::Base,
                    i: ia,
                    j: ib,
                    sq: Rat::one(),
                    bound_only: false,
                    children: Vec::new(),
                });
                continue;
            }
            let canon = if sub.bound {
                self.canonical_bound()?
            } else {
                self.canonical_witness(&sub.sq)?
            };
            let child = self.merge(&mut w, &canon, &cfg.points[&sub.a], &cfg.points[&sub.b])?;
            for e in &child.collected_edges {
                unit_edges.insert(*e);
            }
            children.push(child.step);
        }
        w.unit_edges = unit_edges;
        w.provenance.children = children;
        Ok(w)
    }

    /// Transports a canonical sub-witness onto the pair (a, b) and merges
    /// it into the set under construction, sharing the interning table.
    fn merge(
        &self,
        dst: &mut WitnessSet,
        canon: &WitnessSet,
        a: &Point,
        b: &Point,
    ) -> Result<MergedChild, WitnessError> {
        let cx = canon.store.get(canon.target.i);
        let cy = canon.store.get(canon.target.j);
        let iso = segment_isometry(cx, cy, a, b)?;
        let mut id_map = Vec::with_capacity(canon.store.len());
        for p in canon.store.points() {
            id_map.push(dst.store.intern(iso.apply(p)?, self.budget)?);
        }
        let collected_edges = canon
            .unit_edges
            .iter()
            .map(|&(i, j)| norm_edge(id_map[i as usize], id_map[j as usize]))
            .collect();
        Ok(MergedChild {
            step: remap_step(&canon.provenance, &id_map),
            collected_edges,
        })
    }
}

struct MergedChild {
    step: Step,
    collected_edges: Vec<(PointId, PointId)>,
}

fn remap_step(step: &Step, id_map: &[PointId]) -> Step {
    Step {
        rule: step.rule,
        i: id_map[step.i as usize],
        j: id_map[step.j as usize],
        sq: step.sq.clone(),
        bound_only: step.bound_only,
        children: step.children.iter().map(|c| remap_step(c, id_map)).collect(),
    }
}

/// Convenience wrapper: one-shot build with a fresh memo.
pub fn build_witness(x: &Point, y: &Point, budget: usize) -> Result<WitnessSet, WitnessError> {
    Builder::new(budget).build_witness(x, y)
}

/// Convenience wrapper: one-shot bound set with a fresh memo.
pub fn bound_set(x: &Point, y: &Point, budget: usize) -> Result<WitnessSet, WitnessError> {
    Builder::new(budget).bound_set(x, y)
}

// ---------------------------------------------------------------------------
// Verification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub points: usize,
    pub edges: usize,
    pub coincidences: u64,
    pub pass: bool,
    pub failures: Vec<String>,
}

/// Re-checks a witness set from scratch: every unit edge, the target
/// distance, and a full provenance replay (every rule node's claimed
/// sub-distances hold exactly, every leaf is BASE with its edge present).
pub fn verify_witness(w: &WitnessSet) -> VerifyReport {
    let mut failures = Vec::new();
    let n = w.store.len() as u32;
    for &(i, j) in &w.unit_edges {
        if i >= n || j >= n {
            failures.push(format!("edge ({i}, {j}) references a missing point"));
            continue;
        }
        let d = sqdist(w.store.get(i), w.store.get(j)).expect("stored dims agree");
        if d != Rat::one() {
            failures.push(format!("edge ({i}, {j}) has sqdist {d}, expected 1"));
        }
    }
    if w.target.i >= n || w.target.j >= n {
        failures.push("target endpoints are not members of the store".into());
    } else {
        let d = sqdist(w.store.get(w.target.i), w.store.get(w.target.j)).expect("dims");
        if d != w.target.sqdist {
            failures.push(format!(
                "target sqdist is {d}, recorded {}",
                w.target.sqdist
            ));
        }
    }
    replay(w, &w.provenance, &mut failures);
    VerifyReport {
        points: w.store.len(),
        edges: w.unit_edges.len(),
        coincidences: w.store.coincidences(),
        pass: failures.is_empty(),
        failures,
    }
}

fn replay(w: &WitnessSet, step: &Step, failures: &mut Vec<String>) {
    let n = w.store.len() as u32;
    if step.i >= n || step.j >= n {
        failures.push(format!(
            "step {} ({}, {}) references a missing point",
            step.rule, step.i, step.j
        ));
        return;
    }
    let d = sqdist(w.store.get(step.i), w.store.get(step.j)).expect("dims");
    if d != step.sq {
        failures.push(format!(
            "step {} ({}, {}) claims sqdist {}, actual {}",
            step.rule, step.i, step.j, step.sq, d
        ));
    }
    match step.rule {
        Rule::Base => {
            if step.sq != Rat::one() {
                failures.push(format!(
                    "BASE step ({}, {}) with sqdist {} != 1",
                    step.i, step.j, step.sq
                ));
            }
            if !w.unit_edges.contains(&norm_edge(step.i, step.j)) {
                failures.push(format!("BASE edge ({}, {}) missing", step.i, step.j));
            }
            if !step.children.is_empty() {
                failures.push("BASE step with children".into());
            }
        }
        _ => {
            if step.children.is_empty() {
                failures.push(format!(
                    "non-BASE leaf {} at ({}, {})",
                    step.rule, step.i, step.j
                ));
            }
            for c in &step.children {
                replay(w, c, failures);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Size estimation
// ---------------------------------------------------------------------------

/// Symbolic upper bound on a build, evaluated without creating points.
/// Ignores coincidence dedup, so materialized counts never exceed it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SizeEstimate {
    pub points: u128,
    pub unit_edges: u128,
    pub rule_counts: BTreeMap<String, u128>,
}

impl SizeEstimate {
    fn leaf() -> SizeEstimate {
        let mut rule_counts = BTreeMap::new();
        rule_counts.insert(Rule::Base.to_string(), 1);
        SizeEstimate {
            points: 2,
            unit_edges: 1,
            rule_counts,
        }
    }

    fn absorb(&mut self, other: &SizeEstimate) {
        self.points += other.points;
        self.unit_edges += other.unit_edges;
        for (k, v) in &other.rule_counts {
            *self.rule_counts.entry(k.clone()).or_insert(0) += v;
        }
    }

    fn count_rule(&mut self, rule: Rule) {
        *self.rule_counts.entry(rule.to_string()).or_insert(0) += 1;
    }
}

struct Estimator {
    memo: HashMap<Rat, SizeEstimate>,
    bound_memo: Option<SizeEstimate>,
}

impl Estimator {
    fn new() -> Estimator {
        Estimator {
            memo: HashMap::new(),
            bound_memo: None,
        }
    }

    fn gadget(
        &mut self,
        rule: Rule,
        gadget_points: u128,
        subs: &[(Rat, bool)],
    ) -> Result<SizeEstimate, WitnessError> {
        let mut est = SizeEstimate {
            points: gadget_points,
            unit_edges: 0,
            rule_counts: BTreeMap::new(),
        };
        est.count_rule(rule);
        for (sq, bound) in subs {
            if *bound {
                let sub = self.bound()?;
                est.absorb(&sub);
            } else if sq == &Rat::one() {
                est.unit_edges += 1;
                est.count_rule(Rule::Base);
            } else {
                let sub = self.estimate(sq)?;
                est.absorb(&sub);
            }
        }
        Ok(est)
    }

    fn bound(&mut self) -> Result<SizeEstimate, WitnessError> {
        if let Some(b) = &self.bound_memo {
            return Ok(b.clone());
        }
        let nine_quarters = rat(9, 4).unwrap();
        let mut subs = Vec::new();
        for _ in 0..16 {
            subs.push((Rat::one(), false));
        }
        for _ in 0..28 {
            subs.push((nine_quarters.clone(), false));
        }
        let est = self.gadget(Rule::Fig2, 10, &subs)?;
        self.bound_memo = Some(est.clone());
        Ok(est)
    }

    fn estimate(&mut self, r2: &Rat) -> Result<SizeEstimate, WitnessError> {
        if let Some(e) = self.memo.get(r2) {
            return Ok(e.clone());
        }
        let est = match route_for(r2)? {
            Route::Base => SizeEstimate::leaf(),
            Route::Fig1 { scale } => {
                let gadget_sq = scale.square();
                let mut subs = Vec::new();
                for _ in 0..89 {
                    subs.push((gadget_sq.clone(), false));
                }
                self.gadget(Rule::Fig1, 19, &subs)?
            }
            Route::Fig3 => {
                let subs = vec![
                    (Rat::one(), false),
                    (Rat::one(), false),
                    (rat(1, 16).unwrap(), true),
                    (rat(81, 16).unwrap(), false),
                ];
                self.gadget(Rule::Fig3, 4, &subs)?
            }
            Route::Fig4 { k } => {
                let mut subs = Vec::new();
                for _ in 0..k {
                    subs.push((Rat::one(), false));
                }
                for _ in 0..k - 1 {
                    subs.push((Rat::from_int(4), false));
                }
                self.gadget(Rule::Fig4, u128::from(k) + 1, &subs)?
            }
            Route::Fig5 { p, q } => {
                let pr = Rat::from_int(i64::from(p));
                let side = Rat::from_int(i64::from(p) * i64::from(q));
                let back = Rat::from_int(i64::from(p) * (i64::from(q) - 1));
                let subs = vec![
                    (pr.square(), false),
                    (side.square(), false),
                    (side.square(), false),
                    (pr.square(), false),
                    (pr.square(), false),
                    (back.square(), false),
                    (back.square(), false),
                ];
                self.gadget(Rule::Fig5, 5, &subs)?
            }
            Route::Fig7 => {
                let quarter = rat(1, 4).unwrap();
                let a = r2 + &quarter;
                let b = (r2 - &quarter).abs();
                let subs = vec![
                    (b.square(), false),
                    (b.square(), false),
                    (Rat::from_int(4) * b.square(), false),
                    (a.square(), false),
                    (a.square(), false),
                ];
                self.gadget(Rule::Fig7, 4, &subs)?
            }
        };
        self.memo.insert(r2.clone(), est.clone());
        Ok(est)
    }
}

/// Evaluates the build recursion symbolically for a target squared
/// distance, without materializing any points.
pub fn estimate_size(r2: &Rat) -> Result<SizeEstimate, WitnessError> {
    Estimator::new().estimate(r2)
}

// ---------------------------------------------------------------------------
// Serialization and export
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct WitnessJson {
    schema: u32,
    dim: usize,
    points: Vec<Point>,
    unit_edges: Vec<(PointId, PointId)>,
    target: TargetPair,
    provenance: Step,
}

impl Serialize for WitnessSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        WitnessJson {
            schema: 1,
            dim: self.dim,
            points: self.store.points().to_vec(),
            unit_edges: self.unit_edges.iter().copied().collect(),
            target: self.target.clone(),
            provenance: self.provenance.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for WitnessSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<WitnessSet, D::Error> {
        let raw = WitnessJson::deserialize(d)?;
        if raw.schema != 1 {
            return Err(serde::de::Error::custom(format!(
                "unsupported schema {}",
                raw.schema
            )));
        }
        Ok(WitnessSet {
            dim: raw.dim,
            store: PointStore::from_points(raw.points),
            unit_edges: raw.unit_edges.into_iter().map(|(i, j)| norm_edge(i, j)).collect(),
            target: raw.target,
            provenance: raw.provenance,
        })
    }
}

/// GraphML export of the unit-distance graph. Vertices carry their
/// coordinates as rational strings; the target pair rides as graph data.
pub fn to_graphml(w: &WitnessSet) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str("<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n");
    for c in 0..w.dim {
        out.push_str(&format!(
            "  <key id=\"c{c}\" for=\"node\" attr.name=\"c{c}\" attr.type=\"string\"/>\n"
        ));
    }
    for (id, name) in [("ti", "target_i"), ("tj", "target_j"), ("ts", "target_sqdist")] {
        out.push_str(&format!(
            "  <key id=\"{id}\" for=\"graph\" attr.name=\"{name}\" attr.type=\"string\"/>\n"
        ));
    }
    out.push_str("  <graph id=\"witness\" edgedefault=\"undirected\">\n");
    out.push_str(&format!("    <data key=\"ti\">{}</data>\n", w.target.i));
    out.push_str(&format!("    <data key=\"tj\">{}</data>\n", w.target.j));
    out.push_str(&format!(
        "    <data key=\"ts\">{}</data>\n",
        w.target.sqdist
    ));
    for (i, p) in w.store.points().iter().enumerate() {
        out.push_str(&format!("    <node id=\"n{i}\">\n"));
        for (c, v) in p.coords().iter().enumerate() {
            out.push_str(&format!("      <data key=\"c{c}\">{v}</data>\n"));
        }
        out.push_str("    </node>\n");
    }
    for (k, &(i, j)) in w.unit_edges.iter().enumerate() {
        out.push_str(&format!(
            "    <edge id=\"e{k}\" source=\"n{i}\" target=\"n{j}\"/>\n"
        ));
    }
    out.push_str("  </graph>\n</graphml>\n");
    out
}

/// DIMACS-like edge list. Header comments carry the target pair and its
/// squared distance; vertices are 1-based.
pub fn to_dimacs(w: &WitnessSet) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "c target {} {} sqdist {}\n",
        w.target.i + 1,
        w.target.j + 1,
        w.target.sqdist
    ));
    out.push_str(&format!(
        "p edge {} {}\n",
        w.store.len(),
        w.unit_edges.len()
    ));
    for &(i, j) in &w.unit_edges {
        out.push_str(&format!("e {} {}\n", i + 1, j + 1));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e1(len: i64) -> (Point, Point) {
        (
            Point::origin(8),
            Point::scaled(&[len, 0, 0, 0, 0, 0, 0, 0], 1),
        )
    }

    #[test]
    fn base_case() {
        let (x, y) = e1(1);
        let w = build_witness(&x, &y, 1000).unwrap();
        assert_eq!(w.point_count(), 2);
        assert_eq!(w.edge_count(), 1);
        assert_eq!(w.provenance.rule, Rule::Base);
        assert!(verify_witness(&w).pass);
    }

    #[test]
    fn degenerate_and_dimension_errors() {
        let x = Point::origin(8);
        assert_eq!(
            build_witness(&x, &x, 10),
            Err(WitnessError::DegeneratePair)
        );
        let p3 = Point::origin(3);
        assert!(matches!(
            build_witness(&p3, &p3, 10),
            Err(WitnessError::DimMismatch(3))
        ));
    }

    #[test]
    fn three_halves_is_one_simplex_gadget() {
        let x = Point::origin(8);
        let y = Point::scaled(&[-9, 0, 0, 0, 3, 3, 3, -6], 8);
        let w = build_witness(&x, &y, 1000).unwrap();
        assert_eq!(w.point_count(), 19);
        assert_eq!(w.edge_count(), 89);
        assert_eq!(w.store.coincidences(), 0);
        assert_eq!(w.provenance.rule, Rule::Fig1);
        assert_eq!(w.provenance.children.len(), 89);
        assert!(w.provenance.children.iter().all(|c| c.rule == Rule::Base));
        let report = verify_witness(&w);
        assert!(report.pass, "{:?}", report.failures);
    }

    #[test]
    fn budget_is_enforced() {
        let x = Point::origin(8);
        let y = Point::scaled(&[-9, 0, 0, 0, 3, 3, 3, -6], 8);
        assert_eq!(
            build_witness(&x, &y, 10),
            Err(WitnessError::BudgetExceeded(10))
        );
    }

    #[test]
    fn bound_set_shape() {
        let x = Point::scaled(&[-3, 0, 0, 0, 1, 1, 1, -2], 4);
        let y = Point::scaled(&[-15, 0, 0, 0, 5, 5, 5, -10], 16);
        let w = bound_set(&x, &y, 1_000_000).unwrap();
        assert!(w.target.bound_only);
        assert_eq!(w.provenance.rule, Rule::Fig2);
        // 10 catalog points plus 28 transported 19-point simplex gadgets;
        // interning merges the copies' shared points, so the count lands
        // well under the 10 + 28*17 endpoint-only bound. The exact value
        // is deterministic.
        assert!(w.point_count() <= 10 + 28 * 17);
        assert_eq!(w.point_count(), 346);
        let report = verify_witness(&w);
        assert!(report.pass, "{:?}", report.failures);

        let (a, b) = e1(1);
        assert!(matches!(
            bound_set(&a, &b, 100),
            Err(WitnessError::WrongDistance { .. })
        ));
    }

    #[test]
    fn verify_flags_perturbed_edge() {
        let x = Point::origin(8);
        let y = Point::scaled(&[-9, 0, 0, 0, 3, 3, 3, -6], 8);
        let w = build_witness(&x, &y, 1000).unwrap();
        let mut json: serde_json::Value = serde_json::to_value(&w).unwrap();
        json["points"][5][2] = serde_json::Value::String("1000000001/1000000000".into());
        let broken: WitnessSet = serde_json::from_value(json).unwrap();
        let report = verify_witness(&broken);
        assert!(!report.pass);
        assert!(report.failures.iter().any(|f| f.contains("(5")
            || f.contains(" 5)")
            || f.contains("5,")));
    }

    #[test]
    fn verify_flags_missing_base_edge() {
        let (x, y) = e1(1);
        let mut w = build_witness(&x, &y, 10).unwrap();
        w.unit_edges.clear();
        let report = verify_witness(&w);
        assert!(!report.pass);
        assert!(report.failures.iter().any(|f| f.contains("BASE edge")));
    }

    #[test]
    fn estimate_matches_small_builds() {
        assert_eq!(estimate_size(&Rat::one()).unwrap().points, 2);
        assert_eq!(estimate_size(&Rat::one()).unwrap().unit_edges, 1);
        let est = estimate_size(&rat(9, 4).unwrap()).unwrap();
        assert_eq!(est.points, 19);
        assert_eq!(est.unit_edges, 89);
    }

    #[test]
    fn witness_json_roundtrip() {
        let x = Point::origin(8);
        let y = Point::scaled(&[-9, 0, 0, 0, 3, 3, 3, -6], 8);
        let w = build_witness(&x, &y, 1000).unwrap();
        let json = serde_json::to_string(&w).unwrap();
        let back: WitnessSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back.unit_edges, w.unit_edges);
        assert_eq!(back.store.points(), w.store.points());
        assert_eq!(back.target, w.target);
        assert!(verify_witness(&back).pass);
    }

    #[test]
    fn exports_have_expected_shape() {
        let (x, y) = e1(1);
        let w = build_witness(&x, &y, 10).unwrap();
        let gml = to_graphml(&w);
        assert!(gml.contains("<node id=\"n0\">"));
        assert!(gml.contains("target_sqdist"));
        let dimacs = to_dimacs(&w);
        assert!(dimacs.starts_with("c target "));
        assert!(dimacs.contains("p edge 2 1"));
        assert!(dimacs.contains("e 1 2"));
    }

    #[test]
    fn transport_invariance_counts() {
        let x = Point::origin(8);
        let y = Point::scaled(&[-9, 0, 0, 0, 3, 3, 3, -6], 8);
        let mut b = Builder::new(100_000);
        let w1 = b.build_witness(&x, &y).unwrap();
        let m = crate::isometry::Isometry::reflection(
            Point::origin(8),
            Point::scaled(&[1, 2, 3, 4, 5, 6, 7, 8], 5),
        )
        .unwrap();
        let x2 = m.apply(&x).unwrap();
        let y2 = m.apply(&y).unwrap();
        let w2 = b.build_witness(&x2, &y2).unwrap();
        assert_eq!(w1.point_count(), w2.point_count());
        assert_eq!(w1.edge_count(), w2.edge_count());
        assert_eq!(step_shape(&w1.provenance), step_shape(&w2.provenance));
    }

    fn step_shape(s: &Step) -> (Rule, Rat, Vec<(Rule, Rat)>) {
        (
            s.rule,
            s.sq.clone(),
            s.children.iter().map(|c| (c.rule, c.sq.clone())).collect(),
        )
    }
}
