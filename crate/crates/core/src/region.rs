//! Rate constraints of the two inner bounds, neighborhood feasibility of
//! candidate reconstructions, and a heuristic frontier search validated
//! against an exhaustive simplex-grid oracle.
//!
//! A candidate is a conditional law of the reconstructions given the source,
//! `p(y1, y2, y12 | x)` for the two-layer bound and `p(u, y1, y2, y12 | x)`
//! for the bound with a common layer. Each feasible candidate contributes the
//! polytope `{R1 >= a, R2 >= b, R1 + R2 >= s}`; a frontier stores the
//! Pareto-minimal corner points of the union of these polytopes found so far.

use std::cmp::Ordering;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probability::{compose, entropy_of_probs, in_delta_neighborhood, ConditionalPmf, JointPmf, Pmf, IDENTITY_TOL};
use crate::seeding::stream_rng;

/// Slack when comparing rate pairs against constraints.
pub const RATE_TOL: f64 = 1e-9;

/// Default candidate limit of [`grid_oracle`].
pub const GRID_ORACLE_LIMIT: u64 = 100_000_000;

const TAG_RESTART: u64 = 0x5E57;
const PENALTY: f64 = 10.0;

/// Which inner bound to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Theorem {
    /// Two descriptions, no common layer.
    One,
    /// Common layer `U` carried on both links.
    Two,
}

impl TryFrom<u8> for Theorem {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Theorem::One),
            2 => Ok(Theorem::Two),
            _ => Err(Error::InvalidParameter(format!("theorem must be 1 or 2, got {v}"))),
        }
    }
}

impl From<Theorem> for u8 {
    fn from(t: Theorem) -> u8 {
        match t {
            Theorem::One => 1,
            Theorem::Two => 2,
        }
    }
}

impl std::str::FromStr for Theorem {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        s.parse::<u8>()
            .map_err(|_| Error::InvalidParameter(format!("theorem must be 1 or 2, got {s:?}")))?
            .try_into()
    }
}

/// A problem instance: source law, target channel and the three radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionQuery {
    pub p0: Pmf,
    pub target_channel: ConditionalPmf,
    pub delta1: f64,
    pub delta2: f64,
    pub delta12: f64,
}

impl RegionQuery {
    pub fn new(p0: Pmf, target_channel: ConditionalPmf, delta1: f64, delta2: f64, delta12: f64) -> Result<Self> {
        let q = Self {
            p0,
            target_channel,
            delta1,
            delta2,
            delta12,
        };
        q.validate()?;
        Ok(q)
    }

    /// Target `Y = X`.
    pub fn identity_target(p0: Pmf, deltas: [f64; 3]) -> Result<Self> {
        let k = p0.size();
        let rows = (0..k)
            .map(|x| (0..k).map(|y| if x == y { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::new(p0, ConditionalPmf::from_rows(rows)?, deltas[0], deltas[1], deltas[2])
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.target_channel;
        if c.given_shape() != [self.p0.size()] || c.target_shape().len() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "target channel maps {:?} -> {:?}, source has {} symbols",
                c.given_shape(),
                c.target_shape(),
                self.p0.size()
            )));
        }
        for (name, d) in [("delta1", self.delta1), ("delta2", self.delta2), ("delta12", self.delta12)] {
            if !(0.0..=1.0).contains(&d) {
                return Err(Error::InvalidParameter(format!("{name} must lie in [0, 1], got {d}")));
            }
        }
        // rows with source mass must be defined
        self.target_joint().map(|_| ())
    }

    pub fn x_size(&self) -> usize {
        self.p0.size()
    }

    pub fn y_size(&self) -> usize {
        self.target_channel.target_shape()[0]
    }

    pub fn deltas(&self) -> [f64; 3] {
        [self.delta1, self.delta2, self.delta12]
    }

    /// `p0(x) p(y|x)`.
    pub fn target_joint(&self) -> Result<JointPmf> {
        compose(&self.p0, &self.target_channel)
    }
}

/// `p(y1, y2, y12 | x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTh1 {
    pub cond: ConditionalPmf,
}

impl CandidateTh1 {
    pub fn new(cond: ConditionalPmf) -> Result<Self> {
        let t = cond.target_shape();
        if cond.given_shape().len() != 1 || t.len() != 3 || t[0] != t[1] || t[1] != t[2] {
            return Err(Error::ShapeMismatch(format!(
                "candidate must map one axis to three equal reconstruction axes, got {:?} -> {:?}",
                cond.given_shape(),
                t
            )));
        }
        Ok(Self { cond })
    }

    /// Reconstructions drawn independently given `x` from three channels.
    pub fn from_channels(c1: &ConditionalPmf, c2: &ConditionalPmf, c12: &ConditionalPmf) -> Result<Self> {
        let x = c1.n_rows();
        let y = c1.row_len();
        if [c2, c12].iter().any(|c| c.n_rows() != x || c.row_len() != y) {
            return Err(Error::ShapeMismatch("channels differ in shape".into()));
        }
        let mut table = Vec::with_capacity(x * y * y * y);
        for r in 0..x {
            let (a, b, c) = match (c1.row(r), c2.row(r), c12.row(r)) {
                (Some(a), Some(b), Some(c)) => (a, b, c),
                _ => return Err(Error::UndefinedConditional { row: r }),
            };
            for &pa in a {
                for &pb in b {
                    table.extend(c.iter().map(|&pc| pa * pb * pc));
                }
            }
        }
        Self::new(ConditionalPmf::new(vec![x], vec![y, y, y], table)?)
    }

    pub fn y_size(&self) -> usize {
        self.cond.target_shape()[0]
    }
}

/// `p(u, y1, y2, y12 | x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTh2 {
    pub cond: ConditionalPmf,
    pub u_size: usize,
}

impl CandidateTh2 {
    pub fn new(cond: ConditionalPmf) -> Result<Self> {
        let t = cond.target_shape();
        if cond.given_shape().len() != 1 || t.len() != 4 || t[1] != t[2] || t[2] != t[3] {
            return Err(Error::ShapeMismatch(format!(
                "candidate must map one axis to (U, Y, Y, Y), got {:?} -> {:?}",
                cond.given_shape(),
                t
            )));
        }
        Ok(Self {
            u_size: t[0],
            cond,
        })
    }

    /// The same candidate with a one-symbol `U`.
    pub fn from_th1(c: &CandidateTh1) -> Self {
        let y = c.y_size();
        let cond = ConditionalPmf::new(c.cond.given_shape().to_vec(), vec![1, y, y, y], c.cond.table().to_vec())
            .expect("reshaping a valid conditional");
        Self { cond, u_size: 1 }
    }

    /// Drops `U` by summing it out.
    pub fn marginalize_u(&self) -> CandidateTh1 {
        let y = self.cond.target_shape()[1];
        let cells = y * y * y;
        let mut table = Vec::with_capacity(self.cond.n_rows() * cells);
        for r in 0..self.cond.n_rows() {
            let row = &self.cond.table()[r * self.u_size * cells..(r + 1) * self.u_size * cells];
            table.extend((0..cells).map(|c| (0..self.u_size).map(|u| row[u * cells + c]).sum::<f64>()));
        }
        CandidateTh1 {
            cond: ConditionalPmf::new(self.cond.given_shape().to_vec(), vec![y, y, y], table)
                .expect("summing out an axis"),
        }
    }
}

/// Right-hand sides of the three rate inequalities, in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateConstraints {
    pub r1_min: f64,
    pub r2_min: f64,
    pub rsum_min: f64,
}

impl RateConstraints {
    fn clamped(r1: f64, r2: f64, rsum: f64) -> Self {
        Self {
            r1_min: r1.max(0.0),
            r2_min: r2.max(0.0),
            rsum_min: rsum.max(0.0),
        }
    }

    /// Whether `(r1, r2)` satisfies all three closed half-spaces.
    pub fn admits(&self, r1: f64, r2: f64) -> bool {
        self.violation(r1, r2) <= RATE_TOL
    }

    pub fn violation(&self, r1: f64, r2: f64) -> f64 {
        (self.r1_min - r1).max(0.0) + (self.r2_min - r2).max(0.0) + (self.rsum_min - r1 - r2).max(0.0)
    }

    /// The two vertices of the polytope on its lower-left boundary.
    pub fn corners(&self) -> [(f64, f64); 2] {
        let (a, b, s) = (self.r1_min, self.r2_min, self.rsum_min);
        [(a, b.max(s - a)), (a.max(s - b), b)]
    }

    /// Smallest `R1 + R2` in the polytope.
    pub fn min_sum(&self) -> f64 {
        (self.r1_min + self.r2_min).max(self.rsum_min)
    }
}

fn check_candidate_query(x: usize, y: usize, q: &RegionQuery) -> Result<()> {
    q.validate()?;
    if x != q.x_size() || y != q.y_size() {
        return Err(Error::ShapeMismatch(format!(
            "candidate over |X| = {x}, |Y| = {y}; query has |X| = {}, |Y| = {}",
            q.x_size(),
            q.y_size()
        )));
    }
    Ok(())
}

fn feasible_joint(joint: &JointPmf, first: usize, q: &RegionQuery) -> Result<bool> {
    let target = q.target_joint()?;
    for (axis, delta) in (first..first + 3).zip(q.deltas()) {
        if !in_delta_neighborhood(&joint.marginalize(&[0, axis])?, &target, delta)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// All three composed `(X, Y_i)` marginals lie in their neighborhoods.
pub fn feasible_th1(cand: &CandidateTh1, q: &RegionQuery) -> Result<bool> {
    check_candidate_query(cand.cond.given_shape()[0], cand.y_size(), q)?;
    feasible_joint(&compose(&q.p0, &cand.cond)?, 1, q)
}

pub fn feasible_th2(cand: &CandidateTh2, q: &RegionQuery) -> Result<bool> {
    check_candidate_query(cand.cond.given_shape()[0], cand.cond.target_shape()[1], q)?;
    feasible_joint(&compose(&q.p0, &cand.cond)?, 2, q)
}

fn check_prior(p0: &Pmf, cond: &ConditionalPmf) -> Result<()> {
    if cond.given_shape() != [p0.size()] {
        return Err(Error::ShapeMismatch(format!(
            "source has {} symbols, candidate conditions on {:?}",
            p0.size(),
            cond.given_shape()
        )));
    }
    Ok(())
}

/// `(I(X;Y1), I(X;Y2), I(X;Y1,Y2,Y12) + I(Y1;Y2))`.
pub fn th1_constraints(p0: &Pmf, cand: &CandidateTh1) -> Result<RateConstraints> {
    check_prior(p0, &cand.cond)?;
    let j = compose(p0, &cand.cond)?;
    Ok(RateConstraints::clamped(
        j.mutual_information(&[0], &[1])?,
        j.mutual_information(&[0], &[2])?,
        j.mutual_information(&[0], &[1, 2, 3])? + j.mutual_information(&[1], &[2])?,
    ))
}

/// `(I(X;U,Y1), I(X;U,Y2), I(X;U) + I(X;U,Y1,Y2,Y12) + I(Y1;Y2|U))`.
pub fn th2_constraints(p0: &Pmf, cand: &CandidateTh2) -> Result<RateConstraints> {
    check_prior(p0, &cand.cond)?;
    let j = compose(p0, &cand.cond)?;
    Ok(RateConstraints::clamped(
        j.mutual_information(&[0], &[1, 2])?,
        j.mutual_information(&[0], &[1, 3])?,
        j.mutual_information(&[0], &[1])?
            + j.mutual_information(&[0], &[1, 2, 3, 4])?
            + j.conditional_mutual_information(&[2], &[3], &[1])?,
    ))
}

/// Knobs of the heuristic search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Denominator of the coarse simplex grid (coarsened to fit `grid_limit`).
    pub grid_step: u32,
    pub grid_limit: u64,
    pub restarts: usize,
    /// Number of intervals in each fixed-rate sweep.
    pub sweep_points: usize,
    pub min_step: f64,
    /// Total candidate evaluations, grid included.
    pub max_evaluations: u64,
    /// `|U|` values tried for the common-layer bound; default `{1, 2, |Y|+1}`.
    pub u_sizes: Option<Vec<usize>>,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            grid_step: 8,
            grid_limit: 200_000,
            restarts: 8,
            sweep_points: 32,
            min_step: 1.0 / 1024.0,
            max_evaluations: 20_000_000,
            u_sizes: None,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_step == 0 {
            return Err(Error::InvalidParameter("grid_step must be >= 1".into()));
        }
        if !(self.min_step > 0.0 && self.min_step <= 0.5) {
            return Err(Error::InvalidParameter("min_step must lie in (0, 0.5]".into()));
        }
        if let Some(u) = &self.u_sizes {
            if u.is_empty() || u.contains(&0) {
                return Err(Error::InvalidParameter("u_sizes must be nonempty and >= 1".into()));
            }
        }
        Ok(())
    }

    fn u_sizes_for(&self, theorem: Theorem, y: usize) -> Vec<usize> {
        let mut u = match (theorem, &self.u_sizes) {
            (Theorem::One, _) => vec![1],
            (Theorem::Two, Some(u)) => u.clone(),
            (Theorem::Two, None) => vec![1, 2, y + 1],
        };
        u.sort_unstable();
        u.dedup();
        u
    }
}

/// A candidate behind a frontier point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub theorem: Theorem,
    pub u_size: usize,
    /// Over `(Y1, Y2, Y12)` or `(U, Y1, Y2, Y12)` given `X`.
    pub candidate: ConditionalPmf,
    pub constraints: RateConstraints,
}

impl Witness {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.u_size.cmp(&other.u_size).then_with(|| {
            let (a, b) = (self.candidate.table(), other.candidate.table());
            a.iter()
                .zip(b)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or_else(|| a.len().cmp(&b.len()))
        })
    }

    pub fn as_th1(&self) -> Result<CandidateTh1> {
        match self.theorem {
            Theorem::One => CandidateTh1::new(self.candidate.clone()),
            Theorem::Two => Ok(CandidateTh2::new(self.candidate.clone())?.marginalize_u()),
        }
    }

    pub fn as_th2(&self) -> Result<CandidateTh2> {
        match self.theorem {
            Theorem::One => Ok(CandidateTh2::from_th1(&CandidateTh1::new(self.candidate.clone())?)),
            Theorem::Two => CandidateTh2::new(self.candidate.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub r1: f64,
    pub r2: f64,
    pub witness: Witness,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FrontierMeta {
    pub grid_steps: Vec<u32>,
    pub u_sizes: Vec<usize>,
    pub restarts: usize,
    pub sweep_points: usize,
    pub evaluations: u64,
    pub max_evaluations: u64,
}

/// Pareto-minimal `(R1, R2)` points, sorted by `R1` ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionFrontier {
    pub points: Vec<FrontierPoint>,
    /// False when the evaluation budget ran out before the search finished.
    pub complete: bool,
    pub meta: FrontierMeta,
}

impl RegionFrontier {
    pub fn empty() -> Self {
        Self {
            points: Vec::new(),
            complete: true,
            meta: FrontierMeta::default(),
        }
    }

    /// Pareto merge; associative and commutative in the point set.
    pub fn merge(self, other: RegionFrontier) -> RegionFrontier {
        let mut p = Pareto::from_points(self.points);
        p.merge(Pareto::from_points(other.points));
        RegionFrontier {
            points: p.into_points(),
            complete: self.complete && other.complete,
            meta: self.meta,
        }
    }

    pub fn min_sum_rate(&self) -> Option<f64> {
        self.points.iter().map(|p| p.r1 + p.r2).min_by(f64::total_cmp)
    }

    /// `min (l1 R1 + l2 R2)` over the points.
    pub fn weighted_min(&self, l1: f64, l2: f64) -> Option<f64> {
        self.points.iter().map(|p| l1 * p.r1 + l2 * p.r2).min_by(f64::total_cmp)
    }

    /// Every point of `other` is matched by a point here that is no worse
    /// than it by more than `tol` in either coordinate.
    pub fn covers(&self, other: &RegionFrontier, tol: f64) -> bool {
        other
            .points
            .iter()
            .all(|o| self.points.iter().any(|p| p.r1 <= o.r1 + tol && p.r2 <= o.r2 + tol))
    }

    /// Whether `(r1, r2)` is dominated by some point (within [`RATE_TOL`]).
    pub fn contains(&self, r1: f64, r2: f64) -> bool {
        self.points
            .iter()
            .any(|p| p.r1 <= r1 + RATE_TOL && p.r2 <= r2 + RATE_TOL)
    }

    pub fn is_pareto(&self) -> bool {
        self.points.iter().enumerate().all(|(i, p)| {
            self.points
                .iter()
                .enumerate()
                .all(|(j, q)| i == j || !(q.r1 <= p.r1 && q.r2 <= p.r2))
        })
    }
}

#[derive(Debug, Clone)]
struct Entry {
    r1: f64,
    r2: f64,
    witness: Arc<Witness>,
}

/// Sorted Pareto set: `r1` strictly increasing, `r2` strictly decreasing;
/// ties in both coordinates keep the witness with the smaller key.
#[derive(Debug, Clone, Default)]
struct Pareto {
    pts: Vec<Entry>,
}

impl Pareto {
    fn from_points(points: Vec<FrontierPoint>) -> Self {
        let mut p = Pareto::default();
        for fp in points {
            p.insert(Entry {
                r1: fp.r1,
                r2: fp.r2,
                witness: Arc::new(fp.witness),
            });
        }
        p
    }

    fn into_points(self) -> Vec<FrontierPoint> {
        self.pts
            .into_iter()
            .map(|e| FrontierPoint {
                r1: e.r1,
                r2: e.r2,
                witness: Arc::try_unwrap(e.witness).unwrap_or_else(|w| (*w).clone()),
            })
            .collect()
    }

    /// False only if a stored point strictly beats `(r1, r2)`.
    fn may_accept(&self, r1: f64, r2: f64) -> bool {
        if !(r1.is_finite() && r2.is_finite()) {
            return false;
        }
        let idx = self.pts.partition_point(|p| p.r1 < r1);
        if idx > 0 && self.pts[idx - 1].r2 <= r2 {
            return false;
        }
        !(idx < self.pts.len() && self.pts[idx].r1 == r1 && self.pts[idx].r2 < r2)
    }

    fn insert(&mut self, e: Entry) {
        if !self.may_accept(e.r1, e.r2) {
            return;
        }
        let idx = self.pts.partition_point(|p| p.r1 < e.r1);
        if idx < self.pts.len() && self.pts[idx].r1 == e.r1 && self.pts[idx].r2 == e.r2 {
            if e.witness.key_cmp(&self.pts[idx].witness).is_lt() {
                self.pts[idx] = e;
            }
            return;
        }
        let end = idx + self.pts[idx..].partition_point(|p| p.r2 >= e.r2);
        self.pts.splice(idx..end, std::iter::once(e));
    }

    fn merge(&mut self, other: Pareto) {
        for e in other.pts {
            self.insert(e);
        }
    }

    fn add_candidate(&mut self, c: &RateConstraints, extra: Option<(f64, f64)>, make: impl FnOnce() -> Witness) {
        let mut pts: Vec<(f64, f64)> = c.corners().to_vec();
        pts.extend(extra);
        if !pts.iter().any(|&(a, b)| self.may_accept(a, b)) {
            return;
        }
        let w = Arc::new(make());
        for (r1, r2) in pts {
            self.insert(Entry {
                r1,
                r2,
                witness: w.clone(),
            });
        }
    }
}

// ---------------------------------------------------------------------------
// fast evaluation of candidate tables

/// Per-row conditional entropies `H(U|x), H(U,Y1|x), H(U,Y2|x), H(all|x)`
/// and per-link TV contributions, both unweighted.
#[derive(Debug, Clone, Copy, Default)]
struct RowStats {
    ce: [f64; 4],
    tv: [f64; 3],
}

#[derive(Default)]
struct Scratch {
    u: Vec<f64>,
    uy1: Vec<f64>,
    uy2: Vec<f64>,
    uy1y2: Vec<f64>,
    mix: Vec<f64>,
}

/// A query specialized to one bound and one `|U|`.
struct Problem {
    theorem: Theorem,
    u: usize,
    y: usize,
    x: usize,
    cells: usize,
    weights: Vec<f64>,
    /// `x * y` target rows (zeros for undefined rows).
    target: Vec<f64>,
    deltas: [f64; 3],
    hx: f64,
}

#[derive(Debug, Clone, Copy)]
struct Eval {
    rates: RateConstraints,
    tv: [f64; 3],
}

impl Problem {
    fn new(q: &RegionQuery, theorem: Theorem, u: usize) -> Result<Self> {
        q.validate()?;
        let (x, y) = (q.x_size(), q.y_size());
        let mut target = vec![0.0; x * y];
        for r in 0..x {
            if let Some(row) = q.target_channel.row(r) {
                target[r * y..(r + 1) * y].copy_from_slice(row);
            }
        }
        Ok(Self {
            theorem,
            u,
            y,
            x,
            cells: u * y * y * y,
            weights: q.p0.probs().to_vec(),
            target,
            deltas: q.deltas(),
            hx: q.p0.entropy(),
        })
    }

    fn symbols(&self, cell: usize) -> [usize; 4] {
        let y = self.y;
        [cell / (y * y * y), (cell / (y * y)) % y, (cell / y) % y, cell % y]
    }

    fn row_stats(&self, x: usize, row: &[f64], s: &mut Scratch) -> RowStats {
        let (u, y) = (self.u, self.y);
        s.u.clear();
        s.u.resize(u, 0.0);
        s.uy1.clear();
        s.uy1.resize(u * y, 0.0);
        s.uy2.clear();
        s.uy2.resize(u * y, 0.0);
        let mut m = [vec![0.0; y], vec![0.0; y], vec![0.0; y]];
        for (cell, &p) in row.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let [cu, c1, c2, c12] = self.symbols(cell);
            s.u[cu] += p;
            s.uy1[cu * y + c1] += p;
            s.uy2[cu * y + c2] += p;
            m[0][c1] += p;
            m[1][c2] += p;
            m[2][c12] += p;
        }
        let t = &self.target[x * y..(x + 1) * y];
        let tv = m.map(|mi| 0.5 * mi.iter().zip(t).map(|(a, b)| (a - b).abs()).sum::<f64>());
        RowStats {
            ce: [
                entropy_of_probs(&s.u),
                entropy_of_probs(&s.uy1),
                entropy_of_probs(&s.uy2),
                entropy_of_probs(row),
            ],
            tv,
        }
    }

    /// Constraints from the `X`-averaged joint and weighted row entropies.
    fn finish(&self, mix: &[f64], ce: [f64; 4], s: &mut Scratch) -> RateConstraints {
        let (u, y) = (self.u, self.y);
        s.u.clear();
        s.u.resize(u, 0.0);
        s.uy1.clear();
        s.uy1.resize(u * y, 0.0);
        s.uy2.clear();
        s.uy2.resize(u * y, 0.0);
        s.uy1y2.clear();
        s.uy1y2.resize(u * y * y, 0.0);
        for (cell, &p) in mix.iter().enumerate() {
            let [cu, c1, c2, _] = self.symbols(cell);
            s.u[cu] += p;
            s.uy1[cu * y + c1] += p;
            s.uy2[cu * y + c2] += p;
            s.uy1y2[(cu * y + c1) * y + c2] += p;
        }
        let h_u = entropy_of_probs(&s.u);
        let h_uy1 = entropy_of_probs(&s.uy1);
        let h_uy2 = entropy_of_probs(&s.uy2);
        let h_uy1y2 = entropy_of_probs(&s.uy1y2);
        let h_all = entropy_of_probs(mix);
        RateConstraints::clamped(
            h_uy1 - ce[1],
            h_uy2 - ce[2],
            (h_u - ce[0]) + (h_all - ce[3]) + (h_uy1 + h_uy2 - h_uy1y2 - h_u),
        )
    }

    fn evaluate(&self, table: &[f64], s: &mut Scratch) -> Eval {
        let mut ce = [0.0; 4];
        let mut tv = [0.0; 3];
        let mut mix = std::mem::take(&mut s.mix);
        mix.clear();
        mix.resize(self.cells, 0.0);
        for (x, &w) in self.weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let row = &table[x * self.cells..(x + 1) * self.cells];
            let st = self.row_stats(x, row, s);
            for i in 0..4 {
                ce[i] += w * st.ce[i];
            }
            for i in 0..3 {
                tv[i] += w * st.tv[i];
            }
            for (m, &p) in mix.iter_mut().zip(row) {
                *m += w * p;
            }
        }
        let rates = self.finish(&mix, ce, s);
        s.mix = mix;
        Eval { rates, tv }
    }

    fn feasible(&self, tv: &[f64; 3]) -> bool {
        tv.iter().zip(&self.deltas).all(|(t, d)| *t <= d + IDENTITY_TOL)
    }

    fn witness(&self, table: &[f64], rates: RateConstraints) -> Witness {
        let y = self.y;
        let axes = match self.theorem {
            Theorem::One => vec![y, y, y],
            Theorem::Two => vec![self.u, y, y, y],
        };
        Witness {
            theorem: self.theorem,
            u_size: self.u,
            candidate: ConditionalPmf::new(vec![self.x], axes, table.to_vec())
                .expect("search keeps rows normalized"),
            constraints: rates,
        }
    }

    /// Reconstructions independent given `x`, each with the target law; `U`
    /// uniform and independent. Always feasible.
    fn target_table(&self) -> Vec<f64> {
        let y = self.y;
        let mut table = Vec::with_capacity(self.x * self.cells);
        for x in 0..self.x {
            let t = &self.target[x * y..(x + 1) * y];
            if self.weights[x] == 0.0 || t.iter().sum::<f64>() == 0.0 {
                table.extend(self.point_row());
                continue;
            }
            for cell in 0..self.cells {
                let [_, c1, c2, c12] = self.symbols(cell);
                table.push(t[c1] * t[c2] * t[c12] / self.u as f64);
            }
        }
        table
    }

    fn point_row(&self) -> Vec<f64> {
        let mut r = vec![0.0; self.cells];
        r[0] = 1.0;
        r
    }

    /// Cells that can carry mass in row `x` without breaking a zero radius.
    fn allowed_cells(&self, x: usize) -> Vec<usize> {
        let t = &self.target[x * self.y..(x + 1) * self.y];
        (0..self.cells)
            .filter(|&cell| {
                let sym = self.symbols(cell);
                (0..3).all(|i| self.deltas[i] > 0.0 || t[sym[i + 1]] > 0.0)
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// scalar objectives

#[derive(Debug, Clone, Copy)]
enum Objective {
    Sum,
    /// Minimize `R2` at `R1 = t`.
    FixR1(f64),
    /// Minimize `R1` at `R2 = t`.
    FixR2(f64),
    Violation(f64, f64),
}

impl Objective {
    fn value(&self, c: &RateConstraints) -> f64 {
        let (a, b, s) = (c.r1_min, c.r2_min, c.rsum_min);
        match *self {
            Objective::Sum => c.min_sum(),
            Objective::FixR1(t) => b.max(s - t) + PENALTY * (a - t).max(0.0),
            Objective::FixR2(t) => a.max(s - t) + PENALTY * (b - t).max(0.0),
            Objective::Violation(r1, r2) => c.violation(r1, r2),
        }
    }

    /// Achievable point certified by `c` for this objective, if any.
    fn point(&self, c: &RateConstraints) -> Option<(f64, f64)> {
        let (a, b, s) = (c.r1_min, c.r2_min, c.rsum_min);
        match *self {
            Objective::FixR1(t) if a <= t => Some((t, b.max(s - t))),
            Objective::FixR2(t) if b <= t => Some((a.max(s - t), t)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
struct Best {
    value: f64,
    table: Vec<f64>,
}

fn better(value: f64, table: &[f64], current: &Option<Best>) -> bool {
    match current {
        None => true,
        Some(b) => match value.total_cmp(&b.value) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => lex_cmp(table, &b.table).is_lt(),
        },
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn merge_best(a: Option<Best>, b: Option<Best>) -> Option<Best> {
    match (a, b) {
        (None, b) => b,
        (a, None) => a,
        (Some(a), Some(b)) => {
            if better(b.value, &b.table, &Some(a.clone())) {
                Some(b)
            } else {
                Some(a)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// simplex grid

fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128) / (i + 1) as u128)
}

fn compositions(units: u32, allowed: &[usize], cells: usize) -> Vec<Vec<f64>> {
    fn rec(i: usize, left: u32, units: u32, allowed: &[usize], cur: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
        let cell = allowed[i];
        if i + 1 == allowed.len() {
            cur[cell] = left as f64 / units as f64;
            out.push(cur.clone());
            cur[cell] = 0.0;
            return;
        }
        for v in (0..=left).rev() {
            cur[cell] = v as f64 / units as f64;
            rec(i + 1, left - v, units, allowed, cur, out);
        }
        cur[cell] = 0.0;
    }
    let mut out = Vec::new();
    rec(0, units, units, allowed, &mut vec![0.0; cells], &mut out);
    out
}

struct GridRows {
    /// Per `x`: candidate rows with their statistics.
    rows: Vec<Vec<(Vec<f64>, RowStats)>>,
    /// Per `x`: smallest weighted TV still to come from rows `x..`.
    min_rest: Vec<[f64; 3]>,
}

impl Problem {
    fn grid_size(&self, units: u32) -> u128 {
        (0..self.x)
            .filter(|&x| self.weights[x] > 0.0)
            .map(|x| {
                let c = self.allowed_cells(x).len() as u64;
                if c == 0 {
                    0
                } else {
                    binomial(units as u64 + c - 1, c - 1)
                }
            })
            .fold(1u128, u128::saturating_mul)
    }

    fn grid_rows(&self, units: u32) -> GridRows {
        let mut s = Scratch::default();
        let rows: Vec<Vec<(Vec<f64>, RowStats)>> = (0..self.x)
            .map(|x| {
                let w = self.weights[x];
                if w == 0.0 {
                    return vec![(self.point_row(), RowStats::default())];
                }
                let allowed = self.allowed_cells(x);
                if allowed.is_empty() {
                    return Vec::new();
                }
                compositions(units, &allowed, self.cells)
                    .into_iter()
                    .map(|r| {
                        let st = self.row_stats(x, &r, &mut s);
                        (r, st)
                    })
                    .filter(|(_, st)| (0..3).all(|i| w * st.tv[i] <= self.deltas[i] + IDENTITY_TOL))
                    .collect()
            })
            .collect();
        let mut min_rest = vec![[0.0; 3]; self.x + 1];
        for x in (0..self.x).rev() {
            let w = self.weights[x];
            for i in 0..3 {
                let m = rows[x].iter().map(|(_, st)| w * st.tv[i]).fold(f64::INFINITY, f64::min);
                min_rest[x][i] = min_rest[x + 1][i] + if m.is_finite() { m } else { 0.0 };
            }
        }
        GridRows { rows, min_rest }
    }
}

struct GridAcc {
    pareto: Pareto,
    best: Vec<Option<Best>>,
    count: u64,
}

impl GridAcc {
    fn new(n_obj: usize) -> Self {
        Self {
            pareto: Pareto::default(),
            best: vec![None; n_obj],
            count: 0,
        }
    }

    fn merge(mut self, other: GridAcc) -> GridAcc {
        self.pareto.merge(other.pareto);
        self.best = self.best.into_iter().zip(other.best).map(|(a, b)| merge_best(a, b)).collect();
        self.count += other.count;
        self
    }
}

struct Dfs<'a> {
    prob: &'a Problem,
    grid: &'a GridRows,
    objectives: &'a [Objective],
    chosen: Vec<usize>,
    mix: Vec<Vec<f64>>,
    scratch: Scratch,
}

impl Dfs<'_> {
    fn table(&self) -> Vec<f64> {
        self.chosen
            .iter()
            .enumerate()
            .flat_map(|(x, &i)| self.grid.rows[x][i].0.iter().copied())
            .collect()
    }

    fn visit(&mut self, x: usize, ce: [f64; 4], tv: [f64; 3], acc: &mut GridAcc) {
        let prob = self.prob;
        if x == prob.x {
            acc.count += 1;
            let mix = std::mem::take(&mut self.mix[x]);
            let rates = prob.finish(&mix, ce, &mut self.scratch);
            self.mix[x] = mix;
            let mut table: Option<Vec<f64>> = None;
            acc.pareto.add_candidate(&rates, None, || {
                prob.witness(table.get_or_insert_with(|| self.table()), rates)
            });
            for (k, obj) in self.objectives.iter().enumerate() {
                let v = obj.value(&rates);
                let t = table.get_or_insert_with(|| self.table());
                if better(v, t, &acc.best[k]) {
                    acc.best[k] = Some(Best { value: v, table: t.clone() });
                }
            }
            return;
        }
        let w = prob.weights[x];
        for i in 0..self.grid.rows[x].len() {
            let (row, st) = &self.grid.rows[x][i];
            let mut tv2 = tv;
            for k in 0..3 {
                tv2[k] += w * st.tv[k];
            }
            if (0..3).any(|k| tv2[k] + self.grid.min_rest[x + 1][k] > prob.deltas[k] + IDENTITY_TOL) {
                continue;
            }
            let mut ce2 = ce;
            for k in 0..4 {
                ce2[k] += w * st.ce[k];
            }
            let (head, tail) = self.mix.split_at_mut(x + 1);
            for ((m, &prev), &p) in tail[0].iter_mut().zip(&head[x]).zip(row) {
                *m = prev + w * p;
            }
            self.chosen.push(i);
            self.visit(x + 1, ce2, tv2, acc);
            self.chosen.pop();
        }
    }
}

fn enumerate_grid(prob: &Problem, units: u32, objectives: &[Objective]) -> GridAcc {
    let grid = prob.grid_rows(units);
    if grid.rows.iter().any(Vec::is_empty) {
        return GridAcc::new(objectives.len());
    }
    let new_dfs = || Dfs {
        prob,
        grid: &grid,
        objectives,
        chosen: Vec::with_capacity(prob.x),
        mix: vec![vec![0.0; prob.cells]; prob.x + 1],
        scratch: Scratch::default(),
    };
    // split on the first row so the work spreads across threads
    (0..grid.rows[0].len())
        .into_par_iter()
        .fold(
            || (new_dfs(), GridAcc::new(objectives.len())),
            |(mut dfs, mut acc), i| {
                let (row, st) = &grid.rows[0][i];
                let w = prob.weights[0];
                let tv = st.tv.map(|t| w * t);
                if (0..3).all(|k| tv[k] + grid.min_rest[1][k] <= prob.deltas[k] + IDENTITY_TOL) {
                    let ce = st.ce.map(|c| w * c);
                    for (m, &p) in dfs.mix[1].iter_mut().zip(row) {
                        *m = w * p;
                    }
                    dfs.chosen.push(i);
                    dfs.visit(1, ce, tv, &mut acc);
                    dfs.chosen.pop();
                }
                (dfs, acc)
            },
        )
        .map(|(_, acc)| acc)
        .reduce(|| GridAcc::new(objectives.len()), GridAcc::merge)
}

/// Exhaustive enumeration of the simplex grid with resolution `1/step` over
/// every row of the candidate (rows with zero source mass are fixed).
pub fn grid_oracle(q: &RegionQuery, theorem: Theorem, step: u32, u_size: usize, limit: u64) -> Result<RegionFrontier> {
    if step == 0 || u_size == 0 {
        return Err(Error::InvalidParameter("step and u_size must be >= 1".into()));
    }
    if theorem == Theorem::One && u_size != 1 {
        return Err(Error::InvalidParameter("the two-layer bound has no U".into()));
    }
    let prob = Problem::new(q, theorem, u_size)?;
    let candidates = prob.grid_size(step);
    if candidates > limit as u128 {
        return Err(Error::GridTooLarge { candidates, limit });
    }
    let acc = enumerate_grid(&prob, step, &[]);
    Ok(RegionFrontier {
        points: acc.pareto.into_points(),
        complete: true,
        meta: FrontierMeta {
            grid_steps: vec![step],
            u_sizes: vec![u_size],
            restarts: 0,
            sweep_points: 0,
            evaluations: acc.count,
            max_evaluations: limit,
        },
    })
}

// ---------------------------------------------------------------------------
// local search

struct Descent {
    pareto: Pareto,
    best: Best,
    evaluations: u64,
    exhausted: bool,
}

/// Pairwise mass moves within rows, halving the step when no move helps.
/// Only feasible candidates are ever accepted.
fn descend(prob: &Problem, start: Vec<f64>, obj: Objective, min_step: f64, budget: u64) -> Descent {
    let mut s = Scratch::default();
    let mut pareto = Pareto::default();
    let mut table = start;
    let e = prob.evaluate(&table, &mut s);
    let mut value = obj.value(&e.rates);
    let mut evaluations = 1u64;
    pareto.add_candidate(&e.rates, obj.point(&e.rates), || prob.witness(&table, e.rates));
    let active: Vec<usize> = (0..prob.x).filter(|&x| prob.weights[x] > 0.0).collect();
    let c = prob.cells;
    let mut step = 0.25f64.max(min_step);
    let mut exhausted = false;
    'outer: while step >= min_step {
        let mut improved = false;
        for &x in &active {
            for i in 0..c {
                for j in 0..c {
                    if i == j || table[x * c + i] <= 0.0 {
                        continue;
                    }
                    if evaluations >= budget {
                        exhausted = true;
                        break 'outer;
                    }
                    let (old_i, old_j) = (table[x * c + i], table[x * c + j]);
                    let d = step.min(old_i);
                    table[x * c + i] = if d == old_i { 0.0 } else { old_i - d };
                    table[x * c + j] = old_j + d;
                    let e = prob.evaluate(&table, &mut s);
                    evaluations += 1;
                    let v = obj.value(&e.rates);
                    if prob.feasible(&e.tv) && v < value - 1e-15 {
                        value = v;
                        improved = true;
                        pareto.add_candidate(&e.rates, obj.point(&e.rates), || prob.witness(&table, e.rates));
                    } else {
                        table[x * c + i] = old_i;
                        table[x * c + j] = old_j;
                    }
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    Descent {
        pareto,
        best: Best { value, table },
        evaluations,
        exhausted,
    }
}

/// A random feasible candidate: a random table pulled toward the target
/// table just far enough to satisfy every radius.
fn restart_table(prob: &Problem, seed: u64, index: u64, s: &mut Scratch) -> Vec<f64> {
    let mut rng = stream_rng(seed, TAG_RESTART, index);
    let base = prob.target_table();
    let mut rand_table = base.clone();
    for x in 0..prob.x {
        if prob.weights[x] == 0.0 {
            continue;
        }
        let allowed = prob.allowed_cells(x);
        let row = &mut rand_table[x * prob.cells..(x + 1) * prob.cells];
        row.iter_mut().for_each(|p| *p = 0.0);
        let mut total = 0.0;
        for &cell in &allowed {
            let g = -(1.0 - rng.gen::<f64>()).ln();
            row[cell] = g;
            total += g;
        }
        row.iter_mut().for_each(|p| *p /= total);
    }
    let mix = |theta: f64| -> Vec<f64> {
        base.iter()
            .zip(&rand_table)
            .map(|(b, r)| (1.0 - theta) * b + theta * r)
            .collect()
    };
    if prob.feasible(&prob.evaluate(&rand_table, s).tv) {
        return rand_table;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if prob.feasible(&prob.evaluate(&mix(mid), s).tv) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    mix(lo)
}

struct Pool {
    tables: Vec<Vec<f64>>,
    evaluations: u64,
}

fn start_pool(prob: &Problem, search: &SearchConfig, grid_best: &[Option<Best>]) -> Pool {
    let mut s = Scratch::default();
    let mut tables = vec![prob.target_table()];
    tables.extend(grid_best.iter().flatten().map(|b| b.table.clone()));
    for r in 0..search.restarts {
        tables.push(restart_table(prob, search.seed ^ prob.u as u64, r as u64, &mut s));
    }
    Pool {
        evaluations: (search.restarts * 31) as u64,
        tables,
    }
}

fn best_start(prob: &Problem, pool: &[Vec<f64>], obj: Objective) -> Vec<f64> {
    let mut s = Scratch::default();
    let mut best: Option<Best> = None;
    for t in pool {
        let e = prob.evaluate(t, &mut s);
        if !prob.feasible(&e.tv) {
            continue;
        }
        let v = obj.value(&e.rates);
        if better(v, t, &best) {
            best = Some(Best { value: v, table: t.clone() });
        }
    }
    best.map_or_else(|| prob.target_table(), |b| b.table)
}

/// Largest grid resolution `<= step` whose candidate count fits `limit`.
fn fitting_step(prob: &Problem, step: u32, limit: u64) -> Option<u32> {
    (1..=step).rev().find(|&k| prob.grid_size(k) <= limit as u128)
}

fn sweep_objectives(hx: f64, points: usize) -> Vec<Objective> {
    let mut objs = vec![Objective::Sum];
    for j in 0..=points {
        let t = if points == 0 { hx } else { hx * j as f64 / points as f64 };
        objs.push(Objective::FixR1(t));
        objs.push(Objective::FixR2(t));
    }
    objs
}

/// Grid, restarts and coordinate descent over each `|U|` of the sweep.
pub fn trace_frontier(q: &RegionQuery, theorem: Theorem, search: &SearchConfig) -> Result<RegionFrontier> {
    search.validate()?;
    q.validate()?;
    let u_sizes = search.u_sizes_for(theorem, q.y_size());
    let per_u = (search.max_evaluations / u_sizes.len() as u64).max(1);
    let mut total = Pareto::default();
    let mut meta = FrontierMeta {
        u_sizes: u_sizes.clone(),
        restarts: search.restarts,
        sweep_points: search.sweep_points,
        max_evaluations: search.max_evaluations,
        ..FrontierMeta::default()
    };
    let mut complete = true;
    for &u in &u_sizes {
        let prob = Problem::new(q, theorem, u)?;
        let objectives = sweep_objectives(prob.hx, search.sweep_points);
        let step = fitting_step(&prob, search.grid_step, search.grid_limit.min(per_u));
        let grid = match step {
            Some(k) => enumerate_grid(&prob, k, &objectives),
            None => GridAcc::new(objectives.len()),
        };
        meta.grid_steps.push(step.unwrap_or(0));
        let pool = start_pool(&prob, search, &grid.best);
        let mut tasks: Vec<(Vec<f64>, Objective)> = objectives
            .iter()
            .map(|&o| (best_start(&prob, &pool.tables, o), o))
            .collect();
        let restarts = &pool.tables[pool.tables.len() - search.restarts..];
        tasks.extend(restarts.iter().map(|t| (t.clone(), Objective::Sum)));
        let used = grid.count + pool.evaluations;
        let allot = (per_u.saturating_sub(used) / tasks.len() as u64).max(1);
        let descents: Vec<Descent> = tasks
            .into_par_iter()
            .map(|(start, obj)| descend(&prob, start, obj, search.min_step, allot))
            .collect();
        meta.evaluations += used;
        total.merge(grid.pareto);
        for d in descents {
            meta.evaluations += d.evaluations;
            complete &= !d.exhausted;
            total.merge(d.pareto);
        }
    }
    Ok(RegionFrontier {
        points: total.into_points(),
        complete,
        meta,
    })
}

/// Searches for a feasible candidate whose constraints admit `(r1, r2)`.
/// `None` means none was found within the budget, not that none exists.
pub fn point_achievable(
    q: &RegionQuery,
    r1: f64,
    r2: f64,
    theorem: Theorem,
    search: &SearchConfig,
) -> Result<Option<Witness>> {
    search.validate()?;
    if !(r1 >= 0.0 && r2 >= 0.0) {
        return Err(Error::InvalidParameter(format!("rates must be nonnegative, got ({r1}, {r2})")));
    }
    let obj = Objective::Violation(r1, r2);
    let u_sizes = search.u_sizes_for(theorem, q.y_size());
    let per_u = (search.max_evaluations / u_sizes.len() as u64).max(1);
    for &u in &u_sizes {
        let prob = Problem::new(q, theorem, u)?;
        let step = fitting_step(&prob, search.grid_step, search.grid_limit.min(per_u));
        let grid = match step {
            Some(k) => enumerate_grid(&prob, k, &[obj]),
            None => GridAcc::new(1),
        };
        let pool = start_pool(&prob, search, &grid.best);
        let mut starts = vec![best_start(&prob, &pool.tables, obj)];
        starts.extend(pool.tables[pool.tables.len() - search.restarts..].iter().cloned());
        let allot = (per_u.saturating_sub(grid.count + pool.evaluations) / starts.len() as u64).max(1);
        let mut s = Scratch::default();
        for start in starts {
            let e = prob.evaluate(&start, &mut s);
            let d = if obj.value(&e.rates) <= RATE_TOL {
                Descent {
                    pareto: Pareto::default(),
                    best: Best { value: 0.0, table: start },
                    evaluations: 0,
                    exhausted: false,
                }
            } else {
                descend(&prob, start, obj, search.min_step, allot)
            };
            if d.best.value <= RATE_TOL {
                let e = prob.evaluate(&d.best.table, &mut s);
                return Ok(Some(prob.witness(&d.best.table, e.rates)));
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LN2: f64 = std::f64::consts::LN_2;

    fn binary_identity(deltas: [f64; 3]) -> RegionQuery {
        RegionQuery::identity_target(Pmf::uniform(2).unwrap(), deltas).unwrap()
    }

    fn identity2() -> ConditionalPmf {
        ConditionalPmf::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()
    }

    fn constant2() -> ConditionalPmf {
        ConditionalPmf::from_rows(vec![vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap()
    }

    fn uniform2() -> ConditionalPmf {
        ConditionalPmf::from_rows(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn feasibility_examples() {
        let q = binary_identity([0.49, 0.0, 0.0]);
        let cand = CandidateTh1::from_channels(&constant2(), &identity2(), &identity2()).unwrap();
        assert!(!feasible_th1(&cand, &q).unwrap());
        let q = binary_identity([0.5, 0.0, 0.0]);
        assert!(feasible_th1(&cand, &q).unwrap());
        let any = CandidateTh1::from_channels(&uniform2(), &constant2(), &uniform2()).unwrap();
        assert!(feasible_th1(&any, &binary_identity([1.0; 3])).unwrap());
        let exact = CandidateTh1::from_channels(&identity2(), &identity2(), &identity2()).unwrap();
        assert!(feasible_th1(&exact, &binary_identity([0.0; 3])).unwrap());
    }

    #[test]
    fn constraint_examples() {
        let p0 = Pmf::uniform(2).unwrap();
        let indep = CandidateTh1::from_channels(&uniform2(), &uniform2(), &uniform2()).unwrap();
        let c = th1_constraints(&p0, &indep).unwrap();
        assert!(c.r1_min.abs() < 1e-12 && c.r2_min.abs() < 1e-12 && c.rsum_min.abs() < 1e-12);

        let forced = CandidateTh1::from_channels(&identity2(), &identity2(), &identity2()).unwrap();
        let c = th1_constraints(&p0, &forced).unwrap();
        assert!(close(c.r1_min, LN2, 1e-12) && close(c.r2_min, LN2, 1e-12));
        assert!(close(c.rsum_min, 2.0 * LN2, 1e-12));

        let refine = CandidateTh1::from_channels(&constant2(), &constant2(), &identity2()).unwrap();
        let c = th1_constraints(&p0, &refine).unwrap();
        assert!(c.r1_min.abs() < 1e-12 && c.r2_min.abs() < 1e-12);
        assert!(close(c.rsum_min, LN2, 1e-12));
    }

    #[test]
    fn lifting_and_marginalizing_u() {
        let p0 = Pmf::new(vec![0.3, 0.7]).unwrap();
        let c1 = ConditionalPmf::from_rows(vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let c2 = ConditionalPmf::from_rows(vec![vec![0.6, 0.4], vec![0.3, 0.7]]).unwrap();
        let cand = CandidateTh1::from_channels(&c1, &c2, &identity2()).unwrap();
        let lifted = CandidateTh2::from_th1(&cand);
        let a = th1_constraints(&p0, &cand).unwrap();
        let b = th2_constraints(&p0, &lifted).unwrap();
        assert!(close(a.r1_min, b.r1_min, 1e-12));
        assert!(close(a.r2_min, b.r2_min, 1e-12));
        assert!(close(a.rsum_min, b.rsum_min, 1e-12));
        assert_eq!(lifted.marginalize_u(), cand);
    }

    #[test]
    fn independent_u_adds_nothing() {
        let p0 = Pmf::new(vec![0.4, 0.6]).unwrap();
        let c1 = ConditionalPmf::from_rows(vec![vec![0.7, 0.3], vec![0.1, 0.9]]).unwrap();
        let cand = CandidateTh1::from_channels(&c1, &uniform2(), &c1).unwrap();
        let pu = [0.25, 0.75];
        let mut table = Vec::new();
        for x in 0..2 {
            let row = cand.cond.row(x).unwrap();
            for &w in &pu {
                table.extend(row.iter().map(|p| w * p));
            }
        }
        let th2 = CandidateTh2::new(ConditionalPmf::new(vec![2], vec![2, 2, 2, 2], table).unwrap()).unwrap();
        let a = th1_constraints(&p0, &cand).unwrap();
        let b = th2_constraints(&p0, &th2).unwrap();
        assert!(close(a.rsum_min, b.rsum_min, 1e-9) && close(a.r1_min, b.r1_min, 1e-9));
    }

    #[test]
    fn corners_and_admission() {
        let c = RateConstraints {
            r1_min: 0.2,
            r2_min: 0.3,
            rsum_min: 1.0,
        };
        assert_eq!(c.corners(), [(0.2, 0.8), (0.7, 0.3)]);
        assert!(c.admits(0.5, 0.5));
        assert!(!c.admits(0.5, 0.4));
        assert_eq!(c.min_sum(), 1.0);
    }

    #[test]
    fn pareto_keeps_minimal_points() {
        let w = |t: f64| Witness {
            theorem: Theorem::One,
            u_size: 1,
            candidate: ConditionalPmf::from_rows(vec![vec![t, 1.0 - t]]).unwrap(),
            constraints: RateConstraints {
                r1_min: 0.0,
                r2_min: 0.0,
                rsum_min: 0.0,
            },
        };
        let pts = |v: &[(f64, f64, f64)]| RegionFrontier {
            points: v.iter().map(|&(a, b, t)| FrontierPoint { r1: a, r2: b, witness: w(t) }).collect(),
            ..RegionFrontier::empty()
        };
        let a = pts(&[(0.0, 1.0, 0.1), (0.5, 0.5, 0.2), (0.6, 0.6, 0.3)]);
        let b = pts(&[(1.0, 0.0, 0.4), (0.5, 0.5, 0.05), (0.2, 1.5, 0.6)]);
        let ab = a.clone().merge(b.clone());
        let ba = b.merge(a);
        assert_eq!(ab, ba);
        let coords: Vec<(f64, f64)> = ab.points.iter().map(|p| (p.r1, p.r2)).collect();
        assert_eq!(coords, vec![(0.0, 1.0), (0.5, 0.5), (1.0, 0.0)]);
        assert_eq!(ab.points[1].witness, w(0.05));
        assert!(ab.is_pareto());
    }

    #[test]
    fn fast_evaluator_matches_information_routines() {
        let p0 = Pmf::new(vec![0.35, 0.65]).unwrap();
        let target = ConditionalPmf::from_rows(vec![vec![0.8, 0.2], vec![0.3, 0.7]]).unwrap();
        let q = RegionQuery::new(p0.clone(), target, 1.0, 1.0, 1.0).unwrap();
        let mut s = Scratch::default();
        for u in [1usize, 2, 3] {
            let prob = Problem::new(&q, Theorem::Two, u).unwrap();
            for r in 0..5 {
                let t = restart_table(&prob, 9, r, &mut s);
                let fast = prob.evaluate(&t, &mut s).rates;
                let slow = th2_constraints(&p0, &prob.witness(&t, fast).as_th2().unwrap()).unwrap();
                assert!(close(fast.r1_min, slow.r1_min, 1e-12));
                assert!(close(fast.r2_min, slow.r2_min, 1e-12));
                assert!(close(fast.rsum_min, slow.rsum_min, 1e-12));
            }
        }
    }

    #[test]
    fn unit_radii_give_origin() {
        let q = binary_identity([1.0; 3]);
        let f = trace_frontier(&q, Theorem::One, &SearchConfig::default()).unwrap();
        assert_eq!(f.points.len(), 1);
        assert!(f.points[0].r1.abs() < 1e-12 && f.points[0].r2.abs() < 1e-12);
        assert!(point_achievable(&q, 0.0, 0.0, Theorem::One, &SearchConfig::default())
            .unwrap()
            .is_some());
    }

    #[test]
    fn forced_candidate_point_checks() {
        let q = binary_identity([0.0; 3]);
        let search = SearchConfig {
            restarts: 2,
            ..SearchConfig::default()
        };
        let w = point_achievable(&q, LN2, LN2, Theorem::One, &search).unwrap().unwrap();
        assert!(feasible_th1(&w.as_th1().unwrap(), &q).unwrap());
        assert!(point_achievable(&q, LN2, LN2 - 0.1, Theorem::One, &search).unwrap().is_none());
    }

    #[test]
    fn grid_oracle_rejects_large_grids() {
        let q = binary_identity([1.0; 3]);
        assert!(matches!(
            grid_oracle(&q, Theorem::One, 32, 1, 1_000_000),
            Err(Error::GridTooLarge { .. })
        ));
    }

    #[test]
    fn finer_grid_never_worse() {
        let q = binary_identity([0.25, 0.25, 0.1]);
        let coarse = grid_oracle(&q, Theorem::One, 2, 1, GRID_ORACLE_LIMIT).unwrap();
        let fine = grid_oracle(&q, Theorem::One, 4, 1, GRID_ORACLE_LIMIT).unwrap();
        assert!(fine.covers(&coarse, 0.0));
    }

    #[test]
    fn trace_beats_coarse_grid() {
        let q = binary_identity([0.3, 0.2, 0.1]);
        let search = SearchConfig {
            grid_step: 2,
            sweep_points: 8,
            restarts: 2,
            ..SearchConfig::default()
        };
        let f = trace_frontier(&q, Theorem::One, &search).unwrap();
        let g = grid_oracle(&q, Theorem::One, 2, 1, GRID_ORACLE_LIMIT).unwrap();
        assert!(f.covers(&g, 1e-12));
        assert!(f.is_pareto());
        assert!(f.complete);
        for p in &f.points {
            assert!(feasible_th1(&p.witness.as_th1().unwrap(), &q).unwrap());
        }
    }

    #[test]
    fn trace_is_reproducible() {
        let q = binary_identity([0.3, 0.3, 0.2]);
        let search = SearchConfig {
            grid_step: 2,
            sweep_points: 4,
            restarts: 3,
            seed: 5,
            u_sizes: Some(vec![1, 2]),
            ..SearchConfig::default()
        };
        let a = trace_frontier(&q, Theorem::Two, &search).unwrap();
        let b = trace_frontier(&q, Theorem::Two, &search).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tiny_budget_marks_incomplete() {
        let q = binary_identity([0.3, 0.3, 0.2]);
        let search = SearchConfig {
            grid_step: 2,
            max_evaluations: 100,
            ..SearchConfig::default()
        };
        let f = trace_frontier(&q, Theorem::One, &search).unwrap();
        assert!(!f.complete);
        assert!(!f.points.is_empty());
    }

    #[test]
    fn query_validation() {
        assert!(RegionQuery::identity_target(Pmf::uniform(2).unwrap(), [1.5, 0.0, 0.0]).is_err());
        let p0 = Pmf::uniform(3).unwrap();
        assert!(RegionQuery::new(p0, identity2(), 0.1, 0.1, 0.1).is_err());
        assert!("3".parse::<Theorem>().is_err());
        assert_eq!(serde_json::to_string(&Theorem::Two).unwrap(), "2");
    }

    fn arb_row(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, len).prop_map(|v| {
            let v: Vec<f64> = v.iter().map(|x| x + 1e-3).collect();
            let s: f64 = v.iter().sum();
            v.iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn monotone_in_radius(d in prop::array::uniform3(0.0f64..0.5), bump in 0.0f64..0.3, which in 0usize..3) {
            let mut big = d;
            big[which] = (big[which] + bump).min(1.0);
            let small = grid_oracle(&binary_identity(d), Theorem::One, 2, 1, GRID_ORACLE_LIMIT).unwrap();
            let large = grid_oracle(&binary_identity(big), Theorem::One, 2, 1, GRID_ORACLE_LIMIT).unwrap();
            prop_assert!(large.covers(&small, 0.0));
        }

        #[test]
        fn rates_nonnegative_and_lift_agrees(r0 in arb_row(8), r1 in arb_row(8), p in 0.05f64..0.95) {
            let p0 = Pmf::new(vec![p, 1.0 - p]).unwrap();
            let cand = CandidateTh1::new(ConditionalPmf::new(vec![2], vec![2, 2, 2], [r0, r1].concat()).unwrap()).unwrap();
            let a = th1_constraints(&p0, &cand).unwrap();
            let b = th2_constraints(&p0, &CandidateTh2::from_th1(&cand)).unwrap();
            prop_assert!(a.r1_min >= -1e-12 && a.r2_min >= -1e-12 && a.rsum_min >= -1e-12);
            prop_assert!((a.r1_min - b.r1_min).abs() < 1e-9);
            prop_assert!((a.r2_min - b.r2_min).abs() < 1e-9);
            prop_assert!((a.rsum_min - b.rsum_min).abs() < 1e-9);
        }

        #[test]
        fn target_marginals_always_feasible(r0 in arb_row(2), r1 in arb_row(2), d in prop::array::uniform3(0.0f64..1.0)) {
            let target = ConditionalPmf::from_rows(vec![r0, r1]).unwrap();
            let q = RegionQuery::new(Pmf::uniform(2).unwrap(), target.clone(), d[0], d[1], d[2]).unwrap();
            let cand = CandidateTh1::from_channels(&target, &target, &target).unwrap();
            prop_assert!(feasible_th1(&cand, &q).unwrap());
        }
    }
}
