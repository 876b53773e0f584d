//! Universality classification of update families.
//!
//! Directions are primitive integer vectors ordered by angle with exact cross products.
//! A direction `u` is stable when no rule fits in the open half-plane `{x : <x,u> < 0}`.
//! The difficulty of an isolated stable direction is found by a bounded search over
//! small sets of extra vacancies next to an empty half-plane.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{param, Error, Result};
use crate::family::UpdateFamily;

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Returns `(g, x, y)` with `a x + b y = g = gcd(a, b)`.
fn ext_gcd(a: i64, b: i64) -> (i64, i64, i64) {
    if b == 0 {
        (a.abs(), a.signum(), 0)
    } else {
        let (g, x, y) = ext_gcd(b, a.rem_euclid(b));
        (g, y, x - a.div_euclid(b) * y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Direction {
    pub x: i64,
    pub y: i64,
}

impl Direction {
    pub fn new(x: i64, y: i64) -> Result<Self> {
        if (x, y) == (0, 0) {
            return param("zero direction");
        }
        if gcd(x, y) != 1 {
            return param(format!("direction ({x},{y}) is not primitive"));
        }
        Ok(Direction { x, y })
    }

    /// Direction of a nonzero vector.
    pub fn of(x: i64, y: i64) -> Self {
        let g = gcd(x, y);
        assert!(g != 0, "zero vector has no direction");
        Direction { x: x / g, y: y / g }
    }

    pub fn neg(self) -> Self {
        Direction { x: -self.x, y: -self.y }
    }

    /// Rotation by a quarter turn counter-clockwise.
    pub fn rot90(self) -> Self {
        Direction { x: -self.y, y: self.x }
    }

    pub fn dot(self, v: [i64; 2]) -> i64 {
        self.x * v[0] + self.y * v[1]
    }

    pub fn cross(self, o: Direction) -> i64 {
        self.x * o.y - self.y * o.x
    }

    fn half(self) -> u8 {
        if self.y > 0 || (self.y == 0 && self.x > 0) {
            0
        } else {
            1
        }
    }

    /// Angle in degrees, for display only.
    pub fn degrees(self) -> f64 {
        let a = (self.y as f64).atan2(self.x as f64).to_degrees();
        if a < 0.0 {
            a + 360.0
        } else {
            a
        }
    }
}

impl Ord for Direction {
    fn cmp(&self, o: &Self) -> Ordering {
        self.half().cmp(&o.half()).then_with(|| 0.cmp(&self.cross(*o)))
    }
}

impl PartialOrd for Direction {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// A direction strictly inside the counter-clockwise arc from `a` to `b`.
fn interior(a: Direction, b: Direction) -> Direction {
    if a == b {
        return a.neg();
    }
    match a.cross(b).cmp(&0) {
        Ordering::Greater => Direction::of(a.x + b.x, a.y + b.y),
        Ordering::Less => Direction::of(-(a.x + b.x), -(a.y + b.y)),
        Ordering::Equal => a.rot90(),
    }
}

/// A subset of the circle with finitely many boundary points.
///
/// `crit` lists the boundary directions in angular order; `point[i]` says whether
/// `crit[i]` belongs to the set and `gap[i]` whether the open arc from `crit[i]` to the
/// next critical direction does. With no critical directions the set is empty or full.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArcSet {
    crit: Vec<Direction>,
    point: Vec<bool>,
    gap: Vec<bool>,
    uniform: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ArcPiece {
    Full,
    Point(Direction),
    Arc { from: Direction, from_closed: bool, to: Direction, to_closed: bool },
}

impl ArcSet {
    pub fn empty() -> Self {
        ArcSet { crit: vec![], point: vec![], gap: vec![], uniform: false }
    }

    pub fn full() -> Self {
        ArcSet { uniform: true, ..ArcSet::empty() }
    }

    /// The set of directions satisfying `pred`, which must be constant on every open arc
    /// between consecutive elements of `crits`.
    pub fn from_predicate(mut crits: Vec<Direction>, pred: impl Fn(Direction) -> bool) -> Self {
        crits.sort();
        crits.dedup();
        if crits.is_empty() {
            return ArcSet { uniform: pred(Direction { x: 1, y: 0 }), ..ArcSet::empty() };
        }
        let k = crits.len();
        let point = crits.iter().map(|&c| pred(c)).collect();
        let gap = (0..k).map(|i| pred(interior(crits[i], crits[(i + 1) % k]))).collect();
        let mut s = ArcSet { crit: crits, point, gap, uniform: false };
        s.normalize();
        s
    }

    fn normalize(&mut self) {
        loop {
            let k = self.crit.len();
            if k == 0 {
                return;
            }
            let redundant =
                (0..k).find(|&i| self.point[i] == self.gap[i] && self.gap[i] == self.gap[(i + k - 1) % k]);
            let Some(i) = redundant else { return };
            if k == 1 {
                self.uniform = self.gap[0];
                self.crit.clear();
                self.point.clear();
                self.gap.clear();
                return;
            }
            self.crit.remove(i);
            self.point.remove(i);
            self.gap.remove(i);
        }
    }

    pub fn criticals(&self) -> &[Direction] {
        &self.crit
    }

    pub fn contains(&self, d: Direction) -> bool {
        let k = self.crit.len();
        if k == 0 {
            return self.uniform;
        }
        match self.crit.binary_search(&d) {
            Ok(i) => self.point[i],
            Err(p) => self.gap[(p + k - 1) % k],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.crit.is_empty() && !self.uniform
    }

    pub fn is_full(&self) -> bool {
        self.crit.is_empty() && self.uniform
    }

    /// True when the set has nonempty interior, i.e. contains an open arc.
    pub fn has_interior(&self) -> bool {
        if self.crit.is_empty() {
            self.uniform
        } else {
            self.gap.iter().any(|&g| g)
        }
    }

    pub fn is_finite(&self) -> bool {
        !self.has_interior()
    }

    /// Members that are not limits of other members.
    pub fn isolated_points(&self) -> Vec<Direction> {
        let k = self.crit.len();
        (0..k)
            .filter(|&i| self.point[i] && !self.gap[i] && !self.gap[(i + k - 1) % k])
            .map(|i| self.crit[i])
            .collect()
    }

    pub fn is_isolated(&self, d: Direction) -> bool {
        self.isolated_points().contains(&d)
    }

    pub fn complement(&self) -> Self {
        ArcSet {
            crit: self.crit.clone(),
            point: self.point.iter().map(|b| !b).collect(),
            gap: self.gap.iter().map(|b| !b).collect(),
            uniform: !self.uniform,
        }
    }

    fn combine(&self, other: &ArcSet, op: impl Fn(bool, bool) -> bool) -> Self {
        let crits = self.crit.iter().chain(&other.crit).copied().collect();
        ArcSet::from_predicate(crits, |d| op(self.contains(d), other.contains(d)))
    }

    pub fn union(&self, other: &ArcSet) -> Self {
        self.combine(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &ArcSet) -> Self {
        self.combine(other, |a, b| a && b)
    }

    /// The open semicircle of directions strictly counter-clockwise of `d` and within a half turn.
    pub fn open_semicircle(d: Direction) -> Self {
        ArcSet::from_predicate(vec![d, d.neg()], |u| d.cross(u) > 0)
    }

    /// Image under `u -> -u`.
    pub fn negated(&self) -> Self {
        let crits = self.crit.iter().map(|c| c.neg()).collect();
        ArcSet::from_predicate(crits, |u| self.contains(u.neg()))
    }

    /// Image under a quarter turn.
    pub fn rotated(&self) -> Self {
        let crits = self.crit.iter().map(|c| c.rot90()).collect();
        ArcSet::from_predicate(crits, |u| self.contains(Direction { x: u.y, y: -u.x }))
    }

    /// True when the set holds two directions that are neither equal nor opposite.
    pub fn has_non_opposite_pair(&self) -> bool {
        if self.has_interior() {
            return true;
        }
        let pts = self.isolated_points();
        pts.iter().any(|a| pts.iter().any(|b| a != b && *b != a.neg()))
    }

    pub fn pieces(&self) -> Vec<ArcPiece> {
        let k = self.crit.len();
        if k == 0 {
            return if self.uniform { vec![ArcPiece::Full] } else { vec![] };
        }
        let mut out = Vec::new();
        for i in 0..k {
            let prev = (i + k - 1) % k;
            if self.point[i] && !self.gap[i] && !self.gap[prev] {
                out.push(ArcPiece::Point(self.crit[i]));
            }
            if self.gap[i] && !(self.gap[prev] && self.point[i]) {
                let mut j = (i + 1) % k;
                while self.point[j] && self.gap[j] && j != i {
                    j = (j + 1) % k;
                }
                out.push(ArcPiece::Arc {
                    from: self.crit[i],
                    from_closed: self.point[i],
                    to: self.crit[j],
                    to_closed: self.point[j],
                });
            }
        }
        out
    }
}

/// `{u : for every rule U some v in U has <v,u> >= 0}`.
pub fn stable_set(family: &UpdateFamily) -> Result<ArcSet> {
    if family.dim() != 2 {
        return param("stable directions are defined for two-dimensional families");
    }
    let mut crits = Vec::new();
    for o in family.offsets() {
        let n = Direction::of(o[0] as i64, o[1] as i64).rot90();
        crits.push(n);
        crits.push(n.neg());
    }
    let rules = family.rules();
    Ok(ArcSet::from_predicate(crits, |u| {
        rules.iter().all(|r| r.iter().any(|o| u.dot([o[0] as i64, o[1] as i64]) >= 0))
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoughClass {
    SupercriticalRooted,
    SupercriticalUnrooted,
    Critical,
    SubcriticalNontrivial,
    SubcriticalTrivial,
}

impl RoughClass {
    pub fn label(self) -> &'static str {
        match self {
            RoughClass::SupercriticalRooted => "supercritical-rooted",
            RoughClass::SupercriticalUnrooted => "supercritical-unrooted",
            RoughClass::Critical => "critical",
            RoughClass::SubcriticalNontrivial => "subcritical-nontrivial",
            RoughClass::SubcriticalTrivial => "subcritical-trivial",
        }
    }
}

/// Starting directions of open semicircles covering every combinatorial position
/// relative to the critical directions of `s`.
fn semicircle_candidates(s: &ArcSet) -> Vec<Direction> {
    let mut p: Vec<Direction> = s.criticals().iter().flat_map(|&c| [c, c.neg()]).collect();
    p.sort();
    p.dedup();
    if p.is_empty() {
        return vec![Direction { x: 1, y: 0 }];
    }
    let k = p.len();
    let mut out = p.clone();
    out.extend((0..k).map(|i| interior(p[i], p[(i + 1) % k])));
    out.sort();
    out.dedup();
    out
}

fn semicircle_meet(s: &ArcSet, d: Direction) -> ArcSet {
    s.intersection(&ArcSet::open_semicircle(d))
}

pub fn rough_class(stable: &ArcSet) -> RoughClass {
    let meets: Vec<ArcSet> = semicircle_candidates(stable).into_iter().map(|d| semicircle_meet(stable, d)).collect();
    if meets.iter().any(|m| m.is_empty()) {
        if stable.has_non_opposite_pair() {
            RoughClass::SupercriticalRooted
        } else {
            RoughClass::SupercriticalUnrooted
        }
    } else if meets.iter().any(|m| m.is_finite()) {
        RoughClass::Critical
    } else if stable.is_full() {
        RoughClass::SubcriticalTrivial
    } else {
        RoughClass::SubcriticalNontrivial
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    /// Unstable direction.
    Zero,
    /// A set of this size was found whose closure with the half-plane is infinite, and no
    /// smaller set inside the search window works.
    CertifiedAtMost(u32),
    /// No set of size below this value works inside the window; the budget ran out.
    AtLeast(u32),
    Infinite,
}

impl Difficulty {
    fn rank(self) -> u64 {
        match self {
            Difficulty::Zero => 0,
            Difficulty::CertifiedAtMost(k) | Difficulty::AtLeast(k) => k as u64,
            Difficulty::Infinite => u64::MAX,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SearchParams {
    /// Side of the square window holding the extra vacancies; at least 4 * range.
    pub window: usize,
    /// Largest set size tried.
    pub kmax: u32,
    /// Cap on closure evaluations per set size.
    pub max_closures: u64,
}

impl SearchParams {
    pub fn for_family(family: &UpdateFamily) -> Self {
        SearchParams { window: 24 * family.range() as usize, kmax: 4, max_closures: 20_000_000 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DifficultyResult {
    pub direction: Direction,
    pub difficulty: Difficulty,
    /// Witness set in lattice coordinates when a certified bound was found.
    pub witness: Option<Vec<[i64; 2]>>,
}

/// Closure helper on the strip `s in [-W, 2W), h in [0, 3W)` of the basis adapted to `u`.
struct Strip {
    w: i32,
    rules: Vec<Vec<(i32, i32)>>,
    offsets: Vec<(i32, i32)>,
}

impl Strip {
    fn cols(&self) -> i32 {
        3 * self.w
    }

    #[inline]
    fn cell(&self, s: i32, h: i32) -> Option<usize> {
        if s < -self.w || s >= 2 * self.w || h < 0 || h >= 3 * self.w {
            None
        } else {
            Some(((h * self.cols()) + s + self.w) as usize)
        }
    }

    #[inline]
    fn is_empty(&self, stamp: &[u32], g: u32, s: i32, h: i32) -> bool {
        if h < 0 {
            return true;
        }
        self.cell(s, h).is_some_and(|c| stamp[c] == g)
    }

    /// Whether the closure of the half-plane plus `z` holds a lateral translate of `z`.
    fn succeeds(&self, z: &[(i32, i32)], stamp: &mut [u32], g: u32, queue: &mut Vec<(i32, i32)>) -> bool {
        queue.clear();
        for &(s, h) in z {
            stamp[self.cell(s, h).unwrap()] = g;
            queue.push((s, h));
        }
        let mut head = 0;
        while head < queue.len() {
            let (ys, yh) = queue[head];
            head += 1;
            for &(vs, vh) in &self.offsets {
                let (xs, xh) = (ys - vs, yh - vh);
                let Some(c) = self.cell(xs, xh) else { continue };
                if stamp[c] == g {
                    continue;
                }
                let fires = self
                    .rules
                    .iter()
                    .any(|r| r.iter().all(|&(rs, rh)| self.is_empty(stamp, g, xs + rs, xh + rh)));
                if fires {
                    stamp[c] = g;
                    queue.push((xs, xh));
                }
            }
        }
        let (s0, h0) = z[0];
        queue.iter().any(|&(ps, ph)| {
            ph == h0 && ps != s0 && z.iter().all(|&(s, h)| self.is_empty(stamp, g, s + ps - s0, h))
        })
    }
}

fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u64, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Bounded search for the difficulty of `u`.
///
/// Success means the emptied set contains `Z + s t` for some `s != 0`, where `t` spans the
/// boundary line of the half-plane; by translation invariance the closure is then infinite.
pub fn difficulty_bounded(family: &UpdateFamily, u: Direction, params: SearchParams) -> Result<DifficultyResult> {
    let stable = stable_set(family)?;
    difficulty_with(family, &stable, u, params)
}

fn difficulty_with(family: &UpdateFamily, stable: &ArcSet, u: Direction, params: SearchParams) -> Result<DifficultyResult> {
    let range = family.range() as usize;
    if params.window < 4 * range {
        return param(format!("window {} < 4 * range = {}", params.window, 4 * range));
    }
    if params.kmax == 0 {
        return param("kmax must be at least 1");
    }
    let done = |d| Ok(DifficultyResult { direction: u, difficulty: d, witness: None });
    if !stable.contains(u) {
        return done(Difficulty::Zero);
    }
    if !stable.is_isolated(u) {
        return done(Difficulty::Infinite);
    }
    let t = u.rot90();
    let (g, a, b) = ext_gcd(u.x, u.y);
    debug_assert_eq!(g, 1);
    let w = (a, b);
    let to_sh = |o: [i64; 2]| -> (i32, i32) {
        let h = u.dot(o);
        let s = -(o[0] * w.1 - o[1] * w.0);
        debug_assert_eq!([s * t.x + h * w.0, s * t.y + h * w.1], o);
        (s as i32, h as i32)
    };
    let to_xy = |(s, h): (i32, i32)| [s as i64 * t.x + h as i64 * w.0, s as i64 * t.y + h as i64 * w.1];
    let rules: Vec<Vec<(i32, i32)>> =
        family.rules().iter().map(|r| r.iter().map(|o| to_sh([o[0] as i64, o[1] as i64])).collect()).collect();
    let mut offsets: Vec<(i32, i32)> = rules.iter().flatten().copied().collect();
    offsets.sort_unstable();
    offsets.dedup();
    let win = params.window as i32;
    let strip = Strip { w: win, rules, offsets };
    let cells: Vec<(i32, i32)> = (0..win).flat_map(|s| (0..win).map(move |h| (s, h))).collect();
    let ncell = cells.len() as u64;
    for k in 1..=params.kmax {
        let total = params.window as u64 * binomial(ncell - 1, k as u64 - 1);
        if total > params.max_closures {
            return done(Difficulty::AtLeast(k));
        }
        let found: Option<Vec<(i32, i32)>> = (0..params.window)
            .into_par_iter()
            .map(|first| {
                let mut stamp = vec![0u32; (9 * win * win) as usize];
                let mut queue = Vec::new();
                let mut gen = 0u32;
                let mut idx: Vec<usize> = (0..k as usize).map(|j| first + j).collect();
                if k == 1 {
                    gen += 1;
                    let z = [cells[first]];
                    return strip.succeeds(&z, &mut stamp, gen, &mut queue).then(|| z.to_vec());
                }
                if idx[k as usize - 1] >= cells.len() {
                    return None;
                }
                loop {
                    gen += 1;
                    let z: Vec<(i32, i32)> = idx.iter().map(|&i| cells[i]).collect();
                    if strip.succeeds(&z, &mut stamp, gen, &mut queue) {
                        return Some(z);
                    }
                    let mut j = k as usize - 1;
                    loop {
                        if j == 0 {
                            return None;
                        }
                        if idx[j] + (k as usize - j) < cells.len() {
                            break;
                        }
                        j -= 1;
                    }
                    idx[j] += 1;
                    for l in j + 1..k as usize {
                        idx[l] = idx[l - 1] + 1;
                    }
                }
            })
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .next();
        if let Some(z) = found {
            return Ok(DifficultyResult {
                direction: u,
                difficulty: Difficulty::CertifiedAtMost(k),
                witness: Some(z.into_iter().map(to_xy).collect()),
            });
        }
    }
    done(Difficulty::AtLeast(params.kmax + 1))
}

#[derive(Debug, Clone, Serialize)]
pub struct RefinedClass {
    pub balanced: bool,
    pub rooted: bool,
    pub finite_stable_set: bool,
    /// Only meaningful for balanced unrooted families.
    pub semi_directed: bool,
    pub isotropic: bool,
    pub hard_directions: Vec<Direction>,
    pub hard_arcs: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassificationReport {
    pub stable: Vec<ArcPiece>,
    pub difficulties: Vec<DifficultyResult>,
    pub alpha: Difficulty,
    pub rough: RoughClass,
    pub refined: Option<RefinedClass>,
    /// Predicted (beta, gamma, delta) for critical families.
    pub exponents: Option<[u8; 3]>,
    pub strongly_stable: bool,
    /// Some difficulty needed for alpha was only bounded from below.
    pub inconclusive: bool,
    pub window: usize,
    pub kmax: u32,
}

pub fn refine(family: &UpdateFamily, params: SearchParams) -> Result<ClassificationReport> {
    let stable = stable_set(family)?;
    let rough = rough_class(&stable);
    let isolated = stable.isolated_points();
    let difficulties: Vec<DifficultyResult> = if rough == RoughClass::Critical {
        isolated.iter().map(|&u| difficulty_with(family, &stable, u, params)).collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let diff_of = |u: Direction| -> Difficulty {
        if !stable.contains(u) {
            Difficulty::Zero
        } else {
            difficulties.iter().find(|d| d.direction == u).map_or(Difficulty::Infinite, |d| d.difficulty)
        }
    };
    let mut inconclusive = false;
    let alpha = match rough {
        RoughClass::SupercriticalRooted | RoughClass::SupercriticalUnrooted => Difficulty::Zero,
        RoughClass::SubcriticalNontrivial | RoughClass::SubcriticalTrivial => Difficulty::Infinite,
        RoughClass::Critical => {
            let mut best: Option<(u64, bool, Difficulty)> = None;
            for d in semicircle_candidates(&stable) {
                let meet = semicircle_meet(&stable, d);
                let (rank, lower, worst) = if meet.has_interior() {
                    (u64::MAX, false, Difficulty::Infinite)
                } else {
                    let mut worst = Difficulty::Zero;
                    let mut lower = false;
                    for p in meet.isolated_points() {
                        let dp = diff_of(p);
                        lower |= matches!(dp, Difficulty::AtLeast(_));
                        if dp.rank() > worst.rank() {
                            worst = dp;
                        }
                    }
                    (worst.rank(), lower, worst)
                };
                if best.map_or(true, |b| rank < b.0) {
                    best = Some((rank, lower, worst));
                }
            }
            let (_, lower, worst) = best.expect("at least one candidate");
            inconclusive = lower || difficulties.iter().any(|d| matches!(d.difficulty, Difficulty::AtLeast(_)));
            worst
        }
    };
    let mut refined = None;
    let mut exponents = None;
    if rough == RoughClass::Critical {
        let a = alpha.rank();
        let hard = |u: Direction| stable.contains(u) && diff_of(u).rank() > a;
        let mut crits: Vec<Direction> = stable.criticals().iter().flat_map(|&c| [c, c.neg()]).collect();
        crits.sort();
        let hard_set = ArcSet::from_predicate(crits.clone(), hard);
        let opposite = ArcSet::from_predicate(crits, |u| hard(u) && hard(u.neg()));
        let balanced = opposite.is_empty();
        let rooted = hard_set.has_non_opposite_pair();
        let hard_directions = hard_set.isolated_points();
        let hard_arcs = hard_set.has_interior();
        let n_hard = if hard_arcs { usize::MAX } else { hard_directions.len() };
        let finite = stable.is_finite();
        let class = RefinedClass {
            balanced,
            rooted,
            finite_stable_set: finite,
            semi_directed: balanced && !rooted && n_hard == 1,
            isotropic: balanced && !rooted && n_hard == 0,
            hard_directions,
            hard_arcs,
        };
        exponents = Some(match (finite, balanced, rooted) {
            (false, false, _) => [2, 4, 0],
            (false, true, _) => [2, 0, 0],
            (true, false, true) => [1, 3, 0],
            (true, false, false) => [1, 2, 0],
            (true, true, true) => [1, 1, 0],
            (true, true, false) if class.semi_directed => [1, 0, 1],
            (true, true, false) => [1, 0, 0],
        });
        refined = Some(class);
    }
    Ok(ClassificationReport {
        stable: stable.pieces(),
        difficulties,
        alpha,
        rough,
        refined,
        exponents,
        strongly_stable: stable.has_interior(),
        inconclusive,
        window: params.window,
        kmax: params.kmax,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OneDimClass {
    TwoUnstable,
    OneUnstable,
    ZeroUnstable,
}

#[derive(Debug, Clone, Serialize)]
pub struct OneDimReport {
    pub positive_unstable: bool,
    pub negative_unstable: bool,
    pub class: OneDimClass,
}

/// The direction +1 is unstable iff some rule lies entirely in the negative half-line.
pub fn classify_1d(family: &UpdateFamily) -> Result<OneDimReport> {
    if family.dim() != 1 {
        return Err(Error::Parameter("classify_1d needs a one-dimensional family".into()));
    }
    let positive_unstable = family.rules().iter().any(|r| r.iter().all(|o| o[0] < 0));
    let negative_unstable = family.rules().iter().any(|r| r.iter().all(|o| o[0] > 0));
    let class = match positive_unstable as u8 + negative_unstable as u8 {
        2 => OneDimClass::TwoUnstable,
        1 => OneDimClass::OneUnstable,
        _ => OneDimClass::ZeroUnstable,
    };
    Ok(OneDimReport { positive_unstable, negative_unstable, class })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::CATALOG;
    use proptest::prelude::*;

    fn d(x: i64, y: i64) -> Direction {
        Direction::new(x, y).unwrap()
    }

    fn fam(name: &str) -> UpdateFamily {
        UpdateFamily::catalog(name).unwrap()
    }

    fn arc(from: Direction, fc: bool, to: Direction, tc: bool) -> ArcPiece {
        ArcPiece::Arc { from, from_closed: fc, to, to_closed: tc }
    }

    #[test]
    fn direction_order_is_angular() {
        let mut v = vec![d(0, -1), d(-1, 0), d(1, 1), d(1, 0), d(0, 1), d(1, -1), d(-1, -2)];
        v.sort();
        assert_eq!(v, vec![d(1, 0), d(1, 1), d(0, 1), d(-1, 0), d(-1, -2), d(0, -1), d(1, -1)]);
        assert!(Direction::new(2, 4).is_err());
        assert!(Direction::new(0, 0).is_err());
        assert_eq!(Direction::of(-4, 6), d(-2, 3));
    }

    #[test]
    fn ext_gcd_identity() {
        for (a, b) in [(3, 5), (-2, 7), (0, 1), (1, 0), (-1, 0), (5, -3), (0, -1)] {
            let (g, x, y) = ext_gcd(a, b);
            assert_eq!(g, 1);
            assert_eq!(a * x + b * y, 1, "{a} {b}");
        }
    }

    #[test]
    fn arcset_algebra() {
        let h = ArcSet::open_semicircle(d(1, 0));
        assert!(h.contains(d(0, 1)) && !h.contains(d(1, 0)) && !h.contains(d(-1, 0)) && !h.contains(d(0, -1)));
        let c = h.complement();
        assert!(c.contains(d(1, 0)) && c.contains(d(0, -1)) && !c.contains(d(0, 1)));
        assert!(h.intersection(&c).is_empty());
        assert!(h.union(&c).is_full());
        assert!(ArcSet::empty().complement().is_full());
        let q1 = h.intersection(&ArcSet::open_semicircle(d(0, -1)));
        assert_eq!(q1.pieces(), vec![arc(d(1, 0), false, d(0, 1), false)]);
    }

    #[test]
    fn stable_sets_of_named_families() {
        assert!(stable_set(&fam("fa1f-2d")).unwrap().is_empty());
        assert_eq!(stable_set(&fam("east2d")).unwrap().pieces(), vec![arc(d(1, 0), true, d(0, 1), true)]);
        let fa2 = stable_set(&fam("fa2f-2d")).unwrap();
        assert_eq!(fa2.isolated_points(), vec![d(1, 0), d(0, 1), d(-1, 0), d(0, -1)]);
        assert!(fa2.is_finite());
        let duarte = stable_set(&fam("duarte")).unwrap();
        assert_eq!(
            duarte.pieces(),
            vec![ArcPiece::Point(d(1, 0)), arc(d(0, 1), true, d(0, -1), true)]
        );
        let ne = stable_set(&fam("north-east")).unwrap();
        assert_eq!(ne.pieces(), vec![arc(d(0, -1), true, d(-1, 0), true)]);
        let spiral = stable_set(&fam("spiral")).unwrap();
        assert_eq!(
            spiral.pieces(),
            vec![
                arc(d(1, 1), true, d(0, 1), true),
                arc(d(-1, 1), true, d(-1, 0), true),
                arc(d(-1, -1), true, d(0, -1), true),
                arc(d(1, -1), true, d(1, 0), true),
            ]
        );
        assert!(stable_set(&fam("east1d")).is_err());
    }

    #[test]
    fn rough_classes() {
        let cls = |n: &str| rough_class(&stable_set(&fam(n)).unwrap());
        assert_eq!(cls("east2d"), RoughClass::SupercriticalRooted);
        assert_eq!(cls("fa1f-2d"), RoughClass::SupercriticalUnrooted);
        assert_eq!(cls("fa2f-2d"), RoughClass::Critical);
        assert_eq!(cls("duarte"), RoughClass::Critical);
        assert_eq!(cls("modified-fa2f"), RoughClass::Critical);
        assert_eq!(cls("north-east"), RoughClass::SubcriticalNontrivial);
        assert_eq!(cls("spiral"), RoughClass::SubcriticalNontrivial);
        assert_eq!(rough_class(&ArcSet::empty()), RoughClass::SupercriticalUnrooted);
        assert_eq!(rough_class(&ArcSet::full()), RoughClass::SubcriticalTrivial);
    }

    #[test]
    fn difficulties_of_examples() {
        let p = |f: &UpdateFamily| SearchParams::for_family(f);
        let fa2 = fam("fa2f-2d");
        assert_eq!(difficulty_bounded(&fa2, d(1, 0), p(&fa2)).unwrap().difficulty, Difficulty::CertifiedAtMost(1));
        let du = fam("duarte");
        assert_eq!(difficulty_bounded(&du, d(1, 0), p(&du)).unwrap().difficulty, Difficulty::CertifiedAtMost(1));
        assert_eq!(difficulty_bounded(&du, d(-1, 0), p(&du)).unwrap().difficulty, Difficulty::Infinite);
        assert_eq!(difficulty_bounded(&du, d(1, 1), p(&du)).unwrap().difficulty, Difficulty::Zero);
        let log1 = fam("log1");
        assert_eq!(difficulty_bounded(&log1, d(0, 1), p(&log1)).unwrap().difficulty, Difficulty::CertifiedAtMost(2));
        let small = SearchParams { window: 3, ..p(&fa2) };
        assert!(difficulty_bounded(&fa2, d(1, 0), small).is_err());
    }

    #[test]
    fn budget_exhaustion_is_a_lower_bound() {
        let log1 = fam("log1");
        let params = SearchParams { window: 8, kmax: 1, max_closures: 1_000 };
        let r = difficulty_bounded(&log1, d(0, 1), params).unwrap();
        assert_eq!(r.difficulty, Difficulty::AtLeast(2));
        let params = SearchParams { window: 8, kmax: 3, max_closures: 10 };
        assert_eq!(difficulty_bounded(&log1, d(0, 1), params).unwrap().difficulty, Difficulty::AtLeast(2));
    }

    #[test]
    fn refined_log_families() {
        let r1 = refine(&fam("log1"), SearchParams::for_family(&fam("log1"))).unwrap();
        let got: Vec<(Direction, Difficulty)> = r1.difficulties.iter().map(|x| (x.direction, x.difficulty)).collect();
        assert_eq!(
            got,
            vec![
                (d(1, 0), Difficulty::CertifiedAtMost(2)),
                (d(0, 1), Difficulty::CertifiedAtMost(2)),
                (d(-1, 0), Difficulty::CertifiedAtMost(1)),
                (d(0, -1), Difficulty::CertifiedAtMost(1)),
            ]
        );
        assert_eq!(r1.alpha, Difficulty::CertifiedAtMost(1));
        let c1 = r1.refined.unwrap();
        assert!(c1.balanced && c1.rooted && c1.finite_stable_set);
        assert_eq!(r1.exponents, Some([1, 1, 0]));
        let r3 = refine(&fam("log3"), SearchParams::for_family(&fam("log3"))).unwrap();
        let c3 = r3.refined.unwrap();
        assert_eq!(r3.rough, RoughClass::Critical);
        assert_eq!(r3.alpha, Difficulty::CertifiedAtMost(1));
        assert!(!c3.balanced && c3.rooted);
        assert_eq!(r3.exponents, Some([1, 3, 0]));
    }

    #[test]
    fn refined_modified_fa2f_matches_fa2f() {
        let r = refine(&fam("modified-fa2f"), SearchParams::for_family(&fam("modified-fa2f"))).unwrap();
        assert_eq!(r.alpha, Difficulty::CertifiedAtMost(1));
        assert_eq!(r.exponents, Some([1, 0, 0]));
    }

    #[test]
    fn one_dimensional_classes() {
        assert_eq!(classify_1d(&fam("fa1f-1d")).unwrap().class, OneDimClass::TwoUnstable);
        assert_eq!(classify_1d(&fam("east1d")).unwrap().class, OneDimClass::OneUnstable);
        assert_eq!(classify_1d(&fam("fa2f-1d")).unwrap().class, OneDimClass::ZeroUnstable);
        assert!(classify_1d(&fam("east2d")).is_err());
    }

    #[test]
    fn rotation_covariance_on_catalog() {
        for name in CATALOG {
            let f = fam(name);
            if f.dim() != 2 {
                continue;
            }
            let s = stable_set(&f).unwrap();
            assert_eq!(stable_set(&f.rotated()).unwrap(), s.rotated(), "{name}");
            assert_eq!(rough_class(&s), rough_class(&s.rotated()));
        }
    }

    #[test]
    fn difficulty_antitone_under_family_order() {
        let pairs = [("log3", "log1"), ("fa2f-2d", "modified-fa2f")];
        for (small, big) in pairs {
            let (f1, f2) = (fam(small), fam(big));
            let s1 = stable_set(&f1).unwrap();
            let s2 = stable_set(&f2).unwrap();
            let (a, b) = if f1.monotone_le(&f2) { (f1, f2) } else { (f2, f1) };
            for u in s1.isolated_points().into_iter().filter(|u| s2.is_isolated(*u)) {
                let da = difficulty_bounded(&a, u, SearchParams::for_family(&a)).unwrap().difficulty;
                let db = difficulty_bounded(&b, u, SearchParams::for_family(&b)).unwrap().difficulty;
                if let (Difficulty::CertifiedAtMost(x), Difficulty::CertifiedAtMost(y)) = (da, db) {
                    assert!(y <= x, "{u:?}: {y} > {x}");
                }
            }
        }
    }

    fn random_family(seed: u64) -> UpdateFamily {
        let mut s = crate::rng::RandomStream::new(seed, "family");
        let nrules = 1 + s.below(3) as usize;
        let mut rules = Vec::new();
        for _ in 0..nrules {
            let size = 1 + s.below(3) as usize;
            let mut r = Vec::new();
            while r.len() < size {
                let o = [s.below(5) as i32 - 2, s.below(5) as i32 - 2];
                if o != [0, 0] {
                    r.push(o);
                }
            }
            rules.push(r);
        }
        UpdateFamily::new(2, rules).unwrap()
    }

    proptest! {
        #[test]
        fn stable_set_matches_pointwise_definition(seed in any::<u64>()) {
            let f = random_family(seed);
            let s = stable_set(&f).unwrap();
            for x in -6i64..=6 {
                for y in -6i64..=6 {
                    if gcd(x, y) != 1 { continue; }
                    let u = d(x, y);
                    let direct = f.rules().iter().all(|r| r.iter().any(|o| u.dot([o[0] as i64, o[1] as i64]) >= 0));
                    prop_assert_eq!(s.contains(u), direct);
                }
            }
            prop_assert_eq!(stable_set(&f.rotated()).unwrap(), s.rotated());
        }

        #[test]
        fn arcset_ops_are_pointwise(a in any::<u64>(), b in any::<u64>()) {
            let sa = stable_set(&random_family(a)).unwrap();
            let sb = stable_set(&random_family(b)).unwrap();
            let (u, i, c) = (sa.union(&sb), sa.intersection(&sb), sa.complement());
            for x in -5i64..=5 {
                for y in -5i64..=5 {
                    if gcd(x, y) != 1 { continue; }
                    let v = d(x, y);
                    prop_assert_eq!(u.contains(v), sa.contains(v) || sb.contains(v));
                    prop_assert_eq!(i.contains(v), sa.contains(v) && sb.contains(v));
                    prop_assert_eq!(c.contains(v), !sa.contains(v));
                    prop_assert_eq!(sa.negated().contains(v), sa.contains(v.neg()));
                }
            }
        }
    }
}
