//! Update families, constraint evaluation and the named catalog.
//!
//! The constraint at `x` is satisfied when some rule `U` has every site `x + u` (u in U)
//! empty. Families are stored canonically: offsets sorted inside each rule, rules that
//! contain another rule dropped (they never change the constraint), rules sorted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{BoundaryCondition, Configuration, Region, Site};

pub type Offset = [i32; 2];

pub const CATALOG: &[&str] = &[
    "east1d",
    "east2d",
    "fa1f-1d",
    "fa1f-2d",
    "fa2f-1d",
    "fa2f-2d",
    "duarte",
    "north-east",
    "spiral",
    "modified-fa2f",
    "log1",
    "log3",
];

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct UpdateFamily {
    dim: u8,
    rules: Vec<Vec<Offset>>,
}

#[derive(Serialize, Deserialize)]
struct FamilyFile {
    dim: u8,
    rules: Vec<Vec<Vec<i32>>>,
}

fn is_subset(a: &[Offset], b: &[Offset]) -> bool {
    a.iter().all(|x| b.binary_search(x).is_ok())
}

impl UpdateFamily {
    pub fn new(dim: u8, rules: Vec<Vec<Offset>>) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidFamily(format!("dimension {dim} not supported")));
        }
        if rules.is_empty() {
            return Err(Error::InvalidFamily("family has no rules".into()));
        }
        let mut rules: Vec<Vec<Offset>> = rules
            .into_iter()
            .map(|mut r| {
                r.sort_unstable();
                r.dedup();
                r
            })
            .collect();
        for r in &rules {
            if r.is_empty() {
                return Err(Error::InvalidFamily("empty rule".into()));
            }
            if r.contains(&[0, 0]) {
                return Err(Error::InvalidFamily("rule contains the origin".into()));
            }
            if dim == 1 && r.iter().any(|o| o[1] != 0) {
                return Err(Error::InvalidFamily("1D rule with a second coordinate".into()));
            }
        }
        rules.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        rules.dedup();
        let mut kept: Vec<Vec<Offset>> = Vec::with_capacity(rules.len());
        for r in rules {
            if !kept.iter().any(|k| is_subset(k, &r)) {
                kept.push(r);
            }
        }
        kept.sort();
        Ok(UpdateFamily { dim, rules: kept })
    }

    /// Convenience for 1D families given as plain integer offsets.
    pub fn new_1d(rules: &[&[i32]]) -> Result<Self> {
        Self::new(1, rules.iter().map(|r| r.iter().map(|&d| [d, 0]).collect()).collect())
    }

    pub fn dim(&self) -> u8 {
        self.dim
    }

    pub fn rules(&self) -> &[Vec<Offset>] {
        &self.rules
    }

    /// Largest sup-norm of any offset.
    pub fn range(&self) -> i64 {
        self.offsets().map(|o| o[0].abs().max(o[1].abs()) as i64).max().unwrap_or(0)
    }

    pub fn offsets(&self) -> impl Iterator<Item = Offset> + '_ {
        self.rules.iter().flatten().copied()
    }

    /// Rotation by 90 degrees counter-clockwise (2D only).
    pub fn rotated(&self) -> Self {
        assert_eq!(self.dim, 2);
        let rules = self.rules.iter().map(|r| r.iter().map(|o| [-o[1], o[0]]).collect()).collect();
        UpdateFamily::new(2, rules).expect("rotation preserves validity")
    }

    /// Constraint at `x` for the configuration extended by `bc`.
    ///
    /// Every out-of-region site a rule reaches must be covered by the boundary condition,
    /// even when another site of that rule already fails.
    pub fn constraint(&self, cfg: &Configuration, x: Site, bc: &BoundaryCondition) -> Result<bool> {
        if !cfg.region().contains(x) {
            return Err(Error::OutOfRegion(x));
        }
        let mut satisfied = false;
        for rule in &self.rules {
            let mut all_empty = true;
            for o in rule {
                let s = [x[0] + o[0] as i64, x[1] + o[1] as i64];
                if cfg.lookup(s, bc)? {
                    all_empty = false;
                }
            }
            satisfied |= all_empty;
        }
        Ok(satisfied)
    }

    /// `self <= other`: the constraint of `self` never exceeds that of `other`.
    ///
    /// Equivalent to every rule of `self` containing some rule of `other`: if a rule `U`
    /// contained none, the configuration empty exactly on `U` would be a counterexample.
    pub fn monotone_le(&self, other: &UpdateFamily) -> bool {
        self.dim == other.dim
            && self.rules.iter().all(|u| other.rules.iter().any(|v| is_subset(v, u)))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse(format!("family file: {e}")))?;
        let dim = v
            .get("dim")
            .and_then(|d| d.as_u64())
            .ok_or_else(|| Error::Parse("family file needs an integer `dim`".into()))? as u8;
        let rules = v
            .get("rules")
            .and_then(|r| r.as_array())
            .ok_or_else(|| Error::Parse("family file needs a `rules` array".into()))?;
        let mut out = Vec::new();
        for rule in rules {
            let rule = rule.as_array().ok_or_else(|| Error::Parse(format!("rule {rule} is not an array")))?;
            let mut offs = Vec::new();
            for o in rule {
                let coords: Vec<i64> = match o {
                    serde_json::Value::Number(n) if dim == 1 => vec![n.as_i64().unwrap_or(i64::MAX)],
                    serde_json::Value::Array(a) => a.iter().map(|c| c.as_i64().unwrap_or(i64::MAX)).collect(),
                    _ => return Err(Error::Parse(format!("bad offset {o}"))),
                };
                if coords.len() != dim as usize || coords.iter().any(|c| c.abs() > 1 << 20) {
                    return Err(Error::Parse(format!("offset {o} does not match dim {dim}")));
                }
                offs.push([coords[0] as i32, if dim == 2 { coords[1] as i32 } else { 0 }]);
            }
            out.push(offs);
        }
        UpdateFamily::new(dim, out)
    }

    pub fn to_json(&self) -> String {
        let file = FamilyFile {
            dim: self.dim,
            rules: self
                .rules
                .iter()
                .map(|r| r.iter().map(|o| o[..self.dim as usize].to_vec()).collect())
                .collect(),
        };
        serde_json::to_string(&file).expect("serializable")
    }

    pub fn catalog(name: &str) -> Result<Self> {
        let e1 = [1, 0];
        let e2 = [0, 1];
        let neg = |o: Offset| [-o[0], -o[1]];
        let nbrs = [e1, neg(e1), e2, neg(e2)];
        match name {
            "east1d" => UpdateFamily::new_1d(&[&[1]]),
            "fa1f-1d" => UpdateFamily::new_1d(&[&[-1], &[1]]),
            "fa2f-1d" => UpdateFamily::new_1d(&[&[-1, 1]]),
            "east2d" => UpdateFamily::new(2, vec![vec![e1], vec![e2]]),
            "fa1f-2d" => UpdateFamily::new(2, nbrs.iter().map(|&o| vec![o]).collect()),
            "fa2f-2d" => {
                let mut rules = Vec::new();
                for i in 0..4 {
                    for j in i + 1..4 {
                        rules.push(vec![nbrs[i], nbrs[j]]);
                    }
                }
                UpdateFamily::new(2, rules)
            }
            // FA-2f without its two opposite-pair rules {e1,-e1} and {e2,-e2}.
            "modified-fa2f" => UpdateFamily::new(
                2,
                vec![vec![neg(e1), e2], vec![neg(e1), neg(e2)], vec![e2, e1], vec![e1, neg(e2)]],
            ),
            "duarte" => UpdateFamily::new(2, vec![vec![neg(e1), e2], vec![neg(e1), neg(e2)], vec![neg(e2), e2]]),
            "north-east" => UpdateFamily::new(2, vec![vec![e1, e2]]),
            "spiral" => {
                let u1: Vec<Offset> = vec![[1, -1], [1, 0], [1, 1], [0, 1]];
                let mut rules = vec![u1];
                for _ in 0..3 {
                    let last = rules.last().unwrap();
                    rules.push(last.iter().map(|o| [-o[1], o[0]]).collect());
                }
                UpdateFamily::new(2, rules)
            }
            // Critical families with one hard direction pair (log1) and an unbalanced,
            // rooted arrangement (log3); refinement test cases.
            "log1" => UpdateFamily::new(
                2,
                vec![
                    vec![[0, 1], [0, 2], [-1, 0]],
                    vec![[0, 1], [1, 0]],
                    vec![[-1, 0], [-2, 0], [0, -1], [0, -2]],
                    vec![[1, 0], [2, 0], [0, -1]],
                ],
            ),
            "log3" => UpdateFamily::new(
                2,
                vec![
                    vec![[0, 1], [0, 2], [-1, 0], [-2, 0]],
                    vec![[0, 1], [1, 0], [2, 0]],
                    vec![[-1, 0], [-2, 0], [0, -1], [0, -2]],
                    vec![[1, 0], [2, 0], [0, -1]],
                ],
            ),
            _ => Err(Error::UnknownFamily(name.to_string())),
        }
    }
}

/// A family resolved against a region and boundary condition.
///
/// For every site the live rules are stored as lists of in-region site indices; rules that
/// touch an occupied boundary site are dropped and a rule whose sites all lie in an empty
/// boundary makes the site permanently unconstrained.
#[derive(Debug, Clone)]
pub struct CompiledFamily {
    n: usize,
    site_rules: Vec<u32>,
    rule_ends: Vec<u32>,
    members: Vec<u32>,
    always: Vec<bool>,
    rev_start: Vec<u32>,
    rev: Vec<u32>,
}

impl CompiledFamily {
    pub fn new(family: &UpdateFamily, region: &Region, bc: &BoundaryCondition) -> Result<Self> {
        if family.dim() != region.dim() {
            return Err(Error::Parameter(format!(
                "family of dimension {} on a region of dimension {}",
                family.dim(),
                region.dim()
            )));
        }
        let n = region.len();
        let mut site_rules = vec![0u32];
        let mut rule_ends = Vec::new();
        let mut members: Vec<u32> = Vec::new();
        let mut always = vec![false; n];
        let mut rev_lists: Vec<Vec<u32>> = vec![Vec::new(); n];
        for i in 0..n {
            let x = region.site(i);
            for rule in family.rules() {
                let start = members.len();
                let mut dead = false;
                for o in rule {
                    let s = [x[0] + o[0] as i64, x[1] + o[1] as i64];
                    match region.index(s) {
                        Some(j) => members.push(j as u32),
                        None => dead |= bc.occupied(s)?,
                    }
                }
                if dead {
                    members.truncate(start);
                } else if members.len() == start {
                    always[i] = true;
                } else {
                    for &j in &members[start..] {
                        rev_lists[j as usize].push(i as u32);
                    }
                    rule_ends.push(members.len() as u32);
                }
            }
            site_rules.push(rule_ends.len() as u32);
        }
        let mut rev_start = vec![0u32];
        let mut rev = Vec::new();
        for mut l in rev_lists {
            l.sort_unstable();
            l.dedup();
            rev.extend(l);
            rev_start.push(rev.len() as u32);
        }
        Ok(CompiledFamily { n, site_rules, rule_ends, members, always, rev_start, rev })
    }

    pub fn len(&self) -> usize {
        self.n
    }
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Rules of site `i` as slices of member indices.
    pub fn rules_of(&self, i: usize) -> impl Iterator<Item = &[u32]> + '_ {
        let (a, b) = (self.site_rules[i] as usize, self.site_rules[i + 1] as usize);
        (a..b).map(move |r| {
            let start = if r == 0 { 0 } else { self.rule_ends[r - 1] as usize };
            &self.members[start..self.rule_ends[r] as usize]
        })
    }

    pub fn always(&self, i: usize) -> bool {
        self.always[i]
    }

    #[inline]
    pub fn constraint(&self, cfg: &Configuration, i: usize) -> bool {
        self.constraint_by(i, |j| cfg.get(j))
    }

    #[inline]
    pub fn constraint_by(&self, i: usize, occupied: impl Fn(usize) -> bool) -> bool {
        if self.always[i] {
            return true;
        }
        let (a, b) = (self.site_rules[i] as usize, self.site_rules[i + 1] as usize);
        let mut start = if a == 0 { 0 } else { self.rule_ends[a - 1] as usize };
        for r in a..b {
            let end = self.rule_ends[r] as usize;
            if self.members[start..end].iter().all(|&j| !occupied(j as usize)) {
                return true;
            }
            start = end;
        }
        false
    }

    /// Sites whose constraint reads site `j`.
    #[inline]
    pub fn dependents(&self, j: usize) -> &[u32] {
        &self.rev[self.rev_start[j] as usize..self.rev_start[j + 1] as usize]
    }

    /// Bitmask form for regions of at most 32 sites.
    pub fn masks(&self) -> Result<MaskFamily> {
        if self.n > 32 {
            return Err(Error::TooLarge(format!("{} sites exceed the 32-site mask form", self.n)));
        }
        let mut rules = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let masks: Vec<u32> =
                self.rules_of(i).map(|r| r.iter().fold(0u32, |m, &j| m | (1 << j))).collect();
            rules.push(masks);
        }
        Ok(MaskFamily { n: self.n, always: self.always.clone(), rules })
    }
}

/// Constraint tables over vacancy bitmasks (bit j set = site j empty).
#[derive(Debug, Clone)]
pub struct MaskFamily {
    n: usize,
    always: Vec<bool>,
    rules: Vec<Vec<u32>>,
}

impl MaskFamily {
    pub fn len(&self) -> usize {
        self.n
    }
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn constraint(&self, vac: u32, i: usize) -> bool {
        self.always[i] || self.rules[i].iter().any(|&m| vac & m == m)
    }

    /// Vacancy mask of the bootstrap closure.
    pub fn closure(&self, mut vac: u32) -> u32 {
        loop {
            let mut grow = 0u32;
            for i in 0..self.n {
                if vac >> i & 1 == 0 && self.constraint(vac, i) {
                    grow |= 1 << i;
                }
            }
            if grow == 0 {
                return vac;
            }
            vac |= grow;
        }
    }

    pub fn full(&self) -> u32 {
        if self.n == 32 {
            u32::MAX
        } else {
            (1u32 << self.n) - 1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;
    use proptest::prelude::*;

    fn rect(w: usize, h: usize) -> Region {
        Region::rect([0, 0], w, h).unwrap()
    }

    #[test]
    fn east_right_neighbour() {
        let f = UpdateFamily::catalog("east1d").unwrap();
        let r = Region::line(0, 2).unwrap();
        let c = Configuration::parse("2 1 0 0\n10\n").unwrap();
        assert!(f.constraint(&c, [0, 0], &BoundaryCondition::AllOccupied).unwrap());
        assert!(!f.constraint(&c, [1, 0], &BoundaryCondition::AllOccupied).unwrap());
        assert!(f.constraint(&c, [1, 0], &BoundaryCondition::AllEmpty).unwrap());
        assert!(f.constraint(&Configuration::all_occupied(&r), [5, 0], &BoundaryCondition::AllEmpty).is_err());
    }

    #[test]
    fn fa2f_needs_two_empty_neighbours() {
        let f = UpdateFamily::catalog("fa2f-2d").unwrap();
        let r = rect(3, 3);
        let one = Configuration::all_occupied(&r).flip([1, 0]).unwrap();
        assert!(!f.constraint(&one, [1, 1], &BoundaryCondition::AllOccupied).unwrap());
        let two = one.flip([0, 1]).unwrap();
        assert!(f.constraint(&two, [1, 1], &BoundaryCondition::AllOccupied).unwrap());
    }

    #[test]
    fn duarte_north_south() {
        let f = UpdateFamily::catalog("duarte").unwrap();
        let r = rect(3, 3);
        let c = Configuration::all_occupied(&r).flip([1, 0]).unwrap().flip([1, 2]).unwrap();
        assert!(f.constraint(&c, [1, 1], &BoundaryCondition::AllOccupied).unwrap());
        let c = Configuration::all_occupied(&r).flip([2, 1]).unwrap().flip([1, 2]).unwrap();
        assert!(!f.constraint(&c, [1, 1], &BoundaryCondition::AllOccupied).unwrap());
    }

    #[test]
    fn catalog_entries() {
        assert_eq!(UpdateFamily::catalog("north-east").unwrap().rules(), &[vec![[0, 1], [1, 0]]]);
        assert_eq!(UpdateFamily::catalog("fa2f-2d").unwrap().rules().len(), 6);
        assert_eq!(UpdateFamily::catalog("duarte").unwrap().rules().len(), 3);
        assert_eq!(UpdateFamily::catalog("spiral").unwrap().rules().len(), 4);
        assert_eq!(UpdateFamily::catalog("modified-fa2f").unwrap().rules().len(), 4);
        assert!(matches!(UpdateFamily::catalog("nope"), Err(Error::UnknownFamily(_))));
        for name in CATALOG {
            let f = UpdateFamily::catalog(name).unwrap();
            let expect = if name.starts_with("log") { 2 } else { 1 };
            assert_eq!(f.range(), expect, "{name}");
        }
        let spiral = UpdateFamily::catalog("spiral").unwrap();
        assert_eq!(spiral.rotated(), spiral);
    }

    #[test]
    fn modified_fa2f_is_between_fa2f_and_fa1f() {
        let m = UpdateFamily::catalog("modified-fa2f").unwrap();
        let fa2 = UpdateFamily::catalog("fa2f-2d").unwrap();
        assert!(m.monotone_le(&fa2));
        assert!(!fa2.monotone_le(&m));
        assert!(m.rules().iter().all(|r| r[0] != [-r[1][0], -r[1][1]]));
    }

    #[test]
    fn canonicalization_prunes_supersets() {
        let f = UpdateFamily::new_1d(&[&[1], &[1, 2]]).unwrap();
        assert_eq!(f, UpdateFamily::catalog("east1d").unwrap());
        assert!(UpdateFamily::new(2, vec![]).is_err());
        assert!(UpdateFamily::new(2, vec![vec![]]).is_err());
        assert!(UpdateFamily::new(2, vec![vec![[0, 0]]]).is_err());
        assert!(UpdateFamily::new(1, vec![vec![[1, 1]]]).is_err());
    }

    #[test]
    fn partial_order_examples() {
        let fa1 = UpdateFamily::catalog("fa1f-2d").unwrap();
        let fa2 = UpdateFamily::catalog("fa2f-2d").unwrap();
        assert!(fa2.monotone_le(&fa1));
        assert!(!fa1.monotone_le(&fa2));
        assert!(UpdateFamily::catalog("log3").unwrap().monotone_le(&UpdateFamily::catalog("log1").unwrap()));
    }

    /// Brute force over every configuration of the joint range box around the origin.
    fn monotone_le_exhaustive(a: &UpdateFamily, b: &UpdateFamily) -> bool {
        let r = a.range().max(b.range());
        let region = Region::centered(2, r as usize).unwrap();
        let centre = region.index([0, 0]).unwrap();
        let ca = CompiledFamily::new(a, &region, &BoundaryCondition::AllOccupied).unwrap().masks().unwrap();
        let cb = CompiledFamily::new(b, &region, &BoundaryCondition::AllOccupied).unwrap().masks().unwrap();
        (0..1u32 << region.len()).all(|vac| !ca.constraint(vac, centre) || cb.constraint(vac, centre))
    }

    #[test]
    fn partial_order_matches_exhaustive_check() {
        let names = ["east2d", "fa1f-2d", "fa2f-2d", "duarte", "north-east", "spiral", "modified-fa2f"];
        for a in names {
            for b in names {
                let fa = UpdateFamily::catalog(a).unwrap();
                let fb = UpdateFamily::catalog(b).unwrap();
                assert_eq!(fa.monotone_le(&fb), monotone_le_exhaustive(&fa, &fb), "{a} <= {b}");
            }
        }
    }

    #[test]
    fn json_round_trip() {
        for name in CATALOG {
            let f = UpdateFamily::catalog(name).unwrap();
            assert_eq!(UpdateFamily::from_json(&f.to_json()).unwrap(), f);
        }
        let f = UpdateFamily::from_json(r#"{"dim":1,"rules":[[1],[[-1]]]}"#).unwrap();
        assert_eq!(f, UpdateFamily::catalog("fa1f-1d").unwrap());
        assert!(UpdateFamily::from_json(r#"{"dim":2,"rules":[[[1]]]}"#).is_err());
        assert!(UpdateFamily::from_json("not json").is_err());
    }

    #[test]
    fn compiled_matches_direct_evaluation() {
        let mut s = RandomStream::new(3, "compiled");
        for name in CATALOG {
            let f = UpdateFamily::catalog(name).unwrap();
            let region = if f.dim() == 1 { Region::line(-3, 9).unwrap() } else { rect(6, 5) };
            for bc in [BoundaryCondition::AllEmpty, BoundaryCondition::AllOccupied] {
                let cf = CompiledFamily::new(&f, &region, &bc).unwrap();
                for _ in 0..50 {
                    let c = Configuration::sample_product(&region, 0.4, &mut s).unwrap();
                    for i in 0..region.len() {
                        assert_eq!(cf.constraint(&c, i), f.constraint(&c, region.site(i), &bc).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn explicit_boundary_must_cover_reach() {
        let f = UpdateFamily::catalog("fa1f-1d").unwrap();
        let r = Region::line(0, 3).unwrap();
        let partial = BoundaryCondition::Explicit([([-1, 0], false)].into_iter().collect());
        assert_eq!(CompiledFamily::new(&f, &r, &partial).unwrap_err(), Error::MissingBoundary([3, 0]));
        let full = BoundaryCondition::Explicit([([-1, 0], false), ([3, 0], true)].into_iter().collect());
        let cf = CompiledFamily::new(&f, &r, &full).unwrap();
        assert!(cf.always(0));
        assert!(!cf.always(2));
    }

    proptest! {
        #[test]
        fn constraint_is_monotone_and_ignores_own_site(seed in any::<u64>(), k in 0usize..12) {
            let name = CATALOG[k];
            let f = UpdateFamily::catalog(name).unwrap();
            let region = if f.dim() == 1 { Region::line(0, 12).unwrap() } else { rect(7, 7) };
            let mut s = RandomStream::new(seed, "monotone");
            let bc = BoundaryCondition::AllOccupied;
            for _ in 0..20 {
                let c = Configuration::sample_product(&region, 0.3, &mut s).unwrap();
                let mut more = c.clone();
                for i in 0..region.len() {
                    if s.bernoulli(0.2) {
                        more.set(i, false);
                    }
                }
                for i in 0..region.len() {
                    let x = region.site(i);
                    let a = f.constraint(&c, x, &bc).unwrap();
                    prop_assert!(!a || f.constraint(&more, x, &bc).unwrap());
                    prop_assert_eq!(a, f.constraint(&c.flip(x).unwrap(), x, &bc).unwrap());
                }
            }
        }

        #[test]
        fn canonical_form_ignores_rule_order(seed in any::<u64>()) {
            let f = UpdateFamily::catalog(CATALOG[(seed % 12) as usize]).unwrap();
            let mut rules = f.rules().to_vec();
            rules.reverse();
            for r in rules.iter_mut() { r.reverse(); }
            prop_assert_eq!(UpdateFamily::new(f.dim(), rules).unwrap(), f);
        }
    }
}
