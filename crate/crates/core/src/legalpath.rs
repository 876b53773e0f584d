//! Legal paths and ergodic components.
//!
//! A legal path is a sequence of single-site moves, each allowed only when the site's
//! constraint holds. Two configurations are joined by a legal path iff they have the same
//! bootstrap closure, so components are enumerated as closure fibers.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{param, Error, Result};
use crate::family::{CompiledFamily, MaskFamily, UpdateFamily};
use crate::lattice::{BoundaryCondition, Configuration, Region, Site};

/// Largest region handled by [`components`].
pub const MAX_ENUM_SITES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LegalPath {
    #[serde(skip)]
    pub bc: BoundaryCondition,
    /// `(site, new occupancy)`
    pub steps: Vec<(Site, bool)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Validation {
    Ok(Configuration),
    /// Index of the first step whose site was not allowed to change.
    Illegal(usize),
}

impl LegalPath {
    pub fn new(bc: BoundaryCondition) -> Self {
        LegalPath { bc, steps: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// The inverse path, which starts where this one ends when applied to `start`.
    pub fn reversed(&self, start: &Configuration) -> Result<LegalPath> {
        let mut cur = start.clone();
        let mut before = Vec::with_capacity(self.steps.len());
        for &(s, b) in &self.steps {
            let i = cur.region().index(s).ok_or(Error::OutOfRegion(s))?;
            before.push((s, cur.get(i)));
            cur.set(i, b);
        }
        before.reverse();
        Ok(LegalPath { bc: self.bc.clone(), steps: before })
    }

    /// Lines `x y newbit`; one-dimensional sites print `x newbit`.
    pub fn to_text(&self, dim: u8) -> String {
        let mut out = String::new();
        for &(s, b) in &self.steps {
            if dim == 1 {
                out.push_str(&format!("{} {}\n", s[0], b as u8));
            } else {
                out.push_str(&format!("{} {} {}\n", s[0], s[1], b as u8));
            }
        }
        out
    }
}

/// Replays `path` from `start`; steps that do not change the state are always allowed.
pub fn validate(family: &UpdateFamily, start: &Configuration, path: &LegalPath) -> Result<Validation> {
    let mut cur = start.clone();
    for (k, &(s, b)) in path.steps.iter().enumerate() {
        let i = cur.region().index(s).ok_or(Error::OutOfRegion(s))?;
        if cur.get(i) == b {
            continue;
        }
        if !family.constraint(&cur, s, &path.bc)? {
            return Ok(Validation::Illegal(k));
        }
        cur.set(i, b);
    }
    Ok(Validation::Ok(cur))
}

/// Empties, in index order, the first occupied site whose constraint holds until none is left.
fn greedy_descent(cf: &CompiledFamily, cfg: &Configuration) -> (Configuration, Vec<usize>) {
    let mut cur = cfg.clone();
    let mut moves = Vec::new();
    'outer: loop {
        for i in 0..cur.len() {
            if cur.get(i) && cf.constraint(&cur, i) {
                cur.set(i, false);
                moves.push(i);
                continue 'outer;
            }
        }
        return (cur, moves);
    }
}

/// A legal path from `cfg` to `cfg` with `x` emptied, or `None` when the closure keeps `x`
/// occupied. The path descends `cfg` to its closure and then climbs back up to the target
/// along the reversed descent of the target, so its length is at most twice the region size.
pub fn path_to_flip(family: &UpdateFamily, bc: &BoundaryCondition, cfg: &Configuration, x: Site) -> Result<Option<LegalPath>> {
    let region = cfg.region();
    let xi = region.index(x).ok_or(Error::OutOfRegion(x))?;
    if !cfg.get(xi) {
        return param(format!("site {x:?} is already empty"));
    }
    let cf = CompiledFamily::new(family, region, bc)?;
    let mut path = LegalPath::new(bc.clone());
    if cf.constraint(cfg, xi) {
        path.steps.push((x, false));
        return Ok(Some(path));
    }
    let (top, down) = greedy_descent(&cf, cfg);
    if top.get(xi) {
        return Ok(None);
    }
    let target = cfg.flip(x)?;
    let (top2, down2) = greedy_descent(&cf, &target);
    debug_assert_eq!(top, top2);
    path.steps.extend(down.iter().map(|&i| (region.site(i), false)));
    path.steps.extend(down2.iter().rev().map(|&i| (region.site(i), true)));
    Ok(Some(path))
}

/// Partition of all configurations of a region into ergodic components.
///
/// Configurations are indexed by their occupancy mask (bit `i` = site `i` occupied).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    pub labels: Vec<u32>,
    pub count: usize,
}

impl Components {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.count];
        for &l in &self.labels {
            s[l as usize] += 1;
        }
        s
    }

    pub fn same(&self, a: u64, b: u64) -> bool {
        self.labels[a as usize] == self.labels[b as usize]
    }
}

fn mask_family(family: &UpdateFamily, region: &Region, bc: &BoundaryCondition) -> Result<MaskFamily> {
    if region.len() > MAX_ENUM_SITES {
        return Err(Error::TooLarge(format!(
            "{} sites exceed the enumeration limit of {MAX_ENUM_SITES}",
            region.len()
        )));
    }
    CompiledFamily::new(family, region, bc)?.masks()
}

/// Closure fibers of every configuration. Labels are numbered by first appearance in
/// occupancy-mask order.
pub fn components(family: &UpdateFamily, region: &Region, bc: &BoundaryCondition) -> Result<Components> {
    let mf = mask_family(family, region, bc)?;
    let full = mf.full();
    let total = 1u64 << region.len();
    let keys: Vec<u32> = (0..total).into_par_iter().map(|occ| mf.closure(full ^ occ as u32)).collect();
    let mut relabel = std::collections::HashMap::new();
    let labels = keys
        .iter()
        .map(|k| {
            let next = relabel.len() as u32;
            *relabel.entry(*k).or_insert(next)
        })
        .collect();
    Ok(Components { labels, count: relabel.len() })
}

/// Vacancy masks of the component containing `cfg`, in increasing order.
pub fn fiber_vacancies(mf: &MaskFamily, vac: u32) -> Vec<u32> {
    let top = mf.closure(vac);
    let mut out = Vec::new();
    let mut sub = top;
    loop {
        if mf.closure(sub) == top {
            out.push(sub);
        }
        if sub == 0 {
            break;
        }
        sub = (sub - 1) & top;
    }
    out.reverse();
    out
}

/// All configurations legally reachable from `cfg`.
pub fn fiber_of(family: &UpdateFamily, bc: &BoundaryCondition, cfg: &Configuration) -> Result<Vec<Configuration>> {
    let region = cfg.region();
    let mf = mask_family(family, region, bc)?;
    let vac = mf.full() ^ cfg.to_mask() as u32;
    Ok(fiber_vacancies(&mf, vac)
        .into_iter()
        .map(|v| Configuration::from_mask(region, (mf.full() ^ v) as u64))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bootstrap::closure;
    use crate::rng::RandomStream;
    use std::collections::VecDeque;

    fn fam(name: &str) -> UpdateFamily {
        UpdateFamily::catalog(name).unwrap()
    }

    fn line(n: usize) -> Region {
        Region::line(0, n).unwrap()
    }

    fn cfg(bits: &str) -> Configuration {
        let r = line(bits.len());
        let b: Vec<bool> = bits.chars().map(|c| c == '1').collect();
        Configuration::from_fn(&r, |s| b[s[0] as usize])
    }

    /// Flip-graph BFS with the direct constraint evaluator.
    fn bfs_partition(family: &UpdateFamily, region: &Region, bc: &BoundaryCondition) -> Vec<u32> {
        let n = region.len();
        let mut label = vec![u32::MAX; 1 << n];
        let mut next = 0;
        for s in 0..1u64 << n {
            if label[s as usize] != u32::MAX {
                continue;
            }
            label[s as usize] = next;
            let mut q = VecDeque::from([s]);
            while let Some(m) = q.pop_front() {
                let c = Configuration::from_mask(region, m);
                for (i, x) in region.sites().enumerate() {
                    if family.constraint(&c, x, bc).unwrap() {
                        let m2 = m ^ (1 << i);
                        if label[m2 as usize] == u32::MAX {
                            label[m2 as usize] = next;
                            q.push_back(m2);
                        }
                    }
                }
            }
            next += 1;
        }
        label
    }

    #[test]
    fn validate_examples() {
        let east = fam("east1d");
        let bc = BoundaryCondition::AllOccupied;
        let empty = LegalPath::new(bc.clone());
        assert_eq!(validate(&east, &cfg("11"), &empty).unwrap(), Validation::Ok(cfg("11")));
        let p = LegalPath { bc: bc.clone(), steps: vec![([0, 0], false)] };
        assert_eq!(validate(&east, &cfg("10"), &p).unwrap(), Validation::Ok(cfg("00")));
        assert_eq!(validate(&east, &cfg("11"), &p).unwrap(), Validation::Illegal(0));
    }

    #[test]
    fn path_examples() {
        let east = fam("east1d");
        let bc = BoundaryCondition::AllEmpty;
        let start = cfg("111");
        let p = path_to_flip(&east, &bc, &start, [0, 0]).unwrap().unwrap();
        assert!(p.len() <= 6);
        assert_eq!(validate(&east, &start, &p).unwrap(), Validation::Ok(cfg("011")));
        let one = path_to_flip(&east, &bc, &start, [2, 0]).unwrap().unwrap();
        assert_eq!(one.len(), 1);
        let fa2 = fam("fa2f-2d");
        let r = Region::rect([0, 0], 3, 3).unwrap();
        let full = Configuration::all_occupied(&r);
        assert!(path_to_flip(&fa2, &BoundaryCondition::AllOccupied, &full, [1, 1]).unwrap().is_none());
        assert!(path_to_flip(&east, &bc, &cfg("101"), [1, 0]).is_err());
    }

    #[test]
    fn random_paths_are_legal_both_ways_and_keep_closure() {
        let mut s = RandomStream::new(3, "paths");
        let r = Region::rect([0, 0], 4, 4).unwrap();
        for name in ["fa2f-2d", "east2d", "duarte", "modified-fa2f"] {
            let f = fam(name);
            for bc in [BoundaryCondition::AllEmpty, BoundaryCondition::AllOccupied] {
                for _ in 0..40 {
                    let c = Configuration::sample_product(&r, 0.3, &mut s).unwrap();
                    let occupied: Vec<usize> = (0..r.len()).filter(|&i| c.get(i)).collect();
                    if occupied.is_empty() {
                        continue;
                    }
                    let x = r.site(occupied[s.below(occupied.len() as u64) as usize]);
                    let top = closure(&f, &c, &bc).unwrap().closure;
                    match path_to_flip(&f, &bc, &c, x).unwrap() {
                        None => assert!(top.at(x).unwrap()),
                        Some(p) => {
                            assert!(p.len() <= 2 * r.len());
                            let end = c.flip(x).unwrap();
                            assert_eq!(validate(&f, &c, &p).unwrap(), Validation::Ok(end.clone()));
                            let back = p.reversed(&c).unwrap();
                            assert_eq!(validate(&f, &end, &back).unwrap(), Validation::Ok(c.clone()));
                            let mut cur = c.clone();
                            for &(site, b) in &p.steps {
                                let i = r.index(site).unwrap();
                                cur.set(i, b);
                                assert_eq!(closure(&f, &cur, &bc).unwrap().closure, top);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn components_examples() {
        let empty = BoundaryCondition::AllEmpty;
        let c = components(&fam("east1d"), &line(3), &empty).unwrap();
        assert_eq!(c.count, 1);
        let occ = BoundaryCondition::AllOccupied;
        let c = components(&fam("fa2f-1d"), &line(3), &occ).unwrap();
        let s = c.sizes();
        assert_eq!(s[c.labels[0b111] as usize], 1);
        assert!(components(&fam("east1d"), &line(21), &empty).is_err());
        let always = UpdateFamily::new_1d(&[&[5]]).unwrap();
        assert_eq!(components(&always, &line(4), &empty).unwrap().count, 1);
    }

    #[test]
    fn fibers_equal_bfs_classes() {
        let cases: Vec<(&str, Region)> = vec![
            ("east1d", line(7)),
            ("fa1f-1d", line(8)),
            ("fa2f-1d", line(8)),
            ("east2d", Region::rect([0, 0], 3, 3).unwrap()),
            ("fa2f-2d", Region::rect([0, 0], 3, 3).unwrap()),
        ];
        for (name, r) in cases {
            for bc in [BoundaryCondition::AllEmpty, BoundaryCondition::AllOccupied] {
                let f = fam(name);
                let c = components(&f, &r, &bc).unwrap();
                let b = bfs_partition(&f, &r, &bc);
                assert_eq!(c.labels, b, "{name} {bc:?}");
            }
        }
    }

    #[test]
    fn fiber_of_matches_labels() {
        let f = fam("fa2f-1d");
        let r = line(6);
        let bc = BoundaryCondition::AllOccupied;
        let comps = components(&f, &r, &bc).unwrap();
        for m in [0u64, 0b101010, 0b111111, 0b110011] {
            let c = Configuration::from_mask(&r, m);
            let fiber = fiber_of(&f, &bc, &c).unwrap();
            let expected: Vec<u64> = (0..64).filter(|&o| comps.same(o, m)).collect();
            let mut got: Vec<u64> = fiber.iter().map(|c| c.to_mask()).collect();
            got.sort_unstable();
            assert_eq!(got, expected);
        }
    }
}
