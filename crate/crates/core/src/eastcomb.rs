//! Exhaustive reachability for the East model with a vacancy budget.
//!
//! The window is `{-2^n, .., -1}` with an empty site at 0. Starting from all occupied, a
//! breadth-first search explores single legal flips in both directions while never holding
//! more than `n` vacancies. States are sorted lists of vacant positions.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::family::UpdateFamily;
use crate::lattice::{BoundaryCondition, Configuration, Region};
use crate::legalpath::LegalPath;

pub const MAX_BUDGET: u32 = 5;

type State = Vec<i64>;

#[derive(Debug, Clone, Serialize)]
pub struct ReachResult {
    pub n: u32,
    /// Largest distance from the boundary at which a vacancy is reachable.
    pub ell: u64,
    /// `counts[k]` = number of reachable states with exactly `k` vacancies.
    pub counts: Vec<u64>,
    /// A legal path from all occupied to a state with site `-ell` empty.
    pub witness: LegalPath,
    #[serde(skip)]
    states: Vec<State>,
    #[serde(skip)]
    parent: Vec<(u32, i64)>,
}

impl ReachResult {
    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    /// Vacancy lists in BFS order.
    pub fn states(&self) -> &[Vec<i64>] {
        &self.states
    }

    /// Parent index and flipped site for state `i` (the root is its own parent).
    pub fn parent(&self, i: usize) -> (usize, i64) {
        let (p, s) = self.parent[i];
        (p as usize, s)
    }

    /// `n! 2^{n(n-1)/2}`
    pub fn count_bound(&self) -> u64 {
        let n = self.n as u64;
        (1..=n).product::<u64>() << (n * n.saturating_sub(1) / 2)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{k},{c}\n"));
        }
        out
    }
}

/// Window region `{-2^n, .., -1}`.
pub fn window(n: u32) -> Region {
    let len = 1usize << n;
    Region::line(-(len as i64), len).expect("nonempty window")
}

fn neighbours(state: &State, n: u32, lo: i64) -> Vec<(State, i64)> {
    let mut sites: Vec<i64> = std::iter::once(-1).chain(state.iter().map(|v| v - 1)).filter(|&x| x >= lo).collect();
    sites.sort_unstable();
    sites.dedup();
    let mut out = Vec::with_capacity(sites.len());
    for x in sites {
        let mut next = state.clone();
        match next.binary_search(&x) {
            Ok(k) => {
                next.remove(k);
            }
            Err(k) => {
                if next.len() as u32 >= n {
                    continue;
                }
                next.insert(k, x);
            }
        }
        out.push((next, x));
    }
    out
}

pub fn enumerate(n: u32) -> Result<ReachResult> {
    enumerate_with(n, true)
}

/// `parallel` expands each frontier concurrently; children are merged in frontier order so
/// the result is identical to the sequential search.
pub fn enumerate_with(n: u32, parallel: bool) -> Result<ReachResult> {
    if n == 0 || n > MAX_BUDGET {
        return Err(Error::TooLarge(format!("vacancy budget {n} outside 1..={MAX_BUDGET}")));
    }
    let lo = -(1i64 << n);
    let mut index: HashMap<State, u32> = HashMap::new();
    let mut states: Vec<State> = vec![Vec::new()];
    let mut parent = vec![(0u32, 0i64)];
    index.insert(Vec::new(), 0);
    let mut frontier: Vec<u32> = vec![0];
    while !frontier.is_empty() {
        let expand = |&i: &u32| neighbours(&states[i as usize], n, lo);
        let children: Vec<Vec<(State, i64)>> =
            if parallel { frontier.par_iter().map(expand).collect() } else { frontier.iter().map(expand).collect() };
        let mut next = Vec::new();
        for (&p, kids) in frontier.iter().zip(children) {
            for (s, x) in kids {
                if !index.contains_key(&s) {
                    let id = states.len() as u32;
                    index.insert(s.clone(), id);
                    states.push(s);
                    parent.push((p, x));
                    next.push(id);
                }
            }
        }
        frontier = next;
    }
    let mut counts = vec![0u64; n as usize + 1];
    for s in &states {
        counts[s.len()] += 1;
    }
    let (deep, ell) = states
        .iter()
        .enumerate()
        .map(|(i, s)| (i, s.first().map_or(0, |v| -v) as u64))
        .fold((0, 0), |best, cur| if cur.1 > best.1 { cur } else { best });
    let mut steps = Vec::new();
    let mut cur = deep;
    while cur != 0 {
        let (p, x) = parent[cur];
        let now_occupied = states[cur].binary_search(&x).is_err();
        steps.push(([x, 0], now_occupied));
        cur = p as usize;
    }
    steps.reverse();
    let witness = LegalPath { bc: BoundaryCondition::AllEmpty, steps };
    Ok(ReachResult { n, ell, counts, witness, states, parent })
}

/// Whether a vacancy at distance `depth` from the boundary is reachable with budget `n`.
pub fn reach_within_budget(n: u32, depth: u64) -> Result<bool> {
    Ok(enumerate(n)?.ell >= depth)
}

/// The all-occupied start on [`window`].
pub fn start(n: u32) -> Configuration {
    Configuration::all_occupied(&window(n))
}

pub fn east() -> UpdateFamily {
    UpdateFamily::catalog("east1d").expect("catalog entry")
}
