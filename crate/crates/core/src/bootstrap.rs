//! Bootstrap percolation: synchronous map, closure with per-site emptying rounds,
//! emptying time of the origin and Monte Carlo estimators.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{param, Error, Result};
use crate::family::{CompiledFamily, UpdateFamily};
use crate::lattice::{BoundaryCondition, Configuration, Region, Site};
use crate::rng::RandomStream;

#[derive(Debug, Clone, PartialEq)]
pub struct BpResult {
    pub closure: Configuration,
    /// Number of synchronous iterations that changed something.
    pub rounds: u32,
    /// Round at which each site first became empty (0 for initially empty sites).
    pub site_round: Vec<Option<u32>>,
}

impl BpResult {
    pub fn round_at(&self, s: Site) -> Option<u32> {
        self.closure.region().index(s).and_then(|i| self.site_round[i])
    }
}

/// One synchronous step: a site becomes empty if it is empty or its constraint holds.
pub fn bp_step(family: &UpdateFamily, cfg: &Configuration, bc: &BoundaryCondition) -> Result<Configuration> {
    let cf = CompiledFamily::new(family, cfg.region(), bc)?;
    Ok(step_compiled(&cf, cfg))
}

pub fn step_compiled(cf: &CompiledFamily, cfg: &Configuration) -> Configuration {
    let mut out = cfg.clone();
    for i in 0..cfg.len() {
        if cfg.get(i) && cf.constraint(cfg, i) {
            out.set(i, false);
        }
    }
    out
}

pub fn closure(family: &UpdateFamily, cfg: &Configuration, bc: &BoundaryCondition) -> Result<BpResult> {
    let cf = CompiledFamily::new(family, cfg.region(), bc)?;
    Ok(closure_compiled(&cf, cfg, None))
}

/// Work-queue closure. Only dependents of sites emptied in round `r` are examined for
/// round `r + 1`, and all of a round's sites are applied together, which reproduces the
/// synchronous map exactly. `max_rounds` stops early (the result is then not a fixpoint).
pub fn closure_compiled(cf: &CompiledFamily, cfg: &Configuration, max_rounds: Option<u32>) -> BpResult {
    let n = cfg.len();
    let mut cur = cfg.clone();
    let mut site_round: Vec<Option<u32>> = (0..n).map(|i| if cfg.get(i) { None } else { Some(0) }).collect();
    let mut stamp = vec![0u32; n];
    let mut front: Vec<usize> = (0..n).filter(|&i| cfg.get(i) && cf.constraint(cfg, i)).collect();
    let mut r = 0u32;
    while !front.is_empty() && max_rounds.map_or(true, |m| r < m) {
        r += 1;
        for &i in &front {
            cur.set(i, false);
            site_round[i] = Some(r);
        }
        let mut next = Vec::new();
        for &i in &front {
            for &j in cf.dependents(i) {
                let j = j as usize;
                if stamp[j] != r && cur.get(j) {
                    stamp[j] = r;
                    if cf.constraint(&cur, j) {
                        next.push(j);
                    }
                }
            }
        }
        next.sort_unstable();
        front = next;
    }
    BpResult { closure: cur, rounds: r, site_round }
}

/// Rounds needed to empty `origin`, `None` if it is never emptied within the region.
pub fn tau0_bp(family: &UpdateFamily, cfg: &Configuration, bc: &BoundaryCondition, origin: Site) -> Result<Option<u32>> {
    if !cfg.region().contains(origin) {
        return Err(Error::OutOfRegion(origin));
    }
    Ok(closure(family, cfg, bc)?.round_at(origin))
}

pub fn is_ergodic_bc(family: &UpdateFamily, region: &Region, bc: &BoundaryCondition) -> Result<bool> {
    Ok(closure(family, &Configuration::all_occupied(region), bc)?.closure.is_all_empty())
}

/// Two-sided Wilson score interval.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Serialize)]
pub struct TailEstimate {
    pub t: u32,
    pub q: f64,
    pub replicas: u64,
    pub exceed: u64,
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub window_radius: usize,
    pub exact: Option<f64>,
}

/// Closed forms for the 1D families where the emptying time is a distance.
pub fn exact_tail(family: &UpdateFamily, q: f64, t: u32) -> Option<f64> {
    if *family == UpdateFamily::catalog("east1d").ok()? {
        Some((1.0 - q).powi(t as i32 + 1))
    } else if *family == UpdateFamily::catalog("fa1f-1d").ok()? {
        Some((1.0 - q).powi(2 * t as i32 + 1))
    } else {
        None
    }
}

/// Monte Carlo estimate of P(tau0_bp > t) under the product measure.
///
/// The window is the box of radius `t * range + range` unless a radius is given; a given
/// radius below `t * range` is rejected since the origin would then see the boundary.
pub fn mc_tail(
    family: &UpdateFamily,
    q: f64,
    t: u32,
    replicas: u64,
    seed: u64,
    radius: Option<usize>,
) -> Result<TailEstimate> {
    Ok(mc_tails(family, q, &[t], replicas, seed, radius)?.remove(0))
}

/// Tails at several times from one set of samples: each replica is a single window sized
/// for the largest `t`, so the estimates are correlated across `ts`.
pub fn mc_tails(
    family: &UpdateFamily,
    q: f64,
    ts: &[u32],
    replicas: u64,
    seed: u64,
    radius: Option<usize>,
) -> Result<Vec<TailEstimate>> {
    if !(0.0..=1.0).contains(&q) {
        return param(format!("q = {q} outside [0,1]"));
    }
    if replicas < 100 {
        return param("at least 100 replicas are required");
    }
    let Some(&t_max) = ts.iter().max() else {
        return param("no times given");
    };
    let range = family.range() as usize;
    let needed = t_max as usize * range;
    let radius = match radius {
        Some(r) if r < needed => {
            return param(format!("window radius {r} < t*range = {needed}: the estimate would be truncated"))
        }
        Some(r) => r,
        None => needed + range,
    };
    let region = Region::centered(family.dim(), radius)?;
    let bc = BoundaryCondition::AllOccupied;
    let cf = CompiledFamily::new(family, &region, &bc)?;
    let origin = region.index([0, 0]).expect("centred box holds the origin");
    let base = RandomStream::new(seed, "bp-tail");
    let exceed: Vec<u64> = (0..replicas)
        .into_par_iter()
        .map(|k| {
            let mut s = base.replica(k);
            let cfg = Configuration::sample_product(&region, q, &mut s).expect("q checked");
            let round = closure_compiled(&cf, &cfg, Some(t_max)).site_round[origin];
            ts.iter().map(|&t| u64::from(round.map_or(true, |r| r > t))).collect::<Vec<u64>>()
        })
        .reduce(|| vec![0; ts.len()], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect());
    Ok(ts
        .iter()
        .zip(exceed)
        .map(|(&t, exceed)| {
            let (ci_lo, ci_hi) = wilson_interval(exceed, replicas, Z95);
            TailEstimate {
                t,
                q,
                replicas,
                exceed,
                estimate: exceed as f64 / replicas as f64,
                ci_lo,
                ci_hi,
                window_radius: radius,
                exact: exact_tail(family, q, t),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct MedianEstimate {
    pub q: f64,
    pub replicas: usize,
    pub median: f64,
    pub window_radius: usize,
    /// Samples still not emptied when the window stopped being exact.
    pub censored: usize,
}

/// Median emptying time over `replicas` product samples.
///
/// A sample in the box of radius `R` gives the exact infinite-volume time whenever that
/// time is at most `R / range`; later values are censored. The radius doubles until the
/// middle order statistics are uncensored.
pub fn median_tau0_bp(family: &UpdateFamily, q: f64, replicas: usize, seed: u64, start_radius: usize) -> Result<MedianEstimate> {
    if !(0.0 < q && q <= 1.0) {
        return param(format!("q = {q} outside (0,1]"));
    }
    if replicas == 0 {
        return param("no replicas");
    }
    let range = family.range() as usize;
    let mut radius = start_radius.max(range);
    loop {
        let limit = (radius / range) as u32;
        let region = Region::centered(family.dim(), radius)?;
        let cf = CompiledFamily::new(family, &region, &BoundaryCondition::AllOccupied)?;
        let origin = region.index([0, 0]).unwrap();
        let base = RandomStream::new(seed, "bp-median");
        let mut times: Vec<u32> = (0..replicas as u64)
            .into_par_iter()
            .map(|k| {
                let mut s = base.replica(k);
                let cfg = Configuration::sample_product(&region, q, &mut s).expect("q checked");
                closure_compiled(&cf, &cfg, Some(limit)).site_round[origin].unwrap_or(u32::MAX)
            })
            .collect();
        times.sort_unstable();
        let hi = times[replicas / 2];
        let lo = times[(replicas - 1) / 2];
        if hi != u32::MAX {
            let censored = times.iter().filter(|&&t| t == u32::MAX).count();
            return Ok(MedianEstimate {
                q,
                replicas,
                median: (lo as f64 + hi as f64) / 2.0,
                window_radius: radius,
                censored,
            });
        }
        if radius > 1 << 12 {
            return Err(Error::TooLarge(format!("median emptying time exceeds {limit} rounds")));
        }
        radius *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::CATALOG;
    use proptest::prelude::*;

    fn fam(name: &str) -> UpdateFamily {
        UpdateFamily::catalog(name).unwrap()
    }

    /// Iterate the synchronous map until nothing changes.
    fn naive_closure(f: &UpdateFamily, cfg: &Configuration, bc: &BoundaryCondition) -> (Configuration, u32, Vec<Option<u32>>) {
        let mut cur = cfg.clone();
        let mut rounds = 0;
        let mut site_round: Vec<Option<u32>> = (0..cfg.len()).map(|i| (!cfg.get(i)).then_some(0)).collect();
        loop {
            let next = bp_step(f, &cur, bc).unwrap();
            if next == cur {
                return (cur, rounds, site_round);
            }
            rounds += 1;
            for i in 0..cfg.len() {
                if cur.get(i) && !next.get(i) {
                    site_round[i] = Some(rounds);
                }
            }
            cur = next;
        }
    }

    #[test]
    fn east_single_step() {
        let c = Configuration::parse("4 1 0 0\n1110\n").unwrap();
        let next = bp_step(&fam("east1d"), &c, &BoundaryCondition::AllOccupied).unwrap();
        assert_eq!(next.bits_string(), "1100");
    }

    #[test]
    fn fa2f_corners_empty_first() {
        let r = Region::rect([0, 0], 3, 3).unwrap();
        let next = bp_step(&fam("fa2f-2d"), &Configuration::all_occupied(&r), &BoundaryCondition::AllEmpty).unwrap();
        let empty: Vec<Site> = next.empty_sites().into_iter().map(|i| r.site(i)).collect();
        assert_eq!(empty, vec![[0, 0], [2, 0], [0, 2], [2, 2]]);
    }

    #[test]
    fn row_and_column_fill_box() {
        let r = Region::rect([0, 0], 7, 7).unwrap();
        let c = Configuration::from_fn(&r, |s| s[0] != 3 && s[1] != 2);
        let f = fam("fa2f-2d");
        let res = closure(&f, &c, &BoundaryCondition::AllOccupied).unwrap();
        assert!(res.closure.is_all_empty());
        assert_eq!(res.closure, naive_closure(&f, &c, &BoundaryCondition::AllOccupied).0);
    }

    #[test]
    fn single_vacancy_is_stable_for_fa2f() {
        let r = Region::rect([0, 0], 5, 5).unwrap();
        let c = Configuration::all_occupied(&r).flip([2, 2]).unwrap();
        let res = closure(&fam("fa2f-2d"), &c, &BoundaryCondition::AllOccupied).unwrap();
        assert_eq!(res.closure, c);
        assert_eq!(res.rounds, 0);
        assert_eq!(tau0_bp(&fam("fa2f-2d"), &Configuration::all_occupied(&r), &BoundaryCondition::AllOccupied, [2, 2]).unwrap(), None);
    }

    #[test]
    fn east_rounds_are_distances() {
        let r = Region::line(0, 10).unwrap();
        let k = 6;
        let c = Configuration::all_occupied(&r).flip([k, 0]).unwrap();
        let res = closure(&fam("east1d"), &c, &BoundaryCondition::AllOccupied).unwrap();
        for j in 0..10 {
            let expect = if j <= k { Some((k - j) as u32) } else { None };
            assert_eq!(res.round_at([j, 0]), expect);
        }
        assert_eq!(tau0_bp(&fam("east1d"), &c, &BoundaryCondition::AllOccupied, [0, 0]).unwrap(), Some(6));
    }

    #[test]
    fn ergodic_boundaries() {
        let line = Region::line(0, 8).unwrap();
        assert!(is_ergodic_bc(&fam("east1d"), &line, &BoundaryCondition::AllEmpty).unwrap());
        assert!(!is_ergodic_bc(&fam("east1d"), &line, &BoundaryCondition::AllOccupied).unwrap());
        for n in 1..6 {
            let sq = Region::rect([0, 0], n, n).unwrap();
            assert!(!is_ergodic_bc(&fam("fa2f-2d"), &sq, &BoundaryCondition::AllOccupied).unwrap());
            assert!(is_ergodic_bc(&fam("fa2f-2d"), &sq, &BoundaryCondition::AllEmpty).unwrap());
        }
    }

    #[test]
    fn wilson_contains_proportion() {
        let (lo, hi) = wilson_interval(25, 100, Z95);
        assert!(lo < 0.25 && 0.25 < hi);
        assert!((lo - 0.1754).abs() < 1e-3 && (hi - 0.3430).abs() < 1e-3);
    }

    #[test]
    fn tail_examples() {
        let t = mc_tail(&fam("east1d"), 0.5, 1, 20_000, 1, None).unwrap();
        assert!(t.ci_lo <= 0.25 && 0.25 <= t.ci_hi, "{t:?}");
        let t = mc_tail(&fam("fa1f-1d"), 0.5, 1, 20_000, 2, None).unwrap();
        assert!(t.ci_lo <= 0.125 && 0.125 <= t.ci_hi, "{t:?}");
        let t = mc_tail(&fam("fa2f-2d"), 0.3, 0, 20_000, 3, None).unwrap();
        assert!(t.ci_lo <= 0.7 && 0.7 <= t.ci_hi, "{t:?}");
        assert!(mc_tail(&fam("east1d"), 0.5, 5, 1000, 1, Some(3)).is_err());
        assert!(mc_tail(&fam("east1d"), 0.5, 5, 10, 1, None).is_err());
    }

    #[test]
    fn median_is_reproducible() {
        let a = median_tau0_bp(&fam("fa2f-2d"), 0.15, 101, 9, 8).unwrap();
        let b = median_tau0_bp(&fam("fa2f-2d"), 0.15, 101, 9, 8).unwrap();
        assert_eq!(a.median, b.median);
        assert!(a.median >= 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn queue_equals_synchronous(seed in any::<u64>(), k in 0usize..12, q in 0.05f64..0.6, empty_bc in any::<bool>()) {
            let f = fam(CATALOG[k]);
            let region = if f.dim() == 1 { Region::line(0, 30).unwrap() } else { Region::rect([0, 0], 12, 12).unwrap() };
            let bc = if empty_bc { BoundaryCondition::AllEmpty } else { BoundaryCondition::AllOccupied };
            let mut s = RandomStream::new(seed, "queue");
            let c = Configuration::sample_product(&region, q, &mut s).unwrap();
            let res = closure(&f, &c, &bc).unwrap();
            let (naive, rounds, site_round) = naive_closure(&f, &c, &bc);
            prop_assert_eq!(&res.closure, &naive);
            prop_assert_eq!(res.rounds, rounds);
            prop_assert_eq!(&res.site_round, &site_round);
            prop_assert!(res.rounds as usize <= region.len());
            let again = closure(&f, &res.closure, &bc).unwrap();
            prop_assert_eq!(again.closure, res.closure.clone());
            prop_assert_eq!(bp_step(&f, &res.closure, &bc).unwrap(), res.closure);
        }

        #[test]
        fn closure_monotone_in_configuration(seed in any::<u64>(), k in 0usize..12) {
            let f = fam(CATALOG[k]);
            let region = if f.dim() == 1 { Region::line(0, 30).unwrap() } else { Region::rect([0, 0], 12, 12).unwrap() };
            let bc = BoundaryCondition::AllOccupied;
            let mut s = RandomStream::new(seed, "mono");
            let c = Configuration::sample_product(&region, 0.2, &mut s).unwrap();
            let mut more = c.clone();
            for i in 0..region.len() {
                if s.bernoulli(0.1) { more.set(i, false); }
            }
            let a = closure(&f, &c, &bc).unwrap().closure;
            let b = closure(&f, &more, &bc).unwrap().closure;
            prop_assert!(a.vacancies_subset_of(&b));
        }

        #[test]
        fn closure_monotone_in_family(seed in any::<u64>()) {
            let pairs = [("fa2f-2d", "fa1f-2d"), ("modified-fa2f", "fa2f-2d"), ("log3", "log1"), ("north-east", "east2d"), ("fa2f-1d", "fa1f-1d")];
            let (small, big) = pairs[(seed % 5) as usize];
            let (f1, f2) = (fam(small), fam(big));
            prop_assert!(f1.monotone_le(&f2));
            let region = if f1.dim() == 1 { Region::line(0, 30).unwrap() } else { Region::rect([0, 0], 12, 12).unwrap() };
            let mut s = RandomStream::new(seed, "fam-mono");
            let c = Configuration::sample_product(&region, 0.15, &mut s).unwrap();
            let a = closure(&f1, &c, &BoundaryCondition::AllOccupied).unwrap().closure;
            let b = closure(&f2, &c, &BoundaryCondition::AllOccupied).unwrap().closure;
            prop_assert!(a.vacancies_subset_of(&b));
        }
    }
}
