//! Continuous-time KCM by the graphical construction.
//!
//! Rings come from a single Exponential(|Λ|) clock with a uniformly chosen site, which is
//! equal in law to independent unit-rate clocks at every site. Every ring draws a coin
//! `Bernoulli(1 - q)`; the coin is applied only if the constraint holds at that instant.
//! Ties have probability zero and the stream yields a strict order of events.

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::bootstrap::closure_compiled;
use crate::error::{param, Error, Result};
use crate::family::{CompiledFamily, UpdateFamily};
use crate::lattice::{BoundaryCondition, Configuration, Region, Site};
use crate::rng::RandomStream;

#[derive(Debug, Clone, PartialEq)]
pub enum Initial {
    /// Each site empty with the given probability.
    Product(f64),
    Explicit(Configuration),
    AllOccupiedExcept(Vec<Site>),
}

#[derive(Debug, Clone)]
pub struct SimParams {
    pub family: UpdateFamily,
    pub region: Region,
    pub bc: BoundaryCondition,
    pub q: f64,
    pub horizon: f64,
    pub seed: u64,
    pub replica: u64,
    pub initial: Initial,
    pub origin: Site,
    /// Times at which the configuration is recorded.
    pub snapshots: Vec<f64>,
    /// End the run as soon as the origin is first empty.
    pub stop_at_tau0: bool,
}

impl SimParams {
    /// Stationary start, origin at `(0,0)` when it lies in the region.
    pub fn new(family: UpdateFamily, region: Region, bc: BoundaryCondition, q: f64, horizon: f64, seed: u64) -> Self {
        let origin = if region.contains([0, 0]) { [0, 0] } else { region.origin() };
        SimParams {
            family,
            region,
            bc,
            q,
            horizon,
            seed,
            replica: 0,
            initial: Initial::Product(q),
            origin,
            snapshots: Vec::new(),
            stop_at_tau0: false,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q < 1.0) {
            return param(format!("q = {} must lie in (0,1)", self.q));
        }
        if !(self.horizon >= 0.0) {
            return param(format!("horizon {} must be non-negative", self.horizon));
        }
        if !self.region.contains(self.origin) {
            return Err(Error::OutOfRegion(self.origin));
        }
        if self.snapshots.iter().any(|t| !(*t >= 0.0)) {
            return param("snapshot times must be non-negative");
        }
        Ok(())
    }

    fn initial_configuration(&self) -> Result<Configuration> {
        match &self.initial {
            Initial::Product(q0) => {
                let mut s = RandomStream::for_replica(self.seed, "kcm-initial", self.replica);
                Configuration::sample_product(&self.region, *q0, &mut s)
            }
            Initial::Explicit(c) => {
                if c.region() != &self.region {
                    return param("initial configuration lives on a different region");
                }
                Ok(c.clone())
            }
            Initial::AllOccupiedExcept(sites) => {
                let mut c = Configuration::all_occupied(&self.region);
                for &s in sites {
                    let i = self.region.index(s).ok_or(Error::OutOfRegion(s))?;
                    c.set(i, false);
                }
                Ok(c)
            }
        }
    }
}

fn as_text<S: Serializer>(c: &Configuration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&c.to_text())
}

fn snapshots_as_text<S: Serializer>(v: &[(f64, Configuration)], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for (t, c) in v {
        seq.serialize_element(&(t, c.to_text()))?;
    }
    seq.end()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub q: f64,
    pub horizon: f64,
    pub seed: u64,
    pub replica: u64,
    pub origin: Site,
    /// First time the origin is empty.
    pub tau0: Option<f64>,
    /// First time the origin is occupied.
    pub tau1: Option<f64>,
    pub tau_or: Option<f64>,
    /// Clock rings processed, legal or not.
    pub events: u64,
    pub legal_updates: u64,
    /// Time at which the run stopped.
    pub end_time: f64,
    #[serde(serialize_with = "as_text")]
    pub initial: Configuration,
    #[serde(rename = "final", serialize_with = "as_text")]
    pub final_cfg: Configuration,
    #[serde(serialize_with = "snapshots_as_text")]
    pub snapshots: Vec<(f64, Configuration)>,
}

pub fn simulate(params: &SimParams) -> Result<TrajectoryRecord> {
    params.check()?;
    let cf = CompiledFamily::new(&params.family, &params.region, &params.bc)?;
    let initial = params.initial_configuration()?;
    Ok(run(&cf, params, initial))
}

fn run(cf: &CompiledFamily, p: &SimParams, initial: Configuration) -> TrajectoryRecord {
    let n = p.region.len();
    let o = p.region.index(p.origin).expect("checked");
    let mut stream = RandomStream::for_replica(p.seed, "kcm", p.replica);
    let mut cfg = initial.clone();
    let mut tau0 = (!cfg.get(o)).then_some(0.0);
    let mut tau1 = cfg.get(o).then_some(0.0);
    let mut snaps: Vec<f64> = p.snapshots.iter().copied().filter(|t| *t <= p.horizon).collect();
    snaps.sort_by(f64::total_cmp);
    let mut snap_iter = snaps.into_iter().peekable();
    let mut snapshots = Vec::new();
    let (mut t, mut events, mut legal) = (0.0f64, 0u64, 0u64);
    let p_occ = 1.0 - p.q;
    let stopped = |tau0: Option<f64>| p.stop_at_tau0 && tau0.is_some();
    let mut end_time = p.horizon;
    if stopped(tau0) {
        end_time = 0.0;
    } else {
        loop {
            let next = t + stream.exponential(n as f64);
            while let Some(&s) = snap_iter.peek() {
                if s < next {
                    snapshots.push((s, cfg.clone()));
                    snap_iter.next();
                } else {
                    break;
                }
            }
            if next > p.horizon {
                break;
            }
            t = next;
            events += 1;
            let i = stream.below(n as u64) as usize;
            let coin = stream.bernoulli(p_occ);
            if cfg.get(i) != coin && cf.constraint(&cfg, i) {
                cfg.set(i, coin);
                legal += 1;
                if i == o {
                    if coin {
                        tau1.get_or_insert(t);
                    } else {
                        tau0.get_or_insert(t);
                    }
                }
                if stopped(tau0) {
                    end_time = t;
                    break;
                }
            }
        }
    }
    if !stopped(tau0) {
        for s in snap_iter {
            snapshots.push((s, cfg.clone()));
        }
    }
    let tau_or = match (tau0, tau1) {
        (Some(a), Some(b)) => Some(a.max(b)),
        _ => None,
    };
    TrajectoryRecord {
        q: p.q,
        horizon: p.horizon,
        seed: p.seed,
        replica: p.replica,
        origin: p.origin,
        tau0,
        tau1,
        tau_or,
        events,
        legal_updates: legal,
        end_time,
        initial,
        final_cfg: cfg,
        snapshots,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tau0Sample {
    pub q: f64,
    pub replica: u64,
    /// Hitting time, or the horizon when censored.
    pub tau0: f64,
    pub censored: bool,
}

/// First time the origin is empty, right-censored at the horizon.
pub fn hit_tau0(params: &SimParams) -> Result<Tau0Sample> {
    let mut p = params.clone();
    p.stop_at_tau0 = true;
    p.snapshots.clear();
    let r = simulate(&p)?;
    Ok(Tau0Sample {
        q: p.q,
        replica: p.replica,
        tau0: r.tau0.unwrap_or(p.horizon),
        censored: r.tau0.is_none(),
    })
}

/// Window for infinite-volume proxies: `ceil(20 / q)` sites on every side the family reads.
pub fn scan_region(family: &UpdateFamily, q: f64) -> Result<Region> {
    if !(q > 0.0 && q < 1.0) {
        return param(format!("q = {q} must lie in (0,1)"));
    }
    let ext = (20.0 / q).ceil() as i64;
    let reach = |axis: usize, sign: i64| family.offsets().any(|o| (o[axis] as i64) * sign > 0);
    let lo = |axis| if reach(axis, -1) { ext } else { 0 };
    let hi = |axis| if reach(axis, 1) { ext } else { 0 };
    if family.dim() == 1 {
        Region::line(-lo(0), (lo(0) + hi(0) + 1) as usize)
    } else {
        Region::rect([-lo(0), -lo(1)], (lo(0) + hi(0) + 1) as usize, (lo(1) + hi(1) + 1) as usize)
    }
}

/// Stationary-start `tau0` samples on the scan window with an empty boundary.
pub fn scan_tau0(family: &UpdateFamily, q: f64, replicas: u64, seed: u64, horizon: f64) -> Result<Vec<Tau0Sample>> {
    let region = scan_region(family, q)?;
    let base = SimParams::new(family.clone(), region, BoundaryCondition::AllEmpty, q, horizon, seed);
    base.check()?;
    let cf = CompiledFamily::new(family, &base.region, &base.bc)?;
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut p = base.clone();
            p.replica = r;
            p.stop_at_tau0 = true;
            let initial = p.initial_configuration()?;
            let rec = run(&cf, &p, initial);
            Ok(Tau0Sample { q, replica: r, tau0: rec.tau0.unwrap_or(horizon), censored: rec.tau0.is_none() })
        })
        .collect()
}

/// Whether every snapshot has the same bootstrap closure.
pub fn trajectory_closure_check(record: &TrajectoryRecord, family: &UpdateFamily, bc: &BoundaryCondition) -> Result<bool> {
    let cf = CompiledFamily::new(family, record.initial.region(), bc)?;
    let top = closure_compiled(&cf, &record.initial, None).closure;
    for c in record.snapshots.iter().map(|(_, c)| c).chain([&record.final_cfg]) {
        if closure_compiled(&cf, c, None).closure != top {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, Serialize)]
pub struct FrontRecord {
    pub q: f64,
    pub length: usize,
    pub horizon: f64,
    pub seed: u64,
    pub replica: u64,
    /// `(time, position)` after every front move, starting with `(0, L - 1)`.
    pub series: Vec<(f64, i64)>,
    pub burn_in: f64,
    pub end_time: f64,
    pub halted_early: bool,
    pub moves_after_burn_in: u64,
    /// Per-batch speed and time-averaged vacancy indicator right of the front.
    pub batch_speed: Vec<f64>,
    pub batch_p1: Vec<f64>,
    pub events: u64,
}

pub const FRONT_BATCHES: usize = 20;

/// East process on `{0,..,L-1}` with an empty site at `L`, started from a single vacancy at
/// `L - 1`. Sites left of `X - 1` (X = front) have an occupied right neighbour and cannot
/// move, so only `[X - 1, L)` is simulated; the ring rate is the size of that set. The
/// vacancy frequency right of the front is averaged over time after a burn-in of a tenth of
/// the horizon. The run halts if the front reaches site 1.
pub fn front_run(q: f64, length: usize, horizon: f64, seed: u64, replica: u64) -> Result<FrontRecord> {
    if !(q > 0.0 && q < 1.0) {
        return param(format!("q = {q} must lie in (0,1)"));
    }
    if length < 4 || !(horizon > 0.0) {
        return param("front runs need at least 4 sites and a positive horizon");
    }
    let l = length as i64;
    let mut occ = vec![true; length];
    occ[length - 1] = false;
    let mut x = l - 1;
    let mut stream = RandomStream::for_replica(seed, "east-front", replica);
    let burn = 0.1 * horizon;
    let width = (horizon - burn) / FRONT_BATCHES as f64;
    let mut series = vec![(0.0, x)];
    let (mut t, mut events) = (0.0f64, 0u64);
    let mut batch = 0usize;
    let mut batch_start_x = x;
    let mut acc = 0.0;
    let mut batch_speed = Vec::new();
    let mut batch_p1 = Vec::new();
    let mut moves = 0u64;
    let mut halted = false;
    let empty_right = |occ: &[bool], x: i64| x + 1 >= l || !occ[(x + 1) as usize];
    while batch < FRONT_BATCHES {
        if x <= 1 {
            halted = true;
            break;
        }
        let lo = x - 1;
        let active = (l - lo) as f64;
        let next = (t + stream.exponential(active)).min(horizon);
        let ind = empty_right(&occ, x) as u8 as f64;
        if t < burn && next >= burn {
            batch_start_x = x;
        }
        let mut s = t.max(burn);
        while next > s {
            let edge = if batch + 1 == FRONT_BATCHES { horizon } else { burn + (batch + 1) as f64 * width };
            let seg_end = next.min(edge);
            acc += ind * (seg_end - s);
            s = seg_end;
            if seg_end >= edge {
                batch_speed.push((x - batch_start_x) as f64 / width);
                batch_p1.push(acc / width);
                batch_start_x = x;
                acc = 0.0;
                batch += 1;
                if batch == FRONT_BATCHES {
                    break;
                }
            } else {
                break;
            }
        }
        if next >= horizon {
            t = horizon;
            break;
        }
        t = next;
        events += 1;
        let site = lo + stream.below(active as u64) as i64;
        let coin = stream.bernoulli(1.0 - q);
        if empty_right(&occ, site) {
            let su = site as usize;
            if occ[su] != coin {
                occ[su] = coin;
                let old = x;
                if !coin && site == x - 1 {
                    x -= 1;
                } else if coin && site == x {
                    x += 1;
                }
                if x != old {
                    series.push((t, x));
                    if t >= burn {
                        moves += 1;
                    }
                }
            }
        }
    }
    Ok(FrontRecord {
        q,
        length,
        horizon,
        seed,
        replica,
        series,
        burn_in: burn,
        end_time: t,
        halted_early: halted,
        moves_after_burn_in: moves,
        batch_speed,
        batch_p1,
        events,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FrontEstimate {
    pub q: f64,
    pub v_hat: f64,
    pub p1_hat: f64,
    pub se_v: f64,
    pub se_p1: f64,
    /// `sqrt(se_v^2 + ((1 - q) se_p1)^2)`
    pub se_combined: f64,
    /// `v_hat - (-q + (1 - q) p1_hat)`
    pub identity_gap: f64,
    pub batches: usize,
    pub moves: u64,
}

/// Batch-means pooling of completed batches over several front runs.
pub fn pool_fronts(runs: &[FrontRecord]) -> Result<FrontEstimate> {
    let q = runs.first().ok_or_else(|| Error::Parameter("no front runs".into()))?.q;
    let v: Vec<f64> = runs.iter().flat_map(|r| r.batch_speed.iter().copied()).collect();
    let p: Vec<f64> = runs.iter().flat_map(|r| r.batch_p1.iter().copied()).collect();
    if v.len() < 2 {
        return param("need at least two completed batches");
    }
    let mean_se = |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (var / n).sqrt())
    };
    let (v_hat, se_v) = mean_se(&v);
    let (p1_hat, se_p1) = mean_se(&p);
    Ok(FrontEstimate {
        q,
        v_hat,
        p1_hat,
        se_v,
        se_p1,
        se_combined: (se_v * se_v + ((1.0 - q) * se_p1).powi(2)).sqrt(),
        identity_gap: v_hat - (-q + (1.0 - q) * p1_hat),
        batches: v.len(),
        moves: runs.iter().map(|r| r.moves_after_burn_in).sum(),
    })
}
