//! Exact finite-volume analysis of the constrained generator.
//!
//! A [`GeneratorModel`] holds one ergodic component (a closure fiber) of a region with at
//! most 20 sites. States are stored as vacancy masks (bit `i` set = site `i` empty). From a
//! state, a site whose constraint holds flips to empty at rate `q` and to occupied at rate
//! `1 - q`, which is reversible for the product measure. Eigenproblems use the symmetrized
//! matrix `D^{1/2} L D^{-1/2}`, whose off-diagonal entries all equal `sqrt(q (1 - q))`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{param, Error, Result};
use crate::family::{CompiledFamily, MaskFamily, UpdateFamily};
use crate::legalpath::{fiber_vacancies, MAX_ENUM_SITES};
use crate::lattice::{BoundaryCondition, Configuration, Region, Site};
use crate::rng::RandomStream;

/// Largest component handled by [`GeneratorModel::mixing_time`].
pub const MAX_MIXING_STATES: usize = 4096;
/// Hitting-time systems up to this size are solved by dense LU.
pub const DENSE_SOLVE_LIMIT: usize = 2048;

const EIG_TOL: f64 = 1e-10;
const SOLVE_TOL: f64 = 1e-10;
const POISSON_TAIL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct GeneratorModel {
    region: Region,
    q: f64,
    vac: Vec<u32>,
    mu: Vec<f64>,
    nbr_start: Vec<u32>,
    nbr: Vec<u32>,
    /// Rate of the move from the row state to `nbr[k]`.
    rate: Vec<f64>,
    exit: Vec<f64>,
    irreducible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    Auto,
    Dense,
    Iterative,
}

impl GeneratorModel {
    /// The component containing `of`.
    pub fn build(family: &UpdateFamily, bc: &BoundaryCondition, q: f64, of: &Configuration) -> Result<Self> {
        let region = of.region();
        let mf = Self::masks(family, region, bc, q)?;
        let vac = fiber_vacancies(&mf, mf.full() ^ of.to_mask() as u32);
        Ok(Self::assemble(region, &mf, q, vac, true))
    }

    /// Every configuration of the region; reducible unless the boundary is ergodic.
    pub fn build_full(family: &UpdateFamily, region: &Region, bc: &BoundaryCondition, q: f64) -> Result<Self> {
        let mf = Self::masks(family, region, bc, q)?;
        let vac: Vec<u32> = (0..=mf.full() as u64).map(|v| v as u32).collect();
        let irreducible = mf.closure(0) == mf.full() || region.len() == 0;
        Ok(Self::assemble(region, &mf, q, vac, irreducible))
    }

    fn masks(family: &UpdateFamily, region: &Region, bc: &BoundaryCondition, q: f64) -> Result<MaskFamily> {
        if !(q > 0.0 && q < 1.0) {
            return param(format!("q = {q} must lie in (0,1)"));
        }
        if region.len() > MAX_ENUM_SITES {
            return Err(Error::TooLarge(format!("{} sites exceed {MAX_ENUM_SITES}", region.len())));
        }
        CompiledFamily::new(family, region, bc)?.masks()
    }

    fn assemble(region: &Region, mf: &MaskFamily, q: f64, vac: Vec<u32>, irreducible: bool) -> Self {
        let n = region.len();
        let weight = |v: u32| {
            let k = v.count_ones() as i32;
            q.powi(k) * (1.0 - q).powi(n as i32 - k)
        };
        let mut mu: Vec<f64> = vac.iter().map(|&v| weight(v)).collect();
        let z: f64 = mu.iter().sum();
        mu.iter_mut().for_each(|m| *m /= z);
        let mut nbr_start = vec![0u32];
        let (mut nbr, mut rate, mut exit) = (Vec::new(), Vec::new(), Vec::with_capacity(vac.len()));
        for &v in &vac {
            let mut out = 0.0;
            for i in 0..n {
                if mf.constraint(v, i) {
                    let w = v ^ (1 << i);
                    let j = vac.binary_search(&w).expect("legal moves stay in the component");
                    let r = if v >> i & 1 == 1 { 1.0 - q } else { q };
                    nbr.push(j as u32);
                    rate.push(r);
                    out += r;
                }
            }
            exit.push(out);
            nbr_start.push(nbr.len() as u32);
        }
        GeneratorModel { region: region.clone(), q, vac, mu, nbr_start, nbr, rate, exit, irreducible }
    }

    pub fn len(&self) -> usize {
        self.vac.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vac.is_empty()
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn is_irreducible(&self) -> bool {
        self.irreducible
    }

    /// Stationary weights normalized on the state set.
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn exit_rates(&self) -> &[f64] {
        &self.exit
    }

    pub fn vacancies(&self, i: usize) -> u32 {
        self.vac[i]
    }

    pub fn configuration(&self, i: usize) -> Configuration {
        let full = if self.region.len() == 32 { u32::MAX } else { (1u32 << self.region.len()) - 1 };
        Configuration::from_mask(&self.region, (full ^ self.vac[i]) as u64)
    }

    pub fn index_of(&self, cfg: &Configuration) -> Option<usize> {
        if cfg.region() != &self.region {
            return None;
        }
        let full = if self.region.len() == 32 { u32::MAX } else { (1u32 << self.region.len()) - 1 };
        self.vac.binary_search(&(full ^ cfg.to_mask() as u32)).ok()
    }

    fn edges(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.nbr_start[i] as usize, self.nbr_start[i + 1] as usize);
        (a..b).map(move |k| (self.nbr[k] as usize, self.rate[k]))
    }

    pub fn apply_generator(&self, f: &[f64]) -> Vec<f64> {
        (0..self.len()).map(|i| self.edges(i).map(|(j, r)| r * (f[j] - f[i])).sum()).collect()
    }

    pub fn expectation(&self, f: &[f64]) -> f64 {
        self.mu.iter().zip(f).map(|(m, x)| m * x).sum()
    }

    pub fn variance(&self, f: &[f64]) -> f64 {
        let m = self.expectation(f);
        self.mu.iter().zip(f).map(|(w, x)| w * (x - m) * (x - m)).sum()
    }

    /// `sum_x mu(c_x Var_x f)`, written as half the edge sum `mu_i L_ij (f_j - f_i)^2`.
    pub fn dirichlet(&self, f: &[f64]) -> f64 {
        0.5 * (0..self.len())
            .map(|i| self.mu[i] * self.edges(i).map(|(j, r)| r * (f[j] - f[i]).powi(2)).sum::<f64>())
            .sum::<f64>()
    }

    /// Largest `|mu_i L_ij - mu_j L_ji|` over edges.
    pub fn detailed_balance_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.len() {
            for (j, r) in self.edges(i) {
                let back = self.edges(j).find(|&(k, _)| k == i).map(|(_, r)| r).unwrap_or(0.0);
                worst = worst.max((self.mu[i] * r - self.mu[j] * back).abs());
            }
        }
        worst
    }

    fn sym_offdiag(&self) -> f64 {
        (self.q * (1.0 - self.q)).sqrt()
    }

    /// `A = -D^{1/2} L D^{-1/2}`, positive semi-definite.
    fn apply_sym(&self, x: &[f64], out: &mut [f64]) {
        let c = self.sym_offdiag();
        for i in 0..self.len() {
            let (a, b) = (self.nbr_start[i] as usize, self.nbr_start[i + 1] as usize);
            let s: f64 = self.nbr[a..b].iter().map(|&j| x[j as usize]).sum();
            out[i] = self.exit[i] * x[i] - c * s;
        }
    }

    fn check_gap_defined(&self) -> Result<()> {
        if !self.irreducible {
            return param("the state space is not irreducible");
        }
        if self.len() < 2 {
            return param("a single-state component has no spectral gap");
        }
        Ok(())
    }

    /// `1 / gap` by restarted Lanczos with full reorthogonalization, deflating `sqrt(mu)`.
    pub fn relaxation_time(&self) -> Result<f64> {
        Ok(1.0 / self.spectral_gap()?)
    }

    pub fn spectral_gap(&self) -> Result<f64> {
        self.check_gap_defined()?;
        let n = self.len();
        let phi: Vec<f64> = self.mu.iter().map(|m| m.sqrt()).collect();
        let deflate = |v: &mut [f64]| {
            let d: f64 = v.iter().zip(&phi).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(&phi).for_each(|(a, b)| *a -= d * b);
        };
        let m = (n - 1).min(60).min((40_000_000 / n).max(2));
        let mut stream = RandomStream::new(0, "lanczos-start");
        let mut start: Vec<f64> = (0..n).map(|_| stream.uniform() - 0.5).collect();
        let scale = self.exit.iter().cloned().fold(0.0, f64::max).max(1e-300);
        let mut last_residual = f64::INFINITY;
        for _restart in 0..2000 {
            deflate(&mut start);
            deflate(&mut start);
            let nrm = norm(&start);
            if nrm == 0.0 {
                return Err(Error::NonConvergence { what: "lanczos start vector".into(), residual: f64::NAN });
            }
            start.iter_mut().for_each(|x| *x /= nrm);
            let mut basis: Vec<Vec<f64>> = vec![start.clone()];
            let (mut alpha, mut beta) = (Vec::new(), Vec::new());
            let mut w = vec![0.0; n];
            let mut exhausted = false;
            for j in 0..m {
                self.apply_sym(&basis[j], &mut w);
                let a = dot(&basis[j], &w);
                alpha.push(a);
                for _ in 0..2 {
                    for v in &basis {
                        let d = dot(v, &w);
                        w.iter_mut().zip(v).for_each(|(x, y)| *x -= d * y);
                    }
                    deflate(&mut w);
                }
                let b = norm(&w);
                if b <= 1e-13 * scale {
                    exhausted = true;
                    break;
                }
                beta.push(b);
                if j + 1 < m {
                    basis.push(w.iter().map(|x| x / b).collect());
                }
            }
            let k = alpha.len();
            let mut t = DMatrix::<f64>::zeros(k, k);
            for i in 0..k {
                t[(i, i)] = alpha[i];
                if i + 1 < k {
                    t[(i, i + 1)] = beta[i];
                    t[(i + 1, i)] = beta[i];
                }
            }
            let eig = SymmetricEigen::new(t);
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let theta = eig.eigenvalues[order[0]];
            let s = eig.eigenvectors.column(order[0]);
            let residual = if exhausted { 0.0 } else { (beta[k - 1] * s[k - 1]).abs() };
            let sep = if k > 1 { eig.eigenvalues[order[1]] - theta } else { f64::INFINITY };
            last_residual = residual;
            let bound = residual.min(if sep > 0.0 { residual * residual / sep } else { f64::INFINITY });
            if theta > 0.0 && bound <= EIG_TOL * theta {
                return Ok(theta);
            }
            if exhausted && theta <= 0.0 {
                break;
            }
            let mut y = vec![0.0; n];
            for (c, v) in s.iter().zip(&basis) {
                y.iter_mut().zip(v).for_each(|(a, b)| *a += c * b);
            }
            start = y;
        }
        Err(Error::NonConvergence { what: "spectral gap".into(), residual: last_residual })
    }

    /// Dense symmetric eigensolve; intended as a cross-check for small components.
    pub fn spectral_gap_dense(&self) -> Result<f64> {
        self.check_gap_defined()?;
        let n = self.len();
        let c = self.sym_offdiag();
        let mut a = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = self.exit[i];
            for (j, _) in self.edges(i) {
                a[(i, j)] = -c;
            }
        }
        let mut ev: Vec<f64> = SymmetricEigen::new(a).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        Ok(ev[1])
    }

    /// Expected time to empty `origin` from every state (zero on the target).
    pub fn hitting_times(&self, origin: Site, solver: Solver) -> Result<Vec<f64>> {
        let bit = self.region.index(origin).ok_or(Error::OutOfRegion(origin))?;
        let target: Vec<bool> = self.vac.iter().map(|v| v >> bit & 1 == 1).collect();
        if !target.iter().any(|&t| t) {
            return param(format!("no state of the component has {origin:?} empty"));
        }
        let free: Vec<usize> = (0..self.len()).filter(|&i| !target[i]).collect();
        let mut pos = vec![usize::MAX; self.len()];
        for (k, &i) in free.iter().enumerate() {
            pos[i] = k;
        }
        let m = free.len();
        let mut h = vec![0.0; self.len()];
        if m == 0 {
            return Ok(h);
        }
        let dense = match solver {
            Solver::Auto => m <= DENSE_SOLVE_LIMIT,
            Solver::Dense => true,
            Solver::Iterative => false,
        };
        let sol = if dense {
            let mut k = DMatrix::<f64>::zeros(m, m);
            for (r, &i) in free.iter().enumerate() {
                k[(r, r)] = self.exit[i];
                for (j, rate) in self.edges(i) {
                    if pos[j] != usize::MAX {
                        k[(r, pos[j])] -= rate;
                    }
                }
            }
            let x = k
                .lu()
                .solve(&DVector::from_element(m, 1.0))
                .ok_or(Error::NonConvergence { what: "hitting-time system is singular".into(), residual: f64::NAN })?;
            x.iter().copied().collect::<Vec<f64>>()
        } else {
            self.hitting_cg(&free, &pos)?
        };
        for (k, &i) in free.iter().enumerate() {
            h[i] = sol[k];
        }
        Ok(h)
    }

    /// Jacobi-preconditioned CG on the symmetrized system `D^{1/2} K D^{-1/2} g = D^{1/2} 1`.
    fn hitting_cg(&self, free: &[usize], pos: &[usize]) -> Result<Vec<f64>> {
        let m = free.len();
        let c = self.sym_offdiag();
        let diag: Vec<f64> = free.iter().map(|&i| self.exit[i]).collect();
        let apply = |x: &[f64], out: &mut [f64]| {
            for (r, &i) in free.iter().enumerate() {
                let (a, b) = (self.nbr_start[i] as usize, self.nbr_start[i + 1] as usize);
                let s: f64 = self.nbr[a..b].iter().map(|&j| pos[j as usize]).filter(|&p| p != usize::MAX).map(|p| x[p]).sum();
                out[r] = diag[r] * x[r] - c * s;
            }
        };
        let b: Vec<f64> = free.iter().map(|&i| self.mu[i].sqrt()).collect();
        let bnorm = norm(&b);
        let mut x = vec![0.0; m];
        let mut r = b.clone();
        let mut z: Vec<f64> = r.iter().zip(&diag).map(|(a, d)| a / d).collect();
        let mut p = z.clone();
        let mut ap = vec![0.0; m];
        let mut rz = dot(&r, &z);
        let mut res = norm(&r);
        for _ in 0..(20 * m + 1000) {
            if res <= SOLVE_TOL * bnorm {
                return Ok(x.iter().zip(free).map(|(g, &i)| g / self.mu[i].sqrt()).collect());
            }
            apply(&p, &mut ap);
            let step = rz / dot(&p, &ap);
            x.iter_mut().zip(&p).for_each(|(a, b)| *a += step * b);
            r.iter_mut().zip(&ap).for_each(|(a, b)| *a -= step * b);
            z.iter_mut().zip(r.iter().zip(&diag)).for_each(|(zz, (a, d))| *zz = a / d);
            let rz2 = dot(&r, &z);
            let beta = rz2 / rz;
            rz = rz2;
            p.iter_mut().zip(&z).for_each(|(a, b)| *a = b + beta * *a);
            res = norm(&r);
        }
        Err(Error::NonConvergence { what: "hitting-time conjugate gradient".into(), residual: res / bnorm })
    }

    /// `E_mu[tau_0]` for the stationary start restricted to the component.
    pub fn mean_hitting_tau0(&self, origin: Site) -> Result<f64> {
        let h = self.hitting_times(origin, Solver::Auto)?;
        Ok(self.expectation(&h))
    }

    /// Smallest `t` with `max_x d_TV(delta_x P_t, mu) <= eps`, to relative precision 1e-9.
    pub fn mixing_time(&self, eps: f64) -> Result<f64> {
        if !(eps > 0.0 && eps < 1.0) {
            return param(format!("epsilon = {eps} must lie in (0,1)"));
        }
        if self.len() > MAX_MIXING_STATES {
            return Err(Error::TooLarge(format!("{} states exceed {MAX_MIXING_STATES}", self.len())));
        }
        if !self.irreducible {
            return param("the state space is not irreducible");
        }
        let lambda = self.exit.iter().cloned().fold(0.0, f64::max);
        let per_start: Vec<Result<f64>> = (0..self.len()).into_par_iter().map(|x| self.mixing_from(x, eps, lambda)).collect();
        let mut worst = 0.0f64;
        for t in per_start {
            worst = worst.max(t?);
        }
        Ok(worst)
    }

    fn mixing_from(&self, x: usize, eps: f64, lambda: f64) -> Result<f64> {
        if 1.0 - self.mu[x] <= eps {
            return Ok(0.0);
        }
        let mut powers: Vec<Vec<f64>> = vec![{
            let mut v = vec![0.0; self.len()];
            v[x] = 1.0;
            v
        }];
        let tv = |t: f64, powers: &mut Vec<Vec<f64>>| -> f64 {
            let w = poisson_weights(lambda * t);
            while powers.len() < w.len() {
                let next = self.uniformized_step(powers.last().unwrap(), lambda);
                powers.push(next);
            }
            let mut p = vec![0.0; self.len()];
            for (wk, v) in w.iter().zip(powers.iter()) {
                if *wk > 0.0 {
                    p.iter_mut().zip(v).for_each(|(a, b)| *a += wk * b);
                }
            }
            0.5 * p.iter().zip(&self.mu).map(|(a, m)| (a - m).abs()).sum::<f64>()
        };
        let mut hi = 1.0 / lambda;
        let mut lo = 0.0;
        let mut doublings = 0;
        while tv(hi, &mut powers) > eps {
            lo = hi;
            hi *= 2.0;
            doublings += 1;
            if doublings > 60 {
                return Err(Error::NonConvergence { what: "mixing-time bracket".into(), residual: hi });
            }
        }
        while hi - lo > 1e-9 * hi {
            let mid = 0.5 * (lo + hi);
            if tv(mid, &mut powers) > eps {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// `v P` with `P = I + L / lambda`.
    fn uniformized_step(&self, v: &[f64], lambda: f64) -> Vec<f64> {
        let mut out: Vec<f64> = v.iter().zip(&self.exit).map(|(a, e)| a * (1.0 - e / lambda)).collect();
        for i in 0..self.len() {
            if v[i] != 0.0 {
                for (j, r) in self.edges(i) {
                    out[j] += v[i] * r / lambda;
                }
            }
        }
        out
    }
}

/// Poisson(m) probabilities up to the point where the remaining mass is below 1e-12.
fn poisson_weights(m: f64) -> Vec<f64> {
    if m == 0.0 {
        return vec![1.0];
    }
    let mut out = Vec::new();
    let mut lw = -m;
    let lm = m.ln();
    let mut k = 0usize;
    loop {
        let w = lw.exp();
        out.push(w);
        k += 1;
        let ratio = m / k as f64;
        if (k as f64) > m && ratio < 1.0 && w * ratio / (1.0 - ratio) < POISSON_TAIL {
            return out;
        }
        lw += lm - (k as f64).ln();
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Closed-form relaxation time of the two-site East chain with an empty right boundary.
pub fn two_block_trel(q: f64) -> f64 {
    1.0 / (1.0 - (1.0 - q).sqrt())
}
