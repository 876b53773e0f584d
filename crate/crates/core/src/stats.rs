//! Estimators and scaling fits: censoring-aware means, bootstrap standard errors,
//! least-squares fits of `log tau` against `log(1/q)` or `log^2(1/q)`, and the trend
//! statistic for two-neighbour bootstrap percolation.

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{param, Error, Result};
use crate::kcm::Tau0Sample;
use crate::rng::RandomStream;

/// Largest censored fraction accepted by the fits.
pub const MAX_CENSORED: f64 = 0.05;
pub const BOOTSTRAP_RESAMPLES: usize = 1000;
/// `pi^2 / 18`
pub const LAMBDA_2N: f64 = std::f64::consts::PI * std::f64::consts::PI / 18.0;

/// Mean of fully observed values. Panics if any value is censored.
pub fn uncensored_mean(values: &[f64], censored: &[bool]) -> f64 {
    assert!(!censored.iter().any(|&c| c), "censored samples cannot enter a plain mean");
    values.iter().sum::<f64>() / values.len() as f64
}

/// Kaplan-Meier restricted mean up to the largest observed time.
pub fn km_restricted_mean(times: &[f64], censored: &[bool]) -> f64 {
    let mut idx: Vec<usize> = (0..times.len()).collect();
    idx.sort_by(|&a, &b| times[a].total_cmp(&times[b]).then(censored[a].cmp(&censored[b])));
    let mut at_risk = times.len() as f64;
    let (mut surv, mut last, mut area) = (1.0, 0.0, 0.0);
    let mut k = 0;
    while k < idx.len() {
        let t = times[idx[k]];
        area += surv * (t - last);
        last = t;
        let (mut deaths, mut leaving) = (0.0, 0.0);
        while k < idx.len() && times[idx[k]] == t {
            if !censored[idx[k]] {
                deaths += 1.0;
            }
            leaving += 1.0;
            k += 1;
        }
        surv *= 1.0 - deaths / at_risk;
        at_risk -= leaving;
    }
    area
}

/// Standard error of `stat` by nonparametric bootstrap.
pub fn bootstrap_se<T: Sync>(data: &[T], resamples: usize, seed: u64, stat: impl Fn(&[&T]) -> f64 + Sync) -> f64 {
    let n = data.len();
    if n < 2 {
        return f64::NAN;
    }
    let vals: Vec<f64> = (0..resamples as u64)
        .into_par_iter()
        .map(|r| {
            let mut s = RandomStream::for_replica(seed, "bootstrap", r);
            let pick: Vec<&T> = (0..n).map(|_| &data[s.below(n as u64) as usize]).collect();
            stat(&pick)
        })
        .collect();
    let m = vals.iter().sum::<f64>() / vals.len() as f64;
    (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QSample {
    pub q: f64,
    pub mean: f64,
    pub se: f64,
    pub n: usize,
    pub censored_fraction: f64,
}

/// Mean hitting time at one `q`. Plain mean when nothing is censored, Kaplan-Meier
/// restricted mean below 5% censoring, refusal above.
pub fn summarize(samples: &[Tau0Sample], seed: u64) -> Result<QSample> {
    let first = samples.first().ok_or_else(|| Error::Parameter("no samples".into()))?;
    if samples.iter().any(|s| s.q != first.q) {
        return param("samples mix several values of q");
    }
    let n = samples.len();
    let cens = samples.iter().filter(|s| s.censored).count() as f64 / n as f64;
    if cens >= MAX_CENSORED {
        return Err(Error::Censored(format!("{:.1}% of the samples at q = {} are censored", 100.0 * cens, first.q)));
    }
    let mean_of = |xs: &[&Tau0Sample]| {
        let t: Vec<f64> = xs.iter().map(|s| s.tau0).collect();
        let c: Vec<bool> = xs.iter().map(|s| s.censored).collect();
        if c.iter().any(|&x| x) {
            km_restricted_mean(&t, &c)
        } else {
            uncensored_mean(&t, &c)
        }
    };
    let all: Vec<&Tau0Sample> = samples.iter().collect();
    let mean = mean_of(&all);
    let se = bootstrap_se(samples, BOOTSTRAP_RESAMPLES, seed, mean_of);
    Ok(QSample { q: first.q, mean, se, n, censored_fraction: cens })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitModel {
    PowerLaw,
    ExpLogSquared,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub model: FitModel,
    pub slope: f64,
    /// Residual and propagated sample errors combined.
    pub slope_se: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: Vec<QSample>,
    pub valid: bool,
}

fn fit(model: FitModel, samples: &[QSample]) -> Result<FitReport> {
    let mut qs: Vec<f64> = samples.iter().map(|s| s.q).collect();
    qs.sort_by(f64::total_cmp);
    qs.dedup();
    if qs.len() < 4 {
        return param(format!("a fit needs at least 4 distinct q values, got {}", qs.len()));
    }
    if let Some(s) = samples.iter().find(|s| s.censored_fraction >= MAX_CENSORED) {
        return Err(Error::Censored(format!("censored fraction {} at q = {}", s.censored_fraction, s.q)));
    }
    if samples.iter().any(|s| !(s.q > 0.0 && s.q < 1.0) || !(s.mean > 0.0)) {
        return param("fits need q in (0,1) and positive means");
    }
    let xs: Vec<f64> = samples
        .iter()
        .map(|s| {
            let l = (1.0 / s.q).ln();
            match model {
                FitModel::PowerLaw => l,
                FitModel::ExpLogSquared => l * l,
            }
        })
        .collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.mean.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { (1.0 - ssr / syy).clamp(0.0, 1.0) };
    let resid_var = if n > 2.0 { ssr / (n - 2.0) / sxx } else { 0.0 };
    let prop_var: f64 =
        xs.iter().zip(samples).map(|(x, s)| ((x - mx) / sxx).powi(2) * (s.se / s.mean).powi(2)).sum();
    Ok(FitReport {
        model,
        slope,
        slope_se: (resid_var + prop_var).sqrt(),
        intercept,
        r2,
        points: samples.to_vec(),
        valid: true,
    })
}

/// OLS of `log mean` on `log(1/q)`.
pub fn fit_power(samples: &[QSample]) -> Result<FitReport> {
    fit(FitModel::PowerLaw, samples)
}

/// OLS of `log mean` on `log^2(1/q)`.
pub fn fit_explog2(samples: &[QSample]) -> Result<FitReport> {
    fit(FitModel::ExpLogSquared, samples)
}

#[derive(Debug, Clone, Serialize)]
pub struct TrendReport {
    /// `(q, median, q log median)` along the grid.
    pub points: Vec<(f64, f64, f64)>,
    pub increasing: bool,
    pub below_lambda: bool,
    pub lambda: f64,
}

/// `s(q) = q log(median)` on a strictly decreasing grid of `q`.
pub fn bp2n_trend(medians: &[(f64, f64)]) -> Result<TrendReport> {
    if medians.is_empty() {
        return param("empty grid");
    }
    if medians.windows(2).any(|w| !(w[1].0 < w[0].0)) {
        return param("the q grid must be strictly decreasing");
    }
    if medians.iter().any(|&(_, m)| !(m > 0.0)) {
        return param("medians must be positive");
    }
    let points: Vec<(f64, f64, f64)> = medians.iter().map(|&(q, m)| (q, m, q * m.ln())).collect();
    Ok(TrendReport {
        increasing: points.windows(2).all(|w| w[1].2 > w[0].2),
        below_lambda: points.iter().all(|p| p.2 < LAMBDA_2N),
        points,
        lambda: LAMBDA_2N,
    })
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Upper tail probability of a chi-square statistic.
pub fn chi_square_pvalue(stat: f64, dof: usize) -> f64 {
    1.0 - ChiSquared::new(dof as f64).expect("positive degrees of freedom").cdf(stat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const GRID: [f64; 6] = [0.30, 0.25, 0.20, 0.15, 0.125, 0.10];

    fn synth(f: impl Fn(f64) -> f64) -> Vec<QSample> {
        GRID.iter().map(|&q| QSample { q, mean: f(q), se: 0.0, n: 100, censored_fraction: 0.0 }).collect()
    }

    #[test]
    fn exact_power_law() {
        let r = fit_power(&synth(|q| q.powi(-3))).unwrap();
        assert!((r.slope - 3.0).abs() < 1e-9);
        assert!(r.slope_se < 1e-9);
        assert!((r.r2 - 1.0).abs() < 1e-12);
        let c = fit_power(&synth(|_| 7.0)).unwrap();
        assert!(c.slope.abs() < 1e-12);
    }

    #[test]
    fn exact_exp_log_squared() {
        let k = 1.0 / (2.0 * 2f64.ln());
        let r = fit_explog2(&synth(|q| ((1.0 / q).ln().powi(2) * k).exp())).unwrap();
        assert!((r.slope - k).abs() < 1e-9);
        assert!((r.slope - 0.7213).abs() < 1e-4);
    }

    #[test]
    fn fits_refuse_bad_input() {
        let one = vec![QSample { q: 0.1, mean: 3.0, se: 0.1, n: 10, censored_fraction: 0.0 }];
        assert!(fit_power(&one).is_err());
        assert!(fit_explog2(&one).is_err());
        let mut s = synth(|q| 1.0 / q);
        s[2].censored_fraction = 0.06;
        assert!(matches!(fit_power(&s), Err(Error::Censored(_))));
    }

    #[test]
    fn km_equals_mean_without_censoring() {
        let t = [3.0, 1.0, 4.0, 1.0, 5.0];
        let c = [false; 5];
        assert!((km_restricted_mean(&t, &c) - 2.8).abs() < 1e-12);
        let t2 = [1.0, 2.0, 3.0, 3.0];
        let c2 = [false, false, false, true];
        assert!((km_restricted_mean(&t2, &c2) - (1.0 + 0.75 + 0.5)).abs() < 1e-12);
    }

    #[test]
    #[should_panic]
    fn censored_values_cannot_enter_a_plain_mean() {
        uncensored_mean(&[1.0, 2.0], &[false, true]);
    }

    #[test]
    fn summarize_policies() {
        let mk = |k: usize, cens: bool| Tau0Sample { q: 0.2, replica: k as u64, tau0: k as f64, censored: cens };
        let clean: Vec<Tau0Sample> = (0..100).map(|k| mk(k, false)).collect();
        let s = summarize(&clean, 1).unwrap();
        assert!((s.mean - 49.5).abs() < 1e-12);
        assert!((s.se - 29.0 / 10.0).abs() < 0.4);
        let few: Vec<Tau0Sample> = (0..100).map(|k| mk(k, k >= 97)).collect();
        assert!(summarize(&few, 1).is_ok());
        let many: Vec<Tau0Sample> = (0..100).map(|k| mk(k, k >= 90)).collect();
        assert!(matches!(summarize(&many, 1), Err(Error::Censored(_))));
    }

    #[test]
    fn trend_statistic() {
        let l2 = 7.05;
        let grid = [0.12, 0.10, 0.08];
        let med: Vec<(f64, f64)> = grid.iter().map(|&q| (q, (LAMBDA_2N / q - l2 / q.sqrt()).exp())).collect();
        let r = bp2n_trend(&med).unwrap();
        for (p, &q) in r.points.iter().zip(&grid) {
            assert!((p.2 - (LAMBDA_2N - l2 * q.sqrt())).abs() < 1e-12);
        }
        assert!(r.increasing && r.below_lambda);
        assert!(bp2n_trend(&[(0.1, 5.0)]).unwrap().increasing);
        assert!(bp2n_trend(&[(0.1, 5.0), (0.12, 6.0)]).is_err());
    }

    #[test]
    fn chi_square_tail() {
        assert!((chi_square_pvalue(3.841_458_820_694_124, 1) - 0.05).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn slope_is_scale_invariant(c in 0.01f64..100.0, a in 0.5f64..4.0, noise in proptest::collection::vec(-0.2f64..0.2, 6)) {
            let base: Vec<QSample> = GRID.iter().zip(&noise).map(|(&q, e)| QSample { q, mean: q.powf(-a) * e.exp(), se: 0.1, n: 10, censored_fraction: 0.0 }).collect();
            let scaled: Vec<QSample> = base.iter().map(|s| QSample { mean: s.mean * c, se: s.se * c, ..*s }).collect();
            for f in [fit_power, fit_explog2] {
                let (x, y) = (f(&base).unwrap(), f(&scaled).unwrap());
                prop_assert!((x.slope - y.slope).abs() < 1e-12);
                prop_assert!((y.intercept - x.intercept - c.ln()).abs() < 1e-9);
            }
        }
    }
}
