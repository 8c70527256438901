//! Pairs bootstrap: studentized (bootstrap-t) and percentile intervals.

use std::panic::{catch_unwind, AssertUnwindSafe};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{Dataset, ModelConfig};
use crate::error::{Error, FailureTaxonomy, Result};
use crate::inference::{check_level, CiMethod, ConfidenceInterval};
use crate::pipeline::{estimate_point, fit_proposed, Estimator, FitOptions};
use crate::rng::stream;

pub const MIN_RESAMPLES: usize = 99;
/// Fraction of resamples that must succeed.
pub const SUCCESS_FRACTION: f64 = 0.95;

/// Type-7 (linear interpolation) quantile of already sorted data.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    assert!((0.0..=1.0).contains(&p), "probability out of range");
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapResult {
    pub ci: ConfidenceInterval,
    pub n_resamples_requested: usize,
    pub n_successful: usize,
    /// Studentized statistics, in resample order (bootstrap-t only).
    pub t_stats: Vec<f64>,
    /// Resampled point estimates, in resample order.
    pub estimates: Vec<f64>,
    pub seed: u64,
    pub failures: FailureTaxonomy,
}

fn resample(ds: &Dataset, seed: u64, b: usize) -> Dataset {
    let mut rng = stream(seed, b as u64);
    let n = ds.n();
    let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    ds.select_rows(&rows)
}

fn check_request(b: usize, level: f64) -> Result<()> {
    check_level(level)?;
    if b < MIN_RESAMPLES {
        return Err(Error::InvalidArgument(format!(
            "at least {MIN_RESAMPLES} bootstrap resamples required, got {b}"
        )));
    }
    Ok(())
}

/// Runs `stat` on every resample; failures (errors or panics) are tallied.
fn run_resamples<F>(ds: &Dataset, b: usize, seed: u64, stat: F) -> Result<(Vec<(f64, f64)>, FailureTaxonomy)>
where
    F: Fn(&Dataset) -> Result<(f64, f64)> + Sync,
{
    let results: Vec<std::result::Result<(f64, f64), Option<Error>>> = (0..b)
        .into_par_iter()
        .map(|k| {
            let rs = resample(ds, seed, k);
            match catch_unwind(AssertUnwindSafe(|| stat(&rs))) {
                Ok(Ok(v)) => Ok(v),
                Ok(Err(e)) => Err(Some(e)),
                Err(_) => Err(None),
            }
        })
        .collect();
    let mut failures = FailureTaxonomy::default();
    let mut ok = Vec::with_capacity(b);
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(Some(e)) => failures.record(&e),
            Err(None) => failures.other += 1,
        }
    }
    if (ok.len() as f64) < SUCCESS_FRACTION * b as f64 {
        return Err(Error::Instability {
            requested: b,
            successful: ok.len(),
            taxonomy: failures,
        });
    }
    Ok((ok, failures))
}

/// `[tau - q_{1-a/2}(t*) s / sqrt(n), tau - q_{a/2}(t*) s / sqrt(n)]` with
/// `s` the standard deviation of `sqrt(n) tau_hat`.
pub fn bootstrap_t_from_stats(tau_hat: f64, sigma_tau: f64, n: usize, t_stats: &[f64], level: f64) -> Result<ConfidenceInterval> {
    check_level(level)?;
    if t_stats.is_empty() || t_stats.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument("need finite bootstrap statistics".into()));
    }
    let mut sorted = t_stats.to_vec();
    sorted.sort_by(f64::total_cmp);
    let a = 1.0 - level;
    let se = sigma_tau / (n as f64).sqrt();
    Ok(ConfidenceInterval {
        lower: tau_hat - quantile_type7(&sorted, 1.0 - a / 2.0) * se,
        upper: tau_hat - quantile_type7(&sorted, a / 2.0) * se,
        level,
        method: CiMethod::BootstrapT,
    })
}

/// `[q_{a/2}, q_{1-a/2}]` of the resampled estimates.
pub fn percentile_from_estimates(estimates: &[f64], level: f64) -> Result<ConfidenceInterval> {
    check_level(level)?;
    if estimates.is_empty() || estimates.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument("need finite bootstrap estimates".into()));
    }
    let mut sorted = estimates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let a = 1.0 - level;
    Ok(ConfidenceInterval {
        lower: quantile_type7(&sorted, a / 2.0),
        upper: quantile_type7(&sorted, 1.0 - a / 2.0),
        level,
        method: CiMethod::BootstrapPercentile,
    })
}

/// Studentized pairs bootstrap around the two-step estimator.
pub fn bootstrap_t_ci(ds: &Dataset, cfg: &ModelConfig, opts: &FitOptions, b: usize, seed: u64) -> Result<BootstrapResult> {
    check_request(b, opts.level)?;
    let full = fit_proposed(ds, cfg, opts)?;
    let tau_hat = full.tau_hat();
    let sigma = full.sigma_tau();
    let root_n = (ds.n() as f64).sqrt();
    let (stats, failures) = run_resamples(ds, b, seed, |rs| {
        let fit = fit_proposed(rs, cfg, opts)?;
        let s = fit.sigma_tau();
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::Degenerate("resample variance estimate is zero".into()));
        }
        Ok((fit.tau_hat(), root_n * (fit.tau_hat() - tau_hat) / s))
    })?;
    let t_stats: Vec<f64> = stats.iter().map(|s| s.1).collect();
    let ci = bootstrap_t_from_stats(tau_hat, sigma, ds.n(), &t_stats, opts.level)?;
    Ok(BootstrapResult {
        ci,
        n_resamples_requested: b,
        n_successful: t_stats.len(),
        estimates: stats.iter().map(|s| s.0).collect(),
        t_stats,
        seed,
        failures,
    })
}

/// Percentile pairs bootstrap for any estimator.
pub fn bootstrap_percentile_ci(
    est: Estimator,
    ds: &Dataset,
    cfg: &ModelConfig,
    level: f64,
    b: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    check_request(b, level)?;
    let (stats, failures) = run_resamples(ds, b, seed, |rs| {
        let p = estimate_point(est, rs, cfg)?;
        if !p.converged {
            return Err(Error::NonConvergence(format!("{est} did not converge on a resample")));
        }
        if !p.tau.is_finite() {
            return Err(Error::Overflow(format!("{est} estimate is not finite")));
        }
        Ok((p.tau, 0.0))
    })?;
    let estimates: Vec<f64> = stats.iter().map(|s| s.0).collect();
    Ok(BootstrapResult {
        ci: percentile_from_estimates(&estimates, level)?,
        n_resamples_requested: b,
        n_successful: estimates.len(),
        estimates,
        t_stats: Vec::new(),
        seed,
        failures,
    })
}
