//! The two-step estimator end to end, plus a uniform point-estimate entry
//! for every estimator the harness and bootstrap compare.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::data::{build_design, check_identifiability, Dataset, DesignMatrices, IdentifiabilityReport, ModelConfig};
use crate::error::{Error, Result};
use crate::inference::{estimate_sandwich_pieces, estimate_sigma_tau, wald_ci, ConfidenceInterval, H1Form, VarianceEstimates};
use crate::ipw::{default_start, just_identified_basis, solve_gmm, solve_ipw};
use crate::mean_response::{estimate_tau, estimate_tau_normal_plugin, TauEstimate};
use crate::outcome::{fit_least_squares, predict_mu, OutcomeFit};
use crate::propensity::{fit_propensity, PropensityFit};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub h1_form: H1Form,
    pub level: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            h1_form: H1Form::default(),
            level: 0.95,
        }
    }
}

/// Outcome and propensity fits with the resulting point estimate.
#[derive(Debug, Clone)]
pub struct PointFit {
    pub design: DesignMatrices,
    pub outcome: OutcomeFit,
    pub mu_hat: Vec<f64>,
    pub propensity: PropensityFit,
    pub tau: TauEstimate,
    pub identifiability: IdentifiabilityReport,
}

#[derive(Debug, Clone)]
pub struct ProposedFit {
    pub point: PointFit,
    pub variance: VarianceEstimates,
    pub wald: ConfidenceInterval,
}

impl ProposedFit {
    pub fn tau_hat(&self) -> f64 {
        self.point.tau.tau_hat
    }

    /// `sqrt(sigma2_tau)`, the asymptotic standard deviation of `sqrt(n) tau_hat`.
    pub fn sigma_tau(&self) -> f64 {
        self.variance.sigma2_tau.sqrt()
    }
}

fn fit_stages(ds: &Dataset, cfg: &ModelConfig) -> Result<(DesignMatrices, OutcomeFit, Vec<f64>, PropensityFit)> {
    cfg.validate()?;
    let design = build_design(ds, cfg)?;
    let structural = check_identifiability(&design, None);
    if !structural.identifiable {
        return Err(Error::Identifiability(format!(
            "every mean basis column lies in span{{1, x1}} (columns {:?})",
            structural.columns_in_span.iter().map(|c| c + 1).collect::<Vec<_>>()
        )));
    }
    ds.require_both_classes()?;
    let outcome = fit_least_squares(ds, &design)?;
    let mu_hat = predict_mu(&outcome, &design)?;
    let propensity = fit_propensity(ds, &design, &mu_hat)?;
    if !propensity.converged {
        return Err(Error::NonConvergence(format!(
            "propensity Newton stopped after {} iterations with |score|_inf = {:.3e}",
            propensity.iterations, propensity.gradient_norm
        )));
    }
    Ok((design, outcome, mu_hat, propensity))
}

fn point_with(
    ds: &Dataset,
    cfg: &ModelConfig,
    tau_fn: fn(&Dataset, &OutcomeFit, &PropensityFit, &[f64]) -> Result<TauEstimate>,
) -> Result<PointFit> {
    let (design, outcome, mu_hat, propensity) = fit_stages(ds, cfg)?;
    let tau = tau_fn(ds, &outcome, &propensity, &mu_hat)?;
    let identifiability = check_identifiability(&design, Some(&mu_hat));
    Ok(PointFit {
        design,
        outcome,
        mu_hat,
        propensity,
        tau,
        identifiability,
    })
}

/// Two-step point estimate without variance.
pub fn fit_point(ds: &Dataset, cfg: &ModelConfig) -> Result<PointFit> {
    point_with(ds, cfg, estimate_tau)
}

/// Two-step point estimate with Gaussian moment functions in place of the
/// empirical ones.
pub fn fit_point_normal_plugin(ds: &Dataset, cfg: &ModelConfig) -> Result<PointFit> {
    point_with(ds, cfg, estimate_tau_normal_plugin)
}

/// Point estimate, sandwich variance and Wald interval.
pub fn fit_proposed(ds: &Dataset, cfg: &ModelConfig, opts: &FitOptions) -> Result<ProposedFit> {
    let point = fit_point(ds, cfg)?;
    let variance = variance_for(ds, &point, opts.h1_form)?;
    let wald = wald_ci(point.tau.tau_hat, variance.sigma2_tau, ds.n(), opts.level)?;
    Ok(ProposedFit { point, variance, wald })
}

/// Sandwich variance at an existing point fit.
pub fn variance_for(ds: &Dataset, point: &PointFit, form: H1Form) -> Result<VarianceEstimates> {
    let pieces = estimate_sandwich_pieces(ds, &point.design, &point.outcome, &point.propensity, &point.mu_hat)?;
    estimate_sigma_tau(
        &pieces,
        point.tau.eta_hat,
        point.propensity.gamma(),
        point.outcome.sigma2_hat,
        form,
    )
}

/// Estimators of `tau` available to the bootstrap and the simulation harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Estimator {
    Proposed,
    NormalPlugin,
    Ipw,
    Gmm(u32),
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Estimator::Proposed => write!(f, "proposed"),
            Estimator::NormalPlugin => write!(f, "normal-plugin"),
            Estimator::Ipw => write!(f, "ipw"),
            Estimator::Gmm(k) => write!(f, "gmm-{k}"),
        }
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Estimator::Proposed),
            "normal-plugin" | "normal_plugin" => Ok(Estimator::NormalPlugin),
            "ipw" => Ok(Estimator::Ipw),
            _ => s
                .strip_prefix("gmm-")
                .and_then(|k| k.parse::<u32>().ok())
                .filter(|&k| k >= 1)
                .map(Estimator::Gmm)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown estimator '{s}'"))),
        }
    }
}

impl Serialize for Estimator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointEstimate {
    pub tau: f64,
    pub gamma: f64,
    pub converged: bool,
}

pub fn estimate_point(est: Estimator, ds: &Dataset, cfg: &ModelConfig) -> Result<PointEstimate> {
    match est {
        Estimator::Proposed | Estimator::NormalPlugin => {
            let fit = if est == Estimator::Proposed {
                fit_point(ds, cfg)?
            } else {
                fit_point_normal_plugin(ds, cfg)?
            };
            Ok(PointEstimate {
                tau: fit.tau.tau_hat,
                gamma: fit.propensity.gamma(),
                converged: fit.propensity.converged,
            })
        }
        Estimator::Ipw => {
            let p = cfg.p();
            let basis = just_identified_basis(ds.d(), p);
            let fit = solve_ipw(ds, &cfg.x1_columns, &basis, &default_start(ds, p))?;
            Ok(PointEstimate {
                tau: fit.tau_ipw,
                gamma: fit.gamma(),
                converged: fit.converged,
            })
        }
        Estimator::Gmm(k) => {
            let fit = solve_gmm(ds, &cfg.x1_columns, k)?.fit;
            Ok(PointEstimate {
                tau: fit.tau_ipw,
                gamma: fit.gamma(),
                converged: fit.converged,
            })
        }
    }
}
