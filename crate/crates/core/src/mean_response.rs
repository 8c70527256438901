//! Empirical moment-generating functionals of the residuals and the
//! mean-response estimator built on them.

use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::outcome::OutcomeFit;
use crate::propensity::PropensityFit;

/// Largest `|t * e_i|` accepted by [`empirical_mgf`].
pub const MGF_EXPONENT_LIMIT: f64 = 1e4;

/// `mean(e^{t e})` and `mean(e e^{t e})`, stored relative to the shift
/// `max_i t e_i` so that the ratio survives when the moments themselves
/// would overflow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalMgf {
    pub shift: f64,
    pub m1_scaled: f64,
    pub m2_scaled: f64,
}

impl EmpiricalMgf {
    pub fn m1(&self) -> f64 {
        self.m1_scaled * self.shift.exp()
    }

    pub fn m2(&self) -> f64 {
        self.m2_scaled * self.shift.exp()
    }

    pub fn log_m1(&self) -> f64 {
        self.shift + self.m1_scaled.ln()
    }

    /// `M2(t) / M1(t)`, the mean of the exponentially tilted residuals.
    pub fn ratio(&self) -> f64 {
        self.m2_scaled / self.m1_scaled
    }
}

pub fn empirical_mgf(residuals: &[f64], t: f64) -> Result<EmpiricalMgf> {
    if residuals.is_empty() {
        return Err(Error::InvalidArgument("no residuals".into()));
    }
    if !t.is_finite() {
        return Err(Error::Overflow(format!("non-finite tilt {t}")));
    }
    let mut shift = f64::NEG_INFINITY;
    for (i, &e) in residuals.iter().enumerate() {
        let a = t * e;
        if !a.is_finite() || a.abs() > MGF_EXPONENT_LIMIT {
            return Err(Error::Overflow(format!(
                "t*residual = {a:.3e} at residual {i} exceeds the stabilized range"
            )));
        }
        shift = shift.max(a);
    }
    let n = residuals.len() as f64;
    let (s1, s2) = residuals.iter().fold((0.0, 0.0), |(s1, s2), &e| {
        let w = (t * e - shift).exp();
        (s1 + w, s2 + e * w)
    });
    Ok(EmpiricalMgf {
        shift,
        m1_scaled: s1 / n,
        m2_scaled: s2 / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauEstimate {
    pub tau_hat: f64,
    pub eta_hat: f64,
    /// `M1(gamma_hat)`; may be `inf` when only the ratio is representable.
    pub m1_hat: f64,
    pub m2_hat: f64,
    /// `M2 / M1` at `gamma_hat`.
    pub tilt_mean: f64,
    pub mean_mu: f64,
    pub alpha0_hat: f64,
}

fn eta_checked(ds: &Dataset) -> Result<f64> {
    let eta = ds.n_observed() as f64 / ds.n() as f64;
    if eta == 0.0 || eta == 1.0 {
        return Err(Error::Degenerate(format!("observed fraction is {eta}")));
    }
    Ok(eta)
}

/// `tau_hat = mean_i mu(x_i) + (1 - eta_hat) M2(gamma_hat) / M1(gamma_hat)`,
/// averaging the fitted mean over all rows.
pub fn estimate_tau(
    ds: &Dataset,
    outcome: &OutcomeFit,
    propensity: &PropensityFit,
    mu_hat: &[f64],
) -> Result<TauEstimate> {
    let eta = eta_checked(ds)?;
    let gamma = propensity.gamma();
    if !gamma.is_finite() {
        return Err(Error::Overflow("gamma_hat is not finite".into()));
    }
    let mgf = empirical_mgf(&outcome.residuals, gamma)?;
    let mean_mu = mu_hat.iter().sum::<f64>() / mu_hat.len() as f64;
    let tilt_mean = mgf.ratio();
    Ok(TauEstimate {
        tau_hat: mean_mu + (1.0 - eta) * tilt_mean,
        eta_hat: eta,
        m1_hat: mgf.m1(),
        m2_hat: mgf.m2(),
        tilt_mean,
        mean_mu,
        alpha0_hat: propensity.alpha() - mgf.log_m1(),
    })
}

/// Same estimator with Gaussian moment functions
/// `M1(t) = exp(t^2 s^2 / 2)`, `M2(t) = t s^2 M1(t)` at `s^2 = sigma2_hat`.
pub fn estimate_tau_normal_plugin(
    ds: &Dataset,
    outcome: &OutcomeFit,
    propensity: &PropensityFit,
    mu_hat: &[f64],
) -> Result<TauEstimate> {
    let eta = eta_checked(ds)?;
    let gamma = propensity.gamma();
    if !gamma.is_finite() {
        return Err(Error::Overflow("gamma_hat is not finite".into()));
    }
    let s2 = outcome.sigma2_hat;
    let log_m1 = 0.5 * gamma * gamma * s2;
    let m1 = log_m1.exp();
    let tilt_mean = gamma * s2;
    let mean_mu = mu_hat.iter().sum::<f64>() / mu_hat.len() as f64;
    Ok(TauEstimate {
        tau_hat: mean_mu + (1.0 - eta) * tilt_mean,
        eta_hat: eta,
        m1_hat: m1,
        m2_hat: tilt_mean * m1,
        tilt_mean,
        mean_mu,
        alpha0_hat: propensity.alpha() - log_m1,
    })
}
