//! Model checks: a score test for non-constant error variance and the
//! unweighted sum-of-squares goodness-of-fit test for the induced logistic
//! model.

use nalgebra::DVector;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::data::{Dataset, DesignMatrices};
use crate::error::{Error, Result};
use crate::outcome::OutcomeFit;
use crate::propensity::{observe_prob, propensity_design, PropensityFit};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub test_name: String,
    pub statistic: f64,
    pub p_value: f64,
    /// Chi-square degrees of freedom, when the reference law is chi-square.
    pub df: Option<u32>,
}

/// Breusch-Pagan / Cook-Weisberg: regress `e^2 / sigma2 - 1` on the fitted
/// means of the complete cases; half the explained sum of squares is
/// chi-square(1) under constant variance.
pub fn ncv_score_test(outcome: &OutcomeFit, dm: &DesignMatrices) -> Result<TestResult> {
    let n1 = outcome.n1;
    let q = dm.q();
    if n1 <= q + 1 {
        return Err(Error::InsufficientData {
            needed: q + 2,
            available: n1,
        });
    }
    let fitted: Vec<f64> = outcome
        .observed_rows
        .iter()
        .map(|&i| (dm.m.row(i) * &outcome.xi_hat)[(0, 0)])
        .collect();
    // Residual variance at roundoff level counts as an exact fit.
    let scale = fitted.iter().map(|f| f * f).sum::<f64>() / n1 as f64;
    if !(outcome.sigma2_hat > 1e-24 * (1.0 + scale)) {
        return Err(Error::Degenerate("residual variance is zero".into()));
    }
    let u: Vec<f64> = outcome
        .residuals
        .iter()
        .map(|e| e * e / outcome.sigma2_hat - 1.0)
        .collect();
    let nf = n1 as f64;
    let fbar = fitted.iter().sum::<f64>() / nf;
    let ubar = u.iter().sum::<f64>() / nf;
    let sxx: f64 = fitted.iter().map(|f| (f - fbar).powi(2)).sum();
    if !(sxx > 1e-12 * fitted.iter().map(|f| f * f).sum::<f64>().max(1.0)) {
        return Err(Error::Degenerate("fitted means are constant".into()));
    }
    let sxy: f64 = fitted.iter().zip(&u).map(|(f, v)| (f - fbar) * (v - ubar)).sum();
    let stat = 0.5 * sxy * sxy / sxx;
    let chi = ChiSquared::new(1.0).expect("valid df");
    Ok(TestResult {
        test_name: "ncv_score".into(),
        statistic: stat,
        p_value: chi.sf(stat).clamp(0.0, 1.0),
        df: Some(1),
    })
}

/// Standardized `T = sum (r - pi_hat)^2` with the usual moment formulas:
/// `E = sum w`, `Var = d'(W - W Z (Z'WZ)^-1 Z'W) d`, `d = 1 - 2 pi_hat`.
/// `statistic` is `(T - E) / sqrt(Var)` with a two-sided normal p-value.
pub fn uss_gof_test(ds: &Dataset, propensity: &PropensityFit, mu_hat: &[f64], dm: &DesignMatrices) -> Result<TestResult> {
    if !propensity.converged {
        return Err(Error::NonConvergence("goodness of fit needs a converged propensity fit".into()));
    }
    let z = propensity_design(dm, mu_hat);
    let phi = &z * &propensity.theta_hat;
    let p = z.ncols();
    let mut t = 0.0;
    let mut e = 0.0;
    let mut dwd = 0.0;
    let mut ztwd: DVector<f64> = DVector::zeros(p);
    let mut ztwz = nalgebra::DMatrix::zeros(p, p);
    for i in 0..ds.n() {
        let pi = observe_prob(phi[i]);
        let w = pi * (1.0 - pi);
        let d = 1.0 - 2.0 * pi;
        t += (f64::from(ds.r()[i]) - pi).powi(2);
        e += w;
        dwd += d * d * w;
        let zi = z.row(i);
        for a in 0..p {
            ztwd[a] += w * d * zi[a];
            for b in 0..p {
                ztwz[(a, b)] += w * zi[a] * zi[b];
            }
        }
    }
    if !(dwd > 0.0) {
        return Err(Error::Degenerate("fitted probabilities are all 0 or 1".into()));
    }
    let chol = ztwz.cholesky().ok_or_else(|| Error::SingularInformation("Z'WZ in the goodness-of-fit test".into()))?;
    let var: f64 = dwd - ztwd.dot(&chol.solve(&ztwd));
    if !(var > 0.0) {
        return Err(Error::Degenerate(format!("goodness-of-fit variance is {var:.3e}")));
    }
    let stat = (t - e) / var.sqrt();
    let nd = Normal::standard();
    Ok(TestResult {
        test_name: "uss_gof".into(),
        statistic: stat,
        p_value: (2.0 * nd.sf(stat.abs())).clamp(0.0, 1.0),
        df: None,
    })
}
