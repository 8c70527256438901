//! Maximum conditional likelihood for the induced logistic model
//! `pr(R=1|x) = 1 / (1 + exp(alpha + x1'beta + gamma * mu(x)))`, with the
//! fitted outcome mean entering as a fixed covariate.

use nalgebra::{DMatrix, DVector};

use crate::data::{Dataset, DesignMatrices};
use crate::error::{Error, Result};

pub const SCORE_TOLERANCE: f64 = 1e-8;
pub const MAX_NEWTON_ITERATIONS: usize = 100;
pub const MAX_HALVINGS: usize = 30;
/// `|theta|_inf` beyond which a still-climbing likelihood is treated as
/// complete separation.
pub const SEPARATION_BOUND: f64 = 30.0;
/// Relative log-likelihood change treated as rounding noise.
pub const LOGLIK_NOISE: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct PropensityFit {
    /// `(alpha, beta..., gamma)`.
    pub theta_hat: DVector<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    /// Log-likelihood at the start and after every accepted step.
    pub loglik_trace: Vec<f64>,
}

impl PropensityFit {
    pub fn alpha(&self) -> f64 {
        self.theta_hat[0]
    }

    pub fn beta(&self) -> Vec<f64> {
        let p = self.theta_hat.len();
        self.theta_hat.rows(1, p - 2).iter().copied().collect()
    }

    pub fn gamma(&self) -> f64 {
        self.theta_hat[self.theta_hat.len() - 1]
    }
}

/// Rows `z_i = (1, x1_i, mu_i)`.
pub fn propensity_design(dm: &DesignMatrices, mu_hat: &[f64]) -> DMatrix<f64> {
    let n = dm.n();
    let k = dm.x1.ncols();
    let mut z = DMatrix::zeros(n, k + 2);
    z.column_mut(0).fill(1.0);
    for j in 0..k {
        z.set_column(j + 1, &dm.x1.column(j));
    }
    for (i, &m) in mu_hat.iter().enumerate() {
        z[(i, k + 1)] = m;
    }
    z
}

/// `log(1 + e^t)` without overflow.
pub(crate) fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// `pr(R=1)` for linear predictor `phi`.
pub(crate) fn observe_prob(phi: f64) -> f64 {
    if phi >= 0.0 {
        let e = (-phi).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + phi.exp())
    }
}

fn check_dims(ds: &Dataset, z: &DMatrix<f64>, theta: &DVector<f64>) -> Result<()> {
    if z.nrows() != ds.n() || theta.len() != z.ncols() {
        return Err(Error::InvalidArgument(format!(
            "dimension mismatch: n={}, design {}x{}, theta {}",
            ds.n(),
            z.nrows(),
            z.ncols(),
            theta.len()
        )));
    }
    Ok(())
}

fn loglik_z(r: &[u8], z: &DMatrix<f64>, theta: &DVector<f64>) -> f64 {
    let phi = z * theta;
    r.iter()
        .zip(phi.iter())
        .map(|(&ri, &f)| if ri == 1 { -softplus(f) } else { f - softplus(f) })
        .sum()
}

/// Gradient and Hessian of the log-likelihood in `theta`.
fn score_hessian_z(r: &[u8], z: &DMatrix<f64>, theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let p = z.ncols();
    let phi = z * theta;
    let mut score = DVector::zeros(p);
    let mut info = DMatrix::zeros(p, p);
    for (i, (&ri, &f)) in r.iter().zip(phi.iter()).enumerate() {
        let pi = observe_prob(f);
        let resid = pi - f64::from(ri);
        let w = pi * (1.0 - pi);
        let zi = z.row(i);
        for a in 0..p {
            score[a] += resid * zi[a];
            let wa = w * zi[a];
            for b in 0..=a {
                info[(a, b)] += wa * zi[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            info[(b, a)] = info[(a, b)];
        }
    }
    (score, -info)
}

/// `l_n(theta) = sum r log pi + (1-r) log(1-pi)`.
pub fn log_conditional_likelihood(
    ds: &Dataset,
    dm: &DesignMatrices,
    mu_hat: &[f64],
    theta: &DVector<f64>,
) -> Result<f64> {
    let z = propensity_design(dm, mu_hat);
    check_dims(ds, &z, theta)?;
    Ok(loglik_z(ds.r(), &z, theta))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreHessian {
    /// Gradient of `l_n`: `sum (pi_i - r_i) z_i`.
    pub score: DVector<f64>,
    /// `-sum pi_i (1 - pi_i) z_i z_i'`.
    pub hessian: DMatrix<f64>,
}

pub fn score_and_hessian(
    ds: &Dataset,
    dm: &DesignMatrices,
    mu_hat: &[f64],
    theta: &DVector<f64>,
) -> Result<ScoreHessian> {
    let z = propensity_design(dm, mu_hat);
    check_dims(ds, &z, theta)?;
    let (score, hessian) = score_hessian_z(ds.r(), &z, theta);
    Ok(ScoreHessian { score, hessian })
}

/// Newton-Raphson with step halving, started at the intercept-only MLE.
/// The likelihood trace is nondecreasing up to [`LOGLIK_NOISE`].
pub fn fit_propensity(ds: &Dataset, dm: &DesignMatrices, mu_hat: &[f64]) -> Result<PropensityFit> {
    ds.require_both_classes()?;
    let z = propensity_design(dm, mu_hat);
    let r = ds.r();
    let p = z.ncols();
    let n1 = ds.n_observed() as f64;
    let n0 = ds.n() as f64 - n1;

    let mut theta = DVector::zeros(p);
    theta[0] = (n0 / n1).ln();
    let mut ll = loglik_z(r, &z, &theta);
    let mut trace = vec![ll];
    let mut iterations = 0;
    let (mut score, mut hess) = score_hessian_z(r, &z, &theta);
    let mut converged = score.amax() < SCORE_TOLERANCE;

    while !converged && iterations < MAX_NEWTON_ITERATIONS {
        iterations += 1;
        let info = -&hess;
        let step = match info.clone().cholesky() {
            Some(ch) => ch.solve(&score),
            None => {
                return Err(Error::SingularInformation(
                    "propensity information matrix is not positive definite".into(),
                ))
            }
        };
        // Likelihood differences below this are rounding noise; there the
        // score norm decides.
        let noise = LOGLIK_NOISE * ll.abs().max(1.0);
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand = &theta + &step * scale;
            let cand_ll = loglik_z(r, &z, &cand);
            if cand_ll.is_finite() {
                if cand_ll > ll + noise {
                    accepted = Some((cand, cand_ll, None));
                    break;
                }
                if cand_ll >= ll - noise {
                    let (cs, ch) = score_hessian_z(r, &z, &cand);
                    if cs.amax() < score.amax() {
                        accepted = Some((cand, cand_ll, Some((cs, ch))));
                        break;
                    }
                }
            }
            scale *= 0.5;
        }
        let Some((cand, cand_ll, derivs)) = accepted else {
            break;
        };
        let improved = cand_ll > ll;
        theta = cand;
        ll = cand_ll;
        trace.push(ll);
        (score, hess) = derivs.unwrap_or_else(|| score_hessian_z(r, &z, &theta));
        converged = score.amax() < SCORE_TOLERANCE;
        if !converged && improved && theta.amax() > SEPARATION_BOUND {
            return Err(Error::Separation { norm: theta.amax() });
        }
    }

    Ok(PropensityFit {
        gradient_norm: score.amax(),
        theta_hat: theta,
        loglik: ll,
        iterations,
        converged,
        loglik_trace: trace,
    })
}

/// `alpha0 = alpha - log M1(gamma)`.
pub fn recover_alpha0(fit: &PropensityFit, m1_at_gamma: f64) -> Result<f64> {
    if !(m1_at_gamma > 0.0) {
        return Err(Error::Domain(format!(
            "moment generating function value must be positive, got {m1_at_gamma}"
        )));
    }
    Ok(fit.alpha() - m1_at_gamma.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_design, BasisTerm, ModelConfig};

    fn tiny() -> (Dataset, DesignMatrices, Vec<f64>) {
        let x = DMatrix::from_row_slice(4, 1, &[0.1, -0.4, 1.2, 0.7]);
        let ds = Dataset::new(vec![1, 0, 1, 0], vec![Some(1.0), None, Some(2.0), None], x).unwrap();
        let cfg = ModelConfig::new(vec![BasisTerm::intercept(1), BasisTerm::power(1, 0, 2)], vec![0]).unwrap();
        let dm = build_design(&ds, &cfg).unwrap();
        let mu = vec![0.5, 1.5, -0.3, 2.0];
        (ds, dm, mu)
    }

    #[test]
    fn zero_theta_gives_half() {
        let (ds, dm, mu) = tiny();
        let ll = log_conditional_likelihood(&ds, &dm, &mu, &DVector::zeros(3)).unwrap();
        assert!((ll - 4.0 * 0.5f64.ln()).abs() < 1e-14);
        let sh = score_and_hessian(&ds, &dm, &mu, &DVector::zeros(3)).unwrap();
        // gradient convention: sum (pi - r) = n/2 - n1
        assert!((sh.score[0] - (2.0 - 2.0)).abs() < 1e-14);
    }

    #[test]
    fn likelihood_tends_to_zero_for_sure_observation() {
        let x = DMatrix::from_row_slice(1, 1, &[0.0]);
        let ds = Dataset::new(vec![1], vec![Some(0.0)], x).unwrap();
        let cfg = ModelConfig::new(vec![BasisTerm::intercept(1), BasisTerm::power(1, 0, 2)], vec![0]).unwrap();
        let dm = build_design(&ds, &cfg).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for a in [-1.0, -5.0, -10.0, -30.0] {
            let theta = DVector::from_vec(vec![a, 0.0, 0.0]);
            let ll = log_conditional_likelihood(&ds, &dm, &[0.0], &theta).unwrap();
            assert!(ll > prev && ll < 0.0);
            prev = ll;
        }
        assert!(prev > -1e-12);
    }

    #[test]
    fn stable_at_extreme_predictors() {
        let (ds, dm, mu) = tiny();
        let theta = DVector::from_vec(vec![700.0, 0.0, 0.0]);
        let ll = log_conditional_likelihood(&ds, &dm, &mu, &theta).unwrap();
        assert!((ll + 1400.0).abs() < 1e-9);
    }

    #[test]
    fn all_observed_is_degenerate() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let ds = Dataset::new(vec![1, 1], vec![Some(0.0), Some(1.0)], x).unwrap();
        let cfg = ModelConfig::new(vec![BasisTerm::intercept(1), BasisTerm::power(1, 0, 2)], vec![0]).unwrap();
        let dm = build_design(&ds, &cfg).unwrap();
        assert!(matches!(fit_propensity(&ds, &dm, &[0.0, 1.0]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn alpha0_recovery() {
        let fit = PropensityFit {
            theta_hat: DVector::from_vec(vec![-1.2, -0.4, 0.5]),
            loglik: -1.0,
            iterations: 1,
            converged: true,
            gradient_norm: 0.0,
            loglik_trace: vec![],
        };
        assert!((recover_alpha0(&fit, 0.5f64.exp()).unwrap() + 1.7).abs() < 1e-12);
        assert_eq!(recover_alpha0(&fit, 1.0).unwrap(), -1.2);
        assert!(recover_alpha0(&fit, 0.0).is_err());
        let mut f0 = fit.clone();
        f0.theta_hat[0] = 0.0;
        assert!((recover_alpha0(&f0, 2.0).unwrap() + 2f64.ln()).abs() < 1e-15);
    }
}
