//! Plug-in sandwich variances for `(xi_hat, theta_hat)` and `tau_hat`, and
//! Wald intervals.
//!
//! Score rows are ordered `(S0, S11, S12, S2)` with
//! `S0 = r - eta`, `S11 = r e M`, `S12 = (r - pi) z` and
//! `S2 = (mu - mean mu, r e^{g e} - B1, r e e^{g e} - B2)`, so `m = 1 + q + p + 3`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{Dataset, DesignMatrices};
use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, symmetrize};
use crate::mean_response::empirical_mgf;
use crate::outcome::OutcomeFit;
use crate::propensity::{observe_prob, propensity_design, score_and_hessian, PropensityFit};

/// Which closed form of the `xi`-block of the `tau` gradient to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum H1Form {
    /// Last term scaled by `(B2 - B1 B3)`, exactly as published.
    #[default]
    AsPrinted,
    /// Last term scaled by `(B2^2 - B1 B3)`, matching the `theta` block.
    SquaredB2,
    /// First-order expansion of `tau_hat` worked out from scratch: the
    /// `(B2^2 - B1 B3)` factor plus a `gamma` on the `B2 C1 / B1^2` term.
    Linearized,
}

impl H1Form {
    pub const ALL: [H1Form; 3] = [H1Form::AsPrinted, H1Form::SquaredB2, H1Form::Linearized];

    pub fn as_str(self) -> &'static str {
        match self {
            H1Form::AsPrinted => "as_printed",
            H1Form::SquaredB2 => "squared_b2",
            H1Form::Linearized => "linearized",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "as_printed" | "as-printed" => Ok(H1Form::AsPrinted),
            "squared_b2" | "squared-b2" => Ok(H1Form::SquaredB2),
            "linearized" => Ok(H1Form::Linearized),
            other => Err(Error::InvalidArgument(format!("unknown H1 form '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichPieces {
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    /// p x q.
    pub a3: DMatrix<f64>,
    pub a4: DVector<f64>,
    pub b: [f64; 3],
    pub c1: DVector<f64>,
    pub c2: DVector<f64>,
    pub v: DMatrix<f64>,
    /// Per-row score vectors, n x m.
    pub shat: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceEstimates {
    /// Asymptotic covariance of `sqrt(n) (xi_hat, theta_hat)`.
    pub sigma: DMatrix<f64>,
    /// `D' V D` after clipping at zero.
    pub sigma2_tau: f64,
    pub sigma2_tau_raw: f64,
    pub clipped: bool,
    pub d: DVector<f64>,
    pub h1: DVector<f64>,
    pub h2: DVector<f64>,
    pub h1_form: H1Form,
}

impl VarianceEstimates {
    /// `{"sigma": [[..]], "sigma2_tau": x, "clipped": bool}`.
    pub fn report_json(&self) -> serde_json::Value {
        let rows: Vec<Vec<f64>> = (0..self.sigma.nrows())
            .map(|i| self.sigma.row(i).iter().copied().collect())
            .collect();
        serde_json::json!({
            "sigma": rows,
            "sigma2_tau": self.sigma2_tau,
            "clipped": self.clipped,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    Wald,
    BootstrapT,
    BootstrapPercentile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: CiMethod,
}

impl ConfidenceInterval {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

pub(crate) fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must be in (0,1), got {level}")));
    }
    Ok(())
}

pub(crate) fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// `(A1, A2, A3, A4)`.
pub type AMatrices = (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DVector<f64>);

/// `A1 = n^-1 sum r M M'`, `A2 = n^-1 sum pi(1-pi) z z'`,
/// `A3 = n^-1 sum pi(1-pi) z M'`, `A4 = n^-1 sum M`.
pub fn estimate_a_matrices(
    ds: &Dataset,
    dm: &DesignMatrices,
    mu_hat: &[f64],
    propensity: &PropensityFit,
) -> Result<AMatrices> {
    let n = ds.n();
    let nf = n as f64;
    let q = dm.q();
    let z = propensity_design(dm, mu_hat);
    let p = z.ncols();
    let phi = &z * &propensity.theta_hat;

    let mut a1 = DMatrix::zeros(q, q);
    let mut a3 = DMatrix::zeros(p, q);
    let mut a4 = DVector::zeros(q);
    for i in 0..n {
        let mi = dm.m.row(i);
        for a in 0..q {
            a4[a] += mi[a];
        }
        if ds.r()[i] == 1 {
            for a in 0..q {
                for b in 0..q {
                    a1[(a, b)] += mi[a] * mi[b];
                }
            }
        }
        let pi = observe_prob(phi[i]);
        let w = pi * (1.0 - pi);
        let zi = z.row(i);
        for a in 0..p {
            for b in 0..q {
                a3[(a, b)] += w * zi[a] * mi[b];
            }
        }
    }
    let sh = score_and_hessian(ds, dm, mu_hat, &propensity.theta_hat)?;
    let a2 = -sh.hessian / nf;
    Ok((a1 / nf, a2, a3 / nf, a4 / nf))
}

/// `B_k = n^-1 sum r e^{k-1} e^{g e}` for k = 1..3 and
/// `C_k = n^-1 sum r e^{k-1} e^{g e} M` for k = 1, 2.
pub fn estimate_b_c(
    ds: &Dataset,
    dm: &DesignMatrices,
    outcome: &OutcomeFit,
    gamma: f64,
) -> Result<([f64; 3], DVector<f64>, DVector<f64>)> {
    // Range check shared with the MGF estimator.
    empirical_mgf(&outcome.residuals, gamma)?;
    let nf = ds.n() as f64;
    let q = dm.q();
    let mut b = [0.0; 3];
    let mut c1 = DVector::zeros(q);
    let mut c2 = DVector::zeros(q);
    for (&i, &e) in outcome.observed_rows.iter().zip(&outcome.residuals) {
        let w = (gamma * e).exp();
        if !w.is_finite() {
            return Err(Error::Overflow(format!("exp(gamma * residual) overflows at row {}", i + 1)));
        }
        b[0] += w;
        b[1] += e * w;
        b[2] += e * e * w;
        let mi = dm.m.row(i);
        for a in 0..q {
            c1[a] += w * mi[a];
            c2[a] += e * w * mi[a];
        }
    }
    for v in &mut b {
        *v /= nf;
    }
    Ok((b, c1 / nf, c2 / nf))
}

/// Per-row score matrix `S_hat` and `V_hat = n^-1 sum S_i S_i'`.
pub fn build_score_rows_and_v(
    ds: &Dataset,
    dm: &DesignMatrices,
    outcome: &OutcomeFit,
    propensity: &PropensityFit,
    mu_hat: &[f64],
    b: &[f64; 3],
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = ds.n();
    let nf = n as f64;
    let q = dm.q();
    let z = propensity_design(dm, mu_hat);
    let p = z.ncols();
    let m = 1 + q + p + 3;
    let eta = ds.n_observed() as f64 / nf;
    let mean_mu = mu_hat.iter().sum::<f64>() / nf;
    let gamma = propensity.gamma();
    let phi = &z * &propensity.theta_hat;
    let resid = outcome.residuals_full(n);

    let mut s = DMatrix::zeros(n, m);
    for i in 0..n {
        let r = f64::from(ds.r()[i]);
        let e = resid[i];
        let tilt = if ds.r()[i] == 1 { (gamma * e).exp() } else { 0.0 };
        let pi = observe_prob(phi[i]);
        s[(i, 0)] = r - eta;
        for k in 0..q {
            s[(i, 1 + k)] = r * e * dm.m[(i, k)];
        }
        for k in 0..p {
            s[(i, 1 + q + k)] = (r - pi) * z[(i, k)];
        }
        let o = 1 + q + p;
        s[(i, o)] = mu_hat[i] - mean_mu;
        s[(i, o + 1)] = r * tilt - b[0];
        s[(i, o + 2)] = r * e * tilt - b[1];
    }
    let v = symmetrize(&(s.transpose() * &s / nf));
    (s, v)
}

/// All variance ingredients at the fitted values.
pub fn estimate_sandwich_pieces(
    ds: &Dataset,
    dm: &DesignMatrices,
    outcome: &OutcomeFit,
    propensity: &PropensityFit,
    mu_hat: &[f64],
) -> Result<SandwichPieces> {
    let (a1, a2, a3, a4) = estimate_a_matrices(ds, dm, mu_hat, propensity)?;
    let (b, c1, c2) = estimate_b_c(ds, dm, outcome, propensity.gamma())?;
    let (shat, v) = build_score_rows_and_v(ds, dm, outcome, propensity, mu_hat, &b);
    Ok(SandwichPieces {
        a1,
        a2,
        a3,
        a4,
        b,
        c1,
        c2,
        v,
        shat,
    })
}

/// Asymptotic covariance of `sqrt(n)(xi_hat - xi, theta_hat - theta)`.
pub fn estimate_sigma(pieces: &SandwichPieces, sigma2: f64, gamma: f64) -> Result<DMatrix<f64>> {
    let a1i = spd_inverse(&pieces.a1, "A1")?;
    let a2i = spd_inverse(&pieces.a2, "A2")?;
    sigma_from_inverses(&a1i, &a2i, &pieces.a3, sigma2, gamma)
}

fn sigma_from_inverses(
    a1i: &DMatrix<f64>,
    a2i: &DMatrix<f64>,
    a3: &DMatrix<f64>,
    sigma2: f64,
    gamma: f64,
) -> Result<DMatrix<f64>> {
    let q = a1i.nrows();
    let p = a2i.nrows();
    let top_left = a1i * sigma2;
    // q x p
    let off = a1i * a3.transpose() * a2i * (-gamma * sigma2);
    let bottom_right = a2i + a2i * a3 * a1i * a3.transpose() * a2i * (gamma * gamma * sigma2);
    let mut s = DMatrix::zeros(q + p, q + p);
    s.view_mut((0, 0), (q, q)).copy_from(&top_left);
    s.view_mut((0, q), (q, p)).copy_from(&off);
    s.view_mut((q, 0), (p, q)).copy_from(&off.transpose());
    s.view_mut((q, q), (p, p)).copy_from(&bottom_right);
    Ok(symmetrize(&s))
}

/// Gradient `D` of `tau_hat` with respect to the score averages and
/// `sigma2_tau = D' V D`.
pub fn estimate_sigma_tau(
    pieces: &SandwichPieces,
    eta: f64,
    gamma: f64,
    sigma2: f64,
    form: H1Form,
) -> Result<VarianceEstimates> {
    let [b1, b2, b3] = pieces.b;
    if !(b1 > 0.0) {
        return Err(Error::Degenerate(format!("B1 must be positive, got {b1}")));
    }
    let a1i = spd_inverse(&pieces.a1, "A1")?;
    let a2i = spd_inverse(&pieces.a2, "A2")?;
    let sigma = sigma_from_inverses(&a1i, &a2i, &pieces.a3, sigma2, gamma)?;
    let q = a1i.nrows();
    let p = a2i.nrows();
    let miss = 1.0 - eta;

    // e_p' A2^-1: last row of the symmetric inverse.
    let ep_a2i: DVector<f64> = a2i.row(p - 1).transpose();

    let c1_coef = match form {
        H1Form::Linearized => gamma * b2 / (b1 * b1),
        H1Form::AsPrinted | H1Form::SquaredB2 => b2 / (b1 * b1),
    };
    let tail_factor = match form {
        H1Form::AsPrinted => b2 - b1 * b3,
        H1Form::SquaredB2 | H1Form::Linearized => b2 * b2 - b1 * b3,
    };
    let c_part = &pieces.c1 * (c1_coef - 1.0 / b1) - &pieces.c2 * (gamma / b1);
    // Row vectors stored as columns: (v' A1^-1)' = A1^-1 v.
    let h1 = &a1i * &pieces.a4
        + &a1i * c_part * miss
        + (&a1i * pieces.a3.transpose() * &ep_a2i) * (miss * gamma / (b1 * b1) * tail_factor);
    let h2 = &ep_a2i * ((b2 * b2 - b1 * b3) * miss / (b1 * b1));

    let m = 1 + q + p + 3;
    let mut d = DVector::zeros(m);
    d[0] = -b2 / b1;
    d.rows_mut(1, q).copy_from(&h1);
    d.rows_mut(1 + q, p).copy_from(&h2);
    d[1 + q + p] = 1.0;
    d[2 + q + p] = -miss * b2 / (b1 * b1);
    d[3 + q + p] = miss / b1;

    let raw = (d.transpose() * &pieces.v * &d)[(0, 0)];
    let clipped = raw < 0.0;
    Ok(VarianceEstimates {
        sigma,
        sigma2_tau: raw.max(0.0),
        sigma2_tau_raw: raw,
        clipped,
        d,
        h1,
        h2,
        h1_form: form,
    })
}

/// `tau_hat +/- z_{1-a/2} sqrt(sigma2_tau / n)`.
pub fn wald_ci(tau_hat: f64, sigma2_tau: f64, n: usize, level: f64) -> Result<ConfidenceInterval> {
    check_level(level)?;
    if !(sigma2_tau >= 0.0) || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "need sigma2_tau >= 0 and n >= 1 (got {sigma2_tau}, {n})"
        )));
    }
    let half = normal_quantile(0.5 + level / 2.0) * (sigma2_tau / n as f64).sqrt();
    Ok(ConfidenceInterval {
        lower: tau_hat - half,
        upper: tau_hat + half,
        level,
        method: CiMethod::Wald,
    })
}
