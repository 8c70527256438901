//! Least-squares fit of the outcome mean on complete cases.

use nalgebra::{DMatrix, DVector};

use crate::data::{Dataset, DesignMatrices};
use crate::error::{Error, Result};
use crate::linalg::PivotedQr;

/// Relative tolerance on `|R_kk| / |R_00|` for the pivoted QR rank test.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeFit {
    pub xi_hat: DVector<f64>,
    /// `y_i - mu(x_i; xi_hat)` for complete cases, in row order.
    pub residuals: Vec<f64>,
    /// Row index of each residual.
    pub observed_rows: Vec<usize>,
    /// Mean squared residual (divides by `n1`).
    pub sigma2_hat: f64,
    pub n1: usize,
}

impl OutcomeFit {
    /// Residual for every row, zero where the outcome is missing.
    pub fn residuals_full(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (&i, &e) in self.observed_rows.iter().zip(&self.residuals) {
            out[i] = e;
        }
        out
    }
}

pub fn fit_least_squares(ds: &Dataset, dm: &DesignMatrices) -> Result<OutcomeFit> {
    let rows = ds.observed_rows();
    let n1 = rows.len();
    let q = dm.q();
    if n1 < q {
        return Err(Error::InsufficientData {
            needed: q,
            available: n1,
        });
    }
    let a: DMatrix<f64> = dm.m.select_rows(&rows);
    let b = DVector::from_iterator(n1, rows.iter().map(|&i| ds.y_or_zero(i)));
    let qr = PivotedQr::new(&a, RANK_TOLERANCE);
    if !qr.is_full_rank() {
        return Err(Error::SingularDesign {
            dependent: qr.dependent_columns(),
        });
    }
    let xi_hat = qr.solve(&b);
    let fitted = &a * &xi_hat;
    let residuals: Vec<f64> = b.iter().zip(fitted.iter()).map(|(y, f)| y - f).collect();
    let sigma2_hat = residuals.iter().map(|e| e * e).sum::<f64>() / n1 as f64;
    Ok(OutcomeFit {
        xi_hat,
        residuals,
        observed_rows: rows,
        sigma2_hat,
        n1,
    })
}

/// `mu(x_i; xi_hat)` for every row, observed or not.
pub fn predict_mu(fit: &OutcomeFit, dm: &DesignMatrices) -> Result<Vec<f64>> {
    if fit.xi_hat.len() != dm.q() {
        return Err(Error::InvalidArgument(format!(
            "fit has {} coefficients, design has {} columns",
            fit.xi_hat.len(),
            dm.q()
        )));
    }
    Ok((&dm.m * &fit.xi_hat).iter().copied().collect())
}
