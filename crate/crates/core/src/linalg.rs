//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};

/// Largest condition number accepted when inverting an information matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// Householder QR with column pivoting.
///
/// Columns are chosen greedily by largest remaining norm, so the diagonal
/// of `R` is non-increasing in magnitude and trailing columns past the
/// numerical rank are the linearly dependent ones.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    // Householder vectors live on and below the diagonal, R above it.
    factors: DMatrix<f64>,
    betas: Vec<f64>,
    diag: Vec<f64>,
    perm: Vec<usize>,
    rank: usize,
}

impl PivotedQr {
    pub fn new(a: &DMatrix<f64>, rel_tol: f64) -> Self {
        let (m, n) = a.shape();
        let mut f = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let steps = m.min(n);
        let mut betas = Vec::with_capacity(steps);
        let mut diag = Vec::with_capacity(steps);

        for k in 0..steps {
            let mut best = k;
            let mut best_norm = -1.0;
            for j in k..n {
                let s: f64 = (k..m).map(|i| f[(i, j)] * f[(i, j)]).sum();
                if s > best_norm {
                    best_norm = s;
                    best = j;
                }
            }
            if best != k {
                f.swap_columns(k, best);
                perm.swap(k, best);
            }
            let norm = best_norm.sqrt();
            if norm == 0.0 {
                betas.push(0.0);
                diag.push(0.0);
                continue;
            }
            let x0 = f[(k, k)];
            let alpha = if x0 >= 0.0 { -norm } else { norm };
            f[(k, k)] = x0 - alpha;
            let vtv: f64 = (k..m).map(|i| f[(i, k)] * f[(i, k)]).sum();
            let beta = if vtv > 0.0 { 2.0 / vtv } else { 0.0 };
            for j in (k + 1)..n {
                let dot: f64 = (k..m).map(|i| f[(i, k)] * f[(i, j)]).sum();
                let s = beta * dot;
                for i in k..m {
                    let vi = f[(i, k)];
                    f[(i, j)] -= s * vi;
                }
            }
            betas.push(beta);
            diag.push(alpha);
        }

        let lead = diag.first().map(|d| d.abs()).unwrap_or(0.0);
        let rank = diag
            .iter()
            .take_while(|d| lead > 0.0 && d.abs() > rel_tol * lead)
            .count();
        PivotedQr {
            factors: f,
            betas,
            diag,
            perm,
            rank,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.factors.ncols()
    }

    /// Original column indices beyond the numerical rank, ascending.
    pub fn dependent_columns(&self) -> Vec<usize> {
        let mut cols: Vec<usize> = self.perm[self.rank..].to_vec();
        cols.sort_unstable();
        cols
    }

    /// Least-squares solution of `A x = b` restricted to the leading `rank`
    /// pivoted columns; remaining coefficients are zero.
    #[allow(clippy::needless_range_loop)]
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let (m, n) = self.factors.shape();
        let mut qtb = b.clone();
        for (k, &beta) in self.betas.iter().enumerate() {
            if beta == 0.0 {
                continue;
            }
            let dot: f64 = (k..m).map(|i| self.factors[(i, k)] * qtb[i]).sum();
            let s = beta * dot;
            for i in k..m {
                qtb[i] -= s * self.factors[(i, k)];
            }
        }
        let r = self.rank;
        let mut z = vec![0.0; r];
        for k in (0..r).rev() {
            let mut acc = qtb[k];
            for j in (k + 1)..r {
                acc -= self.factors[(k, j)] * z[j];
            }
            z[k] = acc / self.diag[k];
        }
        let mut x = DVector::zeros(n);
        for k in 0..r {
            x[self.perm[k]] = z[k];
        }
        x
    }
}

/// Inverse of a symmetric positive (semi)definite matrix, refusing
/// matrices whose spectral condition number exceeds [`MAX_CONDITION`].
pub fn spd_inverse(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let sym = (a + a.transpose()) * 0.5;
    let svd = SVD::new(sym, true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax.is_finite() && smin > 0.0 && smax / smin < MAX_CONDITION) {
        return Err(Error::SingularInformation(format!(
            "{what} has condition number {:.3e}",
            if smin > 0.0 { smax / smin } else { f64::INFINITY }
        )));
    }
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let inv_s = DMatrix::from_diagonal(&svd.singular_values.map(|s| 1.0 / s));
    let inv = vt.transpose() * inv_s * u.transpose();
    Ok((&inv + inv.transpose()) * 0.5)
}

/// Ratio of extreme singular values; `inf` for rank-deficient input.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    if a.ncols() == 0 || a.nrows() == 0 {
        return f64::NAN;
    }
    let sv = a.clone().singular_values();
    let smin = sv.min();
    if smin <= 0.0 {
        f64::INFINITY
    } else {
        sv.max() / smin
    }
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pivoted_qr_solves_overdetermined_system() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![1.0, 3.0, 5.0, 7.0]);
        let qr = PivotedQr::new(&a, 1e-10);
        assert!(qr.is_full_rank());
        let x = qr.solve(&b);
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn pivoted_qr_flags_duplicate_column() {
        let a = DMatrix::from_row_slice(
            4,
            3,
            &[1.0, 0.5, 0.5, 1.0, 1.5, 1.5, 1.0, 2.0, 2.0, 1.0, 3.0, 3.0],
        );
        let qr = PivotedQr::new(&a, 1e-10);
        assert_eq!(qr.rank(), 2);
        let dep = qr.dependent_columns();
        assert_eq!(dep.len(), 1);
        assert!(dep[0] == 1 || dep[0] == 2);
    }

    #[test]
    fn spd_inverse_rejects_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(spd_inverse(&a, "test").is_err());
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let inv = spd_inverse(&b, "test").unwrap();
        let prod = &b * &inv;
        assert!((prod - DMatrix::identity(2, 2)).norm() < 1e-12);
    }
}
