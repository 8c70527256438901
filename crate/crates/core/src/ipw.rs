//! Inverse-probability-weighting baselines under the outcome-dependent
//! logistic model `pr(R=1|x,y) = 1 / (1 + exp(alpha0 + x1'beta + gamma y))`.
//!
//! The moment conditions are `n^-1 sum {r e^{alpha0 + x1'beta + gamma y} + r - 1} g(x)`.
//! Exponentials are evaluated raw: overflow shows up as non-finite moments.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::{monomials_up_to, BasisTerm, Dataset};
use crate::error::{Error, Result};

pub const MOMENT_TOLERANCE: f64 = 1e-8;
pub const GRADIENT_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 100;
pub const MAX_GMM_ITERATIONS: usize = 200;
pub const MAX_HALVINGS: usize = 30;
/// Offsets added to the starting `gamma` for the multistart.
pub const GAMMA_LATTICE: [f64; 5] = [-2.0, -1.0, 0.0, 1.0, 2.0];
pub const ROOT_TOLERANCE: f64 = 1e-10;
pub const MAX_BISECTIONS: usize = 200;
/// Replications with `tau` outside this range count as non-reliable.
pub const TAU_RELIABLE: (f64, f64) = (-10.0, 10.0);
/// Replications with `gamma` outside this range count as non-reliable.
pub const GAMMA_RELIABLE: (f64, f64) = (-3.0, 3.0);

/// Data and basis evaluations shared by every moment evaluation.
#[derive(Debug, Clone)]
struct MomentProblem {
    r: Vec<f64>,
    y: Vec<f64>,
    x1: DMatrix<f64>,
    /// n x m basis evaluations g_j(x_i).
    g: DMatrix<f64>,
}

impl MomentProblem {
    fn new(ds: &Dataset, x1_columns: &[usize], basis_g: &[BasisTerm]) -> Result<Self> {
        if let Some(&c) = x1_columns.iter().find(|&&c| c >= ds.d()) {
            return Err(Error::InvalidArgument(format!("x1 column {} out of range", c + 1)));
        }
        if basis_g.iter().any(|t| t.dim() != ds.d()) {
            return Err(Error::InvalidArgument("basis dimension differs from covariates".into()));
        }
        let n = ds.n();
        let mut row = vec![0.0; ds.d()];
        let mut g = DMatrix::zeros(n, basis_g.len());
        for i in 0..n {
            for (j, v) in row.iter_mut().enumerate() {
                *v = ds.x()[(i, j)];
            }
            for (k, t) in basis_g.iter().enumerate() {
                g[(i, k)] = t.eval(&row);
            }
        }
        Ok(MomentProblem {
            r: ds.r().iter().map(|&v| f64::from(v)).collect(),
            y: (0..n).map(|i| ds.y_or_zero(i)).collect(),
            x1: ds.x().select_columns(x1_columns),
            g,
        })
    }

    fn n(&self) -> usize {
        self.r.len()
    }

    fn p(&self) -> usize {
        self.x1.ncols() + 2
    }

    fn m(&self) -> usize {
        self.g.ncols()
    }

    /// `alpha0 + x1'beta + gamma y` for row i.
    fn linear_predictor(&self, i: usize, theta: &DVector<f64>) -> f64 {
        let k = self.x1.ncols();
        let mut lp = theta[0] + theta[k + 1] * self.y[i];
        for j in 0..k {
            lp += theta[j + 1] * self.x1[(i, j)];
        }
        lp
    }

    /// Inverse weight minus one, `e^{lp}`, for observed rows; 0 otherwise.
    fn odds(&self, i: usize, theta: &DVector<f64>) -> f64 {
        if self.r[i] == 1.0 {
            self.linear_predictor(i, theta).exp()
        } else {
            0.0
        }
    }

    fn moments(&self, theta: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.m());
        for i in 0..self.n() {
            let u = self.r[i] * self.odds(i, theta) + self.r[i] - 1.0;
            for j in 0..self.m() {
                out[j] += u * self.g[(i, j)];
            }
        }
        out / self.n() as f64
    }

    /// Per-row moment contributions, n x m.
    fn contributions(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let mut c = self.g.clone();
        for i in 0..self.n() {
            let u = self.r[i] * self.odds(i, theta) + self.r[i] - 1.0;
            for j in 0..self.m() {
                c[(i, j)] *= u;
            }
        }
        c
    }

    /// m x p derivative of the moment vector.
    fn jacobian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let k = self.x1.ncols();
        let p = self.p();
        let mut jac = DMatrix::zeros(self.m(), p);
        let mut w = vec![0.0; p];
        for i in 0..self.n() {
            if self.r[i] != 1.0 {
                continue;
            }
            let e = self.odds(i, theta);
            w[0] = 1.0;
            for j in 0..k {
                w[j + 1] = self.x1[(i, j)];
            }
            w[k + 1] = self.y[i];
            for a in 0..self.m() {
                let ga = e * self.g[(i, a)];
                for (b, wb) in w.iter().enumerate() {
                    jac[(a, b)] += ga * wb;
                }
            }
        }
        jac / self.n() as f64
    }

    fn horvitz_thompson(&self, theta: &DVector<f64>, hajek: bool) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..self.n() {
            if self.r[i] == 1.0 {
                let w = 1.0 + self.odds(i, theta);
                num += w * self.y[i];
                den += w;
            }
        }
        if hajek {
            num / den
        } else {
            num / self.n() as f64
        }
    }

    fn max_weight(&self, theta: &DVector<f64>) -> f64 {
        (0..self.n())
            .filter(|&i| self.r[i] == 1.0)
            .map(|i| 1.0 + self.odds(i, theta))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Moment vector `n^-1 sum {r e^{alpha0 + x1'beta + gamma y} + r - 1} g_j(x)`.
pub fn ipw_moments(
    ds: &Dataset,
    x1_columns: &[usize],
    theta: &DVector<f64>,
    basis_g: &[BasisTerm],
) -> Result<Vec<f64>> {
    let prob = MomentProblem::new(ds, x1_columns, basis_g)?;
    if theta.len() != prob.p() {
        return Err(Error::InvalidArgument(format!(
            "theta has {} entries, expected {}",
            theta.len(),
            prob.p()
        )));
    }
    Ok(prob.moments(theta).iter().copied().collect())
}

/// Mean estimate weighting observed outcomes by `1 / pr(R=1|x,y)`.
/// With `hajek`, weights are normalized to sum to one.
pub fn horvitz_thompson(ds: &Dataset, x1_columns: &[usize], theta: &DVector<f64>, hajek: bool) -> Result<f64> {
    let prob = MomentProblem::new(ds, x1_columns, &[])?;
    Ok(prob.horvitz_thompson(theta, hajek))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl GridSpec {
    pub fn points(&self) -> Result<Vec<f64>> {
        if !(self.lo < self.hi) || !(self.step > 0.0) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "grid needs lo < hi and step > 0 (got {:?})",
                self
            )));
        }
        let count = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..count).map(|i| self.lo + i as f64 * self.step).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaProfile {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// `true` at grid point i when `[grid[i], grid[i+1]]` brackets a root
    /// (or `grid[i]` is itself a root).
    pub is_root_bracket: Vec<bool>,
    pub roots: Vec<f64>,
    /// `(alpha0, beta...)` held fixed.
    pub alpha_beta_fixed: Vec<f64>,
}

/// Evaluates `M(gamma) = n^-1 sum r {e^{alpha0 + x1'beta + gamma y} + 1} - 1`
/// on a grid and refines every sign change by bisection.
pub fn profile_gamma(
    ds: &Dataset,
    x1_columns: &[usize],
    alpha0: f64,
    beta: &[f64],
    grid: GridSpec,
) -> Result<GammaProfile> {
    if beta.len() != x1_columns.len() {
        return Err(Error::InvalidArgument(format!(
            "beta has {} entries for {} x1 columns",
            beta.len(),
            x1_columns.len()
        )));
    }
    let d = ds.d();
    let prob = MomentProblem::new(ds, x1_columns, &[BasisTerm::intercept(d)])?;
    let points = grid.points()?;
    let mut theta = DVector::zeros(prob.p());
    theta[0] = alpha0;
    for (j, &b) in beta.iter().enumerate() {
        theta[j + 1] = b;
    }
    let last = prob.p() - 1;
    let mut eval = |g: f64| {
        theta[last] = g;
        prob.moments(&theta)[0]
    };

    let values: Vec<f64> = points.iter().map(|&g| eval(g)).collect();
    if values.iter().all(|v| !v.is_finite()) {
        return Err(Error::ProfileOverflow);
    }

    let mut is_root_bracket = vec![false; points.len()];
    let mut roots = Vec::new();
    for i in 0..points.len() {
        let vi = values[i];
        if vi == 0.0 {
            is_root_bracket[i] = true;
            roots.push(points[i]);
            continue;
        }
        if i + 1 == points.len() {
            break;
        }
        let vj = values[i + 1];
        if !(vi.is_finite() && vj.is_finite()) || vj == 0.0 || vi.signum() == vj.signum() {
            continue;
        }
        is_root_bracket[i] = true;
        let (mut lo, mut hi) = (points[i], points[i + 1]);
        let mut flo = vi;
        let mut mid = 0.5 * (lo + hi);
        for _ in 0..MAX_BISECTIONS {
            mid = 0.5 * (lo + hi);
            let fm = eval(mid);
            if fm.abs() < ROOT_TOLERANCE || fm == 0.0 {
                break;
            }
            if fm.signum() == flo.signum() {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * mid.abs().max(1.0) {
                break;
            }
        }
        roots.push(mid);
    }

    Ok(GammaProfile {
        grid: points,
        values,
        is_root_bracket,
        roots,
        alpha_beta_fixed: std::iter::once(alpha0).chain(beta.iter().copied()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IpwFit {
    /// `(alpha0, beta..., gamma)`.
    pub theta_hat: Vec<f64>,
    pub converged: bool,
    pub tau_ipw: f64,
    /// Largest inverse weight among observed rows.
    pub weights_max: f64,
    /// Infinity norm of the moments (just-identified) or of the objective
    /// gradient (over-identified) at `theta_hat`.
    pub criterion: f64,
    /// Distinct converged solutions found by the multistart.
    pub roots: Vec<Vec<f64>>,
}

impl IpwFit {
    pub fn gamma(&self) -> f64 {
        *self.theta_hat.last().expect("theta is non-empty")
    }
}

fn lattice_starts(start: &DVector<f64>) -> Vec<DVector<f64>> {
    let last = start.len() - 1;
    GAMMA_LATTICE
        .iter()
        .map(|&dg| {
            let mut s = start.clone();
            s[last] += dg;
            s
        })
        .collect()
}

/// Default start: intercept-only odds of missingness, no slopes.
pub fn default_start(ds: &Dataset, p: usize) -> DVector<f64> {
    let n1 = ds.n_observed() as f64;
    let n0 = ds.n() as f64 - n1;
    let mut s = DVector::zeros(p);
    s[0] = if n0 > 0.0 && n1 > 0.0 { (n0 / n1).ln() } else { 0.0 };
    s
}

struct NewtonOutcome {
    theta: DVector<f64>,
    norm: f64,
    converged: bool,
}

/// Damped Newton on the moment equations; `None` when the Jacobian is
/// singular at the first iterate.
fn newton_root(prob: &MomentProblem, start: DVector<f64>) -> Option<NewtonOutcome> {
    let mut theta = start;
    let mut m = prob.moments(&theta);
    let mut norm2 = m.norm_squared();
    if !norm2.is_finite() {
        return None;
    }
    for it in 0..MAX_ITERATIONS {
        if m.amax() < MOMENT_TOLERANCE {
            return Some(NewtonOutcome { norm: m.amax(), theta, converged: true });
        }
        let jac = prob.jacobian(&theta);
        let step = match jac.lu().solve(&(-&m)) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ if it == 0 => return None,
            _ => break,
        };
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let cand = &theta + &step * scale;
            let cm = prob.moments(&cand);
            let cn = cm.norm_squared();
            if cn.is_finite() && cn < norm2 {
                theta = cand;
                m = cm;
                norm2 = cn;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let norm = m.amax();
    Some(NewtonOutcome {
        converged: norm < MOMENT_TOLERANCE,
        norm,
        theta,
    })
}

fn dedupe_roots(found: &[NewtonOutcome]) -> Vec<Vec<f64>> {
    let mut roots: Vec<DVector<f64>> = Vec::new();
    for f in found.iter().filter(|f| f.converged) {
        if !roots.iter().any(|r| (r - &f.theta).amax() < 1e-6 * (1.0 + r.amax())) {
            roots.push(f.theta.clone());
        }
    }
    roots.into_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Just-identified IPW estimating equations solved from a five-point gamma
/// lattice around `start`; the solution with the smallest moment norm wins.
pub fn solve_ipw(
    ds: &Dataset,
    x1_columns: &[usize],
    basis_g: &[BasisTerm],
    start: &DVector<f64>,
) -> Result<IpwFit> {
    let prob = MomentProblem::new(ds, x1_columns, basis_g)?;
    if basis_g.len() != prob.p() || start.len() != prob.p() {
        return Err(Error::InvalidArgument(format!(
            "just-identified system needs {} basis functions and start values (got {}, {})",
            prob.p(),
            basis_g.len(),
            start.len()
        )));
    }
    let found: Vec<NewtonOutcome> = lattice_starts(start)
        .into_iter()
        .filter_map(|s| newton_root(&prob, s))
        .collect();
    let best = found
        .iter()
        .filter(|f| f.norm.is_finite())
        .min_by(|a, b| a.norm.total_cmp(&b.norm))
        .ok_or_else(|| Error::NoRoot("Jacobian singular or moments non-finite at every start".into()))?;
    Ok(IpwFit {
        tau_ipw: prob.horvitz_thompson(&best.theta, false),
        weights_max: prob.max_weight(&best.theta),
        theta_hat: best.theta.iter().copied().collect(),
        converged: best.converged,
        criterion: best.norm,
        roots: dedupe_roots(&found),
    })
}

fn gmm_objective(prob: &MomentProblem, w: &DMatrix<f64>, theta: &DVector<f64>) -> f64 {
    let m = prob.moments(theta);
    (m.transpose() * w * &m)[(0, 0)]
}

/// Gauss-Newton descent on `m' W m` with step halving.
fn gauss_newton(prob: &MomentProblem, w: &DMatrix<f64>, start: DVector<f64>) -> Option<NewtonOutcome> {
    let mut theta = start;
    let mut m = prob.moments(&theta);
    let mut q = (m.transpose() * w * &m)[(0, 0)];
    if !q.is_finite() {
        return None;
    }
    let mut grad_norm = f64::INFINITY;
    let mut converged = false;
    for it in 0..MAX_GMM_ITERATIONS {
        let jac = prob.jacobian(&theta);
        let jtw = jac.transpose() * w;
        let grad = &jtw * &m;
        grad_norm = grad.amax();
        if grad_norm < GRADIENT_TOLERANCE {
            converged = true;
            break;
        }
        let step = match (&jtw * &jac).lu().solve(&(-&grad)) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ if it == 0 => return None,
            _ => break,
        };
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let cand = &theta + &step * scale;
            let cm = prob.moments(&cand);
            let cq = (cm.transpose() * w * &cm)[(0, 0)];
            if cq.is_finite() && cq < q {
                theta = cand;
                m = cm;
                q = cq;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            // Objective cannot decrease further in floating point.
            converged = grad_norm < GRADIENT_TOLERANCE.sqrt() * 1e-2;
            break;
        }
    }
    Some(NewtonOutcome {
        theta,
        norm: grad_norm,
        converged,
    })
}

fn best_of(found: &[NewtonOutcome], prob: &MomentProblem, w: &DMatrix<f64>) -> Option<(usize, f64)> {
    found
        .iter()
        .enumerate()
        .map(|(k, f)| (k, gmm_objective(prob, w, &f.theta)))
        .filter(|(_, q)| q.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GmmFit {
    pub fit: IpwFit,
    pub step1_theta: Vec<f64>,
    pub step1_objective: f64,
    /// Step-1 point evaluated with the step-2 weight.
    pub step1_objective_reweighted: f64,
    pub step2_objective: f64,
    pub n_moments: usize,
}

/// Two-step GMM with all monomials of total degree `<= degree_k` as
/// instruments. Step 1 uses the identity weight, step 2 the inverse
/// (ridge-regularized) moment covariance at the step-1 estimate.
pub fn solve_gmm(ds: &Dataset, x1_columns: &[usize], degree_k: u32) -> Result<GmmFit> {
    let basis = monomials_up_to(ds.d(), degree_k);
    let prob = MomentProblem::new(ds, x1_columns, &basis)?;
    let p = prob.p();
    if basis.len() < p {
        return Err(Error::InvalidArgument(format!(
            "degree {degree_k} gives {} moments for {p} parameters",
            basis.len()
        )));
    }
    let start = default_start(ds, p);
    if basis.len() == p {
        let fit = solve_ipw(ds, x1_columns, &basis, &start)?;
        let q = fit.criterion * fit.criterion;
        return Ok(GmmFit {
            step1_theta: fit.theta_hat.clone(),
            step1_objective: q,
            step1_objective_reweighted: q,
            step2_objective: q,
            n_moments: basis.len(),
            fit,
        });
    }

    let identity = DMatrix::identity(prob.m(), prob.m());
    let step1: Vec<NewtonOutcome> = lattice_starts(&start)
        .into_iter()
        .filter_map(|s| gauss_newton(&prob, &identity, s))
        .collect();
    let (k1, q1) = best_of(&step1, &prob, &identity)
        .ok_or_else(|| Error::NoRoot("step-1 objective non-finite at every start".into()))?;
    let theta1 = step1[k1].theta.clone();

    let c = prob.contributions(&theta1);
    let omega = c.transpose() * &c / prob.n() as f64;
    let ridge = 1e-8 * omega.trace();
    let reg = &omega + DMatrix::identity(prob.m(), prob.m()) * ridge;
    let w = crate::linalg::spd_inverse(&reg, "GMM moment covariance")
        .or_else(|_| {
            reg.clone()
                .try_inverse()
                .ok_or_else(|| Error::SingularInformation("GMM moment covariance".into()))
        })?;
    let w = crate::linalg::symmetrize(&w);
    let q1_rew = gmm_objective(&prob, &w, &theta1);

    let mut starts = vec![theta1.clone()];
    starts.extend(lattice_starts(&start));
    let step2: Vec<NewtonOutcome> = starts
        .into_iter()
        .filter_map(|s| gauss_newton(&prob, &w, s))
        .collect();
    let (k2, q2) = best_of(&step2, &prob, &w)
        .ok_or_else(|| Error::NoRoot("step-2 objective non-finite at every start".into()))?;
    let best = &step2[k2];

    let fit = IpwFit {
        tau_ipw: prob.horvitz_thompson(&best.theta, false),
        weights_max: prob.max_weight(&best.theta),
        theta_hat: best.theta.iter().copied().collect(),
        converged: step1[k1].converged && best.converged,
        criterion: best.norm,
        roots: dedupe_roots(&step2),
    };
    Ok(GmmFit {
        fit,
        step1_theta: theta1.iter().copied().collect(),
        step1_objective: q1,
        step1_objective_reweighted: q1_rew,
        step2_objective: q2,
        n_moments: basis.len(),
    })
}

/// First `p` monomials in graded order: the just-identified IPW instruments.
pub fn just_identified_basis(d: usize, p: usize) -> Vec<BasisTerm> {
    let mut k = 0;
    loop {
        let all = monomials_up_to(d, k);
        if all.len() >= p {
            return all.into_iter().take(p).collect();
        }
        k += 1;
    }
}

/// Non-reliable replication rule for tau and gamma estimates.
pub fn is_reliable(tau: f64, gamma: f64) -> bool {
    tau.is_finite()
        && gamma.is_finite()
        && (TAU_RELIABLE.0..=TAU_RELIABLE.1).contains(&tau)
        && (GAMMA_RELIABLE.0..=GAMMA_RELIABLE.1).contains(&gamma)
}
