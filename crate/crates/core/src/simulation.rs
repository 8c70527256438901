//! Data generation by exponential tilting, true values, and Monte Carlo
//! study drivers.
//!
//! Datasets are drawn as `X -> R | X -> e | R`: `R | X` follows the induced
//! logistic model, the error of an observed row follows `f_e`, and that of a
//! missing row follows `f_e` tilted by `e^{gamma e} / M1(gamma)`. With normal
//! mixture errors the tilt stays a normal mixture, so everything is exact.

use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{BasisTerm, Dataset, ModelConfig};
use crate::error::{Error, Result};
use crate::inference::ConfidenceInterval;
use crate::ipw::is_reliable;
use crate::pipeline::{estimate_point, Estimator};
use crate::propensity::observe_prob;
use crate::rng::{stream, stream_seed, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalComponent {
    pub weight: f64,
    pub mean: f64,
    pub var: f64,
}

/// Finite normal mixture.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorLaw {
    pub components: Vec<NormalComponent>,
}

impl ErrorLaw {
    pub fn new(components: Vec<NormalComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument("error law needs a component".into()));
        }
        if components
            .iter()
            .any(|c| !(c.weight > 0.0) || !(c.var > 0.0) || !c.mean.is_finite() || !c.var.is_finite())
        {
            return Err(Error::InvalidArgument("mixture weights and variances must be positive".into()));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("mixture weights sum to {total}")));
        }
        Ok(ErrorLaw { components })
    }

    pub fn normal(mean: f64, var: f64) -> Result<Self> {
        Self::new(vec![NormalComponent { weight: 1.0, mean, var }])
    }

    /// `2/3 N(-delta, 4 - 3 delta^2) + 1/3 N(2 delta, 4)`: mean 0, variance 4.
    pub fn two_thirds_mixture(delta: f64) -> Result<Self> {
        if delta == 0.0 {
            return Self::normal(0.0, 4.0);
        }
        Self::new(vec![
            NormalComponent {
                weight: 2.0 / 3.0,
                mean: -delta,
                var: 4.0 - 3.0 * delta * delta,
            },
            NormalComponent {
                weight: 1.0 / 3.0,
                mean: 2.0 * delta,
                var: 4.0,
            },
        ])
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.mean).sum()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.components
            .iter()
            .map(|c| c.weight * (c.var + (c.mean - mu).powi(2)))
            .sum()
    }

    /// `M1(t) = E e^{t e}`.
    pub fn mgf(&self, t: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * (t * c.mean + 0.5 * t * t * c.var).exp())
            .sum()
    }

    /// `M2(t) = E e e^{t e}`.
    pub fn mgf_deriv(&self, t: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * (c.mean + t * c.var) * (t * c.mean + 0.5 * t * t * c.var).exp())
            .sum()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|c| {
                let nd = Normal::new(c.mean, c.var.sqrt()).expect("validated component");
                c.weight * nd.cdf(x)
            })
            .sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let last = self.components.len() - 1;
        let mut chosen = &self.components[last];
        for c in &self.components[..last] {
            acc += c.weight;
            if u < acc {
                chosen = c;
                break;
            }
        }
        let z: f64 = rng.sample(StandardNormal);
        chosen.mean + chosen.var.sqrt() * z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TiltedLaw {
    /// Law proportional to `e^{gamma e} f_e(e)`; its mean is generally not 0.
    pub tilted: ErrorLaw,
    pub m1: f64,
}

/// Component `N(m, s2)` becomes `N(m + gamma s2, s2)` with weight
/// proportional to `w exp(gamma m + gamma^2 s2 / 2)`.
pub fn tilt_error_law(law: &ErrorLaw, gamma: f64) -> TiltedLaw {
    let logw: Vec<f64> = law
        .components
        .iter()
        .map(|c| c.weight.ln() + gamma * c.mean + 0.5 * gamma * gamma * c.var)
        .collect();
    let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = scaled.iter().sum();
    let components = law
        .components
        .iter()
        .zip(&scaled)
        .map(|(c, s)| NormalComponent {
            weight: s / total,
            mean: c.mean + gamma * c.var,
            var: c.var,
        })
        .collect();
    TiltedLaw {
        tilted: ErrorLaw { components },
        m1: law.mgf(gamma),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CovariateLaw {
    pub mean: f64,
    pub var: f64,
}

/// `E X^k` for `X ~ N(m, v)`.
fn normal_raw_moment(m: f64, v: f64, k: u32) -> f64 {
    let (mut prev, mut cur) = (1.0, m);
    match k {
        0 => 1.0,
        _ => {
            for j in 2..=k {
                let next = m * cur + f64::from(j - 1) * v * prev;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub name: String,
    /// Independent normal covariates.
    pub covariates: Vec<CovariateLaw>,
    pub mean_basis: Vec<BasisTerm>,
    pub xi: Vec<f64>,
    pub x1_columns: Vec<usize>,
    pub alpha0: f64,
    pub beta: Vec<f64>,
    pub gamma: f64,
    pub error_law: ErrorLaw,
}

impl Scenario {
    /// Covariates `X1 ~ N(1,1)`, `X2 ~ N(0,1)`; `mu = 2.5 - x1 + 1.5 x2`;
    /// selection on `(x1, y)` with `beta = -0.4`, `gamma = 0.5`.
    pub fn example1(alpha0: f64, delta: f64) -> Result<Self> {
        let sc = Scenario {
            name: format!("example1(alpha0={alpha0}, delta={delta})"),
            covariates: vec![CovariateLaw { mean: 1.0, var: 1.0 }, CovariateLaw { mean: 0.0, var: 1.0 }],
            mean_basis: vec![BasisTerm::intercept(2), BasisTerm::linear(2, 0), BasisTerm::linear(2, 1)],
            xi: vec![2.5, -1.0, 1.5],
            x1_columns: vec![0],
            alpha0,
            beta: vec![-0.4],
            gamma: 0.5,
            error_law: ErrorLaw::two_thirds_mixture(delta)?,
        };
        sc.validate()?;
        Ok(sc)
    }

    /// One covariate `X ~ N(0,1)`; `mu = 2 - x + x^2`; `beta = -0.4`, `gamma = 0.5`.
    pub fn example2(alpha0: f64, delta: f64) -> Result<Self> {
        let sc = Scenario {
            name: format!("example2(alpha0={alpha0}, delta={delta})"),
            covariates: vec![CovariateLaw { mean: 0.0, var: 1.0 }],
            mean_basis: vec![BasisTerm::intercept(1), BasisTerm::linear(1, 0), BasisTerm::power(1, 0, 2)],
            xi: vec![2.0, -1.0, 1.0],
            x1_columns: vec![0],
            alpha0,
            beta: vec![-0.4],
            gamma: 0.5,
            error_law: ErrorLaw::two_thirds_mixture(delta)?,
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.covariates.len();
        if d == 0 || self.mean_basis.len() != self.xi.len() || self.beta.len() != self.x1_columns.len() {
            return Err(Error::InvalidArgument(format!("inconsistent scenario dimensions in {}", self.name)));
        }
        if self.mean_basis.iter().any(|t| t.dim() != d) || self.x1_columns.iter().any(|&c| c >= d) {
            return Err(Error::InvalidArgument(format!("scenario {} indexes a missing covariate", self.name)));
        }
        if self.covariates.iter().any(|c| !(c.var > 0.0)) {
            return Err(Error::InvalidArgument("covariate variances must be positive".into()));
        }
        if self.error_law.mean().abs() > 1e-12 {
            return Err(Error::InvalidArgument("error law must have mean zero".into()));
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.covariates.len()
    }

    /// The correctly specified working model.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig::new(self.mean_basis.clone(), self.x1_columns.clone()).expect("validated scenario")
    }

    pub fn mu(&self, x: &[f64]) -> f64 {
        self.mean_basis.iter().zip(&self.xi).map(|(t, c)| c * t.eval(x)).sum()
    }

    /// Intercept of the induced model, `alpha0 + log M1(gamma)`.
    pub fn alpha_induced(&self) -> f64 {
        self.alpha0 + self.error_law.mgf(self.gamma).ln()
    }

    /// `E mu(X)` from normal moments.
    pub fn mean_mu(&self) -> f64 {
        self.mean_basis
            .iter()
            .zip(&self.xi)
            .map(|(t, c)| {
                c * t
                    .exponents
                    .iter()
                    .zip(&self.covariates)
                    .map(|(&k, law)| normal_raw_moment(law.mean, law.var, k))
                    .product::<f64>()
            })
            .sum()
    }

    fn draw_x<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for (v, law) in out.iter_mut().zip(&self.covariates) {
            let z: f64 = rng.sample(StandardNormal);
            *v = law.mean + law.var.sqrt() * z;
        }
    }

    /// `pr(R=1 | x)` under the induced model.
    pub fn observe_prob(&self, x: &[f64]) -> f64 {
        let mut phi = self.alpha_induced() + self.gamma * self.mu(x);
        for (&c, &b) in self.x1_columns.iter().zip(&self.beta) {
            phi += b * x[c];
        }
        observe_prob(phi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Truth {
    pub tau0: f64,
    pub pr_missing: f64,
    pub eta0: f64,
    /// Monte Carlo standard error of `eta0`.
    pub eta_se: f64,
    pub alpha_induced: f64,
    pub mean_mu: f64,
    pub m1: f64,
    pub m2: f64,
}

const TRUTH_CHUNK: usize = 1 << 16;
/// Draws used by the study drivers when they need `tau0`.
pub const DEFAULT_TRUTH_DRAWS: usize = 10_000_000;

/// `tau0 = E mu(X) + (1 - eta0) M2(gamma) / M1(gamma)` with `M1`, `M2` and
/// `E mu(X)` in closed form and `eta0 = E pi(X)` by Monte Carlo.
pub fn compute_truth(sc: &Scenario, mc_draws: usize, seed: u64) -> Result<Truth> {
    sc.validate()?;
    if mc_draws == 0 {
        return Err(Error::InvalidArgument("need at least one Monte Carlo draw".into()));
    }
    let chunks = mc_draws.div_ceil(TRUTH_CHUNK);
    let parts: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, c as u64);
            let len = TRUTH_CHUNK.min(mc_draws - c * TRUTH_CHUNK);
            let mut x = vec![0.0; sc.d()];
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..len {
                sc.draw_x(&mut rng, &mut x);
                let p = sc.observe_prob(&x);
                s += p;
                s2 += p * p;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = parts.iter().fold((0.0, 0.0), |(a, b), &(c, d)| (a + c, b + d));
    let nf = mc_draws as f64;
    let eta0 = s / nf;
    let var = (s2 / nf - eta0 * eta0).max(0.0);
    let m1 = sc.error_law.mgf(sc.gamma);
    let m2 = sc.error_law.mgf_deriv(sc.gamma);
    let mean_mu = sc.mean_mu();
    Ok(Truth {
        tau0: mean_mu + (1.0 - eta0) * m2 / m1,
        pr_missing: 1.0 - eta0,
        eta0,
        eta_se: (var / nf).sqrt(),
        alpha_induced: sc.alpha_induced(),
        mean_mu,
        m1,
        m2,
    })
}

/// A generated dataset with the outcome kept for every row.
#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub dataset: Dataset,
    pub y_full: Vec<f64>,
    /// `y - mu(x)` for every row.
    pub errors: Vec<f64>,
}

pub fn generate_full(sc: &Scenario, n: usize, seed: u64) -> Result<GeneratedData> {
    sc.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let tilted = tilt_error_law(&sc.error_law, sc.gamma).tilted;
    let mut rng: StreamRng = stream(seed, 0);
    let d = sc.d();
    let mut x = DMatrix::zeros(n, d);
    let mut r = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut errors = Vec::with_capacity(n);
    let mut row = vec![0.0; d];
    for i in 0..n {
        sc.draw_x(&mut rng, &mut row);
        for (j, &v) in row.iter().enumerate() {
            x[(i, j)] = v;
        }
        let u: f64 = rng.random();
        let ri = u8::from(u < sc.observe_prob(&row));
        let e = if ri == 1 {
            sc.error_law.sample(&mut rng)
        } else {
            tilted.sample(&mut rng)
        };
        r.push(ri);
        y.push(sc.mu(&row) + e);
        errors.push(e);
    }
    let dataset = Dataset::from_full(r, &y, x)?;
    Ok(GeneratedData {
        dataset,
        y_full: y,
        errors,
    })
}

pub fn generate_dataset(sc: &Scenario, n: usize, seed: u64) -> Result<Dataset> {
    Ok(generate_full(sc, n, seed)?.dataset)
}

/// Selection-model design where `y` is drawn first and `R` depends on it:
/// `Y = X1 + X2 + e`, `X1 ~ N(0,2)`, `X2 ~ N(0,1)`, `e ~ N(0,1)`,
/// `pr(R=1|x,y) = 1 / (1 + exp(-1 - x1 + 3y))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelectionDesign {
    pub x1_var: f64,
    pub x2_var: f64,
    pub error_var: f64,
    pub alpha0: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for SelectionDesign {
    fn default() -> Self {
        SelectionDesign {
            x1_var: 2.0,
            x2_var: 1.0,
            error_var: 1.0,
            alpha0: -1.0,
            beta: -1.0,
            gamma: 3.0,
        }
    }
}

impl SelectionDesign {
    /// Mean basis `{1, x1, x2}` with `x1` in the selection model.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig::new(
            vec![BasisTerm::intercept(2), BasisTerm::linear(2, 0), BasisTerm::linear(2, 1)],
            vec![0],
        )
        .expect("fixed design")
    }

    pub fn generate(&self, n: usize, seed: u64) -> Result<GeneratedData> {
        if n == 0 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        let mut rng = stream(seed, 0);
        let mut x = DMatrix::zeros(n, 2);
        let mut r = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        let mut errors = Vec::with_capacity(n);
        for i in 0..n {
            let z: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
            let x1 = self.x1_var.sqrt() * z[0];
            let x2 = self.x2_var.sqrt() * z[1];
            let e = self.error_var.sqrt() * z[2];
            let yi = x1 + x2 + e;
            let u: f64 = rng.random();
            let ri = u8::from(u < observe_prob(self.alpha0 + self.beta * x1 + self.gamma * yi));
            x[(i, 0)] = x1;
            x[(i, 1)] = x2;
            r.push(ri);
            y.push(yi);
            errors.push(e);
        }
        Ok(GeneratedData {
            dataset: Dataset::from_full(r, &y, x)?,
            y_full: y,
            errors,
        })
    }
}

/// Runs `f` once per replication in parallel; replication `k` receives the
/// seed `stream_seed(seed, k)`. Output order follows the replication index.
pub fn replicate<T, F>(reps: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, u64) -> T + Sync,
{
    (0..reps)
        .into_par_iter()
        .map(|k| f(k, stream_seed(seed, k as u64)))
        .collect()
}

/// Method evaluated by [`run_study`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Estimator(Estimator),
    /// Returns the true value; checks the harness itself.
    Oracle,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "oracle" {
            Ok(Method::Oracle)
        } else {
            s.parse().map(Method::Estimator)
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Estimator(e) => e.fmt(f),
            Method::Oracle => write!(f, "oracle"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub method: String,
    pub rb_percent: f64,
    pub mse_x100: f64,
    pub ncr: usize,
    pub n_reps: usize,
    /// Mean and standard deviation of the reliable `gamma_hat`.
    pub gamma_mean: f64,
    pub gamma_sd: f64,
}

/// Outcome of one method on one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RepOutcome {
    pub tau: f64,
    pub gamma: f64,
    /// Failed, did not converge, or fell outside the reliability box.
    pub ncr: bool,
}

pub fn evaluate_method(method: Method, ds: &Dataset, cfg: &ModelConfig, tau0: f64, gamma0: f64) -> RepOutcome {
    let est = match method {
        Method::Oracle => {
            return RepOutcome {
                tau: tau0,
                gamma: gamma0,
                ncr: false,
            }
        }
        Method::Estimator(e) => e,
    };
    match catch_unwind(AssertUnwindSafe(|| estimate_point(est, ds, cfg))) {
        Ok(Ok(p)) => RepOutcome {
            tau: p.tau,
            gamma: p.gamma,
            ncr: !p.converged || !is_reliable(p.tau, p.gamma),
        },
        _ => RepOutcome {
            tau: f64::NAN,
            gamma: f64::NAN,
            ncr: true,
        },
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

/// RB (x100), MSE (x100) and NCR over the reliable replications.
pub fn summarize(method: &str, outcomes: &[RepOutcome], tau0: f64) -> StudyRow {
    let ok: Vec<&RepOutcome> = outcomes.iter().filter(|o| !o.ncr).collect();
    let m = ok.len() as f64;
    let (rb, mse) = if ok.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        let bias = ok.iter().map(|o| o.tau - tau0).sum::<f64>() / m;
        let mse = ok.iter().map(|o| (o.tau - tau0).powi(2)).sum::<f64>() / m;
        (100.0 * bias / tau0, 100.0 * mse)
    };
    let gammas: Vec<f64> = ok.iter().map(|o| o.gamma).collect();
    let (gamma_mean, gamma_sd) = mean_sd(&gammas);
    StudyRow {
        method: method.to_string(),
        rb_percent: rb,
        mse_x100: mse,
        ncr: outcomes.len() - ok.len(),
        n_reps: outcomes.len(),
        gamma_mean,
        gamma_sd,
    }
}

/// Every method on the same generated datasets.
pub fn run_study_with_truth(
    sc: &Scenario,
    tau0: f64,
    n: usize,
    reps: usize,
    methods: &[Method],
    seed: u64,
) -> Result<Vec<StudyRow>> {
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be at least 1".into()));
    }
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no methods requested".into()));
    }
    sc.validate()?;
    let cfg = sc.model_config();
    let per_rep: Vec<Result<Vec<RepOutcome>>> = replicate(reps, seed, |_, s| {
        let ds = generate_dataset(sc, n, s)?;
        Ok(methods
            .iter()
            .map(|&m| evaluate_method(m, &ds, &cfg, tau0, sc.gamma))
            .collect())
    });
    let per_rep: Vec<Vec<RepOutcome>> = per_rep.into_iter().collect::<Result<_>>()?;
    Ok(methods
        .iter()
        .enumerate()
        .map(|(j, m)| {
            let col: Vec<RepOutcome> = per_rep.iter().map(|r| r[j]).collect();
            summarize(&m.to_string(), &col, tau0)
        })
        .collect())
}

/// Truth from [`compute_truth`] with [`DEFAULT_TRUTH_DRAWS`], then the study.
pub fn run_study(sc: &Scenario, n: usize, reps: usize, methods: &[Method], seed: u64) -> Result<(Truth, Vec<StudyRow>)> {
    let truth = compute_truth(sc, DEFAULT_TRUTH_DRAWS, stream_seed(seed, u64::MAX))?;
    let rows = run_study_with_truth(sc, truth.tau0, n, reps, methods, seed)?;
    Ok((truth, rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverageResult {
    pub coverage_percent: f64,
    pub mean_width: f64,
    /// Replications whose interval could be computed.
    pub n_used: usize,
    pub n_failed: usize,
}

/// Coverage of `ci_fn` over generated datasets; failed replications are
/// excluded and counted.
pub fn run_coverage_with<F>(sc: &Scenario, tau0: f64, n: usize, reps: usize, seed: u64, ci_fn: F) -> Result<CoverageResult>
where
    F: Fn(&Dataset, u64) -> Result<ConfidenceInterval> + Sync,
{
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be at least 1".into()));
    }
    let cis: Vec<Option<ConfidenceInterval>> = replicate(reps, seed, |_, s| {
        let ds = generate_dataset(sc, n, s).ok()?;
        catch_unwind(AssertUnwindSafe(|| ci_fn(&ds, stream_seed(s, 1)))).ok()?.ok()
    });
    let ok: Vec<&ConfidenceInterval> = cis.iter().flatten().collect();
    let used = ok.len();
    let hits = ok.iter().filter(|ci| ci.contains(tau0)).count();
    Ok(CoverageResult {
        coverage_percent: if used == 0 { f64::NAN } else { 100.0 * hits as f64 / used as f64 },
        mean_width: ok.iter().map(|ci| ci.width()).sum::<f64>() / used as f64,
        n_used: used,
        n_failed: reps - used,
    })
}

/// Interval constructions for [`run_coverage_study`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoverageMethod {
    Wald,
    BootstrapT { resamples: usize },
}

pub fn run_coverage_study(
    sc: &Scenario,
    n: usize,
    reps: usize,
    method: CoverageMethod,
    level: f64,
    seed: u64,
) -> Result<(Truth, CoverageResult)> {
    let truth = compute_truth(sc, DEFAULT_TRUTH_DRAWS, stream_seed(seed, u64::MAX))?;
    let cfg = sc.model_config();
    let opts = crate::pipeline::FitOptions {
        level,
        ..Default::default()
    };
    let res = match method {
        CoverageMethod::Wald => run_coverage_with(sc, truth.tau0, n, reps, seed, |ds, _| {
            Ok(crate::pipeline::fit_proposed(ds, &cfg, &opts)?.wald)
        })?,
        CoverageMethod::BootstrapT { resamples } => run_coverage_with(sc, truth.tau0, n, reps, seed, |ds, s| {
            Ok(crate::bootstrap::bootstrap_t_ci(ds, &cfg, &opts, resamples, s)?.ci)
        })?,
    };
    Ok((truth, res))
}
