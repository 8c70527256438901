//! `nimd`: fit, simulate, profile-gamma, diagnose and generate.
//!
//! Exit codes: 0 success, 1 internal error, 2 usage or data error. Errors are
//! printed to stderr as JSON carrying a stable taxonomy code.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use nimd::bootstrap::{bootstrap_percentile_ci, bootstrap_t_ci, BootstrapResult};
use nimd::data::{parse_dataset, write_dataset, CsvSchema};
use nimd::diagnostics::{ncv_score_test, uss_gof_test};
use nimd::ipw::{profile_gamma, GridSpec};
use nimd::pipeline::{estimate_point, fit_point, fit_proposed, Estimator, FitOptions};
use nimd::rng::DEFAULT_SEED;
use nimd::simulation::{
    compute_truth, generate_dataset, run_coverage_study, run_study_with_truth, CoverageMethod, Method, Scenario,
    SelectionDesign, DEFAULT_TRUTH_DRAWS,
};
use nimd::{Dataset, Error, H1Form, ModelConfig};

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "nimd", version, about = "Mean estimation with non-ignorable missing outcomes")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Two-step estimate of the outcome mean with Wald and bootstrap intervals.
    Fit(FitArgs),
    /// Monte Carlo study: relative bias, MSE and failure counts per method.
    Simulate(SimulateArgs),
    /// Evaluate M(gamma) on a grid and locate its roots.
    ProfileGamma(ProfileArgs),
    /// Non-constant variance and goodness-of-fit tests.
    Diagnose(DiagnoseArgs),
    /// Write a simulated dataset as CSV.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct DataArgs {
    /// CSV with a header row; missing outcomes are empty cells.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "y")]
    y_column: String,
    /// Explicit 0/1 response indicator column.
    #[arg(long)]
    r_column: Option<String>,
    /// Covariate columns (default: all other columns).
    #[arg(long, value_delimiter = ',')]
    x_columns: Vec<String>,
}

impl DataArgs {
    fn load(&self) -> nimd::Result<Dataset> {
        let schema = CsvSchema {
            y: self.y_column.clone(),
            r: self.r_column.clone(),
            x: self.x_columns.clone(),
        };
        parse_dataset(&self.data, &schema)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BootstrapMethod {
    T,
    Percentile,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Model JSON: {"mean_basis": [[exponents..],..], "x1_columns": [1-based..]}.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Closed form for the xi block of the tau gradient.
    #[arg(long, default_value = "as_printed")]
    h1_form: String,
    /// Number of bootstrap resamples (0 = none).
    #[arg(long, default_value_t = 0)]
    bootstrap: usize,
    #[arg(long, value_enum, default_value = "t")]
    bootstrap_method: BootstrapMethod,
    /// Estimator for percentile intervals: proposed, normal-plugin, ipw, gmm-K.
    /// A non-default choice also adds its point estimate as `baseline`.
    #[arg(long, default_value = "proposed")]
    estimator: String,
    /// 64-bit seed or "random".
    #[arg(long)]
    seed: Option<String>,
    /// Also run the model diagnostics.
    #[arg(long)]
    diagnostics: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioName {
    Example1,
    Example2,
}

#[derive(Clone, Copy, ValueEnum)]
enum CoverageKind {
    Wald,
    BootstrapT,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    scenario: ScenarioName,
    #[arg(long, allow_hyphen_values = true)]
    alpha0: f64,
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    reps: usize,
    /// Comma-separated: proposed, normal-plugin, ipw, gmm-K, oracle.
    #[arg(long, value_delimiter = ',', default_value = "proposed")]
    methods: Vec<String>,
    /// Also estimate interval coverage.
    #[arg(long, value_enum)]
    coverage: Option<CoverageKind>,
    /// Resamples per replication for bootstrap-t coverage.
    #[arg(long, default_value_t = 399)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, default_value_t = DEFAULT_TRUTH_DRAWS)]
    truth_draws: usize,
    #[arg(long)]
    seed: Option<String>,
    /// Table CSV (default: stdout).
    #[arg(long)]
    output: Option<PathBuf>,
    /// JSON sidecar with scenario, seed and true values.
    #[arg(long)]
    sidecar: Option<PathBuf>,
    #[arg(long)]
    coverage_output: Option<PathBuf>,
}

#[derive(Args)]
struct ProfileArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Covariates (1-based) in the selection linear term.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    x1_columns: Vec<usize>,
    #[arg(long, allow_hyphen_values = true)]
    alpha0: f64,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    beta: Vec<f64>,
    #[arg(long, allow_hyphen_values = true)]
    lo: f64,
    #[arg(long, allow_hyphen_values = true)]
    hi: f64,
    #[arg(long)]
    step: f64,
    /// CSV gamma,M_gamma,is_root_bracket (default: stdout; roots then go to stderr).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenerateDesign {
    Example1,
    Example2,
    /// Y = X1 + X2 + e with selection on (x1, y).
    Selection,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    scenario: GenerateDesign,
    #[arg(long, allow_hyphen_values = true, default_value_t = -1.7)]
    alpha0: f64,
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    output: PathBuf,
}

enum Failure {
    Estimation(Error),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Estimation(e)
    }
}

type CliResult<T> = Result<T, Failure>;

fn parse_seed(s: &Option<String>) -> CliResult<u64> {
    match s.as_deref() {
        None => Ok(DEFAULT_SEED),
        Some("random") => Ok(std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(DEFAULT_SEED)),
        Some(v) => v
            .parse()
            .map_err(|_| Failure::Usage(format!("seed must be a 64-bit unsigned integer or 'random', got '{v}'"))),
    }
}

fn write_out(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::Io {
            path: p.display().to_string(),
            source: e,
        })?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .map_err(|e| Error::Io { path: "<stdout>".into(), source: e })?;
        }
    }
    Ok(())
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("values serialize");
    s.push('\n');
    s
}

fn error_value(e: &Error) -> Value {
    json!({ "code": e.code().as_str(), "message": e.to_string() })
}

fn bootstrap_value(b: &BootstrapResult) -> Value {
    json!({
        "lower": b.ci.lower,
        "upper": b.ci.upper,
        "level": b.ci.level,
        "method": b.ci.method,
        "n_resamples_requested": b.n_resamples_requested,
        "n_successful": b.n_successful,
        "failures": b.failures,
        "seed": b.seed,
    })
}

fn diagnostics_value(ds: &Dataset, cfg: &ModelConfig) -> CliResult<Value> {
    let point = fit_point(ds, cfg)?;
    let ncv = ncv_score_test(&point.outcome, &point.design);
    let uss = uss_gof_test(ds, &point.propensity, &point.mu_hat, &point.design);
    let show = |r: nimd::Result<nimd::diagnostics::TestResult>| match r {
        Ok(t) => serde_json::to_value(t).expect("serializable"),
        Err(e) => json!({ "error": error_value(&e) }),
    };
    Ok(json!({ "ncv": show(ncv), "uss": show(uss) }))
}

fn cmd_fit(a: &FitArgs) -> CliResult<()> {
    let seed = parse_seed(&a.seed)?;
    let est: Estimator = a.estimator.parse().map_err(|e: Error| Failure::Usage(e.to_string()))?;
    let ds = a.data.load()?;
    let cfg = ModelConfig::from_json_file(&a.model)?;
    let opts = FitOptions {
        h1_form: H1Form::parse(&a.h1_form)?,
        level: a.level,
    };
    let fit = fit_proposed(&ds, &cfg, &opts)?;
    let p = &fit.point;
    let sigma: Vec<Vec<f64>> = (0..fit.variance.sigma.nrows())
        .map(|i| fit.variance.sigma.row(i).iter().copied().collect())
        .collect();
    let mut out = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "fit",
        "n": ds.n(),
        "n_observed": ds.n_observed(),
        "xi_hat": p.outcome.xi_hat.as_slice(),
        "sigma2_hat": p.outcome.sigma2_hat,
        "theta_hat": {
            "alpha": p.propensity.alpha(),
            "beta": p.propensity.beta(),
            "gamma": p.propensity.gamma(),
        },
        "propensity": {
            "loglik": p.propensity.loglik,
            "iterations": p.propensity.iterations,
            "converged": p.propensity.converged,
            "gradient_norm": p.propensity.gradient_norm,
        },
        "alpha0_hat": p.tau.alpha0_hat,
        "tau_hat": p.tau.tau_hat,
        "eta_hat": p.tau.eta_hat,
        "m1_hat": p.tau.m1_hat,
        "m2_hat": p.tau.m2_hat,
        "sigma2_tau": fit.variance.sigma2_tau,
        "sigma2_tau_clipped": fit.variance.clipped,
        "h1_form": fit.variance.h1_form.as_str(),
        "sigma": sigma,
        "wald_ci": { "lower": fit.wald.lower, "upper": fit.wald.upper, "level": fit.wald.level },
        "identifiability_report": p.identifiability,
        "seed": seed,
    });
    if est != Estimator::Proposed {
        let b = estimate_point(est, &ds, &cfg)?;
        out["baseline"] = json!({
            "estimator": est,
            "tau_hat": b.tau,
            "gamma_hat": b.gamma,
            "converged": b.converged,
        });
    }
    if a.bootstrap > 0 {
        let b = match a.bootstrap_method {
            BootstrapMethod::T => bootstrap_t_ci(&ds, &cfg, &opts, a.bootstrap, seed)?,
            BootstrapMethod::Percentile => bootstrap_percentile_ci(est, &ds, &cfg, a.level, a.bootstrap, seed)?,
        };
        out["bootstrap_ci"] = bootstrap_value(&b);
    }
    if a.diagnostics {
        out["diagnostics"] = diagnostics_value(&ds, &cfg)?;
    }
    write_out(a.output.as_deref(), &pretty(&out))
}

fn scenario(name: ScenarioName, alpha0: f64, delta: f64) -> nimd::Result<Scenario> {
    match name {
        ScenarioName::Example1 => Scenario::example1(alpha0, delta),
        ScenarioName::Example2 => Scenario::example2(alpha0, delta),
    }
}

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        "NA".into()
    }
}

fn cmd_simulate(a: &SimulateArgs) -> CliResult<()> {
    if a.reps == 0 {
        return Err(Failure::Usage("--reps must be at least 1".into()));
    }
    if a.n == 0 {
        return Err(Failure::Usage("--n must be at least 1".into()));
    }
    let methods: Vec<Method> = a
        .methods
        .iter()
        .map(|m| m.parse::<Method>().map_err(|e| Failure::Usage(e.to_string())))
        .collect::<CliResult<_>>()?;
    let seed = parse_seed(&a.seed)?;
    let sc = scenario(a.scenario, a.alpha0, a.delta)?;
    let truth = compute_truth(&sc, a.truth_draws, nimd::rng::stream_seed(seed, u64::MAX))?;
    let rows = run_study_with_truth(&sc, truth.tau0, a.n, a.reps, &methods, seed)?;

    let mut csv = String::from("method,RB,MSE,NCR\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{},{}\n", r.method, fmt_num(r.rb_percent), fmt_num(r.mse_x100), r.ncr));
    }
    write_out(a.output.as_deref(), &csv)?;

    let mut coverage = Value::Null;
    if let Some(kind) = a.coverage {
        let method = match kind {
            CoverageKind::Wald => CoverageMethod::Wald,
            CoverageKind::BootstrapT => CoverageMethod::BootstrapT { resamples: a.bootstrap },
        };
        let (_, cov) = run_coverage_study(&sc, a.n, a.reps, method, a.level, seed)?;
        let tag = match kind {
            CoverageKind::Wald => "wald",
            CoverageKind::BootstrapT => "bootstrap-t",
        };
        let text = format!(
            "ci_method,level,coverage,mean_width,n_used,n_failed\n{tag},{},{},{},{},{}\n",
            a.level,
            fmt_num(cov.coverage_percent),
            fmt_num(cov.mean_width),
            cov.n_used,
            cov.n_failed
        );
        match &a.coverage_output {
            Some(p) => write_out(Some(p), &text)?,
            None => eprint!("{text}"),
        }
        coverage = json!({ "ci_method": tag, "result": cov });
    }

    if let Some(p) = &a.sidecar {
        let side = json!({
            "schema_version": SCHEMA_VERSION,
            "command": "simulate",
            "scenario": sc,
            "n": a.n,
            "reps": a.reps,
            "seed": seed,
            "truth_draws": a.truth_draws,
            "truth": truth,
            "rows": rows,
            "coverage": coverage,
        });
        write_out(Some(p), &pretty(&side))?;
    }
    Ok(())
}

fn cmd_profile(a: &ProfileArgs) -> CliResult<()> {
    let valid = a.lo.is_finite() && a.hi.is_finite() && a.lo < a.hi && a.step.is_finite() && a.step > 0.0;
    if !valid {
        return Err(Failure::Usage(format!(
            "grid needs lo < hi and step > 0 (got lo={}, hi={}, step={})",
            a.lo, a.hi, a.step
        )));
    }
    if a.x1_columns.contains(&0) {
        return Err(Failure::Usage("--x1-columns are 1-based".into()));
    }
    let ds = a.data.load()?;
    let cols: Vec<usize> = a.x1_columns.iter().map(|c| c - 1).collect();
    let prof = profile_gamma(&ds, &cols, a.alpha0, &a.beta, GridSpec { lo: a.lo, hi: a.hi, step: a.step })?;
    let mut csv = String::from("gamma,M_gamma,is_root_bracket\n");
    for ((g, m), b) in prof.grid.iter().zip(&prof.values).zip(&prof.is_root_bracket) {
        csv.push_str(&format!("{g:?},{m:?},{}\n", u8::from(*b)));
    }
    let roots = pretty(&json!({
        "schema_version": SCHEMA_VERSION,
        "command": "profile-gamma",
        "alpha_beta_fixed": prof.alpha_beta_fixed,
        "roots": prof.roots,
    }));
    match &a.output {
        Some(p) => {
            write_out(Some(p), &csv)?;
            write_out(None, &roots)
        }
        None => {
            write_out(None, &csv)?;
            eprint!("{roots}");
            Ok(())
        }
    }
}

fn cmd_diagnose(a: &DiagnoseArgs) -> CliResult<()> {
    let ds = a.data.load()?;
    let cfg = ModelConfig::from_json_file(&a.model)?;
    let mut v = diagnostics_value(&ds, &cfg)?;
    v["schema_version"] = json!(SCHEMA_VERSION);
    v["command"] = json!("diagnose");
    write_out(a.output.as_deref(), &pretty(&v))
}

fn cmd_generate(a: &GenerateArgs) -> CliResult<()> {
    if a.n == 0 {
        return Err(Failure::Usage("--n must be at least 1".into()));
    }
    let seed = parse_seed(&a.seed)?;
    let ds = match a.scenario {
        GenerateDesign::Example1 => generate_dataset(&Scenario::example1(a.alpha0, a.delta)?, a.n, seed)?,
        GenerateDesign::Example2 => generate_dataset(&Scenario::example2(a.alpha0, a.delta)?, a.n, seed)?,
        GenerateDesign::Selection => SelectionDesign::default().generate(a.n, seed)?.dataset,
    };
    write_dataset(&ds, &a.output)?;
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::Usage(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::ProfileGamma(a) => cmd_profile(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Generate(a) => cmd_generate(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = std::panic::catch_unwind(|| run(&cli));
    let err = match outcome {
        Ok(Ok(())) => return ExitCode::SUCCESS,
        Ok(Err(Failure::Estimation(e))) => error_value(&e),
        Ok(Err(Failure::Usage(msg))) => json!({ "code": "USAGE", "message": msg }),
        Err(_) => {
            eprintln!("{}", json!({ "schema_version": SCHEMA_VERSION, "error": { "code": "INTERNAL", "message": "internal error" } }));
            return ExitCode::from(1);
        }
    };
    eprintln!("{}", json!({ "schema_version": SCHEMA_VERSION, "error": err }));
    ExitCode::from(2)
}
