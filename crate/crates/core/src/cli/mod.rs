//! Command-line front end.
//!
//! Exit codes: 0 success, 1 self-test failure, 2 unsolvable Jacobian
//! algebra, 3 scheme condition (or Hurwitz) failure, 4 divergent Lyapunov
//! series, 5 audit failure, 64 usage error, 65 invalid config or report,
//! 70 internal error.

pub mod config;
pub mod selftest;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::certificate::{self, certify, CertificateReport, CertifyOptions, SchemeChoice};
use crate::multiindex::MultiIndex;
use crate::koopman::EntryFault;
use crate::switchsim::{self, AuditSummary};
use crate::systems;
pub use config::{ConfigError, SystemConfig};

pub const EXIT_SELFTEST: i32 = 1;
pub const EXIT_AUDIT: i32 = 5;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;
pub const EXIT_INTERNAL: i32 = 70;

#[derive(Debug, Parser)]
#[command(name = "koopman-clf", version, about = "Common Lyapunov functions for switched holomorphic systems on the polydisk")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Poly,
    Dd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fault {
    SignFlip,
}

/// Flags shared by every subcommand.
#[derive(Debug, Args, Default)]
pub struct Common {
    /// System configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Truncation degree N of the monomial basis.
    #[arg(long, global = true, value_name = "N")]
    pub degree: Option<u32>,
    #[arg(long, global = true, value_enum)]
    pub scheme: Option<SchemeArg>,
    #[arg(long, global = true)]
    pub xi: Option<f64>,
    #[arg(long, global = true)]
    pub kappa: Option<f64>,
    /// Radius to certify instead of searching for the largest one.
    #[arg(long, global = true)]
    pub rho: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Certify a switched family: solvability, triangularization, scheme condition, ε, radius.
    Analyze,
    /// Audit a certificate with randomly switched trajectories.
    Simulate {
        /// Previously written report; the pipeline is rerun when absent.
        #[arg(long, value_name = "PATH")]
        report: Option<PathBuf>,
        /// Negative control: set ε of the first coupled monomial to FACTOR times its recursion bound.
        #[arg(long, value_name = "FACTOR")]
        perturb_epsilon: Option<f64>,
        /// Initial points per signal.
        #[arg(long)]
        points: Option<usize>,
        /// Write CSV traces of the first signals (initial point 1) here.
        #[arg(long, value_name = "DIR")]
        trace_dir: Option<PathBuf>,
    },
    /// Radius curve ρ(μ) of the analytic two-mode example.
    FigureRho {
        #[arg(long, default_value_t = systems::EXAMPLE2_MU_MIN)]
        mu_min: f64,
        #[arg(long, default_value_t = 12.0)]
        mu_max: f64,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// Also run the certification pipeline for every μ.
        #[arg(long)]
        pipeline: bool,
    },
    /// Seeded property checks of the Koopman matrix construction.
    Selftest {
        #[arg(long, value_enum)]
        inject_fault: Option<Fault>,
    },
    /// Config of the polynomial pair (−a z, −a z + b(z₁² − z₁z₂², z₁z₂/2)).
    Example1 {
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        #[arg(long, default_value_t = 0.3)]
        b: f64,
    },
    /// Config of the analytic sin²/cos² pair with exact tail norms.
    Example2 {
        #[arg(long, default_value_t = 3.0)]
        mu: f64,
    },
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

fn fail(code: i32, message: impl Into<String>) -> Failure {
    Failure { code, message: message.into() }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        fail(EXIT_DATA, e.to_string())
    }
}

fn init_threads() {
    if let Some(n) = std::env::var("KOOPMAN_CLF_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        if n > 0 {
            // a second call in the same process keeps the first pool
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    init_threads();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32, Failure> {
    let c = &cli.common;
    match &cli.command {
        Command::Analyze => analyze(c),
        Command::Simulate { report, perturb_epsilon, points, trace_dir } => {
            simulate(c, report.as_deref(), *perturb_epsilon, *points, trace_dir.as_deref())
        }
        Command::FigureRho { mu_min, mu_max, steps, pipeline } => figure_rho(c, *mu_min, *mu_max, *steps, *pipeline),
        Command::Selftest { inject_fault } => selftest(c, *inject_fault),
        Command::Example1 { a, b } => example1(c, *a, *b),
        Command::Example2 { mu } => example2(c, *mu),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| fail(EXIT_INTERNAL, format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable output") + "\n"
}

fn load_config(c: &Common) -> Result<SystemConfig, Failure> {
    let path = c.config.as_deref().ok_or_else(|| fail(EXIT_USAGE, "--config PATH is required"))?;
    Ok(SystemConfig::load(path)?)
}

/// Certification options from the config, overridden by command-line flags.
fn certify_options(c: &Common, cfg: &SystemConfig) -> Result<CertifyOptions, Failure> {
    let degree = c.degree.unwrap_or(cfg.truncation_degree);
    if degree == 0 {
        return Err(fail(EXIT_USAGE, "--degree must be at least 1"));
    }
    let (cfg_xi, cfg_kappa) = match cfg.scheme {
        SchemeChoice::Poly { xi } => (xi, None),
        SchemeChoice::Dd { xi, kappa } => (xi, kappa),
    };
    let kind = c.scheme.unwrap_or(match cfg.scheme {
        SchemeChoice::Poly { .. } => SchemeArg::Poly,
        SchemeChoice::Dd { .. } => SchemeArg::Dd,
    });
    let xi = c.xi.or(cfg_xi);
    let kappa = c.kappa.or(cfg_kappa);
    for (name, v) in [("--xi", xi), ("--kappa", kappa)] {
        if let Some(v) = v {
            if !(v > 0.0 && v < 1.0) {
                return Err(fail(EXIT_USAGE, format!("{name} must lie in (0, 1), got {v}")));
            }
        }
    }
    let scheme = match kind {
        SchemeArg::Poly => SchemeChoice::Poly { xi },
        SchemeArg::Dd => SchemeChoice::Dd { xi, kappa },
    };
    let mut o = CertifyOptions::new(degree, scheme);
    o.rho_request = c.rho.or(cfg.rho_request);
    if let Some(r) = o.rho_request {
        if !(r > 0.0 && r <= 1.0) {
            return Err(fail(EXIT_USAGE, format!("--rho must lie in (0, 1], got {r}")));
        }
    }
    Ok(o)
}

fn run_certify(c: &Common, cfg: &SystemConfig) -> Result<CertificateReport, Failure> {
    let fam = cfg.family()?;
    let opts = certify_options(c, cfg)?;
    certify(&fam, &opts).map_err(|e| fail(EXIT_INTERNAL, e.to_string()))
}

fn analyze(c: &Common) -> Result<i32, Failure> {
    let cfg = load_config(c)?;
    let report = run_certify(c, &cfg)?;
    let text = match c.format.unwrap_or_default() {
        Format::Json => to_json(&report),
        Format::Csv => report.epsilon_csv(),
    };
    emit(c.out.as_deref(), &text)?;
    if !report.is_certified() {
        eprintln!("{}", report.message);
    }
    Ok(report.outcome.exit_code())
}

#[derive(Serialize)]
struct SimulateOutput {
    outcome: certificate::Outcome,
    rho_certified: Option<f64>,
    perturbed: Option<Perturbation>,
    audit: AuditSummary,
}

#[derive(Serialize)]
struct Perturbation {
    alpha: MultiIndex,
    factor: f64,
}

fn simulate(c: &Common, report_path: Option<&Path>, perturb: Option<f64>, points: Option<usize>, trace_dir: Option<&Path>) -> Result<i32, Failure> {
    let cfg = load_config(c)?;
    let fam = cfg.family()?;
    let mut opts = cfg.simulation.audit_options();
    if let Some(t) = c.trials {
        opts.trials = t;
    }
    if let Some(p) = points {
        opts.points = p;
    }
    if let Some(s) = c.seed {
        opts.seed = s;
    }
    if let Some(dt) = c.dt {
        opts.dt = dt;
    }
    if opts.trials == 0 || opts.points == 0 {
        return Err(fail(EXIT_USAGE, "trials and points must be at least 1"));
    }
    if !(opts.dt > 0.0 && opts.dt.is_finite()) {
        return Err(fail(EXIT_USAGE, format!("--dt must be positive, got {}", opts.dt)));
    }
    let mut report = match report_path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| fail(EXIT_DATA, format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str::<CertificateReport>(&text).map_err(|e| fail(EXIT_DATA, format!("malformed report {}: {e}", p.display())))?
        }
        None => run_certify(c, &cfg)?,
    };
    if !report.is_certified() {
        eprintln!("no certificate to audit: {}", report.message);
        return Ok(report.outcome.exit_code());
    }
    let perturbed = match perturb {
        Some(f) => {
            let alpha = certificate::perturb_epsilon(&mut report, &fam, f).map_err(|e| fail(EXIT_USAGE, e.to_string()))?;
            Some(Perturbation { alpha, factor: f })
        }
        None => None,
    };
    let clf = report.clf().map_err(|e| fail(EXIT_DATA, e.to_string()))?;
    let audit = switchsim::audit_clf(&fam, &clf, &opts).map_err(|e| fail(EXIT_USAGE, e.to_string()))?;

    if let Some(dir) = trace_dir {
        std::fs::create_dir_all(dir).map_err(|e| fail(EXIT_INTERNAL, format!("cannot create {}: {e}", dir.display())))?;
        let z0 = clf.from_hat(&switchsim::initial_points(fam.dim(), opts.points, opts.radius_fraction * clf.rho(), opts.seed)[0]);
        for s in 0..opts.trials.min(5) {
            let sig = switchsim::random_signal(fam.len(), opts.horizon, opts.min_dwell, opts.max_dwell, opts.seed.wrapping_add(s as u64))
                .map_err(|e| fail(EXIT_USAGE, e.to_string()))?;
            let run = switchsim::integrate_switched(&fam, &sig, &z0, opts.dt, Some(&clf)).map_err(|e| fail(EXIT_INTERNAL, e.to_string()))?;
            let path = dir.join(format!("trace_signal{:03}.csv", s + 1));
            std::fs::write(&path, run.to_csv()).map_err(|e| fail(EXIT_INTERNAL, format!("cannot write {}: {e}", path.display())))?;
        }
    }

    let pass = audit.pass;
    let out = SimulateOutput { outcome: report.outcome, rho_certified: report.rho_certified, perturbed, audit };
    let text = match c.format.unwrap_or_default() {
        Format::Json => to_json(&out),
        Format::Csv => audit_csv(&out.audit),
    };
    emit(c.out.as_deref(), &text)?;
    if !pass {
        eprintln!(
            "audit failed: max relative V increase {:e} in {} runs, {} escapes",
            out.audit.max_v_increase, out.audit.runs_with_increase, out.audit.escapes
        );
        return Ok(EXIT_AUDIT);
    }
    Ok(0)
}

fn audit_csv(a: &AuditSummary) -> String {
    let rows: [(&str, String); 11] = [
        ("runs", a.runs.to_string()),
        ("trials", a.trials.to_string()),
        ("points", a.points.to_string()),
        ("rho", a.rho.to_string()),
        ("sample_radius", a.sample_radius.to_string()),
        ("max_V_increase", a.max_v_increase.to_string()),
        ("runs_with_increase", a.runs_with_increase.to_string()),
        ("converged_fraction", a.converged_fraction.to_string()),
        ("max_final_norm", a.max_final_norm.to_string()),
        ("escapes", a.escapes.to_string()),
        ("pass", a.pass.to_string()),
    ];
    let mut s = String::from("key,value\n");
    for (k, v) in rows {
        s.push_str(&format!("{k},{v}\n"));
    }
    s
}

#[derive(Serialize)]
struct RhoRow {
    mu: f64,
    rho_closed_form: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    rho_pipeline: Option<f64>,
}

fn figure_rho(c: &Common, mu_min: f64, mu_max: f64, steps: usize, pipeline: bool) -> Result<i32, Failure> {
    if !(mu_min >= systems::EXAMPLE2_MU_MIN) {
        return Err(fail(
            EXIT_USAGE,
            format!("--mu-min {mu_min} is below 12/5, the smallest μ for which the example is certified"),
        ));
    }
    if !(mu_max >= mu_min && mu_max.is_finite()) {
        return Err(fail(EXIT_USAGE, "--mu-max must be finite and at least --mu-min"));
    }
    if steps == 0 {
        return Err(fail(EXIT_USAGE, "--steps must be at least 1"));
    }
    let degree = c.degree.unwrap_or(20);
    let mus: Vec<f64> = (0..steps)
        .map(|i| if steps == 1 { mu_min } else { mu_min + (mu_max - mu_min) * i as f64 / (steps - 1) as f64 })
        .collect();
    let rows = mus
        .par_iter()
        .map(|&mu| {
            let rho_pipeline = if pipeline {
                let fam = systems::example2(mu, degree).map_err(|e| fail(EXIT_INTERNAL, e.to_string()))?;
                let scheme = SchemeChoice::Dd { xi: c.xi, kappa: c.kappa };
                let r = certify(&fam, &CertifyOptions::new(degree, scheme)).map_err(|e| fail(EXIT_INTERNAL, e.to_string()))?;
                r.rho_certified
            } else {
                None
            };
            Ok(RhoRow { mu, rho_closed_form: systems::example2_radius(mu), rho_pipeline })
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let text = match c.format.unwrap_or(Format::Csv) {
        Format::Json => to_json(&rows),
        Format::Csv => {
            let mut s = String::from(if pipeline { "mu,rho_closed_form,rho_pipeline\n" } else { "mu,rho_closed_form\n" });
            for r in &rows {
                match (pipeline, r.rho_pipeline) {
                    (false, _) => s.push_str(&format!("{},{}\n", r.mu, r.rho_closed_form)),
                    (true, p) => s.push_str(&format!("{},{},{}\n", r.mu, r.rho_closed_form, p.map_or(String::new(), |v| v.to_string()))),
                }
            }
            s
        }
    };
    emit(c.out.as_deref(), &text)?;
    Ok(0)
}

fn selftest(c: &Common, fault: Option<Fault>) -> Result<i32, Failure> {
    let fault = match fault {
        Some(Fault::SignFlip) => EntryFault::SignFlip,
        None => EntryFault::None,
    };
    let results = selftest::run_all(c.seed.unwrap_or(0), fault);
    let ok = results.iter().all(selftest::SuiteResult::passed);
    let text = match c.format.unwrap_or_default() {
        Format::Json => to_json(&results),
        Format::Csv => {
            let mut s = String::from("suite,cases,failures,first_failure\n");
            for r in &results {
                s.push_str(&format!("{},{},{},{}\n", r.name, r.cases, r.failures, r.first_failure.clone().unwrap_or_default()));
            }
            s
        }
    };
    emit(c.out.as_deref(), &text)?;
    Ok(if ok { 0 } else { EXIT_SELFTEST })
}

fn example1(c: &Common, a: f64, b: f64) -> Result<i32, Failure> {
    if !(a > 0.0 && b > 0.0) {
        return Err(fail(EXIT_USAGE, "--a and --b must be positive"));
    }
    let fam = systems::example1(a, b).map_err(|e| fail(EXIT_USAGE, e.to_string()))?;
    let scheme = SchemeChoice::Poly { xi: c.xi };
    let cfg = SystemConfig::from_family(&fam, c.degree.unwrap_or(12), scheme);
    emit(c.out.as_deref(), &cfg.to_json())?;
    Ok(0)
}

fn example2(c: &Common, mu: f64) -> Result<i32, Failure> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(fail(EXIT_USAGE, "--mu must be positive"));
    }
    let degree = c.degree.unwrap_or(20);
    let fam = systems::example2(mu, degree).map_err(|e| fail(EXIT_USAGE, e.to_string()))?;
    let cfg = SystemConfig::from_family(&fam, degree, SchemeChoice::Dd { xi: c.xi, kappa: c.kappa });
    emit(c.out.as_deref(), &cfg.to_json())?;
    Ok(0)
}
