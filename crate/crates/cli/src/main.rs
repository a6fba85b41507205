use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use tnl_core::ideal::{self, LinearizationConfig, MultilinearMap, SummingConfig};
use tnl_core::injective::{self, BruteForceMode, EpsilonConfig, EpsilonNorm};
use tnl_core::io::{self, Input};
use tnl_core::projective::{ProjectiveConfig, ProjectiveNorm};
use tnl_core::sigma::{self, BetaNorm, SigmaNorm};
use tnl_core::verify::{self, RepresentationPair, SuiteConfig};
use tnl_core::{Error, Exponent, NormEstimate, TensorNormEvaluator, TensorSpace};

mod config;

use config::{Format, RunConfig};

#[derive(Parser)]
#[command(name = "tnl", version, about = "Tensor norm estimates, verification suites and witness search")]
struct Cli {
    /// `key = value` config file; defaults to $TNL_CONFIG.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate one norm of a tensor or multilinear map read from a JSON file.
    Norm {
        /// eps, pi, sigma_p, beta_p, sup, lin, sm_pq or si_p.
        #[arg(long)]
        kind: String,
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
    /// Run a verification suite and write its report.
    Verify {
        /// crossnorm, metric, smoothness, property_b, representation or bidual.
        suite_arg: Option<String>,
        #[arg(long)]
        suite: Option<String>,
        #[command(flatten)]
        opts: Opts,
    },
    /// Search for a smoothness violation of a tensor norm.
    Witness {
        #[command(flatten)]
        opts: Opts,
    },
}

/// Flags shared by every command; each overrides the config key of the same name.
#[derive(Args, Default)]
struct Opts {
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    restarts: Option<String>,
    #[arg(long = "max-rank")]
    max_rank: Option<String>,
    #[arg(long)]
    grid: Option<String>,
    /// Factor dimensions such as 2x3x2.
    #[arg(long)]
    dims: Option<String>,
    /// Evaluator for suites, witness search and `lin`; representation pair for that suite.
    #[arg(long)]
    norm: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    budget: Option<String>,
    #[arg(long)]
    tolerance: Option<String>,
}

impl Opts {
    fn pairs(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("p", &self.p),
            ("q", &self.q),
            ("out", &self.out),
            ("format", &self.format),
            ("seed", &self.seed),
            ("restarts", &self.restarts),
            ("max_rank", &self.max_rank),
            ("grid", &self.grid),
            ("dims", &self.dims),
            ("norm", &self.norm),
            ("samples", &self.samples),
            ("budget", &self.budget),
            ("tolerance", &self.tolerance),
        ]
    }
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn parse(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }

    fn unsupported(message: impl Into<String>) -> Self {
        Failure { code: 3, message: message.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Json(_) | Error::InvalidArgument(_) | Error::InvalidSpace(_) | Error::DimensionMismatch { .. } => 2,
            Error::Unsupported(_) | Error::NotScalarFactor(_) | Error::TooLarge { .. } | Error::BudgetExceeded { .. } => 3,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

type Outcome<T> = Result<T, Failure>;

fn load_config(cli_path: Option<&PathBuf>, opts: &Opts) -> Outcome<RunConfig> {
    let mut cfg = RunConfig::default();
    let path = cli_path.cloned().or_else(|| std::env::var_os("TNL_CONFIG").map(PathBuf::from));
    if let Some(path) = path {
        cfg.apply_file(&path).map_err(|e| Failure::parse(e.0))?;
    }
    for (key, value) in opts.pairs() {
        if let Some(v) = value {
            cfg.set(key, v).map_err(|e| Failure::parse(format!("--{}: {e}", key.replace('_', "-"))))?;
        }
    }
    Ok(cfg)
}

fn exponent(s: &str) -> Outcome<Exponent> {
    io::parse_exponent(&Value::from(s)).map_err(|e| Failure::parse(e.to_string()))
}

fn eps_config(cfg: &RunConfig) -> EpsilonConfig {
    let mut e = EpsilonConfig { seed: cfg.seed, ..EpsilonConfig::default() };
    if let Some(r) = cfg.restarts {
        e.restarts = r;
    }
    if let Some(g) = cfg.grid {
        e.grid_resolution = g;
    }
    e
}

fn pi_config(cfg: &RunConfig) -> ProjectiveConfig {
    let mut c = ProjectiveConfig { seed: cfg.seed, eps: eps_config(cfg), max_rank: cfg.max_rank, ..ProjectiveConfig::default() };
    if let Some(r) = cfg.restarts {
        c.restarts = r;
    }
    c
}

fn sigma_norm(cfg: &RunConfig) -> Outcome<SigmaNorm> {
    let mut s = SigmaNorm::new(exponent(&cfg.p)?.value())?;
    s.cfg.seed = cfg.seed;
    s.cfg.max_rank = cfg.max_rank;
    s.cfg.eps = eps_config(cfg);
    if let Some(r) = cfg.restarts {
        s.cfg.restarts = r;
    }
    Ok(s)
}

fn beta_norm(cfg: &RunConfig) -> Outcome<BetaNorm> {
    let mut b = BetaNorm::new(exponent(&cfg.p)?.value())?;
    b.cfg.seed = cfg.seed;
    b.eps = eps_config(cfg);
    if let Some(r) = cfg.restarts {
        b.cfg.restarts = r;
    }
    if let Some(f) = cfg.family_budget {
        b.cfg.family_size = Some(f);
    }
    Ok(b)
}

fn evaluator(name: &str, cfg: &RunConfig) -> Outcome<Box<dyn TensorNormEvaluator>> {
    Ok(match name {
        "eps" => Box::new(EpsilonNorm { cfg: eps_config(cfg), pi: pi_config(cfg) }),
        "pi" => Box::new(ProjectiveNorm { cfg: pi_config(cfg) }),
        "sigma_p" => Box::new(sigma_norm(cfg)?),
        "beta_p" => Box::new(beta_norm(cfg)?),
        other => return Err(Failure::parse(format!("unknown norm {other:?} (expected eps, pi, sigma_p or beta_p)"))),
    })
}

fn as_map(input: Input) -> MultilinearMap {
    match input {
        Input::Map(a) => a,
        Input::Tensor(t) => MultilinearMap::from_form(&t),
    }
}

fn norm_estimate(kind: &str, input: Input, cfg: &RunConfig) -> Outcome<NormEstimate> {
    match kind {
        "eps" | "pi" | "sigma_p" | "beta_p" => {
            let Input::Tensor(z) = input else {
                return Err(Failure::unsupported(format!("{kind} needs a tensor, not a map")));
            };
            let mut est = evaluator(kind, cfg)?.estimate(&z)?;
            if kind == "eps" && cfg.grid.is_some() {
                let g = injective::epsilon_bruteforce(&z, &eps_config(cfg), BruteForceMode::Auto)?;
                est.lower = est.lower.max(g.lower);
                est.upper = est.upper.min(g.upper);
            }
            Ok(est)
        }
        "sup" => Ok(ideal::sup_norm(&as_map(input), &eps_config(cfg))?),
        "lin" => {
            let beta = evaluator(cfg.norm.as_deref().unwrap_or("eps"), cfg)?;
            let mut lin = LinearizationConfig { seed: cfg.seed, eps: eps_config(cfg), ..LinearizationConfig::default() };
            if cfg.lin_steps > 0 {
                lin.steps = cfg.lin_steps;
            }
            Ok(ideal::linearization_norm(&as_map(input), beta.as_ref(), &lin)?)
        }
        "sm_pq" => {
            let p = exponent(&cfg.p)?;
            let q = match &cfg.q {
                Some(q) => exponent(q)?,
                None => p,
            };
            let mut s = SummingConfig { seed: cfg.seed, eps: eps_config(cfg), ..SummingConfig::default() };
            if let Some(f) = cfg.family_budget {
                s.family_budget = f;
            }
            if let Some(r) = cfg.restarts {
                s.restarts = r;
            }
            Ok(ideal::sm_pq_norm(&as_map(input), p, q, &s)?)
        }
        "si_p" => {
            let a = as_map(input);
            if !a.is_scalar() {
                return Err(Failure::unsupported("si_p is defined for scalar-valued maps only"));
            }
            let s = sigma_norm(cfg)?;
            let dual = sigma::sigma_p_dual(&a.form()?, s.p, &s.cfg)?;
            Ok(NormEstimate::lower_only(dual.value, true, 0, cfg.seed))
        }
        other => Err(Failure::parse(format!(
            "unknown kind {other:?} (expected eps, pi, sigma_p, beta_p, sup, lin, sm_pq or si_p)"
        ))),
    }
}

fn finite(v: f64) -> Value {
    if v.is_finite() {
        Value::from(v)
    } else {
        Value::Null
    }
}

fn render_norm(kind: &str, est: &NormEstimate, cfg: &RunConfig) -> Outcome<String> {
    match cfg.format {
        Format::Json => {
            let v = json!({
                "kind": kind,
                "p": cfg.p,
                "q": cfg.q,
                "lower": finite(est.lower),
                "upper": finite(est.upper),
                "converged": est.converged,
                "iterations": est.iterations,
                "seed": est.seed,
            });
            Ok(serde_json::to_string_pretty(&v).map_err(Error::from)? + "\n")
        }
        Format::Csv => Ok(format!(
            "kind,p,lower,upper,converged,iterations,seed\n{kind},{},{:e},{:e},{},{},{}\n",
            cfg.p, est.lower, est.upper, est.converged, est.iterations, est.seed
        )),
    }
}

fn emit(text: &str, cfg: &RunConfig) -> Outcome<()> {
    match &cfg.out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure { code: 1, message: format!("cannot write {path}: {e}") }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_norm(kind: &str, input: &PathBuf, cfg: &RunConfig) -> Outcome<()> {
    let text = std::fs::read_to_string(input).map_err(|e| Failure::parse(format!("cannot read {}: {e}", input.display())))?;
    let parsed = io::parse_input(&text).map_err(|e| Failure::parse(format!("{}: {e}", input.display())))?;
    let est = norm_estimate(kind, parsed, cfg)?;
    let out = render_norm(kind, &est, cfg)?;
    if cfg.out.is_some() {
        eprintln!("{kind}: [{}, {}] converged={} seed={}", est.lower, est.upper, est.converged, est.seed);
    }
    emit(&out, cfg)
}

const SUITES: [&str; 6] = ["crossnorm", "metric", "smoothness", "property_b", "representation", "bidual"];

/// The tolerance tier of a suite under a given evaluator.
fn tier(suite: &str, norm: &str) -> f64 {
    match (suite, norm) {
        ("smoothness" | "property_b", "pi") => 1e-9,
        ("smoothness" | "property_b", "sigma_p" | "beta_p") => 1e-5,
        ("representation", _) => 1e-4,
        ("bidual", _) => 1e-3,
        _ => 1e-6,
    }
}

fn cmd_verify(suite: &str, cfg: &RunConfig) -> Outcome<bool> {
    if !SUITES.contains(&suite) {
        return Err(Failure::parse(format!("unknown suite {suite:?} (expected one of {})", SUITES.join(", "))));
    }
    let default_norm = if suite == "representation" { "sup_pi" } else { "pi" };
    let norm = cfg.norm.clone().unwrap_or_else(|| default_norm.into());
    let mut suite_cfg = SuiteConfig {
        samples: cfg.samples,
        seed: cfg.seed,
        tolerance: cfg.tolerance.unwrap_or_else(|| tier(suite, &norm)),
        lin_steps: cfg.lin_steps,
        budgets: json!({
            "restarts": cfg.restarts,
            "max_rank": cfg.max_rank,
            "family_budget": cfg.family_budget,
            "grid": cfg.grid,
            "p": cfg.p,
        }),
        ..SuiteConfig::default()
    };
    if let Some(d) = &cfg.dims {
        suite_cfg.shapes = vec![d.clone()];
    }
    let report = if suite == "representation" {
        let pair = RepresentationPair::parse(&norm).map_err(|e| Failure::parse(e.to_string()))?;
        verify::check_representation(pair, &suite_cfg)?
    } else {
        let beta = evaluator(&norm, cfg)?;
        let b = beta.as_ref();
        match suite {
            "crossnorm" => verify::check_crossnorm(b, &suite_cfg)?,
            "metric" => verify::check_metric_mapping(b, &suite_cfg)?,
            "smoothness" => verify::check_smoothness(b, &suite_cfg)?,
            "property_b" => verify::check_property_b(b, &suite_cfg)?,
            _ => verify::check_bidual(b, &suite_cfg)?,
        }
    };
    let text = match cfg.format {
        Format::Json => report.to_json()? + "\n",
        Format::Csv => verify::reports_to_csv(std::slice::from_ref(&report))?,
    };
    emit(&text, cfg)?;
    eprintln!(
        "{} {}: max deviation {:e}, tolerance {:e}, {:?}",
        report.suite, report.norm, report.max_deviation, report.tolerance, report.verdict
    );
    Ok(report.passed())
}

fn cmd_witness(cfg: &RunConfig) -> Outcome<()> {
    let norm = cfg.norm.clone().unwrap_or_else(|| "beta_p".into());
    let beta = evaluator(&norm, cfg)?;
    let dims = cfg.dims.clone().unwrap_or_else(|| vec![2, 2]);
    let p = exponent(&cfg.p)?;
    let factors = dims
        .iter()
        .map(|&d| tnl_core::NormedSpace::with_exponent(d, p))
        .collect::<tnl_core::Result<Vec<_>>>()?;
    let space = TensorSpace::new(factors)?;
    let record = verify::witness_search_nonsmooth(beta.as_ref(), &space, cfg.budget, cfg.seed)?;
    let text = match cfg.format {
        Format::Json => record.to_json()? + "\n",
        Format::Csv => format!(
            "norm,space,seed,budget,max_violation\n{},{},{},{},{:e}\n",
            record.norm, record.space, record.seed, record.budget, record.max_violation
        ),
    };
    emit(&text, cfg)?;
    eprintln!("{} on {}: best violation {:e}", record.norm, record.space, record.max_violation);
    Ok(())
}

fn run(cli: Cli) -> Outcome<bool> {
    match cli.command {
        Command::Norm { kind, input, opts } => {
            let cfg = load_config(cli.config.as_ref(), &opts)?;
            cmd_norm(&kind, &input, &cfg).map(|_| true)
        }
        Command::Verify { suite_arg, suite, opts } => {
            let cfg = load_config(cli.config.as_ref(), &opts)?;
            let name = suite.or(suite_arg).ok_or_else(|| Failure::parse("no suite given"))?;
            cmd_verify(&name, &cfg)
        }
        Command::Witness { opts } => {
            let cfg = load_config(cli.config.as_ref(), &opts)?;
            cmd_witness(&cfg).map(|_| true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(4),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
