//! Property suites run against any [`TensorNormEvaluator`], the smoothness
//! witness search, and their reports.
//!
//! Every suite draws its samples from seeds derived from one base seed, runs
//! them in parallel, and merges by sample index, so a report depends only on
//! its configuration.

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ideal::{self, LinearizationConfig, MultilinearMap};
use crate::injective::{self, EpsilonConfig};
use crate::projective::{self, ProjectiveConfig};
use crate::rng;
use crate::spaces::{Exponent, NormedSpace};
use crate::tensors::{random_tensor, LinearOperator, RandomStyle, Tensor, TensorNormEvaluator, TensorSpace};

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteConfig {
    pub samples: usize,
    pub seed: u64,
    /// Factor dimension tuples, cycled through by sample index.
    pub shapes: Vec<Vec<usize>>,
    /// Exponents the factor spaces are drawn from.
    pub exponents: Vec<Exponent>,
    pub tolerance: f64,
    /// Ascent moves in linearization norms.
    pub lin_steps: usize,
    /// Free-form description of the evaluator budgets, copied into reports.
    pub budgets: Value,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            samples: 20,
            seed: 0,
            shapes: vec![vec![2, 2], vec![2, 3], vec![3, 3], vec![2, 2, 2]],
            exponents: [1.0, 1.5, 2.0, 3.0, f64::INFINITY].iter().map(|&p| Exponent::new(p).unwrap()).collect(),
            tolerance: 1e-6,
            lin_steps: 0,
            budgets: Value::Null,
        }
    }
}

impl SuiteConfig {
    pub fn to_value(&self) -> Value {
        json!({
            "samples": self.samples,
            "seed": self.seed,
            "shapes": self.shapes,
            "exponents": self.exponents.iter().map(|e| e.to_string()).collect::<Vec<_>>(),
            "tolerance": self.tolerance,
            "lin_steps": self.lin_steps,
            "budgets": self.budgets,
        })
    }

    fn sample_seed(&self, tag: u64, i: usize) -> u64 {
        rng::derive_seed(self.seed, &[tag, i as u64])
    }

    /// Factor spaces of sample `i`.
    fn space(&self, i: usize, seed: u64) -> Result<TensorSpace> {
        if self.shapes.is_empty() || self.exponents.is_empty() {
            return Err(Error::InvalidArgument("suite needs at least one shape and one exponent".into()));
        }
        let shape = &self.shapes[i % self.shapes.len()];
        let mut r = rng::stream(seed, &[0]);
        let factors = shape
            .iter()
            .map(|&d| NormedSpace::with_exponent(d, self.exponents[rng::index(&mut r, self.exponents.len())]))
            .collect::<Result<Vec<_>>>()?;
        TensorSpace::new(factors)
    }
}

/// SHA-256 of the compact JSON of a configuration, hex encoded.
pub fn config_hash(config: &Value) -> String {
    let digest = Sha256::digest(config.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleRecord {
    pub index: usize,
    pub kind: String,
    pub seed: u64,
    pub space: String,
    pub left: f64,
    pub right: f64,
    pub deviation: f64,
    pub passed: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// The identity under test cannot fail at finite dimensions.
    NotFalsifiable,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub suite: String,
    pub norm: String,
    pub tolerance: f64,
    pub config: Value,
    pub config_hash: String,
    pub max_deviation: f64,
    pub verdict: Verdict,
    pub note: Option<String>,
    pub samples: Vec<SampleRecord>,
}

impl Report {
    fn new(suite: &str, norm: String, cfg: &SuiteConfig, samples: Vec<SampleRecord>) -> Report {
        let config = cfg.to_value();
        let max_deviation = samples.iter().map(|s| s.deviation).fold(0.0, f64::max);
        let verdict = if samples.iter().all(|s| s.passed) { Verdict::Pass } else { Verdict::Fail };
        Report {
            suite: suite.into(),
            norm,
            tolerance: cfg.tolerance,
            config_hash: config_hash(&config),
            config,
            max_deviation,
            verdict,
            note: None,
            samples,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict != Verdict::Fail
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Summary rows: suite, norm, config hash, max deviation, tolerance, verdict.
pub fn reports_to_csv(reports: &[Report]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
    w.write_record(["suite", "norm", "config_hash", "max_deviation", "tolerance", "verdict"]).map_err(io)?;
    for r in reports {
        let verdict = serde_json::to_value(r.verdict)?.as_str().unwrap_or_default().to_string();
        w.write_record([
            r.suite.clone(),
            r.norm.clone(),
            r.config_hash.clone(),
            format!("{:e}", r.max_deviation),
            format!("{:e}", r.tolerance),
            verdict,
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn relative(left: f64, right: f64) -> f64 {
    let diff = (left - right).abs();
    if right.abs() > 0.0 {
        diff / right.abs()
    } else {
        diff
    }
}

fn record(index: usize, kind: &str, seed: u64, space: &TensorSpace, left: f64, right: f64, dev: f64, passed: bool) -> SampleRecord {
    SampleRecord { index, kind: kind.into(), seed, space: space.describe(), left, right, deviation: dev, passed }
}

fn run_samples<F>(cfg: &SuiteConfig, f: F) -> Result<Vec<SampleRecord>>
where
    F: Fn(usize) -> Result<Vec<SampleRecord>> + Sync,
{
    let per: Vec<Result<Vec<SampleRecord>>> = (0..cfg.samples).into_par_iter().map(|i| f(i)).collect();
    let mut out = Vec::new();
    for r in per {
        out.extend(r?);
    }
    Ok(out)
}

/// Crossnorm checks: `β(x₁⊗···⊗xₙ) = Π‖x_l‖`, and product functionals act
/// with norm at most the product of their norms.
pub fn check_crossnorm(beta: &dyn TensorNormEvaluator, cfg: &SuiteConfig) -> Result<Report> {
    let samples = run_samples(cfg, |i| {
        let seed = cfg.sample_seed(1, i);
        let space = cfg.space(i, seed)?;
        let mut r = rng::stream(seed, &[1]);
        let xs: Vec<Vec<f64>> = space.factors().iter().map(|f| rng::normal_vec(&mut r, f.dim())).collect();
        let want: f64 = xs.iter().zip(space.factors()).map(|(x, f)| f.norm_unchecked(x)).product();
        let got = beta.value(&Tensor::elementary(space.clone(), &xs)?)?;
        let dev = relative(got, want);
        let mut out = vec![record(i, "elementary", seed, &space, got, want, dev, dev <= cfg.tolerance)];

        let z = random_tensor(&space, seed, RandomStyle::Dense);
        let fs: Vec<Vec<f64>> = space.factors().iter().map(|f| rng::normal_vec(&mut r, f.dim())).collect();
        let lhs = z.eval_functionals(&fs)?.abs();
        let fnorm: f64 = fs.iter().zip(space.factors()).map(|(f, s)| s.dual().norm_unchecked(f)).product();
        let rhs = fnorm * beta.estimate(&z)?.best();
        let excess = ((lhs - rhs) / rhs).max(0.0);
        out.push(record(i, "duality", seed, &space, lhs, rhs, excess, lhs <= rhs + 1e-9));

        if i == 0 {
            let zero = beta.value(&Tensor::zeros(space.clone()))?;
            out.push(record(i, "zero", seed, &space, zero, 0.0, zero.abs(), zero == 0.0));
        }
        Ok(out)
    })?;
    Ok(Report::new("crossnorm", beta.name(), cfg, samples))
}

fn random_contraction(space: &NormedSpace, r: &mut rng::Rng, eps: &EpsilonConfig) -> Result<(LinearOperator, f64)> {
    let d = space.dim();
    let u = LinearOperator::new(space.clone(), space.clone(), rng::normal_vec(r, d * d))?;
    let n = injective::operator_norm(&u, eps)?.best();
    let scaled = LinearOperator::new(space.clone(), space.clone(), u.matrix.iter().map(|v| v / n).collect())?;
    let n = injective::operator_norm(&scaled, eps)?.best();
    Ok((scaled, n))
}

/// Metric mapping: `β((u₁⊗···⊗uₙ)z) ≤ Π‖u_l‖·β(z)`, lower bound against
/// the best available upper side.
pub fn check_metric_mapping(beta: &dyn TensorNormEvaluator, cfg: &SuiteConfig) -> Result<Report> {
    let eps = EpsilonConfig::default();
    let samples = run_samples(cfg, |i| {
        let seed = cfg.sample_seed(2, i);
        let space = cfg.space(i, seed)?;
        let z = random_tensor(&space, seed, RandomStyle::Dense);
        let mut r = rng::stream(seed, &[2]);
        let mut us = Vec::new();
        let mut bound = 1.0;
        for f in space.factors() {
            let (u, n) = random_contraction(f, &mut r, &eps)?;
            bound *= n;
            us.push(u);
        }
        let est = beta.estimate(&z)?;
        let lhs = beta.estimate(&z.apply_operators(&us)?)?.lower;
        let rhs = bound * est.best();
        let excess = ((lhs - rhs) / rhs).max(0.0);
        let mut out = vec![record(i, "contraction", seed, &space, lhs, rhs, excess, lhs <= rhs * (1.0 + 1e-6))];
        if i == 0 {
            let ids: Vec<LinearOperator> = space.factors().iter().map(LinearOperator::identity).collect();
            let same = beta.value(&z.apply_operators(&ids)?)?;
            let v = beta.value(&z)?;
            let dev = relative(same, v);
            out.push(record(i, "identity", seed, &space, same, v, dev, dev <= cfg.tolerance));
            let mut zeros = ids;
            zeros[0] = LinearOperator::new(space.factor(0).clone(), space.factor(0).clone(), vec![0.0; space.factor(0).dim().pow(2)])?;
            let zero = beta.value(&z.apply_operators(&zeros)?)?;
            out.push(record(i, "zero_operator", seed, &space, zero, 0.0, zero.abs(), zero == 0.0));
        }
        Ok(out)
    })?;
    Ok(Report::new("metric", beta.name(), cfg, samples))
}

/// Smoothness: `β_{n+1}(z)` on `E₁⊗···⊗Eₙ⊗K` against `β_n(ψ(z))`, alternating
/// dense and low-rank samples.
pub fn check_smoothness(beta: &dyn TensorNormEvaluator, cfg: &SuiteConfig) -> Result<Report> {
    let samples = run_samples(cfg, |i| {
        let seed = cfg.sample_seed(3, i);
        let space = cfg.space(i, seed)?;
        let style = if i % 2 == 0 { RandomStyle::Dense } else { RandomStyle::LowRank(2) };
        let z = random_tensor(&space.with_scalar(), seed, style);
        let left = beta.value(&z)?;
        let right = beta.value(&z.flatten_scalar()?)?;
        let dev = relative(left, right);
        Ok(vec![record(i, "psi", seed, &space, left, right, dev, dev <= cfg.tolerance)])
    })?;
    Ok(Report::new("smoothness", beta.name(), cfg, samples))
}

fn lin_cfg(cfg: &SuiteConfig, seed: u64) -> LinearizationConfig {
    LinearizationConfig { steps: cfg.lin_steps, seed, ..LinearizationConfig::default() }
}

/// Property [B]: `‖A‖_{L_β}` on `(E₁,…,Eₙ,K)` against `‖A1‖_{L_β}`.
pub fn check_property_b(beta: &dyn TensorNormEvaluator, cfg: &SuiteConfig) -> Result<Report> {
    let samples = run_samples(cfg, |i| {
        let seed = cfg.sample_seed(4, i);
        let space = cfg.space(i, seed)?;
        let a = MultilinearMap::from_form(&random_tensor(&space.with_scalar(), seed, RandomStyle::Dense));
        let (left, right) = ideal::property_b_pair(&a, beta, &lin_cfg(cfg, seed))?;
        let dev = relative(left, right);
        Ok(vec![record(i, "one_adjunction", seed, &space, left, right, dev, dev <= cfg.tolerance)])
    })?;
    Ok(Report::new("property_b", beta.name(), cfg, samples))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RepresentationPair {
    /// The sup norm against π, for scalar and dual-valued maps.
    SupPi,
    /// Scalar `L_ε` against ε.
    LinEpsScalar,
    /// Vector-valued `L_ε` against ε.
    LinEpsVector,
}

impl RepresentationPair {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sup_pi" | "pi" => Ok(Self::SupPi),
            "lin_eps" | "eps" => Ok(Self::LinEpsScalar),
            "lin_eps_vector" => Ok(Self::LinEpsVector),
            _ => Err(Error::Unsupported(format!("no representation pair {s}"))),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Self::SupPi => "sup_pi",
            Self::LinEpsScalar => "lin_eps",
            Self::LinEpsVector => "lin_eps_vector",
        }
    }
}

/// Representation: the ideal norm of `T` into `F'` against the dual-β norm
/// of its scalar form on `(E₁,…,Eₙ,F)`. Even samples are scalar-valued,
/// odd samples dual-valued.
pub fn check_representation(pair: RepresentationPair, cfg: &SuiteConfig) -> Result<Report> {
    let eps = EpsilonConfig::default();
    let pi = projective::ProjectiveNorm::default();
    let epsn = injective::EpsilonNorm::default();
    if pair == RepresentationPair::LinEpsVector {
        let mut rep = Report::new("representation", pair.name().into(), cfg, Vec::new());
        rep.verdict = Verdict::NotFalsifiable;
        rep.note = Some("not falsifiable at desk scale: in finite dimensions every form is integral".into());
        return Ok(rep);
    }
    let samples = run_samples(cfg, |i| {
        let seed = cfg.sample_seed(5, i);
        let space = cfg.space(i, seed)?;
        let mut r = rng::stream(seed, &[5]);
        let codomain = if pair == RepresentationPair::SupPi && i % 2 == 1 {
            let p = cfg.exponents[rng::index(&mut r, cfg.exponents.len())];
            NormedSpace::with_exponent(2, p)?.dual()
        } else {
            NormedSpace::scalar()
        };
        let total = space.total() * codomain.dim();
        let t = MultilinearMap::new(space.factors().to_vec(), codomain, rng::normal_vec(&mut r, total))?;
        let lin = lin_cfg(cfg, seed);
        let (left, right) = match pair {
            RepresentationPair::SupPi => {
                let left = ideal::sup_norm(&t, &eps)?.lower;
                let right = ideal::linearization_norm(&ideal::to_scalar_form(&t), &pi, &lin)?.lower;
                (left, right)
            }
            _ => {
                let left = ideal::linearization_norm(&t, &epsn, &lin)?.lower;
                let right = ideal::linearization_norm(&ideal::to_scalar_form(&t), &epsn, &lin)?.lower;
                (left, right)
            }
        };
        let dev = relative(left, right);
        let mut out = vec![record(i, "map", seed, &space, left, right, dev, dev <= cfg.tolerance)];
        if i == 0 {
            let zero = MultilinearMap::new(space.factors().to_vec(), t.codomain().clone(), vec![0.0; total])?;
            let l = ideal::sup_norm(&zero, &eps)?.lower;
            let rr = ideal::linearization_norm(&ideal::to_scalar_form(&zero), &pi, &lin)?.lower;
            out.push(record(i, "zero", seed, &space, l, rr, (l - rr).abs(), l == 0.0 && rr == 0.0));
        }
        Ok(out)
    })?;
    Ok(Report::new("representation", pair.name().into(), cfg, samples))
}

/// Bidual consistency: `β(z)` against `sup |⟨A,z⟩| / ‖A‖_{L_β}` over
/// candidate forms (the product form at the ε maximizer, the π lower-bound
/// certificate, and `z` itself read as a form).
pub fn check_bidual(beta: &dyn TensorNormEvaluator, cfg: &SuiteConfig) -> Result<Report> {
    let eps = EpsilonConfig::default();
    let pcfg = ProjectiveConfig::default();
    let samples = run_samples(cfg, |i| {
        let seed = cfg.sample_seed(6, i);
        let space = cfg.space(i, seed)?;
        let z = random_tensor(&space, seed, RandomStyle::Dense);
        let direct = beta.value(&z)?;
        let run = injective::epsilon_search(&z, &eps);
        let mut forms = vec![Tensor::elementary(space.clone(), &run.point)?, z.clone()];
        if let Some(c) = projective::pi_lower(&z, &pcfg)?.certificate {
            forms.push(c.reinterpret(space.clone())?);
        }
        let lin = lin_cfg(cfg, seed);
        let mut derived: f64 = 0.0;
        for a in &forms {
            let n = ideal::linearization_norm(&MultilinearMap::from_form(a), beta, &lin)?.lower;
            if n > 0.0 {
                derived = derived.max(z.pair(a)?.abs() / n);
            }
        }
        let dev = relative(derived, direct);
        let mut out = vec![record(i, "forms", seed, &space, derived, direct, dev, dev <= cfg.tolerance)];
        if i == 0 {
            let zero = beta.value(&Tensor::zeros(space.clone()))?;
            out.push(record(i, "zero", seed, &space, zero, 0.0, zero.abs(), zero == 0.0));
        }
        Ok(out)
    })?;
    Ok(Report::new("bidual", beta.name(), cfg, samples))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Candidate {
    /// Sample index; perturbation rounds continue the numbering.
    pub index: usize,
    pub seed: u64,
    pub coeffs: Vec<f64>,
    /// `β_{n+1}(z)`.
    pub left: f64,
    /// `β_n(ψ(z))`.
    pub right: f64,
    pub violation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WitnessRecord {
    pub norm: String,
    pub space: String,
    pub dims: Vec<usize>,
    pub seed: u64,
    pub budget: usize,
    pub evaluated: usize,
    pub best: Option<Candidate>,
    pub max_violation: f64,
}

impl WitnessRecord {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn evaluate_candidate(beta: &dyn TensorNormEvaluator, z: &Tensor, index: usize, seed: u64) -> Result<Candidate> {
    let left = beta.value(z)?;
    let right = beta.value(&z.flatten_scalar()?)?;
    Ok(Candidate { index, seed, coeffs: z.coeffs().to_vec(), left, right, violation: relative(left, right) })
}

/// Maximizes `|β_{n+1}(z) − β_n(ψ(z))| / β_n(ψ(z))` over `z` on
/// `E₁⊗···⊗Eₙ⊗K`: three quarters of the budget on seeded samples, the rest
/// on perturbations of the running best. A zero violation is a valid result.
pub fn witness_search_nonsmooth(
    beta: &dyn TensorNormEvaluator,
    space: &TensorSpace,
    budget: usize,
    seed: u64,
) -> Result<WitnessRecord> {
    let full = space.with_scalar();
    let sampled = budget - budget / 4;
    let firsts: Vec<Result<Candidate>> = (0..sampled)
        .into_par_iter()
        .map(|k| {
            let s = rng::derive_seed(seed, &[7, k as u64]);
            let style = if k % 2 == 0 { RandomStyle::Dense } else { RandomStyle::LowRank(2) };
            evaluate_candidate(beta, &random_tensor(&full, s, style), k, s)
        })
        .collect();
    let mut best: Option<Candidate> = None;
    for c in firsts {
        let c = c?;
        if best.as_ref().map_or(true, |b| c.violation > b.violation) {
            best = Some(c);
        }
    }
    for k in sampled..budget {
        let Some(b) = best.clone() else { break };
        let s = rng::derive_seed(seed, &[8, k as u64]);
        let noise = random_tensor(&full, s, RandomStyle::Dense);
        let coeffs: Vec<f64> = b.coeffs.iter().zip(noise.coeffs()).map(|(x, e)| x + 0.1 * e).collect();
        let c = evaluate_candidate(beta, &Tensor::new(full.clone(), coeffs)?, k, s)?;
        if c.violation > b.violation {
            best = Some(c);
        }
    }
    let max_violation = best.as_ref().map_or(0.0, |b| b.violation);
    Ok(WitnessRecord {
        norm: beta.name(),
        space: full.describe(),
        dims: space.dims(),
        seed,
        budget,
        evaluated: budget,
        best,
        max_violation,
    })
}
