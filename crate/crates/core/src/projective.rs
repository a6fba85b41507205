//! The projective norm `π(z) = inf Σ_j Π_l ‖x_lj‖` over representations of `z`.
//!
//! Upper bounds come from explicit representations whose reconstruction
//! residual is below `residual_tol`; lower bounds from forms `A` with
//! `⟨A, z⟩ / ‖A‖_sup`. When every factor ball is polyhedral the problem is
//! a linear program over products of extreme points, solved exactly on both
//! sides.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::injective::{self, EpsilonConfig};
use crate::maximize::{self, is_frozen, AscentConfig};
use crate::rng;
use crate::search::{self, Block, Layout};
use crate::spaces::NormedSpace;
use crate::tensors::{accumulate_outer, Decomposition, NormEstimate, Tensor, TensorNormEvaluator, TensorSpace, Term};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectiveConfig {
    /// Terms in the searched representation; `None` means the product of all
    /// factor dimensions but the largest, which always admits an exact fit.
    pub max_rank: Option<usize>,
    pub restarts: usize,
    /// Pattern-search moves per restart.
    pub iters: usize,
    pub residual_tol: f64,
    /// Relative bracket gap below which an estimate counts as converged.
    pub tol: f64,
    pub seed: u64,
    pub eps: EpsilonConfig,
    /// Subgradient steps refining the lower-bound form.
    pub lower_steps: usize,
    /// Rounds of the cutting-plane dual over non-polyhedral balls.
    pub cut_rounds: usize,
    /// Use the exact linear program when all balls are polyhedral.
    pub lp: bool,
    pub lp_atom_limit: usize,
}

impl Default for ProjectiveConfig {
    fn default() -> Self {
        ProjectiveConfig {
            max_rank: None,
            restarts: 8,
            iters: 3000,
            residual_tol: 1e-9,
            tol: 1e-3,
            seed: 0,
            eps: EpsilonConfig::default(),
            lower_steps: 30,
            cut_rounds: 80,
            lp: true,
            lp_atom_limit: 20_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PiUpper {
    pub value: f64,
    pub decomposition: Decomposition,
    pub residual: f64,
    pub iterations: u64,
    /// True when the value is the optimum of the exact linear program.
    pub exact: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PiLower {
    pub value: f64,
    /// A form on the dual space with `⟨A, z⟩ = value` and estimated sup norm
    /// at most one.
    pub certificate: Option<Tensor>,
    /// True when the sup norm of the certificate was computed exactly.
    pub certified: bool,
}

pub(crate) fn default_rank(dims: &[usize]) -> usize {
    Layout::new(dims).rows.max(1)
}

/// Active direction blocks `(term, position in others)`.
pub(crate) fn active_blocks(lay: &Layout, factors: &[NormedSpace], rank: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for j in 0..rank {
        for (k, &l) in lay.others.iter().enumerate() {
            if !is_frozen(&factors[l]) {
                out.push((j, k));
            }
        }
    }
    out
}

/// Directions of a rank-`rank` representation from rank-one deflation of
/// the coefficients in the Euclidean metric.
pub(crate) fn deflation_dirs(
    coeffs: &[f64],
    dims: &[usize],
    lay: &Layout,
    factors: &[NormedSpace],
    rank: usize,
) -> Vec<Vec<Vec<f64>>> {
    let balls: Vec<NormedSpace> = dims
        .iter()
        .map(|&d| NormedSpace::ellp(d, 2.0).expect("positive dimension"))
        .collect();
    let cfg = AscentConfig { restarts: 1, max_iters: 500, tol: 1e-14, seed: 0 };
    let mut resid = coeffs.to_vec();
    let scale = coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
    let mut out = Vec::with_capacity(rank);
    for j in 0..rank {
        // A spent residual would repeat its last slice and leave the basis
        // rank-deficient; seeded random directions keep it generic.
        if resid.iter().map(|c| c * c).sum::<f64>().sqrt() <= 1e-12 * scale {
            let mut r = rng::stream(0x5eed, &[j as u64]);
            out.push(lay.others.iter().map(|&l| search::random_direction(&factors[l], &mut r)).collect());
            continue;
        }
        let run = maximize::multistart_max(&resid, dims, &balls, &cfg);
        let sigma = maximize::contract_all(&resid, dims, &run.point);
        accumulate_outer(&mut resid, -sigma, &run.point);
        out.push(
            lay.others
                .iter()
                .map(|&l| {
                    let u = &run.point[l];
                    let n = factors[l].norm_unchecked(u);
                    if n > 0.0 {
                        u.iter().map(|x| x / n).collect()
                    } else {
                        maximize::frozen_point(&factors[l])
                    }
                })
                .collect(),
        );
    }
    out
}

fn random_dirs(lay: &Layout, factors: &[NormedSpace], rank: usize, r: &mut rng::Rng) -> Vec<Vec<Vec<f64>>> {
    (0..rank)
        .map(|_| lay.others.iter().map(|&l| search::random_direction(&factors[l], r)).collect())
        .collect()
}

/// Objective of the π search: `Σ_j Π_l ‖x_lj‖` in factor order, or `None`
/// if the least-squares fit misses the target.
struct PiObjective<'a> {
    lay: &'a Layout,
    factors: &'a [NormedSpace],
    target: DMatrix<f64>,
    residual_tol: f64,
}

impl PiObjective<'_> {
    fn fit(&self, dirs: &[Vec<Vec<f64>>]) -> (DMatrix<f64>, f64) {
        search::solve(&self.lay.basis(dirs), &self.target)
    }

    fn cost(&self, dirs: &[Vec<Vec<f64>>]) -> Option<f64> {
        let (y, res) = self.fit(dirs);
        if !(res < self.residual_tol) {
            return None;
        }
        Some(
            dirs.iter()
                .enumerate()
                .map(|(j, d)| {
                    let yj: Vec<f64> = y.row(j).iter().copied().collect();
                    self.lay
                        .term_vectors(d, yj)
                        .iter()
                        .zip(self.factors)
                        .fold(1.0, |acc, (v, s)| acc * s.norm_unchecked(v))
                })
                .sum(),
        )
    }
}

fn pack(dirs: &[Vec<Vec<f64>>], blocks: &[(usize, usize)]) -> Vec<Vec<f64>> {
    blocks.iter().map(|&(j, k)| dirs[j][k].clone()).collect()
}

fn unpack(base: &[Vec<Vec<f64>>], params: &[Vec<f64>], blocks: &[(usize, usize)]) -> Vec<Vec<Vec<f64>>> {
    let mut dirs = base.to_vec();
    for (p, &(j, k)) in params.iter().zip(blocks) {
        dirs[j][k] = p.clone();
    }
    dirs
}

struct SearchResult {
    cost: Option<f64>,
    dirs: Vec<Vec<Vec<f64>>>,
    iterations: u64,
}

/// Multi-start search over representation directions. Restart 0 starts
/// from deflation, the others from random directions.
fn search_pi(coeffs: &[f64], space: &TensorSpace, rank: usize, cfg: &ProjectiveConfig) -> (SearchResult, Layout) {
    let dims = space.dims();
    let lay = Layout::new(&dims);
    let factors = space.factors();
    let obj = PiObjective {
        lay: &lay,
        factors,
        target: lay.unfold(coeffs),
        residual_tol: cfg.residual_tol,
    };
    let blocks = active_blocks(&lay, factors, rank);
    let kinds: Vec<Block> = blocks
        .iter()
        .map(|&(_, k)| Block::Direction(factors[lay.others[k]].clone()))
        .collect();
    let runs: Vec<SearchResult> = (0..cfg.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let base = if r == 0 {
                deflation_dirs(coeffs, &dims, &lay, factors, rank)
            } else {
                random_dirs(&lay, factors, rank, &mut rng::stream(cfg.seed, &[r as u64, 0]))
            };
            let f = |p: &[Vec<f64>]| obj.cost(&unpack(&base, p, &blocks));
            let mut pr = rng::stream(cfg.seed, &[r as u64, 1]);
            let (params, cost, iters) =
                search::pattern_minimize(pack(&base, &blocks), &kinds, &f, None, cfg.iters, &mut pr);
            SearchResult { cost, dirs: unpack(&base, &params, &blocks), iterations: iters }
        })
        .collect();
    let iterations = runs.iter().map(|r| r.iterations).sum();
    let mut best: Option<SearchResult> = None;
    for run in runs {
        let better = match (&best, run.cost) {
            (None, _) => true,
            (Some(b), Some(c)) => b.cost.map_or(true, |bc| c < bc),
            (Some(_), None) => false,
        };
        if better {
            best = Some(run);
        }
    }
    let mut best = best.expect("at least one restart");
    best.iterations = iterations;
    (best, lay)
}

/// Products of half extreme points: the extreme points of the projective
/// unit ball up to sign.
fn atoms(space: &TensorSpace, limit: usize) -> Result<Vec<Vec<Vec<f64>>>> {
    let halves: Vec<Vec<Vec<f64>>> = space
        .factors()
        .iter()
        .map(|f| f.half_extreme_points())
        .collect::<Result<_>>()?;
    let count: usize = halves.iter().map(|h| h.len()).product();
    if count > limit {
        return Err(Error::BudgetExceeded { needed: count as u128, budget: limit as u128 });
    }
    let mut out = vec![Vec::new()];
    for h in &halves {
        let mut next = Vec::with_capacity(out.len() * h.len());
        for prefix in &out {
            for v in h {
                let mut p: Vec<Vec<f64>> = prefix.clone();
                p.push(v.clone());
                next.push(p);
            }
        }
        out = next;
    }
    Ok(out)
}

fn atom_coeffs(space: &TensorSpace, atom: &[Vec<f64>]) -> Vec<f64> {
    let mut c = vec![0.0; space.total()];
    accumulate_outer(&mut c, 1.0, atom);
    c
}

fn lp_error(e: impl std::fmt::Display) -> Error {
    Error::LinearProgram(e.to_string())
}

/// Exact π over polyhedral balls: `min Σ|c_a|` subject to `Σ c_a a = z`.
fn pi_lp_primal(coeffs: &[f64], space: &TensorSpace, limit: usize) -> Result<(f64, Decomposition)> {
    let ats = atoms(space, limit)?;
    let cols: Vec<Vec<f64>> = ats.iter().map(|a| atom_coeffs(space, a)).collect();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let plus: Vec<_> = ats.iter().map(|_| lp.add_var(1.0, (0.0, f64::INFINITY))).collect();
    let minus: Vec<_> = ats.iter().map(|_| lp.add_var(1.0, (0.0, f64::INFINITY))).collect();
    for (i, &zi) in coeffs.iter().enumerate() {
        let mut row = Vec::new();
        for (a, col) in cols.iter().enumerate() {
            if col[i] != 0.0 {
                row.push((plus[a], col[i]));
                row.push((minus[a], -col[i]));
            }
        }
        lp.add_constraint(row.as_slice(), ComparisonOp::Eq, zi);
    }
    let sol = lp.solve().map_err(lp_error)?.into_solution().map_err(|_| lp_error("interrupted"))?;
    let mut terms = Vec::new();
    for (a, atom) in ats.iter().enumerate() {
        let c = sol.var_value(plus[a]) - sol.var_value(minus[a]);
        if c != 0.0 {
            terms.push(Term { lambda: c, vectors: atom.clone() });
        }
    }
    Ok((sol.objective(), Decomposition { terms }))
}

/// The dual program: `max ⟨A, z⟩` subject to `|⟨A, a⟩| ≤ 1` on every atom,
/// which is exactly `‖A‖_sup ≤ 1` for polyhedral balls.
fn pi_lp_dual(coeffs: &[f64], space: &TensorSpace, limit: usize) -> Result<(f64, Vec<f64>)> {
    let ats = atoms(space, limit)?;
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = coeffs
        .iter()
        .map(|&zi| lp.add_var(zi, (f64::NEG_INFINITY, f64::INFINITY)))
        .collect();
    for atom in &ats {
        let col = atom_coeffs(space, atom);
        let row: Vec<_> = col
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(i, c)| (vars[i], *c))
            .collect();
        lp.add_constraint(row.as_slice(), ComparisonOp::Le, 1.0);
        lp.add_constraint(row.as_slice(), ComparisonOp::Ge, -1.0);
    }
    let sol = lp.solve().map_err(lp_error)?.into_solution().map_err(|_| lp_error("interrupted"))?;
    let a: Vec<f64> = vars.iter().map(|&v| sol.var_value(v)).collect();
    let value = crate::spaces::dot(&a, coeffs);
    Ok((value, a))
}

fn all_polyhedral(space: &TensorSpace) -> bool {
    space.factors().iter().all(|f| f.is_polyhedral())
}

fn normalized(z: &Tensor) -> (Vec<f64>, f64) {
    let s = z.max_abs();
    (z.coeffs().iter().map(|c| c / s).collect(), s)
}

/// Best representation found; the LP optimum when all balls are polyhedral.
pub fn pi_upper(z: &Tensor, cfg: &ProjectiveConfig) -> Result<PiUpper> {
    if z.is_zero() {
        return Ok(PiUpper {
            value: 0.0,
            decomposition: Decomposition::default(),
            residual: 0.0,
            iterations: 0,
            exact: true,
        });
    }
    let (c, s) = normalized(z);
    let space = z.space();
    let rank = cfg.max_rank.unwrap_or_else(|| default_rank(&space.dims())).max(1);
    let (best, lay) = search_pi(&c, space, rank, cfg);
    let obj = PiObjective {
        lay: &lay,
        factors: space.factors(),
        target: lay.unfold(&c),
        residual_tol: cfg.residual_tol,
    };
    let (y, residual) = obj.fit(&best.dirs);
    let mut out = best.cost.map(|cost| PiUpper {
        value: cost,
        decomposition: Decomposition {
            terms: best
                .dirs
                .iter()
                .enumerate()
                .map(|(j, d)| Term {
                    lambda: 1.0,
                    vectors: lay.term_vectors(d, y.row(j).iter().copied().collect()),
                })
                .collect(),
        },
        residual,
        iterations: best.iterations,
        exact: false,
    });
    if cfg.lp && all_polyhedral(space) {
        if let Ok((v, d)) = pi_lp_primal(&c, space, cfg.lp_atom_limit) {
            let res = d.to_tensor(space)?.add(&Tensor::new(space.clone(), c.clone())?.scaled(-1.0))?.coeff_norm();
            if res < cfg.residual_tol && out.as_ref().map_or(true, |o| v <= o.value) {
                out = Some(PiUpper { value: v, decomposition: d, residual: res, iterations: best.iterations, exact: true });
            }
        }
    }
    let mut out = out.ok_or(Error::NoDecomposition { rank, residual })?;
    out.value *= s;
    out.residual *= s;
    for t in &mut out.decomposition.terms {
        t.lambda *= s;
    }
    Ok(out)
}

/// Candidate form with its pairing and sup norm.
struct Candidate {
    form: Vec<f64>,
    pairing: f64,
    sup: f64,
    certified: bool,
}

impl Candidate {
    fn ratio(&self) -> f64 {
        if self.sup > 0.0 {
            self.pairing.abs() / self.sup
        } else {
            0.0
        }
    }
}

fn evaluate_form(form: Vec<f64>, c: &[f64], space: &TensorSpace, eps: &EpsilonConfig) -> Result<Candidate> {
    let a = Tensor::new(space.clone(), form)?;
    let sup = injective::form_sup_norm(&a, eps)?;
    let pairing = crate::spaces::dot(a.coeffs(), c);
    Ok(Candidate {
        form: a.into_coeffs(),
        pairing,
        sup: sup.best(),
        certified: sup.upper.is_finite(),
    })
}

/// Minimum-Frobenius form taking the value one on every normalized term of
/// a representation.
fn min_norm_certificate(d: &Decomposition, space: &TensorSpace) -> Option<Vec<f64>> {
    let rows: Vec<Vec<f64>> = d
        .terms
        .iter()
        .filter_map(|t| {
            let mut v = vec![0.0; space.total()];
            accumulate_outer(&mut v, t.lambda, &t.vectors);
            let n = t
                .vectors
                .iter()
                .zip(space.factors())
                .fold(t.lambda.abs(), |acc, (x, s)| acc * s.norm_unchecked(x));
            (n > 1e-14).then(|| v.iter().map(|x| x / n).collect())
        })
        .collect();
    if rows.is_empty() {
        return None;
    }
    let m = DMatrix::from_fn(rows.len(), space.total(), |i, k| rows[i][k]);
    let ones = DMatrix::from_element(rows.len(), 1, 1.0);
    let (sol, _) = search::solve(&m, &ones);
    Some(sol.column(0).iter().copied().collect())
}

/// Cutting-plane dual: `max ⟨A, z⟩` subject to `|⟨A, a⟩| ≤ 1` over a
/// growing set of unit elementary tensors `a`, each round adding the
/// sup-norm maximizer of the current `A`. The coordinate box
/// `|A_i| ≤ Π_l ‖e_{i_l}‖` holds for every form of sup norm one and keeps
/// the program bounded. Returns the best normalized form seen.
fn cutting_plane(c: &[f64], space: &TensorSpace, seeds: Vec<Vec<f64>>, cfg: &ProjectiveConfig) -> Result<Option<Candidate>> {
    let dims = space.dims();
    let boxes: Vec<f64> = (0..space.total())
        .map(|i| {
            let idx = crate::tensors::unravel(i, &dims);
            idx.iter()
                .zip(space.factors())
                .map(|(&k, f)| {
                    let mut e = vec![0.0; f.dim()];
                    e[k] = 1.0;
                    f.norm_unchecked(&e)
                })
                .product()
        })
        .collect();
    let mut cuts = seeds;
    let mut best: Option<Candidate> = None;
    let quick = EpsilonConfig { restarts: cfg.eps.restarts.min(8), ..cfg.eps };
    for _ in 0..cfg.cut_rounds {
        let mut lp = Problem::new(OptimizationDirection::Maximize);
        let vars: Vec<_> = c.iter().zip(&boxes).map(|(&zi, &b)| lp.add_var(zi, (-b, b))).collect();
        for cut in &cuts {
            let row: Vec<_> = cut.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (vars[i], *v)).collect();
            lp.add_constraint(row.as_slice(), ComparisonOp::Le, 1.0);
            lp.add_constraint(row.as_slice(), ComparisonOp::Ge, -1.0);
        }
        let Ok(sol) = lp.solve() else { break };
        let Ok(sol) = sol.into_solution() else { break };
        let a: Vec<f64> = vars.iter().map(|&v| sol.var_value(v)).collect();
        let form = Tensor::new(space.clone(), a.clone())?;
        let run = injective::form_sup_search(&form, &quick)?;
        // The relaxation's optimum bounds π from above.
        let relaxed = sol.objective();
        let cand = Candidate {
            pairing: crate::spaces::dot(&a, c),
            sup: run.value,
            form: a,
            certified: false,
        };
        if best.as_ref().map_or(true, |b| cand.ratio() > b.ratio()) {
            best = Some(cand);
        }
        let gap = relaxed - best.as_ref().map_or(0.0, |b| b.ratio());
        if run.value <= 1.0 + 1e-12 || gap <= 1e-7 * relaxed {
            break;
        }
        let mut cut = vec![0.0; space.total()];
        accumulate_outer(&mut cut, 1.0, &run.point);
        cuts.push(cut);
    }
    best.map(|b| evaluate_form(b.form, c, space, &cfg.eps)).transpose()
}

/// Subgradient ascent on `⟨A, z⟩ / ‖A‖_sup`, rescaling `A` after each step.
fn refine_form(start: Candidate, c: &[f64], space: &TensorSpace, cfg: &ProjectiveConfig) -> Result<Candidate> {
    let eps = EpsilonConfig { restarts: cfg.eps.restarts.min(8), ..cfg.eps };
    let mut best = start;
    let mut step = 0.2;
    for _ in 0..cfg.lower_steps {
        if best.sup <= 0.0 || step < 1e-6 {
            break;
        }
        let a = Tensor::new(space.clone(), best.form.clone())?;
        let run = injective::form_sup_search(&a, &eps)?;
        let mut t = vec![0.0; space.total()];
        accumulate_outer(&mut t, 1.0, &run.point);
        let sgn_t = crate::spaces::dot(&best.form, &t).signum();
        let sgn = best.pairing.signum();
        let grad: Vec<f64> = c
            .iter()
            .zip(&t)
            .map(|(zi, ti)| sgn * zi / best.sup - best.pairing.abs() / (best.sup * best.sup) * sgn_t * ti)
            .collect();
        let gn = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let an = best.form.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !(gn > 0.0) {
            break;
        }
        let trial: Vec<f64> = best
            .form
            .iter()
            .zip(&grad)
            .map(|(ai, gi)| ai + step * an / gn * gi)
            .collect();
        let cand = evaluate_form(trial, c, space, &cfg.eps)?;
        if cand.ratio() > best.ratio() {
            best = cand;
            step *= 1.2;
        } else {
            step *= 0.5;
        }
    }
    Ok(best)
}

/// Lower bound by duality, given an upper-bound representation if one is
/// known. Candidates exceeding a verified upper bound are discarded.
pub fn pi_lower_with(z: &Tensor, cfg: &ProjectiveConfig, upper: Option<&PiUpper>) -> Result<PiLower> {
    let dual = z.space().dual();
    if z.is_zero() {
        return Ok(PiLower { value: 0.0, certificate: Some(Tensor::zeros(dual)), certified: true });
    }
    let (c, s) = normalized(z);
    let space = z.space();
    let zn = Tensor::new(space.clone(), c.clone())?;
    let mut cands = Vec::new();

    // Product of the injective maximizers: a form of sup norm Π‖φ_l‖ ≤ 1.
    let run = injective::epsilon_search(&zn, &cfg.eps);
    let mut prod = vec![0.0; space.total()];
    accumulate_outer(&mut prod, 1.0, &run.point);
    let sup = run
        .point
        .iter()
        .zip(space.factors())
        .fold(1.0, |acc, (f, e)| acc * e.dual().norm_unchecked(f));
    cands.push(Candidate { pairing: crate::spaces::dot(&prod, &c), form: prod, sup, certified: true });

    if cfg.lp && all_polyhedral(space) {
        if let Ok((v, a)) = pi_lp_dual(&c, space, cfg.lp_atom_limit) {
            cands.push(Candidate { form: a, pairing: v, sup: 1.0, certified: true });
        }
    }
    let verified = upper.map(|u| u.value / s);
    if let Some(u) = upper {
        let scaled = Decomposition {
            terms: u
                .decomposition
                .terms
                .iter()
                .map(|t| Term { lambda: t.lambda / s, vectors: t.vectors.clone() })
                .collect(),
        };
        if let Some(form) = min_norm_certificate(&scaled, space) {
            cands.push(evaluate_form(form, &c, space, &cfg.eps)?);
        }
    }
    if !all_polyhedral(space) && cfg.cut_rounds > 0 {
        let mut seeds = Vec::new();
        let mut add = |vectors: &[Vec<f64>]| {
            let n: f64 = vectors.iter().zip(space.factors()).map(|(x, f)| f.norm_unchecked(x)).product();
            if n > 1e-14 {
                let mut cut = vec![0.0; space.total()];
                accumulate_outer(&mut cut, 1.0 / n, vectors);
                seeds.push(cut);
            }
        };
        if let Some(u) = upper {
            for t in &u.decomposition.terms {
                add(&t.vectors);
            }
        }
        let maximizers: Vec<Vec<f64>> =
            run.point.iter().zip(space.factors()).map(|(f, e)| e.norming_point(f)).collect();
        add(&maximizers);
        if let Some(k) = cutting_plane(&c, space, seeds, cfg)? {
            cands.push(k);
        }
    }
    let admissible = |k: &Candidate| verified.map_or(true, |u| k.ratio() <= u * (1.0 + 1e-9));
    let mut best: Option<Candidate> = None;
    for k in cands.into_iter().filter(admissible) {
        if best.as_ref().map_or(true, |b| k.ratio() > b.ratio()) {
            best = Some(k);
        }
    }
    let mut best = best.expect("the product candidate is always admissible");
    let exact = verified.is_some_and(|u| best.ratio() >= u * (1.0 - 1e-12));
    if cfg.lower_steps > 0 && !exact {
        let refined = refine_form(
            Candidate { form: best.form.clone(), ..best },
            &c,
            space,
            cfg,
        )?;
        if refined.ratio() > best.ratio() && admissible(&refined) {
            best = refined;
        }
    }
    let ratio = best.ratio();
    let scale = best.pairing.signum() / best.sup;
    let certificate = Tensor::new(dual, best.form.iter().map(|a| a * scale).collect())?;
    Ok(PiLower { value: ratio * s, certificate: Some(certificate), certified: best.certified })
}

pub fn pi_lower(z: &Tensor, cfg: &ProjectiveConfig) -> Result<PiLower> {
    pi_lower_with(z, cfg, None)
}

/// Bracket `[pi_lower, pi_upper]`.
pub fn pi_estimate(z: &Tensor, cfg: &ProjectiveConfig) -> Result<NormEstimate> {
    if z.is_zero() {
        return Ok(NormEstimate::exact(0.0, cfg.seed));
    }
    let up = pi_upper(z, cfg)?;
    let lo = pi_lower_with(z, cfg, Some(&up))?;
    let lower = lo.value.min(up.value);
    Ok(NormEstimate {
        lower,
        upper: up.value,
        converged: up.value - lower <= cfg.tol * up.value,
        iterations: up.iterations,
        seed: cfg.seed,
    })
}

/// Sum of singular values for two unweighted ℓ2 factors.
pub fn pi_matrix_oracle(z: &Tensor) -> Result<f64> {
    injective::nuclear_matrix_oracle(z)
}

#[derive(Clone, Debug, Default)]
pub struct ProjectiveNorm {
    pub cfg: ProjectiveConfig,
}

impl TensorNormEvaluator for ProjectiveNorm {
    fn name(&self) -> String {
        "pi".into()
    }

    fn estimate(&self, z: &Tensor) -> Result<NormEstimate> {
        pi_estimate(z, &self.cfg)
    }

    fn value(&self, z: &Tensor) -> Result<f64> {
        Ok(pi_upper(z, &self.cfg)?.value)
    }

    /// The dual of π is the sup norm, normed by an elementary tensor at the
    /// sup-norm maximizer.
    fn dual_witnesses(&self, a: &Tensor) -> Result<Vec<Tensor>> {
        let run = injective::form_sup_search(a, &self.cfg.eps)?;
        Ok(vec![Tensor::elementary(a.space().clone(), &run.point)?])
    }
}
