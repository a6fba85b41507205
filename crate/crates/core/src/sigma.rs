//! The σ_p tensor norm, its dual (the p-semi-integral norm of a form), the
//! β_p norm over grouped representations, and the two moduli they need.
//!
//! For an aligned family `x_j = (x_1j,…,x_nj)` the family modulus is
//! `M_p(x) = sup_{φ_l ∈ B_{E_l'}} (Σ_j |φ₁(x_1j)···φₙ(x_nj)|^p)^{1/p}`, and
//! `σ_p(z) = inf ‖λ‖_q·M_p(x)` over representations `z = Σ_j λ_j x_1j⊗···⊗x_nj`.
//! The form-ball modulus `S_p` replaces the product functionals by the unit
//! ball of all n-linear forms and runs over a product grid of indices.

use std::cell::RefCell;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::injective::{self, EpsilonConfig};
use crate::maximize::{self, is_frozen, AscentConfig, Family};
use crate::projective::{active_blocks, deflation_dirs, default_rank};
use crate::rng;
use crate::search::{self, Block, Layout};
use crate::spaces::{lp_norm, Exponent, NormedSpace};
use crate::tensors::{
    accumulate_outer, transform_axis, Decomposition, GroupedDecomposition, NormEstimate, Tensor,
    TensorNormEvaluator, TensorSpace, Term,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SigmaConfig {
    pub max_rank: Option<usize>,
    pub restarts: usize,
    pub iters: usize,
    pub residual_tol: f64,
    pub seed: u64,
    /// Inner modulus search used while the outer search moves.
    pub inner: AscentConfig,
    /// Modulus search used to price the final candidates.
    pub polish: AscentConfig,
    /// Largest enumeration accepted for an exact modulus.
    pub enumeration_budget: u128,
    /// Largest family tried by the dual ascent.
    pub family_max: usize,
    pub eps: EpsilonConfig,
}

impl Default for SigmaConfig {
    fn default() -> Self {
        SigmaConfig {
            max_rank: None,
            restarts: 4,
            iters: 600,
            residual_tol: 1e-9,
            seed: 0,
            inner: AscentConfig { restarts: 2, max_iters: 200, tol: 1e-10, seed: 0 },
            polish: AscentConfig { restarts: 16, max_iters: 2000, tol: 1e-13, seed: 0 },
            enumeration_budget: 1 << 16,
            family_max: 4,
            eps: EpsilonConfig::default(),
        }
    }
}

/// Outcome of a modulus evaluation.
#[derive(Clone, Debug)]
struct Modulus {
    value: f64,
    point: Vec<Vec<f64>>,
    exact: bool,
}

fn modulus(
    fam: &Family,
    balls: &[NormedSpace],
    p: Exponent,
    cfg: &AscentConfig,
    budget: u128,
    warm: Option<&[Vec<f64>]>,
) -> Modulus {
    match p {
        Exponent::Infinity => {
            // sup_φ max_j |Π φ_l(x_lj)| = max_j Π ‖x_lj‖.
            let value = (0..fam.len())
                .map(|j| {
                    balls
                        .iter()
                        .enumerate()
                        .fold(1.0, |acc, (l, b)| acc * b.dual().norm_unchecked(&fam.vectors[l][j]))
                })
                .fold(0.0, f64::max);
            Modulus { value, point: maximize::psum_norming_start(fam, balls), exact: true }
        }
        Exponent::Finite(pv) => {
            if balls.iter().all(|b| b.is_polyhedral()) {
                if let Ok(run) = maximize::psum_enumerate(fam, balls, pv, budget) {
                    return Modulus { value: run.value, point: run.point, exact: true };
                }
            }
            let run = maximize::psum_max(fam, balls, pv, cfg, warm);
            Modulus { value: run.value, point: run.point, exact: false }
        }
    }
}

/// `M_p` of an aligned family over the unit balls of the factors' duals.
/// Exact for `p = ∞` and for polyhedral balls; a lower bound otherwise.
pub fn family_modulus_p(
    fam: &Family,
    spaces: &[NormedSpace],
    p: Exponent,
    cfg: &AscentConfig,
    budget: u128,
) -> Result<NormEstimate> {
    if fam.is_empty() {
        return Err(Error::InvalidArgument("empty family".into()));
    }
    check_len(spaces.len(), fam.order())?;
    for (xs, s) in fam.vectors.iter().zip(spaces) {
        check_len(fam.len(), xs.len())?;
        for x in xs {
            check_len(s.dim(), x.len())?;
        }
    }
    let balls: Vec<NormedSpace> = spaces.iter().map(|s| s.dual()).collect();
    let m = modulus(fam, &balls, p, cfg, budget, None);
    Ok(if m.exact {
        NormEstimate::exact(m.value, cfg.seed)
    } else {
        NormEstimate::lower_only(m.value, true, 0, cfg.seed)
    })
}

fn root_p(c: f64, p: Exponent) -> f64 {
    match p {
        Exponent::Infinity => 1.0,
        Exponent::Finite(pv) if pv == 1.0 => c,
        Exponent::Finite(pv) if pv == 2.0 => c.sqrt(),
        Exponent::Finite(pv) => c.powf(1.0 / pv),
    }
}

/// Search objective of the σ_p upper bound. Directions fix the solved
/// factor's vectors `y_j = c_j v_j` by least squares; log-scales `s_j`
/// split `c_j = λ_j μ_j` with `μ_j = e^{s_j} c_j^{1/p}`, the family taking
/// `μ_j v_j` on the solved factor.
struct SigmaObjective<'a> {
    lay: &'a Layout,
    factors: &'a [NormedSpace],
    balls: Vec<NormedSpace>,
    target: DMatrix<f64>,
    pair: crate::spaces::ConjugatePair,
    residual_tol: f64,
    budget: u128,
}

struct Priced {
    cost: f64,
    lambdas: Vec<f64>,
    family: Family,
    point: Vec<Vec<f64>>,
}

impl SigmaObjective<'_> {
    fn price(
        &self,
        dirs: &[Vec<Vec<f64>>],
        scales: &[f64],
        cfg: &AscentConfig,
        warm: Option<&[Vec<f64>]>,
    ) -> Option<Priced> {
        let (y, res) = search::solve(&self.lay.basis(dirs), &self.target);
        if !(res < self.residual_tol) {
            return None;
        }
        let n = self.factors.len();
        let mut lambdas = Vec::new();
        let mut vectors: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n];
        for (j, d) in dirs.iter().enumerate() {
            let yj: Vec<f64> = y.row(j).iter().copied().collect();
            let c = self.factors[self.lay.solved].norm_unchecked(&yj);
            if c == 0.0 {
                continue;
            }
            let mu = scales[j].exp() * root_p(c, self.pair.p);
            lambdas.push(c / mu);
            let scaled: Vec<f64> = yj.iter().map(|v| v / c * mu).collect();
            for (l, v) in self.lay.term_vectors(d, scaled).into_iter().enumerate() {
                vectors[l].push(v);
            }
        }
        if lambdas.is_empty() {
            return Some(Priced { cost: 0.0, lambdas, family: Family { vectors }, point: Vec::new() });
        }
        let family = Family { vectors };
        let m = modulus(&family, &self.balls, self.pair.p, cfg, self.budget, warm);
        Some(Priced {
            cost: lp_norm(&lambdas, self.pair.q) * m.value,
            lambdas,
            family,
            point: m.point,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SigmaUpper {
    pub value: f64,
    pub decomposition: Decomposition,
    /// True when the modulus of the returned representation was exact.
    pub certified: bool,
    pub iterations: u64,
}

/// Best `‖λ‖_q·M_p` found over exact representations.
pub fn sigma_p_upper(z: &Tensor, p: Exponent, cfg: &SigmaConfig) -> Result<SigmaUpper> {
    if z.is_zero() {
        return Ok(SigmaUpper { value: 0.0, decomposition: Decomposition::default(), certified: true, iterations: 0 });
    }
    let s = z.max_abs();
    let c: Vec<f64> = z.coeffs().iter().map(|v| v / s).collect();
    let space = z.space();
    let dims = space.dims();
    let factors = space.factors();
    let lay = Layout::new(&dims);
    let rank = cfg.max_rank.unwrap_or_else(|| default_rank(&dims)).max(1);
    let obj = SigmaObjective {
        lay: &lay,
        factors,
        balls: factors.iter().map(|f| f.dual()).collect(),
        target: lay.unfold(&c),
        pair: crate::spaces::ConjugatePair::new(p),
        residual_tol: cfg.residual_tol,
        budget: cfg.enumeration_budget,
    };
    let dir_blocks = active_blocks(&lay, factors, rank);
    let mut kinds: Vec<Block> = dir_blocks
        .iter()
        .map(|&(_, k)| Block::Direction(factors[lay.others[k]].clone()))
        .collect();
    kinds.extend((0..rank).map(|_| Block::Free));
    let nd = dir_blocks.len();

    let unpack = |base: &[Vec<Vec<f64>>], params: &[Vec<f64>]| -> (Vec<Vec<Vec<f64>>>, Vec<f64>) {
        let mut dirs = base.to_vec();
        for (p, &(j, k)) in params.iter().zip(&dir_blocks) {
            dirs[j][k] = p.clone();
        }
        let scales = params[nd..].iter().map(|v| v[0]).collect();
        (dirs, scales)
    };

    let runs: Vec<(Vec<Vec<Vec<f64>>>, Vec<f64>, Option<Vec<Vec<f64>>>, u64)> = (0..cfg.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let base = if r == 0 {
                deflation_dirs(&c, &dims, &lay, factors, rank)
            } else {
                let mut g = rng::stream(cfg.seed, &[r as u64, 0]);
                (0..rank)
                    .map(|_| lay.others.iter().map(|&l| search::random_direction(&factors[l], &mut g)).collect())
                    .collect()
            };
            let mut params: Vec<Vec<f64>> = dir_blocks.iter().map(|&(j, k)| base[j][k].clone()).collect();
            params.extend((0..rank).map(|_| vec![0.0]));
            let warm: RefCell<Option<Vec<Vec<f64>>>> = RefCell::new(None);
            let f = |prm: &[Vec<f64>]| {
                let (dirs, scales) = unpack(&base, prm);
                let w = warm.borrow().clone();
                let priced = obj.price(&dirs, &scales, &cfg.inner, w.as_deref())?;
                if !priced.point.is_empty() {
                    *warm.borrow_mut() = Some(priced.point);
                }
                Some(priced.cost)
            };
            let mut pr = rng::stream(cfg.seed, &[r as u64, 1]);
            let (params, _, iters) = search::pattern_minimize(params, &kinds, &f, None, cfg.iters, &mut pr);
            let (dirs, scales) = unpack(&base, &params);
            let w = warm.borrow().clone();
            (dirs, scales, w, iters)
        })
        .collect();

    let iterations = runs.iter().map(|r| r.3).sum();
    let mut best: Option<(Priced, Vec<Vec<Vec<f64>>>)> = None;
    let mut best_residual = f64::INFINITY;
    for (dirs, scales, warm, _) in &runs {
        let (_, res) = search::solve(&lay.basis(dirs), &obj.target);
        best_residual = best_residual.min(res);
        if let Some(pr) = obj.price(dirs, scales, &cfg.polish, warm.as_deref()) {
            if best.as_ref().map_or(true, |(b, _)| pr.cost < b.cost) {
                best = Some((pr, dirs.clone()));
            }
        }
    }
    let (pr, _) = best.ok_or(Error::NoDecomposition { rank, residual: best_residual })?;
    let certified = matches!(p, Exponent::Infinity) || obj.balls.iter().all(|b| b.is_polyhedral());
    let terms = (0..pr.lambdas.len())
        .map(|j| Term {
            lambda: pr.lambdas[j] * s,
            vectors: pr.family.vectors.iter().map(|xs| xs[j].clone()).collect(),
        })
        .collect();
    Ok(SigmaUpper { value: pr.cost * s, decomposition: Decomposition { terms }, certified, iterations })
}

/// Result of the dual ascent: a lower bound on the p-semi-integral norm.
#[derive(Clone, Debug, PartialEq)]
pub struct SemiIntegral {
    pub value: f64,
    /// The family attaining `value`.
    pub family: Family,
    /// `Σ_j sign(A(x_j))|A(x_j)|^{p-1} x_j`, a tensor on which `⟨A,·⟩/σ_p`
    /// is large.
    pub witness: Tensor,
}

fn eval_form(a: &[f64], dims: &[usize], xs: &[Vec<f64>]) -> f64 {
    maximize::contract_all(a, dims, xs)
}

fn family_member(fam: &Family, j: usize) -> Vec<Vec<f64>> {
    fam.vectors.iter().map(|v| v[j].clone()).collect()
}

/// `(Σ_j |A(x_j)|^p)^{1/p}`.
fn family_image(a: &[f64], dims: &[usize], fam: &Family, p: Exponent) -> f64 {
    let vals: Vec<f64> = (0..fam.len()).map(|j| eval_form(a, dims, &family_member(fam, j))).collect();
    lp_norm(&vals, p)
}

/// Lower bound on `‖A‖_{si,p}`, the dual norm of σ_p, by maximizing
/// `(Σ_j |A(x_j)|^p)^{1/p} / M_p(x)` over families of at most
/// `cfg.family_max` members.
pub fn sigma_p_dual(a: &Tensor, p: Exponent, cfg: &SigmaConfig) -> Result<SemiIntegral> {
    let space = a.space().clone();
    let dims = space.dims();
    let n = dims.len();
    let factors = space.factors();
    let balls: Vec<NormedSpace> = factors.iter().map(|f| f.dual()).collect();
    let empty = Family { vectors: vec![Vec::new(); n] };
    if a.is_zero() {
        return Ok(SemiIntegral { value: 0.0, family: empty, witness: Tensor::zeros(space) });
    }
    let s = a.max_abs();
    let c: Vec<f64> = a.coeffs().iter().map(|v| v / s).collect();
    let an = Tensor::new(space.clone(), c.clone())?;

    // One member at the sup-norm maximizer: the ratio is the sup norm.
    let sup = injective::form_sup_search(&an, &cfg.eps)?;
    let single = Family { vectors: sup.point.iter().map(|x| vec![x.clone()]).collect() };
    let ratio = |fam: &Family, acfg: &AscentConfig| -> f64 {
        let m = modulus(fam, &balls, p, acfg, cfg.enumeration_budget, None).value;
        if m > 0.0 {
            family_image(&c, &dims, fam, p) / m
        } else {
            0.0
        }
    };
    let mut best = (ratio(&single, &cfg.polish), single.clone());

    let active: Vec<usize> = (0..n).filter(|&l| !is_frozen(&factors[l])).collect();
    let build = |params: &[Vec<f64>], m: usize| -> Family {
        let mut vectors: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(m); n];
        let mut k = 0;
        for j in 0..m {
            let w = params[active.len() * m + j][0].exp();
            for l in 0..n {
                let mut v = if is_frozen(&factors[l]) {
                    maximize::frozen_point(&factors[l])
                } else {
                    let v = params[k].clone();
                    k += 1;
                    v
                };
                if l == 0 {
                    v.iter_mut().for_each(|x| *x *= w);
                }
                vectors[l].push(v);
            }
        }
        Family { vectors }
    };
    let mut cands: Vec<(usize, usize)> = Vec::new();
    for m in 2..=cfg.family_max.max(1) {
        for r in 0..cfg.restarts.max(1) {
            cands.push((m, r));
        }
    }
    let found: Vec<(f64, Family)> = cands
        .into_par_iter()
        .map(|(m, r)| {
            let mut g = rng::stream(cfg.seed, &[m as u64, r as u64]);
            let mut params = Vec::new();
            let mut kinds = Vec::new();
            for j in 0..m {
                for &l in &active {
                    let v = if r == 0 && j == 0 { sup.point[l].clone() } else { factors[l].random_unit(&mut g) };
                    let nv = factors[l].norm_unchecked(&v);
                    params.push(v.iter().map(|x| x / nv).collect());
                    kinds.push(Block::Direction(factors[l].clone()));
                }
            }
            for _ in 0..m {
                params.push(vec![0.0]);
                kinds.push(Block::Free);
            }
            let f = |prm: &[Vec<f64>]| Some(-ratio(&build(prm, m), &cfg.inner));
            let (params, _, _) = search::pattern_minimize(params, &kinds, &f, None, cfg.iters, &mut g);
            let fam = build(&params, m);
            (ratio(&fam, &cfg.polish), fam)
        })
        .collect();
    for (v, fam) in found {
        if v > best.0 {
            best = (v, fam);
        }
    }
    let (value, family) = best;
    let mut w = vec![0.0; space.total()];
    let pv = p.value();
    for j in 0..family.len() {
        let xs = family_member(&family, j);
        let t = eval_form(&c, &dims, &xs);
        let coef = if pv.is_infinite() { t.signum() } else { t.signum() * t.abs().powf(pv - 1.0) };
        accumulate_outer(&mut w, coef, &xs);
    }
    Ok(SemiIntegral { value: value * s, family, witness: Tensor::new(space, w)? })
}

/// Product family for the form-ball modulus: `lists[l][j]` ranges over
/// factor `l`, and members are all tuples `(x_{1,j₁},…,x_{n,jₙ})`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FormBallConfig {
    pub steps: usize,
    pub ascent: AscentConfig,
    pub eps: EpsilonConfig,
}

impl Default for FormBallConfig {
    fn default() -> Self {
        FormBallConfig {
            steps: 60,
            ascent: AscentConfig { restarts: 8, max_iters: 500, tol: 1e-12, seed: 0 },
            eps: EpsilonConfig { restarts: 8, ..EpsilonConfig::default() },
        }
    }
}

/// Values `φ(x_J)` over the product grid, row-major in `J`.
fn grid_values(phi: &[f64], dims: &[usize], lists: &[Vec<Vec<f64>>]) -> Vec<f64> {
    let mut buf = phi.to_vec();
    let mut cur = dims.to_vec();
    for (l, list) in lists.iter().enumerate() {
        let mat: Vec<f64> = list.iter().flatten().copied().collect();
        buf = transform_axis(&buf, &cur, l, &mat, list.len());
        cur[l] = list.len();
    }
    buf
}

/// Adjoint of [`grid_values`].
fn grid_adjoint(w: &[f64], dims: &[usize], lists: &[Vec<Vec<f64>>]) -> Vec<f64> {
    let mut buf = w.to_vec();
    let mut cur: Vec<usize> = lists.iter().map(|l| l.len()).collect();
    for (l, list) in lists.iter().enumerate() {
        let d = dims[l];
        let m = list.len();
        let mut mat = vec![0.0; d * m];
        for (j, x) in list.iter().enumerate() {
            for i in 0..d {
                mat[i * m + j] = x[i];
            }
        }
        buf = transform_axis(&buf, &cur, l, &mat, d);
        cur[l] = d;
    }
    buf
}

/// `S_r = sup_{‖φ‖_sup ≤ 1} (Σ_J |φ(x_J)|^r)^{1/r}` over the unit ball of
/// n-linear forms. Starts from the best product form, whose value is the
/// product of one-factor moduli, then ascends with rescaling by the
/// estimated sup norm. Exact for one factor.
pub fn form_ball_modulus(
    lists: &[Vec<Vec<f64>>],
    spaces: &[NormedSpace],
    r: Exponent,
    cfg: &FormBallConfig,
) -> Result<f64> {
    check_len(spaces.len(), lists.len())?;
    if lists.iter().any(|l| l.is_empty()) {
        return Err(Error::InvalidArgument("empty family".into()));
    }
    let dims: Vec<usize> = spaces.iter().map(|s| s.dim()).collect();
    let balls: Vec<NormedSpace> = spaces.iter().map(|s| s.dual()).collect();
    if let Exponent::Infinity = r {
        return Ok(lists
            .iter()
            .zip(spaces)
            .map(|(list, s)| list.iter().map(|x| s.norm_unchecked(x)).fold(0.0, f64::max))
            .product());
    }
    if lists.iter().all(|l| l.len() == 1) {
        return Ok(lists.iter().zip(spaces).map(|(l, s)| s.norm_unchecked(&l[0])).product());
    }
    let rv = r.value();
    let mut phi_factors = Vec::with_capacity(lists.len());
    let mut value = 1.0;
    for (l, list) in lists.iter().enumerate() {
        let fam = Family { vectors: vec![list.clone()] };
        let m = modulus(&fam, &balls[l..=l], r, &cfg.ascent, 1 << 16, None);
        value *= m.value;
        phi_factors.push(m.point[0].clone());
    }
    if lists.len() == 1 {
        return Ok(value);
    }
    let total: usize = dims.iter().product();
    let mut phi = vec![0.0; total];
    accumulate_outer(&mut phi, 1.0, &phi_factors);
    let space = TensorSpace::new(spaces.to_vec())?;
    let objective = |phi: &[f64]| -> Result<(f64, Vec<f64>)> {
        let sup = injective::form_sup_norm(&Tensor::new(space.clone(), phi.to_vec())?, &cfg.eps)?.best();
        let scaled: Vec<f64> = phi.iter().map(|v| v / sup).collect();
        Ok((lp_norm(&grid_values(&scaled, &dims, lists), r), scaled))
    };
    // Gradient moves stall on flat directions at product forms, so failed
    // gradient steps fall back to a random perturbation.
    let mut g_step = 0.2;
    let mut r_step = 0.3;
    let mut r = rng::stream(cfg.ascent.seed, &[0xF0]);
    for _ in 0..cfg.steps {
        if g_step < 1e-6 && r_step < 1e-6 {
            break;
        }
        let pn = phi.iter().map(|x| x * x).sum::<f64>().sqrt();
        let t = grid_values(&phi, &dims, lists);
        let w: Vec<f64> = t
            .iter()
            .map(|v| if *v == 0.0 { 0.0 } else { v.signum() * v.abs().powf(rv - 1.0) })
            .collect();
        let g = grid_adjoint(&w, &dims, lists);
        let gn = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if gn > 0.0 && g_step >= 1e-6 {
            let trial: Vec<f64> = phi.iter().zip(&g).map(|(a, b)| a + g_step * pn / gn * b).collect();
            let (v, scaled) = objective(&trial)?;
            if v > value {
                value = v;
                phi = scaled;
                g_step *= 1.2;
                continue;
            }
            g_step *= 0.5;
        }
        let trial: Vec<f64> = phi.iter().map(|a| a + r_step * pn * rng::normal(&mut r)).collect();
        let (v, scaled) = objective(&trial)?;
        if v > value {
            value = v;
            phi = scaled;
            r_step = (r_step * 1.5).min(1.0);
        } else {
            r_step *= 0.8;
        }
    }
    Ok(value)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaConfig {
    pub blocks: usize,
    /// Family size per factor; `None` uses the factor dimension.
    pub family_size: Option<usize>,
    pub restarts: usize,
    pub iters: usize,
    pub residual_tol: f64,
    pub seed: u64,
    pub form: FormBallConfig,
}

impl Default for BetaConfig {
    fn default() -> Self {
        BetaConfig {
            blocks: 1,
            family_size: None,
            restarts: 2,
            iters: 150,
            residual_tol: 1e-9,
            seed: 0,
            form: FormBallConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BetaUpper {
    pub value: f64,
    pub representation: GroupedDecomposition,
}

/// Minimizes `Σ_m ‖(‖b_{m,J}‖_F)_J‖_q · S_p(block m)` over grouped
/// representations of `z` on `E₁⊗···⊗Eₙ⊗F`; `F` is the last factor.
pub fn beta_p_upper(z: &Tensor, p: Exponent, cfg: &BetaConfig) -> Result<BetaUpper> {
    let space = z.space().clone();
    let all = space.dims();
    if all.len() < 2 {
        return Err(Error::InvalidArgument("beta_p needs at least one factor besides the codomain".into()));
    }
    let n = all.len() - 1;
    let dims = all[..n].to_vec();
    let df = all[n];
    let fspace = space.factor(n).clone();
    let espaces: Vec<NormedSpace> = space.factors()[..n].to_vec();
    if z.is_zero() {
        return Ok(BetaUpper { value: 0.0, representation: GroupedDecomposition::default() });
    }
    let s = z.max_abs();
    let c: Vec<f64> = z.coeffs().iter().map(|v| v / s).collect();
    let rows: usize = dims.iter().product();
    let target = DMatrix::from_row_slice(rows, df, &c);
    let q = Exponent::new(p.value()).map(|e| crate::spaces::ConjugatePair::new(e).q)?;
    let sizes: Vec<usize> = dims.iter().map(|&d| cfg.family_size.unwrap_or(d).max(1)).collect();
    let per_block: usize = sizes.iter().product();
    let nb = cfg.blocks.max(1);

    // Parameter layout: block m, factor l, member j (frozen factors fixed).
    let mut slots = Vec::new();
    for m in 0..nb {
        for l in 0..n {
            for j in 0..sizes[l] {
                slots.push((m, l, j));
            }
        }
    }
    let active: Vec<usize> = (0..slots.len()).filter(|&k| !is_frozen(&espaces[slots[k].1])).collect();
    let kinds: Vec<Block> = active.iter().map(|&k| Block::Direction(espaces[slots[k].1].clone())).collect();

    let assemble = |all_vecs: &[Vec<f64>]| -> Vec<Vec<Vec<Vec<f64>>>> {
        let mut out = vec![vec![Vec::new(); n]; nb];
        for (k, &(m, l, _)) in slots.iter().enumerate() {
            out[m][l].push(all_vecs[k].clone());
        }
        out
    };
    let fit = |fams: &[Vec<Vec<Vec<f64>>>]| -> (DMatrix<f64>, f64) {
        let mut a = DMatrix::zeros(rows, nb * per_block);
        for (m, fam) in fams.iter().enumerate() {
            for jflat in 0..per_block {
                let idx = crate::tensors::unravel(jflat, &sizes);
                let vs: Vec<Vec<f64>> = idx.iter().enumerate().map(|(l, &j)| fam[l][j].clone()).collect();
                let mut col = vec![0.0; rows];
                accumulate_outer(&mut col, 1.0, &vs);
                for (r, v) in col.into_iter().enumerate() {
                    a[(r, m * per_block + jflat)] = v;
                }
            }
        }
        search::solve(&a, &target)
    };
    let price = |fams: &[Vec<Vec<Vec<f64>>>], fcfg: &FormBallConfig| -> Option<f64> {
        let (b, res) = fit(fams);
        if !(res < cfg.residual_tol) {
            return None;
        }
        let mut total = 0.0;
        for (m, fam) in fams.iter().enumerate() {
            let norms: Vec<f64> = (0..per_block)
                .map(|j| {
                    let row: Vec<f64> = b.row(m * per_block + j).iter().copied().collect();
                    fspace.norm_unchecked(&row)
                })
                .collect();
            let bn = lp_norm(&norms, q);
            if bn == 0.0 {
                continue;
            }
            total += bn * form_ball_modulus(fam, &espaces, p, fcfg).ok()?;
        }
        Some(total)
    };

    let cheap = FormBallConfig {
        steps: cfg.form.steps.min(5),
        ascent: AscentConfig { restarts: 2, ..cfg.form.ascent },
        eps: EpsilonConfig { restarts: 4, ..cfg.form.eps },
    };
    // Leading left singular vectors of each unfolding: families of these
    // sizes span z whenever the unfolding ranks allow it.
    let hosvd: Vec<DMatrix<f64>> = (0..n)
        .map(|l| {
            let rest = c.len() / all[l];
            let mut mat = DMatrix::zeros(all[l], rest);
            for (flat, v) in c.iter().enumerate() {
                let idx = crate::tensors::unravel(flat, &all);
                let mut col = 0;
                for (k, &i) in idx.iter().enumerate() {
                    if k != l {
                        col = col * all[k] + i;
                    }
                }
                mat[(idx[l], col)] = *v;
            }
            let svd = mat.svd(true, false);
            let u = svd.u.expect("requested U");
            // Singular values come sorted; pad with the identity for full rank.
            let mut out = DMatrix::identity(all[l], all[l]);
            for k in 0..u.ncols().min(all[l]) {
                if svd.singular_values[k] > 1e-12 {
                    out.set_column(k, &u.column(k));
                }
            }
            out
        })
        .collect();
    let runs: Vec<Vec<Vec<f64>>> = (0..cfg.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut g = rng::stream(cfg.seed, &[r as u64, 0]);
            let base: Vec<Vec<f64>> = slots
                .iter()
                .map(|&(m, l, j)| {
                    let e = &espaces[l];
                    if is_frozen(e) {
                        maximize::frozen_point(e)
                    } else if r == 0 && m == 0 && j < e.dim() {
                        let v: Vec<f64> = hosvd[l].column(j).iter().copied().collect();
                        let nv = e.norm_unchecked(&v);
                        v.iter().map(|x| x / nv).collect()
                    } else {
                        e.random_unit(&mut g)
                    }
                })
                .collect();
            let f = |prm: &[Vec<f64>]| {
                let mut vecs = base.clone();
                for (p, &k) in prm.iter().zip(&active) {
                    vecs[k] = p.clone();
                }
                price(&assemble(&vecs), &cheap)
            };
            let params: Vec<Vec<f64>> = active.iter().map(|&k| base[k].clone()).collect();
            let (params, _, _) = search::pattern_minimize(params, &kinds, &f, None, cfg.iters, &mut g);
            let mut vecs = base;
            for (p, &k) in params.iter().zip(&active) {
                vecs[k] = p.clone();
            }
            vecs
        })
        .collect();
    let mut best: Option<(f64, Vec<Vec<Vec<Vec<f64>>>>)> = None;
    for vecs in runs {
        let fams = assemble(&vecs);
        if let Some(v) = price(&fams, &cfg.form) {
            if best.as_ref().map_or(true, |(b, _)| v < *b) {
                best = Some((v, fams));
            }
        }
    }
    let (value, fams) = best.ok_or(Error::NoDecomposition { rank: nb * per_block, residual: f64::NAN })?;
    let (b, _) = fit(&fams);
    let blocks = fams
        .into_iter()
        .enumerate()
        .map(|(m, families)| crate::tensors::Block {
            families,
            b: (0..per_block)
                .flat_map(|j| b.row(m * per_block + j).iter().map(|v| v * s).collect::<Vec<_>>())
                .collect(),
        })
        .collect();
    Ok(BetaUpper { value: value * s, representation: GroupedDecomposition { blocks } })
}

#[derive(Clone, Debug)]
pub struct SigmaNorm {
    pub p: Exponent,
    pub cfg: SigmaConfig,
}

impl SigmaNorm {
    pub fn new(p: f64) -> Result<Self> {
        Ok(SigmaNorm { p: Exponent::new(p)?, cfg: SigmaConfig::default() })
    }
}

impl TensorNormEvaluator for SigmaNorm {
    fn name(&self) -> String {
        format!("sigma_{}", self.p)
    }

    /// `[ε lower, σ_p upper]`: σ_p dominates the injective norm.
    fn estimate(&self, z: &Tensor) -> Result<NormEstimate> {
        if z.is_zero() {
            return Ok(NormEstimate::exact(0.0, self.cfg.seed));
        }
        let up = sigma_p_upper(z, self.p, &self.cfg)?;
        let lo = injective::epsilon_search(z, &self.cfg.eps).value.min(up.value);
        Ok(NormEstimate {
            lower: lo,
            upper: up.value,
            converged: up.certified,
            iterations: up.iterations,
            seed: self.cfg.seed,
        })
    }

    fn value(&self, z: &Tensor) -> Result<f64> {
        Ok(sigma_p_upper(z, self.p, &self.cfg)?.value)
    }

    fn dual_witnesses(&self, a: &Tensor) -> Result<Vec<Tensor>> {
        Ok(vec![sigma_p_dual(a, self.p, &self.cfg)?.witness])
    }
}

#[derive(Clone, Debug)]
pub struct BetaNorm {
    pub p: Exponent,
    pub cfg: BetaConfig,
    pub eps: EpsilonConfig,
}

impl BetaNorm {
    pub fn new(p: f64) -> Result<Self> {
        Ok(BetaNorm { p: Exponent::new(p)?, cfg: BetaConfig::default(), eps: EpsilonConfig::default() })
    }
}

impl TensorNormEvaluator for BetaNorm {
    fn name(&self) -> String {
        format!("beta_{}", self.p)
    }

    fn estimate(&self, z: &Tensor) -> Result<NormEstimate> {
        if z.is_zero() {
            return Ok(NormEstimate::exact(0.0, self.cfg.seed));
        }
        let up = beta_p_upper(z, self.p, &self.cfg)?;
        let lo = injective::epsilon_search(z, &self.eps).value.min(up.value);
        Ok(NormEstimate { lower: lo, upper: up.value, converged: false, iterations: 0, seed: self.cfg.seed })
    }

    fn value(&self, z: &Tensor) -> Result<f64> {
        Ok(beta_p_upper(z, self.p, &self.cfg)?.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensors::{random_tensor, RandomStyle};

    fn ex(p: f64) -> Exponent {
        Exponent::new(p).unwrap()
    }

    #[test]
    fn family_modulus_examples() {
        let spaces = vec![NormedSpace::ellp(2, 2.0).unwrap(), NormedSpace::ellp(3, 1.5).unwrap()];
        let x = vec![3.0, 4.0];
        let y = vec![1.0, -2.0, 0.5];
        let ny = spaces[1].norm(&y).unwrap();
        let cfg = AscentConfig::default();
        let one = Family { vectors: vec![vec![x.clone()], vec![y.clone()]] };
        let v = family_modulus_p(&one, &spaces, ex(1.5), &cfg, 1 << 16).unwrap().lower;
        assert!((v - 5.0 * ny).abs() < 1e-12 * v);
        let two = Family { vectors: vec![vec![x.clone(), x], vec![y.clone(), y]] };
        let v = family_modulus_p(&two, &spaces, ex(1.5), &cfg, 1 << 16).unwrap().lower;
        let want = 2f64.powf(1.0 / 1.5) * 5.0 * ny;
        assert!((v - want).abs() < 1e-12 * want);
        let empty = Family { vectors: vec![Vec::new(), Vec::new()] };
        assert!(family_modulus_p(&empty, &spaces, ex(2.0), &cfg, 1 << 16).is_err());
    }

    #[test]
    fn family_modulus_on_l1_matches_enumeration() {
        // Independent oracle: enumerate sign vectors of the ℓ∞ dual balls.
        let spaces = vec![NormedSpace::ellp(2, 1.0).unwrap(), NormedSpace::ellp(3, 1.0).unwrap()];
        let mut r = rng::rng(3);
        for _ in 0..5 {
            let fam = Family {
                vectors: vec![
                    (0..3).map(|_| rng::normal_vec(&mut r, 2)).collect(),
                    (0..3).map(|_| rng::normal_vec(&mut r, 3)).collect(),
                ],
            };
            for p in [1.0, 1.5, 2.0] {
                let mut oracle = 0.0f64;
                for a in 0..4u32 {
                    for b in 0..8u32 {
                        let sa: Vec<f64> = (0..2).map(|k| if a >> k & 1 == 1 { -1.0 } else { 1.0 }).collect();
                        let sb: Vec<f64> = (0..3).map(|k| if b >> k & 1 == 1 { -1.0 } else { 1.0 }).collect();
                        let s: f64 = (0..3)
                            .map(|j| {
                                let u: f64 = (0..2).map(|k| sa[k] * fam.vectors[0][j][k]).sum();
                                let v: f64 = (0..3).map(|k| sb[k] * fam.vectors[1][j][k]).sum();
                                (u * v).abs().powf(p)
                            })
                            .sum();
                        oracle = oracle.max(s.powf(1.0 / p));
                    }
                }
                let est = maximize::psum_max(&fam, &[spaces[0].dual(), spaces[1].dual()], p, &AscentConfig::default(), None);
                assert!((est.value - oracle).abs() <= 1e-9 * oracle, "{} vs {oracle}", est.value);
                let exact = family_modulus_p(&fam, &spaces, ex(p), &AscentConfig::default(), 1 << 16).unwrap();
                assert!((exact.lower - oracle).abs() <= 1e-12 * oracle);
            }
        }
    }

    #[test]
    fn modulus_is_monotone_in_the_family() {
        let spaces = vec![NormedSpace::ellp(2, 3.0).unwrap(), NormedSpace::ellp(2, 1.5).unwrap()];
        let mut r = rng::rng(5);
        let mut fam = Family { vectors: vec![Vec::new(), Vec::new()] };
        let mut prev = 0.0;
        for _ in 0..5 {
            fam.vectors[0].push(rng::normal_vec(&mut r, 2));
            fam.vectors[1].push(rng::normal_vec(&mut r, 2));
            let v = family_modulus_p(&fam, &spaces, ex(2.0), &AscentConfig::default(), 1 << 16).unwrap().lower;
            assert!(v >= prev - 1e-12);
            prev = v;
        }
    }

    #[test]
    fn sigma_elementary_and_zero() {
        let s = TensorSpace::new(vec![NormedSpace::ellp(2, 1.5).unwrap(), NormedSpace::ellp(3, 3.0).unwrap()]).unwrap();
        let vs = vec![vec![0.3, -1.0], vec![2.0, 0.1, -0.7]];
        let want: f64 = vs.iter().zip(s.factors()).map(|(v, f)| f.norm(v).unwrap()).product();
        let z = Tensor::elementary(s.clone(), &vs).unwrap();
        for p in [1.0, 1.5, 2.0] {
            let v = sigma_p_upper(&z, ex(p), &SigmaConfig::default()).unwrap().value;
            assert!((v - want).abs() <= 1e-6 * want, "p {p}: {v} vs {want}");
        }
        assert_eq!(sigma_p_upper(&Tensor::zeros(s), ex(2.0), &SigmaConfig::default()).unwrap().value, 0.0);
    }

    #[test]
    fn sigma_sits_between_injective_and_projective() {
        let s = TensorSpace::ellp(&[2, 2], 2.0).unwrap();
        for seed in 0..4 {
            let z = random_tensor(&s, seed, RandomStyle::Dense);
            let e = injective::epsilon_matrix_oracle(&z).unwrap();
            let pi = crate::projective::pi_matrix_oracle(&z).unwrap();
            for p in [1.0, 2.0] {
                let v = sigma_p_upper(&z, ex(p), &SigmaConfig::default()).unwrap().value;
                assert!(e <= v + 1e-9 && v <= pi * (1.0 + 1e-6), "p {p}: {e} {v} {pi}");
            }
        }
    }

    #[test]
    fn sigma_representation_reconstructs() {
        let s = TensorSpace::ellp(&[2, 3], 1.5).unwrap();
        let z = random_tensor(&s, 7, RandomStyle::Dense);
        let up = sigma_p_upper(&z, ex(1.5), &SigmaConfig::default()).unwrap();
        let diff = up.decomposition.to_tensor(&s).unwrap().add(&z.scaled(-1.0)).unwrap().coeff_norm();
        assert!(diff < 1e-8, "{diff}");
    }

    #[test]
    fn semi_integral_of_product_form_is_one() {
        let s = TensorSpace::ellp(&[2, 2], 2.0).unwrap();
        let a = Tensor::elementary(s.clone(), &[vec![0.6, 0.8], vec![1.0, 0.0]]).unwrap();
        let cfg = SigmaConfig { restarts: 2, family_max: 3, ..SigmaConfig::default() };
        let v = sigma_p_dual(&a, ex(2.0), &cfg).unwrap().value;
        assert!((v - 1.0).abs() < 1e-6, "{v}");
        assert_eq!(sigma_p_dual(&Tensor::zeros(s), ex(2.0), &cfg).unwrap().value, 0.0);
    }

    #[test]
    fn form_ball_modulus_of_one_factor_is_family_modulus() {
        let spaces = vec![NormedSpace::ellp(3, 1.5).unwrap()];
        let mut r = rng::rng(2);
        let list: Vec<Vec<f64>> = (0..3).map(|_| rng::normal_vec(&mut r, 3)).collect();
        let a = form_ball_modulus(&[list.clone()], &spaces, ex(2.0), &FormBallConfig::default()).unwrap();
        let b = family_modulus_p(&Family { vectors: vec![list] }, &spaces, ex(2.0), &AscentConfig::default(), 1 << 16)
            .unwrap()
            .lower;
        assert!((a - b).abs() <= 1e-9 * b);
    }

    #[test]
    fn form_ball_modulus_dominates_product_forms() {
        // Identity pairs on ℓ2²×ℓ2²: the form ball contains the trace form.
        let spaces = vec![NormedSpace::ellp(2, 2.0).unwrap(), NormedSpace::ellp(2, 2.0).unwrap()];
        let basis = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let cfg = FormBallConfig { steps: 300, ..FormBallConfig::default() };
        let v = form_ball_modulus(&[basis.clone(), basis], &spaces, ex(2.0), &cfg).unwrap();
        // The sup of the Frobenius norm over the operator-norm ball is √2.
        assert!((v - 2f64.sqrt()).abs() < 1e-3, "{v}");
    }

    #[test]
    fn beta_elementary_and_zero() {
        let s = TensorSpace::new(vec![NormedSpace::ellp(2, 2.0).unwrap(), NormedSpace::ellp(2, 1.0).unwrap()]).unwrap();
        let vs = vec![vec![0.6, 0.8], vec![2.0, -1.0]];
        let z = Tensor::elementary(s.clone(), &vs).unwrap();
        let cfg = BetaConfig { family_size: Some(1), ..BetaConfig::default() };
        let v = beta_p_upper(&z, ex(2.0), &cfg).unwrap().value;
        assert!((v - 3.0).abs() < 1e-6, "{v}");
        assert_eq!(beta_p_upper(&Tensor::zeros(s), ex(2.0), &BetaConfig::default()).unwrap().value, 0.0);
    }

    #[test]
    fn beta_representation_reconstructs() {
        let s = TensorSpace::ellp(&[2, 2, 1], 2.0).unwrap();
        let z = random_tensor(&s, 1, RandomStyle::Dense);
        let up = beta_p_upper(&z, ex(2.0), &BetaConfig::default()).unwrap();
        let back = up.representation.to_tensor(&s).unwrap();
        assert!(back.add(&z.scaled(-1.0)).unwrap().coeff_norm() < 1e-8);
        assert!(up.value >= injective::epsilon_search(&z, &EpsilonConfig::default()).value - 1e-9);
    }
}
