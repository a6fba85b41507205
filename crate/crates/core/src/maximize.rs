//! Maximization of multilinear expressions over products of unit balls.
//!
//! Two objectives appear throughout: `|⟨z, f₁⊗···⊗fₙ⟩|` (the injective
//! norm and every sup norm) and the p-sum `(Σ_j |Π_l ⟨f_l, x_lj⟩|^p)^{1/p}`
//! over an aligned family of vectors. Both are maximized by block
//! coordinate ascent in which every block step is a closed-form norming
//! point, so each sweep is monotone.
//!
//! Balls of dimension one are frozen at their positive extreme point and
//! consume no random draws. Contractions run from the last axis backwards,
//! so a trailing scalar factor contributes an exact multiplication by one
//! and a search on `E₁⊗···⊗Eₙ⊗K` performs the same floating-point
//! operations as the search on `E₁⊗···⊗Eₙ`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng;
use crate::spaces::{dot, Exponent, NormedSpace};

/// Sums out one axis against `f`.
pub(crate) fn contract_axis(buf: &[f64], dims: &[usize], axis: usize, f: &[f64]) -> Vec<f64> {
    let d = dims[axis];
    let outer: usize = dims[..axis].iter().product();
    let inner: usize = dims[axis + 1..].iter().product();
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        for i in 0..d {
            let fi = f[i];
            let src = (o * d + i) * inner;
            let dst = o * inner;
            for k in 0..inner {
                out[dst + k] += buf[src + k] * fi;
            }
        }
    }
    out
}

/// `⟨z, f₁⊗···⊗fₙ⟩`, contracting from the last axis.
pub(crate) fn contract_all(coeffs: &[f64], dims: &[usize], fs: &[Vec<f64>]) -> f64 {
    let mut buf = coeffs.to_vec();
    for axis in (0..dims.len()).rev() {
        buf = contract_axis(&buf, &dims[..=axis], axis, &fs[axis]);
    }
    buf[0]
}

/// The vector `g` with `⟨g, f_l⟩ = ⟨z, f₁⊗···⊗fₙ⟩`.
pub(crate) fn contract_except(coeffs: &[f64], dims: &[usize], fs: &[Vec<f64>], l: usize) -> Vec<f64> {
    let mut buf = coeffs.to_vec();
    let n = dims.len();
    for axis in (l + 1..n).rev() {
        buf = contract_axis(&buf, &dims[..=axis], axis, &fs[axis]);
    }
    let mut rest = dims[..=l].to_vec();
    for f in fs.iter().take(l) {
        buf = contract_axis(&buf, &rest, 0, f);
        rest.remove(0);
    }
    buf
}

/// The point a dimension-one ball is frozen at.
pub(crate) fn frozen_point(ball: &NormedSpace) -> Vec<f64> {
    ball.norming_point(&[1.0])
}

pub(crate) fn is_frozen(ball: &NormedSpace) -> bool {
    ball.dim() == 1
}

/// Search parameters shared by all multi-start ascents.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AscentConfig {
    pub restarts: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for AscentConfig {
    fn default() -> Self {
        AscentConfig {
            restarts: 32,
            max_iters: 2000,
            tol: 1e-13,
            seed: 0,
        }
    }
}

/// Outcome of one ascent or of the best of several.
#[derive(Clone, Debug, PartialEq)]
pub struct Run {
    pub value: f64,
    pub point: Vec<Vec<f64>>,
    pub iterations: u64,
    pub converged: bool,
}

/// Best run by value; ties go to the earliest run so the merge does not
/// depend on scheduling.
fn merge_best(runs: Vec<Run>) -> Run {
    let iterations = runs.iter().map(|r| r.iterations).sum();
    let mut best: Option<Run> = None;
    for r in runs {
        match &best {
            Some(b) if !(r.value > b.value) => {}
            _ => best = Some(r),
        }
    }
    let mut best = best.expect("at least one run");
    best.iterations = iterations;
    best
}

fn random_point(balls: &[NormedSpace], r: &mut rng::Rng) -> Vec<Vec<f64>> {
    balls
        .iter()
        .map(|b| if is_frozen(b) { frozen_point(b) } else { b.random_unit(r) })
        .collect()
}

/// Tracks the stopping rule: relative improvement below `tol` for three
/// consecutive sweeps.
struct Stall {
    count: usize,
}

impl Stall {
    fn update(&mut self, old: f64, new: f64, tol: f64) -> bool {
        if new - old <= tol * new.abs().max(f64::MIN_POSITIVE) {
            self.count += 1;
        } else {
            self.count = 0;
        }
        self.count >= 3
    }
}

/// Alternating maximization of `|⟨z, f₁⊗···⊗fₙ⟩|` with `f_l ∈ B_{balls[l]}`.
pub fn alternating_max(
    coeffs: &[f64],
    dims: &[usize],
    balls: &[NormedSpace],
    init: Vec<Vec<f64>>,
    max_iters: usize,
    tol: f64,
) -> Run {
    let mut fs = init;
    let active: Vec<usize> = (0..balls.len()).filter(|&l| !is_frozen(&balls[l])).collect();
    let mut value = contract_all(coeffs, dims, &fs).abs();
    if active.is_empty() {
        return Run { value, point: fs, iterations: 0, converged: true };
    }
    let mut stall = Stall { count: 0 };
    let mut iters = 0;
    let mut converged = false;
    while iters < max_iters {
        iters += 1;
        let old = value;
        for &l in &active {
            let g = contract_except(coeffs, dims, &fs, l);
            let f = balls[l].norming_point(&g);
            let v = dot(&g, &f);
            if v >= value {
                fs[l] = f;
                value = v;
            }
        }
        if stall.update(old, value, tol) {
            converged = true;
            break;
        }
    }
    Run { value, point: fs, iterations: iters as u64, converged }
}

/// Restart 0 starts from the norming points of the largest coefficient's
/// coordinate vectors; the others are random.
pub fn multistart_max(coeffs: &[f64], dims: &[usize], balls: &[NormedSpace], cfg: &AscentConfig) -> Run {
    let runs: Vec<Run> = (0..cfg.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let init = if r == 0 {
                largest_entry_start(coeffs, dims, balls)
            } else {
                random_point(balls, &mut rng::stream(cfg.seed, &[r as u64]))
            };
            alternating_max(coeffs, dims, balls, init, cfg.max_iters, cfg.tol)
        })
        .collect();
    merge_best(runs)
}

fn largest_entry_start(coeffs: &[f64], dims: &[usize], balls: &[NormedSpace]) -> Vec<Vec<f64>> {
    let mut k = 0;
    for (i, c) in coeffs.iter().enumerate() {
        if c.abs() > coeffs[k].abs() {
            k = i;
        }
    }
    let idx = crate::tensors::unravel(k, dims);
    balls
        .iter()
        .zip(idx)
        .map(|(b, i)| {
            if is_frozen(b) {
                frozen_point(b)
            } else {
                let mut e = vec![0.0; b.dim()];
                e[i] = 1.0;
                b.norming_point(&e)
            }
        })
        .collect()
}

fn product_count(counts: &[usize]) -> u128 {
    counts.iter().map(|&c| c as u128).product()
}

fn for_each_index(counts: &[usize], mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0; counts.len()];
    if counts.iter().any(|&c| c == 0) {
        return;
    }
    loop {
        f(&idx);
        let mut k = counts.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < counts[k] {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Candidate points per ball: half the extreme points for polyhedral balls
/// (the objectives are even in each block), a normalized grid otherwise.
/// Returns the points and the covering radius `δ` in the ball norm.
fn candidate_points(ball: &NormedSpace, resolution: usize) -> Result<(Vec<Vec<f64>>, f64)> {
    if is_frozen(ball) {
        return Ok((vec![frozen_point(ball)], 0.0));
    }
    if ball.is_polyhedral() {
        return Ok((ball.half_extreme_points()?, 0.0));
    }
    let d = ball.dim();
    let r = resolution.max(1);
    let side = 2 * r + 1;
    let count = (side as u128).pow(d as u32);
    if count > 1 << 24 {
        return Err(Error::BudgetExceeded { needed: count, budget: 1 << 24 });
    }
    let w: Vec<f64> = match ball.weights() {
        Some(w) => w.to_vec(),
        None => vec![1.0; d],
    };
    let mut pts = Vec::new();
    for_each_index(&vec![side; d], |idx| {
        let y: Vec<f64> = idx.iter().map(|&k| (k as f64 - r as f64) / r as f64).collect();
        if y.iter().all(|v| *v == 0.0) {
            return;
        }
        // Keep one of each ± pair: first nonzero coordinate positive.
        if y.iter().find(|v| **v != 0.0).copied().unwrap_or(0.0) < 0.0 {
            return;
        }
        let x: Vec<f64> = y.iter().zip(&w).map(|(a, b)| a / b).collect();
        let n = ball.norm_unchecked(&x);
        pts.push(x.iter().map(|v| v / n).collect());
    });
    let delta = match ball.p() {
        Exponent::Infinity => 1.0 / r as f64,
        Exponent::Finite(p) => (d as f64).powf(1.0 / p) / r as f64,
    };
    Ok((pts, delta))
}

/// The block solved in closed form during enumeration: the last
/// non-polyhedral ball, else the polyhedral ball with the most candidates.
fn free_block(balls: &[NormedSpace]) -> Option<usize> {
    let active: Vec<usize> = (0..balls.len()).filter(|&l| !is_frozen(&balls[l])).collect();
    if let Some(&l) = active.iter().rev().find(|&&l| !balls[l].is_polyhedral()) {
        return Some(l);
    }
    let mut best: Option<(usize, usize)> = None;
    for &l in &active {
        let c = balls[l].half_extreme_points().map(|v| v.len()).unwrap_or(usize::MAX);
        if best.map_or(true, |(_, bc)| c > bc) {
            best = Some((l, c));
        }
    }
    best.map(|(l, _)| l)
}

/// Exact maximum of `|⟨z, f₁⊗···⊗fₙ⟩|` when at most one active ball is not
/// polyhedral. Every candidate tuple is visited; the free block is solved in
/// closed form.
pub fn enumerate_max(coeffs: &[f64], dims: &[usize], balls: &[NormedSpace], budget: u128) -> Result<Run> {
    let free = free_block(balls);
    let nonpoly = (0..balls.len())
        .filter(|&l| !is_frozen(&balls[l]) && !balls[l].is_polyhedral())
        .count();
    if nonpoly > 1 {
        return Err(Error::Unsupported(
            "exact enumeration needs all but one ball polyhedral".into(),
        ));
    }
    let mut cands = Vec::with_capacity(balls.len());
    for (l, b) in balls.iter().enumerate() {
        if Some(l) == free {
            cands.push(vec![vec![0.0; b.dim()]]);
        } else {
            cands.push(candidate_points(b, 1)?.0);
        }
    }
    grid_search(coeffs, dims, balls, &cands, free, budget)
}

fn grid_search(
    coeffs: &[f64],
    dims: &[usize],
    balls: &[NormedSpace],
    cands: &[Vec<Vec<f64>>],
    free: Option<usize>,
    budget: u128,
) -> Result<Run> {
    let counts: Vec<usize> = cands.iter().map(|c| c.len()).collect();
    let needed = product_count(&counts);
    if needed > budget {
        return Err(Error::BudgetExceeded { needed, budget });
    }
    let mut best = Run { value: -1.0, point: Vec::new(), iterations: needed as u64, converged: true };
    for_each_index(&counts, |idx| {
        let mut fs: Vec<Vec<f64>> = idx.iter().enumerate().map(|(l, &i)| cands[l][i].clone()).collect();
        let v = match free {
            Some(l) => {
                let g = contract_except(coeffs, dims, &fs, l);
                fs[l] = balls[l].norming_point(&g);
                dot(&g, &fs[l])
            }
            None => contract_all(coeffs, dims, &fs).abs(),
        };
        if v > best.value {
            best.value = v;
            best.point = fs;
        }
    });
    Ok(best)
}

/// Grid bracket `[lower, upper]` on the sup of `|⟨z, f₁⊗···⊗fₙ⟩|`.
///
/// One active ball is solved in closed form; polyhedral balls contribute
/// their extreme points and smooth balls a normalized grid with covering
/// radius `δ_l`. With `P = Π(1+δ_l)` the true sup `M` satisfies
/// `M ≤ lower + (P-1)·M`, hence `M ≤ lower·P/(2-P)` when `P < 2`.
pub fn grid_max(
    coeffs: &[f64],
    dims: &[usize],
    balls: &[NormedSpace],
    resolution: usize,
    budget: u128,
) -> Result<(Run, f64)> {
    let free = (0..balls.len())
        .filter(|&l| !is_frozen(&balls[l]))
        .max_by_key(|&l| (!balls[l].is_polyhedral(), balls[l].dim()));
    let mut cands = Vec::with_capacity(balls.len());
    let mut slack = 1.0;
    for (l, b) in balls.iter().enumerate() {
        if Some(l) == free {
            cands.push(vec![vec![0.0; b.dim()]]);
        } else {
            let (pts, delta) = candidate_points(b, resolution)?;
            slack *= 1.0 + delta;
            cands.push(pts);
        }
    }
    let run = grid_search(coeffs, dims, balls, &cands, free, budget)?;
    let upper = if slack < 2.0 {
        run.value * slack / (2.0 - slack)
    } else {
        f64::INFINITY
    };
    Ok((run, upper))
}

/// An aligned family: `vectors[l][j]` is the `j`-th vector of factor `l`.
#[derive(Clone, Debug, PartialEq)]
pub struct Family {
    pub vectors: Vec<Vec<Vec<f64>>>,
}

impl Family {
    pub fn len(&self) -> usize {
        self.vectors.first().map_or(0, |v| v.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn order(&self) -> usize {
        self.vectors.len()
    }
}

/// `|t|^{p-1}·sign(t)` with the subgradient 0 at `t = 0` for `p = 1`.
fn dual_power(t: f64, p: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else if p == 1.0 {
        t.signum()
    } else if p == 2.0 {
        t
    } else {
        t.signum() * t.abs().powf(p - 1.0)
    }
}

pub(crate) fn pth_power_sum(values: impl Iterator<Item = f64>, p: f64) -> f64 {
    if p == 1.0 {
        values.map(f64::abs).sum()
    } else if p == 2.0 {
        values.map(|v| v * v).sum()
    } else {
        values.map(|v| v.abs().powf(p)).sum()
    }
}

pub(crate) fn pth_root(s: f64, p: f64) -> f64 {
    if p == 1.0 {
        s
    } else if p == 2.0 {
        s.sqrt()
    } else {
        s.powf(1.0 / p)
    }
}

/// Pairings `a[l][j] = ⟨f_l, x_lj⟩`.
fn pairings(fam: &Family, fs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    fam.vectors
        .iter()
        .zip(fs)
        .map(|(xs, f)| xs.iter().map(|x| dot(f, x)).collect())
        .collect()
}

/// `Π_{k≠skip} a[k][j]` in factor order.
fn term_products(a: &[Vec<f64>], m: usize, skip: Option<usize>) -> Vec<f64> {
    (0..m)
        .map(|j| {
            a.iter()
                .enumerate()
                .filter(|(k, _)| Some(*k) != skip)
                .fold(1.0, |acc, (_, row)| acc * row[j])
        })
        .collect()
}

/// `Σ_j |Π_l ⟨f_l, x_lj⟩|^p` (the p-th power of the p-sum).
pub fn psum_power(fam: &Family, fs: &[Vec<f64>], p: f64) -> f64 {
    let a = pairings(fam, fs);
    pth_power_sum(term_products(&a, fam.len(), None).into_iter(), p)
}

/// Block generalized power method for the p-sum over `Π B_{balls[l]}`.
/// Each block objective is convex, so the norming point of its gradient
/// never decreases it.
pub fn psum_ascent(
    fam: &Family,
    balls: &[NormedSpace],
    p: f64,
    init: Vec<Vec<f64>>,
    max_iters: usize,
    tol: f64,
) -> Run {
    let m = fam.len();
    let mut fs = init;
    let active: Vec<usize> = (0..balls.len()).filter(|&l| !is_frozen(&balls[l])).collect();
    let mut a = pairings(fam, &fs);
    let mut value = pth_power_sum(term_products(&a, m, None).into_iter(), p);
    let mut stall = Stall { count: 0 };
    let mut iters = 0;
    let mut converged = active.is_empty();
    while !converged && iters < max_iters {
        iters += 1;
        let old = value;
        for &l in &active {
            let c = term_products(&a, m, Some(l));
            let mut g = vec![0.0; balls[l].dim()];
            for j in 0..m {
                let w = dual_power(c[j] * a[l][j], p) * c[j];
                if w != 0.0 {
                    for (gi, xi) in g.iter_mut().zip(&fam.vectors[l][j]) {
                        *gi += w * xi;
                    }
                }
            }
            if g.iter().all(|v| *v == 0.0) {
                continue;
            }
            let f = balls[l].norming_point(&g);
            let row: Vec<f64> = fam.vectors[l].iter().map(|x| dot(&f, x)).collect();
            let v = pth_power_sum(c.iter().zip(&row).map(|(ci, ai)| ci * ai), p);
            if v >= value {
                fs[l] = f;
                a[l] = row;
                value = v;
            }
        }
        if stall.update(old, value, tol) {
            converged = true;
        }
    }
    Run { value: pth_root(value, p), point: fs, iterations: iters as u64, converged }
}

/// Norming start at the family member with the largest product of norms.
pub(crate) fn psum_norming_start(fam: &Family, balls: &[NormedSpace]) -> Vec<Vec<f64>> {
    let m = fam.len();
    let mut best = 0;
    let mut best_val = -1.0;
    for j in 0..m {
        let v = balls
            .iter()
            .enumerate()
            .fold(1.0, |acc, (l, b)| acc * b.dual().norm_unchecked(&fam.vectors[l][j]));
        if v > best_val {
            best_val = v;
            best = j;
        }
    }
    balls
        .iter()
        .enumerate()
        .map(|(l, b)| {
            if is_frozen(b) {
                frozen_point(b)
            } else {
                b.norming_point(&fam.vectors[l][best])
            }
        })
        .collect()
}

/// Multi-start p-sum maximization: the norming start, an optional warm
/// start and `restarts - 1` random starts.
pub fn psum_max(
    fam: &Family,
    balls: &[NormedSpace],
    p: f64,
    cfg: &AscentConfig,
    warm: Option<&[Vec<f64>]>,
) -> Run {
    let mut starts = vec![psum_norming_start(fam, balls)];
    if let Some(w) = warm {
        starts.push(w.to_vec());
    }
    for r in 1..cfg.restarts.max(1) {
        starts.push(random_point(balls, &mut rng::stream(cfg.seed, &[r as u64])));
    }
    let runs: Vec<Run> = starts
        .into_par_iter()
        .map(|s| psum_ascent(fam, balls, p, s, cfg.max_iters, cfg.tol))
        .collect();
    merge_best(runs)
}

/// Exact p-sum maximum over polyhedral balls. The objective is convex in
/// each block, so its maximum is attained at a tuple of extreme points.
pub fn psum_enumerate(fam: &Family, balls: &[NormedSpace], p: f64, budget: u128) -> Result<Run> {
    if balls.iter().any(|b| !b.is_polyhedral()) {
        return Err(Error::Unsupported("p-sum enumeration needs polyhedral balls".into()));
    }
    let cands: Vec<Vec<Vec<f64>>> = balls
        .iter()
        .map(|b| candidate_points(b, 1).map(|c| c.0))
        .collect::<Result<_>>()?;
    let counts: Vec<usize> = cands.iter().map(|c| c.len()).collect();
    let needed = product_count(&counts);
    if needed > budget {
        return Err(Error::BudgetExceeded { needed, budget });
    }
    let mut best = Run { value: -1.0, point: Vec::new(), iterations: needed as u64, converged: true };
    for_each_index(&counts, |idx| {
        let fs: Vec<Vec<f64>> = idx.iter().enumerate().map(|(l, &i)| cands[l][i].clone()).collect();
        let v = psum_power(fam, &fs, p);
        if v > best.value {
            best.value = v;
            best.point = fs;
        }
    });
    best.value = pth_root(best.value, p);
    Ok(best)
}
