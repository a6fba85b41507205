//! The injective norm `ε(z) = sup |⟨z, φ₁⊗···⊗φₙ⟩|` over the dual unit balls.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::maximize::{self, AscentConfig, Run};
use crate::spaces::{Exponent, NormedSpace};
use crate::tensors::{LinearOperator, NormEstimate, Tensor, TensorNormEvaluator};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsilonConfig {
    pub restarts: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub grid_resolution: usize,
    pub seed: u64,
    /// Largest number of candidate tuples an exact enumeration may visit.
    pub enumeration_budget: u128,
    /// Attach an enumeration certificate as the upper bound when affordable.
    pub certify: bool,
}

impl Default for EpsilonConfig {
    fn default() -> Self {
        EpsilonConfig {
            restarts: 32,
            max_iters: 2000,
            tol: 1e-13,
            grid_resolution: 32,
            seed: 0,
            enumeration_budget: 1 << 20,
            certify: true,
        }
    }
}

impl EpsilonConfig {
    pub fn ascent(&self) -> AscentConfig {
        AscentConfig {
            restarts: self.restarts,
            max_iters: self.max_iters,
            tol: self.tol,
            seed: self.seed,
        }
    }
}

fn dual_balls(z: &Tensor) -> Vec<NormedSpace> {
    z.space().factors().iter().map(|f| f.dual()).collect()
}

fn normalized(z: &Tensor) -> (Vec<f64>, f64) {
    let s = z.max_abs();
    (z.coeffs().iter().map(|c| c / s).collect(), s)
}

/// Best alternating-maximization run on the normalized tensor; the value
/// and the maximizing functionals, with the value rescaled.
pub fn epsilon_search(z: &Tensor, cfg: &EpsilonConfig) -> Run {
    if z.is_zero() {
        let point = z.dims().iter().map(|&d| vec![0.0; d]).collect();
        return Run { value: 0.0, point, iterations: 0, converged: true };
    }
    let (c, s) = normalized(z);
    let mut run = maximize::multistart_max(&c, &z.dims(), &dual_balls(z), &cfg.ascent());
    run.value *= s;
    run
}

/// Lower bound from multi-start alternating maximization; the upper bound
/// is an exact enumeration certificate when one is affordable, else `+∞`.
pub fn epsilon_estimate(z: &Tensor, cfg: &EpsilonConfig) -> Result<NormEstimate> {
    if z.is_zero() {
        return Ok(NormEstimate::exact(0.0, cfg.seed));
    }
    let run = epsilon_search(z, cfg);
    let mut est = NormEstimate::lower_only(run.value, run.converged, run.iterations, cfg.seed);
    if cfg.certify {
        let (c, s) = normalized(z);
        if let Ok(exact) = maximize::enumerate_max(&c, &z.dims(), &dual_balls(z), cfg.enumeration_budget) {
            est.upper = (exact.value * s).max(est.lower);
            est.converged = est.upper - est.lower <= cfg.tol.max(1e-12) * est.upper;
        }
    }
    Ok(est)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BruteForceMode {
    /// Extreme-point enumeration; all but one dual ball polyhedral.
    Exact,
    /// Grid over the smooth balls with a Lipschitz upper bound.
    Grid,
    /// Exact when possible, grid otherwise.
    Auto,
}

pub fn epsilon_bruteforce(z: &Tensor, cfg: &EpsilonConfig, mode: BruteForceMode) -> Result<NormEstimate> {
    if z.is_zero() {
        return Ok(NormEstimate::exact(0.0, cfg.seed));
    }
    let (c, s) = normalized(z);
    let balls = dual_balls(z);
    let exact = || -> Result<NormEstimate> {
        let run = maximize::enumerate_max(&c, &z.dims(), &balls, cfg.enumeration_budget)?;
        let mut e = NormEstimate::exact(run.value * s, cfg.seed);
        e.iterations = run.iterations;
        Ok(e)
    };
    let grid = || -> Result<NormEstimate> {
        let (run, upper) =
            maximize::grid_max(&c, &z.dims(), &balls, cfg.grid_resolution, cfg.enumeration_budget)?;
        Ok(NormEstimate {
            lower: run.value * s,
            upper: upper * s,
            converged: upper.is_finite(),
            iterations: run.iterations,
            seed: cfg.seed,
        })
    };
    match mode {
        BruteForceMode::Exact => exact(),
        BruteForceMode::Grid => grid(),
        BruteForceMode::Auto => match exact() {
            Err(Error::Unsupported(_)) => grid(),
            r => r,
        },
    }
}

fn coefficient_matrix_l2(z: &Tensor) -> Result<DMatrix<f64>> {
    // Unweighted one-dimensional factors carry |λ| and do not change the
    // coefficient order, so they are skipped.
    let f: Vec<&NormedSpace> = z
        .space()
        .factors()
        .iter()
        .filter(|s| s.dim() > 1 || s.weights().is_some())
        .collect();
    let hilbert = |s: &&NormedSpace| s.p() == Exponent::Finite(2.0) && s.weights().is_none();
    if f.len() != 2 || !f.iter().all(hilbert) {
        return Err(Error::Unsupported(format!(
            "matrix oracle needs two unweighted l2 factors, got {}",
            z.space().describe()
        )));
    }
    Ok(DMatrix::from_row_slice(f[0].dim(), f[1].dim(), z.coeffs()))
}

/// Largest singular value of the coefficient matrix.
pub fn epsilon_matrix_oracle(z: &Tensor) -> Result<f64> {
    Ok(coefficient_matrix_l2(z)?.singular_values().max())
}

/// Sum of singular values of the coefficient matrix.
pub(crate) fn nuclear_matrix_oracle(z: &Tensor) -> Result<f64> {
    Ok(coefficient_matrix_l2(z)?.singular_values().sum())
}

/// `‖u‖` as the injective norm of `u` on `codomain ⊗ domain'`.
pub fn operator_norm(u: &LinearOperator, cfg: &EpsilonConfig) -> Result<NormEstimate> {
    let t = u.as_tensor()?;
    if let Ok(v) = epsilon_matrix_oracle(&t) {
        return Ok(NormEstimate::exact(v, cfg.seed));
    }
    epsilon_estimate(&t, cfg)
}

/// Sup norm of the form with coefficient tensor `a` over the unit balls of
/// `a`'s factors: the injective norm of `a` read on the dual spaces.
pub fn form_sup_norm(a: &Tensor, cfg: &EpsilonConfig) -> Result<NormEstimate> {
    let t = a.reinterpret(a.space().dual())?;
    if let Ok(v) = epsilon_matrix_oracle(&t) {
        return Ok(NormEstimate::exact(v, cfg.seed));
    }
    epsilon_estimate(&t, cfg)
}

/// The maximizing unit vectors of a form's sup norm.
pub fn form_sup_search(a: &Tensor, cfg: &EpsilonConfig) -> Result<Run> {
    Ok(epsilon_search(&a.reinterpret(a.space().dual())?, cfg))
}

#[derive(Clone, Debug, Default)]
pub struct EpsilonNorm {
    pub cfg: EpsilonConfig,
    pub pi: crate::projective::ProjectiveConfig,
}

impl TensorNormEvaluator for EpsilonNorm {
    fn name(&self) -> String {
        "eps".into()
    }

    fn estimate(&self, z: &Tensor) -> Result<NormEstimate> {
        epsilon_estimate(z, &self.cfg)
    }

    fn value(&self, z: &Tensor) -> Result<f64> {
        Ok(epsilon_search(z, &self.cfg).value)
    }

    /// The dual of ε is π on the dual spaces; its lower-bound certificate
    /// is a tensor of injective norm at most one that nearly norms `a`.
    fn dual_witnesses(&self, a: &Tensor) -> Result<Vec<Tensor>> {
        let cert = crate::projective::pi_lower(&a.reinterpret(a.space().dual())?, &self.pi)?;
        cert.certificate.map(|c| c.reinterpret(a.space().clone())).into_iter().collect()
    }
}
