//! Multilinear maps between finite-dimensional spaces and the ideal norms
//! built on them: the sup norm, linearization norms `‖·‖_{L_β}`, the
//! strongly multiple (p,q)-summing norm, and the scalar-slot adjunction.

use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::injective::{self, EpsilonConfig};
use crate::rng;
use crate::search::{self, Block};
use crate::sigma::{form_ball_modulus, FormBallConfig};
use crate::spaces::{lp_norm, Exponent, NormedSpace};
use crate::tensors::{accumulate_outer, transform_axis, LinearOperator, NormEstimate, Tensor, TensorNormEvaluator, TensorSpace};

/// `A ∈ L(E₁,…,Eₙ;F)` with coefficients indexed by `(i₁,…,iₙ, out)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MultilinearMap {
    domain: Vec<NormedSpace>,
    codomain: NormedSpace,
    coeffs: Vec<f64>,
}

impl MultilinearMap {
    pub fn new(domain: Vec<NormedSpace>, codomain: NormedSpace, coeffs: Vec<f64>) -> Result<Self> {
        if domain.is_empty() {
            return Err(Error::InvalidArgument("a multilinear map needs at least one argument".into()));
        }
        let total: usize = domain.iter().map(|s| s.dim()).product::<usize>() * codomain.dim();
        check_len(total, coeffs.len())?;
        Ok(MultilinearMap { domain, codomain, coeffs })
    }

    /// A scalar-valued form.
    pub fn scalar(domain: Vec<NormedSpace>, coeffs: Vec<f64>) -> Result<Self> {
        Self::new(domain, NormedSpace::scalar(), coeffs)
    }

    /// The form whose coefficient tensor is `a`.
    pub fn from_form(a: &Tensor) -> Self {
        MultilinearMap {
            domain: a.space().factors().to_vec(),
            codomain: NormedSpace::scalar(),
            coeffs: a.coeffs().to_vec(),
        }
    }

    /// `(λ₁,…,λₙ) ↦ λ₁···λₙ` on `Kⁿ`.
    pub fn multiplication(n: usize) -> Result<Self> {
        Self::scalar(vec![NormedSpace::scalar(); n], vec![1.0])
    }

    pub fn domain(&self) -> &[NormedSpace] {
        &self.domain
    }

    pub fn codomain(&self) -> &NormedSpace {
        &self.codomain
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn order(&self) -> usize {
        self.domain.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.codomain.is_scalar_field()
    }

    fn domain_dims(&self) -> Vec<usize> {
        self.domain.iter().map(|s| s.dim()).collect()
    }

    pub fn domain_space(&self) -> Result<TensorSpace> {
        TensorSpace::new(self.domain.clone())
    }

    /// The coefficient tensor of a scalar-valued map on `E₁⊗···⊗Eₙ`;
    /// `⟨A, z⟩` is the coordinate pairing with it.
    pub fn form(&self) -> Result<Tensor> {
        if !self.is_scalar() {
            return Err(Error::Unsupported("vector-valued map has no single form".into()));
        }
        Tensor::new(self.domain_space()?, self.coeffs.clone())
    }

    /// `A(x₁,…,xₙ)` as a codomain vector.
    pub fn apply(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        check_len(self.order(), xs.len())?;
        for (x, s) in xs.iter().zip(&self.domain) {
            check_len(s.dim(), x.len())?;
        }
        let rows: usize = self.domain_dims().iter().product();
        let mut w = vec![0.0; rows];
        accumulate_outer(&mut w, 1.0, xs);
        let df = self.codomain.dim();
        Ok((0..df).map(|k| (0..rows).map(|i| w[i] * self.coeffs[i * df + k]).sum()).collect())
    }

    /// `t ∘ A ∘ (u₁,…,uₙ)`.
    pub fn compose(&self, t: &LinearOperator, us: &[LinearOperator]) -> Result<MultilinearMap> {
        check_len(self.order(), us.len())?;
        if t.domain != self.codomain {
            return Err(Error::InvalidArgument("outer operator does not start at the codomain".into()));
        }
        let mut dims = self.domain_dims();
        dims.push(self.codomain.dim());
        let mut buf = self.coeffs.clone();
        for (l, u) in us.iter().enumerate() {
            if u.codomain != self.domain[l] {
                return Err(Error::InvalidArgument(format!("operator {l} does not land in the domain")));
            }
            let (dl, dn) = (u.codomain.dim(), u.domain.dim());
            let mut tr = vec![0.0; dn * dl];
            for i in 0..dl {
                for j in 0..dn {
                    tr[j * dl + i] = u.matrix[i * dn + j];
                }
            }
            buf = transform_axis(&buf, &dims, l, &tr, dn);
            dims[l] = dn;
        }
        let n = dims.len() - 1;
        buf = transform_axis(&buf, &dims, n, &t.matrix, t.codomain.dim());
        MultilinearMap::new(us.iter().map(|u| u.domain.clone()).collect(), t.codomain.clone(), buf)
    }
}

/// The `(n+1)`-form `(x₁,…,xₙ,y) ↦ A(x₁,…,xₙ)(y)` of a map into `F'`, with
/// `F` the dual of the codomain. The coefficient array is unchanged.
pub fn to_scalar_form(a: &MultilinearMap) -> MultilinearMap {
    let mut domain = a.domain.clone();
    domain.push(a.codomain.dual());
    MultilinearMap { domain, codomain: NormedSpace::scalar(), coeffs: a.coeffs.clone() }
}

/// Inverse of [`to_scalar_form`]: the last argument space `F` becomes the
/// codomain `F'`.
pub fn from_scalar_form(form: &MultilinearMap) -> Result<MultilinearMap> {
    if !form.is_scalar() || form.order() < 2 {
        return Err(Error::InvalidArgument("need a scalar form with at least two arguments".into()));
    }
    let mut domain = form.domain.clone();
    let f = domain.pop().expect("order checked");
    Ok(MultilinearMap { domain, codomain: f.dual(), coeffs: form.coeffs.clone() })
}

/// `A ↦ A1` with `A1(x₁,…,xₙ) = A(x₁,…,xₙ,1)`.
pub fn one_adjunction(a: &MultilinearMap) -> Result<MultilinearMap> {
    match a.domain.last() {
        Some(k) if k.is_scalar_field() && a.order() >= 2 => Ok(MultilinearMap {
            domain: a.domain[..a.order() - 1].to_vec(),
            codomain: a.codomain.clone(),
            coeffs: a.coeffs.clone(),
        }),
        _ => Err(Error::NotScalarFactor("the last argument is not the scalar field".into())),
    }
}

/// Re-attaches a scalar slot: `A(x₁,…,xₙ,λ) = λ·A1(x₁,…,xₙ)`.
pub fn one_adjunction_inverse(a1: &MultilinearMap) -> MultilinearMap {
    let mut domain = a1.domain.clone();
    domain.push(NormedSpace::scalar());
    MultilinearMap { domain, codomain: a1.codomain.clone(), coeffs: a1.coeffs.clone() }
}

/// `sup ‖A(x₁,…,xₙ)‖_F` over unit balls, the codomain handled as one more
/// dual-ball factor. Exact when every ball is polyhedral.
pub fn sup_norm(a: &MultilinearMap, cfg: &EpsilonConfig) -> Result<NormEstimate> {
    let form = to_scalar_form(a);
    let t = Tensor::new(TensorSpace::with_limit(form.domain.clone(), usize::MAX)?, form.coeffs)?;
    injective::form_sup_norm(&t, cfg)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearizationConfig {
    /// Pattern-search moves applied to the best witness.
    pub steps: usize,
    pub seed: u64,
    pub eps: EpsilonConfig,
}

impl Default for LinearizationConfig {
    fn default() -> Self {
        LinearizationConfig { steps: 12, seed: 0, eps: EpsilonConfig::default() }
    }
}

/// `‖A‖_{L_β} = sup |⟨A, z⟩| / β(z)`, bounded below by the evaluator's
/// dual witnesses, an elementary tensor at the sup-norm maximizer, and a
/// short pattern ascent from the best of these.
pub fn linearization_norm(
    a: &MultilinearMap,
    beta: &dyn TensorNormEvaluator,
    cfg: &LinearizationConfig,
) -> Result<NormEstimate> {
    let form = a.form()?;
    if form.is_zero() {
        return Ok(NormEstimate::exact(0.0, cfg.seed));
    }
    let space = form.space().clone();
    let ratio = |z: &[f64]| -> Result<f64> {
        let t = Tensor::new(space.clone(), z.to_vec())?;
        if t.is_zero() {
            return Ok(0.0);
        }
        let b = beta.value(&t)?;
        Ok(if b > 0.0 { crate::spaces::dot(form.coeffs(), z).abs() / b } else { 0.0 })
    };
    let mut cands = beta.dual_witnesses(&form)?;
    let run = injective::form_sup_search(&form, &cfg.eps)?;
    cands.push(Tensor::elementary(space.clone(), &run.point)?);
    let scored: Vec<Result<f64>> = cands.par_iter().map(|z| ratio(z.coeffs())).collect();
    let mut best = (0.0, cands[0].coeffs().to_vec());
    for (z, r) in cands.iter().zip(scored) {
        let r = r?;
        if r > best.0 {
            best = (r, z.coeffs().to_vec());
        }
    }
    let mut iters = 0;
    if cfg.steps > 0 {
        let scale = best.1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let start: Vec<f64> = best.1.iter().map(|v| v / scale).collect();
        let f = |p: &[Vec<f64>]| ratio(&p[0]).ok().map(|r| -r);
        let mut g = rng::stream(cfg.seed, &[0x11]);
        let (_, v, n) = search::pattern_minimize(vec![start], &[Block::Free], &f, Some(-best.0), cfg.steps, &mut g);
        if let Some(v) = v {
            best.0 = best.0.max(-v);
        }
        iters = n;
    }
    Ok(NormEstimate::lower_only(best.0, true, iters, cfg.seed))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SummingConfig {
    /// Largest family per factor.
    pub family_budget: usize,
    pub restarts: usize,
    pub iters: usize,
    pub seed: u64,
    pub form: FormBallConfig,
    pub eps: EpsilonConfig,
}

impl Default for SummingConfig {
    fn default() -> Self {
        SummingConfig {
            family_budget: 3,
            restarts: 4,
            iters: 400,
            seed: 0,
            form: FormBallConfig::default(),
            eps: EpsilonConfig::default(),
        }
    }
}

/// Lower bound on the best constant `C` in
/// `(Σ_J ‖A(x_J)‖^p)^{1/p} ≤ C·S_q(x)`, where `J` runs over the full
/// product grid and `S_q` is the form-ball modulus.
pub fn sm_pq_norm(a: &MultilinearMap, p: Exponent, q: Exponent, cfg: &SummingConfig) -> Result<NormEstimate> {
    if p.value() < q.value() {
        return Err(Error::InvalidArgument(format!("need p >= q, got p = {p}, q = {q}")));
    }
    if a.coeffs.iter().all(|v| *v == 0.0) {
        return Ok(NormEstimate::exact(0.0, cfg.seed));
    }
    let n = a.order();
    let dims = a.domain_dims();
    let ratio = |lists: &[Vec<Vec<f64>>], fcfg: &FormBallConfig| -> Option<f64> {
        let sizes: Vec<usize> = lists.iter().map(|l| l.len()).collect();
        let count: usize = sizes.iter().product();
        let mut vals = Vec::with_capacity(count);
        for flat in 0..count {
            let idx = crate::tensors::unravel(flat, &sizes);
            let xs: Vec<Vec<f64>> = idx.iter().enumerate().map(|(l, &j)| lists[l][j].clone()).collect();
            vals.push(a.codomain.norm_unchecked(&a.apply(&xs).ok()?));
        }
        let den = form_ball_modulus(lists, &a.domain, q, fcfg).ok()?;
        (den > 0.0).then(|| lp_norm(&vals, p) / den)
    };

    // One member per factor: the ratio is ‖A(x)‖ / Π‖x_l‖.
    let form = to_scalar_form(a);
    let t = Tensor::new(TensorSpace::with_limit(form.domain.clone(), usize::MAX)?, form.coeffs.clone())?;
    let run = injective::form_sup_search(&t, &cfg.eps)?;
    let single: Vec<Vec<Vec<f64>>> = run.point[..n].iter().map(|x| vec![x.clone()]).collect();
    let mut best = ratio(&single, &cfg.form).unwrap_or(0.0);

    let cheap = FormBallConfig { steps: cfg.form.steps.min(10), ..cfg.form };
    let budget = cfg.family_budget.max(1);
    let mut jobs = Vec::new();
    for m in 2..=budget {
        for r in 0..cfg.restarts.max(1) {
            jobs.push((m, r));
        }
    }
    let found: Vec<f64> = jobs
        .into_par_iter()
        .map(|(m, r)| {
            let mut g = rng::stream(cfg.seed, &[m as u64, r as u64]);
            let sizes: Vec<usize> = dims.iter().map(|&d| if d == 1 { 1 } else { m }).collect();
            let mut params = Vec::new();
            for (l, &s) in sizes.iter().enumerate() {
                for j in 0..s {
                    if r == 0 && j == 0 {
                        params.push(run.point[l].clone());
                    } else {
                        params.push(a.domain[l].random_unit(&mut g));
                    }
                }
            }
            let kinds = vec![Block::Free; params.len()];
            let lists_of = |p: &[Vec<f64>]| -> Vec<Vec<Vec<f64>>> {
                let mut out = Vec::with_capacity(n);
                let mut k = 0;
                for &s in &sizes {
                    out.push(p[k..k + s].to_vec());
                    k += s;
                }
                out
            };
            let f = |p: &[Vec<f64>]| ratio(&lists_of(p), &cheap).map(|v| -v);
            let (params, _, _) = search::pattern_minimize(params, &kinds, &f, None, cfg.iters, &mut g);
            ratio(&lists_of(&params), &cfg.form).unwrap_or(0.0)
        })
        .collect();
    for v in found {
        best = best.max(v);
    }
    Ok(NormEstimate::lower_only(best, false, 0, cfg.seed))
}

/// `‖A‖_{L_β}` of `A` on `(E₁,…,Eₙ,K)` beside `‖A1‖_{L_β}` on `(E₁,…,Eₙ)`.
pub fn property_b_pair(
    a: &MultilinearMap,
    beta: &dyn TensorNormEvaluator,
    cfg: &LinearizationConfig,
) -> Result<(f64, f64)> {
    let a1 = one_adjunction(a)?;
    let left = linearization_norm(a, beta, cfg)?.lower;
    let right = linearization_norm(&a1, beta, cfg)?.lower;
    Ok((left, right))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projective::ProjectiveNorm;
    use crate::tensors::{random_tensor, RandomStyle};
    use crate::injective::EpsilonNorm;

    fn l(d: usize, p: f64) -> NormedSpace {
        NormedSpace::ellp(d, p).unwrap()
    }

    #[test]
    fn multiplication_form_has_norm_one() {
        for n in 1..=4 {
            let e = sup_norm(&MultilinearMap::multiplication(n).unwrap(), &EpsilonConfig::default()).unwrap();
            assert_eq!((e.lower, e.upper), (1.0, 1.0));
        }
    }

    #[test]
    fn product_of_unit_functionals_times_unit_vector() {
        let phi1 = vec![0.6, 0.8];
        let phi2 = vec![1.0, 0.0, 0.0];
        let y = vec![0.0, 1.0];
        let mut c = vec![0.0; 12];
        accumulate_outer(&mut c, 1.0, &[phi1, phi2, y]);
        let a = MultilinearMap::new(vec![l(2, 2.0), l(3, 1.0)], l(2, 1.5), c).unwrap();
        let v = sup_norm(&a, &EpsilonConfig::default()).unwrap().lower;
        assert!((v - 1.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn apply_matches_coefficients() {
        let a = MultilinearMap::new(vec![l(2, 2.0), l(2, 2.0)], l(1, 2.0), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(a.apply(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(), vec![2.0]);
        assert_eq!(a.apply(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap(), vec![10.0]);
    }

    #[test]
    fn ideal_inequality_for_sup_norm() {
        let cfg = EpsilonConfig::default();
        let mut r = rng::rng(9);
        for seed in 0..5 {
            let dom = vec![l(2, 1.5), l(2, 3.0)];
            let s = TensorSpace::new(vec![l(2, 1.5), l(2, 3.0), l(2, 2.0)]).unwrap();
            let a = MultilinearMap::new(dom.clone(), l(2, 2.0), random_tensor(&s, seed, RandomStyle::Dense).into_coeffs())
                .unwrap();
            let us: Vec<LinearOperator> = dom
                .iter()
                .map(|e| LinearOperator::new(l(2, 2.0), e.clone(), rng::normal_vec(&mut r, 4)).unwrap())
                .collect();
            let t = LinearOperator::new(l(2, 2.0), l(3, 1.0), rng::normal_vec(&mut r, 6)).unwrap();
            let comp = a.compose(&t, &us).unwrap();
            let lhs = sup_norm(&comp, &cfg).unwrap().lower;
            let mut rhs = injective::operator_norm(&t, &cfg).unwrap().best() * sup_norm(&a, &cfg).unwrap().best();
            for u in &us {
                rhs *= injective::operator_norm(u, &cfg).unwrap().best();
            }
            assert!(lhs <= rhs * (1.0 + 1e-6) + 1e-6, "{lhs} > {rhs}");
        }
    }

    #[test]
    fn adjunction_round_trip_and_sup_norm() {
        let a1 = MultilinearMap::scalar(vec![l(2, 2.0)], vec![0.3, -0.4]).unwrap();
        let a = one_adjunction_inverse(&a1);
        assert_eq!(a.domain().len(), 2);
        assert_eq!(a.apply(&[vec![1.0, 0.0], vec![2.0]]).unwrap(), vec![0.6]);
        let back = one_adjunction(&a).unwrap();
        assert_eq!(back, a1);
        let cfg = EpsilonConfig::default();
        let s = TensorSpace::new(vec![l(2, 1.5), l(3, 3.0), NormedSpace::scalar()]).unwrap();
        let b = MultilinearMap::from_form(&random_tensor(&s, 4, RandomStyle::Dense));
        let lhs = sup_norm(&b, &cfg).unwrap().lower;
        let rhs = sup_norm(&one_adjunction(&b).unwrap(), &cfg).unwrap().lower;
        assert!((lhs - rhs).abs() <= 1e-9 * rhs);
        assert!(matches!(one_adjunction(&a1), Err(Error::NotScalarFactor(_))));
    }

    #[test]
    fn linearization_for_pi_is_sup_norm() {
        let s = TensorSpace::new(vec![l(2, 1.5), l(3, 2.0)]).unwrap();
        let a = MultilinearMap::from_form(&random_tensor(&s, 2, RandomStyle::Dense));
        let lin = linearization_norm(&a, &ProjectiveNorm::default(), &LinearizationConfig::default()).unwrap().lower;
        let sup = sup_norm(&a, &EpsilonConfig::default()).unwrap().lower;
        assert!((lin - sup).abs() <= 1e-4 * sup, "{lin} vs {sup}");
        let zero = MultilinearMap::scalar(vec![l(2, 2.0)], vec![0.0, 0.0]).unwrap();
        assert_eq!(linearization_norm(&zero, &ProjectiveNorm::default(), &LinearizationConfig::default()).unwrap().lower, 0.0);
    }

    #[test]
    fn linearization_for_eps_of_product_form() {
        let s = TensorSpace::new(vec![l(2, 2.0), l(2, 1.0)]).unwrap();
        let f = Tensor::elementary(s, &[vec![0.6, 0.8], vec![1.0, -1.0]]).unwrap();
        let v = linearization_norm(&MultilinearMap::from_form(&f), &EpsilonNorm::default(), &LinearizationConfig::default())
            .unwrap()
            .lower;
        assert!((v - 1.0).abs() < 1e-6, "{v}");
    }

    #[test]
    fn bridge_round_trip_and_identity() {
        let t = MultilinearMap::new(vec![l(2, 2.0)], l(2, 2.0), vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let form = to_scalar_form(&t);
        assert_eq!(form.domain().len(), 2);
        assert_eq!(from_scalar_form(&form).unwrap(), t);
        let cfg = EpsilonConfig::default();
        assert!((sup_norm(&form, &cfg).unwrap().lower - 1.0).abs() < 1e-12);
        assert!((sup_norm(&t, &cfg).unwrap().lower - 1.0).abs() < 1e-12);
        let zero = MultilinearMap::new(vec![l(2, 2.0)], l(2, 1.0), vec![0.0; 4]).unwrap();
        assert!(to_scalar_form(&zero).coeffs().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sm_dominates_sup_and_reaches_two_summing_norm() {
        let cfg = SummingConfig::default();
        let two = Exponent::new(2.0).unwrap();
        let id = MultilinearMap::new(vec![l(2, 2.0)], l(2, 2.0), vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let v = sm_pq_norm(&id, two, two, &cfg).unwrap().lower;
        assert!((v - 2f64.sqrt()).abs() < 2e-2, "{v}");
        let s = TensorSpace::new(vec![l(2, 1.5), l(2, 3.0)]).unwrap();
        let a = MultilinearMap::from_form(&random_tensor(&s, 1, RandomStyle::Dense));
        let small = SummingConfig { family_budget: 2, restarts: 1, iters: 30, ..cfg };
        let sm = sm_pq_norm(&a, two, Exponent::new(1.5).unwrap(), &small).unwrap().lower;
        let sup = sup_norm(&a, &EpsilonConfig::default()).unwrap().lower;
        assert!(sm >= sup - 1e-9, "{sm} < {sup}");
    }
}
