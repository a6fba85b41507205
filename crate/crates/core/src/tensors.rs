//! Dense tensors on products of normed spaces.
//!
//! Coefficients are stored row-major: the last factor's index varies
//! fastest. The scalar field is the 1-dimensional space `ℓ1^1`, so a tensor
//! on `E₁⊗···⊗Eₙ⊗K` has the same coefficient array as its flattening.

use serde::{Serialize, Serializer};

use crate::error::{check_len, Error, Result};
use crate::rng;
use crate::spaces::NormedSpace;

pub const DEFAULT_MAX_TOTAL: usize = 4096;

#[derive(Clone, Debug, PartialEq)]
pub struct TensorSpace {
    factors: Vec<NormedSpace>,
}

impl TensorSpace {
    pub fn new(factors: Vec<NormedSpace>) -> Result<Self> {
        Self::with_limit(factors, DEFAULT_MAX_TOTAL)
    }

    pub fn with_limit(factors: Vec<NormedSpace>, limit: usize) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidSpace("a tensor space needs at least one factor".into()));
        }
        let total = factors
            .iter()
            .try_fold(1usize, |acc, f| acc.checked_mul(f.dim()))
            .unwrap_or(usize::MAX);
        if total > limit {
            return Err(Error::TooLarge { total, limit });
        }
        Ok(TensorSpace { factors })
    }

    /// Plain ℓp factors with a common exponent.
    pub fn ellp(dims: &[usize], p: f64) -> Result<Self> {
        Self::new(
            dims.iter()
                .map(|&d| NormedSpace::ellp(d, p))
                .collect::<Result<_>>()?,
        )
    }

    pub fn factors(&self) -> &[NormedSpace] {
        &self.factors
    }

    pub fn factor(&self, l: usize) -> &NormedSpace {
        &self.factors[l]
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.dim()).collect()
    }

    pub fn total(&self) -> usize {
        self.factors.iter().map(|f| f.dim()).product()
    }

    pub fn dual(&self) -> TensorSpace {
        TensorSpace {
            factors: self.factors.iter().map(|f| f.dual()).collect(),
        }
    }

    /// `E₁⊗···⊗Eₙ⊗K`.
    pub fn with_scalar(&self) -> TensorSpace {
        let mut factors = self.factors.clone();
        factors.push(NormedSpace::scalar());
        TensorSpace { factors }
    }

    /// Drops the last factor, which must be the scalar field.
    pub fn without_scalar(&self) -> Result<TensorSpace> {
        let last = self.factors.last().expect("non-empty");
        if !last.is_scalar_field() {
            return Err(Error::NotScalarFactor(last.describe()));
        }
        if self.factors.len() < 2 {
            return Err(Error::InvalidSpace("cannot drop the only factor".into()));
        }
        Ok(TensorSpace {
            factors: self.factors[..self.factors.len() - 1].to_vec(),
        })
    }

    pub fn describe(&self) -> String {
        self.factors
            .iter()
            .map(|f| f.describe())
            .collect::<Vec<_>>()
            .join(" x ")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    space: TensorSpace,
    coeffs: Vec<f64>,
}

impl Tensor {
    pub fn new(space: TensorSpace, coeffs: Vec<f64>) -> Result<Self> {
        check_len(space.total(), coeffs.len())?;
        Ok(Tensor { space, coeffs })
    }

    pub fn zeros(space: TensorSpace) -> Self {
        let coeffs = vec![0.0; space.total()];
        Tensor { space, coeffs }
    }

    /// `x₁⊗···⊗xₙ`.
    pub fn elementary(space: TensorSpace, vectors: &[Vec<f64>]) -> Result<Self> {
        Decomposition {
            terms: vec![Term {
                lambda: 1.0,
                vectors: vectors.to_vec(),
            }],
        }
        .to_tensor(&space)
    }

    pub fn space(&self) -> &TensorSpace {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn dims(&self) -> Vec<usize> {
        self.space.dims()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Euclidean norm of the coefficient array.
    pub fn coeff_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, c: f64) -> Tensor {
        Tensor {
            space: self.space.clone(),
            coeffs: self.coeffs.iter().map(|x| c * x).collect(),
        }
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        if self.space != other.space {
            return Err(Error::InvalidArgument("tensors live on different spaces".into()));
        }
        Ok(Tensor {
            space: self.space.clone(),
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        })
    }

    /// The same coefficients read on another space of identical shape.
    pub fn reinterpret(&self, space: TensorSpace) -> Result<Tensor> {
        if space.dims() != self.dims() {
            return Err(Error::InvalidArgument(format!(
                "shape {:?} does not match {:?}",
                space.dims(),
                self.dims()
            )));
        }
        Ok(Tensor {
            space,
            coeffs: self.coeffs.clone(),
        })
    }

    /// Coordinate pairing `Σ_i z_i a_i` with a coefficient tensor of the
    /// same shape.
    pub fn pair(&self, a: &Tensor) -> Result<f64> {
        check_len(self.coeffs.len(), a.coeffs.len())?;
        Ok(crate::spaces::dot(&self.coeffs, &a.coeffs))
    }

    /// `Σ_i z(i₁,…,iₙ) f₁(i₁)···fₙ(iₙ)`.
    pub fn eval_functionals(&self, fs: &[Vec<f64>]) -> Result<f64> {
        check_len(self.space.order(), fs.len())?;
        for (f, s) in fs.iter().zip(self.space.factors()) {
            check_len(s.dim(), f.len())?;
        }
        Ok(crate::maximize::contract_all(&self.coeffs, &self.dims(), fs))
    }

    /// `ψ : E₁⊗···⊗Eₙ⊗K → E₁⊗···⊗Eₙ`; the coefficient array is unchanged.
    pub fn flatten_scalar(&self) -> Result<Tensor> {
        Ok(Tensor {
            space: self.space.without_scalar()?,
            coeffs: self.coeffs.clone(),
        })
    }

    pub fn unflatten_scalar(&self) -> Tensor {
        Tensor {
            space: self.space.with_scalar(),
            coeffs: self.coeffs.clone(),
        }
    }

    /// `(u₁⊗···⊗uₙ)(z)`.
    pub fn apply_operators(&self, us: &[LinearOperator]) -> Result<Tensor> {
        check_len(self.space.order(), us.len())?;
        let mut buf = self.coeffs.clone();
        let mut dims = self.dims();
        for (l, u) in us.iter().enumerate() {
            if u.domain != *self.space.factor(l) {
                return Err(Error::InvalidArgument(format!(
                    "operator {l} has domain {} but factor is {}",
                    u.domain.describe(),
                    self.space.factor(l).describe()
                )));
            }
            buf = transform_axis(&buf, &dims, l, &u.matrix, u.codomain.dim());
            dims[l] = u.codomain.dim();
        }
        let space = TensorSpace::new(us.iter().map(|u| u.codomain.clone()).collect())?;
        Tensor::new(space, buf)
    }
}

/// Applies `mat` (row-major, `rows × dims[axis]`) along one axis.
pub(crate) fn transform_axis(
    buf: &[f64],
    dims: &[usize],
    axis: usize,
    mat: &[f64],
    rows: usize,
) -> Vec<f64> {
    let d = dims[axis];
    let outer: usize = dims[..axis].iter().product();
    let inner: usize = dims[axis + 1..].iter().product();
    let mut out = vec![0.0; outer * rows * inner];
    for o in 0..outer {
        for r in 0..rows {
            for i in 0..d {
                let m = mat[r * d + i];
                if m == 0.0 {
                    continue;
                }
                let src = (o * d + i) * inner;
                let dst = (o * rows + r) * inner;
                for k in 0..inner {
                    out[dst + k] += m * buf[src + k];
                }
            }
        }
    }
    out
}

/// A linear map between normed spaces, stored row-major with one row per
/// codomain coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearOperator {
    pub domain: NormedSpace,
    pub codomain: NormedSpace,
    pub matrix: Vec<f64>,
}

impl LinearOperator {
    pub fn new(domain: NormedSpace, codomain: NormedSpace, matrix: Vec<f64>) -> Result<Self> {
        check_len(domain.dim() * codomain.dim(), matrix.len())?;
        Ok(LinearOperator {
            domain,
            codomain,
            matrix,
        })
    }

    pub fn identity(space: &NormedSpace) -> Self {
        let d = space.dim();
        let mut matrix = vec![0.0; d * d];
        for i in 0..d {
            matrix[i * d + i] = 1.0;
        }
        LinearOperator {
            domain: space.clone(),
            codomain: space.clone(),
            matrix,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let d = self.domain.dim();
        self.matrix
            .chunks(d)
            .map(|row| crate::spaces::dot(row, x))
            .collect()
    }

    /// The operator as a tensor on `codomain ⊗ domain'`; its injective norm
    /// is the operator norm.
    pub fn as_tensor(&self) -> Result<Tensor> {
        let space = TensorSpace::new(vec![self.codomain.clone(), self.domain.dual()])?;
        Tensor::new(space, self.matrix.clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub lambda: f64,
    pub vectors: Vec<Vec<f64>>,
}

/// `Σ_j λ_j x₁ⱼ⊗···⊗xₙⱼ`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Decomposition {
    pub terms: Vec<Term>,
}

impl Decomposition {
    pub fn to_tensor(&self, space: &TensorSpace) -> Result<Tensor> {
        let dims = space.dims();
        let mut coeffs = vec![0.0; space.total()];
        for t in &self.terms {
            check_len(dims.len(), t.vectors.len())?;
            for (v, &d) in t.vectors.iter().zip(&dims) {
                check_len(d, v.len())?;
            }
            accumulate_outer(&mut coeffs, t.lambda, &t.vectors);
        }
        Tensor::new(space.clone(), coeffs)
    }

    /// `Σ_j λ_j φ₁(x₁ⱼ)···φₙ(xₙⱼ)`.
    pub fn eval_functionals(&self, fs: &[Vec<f64>]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.vectors
                    .iter()
                    .zip(fs)
                    .fold(t.lambda, |acc, (x, f)| acc * crate::spaces::dot(x, f))
            })
            .sum()
    }

    /// `Σ_j |λ_j| Π_l ‖x_lj‖`.
    pub fn projective_cost(&self, space: &TensorSpace) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.vectors
                    .iter()
                    .zip(space.factors())
                    .fold(t.lambda.abs(), |acc, (x, s)| acc * s.norm_unchecked(x))
            })
            .sum()
    }
}

/// `out += λ·x₁⊗···⊗xₙ`, multiplying in factor order.
pub(crate) fn accumulate_outer(out: &mut [f64], lambda: f64, vectors: &[Vec<f64>]) {
    let mut cur = vec![lambda];
    for v in vectors {
        let mut next = Vec::with_capacity(cur.len() * v.len());
        for c in &cur {
            for x in v {
                next.push(c * x);
            }
        }
        cur = next;
    }
    for (o, c) in out.iter_mut().zip(cur) {
        *o += c;
    }
}

/// One block of a grouped representation: families `x^{(l)}_{j}` for each of
/// the first `n` factors and codomain vectors `b_J` indexed by the product of
/// family indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub families: Vec<Vec<Vec<f64>>>,
    /// Row-major over `(j₁,…,jₙ, out)`.
    pub b: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GroupedDecomposition {
    pub blocks: Vec<Block>,
}

impl GroupedDecomposition {
    /// `Σ_m Σ_J x^{(1)}_{m,j₁}⊗···⊗x^{(n)}_{m,jₙ}⊗b_{m,J}` on a space whose
    /// last factor is the codomain.
    pub fn to_tensor(&self, space: &TensorSpace) -> Result<Tensor> {
        let dims = space.dims();
        let n = dims.len() - 1;
        let df = dims[n];
        let mut coeffs = vec![0.0; space.total()];
        for blk in &self.blocks {
            check_len(n, blk.families.len())?;
            let sizes: Vec<usize> = blk.families.iter().map(|f| f.len()).collect();
            let count: usize = sizes.iter().product();
            check_len(count * df, blk.b.len())?;
            for (l, fam) in blk.families.iter().enumerate() {
                for x in fam {
                    check_len(dims[l], x.len())?;
                }
            }
            for (jflat, bj) in blk.b.chunks(df).enumerate() {
                let idx = unravel(jflat, &sizes);
                let mut vectors: Vec<Vec<f64>> =
                    idx.iter().enumerate().map(|(l, &j)| blk.families[l][j].clone()).collect();
                vectors.push(bj.to_vec());
                accumulate_outer(&mut coeffs, 1.0, &vectors);
            }
        }
        Tensor::new(space.clone(), coeffs)
    }
}

pub(crate) fn unravel(mut flat: usize, dims: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; dims.len()];
    for k in (0..dims.len()).rev() {
        idx[k] = flat % dims[k];
        flat /= dims[k];
    }
    idx
}

/// A two-sided bracket on a norm value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NormEstimate {
    pub lower: f64,
    #[serde(serialize_with = "finite_or_null")]
    pub upper: f64,
    pub converged: bool,
    pub iterations: u64,
    pub seed: u64,
}

fn finite_or_null<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

impl NormEstimate {
    pub fn exact(v: f64, seed: u64) -> Self {
        NormEstimate {
            lower: v,
            upper: v,
            converged: true,
            iterations: 0,
            seed,
        }
    }

    pub fn lower_only(v: f64, converged: bool, iterations: u64, seed: u64) -> Self {
        NormEstimate {
            lower: v,
            upper: f64::INFINITY,
            converged,
            iterations,
            seed,
        }
    }

    pub fn scaled(self, c: f64) -> Self {
        let c = c.abs();
        NormEstimate {
            lower: self.lower * c,
            upper: if self.upper.is_finite() { self.upper * c } else { f64::INFINITY },
            ..self
        }
    }

    /// The finite side closest to the truth from above, else the lower bound.
    pub fn best(&self) -> f64 {
        if self.upper.is_finite() {
            self.upper
        } else {
            self.lower
        }
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        self.lower <= v + tol && v <= self.upper + tol
    }
}

/// A tensor norm evaluated on any tensor space.
pub trait TensorNormEvaluator: Sync {
    fn name(&self) -> String;

    fn estimate(&self, z: &Tensor) -> Result<NormEstimate>;

    /// The single number an identity check compares: the side of the
    /// bracket produced by this norm's primary search.
    fn value(&self, z: &Tensor) -> Result<f64>;

    /// Candidate norming forms for `a`, expressed on the dual tensor space.
    fn dual_witnesses(&self, _a: &Tensor) -> Result<Vec<Tensor>> {
        Ok(Vec::new())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RandomStyle {
    Dense,
    LowRank(usize),
}

/// Gaussian coefficients, or a Gaussian rank-`r` sum.
pub fn random_tensor(space: &TensorSpace, seed: u64, style: RandomStyle) -> Tensor {
    match style {
        RandomStyle::Dense => {
            let mut r = rng::rng(seed);
            Tensor {
                space: space.clone(),
                coeffs: rng::normal_vec(&mut r, space.total()),
            }
        }
        RandomStyle::LowRank(rank) => random_decomposition(space, seed, rank)
            .to_tensor(space)
            .expect("shapes agree by construction"),
    }
}

pub fn random_decomposition(space: &TensorSpace, seed: u64, rank: usize) -> Decomposition {
    let mut r = rng::rng(seed);
    Decomposition {
        terms: (0..rank)
            .map(|_| Term {
                lambda: rng::normal(&mut r),
                vectors: space
                    .factors()
                    .iter()
                    .map(|f| rng::normal_vec(&mut r, f.dim()))
                    .collect(),
            })
            .collect(),
    }
}
