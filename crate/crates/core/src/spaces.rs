//! Finite-dimensional real ℓp and weighted ℓp spaces.
//!
//! Vectors and functionals are plain coordinate slices; a functional acts on
//! a vector by the coordinate dot product, and its norm is the norm of its
//! coordinates in [`NormedSpace::dual`].

use crate::error::{check_len, Error, Result};
use crate::rng;

/// An exponent in `[1, ∞]`. Infinity is a distinct variant so that `1 ↔ ∞`
/// conjugation never goes through a large float.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_infinite() && p > 0.0 {
            Ok(Exponent::Infinity)
        } else if p.is_finite() && p >= 1.0 {
            Ok(Exponent::Finite(p))
        } else {
            Err(Error::InvalidSpace(format!("exponent {p} is not in [1, inf]")))
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Exponent::Finite(p) => p,
            Exponent::Infinity => f64::INFINITY,
        }
    }

    pub fn is_one(self) -> bool {
        self == Exponent::Finite(1.0)
    }

    pub fn is_infinite(self) -> bool {
        self == Exponent::Infinity
    }

    fn raw_conjugate(self) -> Exponent {
        match self {
            Exponent::Infinity => Exponent::Finite(1.0),
            Exponent::Finite(p) if p == 1.0 => Exponent::Infinity,
            Exponent::Finite(p) => Exponent::Finite(p / (p - 1.0)),
        }
    }
}

impl std::fmt::Display for Exponent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Exponent::Finite(p) => write!(f, "{p}"),
            Exponent::Infinity => write!(f, "inf"),
        }
    }
}

/// A pair `(p, q)` with `1/p + 1/q = 1`.
///
/// Both members are stored, and [`ConjugatePair::swap`] exchanges them, so
/// conjugating twice returns the original exponent bit for bit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConjugatePair {
    pub p: Exponent,
    pub q: Exponent,
}

impl ConjugatePair {
    pub fn new(p: Exponent) -> Self {
        ConjugatePair {
            p,
            q: p.raw_conjugate(),
        }
    }

    pub fn from_p(p: f64) -> Result<Self> {
        Ok(Self::new(Exponent::new(p)?))
    }

    pub fn swap(self) -> Self {
        ConjugatePair {
            p: self.q,
            q: self.p,
        }
    }
}

/// `(Σ|x_i|^p)^{1/p}` with `p = ∞` meaning the max norm.
pub fn lp_norm(x: &[f64], p: Exponent) -> f64 {
    match p {
        Exponent::Infinity => x.iter().fold(0.0, |m, v| m.max(v.abs())),
        Exponent::Finite(p) if p == 1.0 => x.iter().map(|v| v.abs()).sum(),
        Exponent::Finite(p) if p == 2.0 => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
        Exponent::Finite(p) => {
            let m = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if m == 0.0 {
                return 0.0;
            }
            m * x.iter().map(|v| (v.abs() / m).powf(p)).sum::<f64>().powf(1.0 / p)
        }
    }
}

fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Weights {
    Unit,
    Positive { w: Vec<f64>, inv: Vec<f64> },
}

/// A real space `K^dim` normed by `‖x‖ = ‖w∘x‖_p` (unit weights for plain ℓp).
#[derive(Clone, Debug, PartialEq)]
pub struct NormedSpace {
    dim: usize,
    exponents: ConjugatePair,
    weights: Weights,
}

impl NormedSpace {
    pub fn ellp(dim: usize, p: f64) -> Result<Self> {
        Self::with_exponent(dim, Exponent::new(p)?)
    }

    pub fn with_exponent(dim: usize, p: Exponent) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSpace("dimension must be at least 1".into()));
        }
        Ok(NormedSpace {
            dim,
            exponents: ConjugatePair::new(p),
            weights: Weights::Unit,
        })
    }

    pub fn weighted(p: f64, weights: Vec<f64>) -> Result<Self> {
        let mut s = Self::ellp(weights.len(), p)?;
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidSpace("weights must be positive and finite".into()));
        }
        let inv = weights.iter().map(|w| 1.0 / w).collect();
        s.weights = Weights::Positive { w: weights, inv };
        Ok(s)
    }

    /// The scalar field as a 1-dimensional space with the absolute value.
    pub fn scalar() -> Self {
        NormedSpace {
            dim: 1,
            exponents: ConjugatePair::new(Exponent::Finite(1.0)),
            weights: Weights::Unit,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn p(&self) -> Exponent {
        self.exponents.p
    }

    pub fn q(&self) -> Exponent {
        self.exponents.q
    }

    pub fn weights(&self) -> Option<&[f64]> {
        match &self.weights {
            Weights::Unit => None,
            Weights::Positive { w, .. } => Some(w),
        }
    }

    fn weight(&self, i: usize) -> f64 {
        match &self.weights {
            Weights::Unit => 1.0,
            Weights::Positive { w, .. } => w[i],
        }
    }

    fn inv_weight(&self, i: usize) -> f64 {
        match &self.weights {
            Weights::Unit => 1.0,
            Weights::Positive { inv, .. } => inv[i],
        }
    }

    /// True for 1-dimensional spaces with the absolute value and unit weight.
    pub fn is_scalar_field(&self) -> bool {
        self.dim == 1 && self.weight(0) == 1.0
    }

    /// A ball is polyhedral when it has finitely many extreme points.
    pub fn is_polyhedral(&self) -> bool {
        self.dim == 1 || self.p().is_one() || self.p().is_infinite()
    }

    pub fn dual(&self) -> NormedSpace {
        let weights = match &self.weights {
            Weights::Unit => Weights::Unit,
            Weights::Positive { w, inv } => Weights::Positive {
                w: inv.clone(),
                inv: w.clone(),
            },
        };
        NormedSpace {
            dim: self.dim,
            exponents: self.exponents.swap(),
            weights,
        }
    }

    pub fn norm(&self, v: &[f64]) -> Result<f64> {
        check_len(self.dim, v.len())?;
        Ok(self.norm_unchecked(v))
    }

    pub(crate) fn norm_unchecked(&self, v: &[f64]) -> f64 {
        match &self.weights {
            Weights::Unit => lp_norm(v, self.p()),
            Weights::Positive { w, .. } => {
                let s: Vec<f64> = v.iter().zip(w).map(|(a, b)| a * b).collect();
                lp_norm(&s, self.p())
            }
        }
    }

    /// The point of the unit ball maximizing `⟨h, x⟩`; the maximum equals
    /// the dual norm of `h`. Ties among polyhedral maximizers go to the
    /// lowest index and `sign(0) = +1`.
    pub fn norming_point(&self, h: &[f64]) -> Vec<f64> {
        let d = self.dim;
        if d == 1 {
            return vec![sign(h[0]) * self.inv_weight(0)];
        }
        // Work in y = w∘x, where the ball is the plain ℓp ball and the form
        // becomes h/w.
        let g: Vec<f64> = (0..d).map(|i| h[i] * self.inv_weight(i)).collect();
        let y = match self.p() {
            Exponent::Finite(p) if p == 1.0 => {
                let mut k = 0;
                for i in 1..d {
                    if g[i].abs() > g[k].abs() {
                        k = i;
                    }
                }
                let mut y = vec![0.0; d];
                y[k] = sign(g[k]);
                y
            }
            Exponent::Infinity => g.iter().map(|v| sign(*v)).collect(),
            Exponent::Finite(_) => {
                let nq = lp_norm(&g, self.q());
                if nq == 0.0 {
                    let mut y = vec![0.0; d];
                    y[0] = 1.0;
                    y
                } else {
                    match self.q() {
                        Exponent::Finite(q) if q == 2.0 => g.iter().map(|v| v / nq).collect(),
                        Exponent::Finite(q) => g
                            .iter()
                            .map(|v| sign(*v) * (v.abs() / nq).powf(q - 1.0))
                            .collect(),
                        Exponent::Infinity => unreachable!("p = 1 handled above"),
                    }
                }
            }
        };
        (0..d).map(|i| y[i] * self.inv_weight(i)).collect()
    }

    /// Deterministic unit vectors: Gaussian directions normalized in this norm.
    pub fn sample_unit_sphere(&self, seed: u64, count: usize) -> Result<Vec<Vec<f64>>> {
        if count == 0 {
            return Err(Error::InvalidArgument("count must be at least 1".into()));
        }
        let mut r = rng::rng(seed);
        Ok((0..count).map(|_| self.random_unit(&mut r)).collect())
    }

    pub(crate) fn random_unit(&self, r: &mut rng::Rng) -> Vec<f64> {
        loop {
            let mut v = rng::normal_vec(r, self.dim);
            let n = self.norm_unchecked(&v);
            if n > 1e-300 {
                v.iter_mut().for_each(|x| *x /= n);
                return v;
            }
        }
    }

    /// Extreme points of the unit ball: `±e_k/w_k` for ℓ1, sign vectors over
    /// `w` for ℓ∞ and `±1/w` in dimension one.
    pub fn extreme_points(&self) -> Result<Vec<Vec<f64>>> {
        let mut out = self.half_extreme_points()?;
        let neg: Vec<Vec<f64>> = out
            .iter()
            .map(|v| v.iter().map(|x| -x).collect())
            .collect();
        out.extend(neg);
        Ok(out)
    }

    /// One representative of each `±` pair of extreme points.
    pub fn half_extreme_points(&self) -> Result<Vec<Vec<f64>>> {
        let d = self.dim;
        if d == 1 {
            return Ok(vec![vec![self.inv_weight(0)]]);
        }
        match self.p() {
            Exponent::Finite(p) if p == 1.0 => Ok((0..d)
                .map(|k| {
                    let mut e = vec![0.0; d];
                    e[k] = self.inv_weight(k);
                    e
                })
                .collect()),
            Exponent::Infinity => {
                if d > 24 {
                    return Err(Error::TooLarge {
                        total: d,
                        limit: 24,
                    });
                }
                // Bit k of the mask flips coordinate k; the first coordinate
                // stays positive.
                Ok((0..1usize << (d - 1))
                    .map(|mask| {
                        (0..d)
                            .map(|k| {
                                let neg = k > 0 && (mask >> (k - 1)) & 1 == 1;
                                let s = if neg { -1.0 } else { 1.0 };
                                s * self.inv_weight(k)
                            })
                            .collect()
                    })
                    .collect())
            }
            p => Err(Error::Unsupported(format!(
                "extreme points of the l{p} ball in dimension {d}"
            ))),
        }
    }

    pub fn describe(&self) -> String {
        match &self.weights {
            Weights::Unit => format!("l{}^{}", self.p(), self.dim),
            Weights::Positive { w, .. } => format!("l{}^{}{:?}", self.p(), self.dim, w),
        }
    }
}

/// Coordinate pairing of a functional with a vector.
pub fn pair(f: &[f64], v: &[f64]) -> Result<f64> {
    check_len(f.len(), v.len())?;
    Ok(dot(f, v))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_examples() {
        assert_eq!(NormedSpace::ellp(2, 2.0).unwrap().norm(&[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(NormedSpace::ellp(2, 1.0).unwrap().norm(&[1.0, -1.0]).unwrap(), 2.0);
        let inf = NormedSpace::ellp(3, f64::INFINITY).unwrap();
        assert_eq!(inf.norm(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(
            inf.norm(&[1.0]),
            Err(Error::DimensionMismatch { expected: 3, found: 1 })
        ));
    }

    #[test]
    fn general_p_norm_against_direct_formula() {
        let v = [0.3, -1.2, 2.5];
        let direct = (0.3f64.powf(3.0) + 1.2f64.powf(3.0) + 2.5f64.powf(3.0)).powf(1.0 / 3.0);
        let n = NormedSpace::ellp(3, 3.0).unwrap().norm(&v).unwrap();
        assert!((n - direct).abs() < 1e-14);
    }

    #[test]
    fn duals() {
        let d = NormedSpace::ellp(4, 1.0).unwrap().dual();
        assert!(d.p().is_infinite());
        assert_eq!(NormedSpace::ellp(4, 2.0).unwrap().dual().p(), Exponent::Finite(2.0));
        let d = NormedSpace::ellp(4, 1.5).unwrap().dual();
        assert_eq!(d.p(), Exponent::Finite(3.0));
        let w = NormedSpace::weighted(1.7, vec![0.3, 2.0, 5.0]).unwrap();
        assert_eq!(w.dual().dual(), w);
        assert_eq!(w.dual().weights().unwrap(), &[1.0 / 0.3, 0.5, 0.2]);
    }

    #[test]
    fn pairing_examples() {
        assert_eq!(pair(&[1.0, 0.0], &[0.7, -2.0]).unwrap(), 0.7);
        assert_eq!(pair(&[0.0, 0.0], &[0.7, -2.0]).unwrap(), 0.0);
        let l1 = NormedSpace::ellp(2, 1.0).unwrap();
        let f = [1.0, 1.0];
        let v = [1.0, 1.0];
        assert_eq!(pair(&f, &v).unwrap(), 2.0);
        assert_eq!(l1.dual().norm(&f).unwrap() * l1.norm(&v).unwrap(), 2.0);
    }

    #[test]
    fn sphere_samples_are_unit_and_reproducible() {
        for s in [
            NormedSpace::ellp(3, 1.0).unwrap(),
            NormedSpace::ellp(3, 2.5).unwrap(),
            NormedSpace::ellp(2, f64::INFINITY).unwrap(),
            NormedSpace::weighted(1.3, vec![1.0, 0.1, 7.0]).unwrap(),
        ] {
            let a = s.sample_unit_sphere(11, 20).unwrap();
            for v in &a {
                assert!((s.norm(v).unwrap() - 1.0).abs() <= 1e-12);
            }
            assert_eq!(a, s.sample_unit_sphere(11, 20).unwrap());
            assert!(s.sample_unit_sphere(11, 0).is_err());
        }
    }

    #[test]
    fn extreme_point_examples() {
        let mut pts = NormedSpace::ellp(2, f64::INFINITY).unwrap().extreme_points().unwrap();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(
            pts,
            vec![vec![-1.0, -1.0], vec![-1.0, 1.0], vec![1.0, -1.0], vec![1.0, 1.0]]
        );
        let mut pts = NormedSpace::ellp(2, 1.0).unwrap().extreme_points().unwrap();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(
            pts,
            vec![vec![-1.0, 0.0], vec![0.0, -1.0], vec![0.0, 1.0], vec![1.0, 0.0]]
        );
        assert!(matches!(
            NormedSpace::ellp(2, 2.0).unwrap().extreme_points(),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn norming_point_attains_dual_norm() {
        let h = [0.4, -1.1, 0.0, 2.0];
        for s in [
            NormedSpace::ellp(4, 1.0).unwrap(),
            NormedSpace::ellp(4, 1.5).unwrap(),
            NormedSpace::ellp(4, 2.0).unwrap(),
            NormedSpace::ellp(4, 4.0).unwrap(),
            NormedSpace::ellp(4, f64::INFINITY).unwrap(),
            NormedSpace::weighted(3.0, vec![0.5, 1.0, 2.0, 4.0]).unwrap(),
            NormedSpace::weighted(1.0, vec![0.5, 1.0, 2.0, 4.0]).unwrap(),
        ] {
            let x = s.norming_point(&h);
            assert!(s.norm(&x).unwrap() <= 1.0 + 1e-12);
            let dn = s.dual().norm(&h).unwrap();
            assert!((dot(&h, &x) - dn).abs() < 1e-12 * dn.max(1.0), "{}", s.describe());
        }
    }

    #[test]
    fn polyhedral_dual_norm_is_max_over_extreme_points() {
        let h = [0.4, -1.1, 0.3];
        for s in [
            NormedSpace::ellp(3, 1.0).unwrap(),
            NormedSpace::ellp(3, f64::INFINITY).unwrap(),
            NormedSpace::weighted(f64::INFINITY, vec![2.0, 0.5, 1.5]).unwrap(),
        ] {
            let best = s
                .extreme_points()
                .unwrap()
                .iter()
                .map(|e| dot(&h, e))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((best - s.dual().norm(&h).unwrap()).abs() < 1e-15);
        }
    }
}
