//! Decomposition search shared by the projective and σ_p upper bounds.
//!
//! A rank-`r` representation is parameterized by unit directions on every
//! factor except one solved factor `L`. For fixed directions the `L`
//! vectors follow from a linear least-squares problem `A·Y = Z_L`, where
//! column `j` of `A` is the outer product of term `j`'s directions and `Z_L`
//! is the unfolding of the target along `L`. An outer random pattern search
//! then moves the directions to lower the norm objective.

use nalgebra::DMatrix;

use crate::maximize::{is_frozen, frozen_point};
use crate::rng::{self, Rng};
use crate::spaces::NormedSpace;

/// Which factor is solved and how the remaining ones index rows.
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub solved: usize,
    pub others: Vec<usize>,
    pub dims: Vec<usize>,
    pub rows: usize,
}

impl Layout {
    /// The solved factor has the largest dimension, ties going to the last
    /// such factor; a trailing scalar factor never changes the choice.
    pub fn new(dims: &[usize]) -> Self {
        let mut solved = 0;
        for (l, &d) in dims.iter().enumerate() {
            if d > 1 && d >= dims[solved] {
                solved = l;
            }
        }
        let others: Vec<usize> = (0..dims.len()).filter(|&l| l != solved).collect();
        let rows = others.iter().map(|&l| dims[l]).product();
        Layout {
            solved,
            others,
            dims: dims.to_vec(),
            rows,
        }
    }

    pub fn cols(&self) -> usize {
        self.dims[self.solved]
    }

    /// `Z_L` with rows indexed by the other factors in order.
    pub fn unfold(&self, coeffs: &[f64]) -> DMatrix<f64> {
        let n = self.dims.len();
        let mut m = DMatrix::zeros(self.rows, self.cols());
        let mut idx = vec![0usize; n];
        for &c in coeffs {
            let mut row = 0;
            for &l in &self.others {
                row = row * self.dims[l] + idx[l];
            }
            m[(row, idx[self.solved])] = c;
            for k in (0..n).rev() {
                idx[k] += 1;
                if idx[k] < self.dims[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        m
    }

    /// Column `j` is `⊗_{l≠L} dirs[j][l]`, multiplied in factor order.
    pub fn basis(&self, dirs: &[Vec<Vec<f64>>]) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.rows, dirs.len());
        for (j, term) in dirs.iter().enumerate() {
            let mut cur = vec![1.0];
            for v in term {
                let mut next = Vec::with_capacity(cur.len() * v.len());
                for c in &cur {
                    for x in v {
                        next.push(c * x);
                    }
                }
                cur = next;
            }
            for (r, v) in cur.into_iter().enumerate() {
                a[(r, j)] = v;
            }
        }
        a
    }

    /// Full vectors of a term from its directions and solved vector.
    pub fn term_vectors(&self, dirs: &[Vec<f64>], y: Vec<f64>) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.dims.len()];
        for (k, &l) in self.others.iter().enumerate() {
            out[l] = dirs[k].clone();
        }
        out[self.solved] = y;
        out
    }
}

/// Minimum-norm least-squares solution of `A·Y = Z` by SVD, and the
/// Frobenius norm of the residual.
pub(crate) fn solve(a: &DMatrix<f64>, z: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * 1e-13 * a.nrows().max(a.ncols()) as f64;
    let y = svd
        .solve(z, eps.max(f64::MIN_POSITIVE))
        .unwrap_or_else(|_| DMatrix::zeros(a.ncols(), z.ncols()));
    let residual = (a * &y - z).norm();
    (y, residual)
}

/// A parameter block moved by the pattern search.
#[derive(Clone, Debug)]
pub(crate) enum Block {
    /// A direction renormalized to the unit sphere of the space after every
    /// move.
    Direction(NormedSpace),
    /// Unconstrained real coordinates.
    Free,
}

impl Block {
    fn project(&self, v: &mut [f64]) -> bool {
        match self {
            Block::Direction(s) => {
                let n = s.norm_unchecked(v);
                if !(n > 1e-12) || !n.is_finite() {
                    return false;
                }
                v.iter_mut().for_each(|x| *x /= n);
                true
            }
            Block::Free => v.iter().all(|x| x.is_finite()),
        }
    }
}

pub(crate) fn random_direction(space: &NormedSpace, r: &mut Rng) -> Vec<f64> {
    if is_frozen(space) {
        frozen_point(space)
    } else {
        space.random_unit(r)
    }
}

/// Seeded random pattern search minimizing `f` (which returns `None` for an
/// infeasible point). Each step perturbs one block by a Gaussian of the
/// block's current scale; scales grow on success and shrink on failure.
pub(crate) fn pattern_minimize(
    mut params: Vec<Vec<f64>>,
    blocks: &[Block],
    f: &dyn Fn(&[Vec<f64>]) -> Option<f64>,
    start: Option<f64>,
    iters: usize,
    r: &mut Rng,
) -> (Vec<Vec<f64>>, Option<f64>, u64) {
    let mut best = start.or_else(|| f(&params));
    if blocks.is_empty() {
        return (params, best, 0);
    }
    let mut scale = vec![0.3; blocks.len()];
    let mut done = 0u64;
    for _ in 0..iters {
        if scale.iter().all(|s| *s < 1e-10) {
            break;
        }
        done += 1;
        let b = rng::index(r, blocks.len());
        if scale[b] < 1e-10 {
            continue;
        }
        let mut trial = params[b].clone();
        for x in trial.iter_mut() {
            *x += scale[b] * rng::normal(r);
        }
        if !blocks[b].project(&mut trial) {
            scale[b] *= 0.7;
            continue;
        }
        let old = std::mem::replace(&mut params[b], trial);
        match (f(&params), best) {
            (Some(v), Some(cur)) if v < cur => {
                best = Some(v);
                scale[b] = (scale[b] * 1.5).min(1.0);
            }
            (Some(v), None) => {
                best = Some(v);
            }
            _ => {
                params[b] = old;
                scale[b] *= 0.7;
            }
        }
    }
    (params, best, done)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_prefers_last_largest_factor() {
        assert_eq!(Layout::new(&[2, 3, 3]).solved, 2);
        assert_eq!(Layout::new(&[3, 2, 1]).solved, 0);
        assert_eq!(Layout::new(&[2, 2, 1]).solved, 1);
        assert_eq!(Layout::new(&[1, 1]).solved, 0);
    }

    #[test]
    fn unfold_and_basis_reconstruct_rank_one() {
        let dims = [2, 3, 2];
        let lay = Layout::new(&dims);
        assert_eq!(lay.solved, 1);
        let x = vec![1.0, 2.0];
        let y = vec![0.5, -1.0, 3.0];
        let w = vec![-2.0, 0.25];
        let mut coeffs = vec![0.0; 12];
        crate::tensors::accumulate_outer(&mut coeffs, 1.0, &[x.clone(), y.clone(), w.clone()]);
        let z = lay.unfold(&coeffs);
        let a = lay.basis(&[vec![x, w]]);
        let (sol, res) = solve(&a, &z);
        assert!(res < 1e-12);
        for (k, v) in y.iter().enumerate() {
            assert!((sol[(0, k)] - v).abs() < 1e-12);
        }
    }

    #[test]
    fn pattern_search_decreases_a_quadratic() {
        let f = |p: &[Vec<f64>]| Some(p[0].iter().map(|x| (x - 1.0) * (x - 1.0)).sum::<f64>());
        let mut r = rng::rng(1);
        let (p, v, _) = pattern_minimize(vec![vec![0.0, 0.0]], &[Block::Free], &f, None, 4000, &mut r);
        assert!(v.unwrap() < 1e-10, "{p:?}");
    }
}
