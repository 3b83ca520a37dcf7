//! Dense row-stochastic matrices and the exact/numerical observables used
//! throughout the simulator: products, zero patterns (skeletons), contraction
//! coefficients, ranks and the consensus gap.

use std::fmt;

use nalgebra::{DMatrix, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|row sum - 1|` accepted at construction.
pub const ROW_TOL: f64 = 1e-12;
/// Entries at or below this value count as structural zeros.
pub const ZERO_TOL: f64 = 1e-12;
/// Relative singular-value threshold for numeric rank.
pub const RANK_REL_TOL: f64 = 1e-8;

/// An `n x n` row-stochastic matrix stored row-major.
///
/// Row `i` holds the weights agent `i` places on every agent. Rows are
/// renormalized to sum to one in working precision whenever a matrix is
/// built, so long products do not drift off the simplex.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct StochasticMatrix {
    n: usize,
    data: Vec<f64>,
}

impl StochasticMatrix {
    /// Validates `entries` and renormalizes each row.
    pub fn new(entries: Vec<Vec<f64>>, row_tol: f64) -> Result<Self> {
        let n = entries.len();
        if n == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in entries.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            for (j, &x) in row.iter().enumerate() {
                if !(x >= 0.0) || !x.is_finite() {
                    return Err(Error::NegativeEntry { row: i, col: j });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > row_tol {
                return Err(Error::RowSumViolation { row: i, sum });
            }
            data.extend_from_slice(row);
        }
        let mut m = StochasticMatrix { n, data };
        m.renormalize();
        Ok(m)
    }

    /// Builds from a flat row-major buffer whose rows are already (nearly)
    /// stochastic, e.g. convex combinations of stochastic rows.
    pub(crate) fn from_flat(n: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n * n);
        let mut m = StochasticMatrix { n, data };
        m.renormalize();
        m
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        StochasticMatrix { n, data }
    }

    /// `(1/n) 11'`, the equal-weight averaging matrix.
    pub fn averaging(n: usize) -> Self {
        StochasticMatrix {
            n,
            data: vec![1.0 / n as f64; n * n],
        }
    }

    /// Permutation matrix sending agent `i`'s full weight to `target[i]`.
    pub fn permutation(target: &[usize]) -> Result<Self> {
        let n = target.len();
        let mut data = vec![0.0; n * n];
        for (i, &j) in target.iter().enumerate() {
            if j >= n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: j + 1,
                });
            }
            data[i * n + j] = 1.0;
        }
        Ok(StochasticMatrix { n, data })
    }

    /// Rank-one matrix whose every row equals the probability vector `row`.
    pub fn rank_one(row: &[f64]) -> Result<Self> {
        let n = row.len();
        Self::new(vec![row.to_vec(); n], ROW_TOL)
    }

    /// The cyclic shift where agent `i` adopts the belief of agent `i + 1 mod n`.
    pub fn ring(n: usize) -> Self {
        let target: Vec<usize> = (0..n).map(|i| (i + 1) % n).collect();
        Self::permutation(&target).expect("ring targets are in range")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(|r| r.to_vec()).collect()
    }

    /// Rows already within `n` ulps of one are left alone, which makes this
    /// idempotent: a matrix survives a serialization round trip bit for bit.
    fn renormalize(&mut self) {
        let slack = self.n as f64 * f64::EPSILON;
        for row in self.data.chunks_exact_mut(self.n) {
            let sum: f64 = row.iter().sum();
            if sum > 0.0 && (sum - 1.0).abs() > slack {
                row.iter_mut().for_each(|x| *x /= sum);
            }
        }
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        Ok(())
    }

    /// `self · other`. The engine composes left products as `X_{t+1} · X^(t)`.
    pub fn multiply(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(self.mul_unchecked(other))
    }

    pub(crate) fn mul_unchecked(&self, other: &Self) -> Self {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        mul_into(n, &self.data, &other.data, &mut out);
        Self::from_flat(n, out)
    }

    /// Replaces `self` with `left · self` without allocating a fresh result.
    pub(crate) fn left_mul_assign(&mut self, left: &Self, scratch: &mut Vec<f64>) {
        let n = self.n;
        scratch.clear();
        scratch.resize(n * n, 0.0);
        mul_into(n, &left.data, &self.data, scratch);
        std::mem::swap(&mut self.data, scratch);
        self.renormalize();
    }

    /// Matrix-vector product `self · v`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: v.len(),
            });
        }
        Ok(self
            .rows()
            .map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Row vector times matrix, `v · self`.
    pub fn left_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: v.len(),
            });
        }
        let mut out = vec![0.0; self.n];
        for (row, &w) in self.rows().zip(v) {
            if w != 0.0 {
                out.iter_mut().zip(row).for_each(|(o, x)| *o += w * x);
            }
        }
        Ok(out)
    }

    /// Convex combination `(1 - w) self + w other`.
    pub fn mix(&self, other: &Self, w: f64) -> Result<Self> {
        self.check_dim(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (1.0 - w) * a + w * b)
            .collect();
        Ok(Self::from_flat(self.n, data))
    }

    pub fn skeleton(&self, zero_tol: f64) -> SkeletonMask {
        SkeletonMask {
            n: self.n,
            mask: self.data.iter().map(|&x| x > zero_tol).collect(),
        }
    }

    /// Whether both matrices share the same social topology.
    pub fn same_skeleton(&self, other: &Self) -> Result<bool> {
        self.check_dim(other)?;
        Ok(self.skeleton(ZERO_TOL) == other.skeleton(ZERO_TOL))
    }

    pub fn is_strictly_positive(&self, zero_tol: f64) -> bool {
        self.data.iter().all(|&x| x > zero_tol)
    }

    pub fn is_bistochastic(&self, tol: f64) -> bool {
        let n = self.n;
        (0..n).all(|j| {
            let col: f64 = (0..n).map(|i| self.data[i * n + j]).sum();
            (col - 1.0).abs() <= tol
        })
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.n;
        (0..n).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    /// Dobrushin ergodic coefficient
    /// `1 - min_{i,k} sum_j min(m[i][j], m[k][j])`.
    ///
    /// Lies in `[0, 1]`, is zero iff all rows coincide and is submultiplicative.
    pub fn dobrushin_coefficient(&self) -> f64 {
        let mut min_overlap = 1.0f64;
        for i in 0..self.n {
            let ri = self.row(i);
            for k in (i + 1)..self.n {
                let overlap: f64 = ri.iter().zip(self.row(k)).map(|(a, b)| a.min(*b)).sum();
                min_overlap = min_overlap.min(overlap);
            }
        }
        (1.0 - min_overlap).clamp(0.0, 1.0)
    }

    /// Second eigenvalue `a - b` of `[[a, 1-a], [b, 1-b]]`.
    pub fn lambda2_2x2(&self) -> Result<f64> {
        if self.n != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                found: self.n,
            });
        }
        Ok(self.get(0, 0) - self.get(1, 0))
    }

    /// Numeric rank from the singular values, thresholded relative to the
    /// largest one.
    pub fn numeric_rank(&self, rel_tol: f64) -> Result<RankReport> {
        let m = DMatrix::from_row_slice(self.n, self.n, &self.data);
        let svd = SVD::try_new(m, false, false, f64::EPSILON, 10_000)
            .ok_or_else(|| Error::NumericalFailure("SVD did not converge".into()))?;
        let mut singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
        singular_values.sort_by(|a, b| b.total_cmp(a));
        let largest = singular_values[0];
        let numeric_rank = singular_values
            .iter()
            .filter(|&&s| s > rel_tol * largest)
            .count()
            .max(1);
        Ok(RankReport {
            numeric_rank,
            singular_values,
            tol_used: rel_tol,
        })
    }

    /// Consensus gap: the largest column spread `max_i m_ij - min_i m_ij`.
    pub fn distance_to_rank_one(&self) -> f64 {
        let n = self.n;
        let mut hi = self.data[..n].to_vec();
        let mut lo = hi.clone();
        for row in self.rows().skip(1) {
            for j in 0..n {
                hi[j] = hi[j].max(row[j]);
                lo[j] = lo[j].min(row[j]);
            }
        }
        hi.iter().zip(&lo).map(|(h, l)| h - l).fold(0.0, f64::max)
    }

    /// Spectral norm of `self - 11'/n`.
    pub fn deviation_from_average(&self) -> f64 {
        let n = self.n;
        let c = 1.0 / n as f64;
        let m = DMatrix::from_fn(n, n, |i, j| self.get(i, j) - c);
        m.singular_values().iter().copied().fold(0.0, f64::max)
    }

    /// Entrywise max distance.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn mul_into(n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    for i in 0..n {
        let out_row = &mut out[i * n..(i + 1) * n];
        for k in 0..n {
            let w = a[i * n + k];
            // interaction matrices are often sparse
            if w == 0.0 {
                continue;
            }
            let b_row = &b[k * n..(k + 1) * n];
            out_row.iter_mut().zip(b_row).for_each(|(o, x)| *o += w * x);
        }
    }
}

impl fmt::Debug for StochasticMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.rows()).finish()
    }
}

impl TryFrom<Vec<Vec<f64>>> for StochasticMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        // Decimal round trips lose a few ulps per row.
        Self::new(rows, 1e-9)
    }
}

impl From<StochasticMatrix> for Vec<Vec<f64>> {
    fn from(m: StochasticMatrix) -> Self {
        m.to_rows()
    }
}

/// Zero/nonzero pattern of a matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SkeletonMask {
    n: usize,
    mask: Vec<bool>,
}

impl SkeletonMask {
    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let n = rows.len();
        let mut mask = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            mask.extend_from_slice(row);
        }
        Ok(SkeletonMask { n, mask })
    }

    pub fn full(n: usize) -> Self {
        SkeletonMask {
            n,
            mask: vec![true; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.n + j]
    }

    pub fn is_all_true(&self) -> bool {
        self.mask.iter().all(|&b| b)
    }

    pub fn to_rows(&self) -> Vec<Vec<bool>> {
        self.mask.chunks_exact(self.n).map(|r| r.to_vec()).collect()
    }

    /// Boolean matrix product: the skeleton of `A · B` for nonnegative
    /// matrices with skeletons `self` and `other`.
    pub fn bool_product(&self, other: &Self) -> Self {
        let n = self.n;
        let mut mask = vec![false; n * n];
        for i in 0..n {
            for k in 0..n {
                if !self.mask[i * n + k] {
                    continue;
                }
                for j in 0..n {
                    mask[i * n + j] |= other.mask[k * n + j];
                }
            }
        }
        SkeletonMask { n, mask }
    }

    pub fn union(&self, other: &Self) -> Self {
        SkeletonMask {
            n: self.n,
            mask: self
                .mask
                .iter()
                .zip(&other.mask)
                .map(|(a, b)| *a || *b)
                .collect(),
        }
    }

    /// Wielandt's bound `(n-1)^2 + 1` on the exponent of a primitive pattern.
    pub fn wielandt_bound(&self) -> usize {
        (self.n - 1) * (self.n - 1) + 1
    }

    /// True iff some boolean power up to `max_power` is all-true.
    pub fn is_primitive(&self, max_power: usize) -> bool {
        let mut power = self.clone();
        for _ in 0..max_power.max(1) {
            if power.is_all_true() {
                return true;
            }
            power = power.bool_product(self);
        }
        false
    }
}

/// Singular-value rank summary of a single matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub numeric_rank: usize,
    pub singular_values: Vec<f64>,
    pub tol_used: f64,
}
