//! Dense symmetric 4th-order tensors.
//!
//! This is the reference ("oracle") representation: all `d⁴` entries stored
//! explicitly. It exists to cross-check the factored contractions in
//! [`crate::tensor`] on small problems — production paths never materialize
//! it. Capped at `d ≤ 32` (8 MiB of `f64`).

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{RankOneSum, UnitVector};

/// Hard cap on the dense dimension.
pub const DENSE_DIM_CAP: usize = 32;

/// Dense order-4 tensor over dimension `d`, row-major `[i][j][k][l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSymTensor4<S> {
    dim: usize,
    entries: Vec<S>,
}

impl<S: Scalar> DenseSymTensor4<S> {
    pub fn zeros(dim: usize) -> Result<Self> {
        if dim == 0 || dim > DENSE_DIM_CAP {
            return Err(Error::DimensionTooLarge {
                dim,
                cap: DENSE_DIM_CAP,
            });
        }
        Ok(Self {
            dim,
            entries: vec![S::zero(); dim * dim * dim * dim],
        })
    }

    /// Materializes `Σⱼ cⱼ ūⱼ⊗⁴`.
    pub fn from_rank_one_sum(t: &impl RankOneSum<S>) -> Result<Self> {
        let d = t.dim();
        let mut out = Self::zeros(d)?;
        for j in 0..t.num_terms() {
            let (u, c) = t.term(j);
            let mut idx = 0;
            for i in 0..d {
                let ci = c * u[i];
                for jj in 0..d {
                    let cij = ci * u[jj];
                    for k in 0..d {
                        let cijk = cij * u[k];
                        for &ul in u.iter().take(d) {
                            out.entries[idx] += cijk * ul;
                            idx += 1;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        debug_assert!(i < self.dim && j < self.dim && k < self.dim && l < self.dim);
        ((i * self.dim + j) * self.dim + k) * self.dim + l
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> S {
        self.entries[self.offset(i, j, k, l)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, value: S) {
        let o = self.offset(i, j, k, l);
        self.entries[o] = value;
    }

    fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        Ok(())
    }

    /// Entry-wise `self − other`.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(Self {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(&a, &b)| a - b)
                .collect(),
        })
    }

    /// `Σ_ijkl A_ijkl B_ijkl`.
    pub fn inner(&self, other: &Self) -> Result<S> {
        self.check_same_dim(other)?;
        Ok(self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(&a, &b)| a * b)
            .sum())
    }

    pub fn frobenius_norm(&self) -> S {
        self.entries
            .iter()
            .map(|&a| a * a)
            .sum::<S>()
            .max(S::zero())
            .sqrt()
    }

    /// `T(v⊗⁴)` by explicit summation.
    pub fn contract4(&self, v: &UnitVector<S>) -> Result<S> {
        if v.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: v.dim(),
            });
        }
        let x = v.as_slice();
        let d = self.dim;
        let mut acc = S::zero();
        let mut idx = 0;
        for i in 0..d {
            for j in 0..d {
                let xij = x[i] * x[j];
                for k in 0..d {
                    let xijk = xij * x[k];
                    for &xl in x.iter().take(d) {
                        acc += self.entries[idx] * xijk * xl;
                        idx += 1;
                    }
                }
            }
        }
        Ok(acc)
    }

    /// `T(v⊗³, I)` by explicit summation (contracts the first three slots).
    pub fn contract31(&self, v: &UnitVector<S>) -> Result<Vec<S>> {
        if v.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: v.dim(),
            });
        }
        let x = v.as_slice();
        let d = self.dim;
        let mut out = vec![S::zero(); d];
        let mut idx = 0;
        for i in 0..d {
            for j in 0..d {
                let xij = x[i] * x[j];
                for &xk in x.iter().take(d) {
                    let xijk = xij * xk;
                    for slot in out.iter_mut() {
                        *slot += self.entries[idx] * xijk;
                        idx += 1;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Largest deviation of any entry from its index-sorted representative;
    /// 0 exactly for any tensor built with [`Self::from_rank_one_sum`].
    pub fn max_symmetry_violation(&self) -> S {
        let d = self.dim;
        let mut worst = S::zero();
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        let mut s = [i, j, k, l];
                        s.sort_unstable();
                        let diff = (self.get(i, j, k, l) - self.get(s[0], s[1], s[2], s[3])).abs();
                        if diff > worst {
                            worst = diff;
                        }
                    }
                }
            }
        }
        worst
    }
}
