//! Symmetric 4th-order tensors as sums of rank-one terms.
//!
//! Both the ground truth `T* = Σᵢ aᵢ uᵢ⊗⁴` and the learned model
//! `T = Σⱼ wⱼ⊗⁴/‖wⱼ‖²` are stored factored: a unit direction together with a
//! scalar coefficient (`aᵢ` for the truth, `‖wⱼ‖²` for the model). Every
//! contraction is evaluated in normalized inner products, so coefficients as
//! small as 1e-200 never underflow an intermediate.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Shared numeric tolerances for construction-time validation.
pub mod tol {
    /// Unit-norm slack accepted when constructing a [`super::UnitVector`].
    pub const UNIT_NORM: f64 = 1e-12;
    /// Pairwise inner-product slack for orthonormal ground-truth directions.
    pub const ORTHONORMAL: f64 = 1e-12;
    /// Slack for `Σ aᵢ = 1` under [`super::Normalization::SumWeightsOne`].
    pub const SUM_WEIGHTS: f64 = 1e-12;
    /// Slack for `‖T*‖_F = 1` under [`super::Normalization::FrobeniusOne`].
    pub const FROBENIUS_ONE: f64 = 1e-10;
}

/// A vector of Euclidean norm 1 (re-normalized on construction).
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector<S> {
    entries: Vec<S>,
}

impl<S: Scalar> UnitVector<S> {
    /// Normalizes `entries` to unit length. Inputs already unit within 1e-13
    /// pass through unchanged, so sign flips and copies stay bit-identical.
    pub fn new(entries: Vec<S>) -> Result<Self> {
        let norm_sq: S = entries.iter().map(|&x| x * x).sum();
        let norm = norm_sq.sqrt();
        if !norm.is_finite() || norm <= S::zero() {
            return Err(Error::DegenerateVector);
        }
        let mut entries = entries;
        if (norm - S::one()).abs() > S::cast(1e-13) {
            for x in &mut entries {
                *x /= norm;
            }
        }
        Ok(Self { entries })
    }

    /// Standard basis vector `e_i` in dimension `d`.
    pub fn basis(d: usize, i: usize) -> Result<Self> {
        if i >= d {
            return Err(Error::IndexOutOfRange { index: i, len: d });
        }
        let mut entries = vec![S::zero(); d];
        entries[i] = S::one();
        Ok(Self { entries })
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.entries
    }

    pub fn dot(&self, other: &Self) -> S {
        dot(&self.entries, &other.entries)
    }

    /// Negated copy (denotes the same rank-one tensor at even order).
    pub fn flipped(&self) -> Self {
        Self {
            entries: self.entries.iter().map(|&x| -x).collect(),
        }
    }
}

#[inline]
pub(crate) fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = S::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// One learned rank-one term `sq_norm · direction⊗⁴`, i.e. `w⊗⁴/‖w‖²` for
/// `w = √sq_norm · direction`.
#[derive(Debug, Clone)]
pub struct Component<S> {
    direction: UnitVector<S>,
    sq_norm: S,
}

impl<S: Scalar> Component<S> {
    pub fn new(direction: UnitVector<S>, sq_norm: S) -> Result<Self> {
        if !(sq_norm.is_finite() && sq_norm > S::zero()) {
            return Err(Error::InvalidParameter(format!(
                "component sq_norm must be finite and positive, got {sq_norm}"
            )));
        }
        Ok(Self { direction, sq_norm })
    }

    pub fn direction(&self) -> &UnitVector<S> {
        &self.direction
    }

    /// `‖w‖²`, the coefficient of `direction⊗⁴`.
    pub fn sq_norm(&self) -> S {
        self.sq_norm
    }

    /// `‖w‖`.
    pub fn norm(&self) -> S {
        self.sq_norm.sqrt()
    }
}

/// The learned tensor: `m` components in dimension `d`. Permutation- and
/// sign-invariant as a tensor value.
#[derive(Debug, Clone)]
pub struct ComponentModel<S> {
    dim: usize,
    components: Vec<Component<S>>,
}

impl<S: Scalar> ComponentModel<S> {
    pub fn new(dim: usize, components: Vec<Component<S>>) -> Result<Self> {
        for c in &components {
            if c.direction.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: c.direction.dim(),
                });
            }
        }
        Ok(Self { dim, components })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            components: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[Component<S>] {
        &self.components
    }

    pub fn component(&self, j: usize) -> Result<&Component<S>> {
        self.components.get(j).ok_or(Error::IndexOutOfRange {
            index: j,
            len: self.components.len(),
        })
    }

    pub fn push(&mut self, c: Component<S>) -> Result<()> {
        if c.direction.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: c.direction.dim(),
            });
        }
        self.components.push(c);
        Ok(())
    }

    /// Replaces component `j` (used by reinitialization).
    pub fn replace(&mut self, j: usize, c: Component<S>) -> Result<()> {
        if c.direction.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: c.direction.dim(),
            });
        }
        let len = self.components.len();
        let slot = self
            .components
            .get_mut(j)
            .ok_or(Error::IndexOutOfRange { index: j, len })?;
        *slot = c;
        Ok(())
    }

    /// `Σⱼ ‖wⱼ‖²` (this is `‖W‖²_F` of the raw parameter matrix).
    pub fn sum_sq_norms(&self) -> S {
        sum_terms(self.components.len(), |j| self.components[j].sq_norm)
    }

    /// `‖T‖_F` of the represented tensor.
    pub fn tensor_frobenius_norm(&self) -> S {
        pairwise_inner(self, self)
            .expect("self inner product")
            .max(S::zero())
            .sqrt()
    }
}

/// Which normalization a ground truth was constructed under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Normalization {
    /// `Σ aᵢ = 1`.
    SumWeightsOne,
    /// `‖T*‖_F = 1`.
    FrobeniusOne,
    /// No constraint.
    None,
}

/// The target tensor `T* = Σᵢ aᵢ uᵢ⊗⁴` with `a₁ ≥ … ≥ a_r ≥ 0`.
#[derive(Debug, Clone)]
pub struct GroundTruth<S> {
    weights: Vec<S>,
    directions: Vec<UnitVector<S>>,
    orthonormal: bool,
    normalization: Normalization,
}

impl<S: Scalar> GroundTruth<S> {
    pub fn new(
        weights: Vec<S>,
        directions: Vec<UnitVector<S>>,
        orthonormal: bool,
        normalization: Normalization,
    ) -> Result<Self> {
        if weights.len() != directions.len() {
            return Err(Error::DimensionMismatch {
                expected: weights.len(),
                got: directions.len(),
            });
        }
        if weights.is_empty() {
            return Err(Error::InvalidParameter("ground truth needs r ≥ 1".into()));
        }
        let dim = directions[0].dim();
        for u in &directions {
            if u.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: u.dim(),
                });
            }
        }
        for w in &weights {
            if !(w.is_finite() && *w >= S::zero()) {
                return Err(Error::InvalidParameter(format!(
                    "weights must be finite and nonnegative, got {w}"
                )));
            }
        }
        for pair in weights.windows(2) {
            if pair[0] < pair[1] {
                return Err(Error::InvalidParameter(
                    "weights must be sorted nonincreasing".into(),
                ));
            }
        }
        if orthonormal {
            for i in 0..directions.len() {
                for j in 0..i {
                    let ip = directions[i].dot(&directions[j]).abs();
                    if ip > S::cast(tol::ORTHONORMAL) {
                        return Err(Error::InvalidParameter(format!(
                            "directions {j},{i} not orthogonal: |<u_i,u_j>| = {ip}"
                        )));
                    }
                }
            }
        }
        let truth = Self {
            weights,
            directions,
            orthonormal,
            normalization,
        };
        match normalization {
            Normalization::SumWeightsOne => {
                let sum: S = sum_terms(truth.weights.len(), |i| truth.weights[i]);
                if (sum - S::one()).abs() > S::cast(tol::SUM_WEIGHTS) {
                    return Err(Error::InvalidParameter(format!(
                        "sum_weights_one requires Σa = 1, got {sum}"
                    )));
                }
            }
            Normalization::FrobeniusOne => {
                let fro = pairwise_inner(&truth, &truth)?.max(S::zero()).sqrt();
                if (fro - S::one()).abs() > S::cast(tol::FROBENIUS_ONE) {
                    return Err(Error::InvalidParameter(format!(
                        "frobenius_one requires ‖T*‖_F = 1, got {fro}"
                    )));
                }
            }
            Normalization::None => {}
        }
        Ok(truth)
    }

    pub fn dim(&self) -> usize {
        self.directions[0].dim()
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn directions(&self) -> &[UnitVector<S>] {
        &self.directions
    }

    pub fn is_orthonormal(&self) -> bool {
        self.orthonormal
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    /// `‖T*‖_F`.
    pub fn tensor_frobenius_norm(&self) -> S {
        pairwise_inner(self, self)
            .expect("self inner product")
            .max(S::zero())
            .sqrt()
    }

    /// `⟨v, u_k⟩²` for every target direction `k`.
    pub fn squared_alignments(&self, v: &UnitVector<S>) -> Vec<S> {
        self.directions
            .iter()
            .map(|u| {
                let c = u.dot(v);
                c * c
            })
            .collect()
    }

    /// Index and value of `max_k ⟨v, u_k⟩²`.
    pub fn best_aligned_direction(&self, v: &UnitVector<S>) -> (usize, S) {
        let mut best = (0usize, S::neg_infinity());
        for (k, u) in self.directions.iter().enumerate() {
            let c = u.dot(v);
            let c2 = c * c;
            if c2 > best.1 {
                best = (k, c2);
            }
        }
        best
    }

    /// The model that mirrors `T*` exactly: one component per positive-weight
    /// direction with `sq_norm = aᵢ` (bit-identical term values, so residuals
    /// against it cancel exactly).
    pub fn as_exact_model(&self) -> ComponentModel<S> {
        let components = self
            .weights
            .iter()
            .zip(&self.directions)
            .filter(|(a, _)| **a > S::zero())
            .map(|(a, u)| Component {
                direction: u.clone(),
                sq_norm: *a,
            })
            .collect();
        ComponentModel {
            dim: self.dim(),
            components,
        }
    }
}

/// Anything that is a finite sum of weighted rank-one terms `c · ū⊗⁴`.
pub trait RankOneSum<S: Scalar> {
    fn dim(&self) -> usize;
    fn num_terms(&self) -> usize;
    /// `(unit direction, coefficient)` of term `j`.
    fn term(&self, j: usize) -> (&[S], S);
}

impl<S: Scalar> RankOneSum<S> for ComponentModel<S> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn num_terms(&self) -> usize {
        self.components.len()
    }
    fn term(&self, j: usize) -> (&[S], S) {
        let c = &self.components[j];
        (c.direction.as_slice(), c.sq_norm)
    }
}

impl<S: Scalar> RankOneSum<S> for GroundTruth<S> {
    fn dim(&self) -> usize {
        self.directions[0].dim()
    }
    fn num_terms(&self) -> usize {
        self.weights.len()
    }
    fn term(&self, j: usize) -> (&[S], S) {
        (self.directions[j].as_slice(), self.weights[j])
    }
}

impl<S: Scalar, T: RankOneSum<S> + ?Sized> RankOneSum<S> for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn num_terms(&self) -> usize {
        (**self).num_terms()
    }
    fn term(&self, j: usize) -> (&[S], S) {
        (**self).term(j)
    }
}

/// Straight summation up to this many terms; longer sums use pairwise (tree)
/// reduction to bound round-off growth at m = 1000.
const STRAIGHT_SUM_MAX: usize = 64;

/// Sums `f(0) + … + f(n-1)` with tree reduction beyond [`STRAIGHT_SUM_MAX`].
pub(crate) fn sum_terms<S: Scalar>(n: usize, mut f: impl FnMut(usize) -> S) -> S {
    if n <= STRAIGHT_SUM_MAX {
        let mut acc = S::zero();
        for j in 0..n {
            acc += f(j);
        }
        return acc;
    }
    let mut vals: Vec<S> = (0..n).map(&mut f).collect();
    let mut len = vals.len();
    while len > 1 {
        let half = len / 2;
        for i in 0..half {
            vals[i] = vals[2 * i] + vals[2 * i + 1];
        }
        if len % 2 == 1 {
            vals[half] = vals[len - 1];
            len = half + 1;
        } else {
            len = half;
        }
    }
    vals[0]
}

/// Vector analogue of [`sum_terms`]: blocks of terms accumulate locally, then
/// the block sums reduce pairwise.
pub(crate) fn sum_vector_terms<S: Scalar>(
    n: usize,
    d: usize,
    mut add_term: impl FnMut(usize, &mut [S]),
) -> Vec<S> {
    if n <= STRAIGHT_SUM_MAX {
        let mut acc = vec![S::zero(); d];
        for j in 0..n {
            add_term(j, &mut acc);
        }
        return acc;
    }
    let nblocks = n.div_ceil(STRAIGHT_SUM_MAX);
    let mut blocks: Vec<Vec<S>> = Vec::with_capacity(nblocks);
    for b in 0..nblocks {
        let mut acc = vec![S::zero(); d];
        for j in (b * STRAIGHT_SUM_MAX)..((b + 1) * STRAIGHT_SUM_MAX).min(n) {
            add_term(j, &mut acc);
        }
        blocks.push(acc);
    }
    while blocks.len() > 1 {
        let mut next = Vec::with_capacity(blocks.len().div_ceil(2));
        let mut it = blocks.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                for (x, &y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
            }
            next.push(a);
        }
        blocks = next;
    }
    blocks.pop().unwrap()
}

fn check_dims<S: Scalar>(t: &impl RankOneSum<S>, d: usize) -> Result<()> {
    if t.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: t.dim(),
        });
    }
    Ok(())
}

/// `T(v⊗⁴) = Σⱼ cⱼ ⟨ūⱼ, v⟩⁴`.
pub fn contract4<S: Scalar>(t: &impl RankOneSum<S>, v: &UnitVector<S>) -> Result<S> {
    check_dims(t, v.dim())?;
    Ok(sum_terms(t.num_terms(), |j| {
        let (u, c) = t.term(j);
        c * dot(u, v.as_slice()).powi(4)
    }))
}

/// `T(v⊗³, I) = Σⱼ cⱼ ⟨ūⱼ, v⟩³ ūⱼ`.
pub fn contract31<S: Scalar>(t: &impl RankOneSum<S>, v: &UnitVector<S>) -> Result<Vec<S>> {
    check_dims(t, v.dim())?;
    let d = v.dim();
    Ok(sum_vector_terms(t.num_terms(), d, |j, acc| {
        let (u, c) = t.term(j);
        let w = c * dot(u, v.as_slice()).powi(3);
        for (a, &ui) in acc.iter_mut().zip(u) {
            *a += w * ui;
        }
    }))
}

/// Frobenius inner product of two rank-one sums:
/// `⟨A, B⟩_F = Σⱼₖ cⱼ c'ₖ ⟨ūⱼ, ū'ₖ⟩⁴`.
pub fn pairwise_inner<S: Scalar>(a: &impl RankOneSum<S>, b: &impl RankOneSum<S>) -> Result<S> {
    check_dims(b, a.dim())?;
    Ok(sum_terms(a.num_terms(), |j| {
        let (u, c) = a.term(j);
        let row = sum_terms(b.num_terms(), |k| {
            let (w, e) = b.term(k);
            e * dot(u, w).powi(4)
        });
        c * row
    }))
}

/// `‖A − B‖_F`, with tiny negative round-off under the root clamped to 0.
pub fn distance_frobenius<S: Scalar>(a: &impl RankOneSum<S>, b: &impl RankOneSum<S>) -> Result<S> {
    let aa = pairwise_inner(a, a)?;
    let ab = pairwise_inner(a, b)?;
    let bb = pairwise_inner(b, b)?;
    let two = S::cast(2.0);
    Ok((aa - two * ab + bb).max(S::zero()).sqrt())
}

/// `‖T − T*‖_F`.
pub fn residual_frobenius<S: Scalar>(
    truth: &GroundTruth<S>,
    model: &ComponentModel<S>,
) -> Result<S> {
    distance_frobenius(truth, model)
}

/// `(T* − T)(uᵢ⊗⁴)` probed on ground-truth direction `i` (orthonormal truth).
pub fn per_direction_residual<S: Scalar>(
    truth: &GroundTruth<S>,
    model: &ComponentModel<S>,
    i: usize,
) -> Result<S> {
    let u = truth.directions.get(i).ok_or(Error::IndexOutOfRange {
        index: i,
        len: truth.directions.len(),
    })?;
    Ok(contract4(truth, u)? - contract4(model, u)?)
}
