//! Constructors for target tensors and random initial models.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{
    pairwise_inner, Component, ComponentModel, GroundTruth, Normalization, UnitVector,
};
use rand::Rng;
use rand_distr::StandardNormal;

/// Orthonormal target on the first `r` standard basis directions with
/// geometrically decaying weights `a_k ∝ decay_ratio^{-(k-1)}`, rescaled
/// according to `normalization`.
pub fn orthogonal_truth<S: Scalar>(
    d: usize,
    r: usize,
    decay_ratio: f64,
    normalization: Normalization,
) -> Result<GroundTruth<S>> {
    if r == 0 || r > d {
        return Err(Error::InvalidParameter(format!(
            "need 1 ≤ r ≤ d, got r = {r}, d = {d}"
        )));
    }
    if !(decay_ratio.is_finite() && decay_ratio >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "decay_ratio must be ≥ 1 so weights are nonincreasing, got {decay_ratio}"
        )));
    }
    let mut weights: Vec<S> = (0..r)
        .map(|k| S::cast(decay_ratio.powi(-(k as i32))))
        .collect();
    match normalization {
        Normalization::SumWeightsOne => {
            let sum: S = weights.iter().copied().sum();
            for w in &mut weights {
                *w /= sum;
            }
        }
        Normalization::FrobeniusOne => {
            // Orthonormal directions: ‖T*‖_F = √(Σ a_k²).
            let fro = weights.iter().map(|&w| w * w).sum::<S>().sqrt();
            for w in &mut weights {
                *w /= fro;
            }
        }
        Normalization::None => {}
    }
    let directions = (0..r)
        .map(|k| UnitVector::basis(d, k))
        .collect::<Result<Vec<_>>>()?;
    GroundTruth::new(weights, directions, true, normalization)
}

/// Uniform sample from the unit sphere `S^{d-1}` (normalized Gaussian).
pub fn sample_unit_sphere<S: Scalar, R: Rng + ?Sized>(d: usize, rng: &mut R) -> UnitVector<S> {
    loop {
        let entries: Vec<S> = (0..d)
            .map(|_| {
                let x: f64 = rng.sample(StandardNormal);
                S::cast(x)
            })
            .collect();
        let norm_sq: S = entries.iter().map(|&x| x * x).sum();
        if norm_sq > S::cast(1e-24) {
            return UnitVector::new(entries).expect("nonzero Gaussian sample");
        }
    }
}

/// Maximum |cosine| tolerated between any two sampled truth directions.
pub const RANDOM_TRUTH_MAX_COHERENCE: f64 = 0.9;

/// Random non-orthogonal target: `r` directions sampled uniformly on the
/// sphere (redrawn while any pair has |cosine| above
/// [`RANDOM_TRUTH_MAX_COHERENCE`]), weights uniform on `[0.5, 1.5]` sorted
/// nonincreasing, then the whole tensor rescaled to `‖T*‖_F = 1`.
pub fn random_truth<S: Scalar, R: Rng + ?Sized>(
    d: usize,
    r: usize,
    rng: &mut R,
) -> Result<GroundTruth<S>> {
    if r == 0 || r > d {
        return Err(Error::InvalidParameter(format!(
            "need 1 ≤ r ≤ d, got r = {r}, d = {d}"
        )));
    }
    const MAX_ATTEMPTS: usize = 1000;
    let mut attempts = 0usize;
    let mut directions: Vec<UnitVector<S>> = Vec::with_capacity(r);
    while directions.len() < r {
        attempts += 1;
        if attempts > MAX_ATTEMPTS {
            return Err(Error::RejectionFailure {
                attempts: MAX_ATTEMPTS,
            });
        }
        let candidate = sample_unit_sphere(d, rng);
        let coherent = directions
            .iter()
            .any(|u| u.dot(&candidate).abs() > S::cast(RANDOM_TRUTH_MAX_COHERENCE));
        if !coherent {
            directions.push(candidate);
        }
    }
    let mut weights: Vec<S> = (0..r)
        .map(|_| S::cast(rng.random_range(0.5..1.5)))
        .collect();
    weights.sort_by(|a, b| b.partial_cmp(a).expect("finite weights"));

    // Non-orthogonal directions: measure ‖T*‖_F through the full Gram sum.
    let unscaled = GroundTruth::new(weights, directions, false, Normalization::None)?;
    let fro = pairwise_inner(&unscaled, &unscaled)?.max(S::zero()).sqrt();
    if fro <= S::zero() {
        return Err(Error::DegenerateVector);
    }
    let weights: Vec<S> = unscaled.weights().iter().map(|&w| w / fro).collect();
    let directions = unscaled.directions().to_vec();
    GroundTruth::new(weights, directions, false, Normalization::FrobeniusOne)
}

/// `m` components with directions uniform on the sphere and every norm equal
/// to `norm_scale` (so `sq_norm = norm_scale²`; scales down to 1e-100 stay
/// representable because contractions never leave the factored form).
pub fn random_model<S: Scalar, R: Rng + ?Sized>(
    d: usize,
    m: usize,
    norm_scale: S,
    rng: &mut R,
) -> Result<ComponentModel<S>> {
    if !(norm_scale.is_finite() && norm_scale > S::zero()) {
        return Err(Error::InvalidParameter(format!(
            "norm_scale must be finite and positive, got {norm_scale}"
        )));
    }
    let sq = norm_scale * norm_scale;
    let components = (0..m)
        .map(|_| Component::new(sample_unit_sphere(d, rng), sq))
        .collect::<Result<Vec<_>>>()?;
    ComponentModel::new(d, components)
}
