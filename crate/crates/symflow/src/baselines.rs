//! Baseline decomposition procedures: tensor power iteration, best rank-one
//! search, classical greedy deflation, and greedy low-rank learning (a
//! sequence of gradient-descent epochs that each inject one tiny component
//! seeded at the residual's best rank-one direction).

use crate::error::{Error, Result};
use crate::flow::{residual_action31, LossSpec, StepperConfig};
use crate::scalar::Scalar;
use crate::tensor::{
    contract31, contract4, distance_frobenius, dot, residual_frobenius, Component, ComponentModel,
    GroundTruth, RankOneSum, UnitVector,
};
use rand::Rng;

/// Default step size of the projected rank-one ascent.
pub const RANK1_ASCENT_STEP: f64 = 0.3;

/// Flips `v` so its largest-magnitude coordinate is positive (exact negation,
/// so the represented rank-one tensor is unchanged bit for bit).
fn canonical_sign<S: Scalar>(v: UnitVector<S>) -> UnitVector<S> {
    let mut best = 0usize;
    let mut best_abs = S::zero();
    for (i, &x) in v.as_slice().iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if v.as_slice()[best] < S::zero() {
        v.flipped()
    } else {
        v
    }
}

/// Settings shared by [`power_iterate`] and the restarted searches built on
/// top of it.
#[derive(Debug, Clone, Copy)]
pub struct PowerConfig<S> {
    /// Iteration cap of a single run.
    pub max_iters: usize,
    /// Converged when `min(‖w' − w‖, ‖w' + w‖) < tol`.
    pub tol: S,
    /// Number of independent random starts in the restarted searches
    /// ([`best_rank1`]); a single [`power_iterate`] call ignores it.
    pub restarts: usize,
}

impl<S: Scalar> PowerConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be ≥ 1".into()));
        }
        if !(self.tol.is_finite() && self.tol > S::zero()) {
            return Err(Error::InvalidParameter(format!(
                "tol must be finite and positive, got {}",
                self.tol
            )));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidParameter("restarts must be ≥ 1".into()));
        }
        Ok(())
    }
}

impl<S: Scalar> Default for PowerConfig<S> {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol: S::cast(1e-12),
            restarts: 50,
        }
    }
}

/// Result of a power-iteration run.
#[derive(Debug, Clone)]
pub struct PowerOutcome<S> {
    pub direction: UnitVector<S>,
    /// `T(v⊗⁴)` at the final direction.
    pub value: S,
    pub iterations: usize,
    pub converged: bool,
}

/// Tensor power iteration `w ← normalize(T(w⊗³, I))` with a per-iterate
/// observer (called with the iterate after each update).
pub fn power_iterate_with<S: Scalar>(
    t: &impl RankOneSum<S>,
    start: &UnitVector<S>,
    cfg: &PowerConfig<S>,
    mut observer: impl FnMut(usize, &UnitVector<S>),
) -> Result<PowerOutcome<S>> {
    let mut w = start.clone();
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=cfg.max_iters {
        iterations = it;
        let h = contract31(t, &w)?;
        // Pre-scale by the largest coordinate so targets of tiny overall
        // magnitude cannot underflow the normalization.
        let max_abs = h.iter().fold(S::zero(), |m, &x| m.max(x.abs()));
        if !max_abs.is_finite() || max_abs <= S::zero() {
            return Err(Error::DegenerateStart);
        }
        let scaled: Vec<S> = h.iter().map(|&x| x / max_abs).collect();
        let next = UnitVector::new(scaled)?;
        let moved = displacement(&next, &w);
        w = next;
        observer(it, &w);
        if moved < cfg.tol {
            converged = true;
            break;
        }
    }
    let w = canonical_sign(w);
    let value = contract4(t, &w)?;
    Ok(PowerOutcome {
        direction: w,
        value,
        iterations,
        converged,
    })
}

/// Tensor power iteration `w ← normalize(T(w⊗³, I))`. Squared alignments with
/// the target's directions cube each iteration, so a strictly dominant
/// `aᵢ⟨w, uᵢ⟩²` converges very fast; exact ties are preserved.
pub fn power_iterate<S: Scalar>(
    t: &impl RankOneSum<S>,
    start: &UnitVector<S>,
    cfg: &PowerConfig<S>,
) -> Result<PowerOutcome<S>> {
    power_iterate_with(t, start, cfg, |_, _| {})
}

/// `min(‖a − b‖, ‖a + b‖)` — direction change modulo the ± ambiguity.
fn displacement<S: Scalar>(a: &UnitVector<S>, b: &UnitVector<S>) -> S {
    let mut minus = S::zero();
    let mut plus = S::zero();
    for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
        minus += (x - y) * (x - y);
        plus += (x + y) * (x + y);
    }
    minus.sqrt().min(plus.sqrt())
}

/// A rank-one candidate found by [`best_rank1`].
#[derive(Debug, Clone)]
pub struct Rank1Fit<S> {
    pub direction: UnitVector<S>,
    /// `R(v⊗⁴)` at the returned direction, `R = T* − T`.
    pub value: S,
    /// Which restart produced it (earliest index on ties).
    pub restart: usize,
}

/// Multi-restart projected gradient ascent of `v ↦ R(v⊗⁴)` over the unit
/// sphere, `R = T* − T`. Each restart follows the spherical gradient
/// `4(R₃ − R₄v)` with the given step size; the best final value across
/// restarts wins, earliest restart on ties.
pub fn best_rank1<S: Scalar, R: Rng + ?Sized>(
    truth: &GroundTruth<S>,
    model: &ComponentModel<S>,
    cfg: &PowerConfig<S>,
    step_size: S,
    rng: &mut R,
) -> Result<Rank1Fit<S>> {
    cfg.validate()?;
    if !(step_size.is_finite() && step_size > S::zero()) {
        return Err(Error::InvalidParameter(format!(
            "step_size must be finite and positive, got {step_size}"
        )));
    }
    let d = truth.dim();
    let four = S::cast(4.0);
    let mut best: Option<Rank1Fit<S>> = None;
    for restart in 0..cfg.restarts {
        let mut v = crate::truth::sample_unit_sphere(d, rng);
        let mut degenerate = false;
        for _ in 0..cfg.max_iters {
            let r3 = residual_action31(truth, model, &v)?;
            let r4 = dot(&r3, v.as_slice());
            let stepped: Vec<S> = v
                .as_slice()
                .iter()
                .zip(&r3)
                .map(|(&vi, &gi)| vi + step_size * four * (gi - r4 * vi))
                .collect();
            let next = match UnitVector::new(stepped) {
                Ok(u) => u,
                Err(_) => {
                    degenerate = true;
                    break;
                }
            };
            let moved = displacement(&next, &v);
            v = next;
            if moved < cfg.tol {
                break;
            }
        }
        if degenerate {
            continue;
        }
        let v = canonical_sign(v);
        let r3 = residual_action31(truth, model, &v)?;
        let value = dot(&r3, v.as_slice());
        if best.as_ref().is_none_or(|b| value > b.value) {
            best = Some(Rank1Fit {
                direction: v,
                value,
                restart,
            });
        }
    }
    best.ok_or(Error::NoRestartSucceeded)
}

/// Why [`tensor_deflation`] stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeflationStatus {
    /// Residual norm reached `stop_norm`.
    Converged,
    /// No appendable positive term, or a round shrank the residual by less
    /// than [`DEFLATION_STALL_TOL`].
    Stalled,
    /// Safety cap on the number of extracted terms.
    TermCapReached,
}

/// A round that shrinks `‖R‖_F` by less than this counts as no progress.
pub const DEFLATION_STALL_TOL: f64 = 1e-14;

/// Classical greedy deflation: repeatedly fit the best rank-one term to the
/// current residual, append it with the 1-D least-squares coefficient
/// `max(0, R(v⊗⁴))`, and subtract. Exact on orthonormally decomposable
/// targets; on non-orthogonal ones it generally stalls at a nonzero residual.
pub fn tensor_deflation<S: Scalar, R: Rng + ?Sized>(
    truth: &GroundTruth<S>,
    stop_norm: S,
    cfg: &PowerConfig<S>,
    step_size: S,
    rng: &mut R,
) -> Result<(ComponentModel<S>, DeflationStatus)> {
    if !(stop_norm.is_finite() && stop_norm >= S::zero()) {
        return Err(Error::InvalidParameter(format!(
            "stop_norm must be finite and nonnegative, got {stop_norm}"
        )));
    }
    // Safety valve only — float granularity of the stall check already
    // guarantees termination in practice.
    let term_cap = 4 * truth.dim() + 64;
    let mut model = ComponentModel::empty(truth.dim());
    let mut residual = residual_frobenius(truth, &model)?;
    loop {
        if residual <= stop_norm {
            return Ok((model, DeflationStatus::Converged));
        }
        if model.len() >= term_cap {
            return Ok((model, DeflationStatus::TermCapReached));
        }
        let fit = best_rank1(truth, &model, cfg, step_size, rng)?;
        if fit.value <= S::zero() {
            return Ok((model, DeflationStatus::Stalled));
        }
        model.push(Component::new(fit.direction, fit.value)?)?;
        let next_residual = residual_frobenius(truth, &model)?;
        if residual - next_residual < S::cast(DEFLATION_STALL_TOL) {
            return Ok((model, DeflationStatus::Stalled));
        }
        residual = next_residual;
    }
}

/// Settings for [`glrl_run`].
#[derive(Debug, Clone, Copy)]
pub struct GlrlConfig<S> {
    /// Number of inject-and-train epochs (one component each).
    pub epochs: usize,
    /// Norm of every injected component.
    pub seed_norm: S,
    /// Restarts of the rank-one search at each epoch start.
    pub rank1_restarts: usize,
    /// Step size of both the rank-one ascent and the in-epoch descent.
    pub step_size: S,
    /// Epoch `s` (1-based) trains for `s · iters_factor` descent steps.
    pub iters_factor: usize,
}

impl<S: Scalar> Default for GlrlConfig<S> {
    fn default() -> Self {
        Self {
            epochs: 5,
            seed_norm: S::cast(1e-60),
            rank1_restarts: 50,
            step_size: S::cast(RANK1_ASCENT_STEP),
            iters_factor: 2000,
        }
    }
}

impl<S: Scalar> GlrlConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if !(self.seed_norm.is_finite() && self.seed_norm > S::zero()) {
            return Err(Error::InvalidParameter(format!(
                "seed_norm must be finite and positive, got {}",
                self.seed_norm
            )));
        }
        if !(self.step_size.is_finite() && self.step_size > S::zero()) {
            return Err(Error::InvalidParameter(format!(
                "step_size must be finite and positive, got {}",
                self.step_size
            )));
        }
        if self.rank1_restarts == 0 || self.iters_factor == 0 {
            return Err(Error::InvalidParameter(
                "rank1_restarts and iters_factor must be ≥ 1".into(),
            ));
        }
        Ok(())
    }
}

/// The near-critical models visited by greedy low-rank learning: entry `s` is
/// the state after `s` epochs, so entry 0 is always the empty model.
#[derive(Debug, Clone)]
pub struct SaddleLibrary<S> {
    saddles: Vec<ComponentModel<S>>,
}

impl<S: Scalar> SaddleLibrary<S> {
    /// Builds a library; the first entry must be the empty (zero) model.
    pub fn new(saddles: Vec<ComponentModel<S>>) -> Result<Self> {
        match saddles.first() {
            Some(first) if first.is_empty() => Ok(Self { saddles }),
            Some(_) => Err(Error::InvalidParameter(
                "saddle library must start with the empty model".into(),
            )),
            None => Err(Error::InvalidParameter(
                "saddle library must be nonempty".into(),
            )),
        }
    }

    pub fn len(&self) -> usize {
        self.saddles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.saddles.is_empty()
    }

    pub fn saddles(&self) -> &[ComponentModel<S>] {
        &self.saddles
    }
}

/// Index and value of the smallest Frobenius distance between `model`'s
/// tensor and any saddle in the library (Gram-form computation throughout).
pub fn saddle_distance<S: Scalar>(
    model: &ComponentModel<S>,
    library: &SaddleLibrary<S>,
) -> Result<(usize, S)> {
    let mut best_idx = 0usize;
    let mut best_dist = S::infinity();
    for (i, saddle) in library.saddles.iter().enumerate() {
        let dist = distance_frobenius(model, saddle)?;
        if dist < best_dist {
            best_dist = dist;
            best_idx = i;
        }
    }
    Ok((best_idx, best_dist))
}

/// Output of [`glrl_run`].
#[derive(Debug, Clone)]
pub struct GlrlOutcome<S> {
    /// Model after the final epoch.
    pub model: ComponentModel<S>,
    /// Visited near-critical states (`epochs + 1` entries incl. the empty model).
    pub saddles: SaddleLibrary<S>,
    /// `‖T* − T̂‖_F` after each epoch (`epochs + 1` entries, entry 0 = ‖T*‖).
    pub residuals: Vec<S>,
}

/// Greedy low-rank learning: each epoch finds the residual's best rank-one
/// direction, injects a component of norm `seed_norm` along it, and runs
/// unregularized gradient descent until the model settles near the next
/// critical point. The visited states approximate the saddle chain that plain
/// gradient descent from tiny initialization passes through.
pub fn glrl_run<S: Scalar, R: Rng + ?Sized>(
    truth: &GroundTruth<S>,
    cfg: &GlrlConfig<S>,
    rng: &mut R,
) -> Result<GlrlOutcome<S>> {
    cfg.validate()?;
    let spec = LossSpec::new(truth.clone(), S::zero())?;
    let search = PowerConfig {
        restarts: cfg.rank1_restarts,
        ..PowerConfig::default()
    };
    let mut model = ComponentModel::empty(truth.dim());
    let mut saddles = vec![model.clone()];
    let mut residuals = vec![residual_frobenius(truth, &model)?];
    for s in 1..=cfg.epochs {
        let fit = best_rank1(truth, &model, &search, cfg.step_size, rng)?;
        model.push(Component::new(
            fit.direction,
            cfg.seed_norm * cfg.seed_norm,
        )?)?;
        let stepper = StepperConfig {
            step_size: cfg.step_size,
            max_steps: s * cfg.iters_factor,
        };
        model = spec.gradient_descent(model, &stepper, |_, _| {})?;
        saddles.push(model.clone());
        residuals.push(residual_frobenius(truth, &model)?);
    }
    Ok(GlrlOutcome {
        model,
        saddles: SaddleLibrary::new(saddles)?,
        residuals,
    })
}
