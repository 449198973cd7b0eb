//! The multi-epoch thresholded flow: tiny uniform initialization, a long
//! discovery phase, reinitialization of still-small components, a short
//! fitting phase, and a geometrically decaying per-epoch threshold β.
//!
//! Epoch `s` targets the not-yet-fitted directions with weight around
//! `β^(s)`: Phase 1 runs long enough for a well-aligned tiny component to
//! grow past `δ₁` and latch, everything still below `δ₁` is reinitialized,
//! and Phase 2 runs just long enough for the latched mass to climb to its
//! `λ`-regularized equilibrium. Then `β^{s+1} = β^s(1−γ)`.

use crate::error::{Error, Result};
use crate::flow::LossSpec;
use crate::monitor::{fitted_mass, update_discovery, DiscoverySets};
use crate::scalar::Scalar;
use crate::tensor::{Component, ComponentModel, GroundTruth};
use crate::truth::{random_model, sample_unit_sphere};
use rand::Rng;

/// All hyperparameters of the multi-epoch flow. The `c_*` fields expose the
/// analysis' unspecified absolute constants; the defaults are desk-scale
/// values tuned so a d=10 run terminates (see [`Self::theorem_warnings`] for
/// how far that regime sits from the proven one).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(
        bound = "S: serde::Serialize + serde::de::DeserializeOwned + crate::scalar::Scalar",
        default,
        deny_unknown_fields
    )
)]
pub struct AlgoParams<S> {
    /// Number of model components (over-parametrization, `m > r`).
    pub m: usize,
    /// Target residual accuracy ε.
    pub epsilon: S,
    /// Per-epoch threshold decay, `β^{s+1} = β^s(1−γ)`.
    pub gamma: S,
    /// Regularization coefficient λ.
    pub lambda: S,
    /// Correlation slack α in the discovery condition `⟨w̄,u_k⟩² ≥ 1−α`.
    pub alpha: S,
    /// Reinitialization threshold δ₁ (components below it restart).
    pub delta1: S,
    /// Initialization norm δ₀.
    pub delta0: S,
    /// Euler step size η.
    pub eta: S,
    /// Constant on the Phase-1 leading duration `d/(β ln d)`.
    pub c_t1a: S,
    /// Constant on the Phase-1 correction duration `d/(β ln³ d)`.
    pub c_t1b: S,
    /// Constant on the Phase-1 alignment duration `ln(d/α)/β`.
    pub c_t1c: S,
    /// Constant on the Phase-2 duration `(ln(1/δ₁)+ln(1/λ))/β`.
    pub c_t2: S,
    /// Margin factor `ρᵢ = c_ρ·Γᵢ` in the initialization partition.
    pub c_rho: S,
}

impl<S: Scalar> Default for AlgoParams<S> {
    fn default() -> Self {
        Self {
            m: 50,
            epsilon: S::cast(0.05),
            gamma: S::cast(0.3),
            lambda: S::cast(1e-3),
            alpha: S::cast(1e-3),
            delta1: S::cast(1e-4),
            delta0: S::cast(1e-6),
            eta: S::cast(0.05),
            c_t1a: S::one(),
            c_t1b: S::one(),
            c_t1c: S::cast(4.0),
            c_t2: S::cast(4.0),
            c_rho: S::cast(0.005),
        }
    }
}

impl<S: Scalar> AlgoParams<S> {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: S| -> Result<()> {
            if !(v.is_finite() && v > S::zero() && v < S::one()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie in (0,1), got {v}"
                )));
            }
            Ok(())
        };
        unit("epsilon", self.epsilon)?;
        unit("gamma", self.gamma)?;
        unit("lambda", self.lambda)?;
        unit("alpha", self.alpha)?;
        unit("delta1", self.delta1)?;
        unit("delta0", self.delta0)?;
        if self.delta0 >= self.delta1 {
            return Err(Error::InvalidParameter(format!(
                "delta0 must be smaller than delta1, got {} ≥ {}",
                self.delta0, self.delta1
            )));
        }
        if !(self.eta.is_finite() && self.eta > S::zero()) {
            return Err(Error::InvalidParameter(format!(
                "eta must be finite and positive, got {}",
                self.eta
            )));
        }
        if self.m == 0 {
            return Err(Error::InvalidParameter("m must be ≥ 1".into()));
        }
        for (name, v) in [
            ("c_t1a", self.c_t1a),
            ("c_t1b", self.c_t1b),
            ("c_t1c", self.c_t1c),
            ("c_t2", self.c_t2),
            ("c_rho", self.c_rho),
        ] {
            if !(v.is_finite() && v > S::zero()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Non-fatal checks of the parameter orderings the convergence guarantee
    /// assumes (with all absolute constants taken as 1). Desk-scale presets
    /// deliberately violate several of them — the run still makes sense, the
    /// quantitative guarantees just don't transfer.
    pub fn theorem_warnings(&self, d: usize) -> Vec<String> {
        let mut out = Vec::new();
        let df = S::from_count(d);
        let ln_d = df.ln();
        let lambda_bound = (ln_d / df).min(self.epsilon / df.sqrt());
        if self.lambda > lambda_bound {
            out.push(format!(
                "lambda = {} exceeds min(ln d/d, ε/√d) = {lambda_bound} (constants as 1)",
                self.lambda
            ));
        }
        let alpha_bound = (self.lambda / df.powf(S::cast(1.5)))
            .min(self.lambda * self.lambda)
            .min(self.epsilon * self.epsilon / df.powi(4));
        if self.alpha > alpha_bound {
            out.push(format!(
                "alpha = {} exceeds min(λ/d^1.5, λ², ε²/d⁴) = {alpha_bound} (constants as 1)",
                self.alpha
            ));
        }
        let delta1_bound = self.alpha.powf(S::cast(1.5)) / S::from_count(self.m).sqrt();
        if self.delta1 > delta1_bound {
            out.push(format!(
                "delta1 = {} exceeds α^1.5/√m = {delta1_bound} (constants as 1)",
                self.delta1
            ));
        }
        let delta0_target = self.delta1 * self.alpha / ln_d.sqrt();
        let ten = S::cast(10.0);
        if self.delta0 > ten * delta0_target || self.delta0 < delta0_target / ten {
            out.push(format!(
                "delta0 = {} is not within 10x of δ₁α/√(ln d) = {delta0_target}",
                self.delta0
            ));
        }
        out
    }
}

/// Continuous-time durations of one epoch at threshold `β`.
#[derive(Debug, Clone, Copy)]
pub struct EpochSchedule<S> {
    pub beta: S,
    /// Leading discovery duration `c_t1a·d/(β ln d)`.
    pub t1_a: S,
    /// Correction duration `c_t1b·d/(β ln³ d)`.
    pub t1_b: S,
    /// Alignment-sharpening duration `c_t1c·ln(d/α)/β`.
    pub t1_c: S,
    /// Fitting duration `c_t2·(ln(1/δ₁)+ln(1/λ))/β`.
    pub t2_minus_t1: S,
}

impl<S: Scalar> EpochSchedule<S> {
    pub fn for_epoch(params: &AlgoParams<S>, d: usize, beta: S) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidParameter(format!(
                "schedule needs d ≥ 2 (ln d > 0), got {d}"
            )));
        }
        if !(beta.is_finite() && beta > S::zero()) {
            return Err(Error::InvalidParameter(format!(
                "beta must be finite and positive, got {beta}"
            )));
        }
        let df = S::from_count(d);
        let ln_d = df.ln();
        let t1_a = params.c_t1a * df / (beta * ln_d);
        let t1_b = params.c_t1b * df / (beta * ln_d.powi(3));
        let t1_c = params.c_t1c * (df / params.alpha).ln() / beta;
        let t2_minus_t1 =
            params.c_t2 * (params.delta1.recip().ln() + params.lambda.recip().ln()) / beta;
        Ok(Self {
            beta,
            t1_a,
            t1_b,
            t1_c,
            t2_minus_t1,
        })
    }

    pub fn t1_total(&self) -> S {
        self.t1_a + self.t1_b + self.t1_c
    }

    /// Whole Euler steps covering Phase 1 (durations round up).
    pub fn phase1_steps(&self, eta: S) -> Result<usize> {
        duration_steps(self.t1_total(), eta)
    }

    /// Whole Euler steps covering Phase 2.
    pub fn phase2_steps(&self, eta: S) -> Result<usize> {
        duration_steps(self.t2_minus_t1, eta)
    }
}

fn duration_steps<S: Scalar>(duration: S, eta: S) -> Result<usize> {
    let steps = (duration / eta).ceil();
    steps
        .to_usize()
        .ok_or_else(|| Error::InvalidParameter(format!("phase of {steps} steps is not runnable")))
}

/// Which half of an epoch a step belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseTag {
    One,
    Two,
}

/// What a [`StepView`] describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepEvent {
    /// The initial model, before any step (step count 0).
    Init,
    /// One completed Euler step.
    Step,
    /// Phase 1 of the current epoch just finished (no step advanced).
    Phase1End,
    /// Components below δ₁ were just replaced (no step advanced).
    Reinitialized { count: usize },
    /// The epoch just finished (no step advanced).
    EpochEnd,
}

/// Snapshot handed to run observers.
#[derive(Debug)]
pub struct StepView<'a, S: Scalar> {
    pub epoch: usize,
    pub phase: PhaseTag,
    /// Euler steps completed since the start of the run.
    pub step: usize,
    /// Continuous time, maintained as exactly `step · η` (the product, not an
    /// accumulated sum, so the stamp is reproducible from the step count).
    pub time: S,
    /// Threshold β^(s) of the current epoch.
    pub beta: S,
    pub model: &'a ComponentModel<S>,
    pub discovery: &'a DiscoverySets<S>,
    pub event: StepEvent,
}

/// Mutable state threaded through epochs.
#[derive(Debug, Clone)]
pub struct RunState<S: Scalar> {
    pub model: ComponentModel<S>,
    pub discovery: DiscoverySets<S>,
    pub epoch: usize,
    pub step: usize,
    pub time: S,
    pub beta: S,
}

/// `m` components with directions uniform on the sphere and norm δ₀.
pub fn init_model<S: Scalar, R: Rng + ?Sized>(
    params: &AlgoParams<S>,
    d: usize,
    rng: &mut R,
) -> Result<ComponentModel<S>> {
    random_model(d, params.m, params.delta0, rng)
}

/// Replaces every component with norm `< δ₁` by a fresh δ₀-scale sphere
/// sample; returns the new model and the replaced indices (ascending).
pub fn reinitialize_small<S: Scalar, R: Rng + ?Sized>(
    model: &ComponentModel<S>,
    params: &AlgoParams<S>,
    rng: &mut R,
) -> Result<(ComponentModel<S>, Vec<usize>)> {
    let mut out = model.clone();
    let mut replaced = Vec::new();
    let fresh_sq = params.delta0 * params.delta0;
    for j in 0..model.len() {
        if model.components()[j].norm() < params.delta1 {
            let direction = sample_unit_sphere(model.dim(), rng);
            out.replace(j, Component::new(direction, fresh_sq)?)?;
            replaced.push(j);
        }
    }
    Ok((out, replaced))
}

fn view<'a, S: Scalar>(
    state: &'a RunState<S>,
    phase: PhaseTag,
    event: StepEvent,
) -> StepView<'a, S> {
    StepView {
        epoch: state.epoch,
        phase,
        step: state.step,
        time: state.time,
        beta: state.beta,
        model: &state.model,
        discovery: &state.discovery,
        event,
    }
}

fn advance<S: Scalar, F: FnMut(StepView<S>)>(
    state: &mut RunState<S>,
    spec: &LossSpec<S>,
    params: &AlgoParams<S>,
    phase: PhaseTag,
    observer: &mut F,
) -> Result<()> {
    let norms_before: Vec<S> = state.model.components().iter().map(|c| c.norm()).collect();
    state.model = spec.euler_step(&state.model, params.eta)?;
    state.step += 1;
    state.time = S::from_count(state.step) * params.eta;
    update_discovery(
        &mut state.discovery,
        &norms_before,
        &state.model,
        spec.truth(),
        params,
        state.epoch,
        state.step,
    );
    observer(view(state, phase, StepEvent::Step));
    Ok(())
}

/// One full epoch at the schedule's threshold: Phase 1, reinitialization of
/// sub-δ₁ components (with their discovery latches cleared), Phase 2. The
/// observer sees every step plus the three boundary events.
pub fn run_epoch<S: Scalar, R: Rng + ?Sized, F: FnMut(StepView<S>)>(
    state: &mut RunState<S>,
    spec: &LossSpec<S>,
    params: &AlgoParams<S>,
    schedule: &EpochSchedule<S>,
    rng: &mut R,
    observer: &mut F,
) -> Result<()> {
    state.beta = schedule.beta;
    for _ in 0..schedule.phase1_steps(params.eta)? {
        advance(state, spec, params, PhaseTag::One, observer)?;
    }
    observer(view(state, PhaseTag::One, StepEvent::Phase1End));
    let (model, replaced) = reinitialize_small(&state.model, params, rng)?;
    state.model = model;
    state.discovery.note_reinitialized(&replaced);
    observer(view(
        state,
        PhaseTag::One,
        StepEvent::Reinitialized {
            count: replaced.len(),
        },
    ));
    for _ in 0..schedule.phase2_steps(params.eta)? {
        advance(state, spec, params, PhaseTag::Two, observer)?;
    }
    observer(view(state, PhaseTag::Two, StepEvent::EpochEnd));
    Ok(())
}

/// Hard cap on epochs: `10·⌈ln(d/ε)/γ⌉`.
pub fn epoch_cap<S: Scalar>(params: &AlgoParams<S>, d: usize) -> Result<usize> {
    let raw = (S::from_count(d) / params.epsilon).ln() / params.gamma;
    let ceiled = raw.ceil();
    ceiled
        .to_usize()
        .map(|c| 10 * c)
        .ok_or_else(|| Error::InvalidParameter(format!("epoch cap {ceiled} is not runnable")))
}

/// Outcome of [`run_full`].
#[derive(Debug, Clone)]
pub struct FlowRun<S: Scalar> {
    pub model: ComponentModel<S>,
    pub discovery: DiscoverySets<S>,
    /// Epochs executed (0 when the initial model already meets ε).
    pub epochs_used: usize,
    /// False when the epoch cap was hit before reaching ε.
    pub converged: bool,
    pub final_residual: S,
    /// β^(s) of each executed epoch, starting with the measured β⁰.
    pub beta_history: Vec<S>,
    /// Violations of "once fitted (gap ≤ λ+smδ₁²), the gap stays ≤ 2λ at
    /// every later epoch boundary".
    pub fitted_warnings: Vec<String>,
}

/// Runs the full multi-epoch flow from a fresh δ₀ initialization.
pub fn run_full<S: Scalar, R: Rng + ?Sized, F: FnMut(StepView<S>)>(
    params: &AlgoParams<S>,
    truth: &GroundTruth<S>,
    rng: &mut R,
    observer: F,
) -> Result<FlowRun<S>> {
    params.validate()?;
    let model = init_model(params, truth.dim(), rng)?;
    run_full_from(params, truth, model, rng, observer)
}

/// Runs the full multi-epoch flow from a caller-provided initial model:
/// measures `β⁰ = ‖T⁰ − T*‖_F`, then loops epochs with `β^{s+1} = β^s(1−γ)`
/// until the epoch-start residual is `≤ ε` or the epoch cap is hit.
pub fn run_full_from<S: Scalar, R: Rng + ?Sized, F: FnMut(StepView<S>)>(
    params: &AlgoParams<S>,
    truth: &GroundTruth<S>,
    model: ComponentModel<S>,
    rng: &mut R,
    mut observer: F,
) -> Result<FlowRun<S>> {
    params.validate()?;
    let spec = LossSpec::new(truth.clone(), params.lambda)?;
    let mut state = RunState {
        discovery: DiscoverySets::new(model.len(), truth.rank()),
        model,
        epoch: 0,
        step: 0,
        time: S::zero(),
        beta: S::zero(),
    };
    state.beta = spec.residual_norm(&state.model)?;
    observer(view(&state, PhaseTag::One, StepEvent::Init));

    let cap = epoch_cap(params, truth.dim())?;
    let mut beta_history = Vec::new();
    let mut fitted_warnings = Vec::new();
    let mut fitted_since: Vec<Option<usize>> = vec![None; truth.rank()];
    let two_lambda = S::cast(2.0) * params.lambda;

    let (converged, final_residual) = loop {
        let residual = spec.residual_norm(&state.model)?;
        if residual <= params.epsilon {
            break (true, residual);
        }
        if state.epoch >= cap {
            break (false, residual);
        }
        let schedule = EpochSchedule::for_epoch(params, truth.dim(), state.beta)?;
        beta_history.push(state.beta);
        run_epoch(&mut state, &spec, params, &schedule, rng, &mut observer)?;

        let fm = fitted_mass(&state.discovery, &state.model);
        let s_correction = S::from_count(state.epoch)
            * S::from_count(state.model.len())
            * params.delta1
            * params.delta1;
        for (k, since) in fitted_since.iter_mut().enumerate() {
            let gap = truth.weights()[k] - fm.a_hat[k];
            match *since {
                Some(first_epoch) => {
                    if gap > two_lambda {
                        fitted_warnings.push(format!(
                            "direction {k}: fitted at epoch {first_epoch} but gap {gap} > 2λ \
                             at end of epoch {}",
                            state.epoch
                        ));
                    }
                }
                None => {
                    if gap <= params.lambda + s_correction {
                        *since = Some(state.epoch);
                    }
                }
            }
        }

        state.epoch += 1;
        state.beta *= S::one() - params.gamma;
    };

    Ok(FlowRun {
        model: state.model,
        discovery: state.discovery,
        epochs_used: state.epoch,
        converged,
        final_residual,
        beta_history,
        fitted_warnings,
    })
}
