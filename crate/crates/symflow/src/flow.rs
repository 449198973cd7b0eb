//! Gradient dynamics of the decomposition loss.
//!
//! The loss over component parameters `W = (w₁, …, w_m)` is
//! `L(W) = ½‖T − T*‖²_F + (λ/2) Σⱼ ‖wⱼ‖²` with `T = Σⱼ wⱼ⊗⁴/‖wⱼ‖²`.
//! Writing `w = √c · v̄` (unit direction `v̄`, squared norm `c`) and
//! `R = T* − T`, the negative gradient flow `dw/dt = −∇L` splits into
//!
//! * radial:  `(1/(2c)) dc/dt = 2 R(v̄⊗⁴) − λ`
//! * tangent: `dv̄/dt = 4 (R(v̄⊗³, I) − R(v̄⊗⁴) v̄)`
//!
//! and the implementation only ever evaluates these factored rates, so
//! squared norms of 1e-200 flow without underflow. `R` always includes the
//! component's own rank-one term (full self-interaction).

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{contract31, dot, Component, ComponentModel, GroundTruth, UnitVector};

/// Floor on the multiplicative Euler update of a squared norm; prevents a
/// very large discrete step from annihilating or sign-flipping a component.
pub const EULER_SQ_NORM_FLOOR: f64 = 1e-6;

/// `R(v⊗³, I)` for the residual `R = T* − T`.
pub fn residual_action31<S: Scalar>(
    truth: &GroundTruth<S>,
    model: &ComponentModel<S>,
    v: &UnitVector<S>,
) -> Result<Vec<S>> {
    let from_truth = contract31(truth, v)?;
    let from_model = contract31(model, v)?;
    Ok(from_truth
        .iter()
        .zip(&from_model)
        .map(|(&a, &b)| a - b)
        .collect())
}

/// `R(v⊗⁴)` for the residual `R = T* − T`.
pub fn residual_action4<S: Scalar>(
    truth: &GroundTruth<S>,
    model: &ComponentModel<S>,
    v: &UnitVector<S>,
) -> Result<S> {
    let r3 = residual_action31(truth, model, v)?;
    Ok(dot(&r3, v.as_slice()))
}

/// The regularized fitting loss for a fixed target tensor.
#[derive(Debug, Clone)]
pub struct LossSpec<S: Scalar> {
    truth: GroundTruth<S>,
    lambda: S,
}

/// Time discretization of the flow: each discrete step advances continuous
/// time by `step_size`.
#[derive(Debug, Clone, Copy)]
pub struct StepperConfig<S> {
    pub step_size: S,
    pub max_steps: usize,
}

impl<S: Scalar> StepperConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size.is_finite() && self.step_size > S::zero()) {
            return Err(Error::InvalidParameter(format!(
                "step size must be finite and positive, got {}",
                self.step_size
            )));
        }
        Ok(())
    }
}

/// Factored instantaneous rates of one component under `dw/dt = −∇L`.
#[derive(Debug, Clone)]
pub struct FlowRates<S> {
    /// `(1/(2c)) dc/dt`, the relative growth rate of the squared norm.
    pub radial: S,
    /// `dv̄/dt`, orthogonal to `v̄` up to round-off.
    pub tangent: Vec<S>,
}

impl<S: Scalar> LossSpec<S> {
    pub fn new(truth: GroundTruth<S>, lambda: S) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= S::zero()) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be finite and nonnegative, got {lambda}"
            )));
        }
        Ok(Self { truth, lambda })
    }

    pub fn truth(&self) -> &GroundTruth<S> {
        &self.truth
    }

    pub fn lambda(&self) -> S {
        self.lambda
    }

    /// `L(W) = ½‖T − T*‖²_F + (λ/2) Σⱼ ‖wⱼ‖²`.
    pub fn loss(&self, model: &ComponentModel<S>) -> Result<S> {
        let dist = crate::tensor::distance_frobenius(&self.truth, model)?;
        let half = S::cast(0.5);
        Ok(half * dist * dist + half * self.lambda * model.sum_sq_norms())
    }

    /// `‖T − T*‖_F`.
    pub fn residual_norm(&self, model: &ComponentModel<S>) -> Result<S> {
        crate::tensor::residual_frobenius(&self.truth, model)
    }

    /// `R(v⊗³, I)` with `R = T* − T`.
    pub fn residual_on31(&self, model: &ComponentModel<S>, v: &UnitVector<S>) -> Result<Vec<S>> {
        residual_action31(&self.truth, model, v)
    }

    /// `R(v⊗⁴)` with `R = T* − T`.
    pub fn residual_on4(&self, model: &ComponentModel<S>, v: &UnitVector<S>) -> Result<S> {
        residual_action4(&self.truth, model, v)
    }

    /// Radial and tangent rates of component `j` against the full model.
    pub fn component_rates(&self, model: &ComponentModel<S>, j: usize) -> Result<FlowRates<S>> {
        let v = model.component(j)?.direction();
        let r3 = self.residual_on31(model, v)?;
        let r4 = dot(&r3, v.as_slice());
        let radial = S::cast(2.0) * r4 - self.lambda;
        let four = S::cast(4.0);
        let tangent: Vec<S> = r3
            .iter()
            .zip(v.as_slice())
            .map(|(&r3i, &vi)| four * (r3i - r4 * vi))
            .collect();
        if !radial.is_finite() || tangent.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFiniteGradient { component: j });
        }
        Ok(FlowRates { radial, tangent })
    }

    /// Raw parameter-space gradient `∇_{wⱼ} L`, reconstructed from the
    /// factored rates as `−√c (radial·v̄ + tangent)` negated.
    pub fn component_gradient(&self, model: &ComponentModel<S>, j: usize) -> Result<Vec<S>> {
        let comp = model.component(j)?;
        let rates = self.component_rates(model, j)?;
        let sqrt_c = comp.norm();
        Ok(comp
            .direction()
            .as_slice()
            .iter()
            .zip(&rates.tangent)
            .map(|(&vi, &ti)| -(sqrt_c * (rates.radial * vi + ti)))
            .collect())
    }

    /// Instantaneous `d[v̄_k²]/dt` of component `j`'s unit direction:
    /// `8 v̄_k (R₃ − R₄ v̄)_k`. Independent of λ, which acts only radially.
    pub fn analytic_direction_rate(
        &self,
        model: &ComponentModel<S>,
        j: usize,
        k: usize,
    ) -> Result<S> {
        let comp = model.component(j)?;
        let d = comp.direction().dim();
        if k >= d {
            return Err(Error::IndexOutOfRange { index: k, len: d });
        }
        let rates = self.component_rates(model, j)?;
        let vk = comp.direction().as_slice()[k];
        Ok(S::cast(2.0) * vk * rates.tangent[k])
    }

    /// Instantaneous `d⟨v̄, u⟩²/dt` of component `j`'s unit direction against
    /// an arbitrary unit probe `u`: `2⟨v̄,u⟩⟨dv̄/dt, u⟩`. Reduces to
    /// [`Self::analytic_direction_rate`] when `u` is a basis vector.
    pub fn alignment_rate(
        &self,
        model: &ComponentModel<S>,
        j: usize,
        u: &UnitVector<S>,
    ) -> Result<S> {
        let comp = model.component(j)?;
        if u.dim() != comp.direction().dim() {
            return Err(Error::DimensionMismatch {
                expected: comp.direction().dim(),
                got: u.dim(),
            });
        }
        let rates = self.component_rates(model, j)?;
        let cos = comp.direction().dot(u);
        let drift = dot(&rates.tangent, u.as_slice());
        Ok(S::cast(2.0) * cos * drift)
    }

    /// One synchronous explicit Euler step of size `eta` on every component:
    /// all rates are evaluated against the incoming model, then
    /// `c ← c · max(1 + 2η·radial, floor)` and `v̄ ← normalize(v̄ + η·tangent)`.
    /// Matches the raw parameter update to `O(η²)`.
    pub fn euler_step(&self, model: &ComponentModel<S>, eta: S) -> Result<ComponentModel<S>> {
        if !(eta.is_finite() && eta > S::zero()) {
            return Err(Error::InvalidParameter(format!(
                "step size must be finite and positive, got {eta}"
            )));
        }
        let floor = S::cast(EULER_SQ_NORM_FLOOR);
        let two = S::cast(2.0);
        let mut updated = Vec::with_capacity(model.len());
        for j in 0..model.len() {
            let comp = model.component(j)?;
            let rates = self.component_rates(model, j)?;
            let growth = (S::one() + two * eta * rates.radial).max(floor);
            let new_sq = comp.sq_norm() * growth;
            let moved: Vec<S> = comp
                .direction()
                .as_slice()
                .iter()
                .zip(&rates.tangent)
                .map(|(&vi, &ti)| vi + eta * ti)
                .collect();
            let direction = UnitVector::new(moved)?;
            updated.push(Component::new(direction, new_sq)?);
        }
        ComponentModel::new(model.dim(), updated)
    }

    /// Runs `cfg.max_steps` Euler steps, invoking `observer(t, &model)` after
    /// step `t = 1, …, max_steps`. Returns the final model.
    pub fn gradient_descent(
        &self,
        mut model: ComponentModel<S>,
        cfg: &StepperConfig<S>,
        mut observer: impl FnMut(usize, &ComponentModel<S>),
    ) -> Result<ComponentModel<S>> {
        cfg.validate()?;
        for t in 1..=cfg.max_steps {
            model = self.euler_step(&model, cfg.step_size)?;
            observer(t, &model);
        }
        Ok(model)
    }
}
