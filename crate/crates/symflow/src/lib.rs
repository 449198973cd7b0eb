//! Gradient-flow decomposition of symmetric 4th-order tensors.
//!
//! A target tensor `T* = Σᵢ aᵢ uᵢ⊗⁴` is fitted by an over-parametrized model
//! `T = Σⱼ wⱼ⊗⁴/‖wⱼ‖²` evolving under (time-discretized) gradient flow of the
//! regularized Frobenius loss. The crate provides:
//!
//! * [`tensor`] — factored rank-one-sum representations and scale-safe
//!   contractions (squared norms down to 1e-200 never underflow);
//! * [`dense`] — a dense reference implementation for cross-checking;
//! * [`truth`] — target constructors and random initializations;
//! * [`flow`] — the loss, its factored gradient dynamics, and the Euler
//!   stepper;
//! * [`baselines`] — tensor power iteration, best rank-one search, greedy
//!   deflation, and greedy low-rank learning with its saddle library;
//! * [`epochs`] — the multi-epoch thresholded flow (discovery phase,
//!   reinitialization, fitting phase, geometric β-schedule);
//! * [`monitor`] — runtime verification of the quantities the convergence
//!   analysis tracks (discovery sets, fitted mass, induction conditions,
//!   initialization partition, rate bounds, norm bound).
//!
//! Everything is generic over the floating-point type through
//! [`scalar::Scalar`]; the `*64` aliases below fix `f64`, which is what the
//! companion CLI uses.

pub mod baselines;
pub mod dense;
pub mod epochs;
pub mod error;
pub mod flow;
pub mod monitor;
pub mod scalar;
pub mod tensor;
pub mod truth;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// `f64` unit vector.
pub type UnitVector64 = tensor::UnitVector<f64>;
/// `f64` model component.
pub type Component64 = tensor::Component<f64>;
/// `f64` component model.
pub type ComponentModel64 = tensor::ComponentModel<f64>;
/// `f64` ground truth.
pub type GroundTruth64 = tensor::GroundTruth<f64>;
/// `f64` dense tensor.
pub type DenseSymTensor464 = dense::DenseSymTensor4<f64>;
/// `f64` loss specification.
pub type LossSpec64 = flow::LossSpec<f64>;
/// `f64` stepper settings.
pub type StepperConfig64 = flow::StepperConfig<f64>;
/// `f64` power-iteration settings.
pub type PowerConfig64 = baselines::PowerConfig<f64>;
/// `f64` greedy low-rank learning settings.
pub type GlrlConfig64 = baselines::GlrlConfig<f64>;
/// `f64` saddle library.
pub type SaddleLibrary64 = baselines::SaddleLibrary<f64>;
/// `f64` multi-epoch flow parameters.
pub type AlgoParams64 = epochs::AlgoParams<f64>;
/// `f64` epoch schedule.
pub type EpochSchedule64 = epochs::EpochSchedule<f64>;
/// `f64` discovery sets.
pub type DiscoverySets64 = monitor::DiscoverySets<f64>;
