//! Runtime monitors for the quantities the convergence analysis tracks:
//! which target direction each component has latched onto, how much squared
//! norm is fitted per direction, the per-epoch induction conditions, the
//! initialization partition, direction-rate lower bounds, the
//! mirror-pair counterexample to naive rate arguments, and the norm bound
//! relating total component mass to the tensor norm.

use crate::epochs::{AlgoParams, EpochSchedule};
use crate::error::{Error, Result};
use crate::flow::LossSpec;
use crate::scalar::Scalar;
use crate::tensor::{
    pairwise_inner, Component, ComponentModel, GroundTruth, Normalization, RankOneSum, UnitVector,
};

/// One qualifying threshold crossing: the component's norm passed `δ₁` from
/// below while its direction was `1−α`-aligned with target direction `k`.
#[derive(Debug, Clone)]
pub struct CrossingRecord<S> {
    pub component: usize,
    pub epoch: usize,
    pub step: usize,
    pub direction: usize,
    /// `⟨w̄, u_k⟩²` measured just after the crossing step.
    pub correlation: S,
}

/// Latched assignment of components to target directions (the sets `S_k`).
/// A component enters `S_k` at a qualifying crossing and stays there until it
/// is reinitialized; at any moment it belongs to at most one set.
#[derive(Debug, Clone)]
pub struct DiscoverySets<S> {
    assignment: Vec<Option<usize>>,
    num_directions: usize,
    log: Vec<CrossingRecord<S>>,
}

impl<S: Scalar> DiscoverySets<S> {
    pub fn new(num_components: usize, num_directions: usize) -> Self {
        Self {
            assignment: vec![None; num_components],
            num_directions,
            log: Vec::new(),
        }
    }

    pub fn num_components(&self) -> usize {
        self.assignment.len()
    }

    pub fn num_directions(&self) -> usize {
        self.num_directions
    }

    /// Current direction of component `j`, if latched.
    pub fn direction_of(&self, j: usize) -> Option<usize> {
        self.assignment.get(j).copied().flatten()
    }

    /// Component indices currently in `S_k`.
    pub fn members(&self, k: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter_map(|(j, a)| (*a == Some(k)).then_some(j))
            .collect()
    }

    /// Components not in any set.
    pub fn unaffiliated(&self) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter_map(|(j, a)| a.is_none().then_some(j))
            .collect()
    }

    /// Full crossing history (reinitialized members keep their old records).
    pub fn log(&self) -> &[CrossingRecord<S>] {
        &self.log
    }

    /// Epoch of the earliest qualifying crossing for direction `k`.
    pub fn first_discovery_epoch(&self, k: usize) -> Option<usize> {
        self.log
            .iter()
            .filter(|c| c.direction == k)
            .map(|c| c.epoch)
            .min()
    }

    /// Removes reinitialized components from their sets (their history stays
    /// in the log; a later qualifying crossing may latch them again).
    pub fn note_reinitialized(&mut self, replaced: &[usize]) {
        for &j in replaced {
            if let Some(slot) = self.assignment.get_mut(j) {
                *slot = None;
            }
        }
    }
}

/// Latches qualifying crossings after one Euler step: a component whose norm
/// moved from `< δ₁` to `≥ δ₁` this step joins `S_k` for its best-aligned
/// direction `k` if `⟨w̄, u_k⟩² ≥ 1−α` (direction measured post-step).
/// Already-latched components are left alone.
pub fn update_discovery<S: Scalar>(
    sets: &mut DiscoverySets<S>,
    norms_before: &[S],
    after: &ComponentModel<S>,
    truth: &GroundTruth<S>,
    params: &AlgoParams<S>,
    epoch: usize,
    step: usize,
) {
    debug_assert_eq!(norms_before.len(), after.len());
    let threshold = params.delta1;
    for (j, (&norm_before, comp)) in norms_before.iter().zip(after.components()).enumerate() {
        if sets.direction_of(j).is_some() {
            continue;
        }
        if norm_before < threshold && comp.norm() >= threshold {
            let (k, corr) = truth.best_aligned_direction(comp.direction());
            if corr >= S::one() - params.alpha {
                sets.assignment[j] = Some(k);
                sets.log.push(CrossingRecord {
                    component: j,
                    epoch,
                    step,
                    direction: k,
                    correlation: corr,
                });
            }
        }
    }
}

/// Fitted squared norm per target direction: `â_k = Σ_{j∈S_k} sq_norm_j`.
#[derive(Debug, Clone)]
pub struct FittedMass<S> {
    pub a_hat: Vec<S>,
}

pub fn fitted_mass<S: Scalar>(sets: &DiscoverySets<S>, model: &ComponentModel<S>) -> FittedMass<S> {
    let mut a_hat = vec![S::zero(); sets.num_directions()];
    for (j, assigned) in sets.assignment.iter().enumerate() {
        if let Some(k) = *assigned {
            a_hat[k] += model.components()[j].sq_norm();
        }
    }
    FittedMass { a_hat }
}

/// Margins for the four per-epoch induction conditions. Positive margin =
/// condition satisfied; `None` = vacuous (no members / threshold not active).
#[derive(Debug, Clone)]
pub struct InductionReport<S> {
    pub epoch: usize,
    /// (a) per direction: `min_{j∈S_k} ⟨w̄_j,u_k⟩² − (1−α)`.
    pub corr_min_margin: Vec<Option<S>>,
    /// (b) per direction: sq_norm-weighted mean of `⟨w̄_j,u_k⟩²` minus
    /// `1 − α² − 4·s·m·δ₁²`.
    pub corr_avg_margin: Vec<Option<S>>,
    /// (c) lower: `(a_k − â_k) − (λ/6 − s·m·δ₁²)`.
    pub gap_lower_margin: Vec<S>,
    /// (c) upper, active only when `a_k ≥ β/(1−γ)`:
    /// `(λ + s·m·δ₁²) − (a_k − â_k)`.
    pub gap_upper_margin: Vec<Option<S>>,
    /// (d) `δ₁ − max_{j unaffiliated} ‖w_j‖`; `None` when every component is
    /// latched.
    pub unaffiliated_margin: Option<S>,
}

impl<S: Scalar> InductionReport<S> {
    /// Conditions (a) and (d) — the ones the desk runs must satisfy exactly.
    pub fn hard_conditions_ok(&self) -> bool {
        self.corr_min_margin
            .iter()
            .flatten()
            .all(|&m| m >= S::zero())
            && self.unaffiliated_margin.is_none_or(|m| m >= S::zero())
    }

    /// Human-readable warnings for negative (b)/(c) margins, whose absolute
    /// constants the analysis leaves unspecified.
    pub fn soft_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (k, m) in self.corr_avg_margin.iter().enumerate() {
            if let Some(m) = m {
                if *m < S::zero() {
                    out.push(format!(
                        "epoch {}: weighted correlation for direction {k} below bound by {m}",
                        self.epoch
                    ));
                }
            }
        }
        for (k, m) in self.gap_lower_margin.iter().enumerate() {
            if *m < S::zero() {
                out.push(format!(
                    "epoch {}: fitted gap for direction {k} below λ/6 bound by {m}",
                    self.epoch
                ));
            }
        }
        for (k, m) in self.gap_upper_margin.iter().enumerate() {
            if let Some(m) = m {
                if *m < S::zero() {
                    out.push(format!(
                        "epoch {}: fitted gap for direction {k} above λ bound by {m}",
                        self.epoch
                    ));
                }
            }
        }
        out
    }
}

/// Evaluates the four induction conditions at epoch `s` (0-based) with
/// current threshold `beta`:
/// (a) every member of `S_k` stays `1−α`-correlated;
/// (b) the sq_norm-weighted mean correlation stays above `1−α²−4smδ₁²`;
/// (c) `a_k − â_k ≥ λ/6 − smδ₁²`, and additionally `≤ λ + smδ₁²` for
///     directions with `a_k ≥ β/(1−γ)`;
/// (d) every unaffiliated component has norm `≤ δ₁`.
pub fn check_induction<S: Scalar>(
    sets: &DiscoverySets<S>,
    model: &ComponentModel<S>,
    params: &AlgoParams<S>,
    truth: &GroundTruth<S>,
    epoch: usize,
    beta: S,
) -> Result<InductionReport<S>> {
    if model.len() != sets.num_components() || truth.rank() != sets.num_directions() {
        return Err(Error::DimensionMismatch {
            expected: sets.num_components(),
            got: model.len(),
        });
    }
    let r = truth.rank();
    let s_correction =
        S::from_count(epoch) * S::from_count(model.len()) * params.delta1 * params.delta1;
    let fitted = fitted_mass(sets, model);

    let mut corr_min_margin = vec![None; r];
    let mut corr_avg_margin = vec![None; r];
    let mut gap_lower_margin = Vec::with_capacity(r);
    let mut gap_upper_margin = vec![None; r];

    for k in 0..r {
        let members = sets.members(k);
        if !members.is_empty() {
            let mut min_corr = S::infinity();
            let mut mass = S::zero();
            let mut weighted = S::zero();
            for &j in &members {
                let comp = &model.components()[j];
                let corr = truth.squared_alignments(comp.direction())[k];
                min_corr = min_corr.min(corr);
                mass += comp.sq_norm();
                weighted += comp.sq_norm() * corr;
            }
            corr_min_margin[k] = Some(min_corr - (S::one() - params.alpha));
            let avg = if mass > S::zero() {
                weighted / mass
            } else {
                min_corr
            };
            let avg_bound = S::one() - params.alpha * params.alpha - S::cast(4.0) * s_correction;
            corr_avg_margin[k] = Some(avg - avg_bound);
        }
        let gap = truth.weights()[k] - fitted.a_hat[k];
        gap_lower_margin.push(gap - (params.lambda / S::cast(6.0) - s_correction));
        if truth.weights()[k] >= beta / (S::one() - params.gamma) {
            gap_upper_margin[k] = Some(params.lambda + s_correction - gap);
        }
    }

    let unaffiliated_margin = sets
        .unaffiliated()
        .iter()
        .map(|&j| model.components()[j].norm())
        .fold(None, |acc: Option<S>, n| Some(acc.map_or(n, |a| a.max(n))))
        .map(|max_norm| params.delta1 - max_norm);

    Ok(InductionReport {
        epoch,
        corr_min_margin,
        corr_avg_margin,
        gap_lower_margin,
        gap_upper_margin,
        unaffiliated_margin,
    })
}

/// Epoch-start classification of a component by its squared alignments
/// against the per-direction thresholds `Γᵢ ± ρᵢ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentClass {
    /// Above `Γ_k + ρ_k` on direction `k` and below `Γ_j − ρ_j` elsewhere.
    Good(usize),
    /// Above `Γ_k − ρ_k` on direction `k` only.
    Pot(usize),
    /// Above the `Γ − ρ` threshold for two or more directions.
    Bad,
    /// Below every threshold.
    Unclassified,
}

/// Per-direction thresholds and per-component classes at an epoch start.
#[derive(Debug, Clone)]
pub struct PartitionReport<S> {
    /// `Γᵢ`; `None` when the threshold is unreachable (`aᵢ = 0` with `Sᵢ`
    /// empty, or `λ = 0` with `Sᵢ` nonempty — infinite threshold).
    pub gamma: Vec<Option<S>>,
    /// `ρᵢ = c_ρ·Γᵢ`.
    pub rho: Vec<Option<S>>,
    pub classes: Vec<ComponentClass>,
}

impl<S: Scalar> PartitionReport<S> {
    pub fn good_count(&self, k: usize) -> usize {
        self.classes
            .iter()
            .filter(|c| matches!(c, ComponentClass::Good(i) if *i == k))
            .count()
    }

    /// Components meeting at least the `Γ_k − ρ_k` threshold for `k` alone
    /// (good components included).
    pub fn pot_count(&self, k: usize) -> usize {
        self.classes
            .iter()
            .filter(|c| matches!(c, ComponentClass::Good(i) | ComponentClass::Pot(i) if *i == k))
            .count()
    }

    pub fn bad_count(&self) -> usize {
        self.classes
            .iter()
            .filter(|c| matches!(c, ComponentClass::Bad))
            .count()
    }
}

/// Classifies every component at an epoch start. `Γᵢ = 1/(8aᵢt₁ₐ)` while
/// direction `i` is undiscovered (`Sᵢ` empty), else `1/(8λt₁ₐ)`; a component
/// is good for `i` when it clears `Γᵢ + ρᵢ` there and stays below `Γⱼ − ρⱼ`
/// everywhere else, potential when it only clears `Γᵢ − ρᵢ`, and bad when two
/// directions clear their `Γ − ρ` thresholds.
pub fn classify_partition<S: Scalar>(
    model: &ComponentModel<S>,
    sets: &DiscoverySets<S>,
    params: &AlgoParams<S>,
    schedule: &EpochSchedule<S>,
    truth: &GroundTruth<S>,
) -> Result<PartitionReport<S>> {
    if model.len() != sets.num_components() || truth.rank() != sets.num_directions() {
        return Err(Error::DimensionMismatch {
            expected: sets.num_components(),
            got: model.len(),
        });
    }
    let r = truth.rank();
    let eight = S::cast(8.0);
    let mut gamma: Vec<Option<S>> = Vec::with_capacity(r);
    for i in 0..r {
        let scale = if sets.members(i).is_empty() {
            truth.weights()[i]
        } else {
            params.lambda
        };
        let denom = eight * scale * schedule.t1_a;
        gamma.push((denom > S::zero()).then(|| denom.recip()));
    }
    let rho: Vec<Option<S>> = gamma.iter().map(|g| g.map(|g| params.c_rho * g)).collect();

    let classes = model
        .components()
        .iter()
        .map(|comp| {
            let align = truth.squared_alignments(comp.direction());
            let cleared: Vec<usize> = (0..r)
                .filter(|&i| match (gamma[i], rho[i]) {
                    (Some(g), Some(p)) => align[i] >= g - p,
                    _ => false,
                })
                .collect();
            match cleared.as_slice() {
                [] => ComponentClass::Unclassified,
                [i] => {
                    let (g, p) = (gamma[*i].unwrap(), rho[*i].unwrap());
                    if align[*i] >= g + p {
                        ComponentClass::Good(*i)
                    } else {
                        ComponentClass::Pot(*i)
                    }
                }
                _ => ComponentClass::Bad,
            }
        })
        .collect();

    Ok(PartitionReport {
        gamma,
        rho,
        classes,
    })
}

/// Default multiplier on the unspecified `O(α^{1.5})` / `O(α³)` slack terms
/// in the direction-rate lower bounds.
pub const LEMMA_RATE_SLACK: f64 = 10.0;

/// Direction-improvement rates of the members of `S_k`, with margins against
/// the lower bound `8(a_k − â_k)(1 − φ) − slack·α^{1.5}` (per member, with
/// `φ` the member's squared alignment) and its weighted-average analogue with
/// `slack·α³`.
#[derive(Debug, Clone)]
pub struct RateCheck<S> {
    pub individual_min_rate: S,
    pub average_rate: S,
    /// `min_j (rate_j − bound_j)`; nonnegative = bound satisfied.
    pub individual_margin: S,
    /// `average_rate − average_bound`.
    pub average_margin: S,
}

/// Evaluates `d⟨w̄, u_k⟩²/dt` for every member of `S_k` (minimum and
/// sq_norm-weighted average) and compares against the analytic lower bounds
/// with the given slack multiplier.
pub fn lemma1_rates<S: Scalar>(
    sets: &DiscoverySets<S>,
    model: &ComponentModel<S>,
    truth: &GroundTruth<S>,
    params: &AlgoParams<S>,
    k: usize,
    slack: S,
) -> Result<RateCheck<S>> {
    let members = sets.members(k);
    if members.is_empty() {
        return Err(Error::EmptyDiscoverySet { direction: k });
    }
    if k >= truth.rank() {
        return Err(Error::IndexOutOfRange {
            index: k,
            len: truth.rank(),
        });
    }
    let spec = LossSpec::new(truth.clone(), params.lambda)?;
    let gap = truth.weights()[k] - fitted_mass(sets, model).a_hat[k];
    let u_k = &truth.directions()[k];
    let eight = S::cast(8.0);
    let ind_slack = slack * params.alpha.powf(S::cast(1.5));
    let avg_slack = slack * params.alpha.powi(3);

    let mut min_rate = S::infinity();
    let mut min_margin = S::infinity();
    let mut mass = S::zero();
    let mut weighted_rate = S::zero();
    let mut weighted_align = S::zero();
    for &j in &members {
        let comp = &model.components()[j];
        let rate = spec.alignment_rate(model, j, u_k)?;
        let align = truth.squared_alignments(comp.direction())[k];
        let bound = eight * gap * (S::one() - align) - ind_slack;
        min_rate = min_rate.min(rate);
        min_margin = min_margin.min(rate - bound);
        mass += comp.sq_norm();
        weighted_rate += comp.sq_norm() * rate;
        weighted_align += comp.sq_norm() * align;
    }
    let average_rate = weighted_rate / mass;
    let average_align = weighted_align / mass;
    let average_bound = eight * gap * (S::one() - average_align) - avg_slack;
    Ok(RateCheck {
        individual_min_rate: min_rate,
        average_rate,
        individual_margin: min_margin,
        average_margin: average_rate - average_bound,
    })
}

/// The mirror-pair configuration showing that a single component's alignment
/// can *decrease* even though the direction is under-fitted: target `e₀⊗⁴`,
/// two components sharing the `e₀` coordinate (`v̄₀² = 1−α`) with opposite
/// off-axis signs, squared norms `v_sq_norm` and `total_sq_norm − v_sq_norm`.
pub fn claim1_instance<S: Scalar>(
    alpha: S,
    v_sq_norm: S,
    total_sq_norm: S,
    d: usize,
) -> Result<(GroundTruth<S>, ComponentModel<S>)> {
    if d < 2 {
        return Err(Error::InfeasibleGeometry(format!(
            "need d ≥ 2 for an off-axis mass split, got {d}"
        )));
    }
    if !(alpha >= S::zero() && alpha < S::one()) {
        return Err(Error::InfeasibleGeometry(format!(
            "alpha must lie in [0, 1), got {alpha}"
        )));
    }
    if !(total_sq_norm >= S::cast(2.0 / 3.0) && total_sq_norm <= S::one()) {
        return Err(Error::InfeasibleGeometry(format!(
            "total_sq_norm must lie in [2/3, 1], got {total_sq_norm}"
        )));
    }
    if !(v_sq_norm > S::zero() && v_sq_norm <= total_sq_norm) {
        return Err(Error::InfeasibleGeometry(format!(
            "v_sq_norm must lie in (0, total_sq_norm], got {v_sq_norm}"
        )));
    }
    let truth = GroundTruth::new(
        vec![S::one()],
        vec![UnitVector::basis(d, 0)?],
        true,
        Normalization::None,
    )?;
    let on_axis = (S::one() - alpha).sqrt();
    let off_axis = (alpha / S::from_count(d - 1)).sqrt();
    let mut v_entries = vec![off_axis; d];
    v_entries[0] = on_axis;
    let mut w_entries = vec![-off_axis; d];
    w_entries[0] = on_axis;
    let mut components = vec![Component::new(UnitVector::new(v_entries)?, v_sq_norm)?];
    let w_sq_norm = total_sq_norm - v_sq_norm;
    if w_sq_norm > S::zero() {
        components.push(Component::new(UnitVector::new(w_entries)?, w_sq_norm)?);
    }
    Ok((truth, ComponentModel::new(d, components)?))
}

/// `d[v̄₀²]/dt` of the first component in the mirror-pair configuration.
/// Strictly negative for small positive `alpha` once the partner carries
/// most of the mass — the interaction term overwhelms the pull toward `e₀`.
pub fn claim1_check<S: Scalar>(alpha: S, v_sq_norm: S, total_sq_norm: S, d: usize) -> Result<S> {
    let (truth, model) = claim1_instance(alpha, v_sq_norm, total_sq_norm, d)?;
    let spec = LossSpec::new(truth, S::zero())?;
    spec.analytic_direction_rate(&model, 0, 0)
}

/// Slack for [`norm_bound_check`]: the margin must never fall below `−1e-9`.
pub const NORM_BOUND_TOL: f64 = 1e-9;

/// `d·‖T‖_F − Σⱼ‖wⱼ‖²` — nonnegative (up to round-off) for every component
/// model, with equality exactly at rank one.
pub fn norm_bound_check<S: Scalar>(model: &ComponentModel<S>) -> S {
    S::from_count(model.dim()) * model.tensor_frobenius_norm() - model.sum_sq_norms()
}

/// Signed linear combination of fixed unit directions, used as a probe tensor.
struct SignedProbe<'a, S> {
    directions: &'a [UnitVector<S>],
    coefficients: Vec<S>,
}

impl<S: Scalar> RankOneSum<S> for SignedProbe<'_, S> {
    fn dim(&self) -> usize {
        self.directions[0].dim()
    }
    fn num_terms(&self) -> usize {
        self.directions.len()
    }
    fn term(&self, j: usize) -> (&[S], S) {
        (self.directions[j].as_slice(), self.coefficients[j])
    }
}

/// `‖Δ‖_F` where `Δ = (T* − T) − Σ_k (a_k − â_k) u_k⊗⁴`: the part of the
/// residual not explained by the fitted-mass gaps along the target directions.
pub fn delta_frobenius<S: Scalar>(
    truth: &GroundTruth<S>,
    model: &ComponentModel<S>,
    fitted: &FittedMass<S>,
) -> Result<S> {
    if fitted.a_hat.len() != truth.rank() {
        return Err(Error::DimensionMismatch {
            expected: truth.rank(),
            got: fitted.a_hat.len(),
        });
    }
    let probe = SignedProbe {
        directions: truth.directions(),
        coefficients: truth
            .weights()
            .iter()
            .zip(&fitted.a_hat)
            .map(|(&a, &ahat)| a - ahat)
            .collect(),
    };
    let residual_sq = {
        let r = crate::tensor::residual_frobenius(truth, model)?;
        r * r
    };
    let cross = pairwise_inner(truth, &probe)? - pairwise_inner(model, &probe)?;
    let probe_sq = pairwise_inner(&probe, &probe)?;
    let two = S::cast(2.0);
    Ok((residual_sq - two * cross + probe_sq).max(S::zero()).sqrt())
}
