//! Experiment execution: per-seed dispatch, trajectory accounting, and file
//! emission.

use crate::config::{ExperimentConfig, Mode};
use crate::output::{fmt_float, fmt_opt_float, fmt_opt_usize, write_csv, write_json};
use anyhow::{anyhow, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::path::{Path, PathBuf};
use symflow::baselines::{
    glrl_run, power_iterate, saddle_distance, tensor_deflation, DeflationStatus, SaddleLibrary,
};
use symflow::epochs::{run_full, AlgoParams, PhaseTag, StepEvent};
use symflow::flow::{LossSpec, StepperConfig};
use symflow::monitor::{
    check_induction, claim1_check, delta_frobenius, fitted_mass, norm_bound_check,
    update_discovery, DiscoverySets,
};
use symflow::tensor::{per_direction_residual, ComponentModel, GroundTruth};
use symflow::truth::{random_model, sample_unit_sphere};

/// Squared-norm floor above which a component counts as "large" for the
/// correlation split detector.
const SPLIT_LARGE_SQ_NORM: f64 = 0.01;
/// A flagged pair splits once its |correlation| falls to this value.
const SPLIT_LOW_CORR: f64 = 0.9;
/// A pair is flagged once its |correlation| reaches this value while both
/// members are large.
const SPLIT_HIGH_CORR: f64 = 0.99;
/// Saddle distances beyond this count as "away from the greedy path".
const AWAY_FROM_SADDLE_DIST: f64 = 0.1;
/// At most this many split events are listed per seed (all are counted).
const MAX_LISTED_SPLITS: usize = 32;

// ---------------------------------------------------------------------------
// Summary documents
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    /// Echo of the executed configuration (after any seed override).
    pub config: ExperimentConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub library: Option<LibraryInfo>,
    pub seeds: Vec<SeedSummary>,
}

/// Greedy-baseline library built ahead of a gradient-descent run.
#[derive(Debug, Clone, Serialize)]
pub struct LibraryInfo {
    pub seed: u64,
    pub epochs: usize,
    /// Residual norm after each greedy epoch (entry 0 = target norm).
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeedSummary {
    Flow(Box<FlowSeedSummary>),
    Power(PowerSeedSummary),
    Deflation(DeflationSeedSummary),
    Glrl(GlrlSeedSummary),
    Claim1(Claim1SeedSummary),
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowSeedSummary {
    pub seed: u64,
    /// Euler steps executed.
    pub steps: usize,
    pub final_loss: f64,
    pub final_residual: f64,
    /// Multi-epoch runs only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs_used: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_history: Option<Vec<f64>>,
    pub fitted_warnings: Vec<String>,
    /// First step with per-direction residual ≤ 0.1·aᵢ, per direction.
    pub fit_times: Vec<Option<usize>>,
    /// Directions ordered by their first discovery (δ₁ crossing) step.
    pub discovery_order: Vec<usize>,
    /// First discovery step per direction.
    pub discovery_steps: Vec<Option<usize>>,
    /// aₖ − âₖ at the end of the run.
    pub fitted_gaps: Vec<f64>,
    /// Minimum of d·‖T‖_F − Σ‖w‖² over every executed step.
    pub min_norm_bound_margin: f64,
    /// Smallest component squared norm seen at any step.
    pub min_sq_norm: f64,
    /// False if any recorded quantity was NaN/∞ or a squared norm hit 0.
    pub all_finite: bool,
    /// Recorded samples where the loss fell while the model sat more than
    /// 0.1 from every greedy saddle (library runs only).
    pub descent_away_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub descent_away_first_step: Option<usize>,
    /// Large component pairs whose |correlation| peaked ≥ 0.99 and later
    /// fell to ≤ 0.9.
    pub split_event_count: usize,
    pub split_events: Vec<SplitEvent>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitEvent {
    pub comp_a: usize,
    pub comp_b: usize,
    /// Recorded step at which the pair was first seen highly correlated.
    pub high_step: usize,
    /// Recorded step at which the correlation had dropped to ≤ 0.9.
    pub drop_step: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PowerSeedSummary {
    pub seed: u64,
    pub trials: usize,
    pub all_converged: bool,
    pub max_iterations: usize,
    /// max over trials of 1 − (best squared alignment at the final iterate).
    pub max_misalignment: f64,
    pub mean_iterations: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DeflationSeedSummary {
    pub seed: u64,
    pub status: String,
    pub terms: usize,
    pub final_residual: f64,
    pub min_norm_bound_margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GlrlSeedSummary {
    pub seed: u64,
    /// Residual norm after each epoch (entry 0 = target norm).
    pub residuals: Vec<f64>,
    pub final_loss: f64,
    pub min_norm_bound_margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Claim1SeedSummary {
    pub seed: u64,
    pub points: usize,
    pub all_negative: bool,
    pub min_rate: f64,
    pub max_rate: f64,
}

// ---------------------------------------------------------------------------
// Trajectory rows (flow modes)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
struct DirCells {
    residual: f64,
    a_hat: f64,
    corr_min_margin: Option<f64>,
    corr_avg_margin: Option<f64>,
    gap_lower_margin: f64,
    gap_upper_margin: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct CompCells {
    sq_norm: f64,
    top_direction: usize,
    top_correlation: f64,
}

#[derive(Debug, Clone, Serialize)]
struct FlowRow {
    step: usize,
    time: f64,
    epoch: usize,
    phase: u8,
    loss: f64,
    residual: f64,
    delta_residual: f64,
    norm_bound_margin: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    saddle_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    saddle_distance: Option<f64>,
    directions: Vec<DirCells>,
    unaffiliated_margin: Option<f64>,
    components: Vec<CompCells>,
}

fn flow_header(r: usize, m: usize, with_saddle: bool) -> Vec<String> {
    let mut h = vec![
        "step".into(),
        "time".into(),
        "epoch".into(),
        "phase".into(),
        "loss".into(),
        "residual".into(),
        "delta_residual".into(),
        "norm_bound_margin".into(),
    ];
    if with_saddle {
        h.push("saddle_index".into());
        h.push("saddle_distance".into());
    }
    for i in 0..r {
        h.push(format!("dir{i}_residual"));
        h.push(format!("dir{i}_a_hat"));
        h.push(format!("dir{i}_corr_min_margin"));
        h.push(format!("dir{i}_corr_avg_margin"));
        h.push(format!("dir{i}_gap_lower_margin"));
        h.push(format!("dir{i}_gap_upper_margin"));
    }
    h.push("unaffiliated_margin".into());
    for j in 0..m {
        h.push(format!("comp{j}_sq_norm"));
        h.push(format!("comp{j}_top_direction"));
        h.push(format!("comp{j}_top_correlation"));
    }
    h
}

impl FlowRow {
    fn csv_cells(&self, with_saddle: bool) -> Vec<String> {
        let mut c = vec![
            self.step.to_string(),
            fmt_float(self.time),
            self.epoch.to_string(),
            self.phase.to_string(),
            fmt_float(self.loss),
            fmt_float(self.residual),
            fmt_float(self.delta_residual),
            fmt_float(self.norm_bound_margin),
        ];
        if with_saddle {
            c.push(fmt_opt_usize(self.saddle_index));
            c.push(fmt_opt_float(self.saddle_distance));
        }
        for d in &self.directions {
            c.push(fmt_float(d.residual));
            c.push(fmt_float(d.a_hat));
            c.push(fmt_opt_float(d.corr_min_margin));
            c.push(fmt_opt_float(d.corr_avg_margin));
            c.push(fmt_float(d.gap_lower_margin));
            c.push(fmt_opt_float(d.gap_upper_margin));
        }
        c.push(fmt_opt_float(self.unaffiliated_margin));
        for comp in &self.components {
            c.push(fmt_float(comp.sq_norm));
            c.push(comp.top_direction.to_string());
            c.push(fmt_float(comp.top_correlation));
        }
        c
    }
}

// ---------------------------------------------------------------------------
// Flow accounting
// ---------------------------------------------------------------------------

/// Detects pairs of large components that first align almost perfectly and
/// later separate; state is sampled at recorded steps.
struct SplitTracker {
    m: usize,
    /// 0 = never high, 1 = high seen (step stored), 2 = split recorded.
    state: Vec<u8>,
    high_step: Vec<usize>,
    events: Vec<SplitEvent>,
    count: usize,
}

impl SplitTracker {
    fn new(m: usize) -> Self {
        let pairs = m * (m.saturating_sub(1)) / 2;
        Self {
            m,
            state: vec![0; pairs],
            high_step: vec![0; pairs],
            events: Vec::new(),
            count: 0,
        }
    }

    fn pair_index(&self, i: usize, j: usize) -> usize {
        // Row-major upper triangle (i < j).
        i * self.m - i * (i + 1) / 2 + (j - i - 1)
    }

    fn observe(&mut self, step: usize, model: &ComponentModel<f64>) {
        let comps = model.components();
        for i in 0..self.m {
            for j in (i + 1)..self.m {
                let idx = self.pair_index(i, j);
                match self.state[idx] {
                    0 if comps[i].sq_norm() >= SPLIT_LARGE_SQ_NORM
                        && comps[j].sq_norm() >= SPLIT_LARGE_SQ_NORM
                        && comps[i].direction().dot(comps[j].direction()).abs()
                            >= SPLIT_HIGH_CORR =>
                    {
                        self.state[idx] = 1;
                        self.high_step[idx] = step;
                    }
                    1 if comps[i].direction().dot(comps[j].direction()).abs() <= SPLIT_LOW_CORR => {
                        self.state[idx] = 2;
                        self.count += 1;
                        if self.events.len() < MAX_LISTED_SPLITS {
                            self.events.push(SplitEvent {
                                comp_a: i,
                                comp_b: j,
                                high_step: self.high_step[idx],
                                drop_step: step,
                            });
                        }
                    }
                    _ => {}
                }
            }
        }
    }
}

/// Step/time/epoch coordinates identifying one recorded row.
struct RowStamp {
    step: usize,
    time: f64,
    epoch: usize,
    phase: u8,
    beta: f64,
}

/// Multi-epoch-only fields carried into the seed summary.
struct MultiEpochTail {
    epochs_used: usize,
    converged: bool,
    beta_history: Vec<f64>,
}

/// Per-step accountant shared by the plain and multi-epoch flows.
struct FlowTracker<'a> {
    truth: &'a GroundTruth<f64>,
    spec: &'a LossSpec<f64>,
    diag: &'a AlgoParams<f64>,
    library: Option<&'a SaddleLibrary<f64>>,
    record_every: usize,
    rows: Vec<FlowRow>,
    fit_times: Vec<Option<usize>>,
    min_norm_bound_margin: f64,
    min_sq_norm: f64,
    all_finite: bool,
    split: SplitTracker,
    prev_recorded_loss: Option<f64>,
    descent_away_count: usize,
    descent_away_first_step: Option<usize>,
    last_emitted_step: Option<usize>,
}

impl<'a> FlowTracker<'a> {
    fn new(
        truth: &'a GroundTruth<f64>,
        spec: &'a LossSpec<f64>,
        diag: &'a AlgoParams<f64>,
        library: Option<&'a SaddleLibrary<f64>>,
        m: usize,
        record_every: usize,
    ) -> Self {
        Self {
            truth,
            spec,
            diag,
            library,
            record_every,
            rows: Vec::new(),
            fit_times: vec![None; truth.rank()],
            min_norm_bound_margin: f64::INFINITY,
            min_sq_norm: f64::INFINITY,
            all_finite: true,
            split: SplitTracker::new(m),
            prev_recorded_loss: None,
            descent_away_count: 0,
            descent_away_first_step: None,
            last_emitted_step: None,
        }
    }

    fn check_finite(&mut self, x: f64) -> f64 {
        if !x.is_finite() {
            self.all_finite = false;
        }
        x
    }

    /// Cheap bookkeeping that runs on every step.
    fn observe_step(&mut self, step: usize, model: &ComponentModel<f64>) -> Result<()> {
        for (i, slot) in self.fit_times.iter_mut().enumerate() {
            if slot.is_none() {
                let pdr = per_direction_residual(self.truth, model, i)?;
                if pdr <= 0.1 * self.truth.weights()[i] {
                    *slot = Some(step);
                }
            }
        }
        let margin = norm_bound_check(model);
        if !margin.is_finite() {
            self.all_finite = false;
        }
        self.min_norm_bound_margin = self.min_norm_bound_margin.min(margin);
        self.observe_norms(model);
        Ok(())
    }

    /// Squared-norm floor tracking (also called after reinitializations).
    fn observe_norms(&mut self, model: &ComponentModel<f64>) {
        for c in model.components() {
            let sq = c.sq_norm();
            if !sq.is_finite() {
                self.all_finite = false;
            }
            self.min_sq_norm = self.min_sq_norm.min(sq);
        }
    }

    fn should_record(&self, step: usize) -> bool {
        step.is_multiple_of(self.record_every) && Some(step) != self.last_emitted_step
    }

    /// Full row emission.
    fn emit(
        &mut self,
        stamp: RowStamp,
        model: &ComponentModel<f64>,
        sets: &DiscoverySets<f64>,
    ) -> Result<()> {
        let RowStamp {
            step,
            time,
            epoch,
            phase,
            beta,
        } = stamp;
        let loss = self.check_finite(self.spec.loss(model)?);
        let residual = self.check_finite(self.spec.residual_norm(model)?);
        let fitted = fitted_mass(sets, model);
        let delta = self.check_finite(delta_frobenius(self.truth, model, &fitted)?);
        let margin = self.check_finite(norm_bound_check(model));

        let report = check_induction(sets, model, self.diag, self.truth, epoch, beta)?;
        let mut directions = Vec::with_capacity(self.truth.rank());
        for i in 0..self.truth.rank() {
            directions.push(DirCells {
                residual: self.check_finite(per_direction_residual(self.truth, model, i)?),
                a_hat: fitted.a_hat[i],
                corr_min_margin: report.corr_min_margin[i],
                corr_avg_margin: report.corr_avg_margin[i],
                gap_lower_margin: report.gap_lower_margin[i],
                gap_upper_margin: report.gap_upper_margin[i],
            });
        }

        let components = model
            .components()
            .iter()
            .map(|c| {
                let (top, corr) = self.truth.best_aligned_direction(c.direction());
                CompCells {
                    sq_norm: c.sq_norm(),
                    top_direction: top,
                    top_correlation: corr,
                }
            })
            .collect();

        let (saddle_index, saddle_dist) = match self.library {
            Some(lib) => {
                let (idx, dist) = saddle_distance(model, lib)?;
                (Some(idx), Some(self.check_finite(dist)))
            }
            None => (None, None),
        };

        if let (Some(prev), Some(dist)) = (self.prev_recorded_loss, saddle_dist) {
            if loss < prev && dist > AWAY_FROM_SADDLE_DIST {
                self.descent_away_count += 1;
                self.descent_away_first_step.get_or_insert(step);
            }
        }
        self.prev_recorded_loss = Some(loss);
        self.split.observe(step, model);

        self.rows.push(FlowRow {
            step,
            time,
            epoch,
            phase,
            loss,
            residual,
            delta_residual: delta,
            norm_bound_margin: margin,
            saddle_index,
            saddle_distance: saddle_dist,
            directions,
            unaffiliated_margin: report.unaffiliated_margin,
            components,
        });
        self.last_emitted_step = Some(step);
        Ok(())
    }

    fn into_outputs(
        self,
        seed: u64,
        steps: usize,
        final_model: &ComponentModel<f64>,
        final_sets: &DiscoverySets<f64>,
        tail: Option<MultiEpochTail>,
        fitted_warnings: Vec<String>,
    ) -> Result<(Vec<FlowRow>, FlowSeedSummary)> {
        let (epochs_used, converged, beta_history) = match tail {
            Some(t) => (Some(t.epochs_used), Some(t.converged), Some(t.beta_history)),
            None => (None, None, None),
        };
        let final_loss = self.spec.loss(final_model)?;
        let final_residual = self.spec.residual_norm(final_model)?;
        let fitted = fitted_mass(final_sets, final_model);
        let fitted_gaps: Vec<f64> = (0..self.truth.rank())
            .map(|k| self.truth.weights()[k] - fitted.a_hat[k])
            .collect();
        let discovery_steps: Vec<Option<usize>> = (0..self.truth.rank())
            .map(|k| {
                final_sets
                    .log()
                    .iter()
                    .filter(|c| c.direction == k)
                    .map(|c| c.step)
                    .min()
            })
            .collect();
        let mut discovery_order: Vec<usize> = (0..self.truth.rank())
            .filter(|&k| discovery_steps[k].is_some())
            .collect();
        discovery_order.sort_by_key(|&k| (discovery_steps[k], k));

        let all_finite = self.all_finite && final_loss.is_finite() && self.min_sq_norm > 0.0;
        let summary = FlowSeedSummary {
            seed,
            steps,
            final_loss,
            final_residual,
            epochs_used,
            converged,
            beta_history,
            fitted_warnings,
            fit_times: self.fit_times,
            discovery_order,
            discovery_steps,
            fitted_gaps,
            min_norm_bound_margin: self.min_norm_bound_margin,
            min_sq_norm: self.min_sq_norm,
            all_finite,
            descent_away_count: self.descent_away_count,
            descent_away_first_step: self.descent_away_first_step,
            split_event_count: self.split.count,
            split_events: self.split.events,
        };
        Ok((self.rows, summary))
    }
}

// ---------------------------------------------------------------------------
// Per-seed drivers
// ---------------------------------------------------------------------------

struct SeedOutput {
    header: Vec<String>,
    csv_rows: Vec<Vec<String>>,
    json_rows: serde_json::Value,
    summary: SeedSummary,
}

fn run_plain_gd_seed(
    cfg: &ExperimentConfig,
    truth: &GroundTruth<f64>,
    library: Option<&SaddleLibrary<f64>>,
    seed: u64,
) -> Result<SeedOutput> {
    let gd = cfg.gd.as_ref().expect("validated");
    let diag = gd.diagnostic_params();
    let spec = LossSpec::new(truth.clone(), gd.lambda)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = random_model(truth.dim(), gd.m, gd.delta0, &mut rng)?;

    let mut tracker = FlowTracker::new(truth, &spec, &diag, library, gd.m, cfg.record_every);
    let mut sets = DiscoverySets::new(gd.m, truth.rank());
    let beta0 = spec.residual_norm(&model)?;
    tracker.observe_step(0, &model)?;
    tracker.emit(
        RowStamp {
            step: 0,
            time: 0.0,
            epoch: 0,
            phase: 1,
            beta: beta0,
        },
        &model,
        &sets,
    )?;

    let stepper = StepperConfig {
        step_size: gd.eta,
        max_steps: gd.steps,
    };
    let mut prev_norms: Vec<f64> = model.components().iter().map(|c| c.norm()).collect();
    let mut observer_error: Option<anyhow::Error> = None;
    let final_model = spec.gradient_descent(model, &stepper, |t, m| {
        if observer_error.is_some() {
            return;
        }
        let mut body = || -> Result<()> {
            update_discovery(&mut sets, &prev_norms, m, truth, &diag, 0, t);
            prev_norms.clear();
            prev_norms.extend(m.components().iter().map(|c| c.norm()));
            tracker.observe_step(t, m)?;
            if tracker.should_record(t) {
                let beta = spec.residual_norm(m)?;
                tracker.emit(
                    RowStamp {
                        step: t,
                        time: t as f64 * gd.eta,
                        epoch: 0,
                        phase: 1,
                        beta,
                    },
                    m,
                    &sets,
                )?;
            }
            Ok(())
        };
        if let Err(e) = body() {
            observer_error = Some(e);
        }
    })?;
    if let Some(e) = observer_error {
        return Err(e);
    }

    if tracker.last_emitted_step != Some(gd.steps) {
        let beta = spec.residual_norm(&final_model)?;
        tracker.emit(
            RowStamp {
                step: gd.steps,
                time: gd.steps as f64 * gd.eta,
                epoch: 0,
                phase: 1,
                beta,
            },
            &final_model,
            &sets,
        )?;
    }

    let with_saddle = library.is_some();
    let (rows, summary) =
        tracker.into_outputs(seed, gd.steps, &final_model, &sets, None, vec![])?;
    Ok(flow_seed_output(
        rows,
        summary,
        truth.rank(),
        gd.m,
        with_saddle,
        seed,
        cfg,
    ))
}

fn run_modified_seed(
    cfg: &ExperimentConfig,
    truth: &GroundTruth<f64>,
    seed: u64,
) -> Result<SeedOutput> {
    let params = cfg.algo.as_ref().expect("validated").to_params();
    let spec = LossSpec::new(truth.clone(), params.lambda)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut tracker = FlowTracker::new(truth, &spec, &params, None, params.m, cfg.record_every);
    let mut observer_error: Option<anyhow::Error> = None;
    let mut last_step = 0usize;
    let run = run_full(&params, truth, &mut rng, |view| {
        if observer_error.is_some() {
            return;
        }
        let phase = match view.phase {
            PhaseTag::One => 1,
            PhaseTag::Two => 2,
        };
        let mut body = || -> Result<()> {
            match view.event {
                StepEvent::Init => {
                    tracker.observe_step(view.step, view.model)?;
                    tracker.emit(
                        RowStamp {
                            step: view.step,
                            time: view.time,
                            epoch: view.epoch,
                            phase,
                            beta: view.beta,
                        },
                        view.model,
                        view.discovery,
                    )?;
                }
                StepEvent::Step => {
                    last_step = view.step;
                    tracker.observe_step(view.step, view.model)?;
                    if tracker.should_record(view.step) {
                        tracker.emit(
                            RowStamp {
                                step: view.step,
                                time: view.time,
                                epoch: view.epoch,
                                phase,
                                beta: view.beta,
                            },
                            view.model,
                            view.discovery,
                        )?;
                    }
                }
                // Reinitializations swap components without advancing the
                // step counter; only the norm floor needs a fresh sample.
                _ => tracker.observe_norms(view.model),
            }
            Ok(())
        };
        if let Err(e) = body() {
            observer_error = Some(e);
        }
    })?;
    if let Some(e) = observer_error {
        return Err(e);
    }

    if tracker.last_emitted_step != Some(last_step) {
        let final_beta = run.beta_history.last().copied().unwrap_or(0.0);
        tracker.emit(
            RowStamp {
                step: last_step,
                time: last_step as f64 * params.eta,
                epoch: run.epochs_used,
                phase: 2,
                beta: final_beta,
            },
            &run.model,
            &run.discovery,
        )?;
    }

    let (rows, summary) = tracker.into_outputs(
        seed,
        last_step,
        &run.model,
        &run.discovery,
        Some(MultiEpochTail {
            epochs_used: run.epochs_used,
            converged: run.converged,
            beta_history: run.beta_history.clone(),
        }),
        run.fitted_warnings.clone(),
    )?;
    Ok(flow_seed_output(
        rows,
        summary,
        truth.rank(),
        params.m,
        false,
        seed,
        cfg,
    ))
}

fn flow_seed_output(
    rows: Vec<FlowRow>,
    summary: FlowSeedSummary,
    r: usize,
    m: usize,
    with_saddle: bool,
    seed: u64,
    cfg: &ExperimentConfig,
) -> SeedOutput {
    let header = flow_header(r, m, with_saddle);
    let csv_rows = rows.iter().map(|row| row.csv_cells(with_saddle)).collect();
    let json_rows = serde_json::json!({
        "seed": seed,
        "mode": cfg.mode.name(),
        "rows": rows,
    });
    SeedOutput {
        header,
        csv_rows,
        json_rows,
        summary: SeedSummary::Flow(Box::new(summary)),
    }
}

#[derive(Debug, Clone, Serialize)]
struct PowerRow {
    trial: usize,
    iterations: usize,
    converged: bool,
    value: f64,
    top_direction: usize,
    top_correlation: f64,
}

fn run_power_seed(
    cfg: &ExperimentConfig,
    truth: &GroundTruth<f64>,
    seed: u64,
) -> Result<SeedOutput> {
    let section = cfg.power.as_ref().expect("validated");
    let pcfg = section.to_config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut rows = Vec::with_capacity(section.trials);
    for trial in 0..section.trials {
        let start = sample_unit_sphere(truth.dim(), &mut rng);
        let out = power_iterate(truth, &start, &pcfg)?;
        let (top, corr) = truth.best_aligned_direction(&out.direction);
        rows.push(PowerRow {
            trial,
            iterations: out.iterations,
            converged: out.converged,
            value: out.value,
            top_direction: top,
            top_correlation: corr,
        });
    }

    let summary = PowerSeedSummary {
        seed,
        trials: rows.len(),
        all_converged: rows.iter().all(|r| r.converged),
        max_iterations: rows.iter().map(|r| r.iterations).max().unwrap_or(0),
        max_misalignment: rows
            .iter()
            .map(|r| 1.0 - r.top_correlation)
            .fold(0.0, f64::max),
        mean_iterations: rows.iter().map(|r| r.iterations as f64).sum::<f64>()
            / rows.len().max(1) as f64,
    };

    let header: Vec<String> = [
        "trial",
        "iterations",
        "converged",
        "value",
        "top_direction",
        "top_correlation",
    ]
    .map(String::from)
    .to_vec();
    let csv_rows = rows
        .iter()
        .map(|r| {
            vec![
                r.trial.to_string(),
                r.iterations.to_string(),
                r.converged.to_string(),
                fmt_float(r.value),
                r.top_direction.to_string(),
                fmt_float(r.top_correlation),
            ]
        })
        .collect();
    let json_rows = serde_json::json!({
        "seed": seed,
        "mode": cfg.mode.name(),
        "rows": rows,
    });
    Ok(SeedOutput {
        header,
        csv_rows,
        json_rows,
        summary: SeedSummary::Power(summary),
    })
}

#[derive(Debug, Clone, Serialize)]
struct DeflationRow {
    term: usize,
    weight: f64,
    top_direction: usize,
    top_correlation: f64,
    residual_after: f64,
    norm_bound_margin: f64,
}

fn run_deflation_seed(
    cfg: &ExperimentConfig,
    truth: &GroundTruth<f64>,
    seed: u64,
) -> Result<SeedOutput> {
    let section = cfg.deflation.as_ref().expect("validated");
    let pcfg = section.to_config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (model, status) =
        tensor_deflation(truth, section.stop_norm, &pcfg, section.step_size, &mut rng)?;

    let mut rows = Vec::with_capacity(model.len());
    let mut min_margin = f64::INFINITY;
    for j in 0..model.len() {
        let prefix = ComponentModel::new(truth.dim(), model.components()[..=j].to_vec())?;
        let comp = &model.components()[j];
        let (top, corr) = truth.best_aligned_direction(comp.direction());
        let margin = norm_bound_check(&prefix);
        min_margin = min_margin.min(margin);
        rows.push(DeflationRow {
            term: j,
            weight: comp.sq_norm(),
            top_direction: top,
            top_correlation: corr,
            residual_after: symflow::tensor::residual_frobenius(truth, &prefix)?,
            norm_bound_margin: margin,
        });
    }

    let final_residual = rows
        .last()
        .map(|r| r.residual_after)
        .unwrap_or(truth.tensor_frobenius_norm());
    let summary = DeflationSeedSummary {
        seed,
        status: match status {
            DeflationStatus::Converged => "converged".into(),
            DeflationStatus::Stalled => "stalled".into(),
            DeflationStatus::TermCapReached => "term_cap_reached".into(),
        },
        terms: model.len(),
        final_residual,
        min_norm_bound_margin: if min_margin.is_finite() {
            min_margin
        } else {
            0.0
        },
    };

    let header: Vec<String> = [
        "term",
        "weight",
        "top_direction",
        "top_correlation",
        "residual_after",
        "norm_bound_margin",
    ]
    .map(String::from)
    .to_vec();
    let csv_rows = rows
        .iter()
        .map(|r| {
            vec![
                r.term.to_string(),
                fmt_float(r.weight),
                r.top_direction.to_string(),
                fmt_float(r.top_correlation),
                fmt_float(r.residual_after),
                fmt_float(r.norm_bound_margin),
            ]
        })
        .collect();
    let json_rows = serde_json::json!({
        "seed": seed,
        "mode": cfg.mode.name(),
        "status": summary.status,
        "rows": rows,
    });
    Ok(SeedOutput {
        header,
        csv_rows,
        json_rows,
        summary: SeedSummary::Deflation(summary),
    })
}

#[derive(Debug, Clone, Serialize)]
struct GlrlRow {
    epoch: usize,
    residual: f64,
    loss: f64,
    norm_bound_margin: f64,
}

fn run_glrl_seed(
    cfg: &ExperimentConfig,
    truth: &GroundTruth<f64>,
    seed: u64,
) -> Result<SeedOutput> {
    let section = cfg.glrl.as_ref().expect("validated");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let outcome = glrl_run(truth, &section.to_config(), &mut rng)?;

    let mut rows = Vec::new();
    let mut min_margin = f64::INFINITY;
    for (s, saddle) in outcome.saddles.saddles().iter().enumerate() {
        let residual = outcome.residuals[s];
        let margin = norm_bound_check(saddle);
        min_margin = min_margin.min(margin);
        rows.push(GlrlRow {
            epoch: s,
            residual,
            loss: 0.5 * residual * residual,
            norm_bound_margin: margin,
        });
    }

    let summary = GlrlSeedSummary {
        seed,
        residuals: outcome.residuals.clone(),
        final_loss: rows.last().map(|r| r.loss).unwrap_or(0.0),
        min_norm_bound_margin: min_margin,
    };

    let header: Vec<String> = ["epoch", "residual", "loss", "norm_bound_margin"]
        .map(String::from)
        .to_vec();
    let csv_rows = rows
        .iter()
        .map(|r| {
            vec![
                r.epoch.to_string(),
                fmt_float(r.residual),
                fmt_float(r.loss),
                fmt_float(r.norm_bound_margin),
            ]
        })
        .collect();
    let json_rows = serde_json::json!({
        "seed": seed,
        "mode": cfg.mode.name(),
        "rows": rows,
    });
    Ok(SeedOutput {
        header,
        csv_rows,
        json_rows,
        summary: SeedSummary::Glrl(summary),
    })
}

#[derive(Debug, Clone, Serialize)]
struct Claim1Row {
    alpha: f64,
    v_sq_norm: f64,
    total_sq_norm: f64,
    d: usize,
    rate: f64,
}

fn run_claim1_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedOutput> {
    let section = cfg.claim1.as_ref().expect("validated");
    let mut rows = Vec::new();
    for &alpha in &section.alphas {
        for &v_sq in &section.v_sq_norms {
            let rate = claim1_check(alpha, v_sq, section.total_sq_norm, section.d)?;
            rows.push(Claim1Row {
                alpha,
                v_sq_norm: v_sq,
                total_sq_norm: section.total_sq_norm,
                d: section.d,
                rate,
            });
        }
    }

    let summary = Claim1SeedSummary {
        seed,
        points: rows.len(),
        all_negative: rows.iter().all(|r| r.rate < 0.0),
        min_rate: rows.iter().map(|r| r.rate).fold(f64::INFINITY, f64::min),
        max_rate: rows
            .iter()
            .map(|r| r.rate)
            .fold(f64::NEG_INFINITY, f64::max),
    };

    let header: Vec<String> = ["alpha", "v_sq_norm", "total_sq_norm", "d", "rate"]
        .map(String::from)
        .to_vec();
    let csv_rows = rows
        .iter()
        .map(|r| {
            vec![
                fmt_float(r.alpha),
                fmt_float(r.v_sq_norm),
                fmt_float(r.total_sq_norm),
                r.d.to_string(),
                fmt_float(r.rate),
            ]
        })
        .collect();
    let json_rows = serde_json::json!({
        "seed": seed,
        "mode": cfg.mode.name(),
        "rows": rows,
    });
    Ok(SeedOutput {
        header,
        csv_rows,
        json_rows,
        summary: SeedSummary::Claim1(summary),
    })
}

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

fn seed_paths(out_dir: &Path, seed: u64) -> (PathBuf, PathBuf) {
    (
        out_dir.join(format!("seed{seed}.csv")),
        out_dir.join(format!("seed{seed}.json")),
    )
}

/// Runs every seed of the experiment (in parallel), writes
/// `<out>/seed<k>.csv`, `<out>/seed<k>.json`, and `<out>/summary.json`, and
/// returns the summary document.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    base_dir: &Path,
) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let truth = cfg.truth.build(base_dir)?;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;

    // The greedy saddle library is deterministic in its own seed and shared
    // by every run seed.
    let (library, library_info) = match (&cfg.glrl_library, cfg.mode) {
        (Some(section), Mode::PlainGd) => {
            let mut rng = ChaCha8Rng::seed_from_u64(section.seed);
            let outcome = glrl_run(&truth, &section.to_config(), &mut rng)
                .context("building the greedy saddle library")?;
            let info = LibraryInfo {
                seed: section.seed,
                epochs: section.epochs,
                residuals: outcome.residuals.clone(),
            };
            (Some(outcome.saddles), Some(info))
        }
        _ => (None, None),
    };

    let summaries: Vec<SeedSummary> = cfg
        .seeds
        .par_iter()
        .map(|&seed| -> Result<SeedSummary> {
            let output = match cfg.mode {
                Mode::PlainGd => run_plain_gd_seed(cfg, &truth, library.as_ref(), seed)?,
                Mode::ModifiedFlow => run_modified_seed(cfg, &truth, seed)?,
                Mode::Glrl => run_glrl_seed(cfg, &truth, seed)?,
                Mode::Power => run_power_seed(cfg, &truth, seed)?,
                Mode::Deflation => run_deflation_seed(cfg, &truth, seed)?,
                Mode::Claim1 => run_claim1_seed(cfg, seed)?,
            };
            let (csv_path, json_path) = seed_paths(out_dir, seed);
            write_csv(&csv_path, &output.header, &output.csv_rows)?;
            write_json(&json_path, &output.json_rows)?;
            Ok(output.summary)
        })
        .collect::<Result<Vec<_>>>()?;

    let summary = ExperimentSummary {
        config: cfg.clone(),
        library: library_info,
        seeds: summaries,
    };
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Convenience accessor used by tests: the flow summaries of a run.
pub fn flow_summaries(summary: &ExperimentSummary) -> Result<Vec<&FlowSeedSummary>> {
    summary
        .seeds
        .iter()
        .map(|s| match s {
            SeedSummary::Flow(f) => Ok(f.as_ref()),
            _ => Err(anyhow!("expected a flow summary")),
        })
        .collect()
}
