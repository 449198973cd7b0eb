//! JSON experiment configuration: the document schema, validation, and
//! construction of the target tensor and per-mode settings.

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use symflow::baselines::{GlrlConfig, PowerConfig, RANK1_ASCENT_STEP};
use symflow::epochs::AlgoParams;
use symflow::tensor::{GroundTruth, Normalization, UnitVector};
use symflow::truth::{orthogonal_truth, random_truth};

/// Top-level experiment description. Exactly the sub-section matching `mode`
/// must be present (`glrl_library` may accompany `plain_gd` to enable the
/// saddle-distance column).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub truth: TruthSpec,
    /// One run (and one CSV/JSON trajectory pair) per seed.
    pub seeds: Vec<u64>,
    /// Steps between recorded trajectory rows (the initial and final states
    /// are always recorded).
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gd: Option<GdSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algo: Option<AlgoSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub glrl: Option<GlrlSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub glrl_library: Option<GlrlLibrarySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<PowerSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deflation: Option<DeflationSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim1: Option<Claim1Section>,
}

fn default_record_every() -> usize {
    10
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    PlainGd,
    ModifiedFlow,
    Glrl,
    Power,
    Deflation,
    Claim1,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::PlainGd => "plain_gd",
            Mode::ModifiedFlow => "modified_flow",
            Mode::Glrl => "glrl",
            Mode::Power => "power",
            Mode::Deflation => "deflation",
            Mode::Claim1 => "claim1",
        }
    }
}

/// How the target tensor is produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TruthSpec {
    /// Standard-basis directions with weights proportional to
    /// `ratio^(r−1−i)`, normalized as requested.
    Orthogonal {
        d: usize,
        r: usize,
        ratio: f64,
        normalization: Normalization,
    },
    /// Uniform sphere directions (pairwise |cosine| ≤ 0.9) and random
    /// weights, Frobenius-normalized; fully determined by `seed` and shared
    /// by every run seed.
    RandomNonorthogonal { d: usize, r: usize, seed: u64 },
    /// Explicit weights and directions loaded from a JSON file.
    File { path: String },
}

/// On-disk format for `TruthSpec::File`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthFile {
    pub weights: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
    pub orthonormal: bool,
    pub normalization: Normalization,
}

impl TruthSpec {
    /// Builds the target; `base_dir` resolves a relative `File` path.
    pub fn build(&self, base_dir: &Path) -> Result<GroundTruth<f64>> {
        match self {
            TruthSpec::Orthogonal {
                d,
                r,
                ratio,
                normalization,
            } => orthogonal_truth(*d, *r, *ratio, *normalization)
                .context("building orthogonal target"),
            TruthSpec::RandomNonorthogonal { d, r, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                random_truth(*d, *r, &mut rng).context("sampling non-orthogonal target")
            }
            TruthSpec::File { path } => {
                let resolved = base_dir.join(path);
                let text = std::fs::read_to_string(&resolved)
                    .with_context(|| format!("reading target file {}", resolved.display()))?;
                let file: TruthFile = serde_json::from_str(&text)
                    .with_context(|| format!("parsing target file {}", resolved.display()))?;
                let directions = file
                    .directions
                    .into_iter()
                    .map(|entries| UnitVector::new(entries).map_err(anyhow::Error::from))
                    .collect::<Result<Vec<_>>>()?;
                GroundTruth::new(
                    file.weights,
                    directions,
                    file.orthonormal,
                    file.normalization,
                )
                .context("constructing target from file")
            }
        }
    }
}

/// Plain gradient descent on the unmodified loss.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GdSection {
    /// Number of model components.
    pub m: usize,
    /// Initialization norm of every component.
    pub delta0: f64,
    /// Euler step size.
    pub eta: f64,
    /// Steps to run.
    pub steps: usize,
    /// Ridge coefficient (0 = unregularized).
    #[serde(default)]
    pub lambda: f64,
    /// Correlation slack for the diagnostic discovery ledger.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Norm threshold for the diagnostic discovery ledger.
    #[serde(default = "default_delta1")]
    pub delta1: f64,
}

fn default_alpha() -> f64 {
    1e-3
}

fn default_delta1() -> f64 {
    1e-4
}

impl GdSection {
    /// Parameter bundle used by the diagnostic monitors (discovery latching,
    /// induction margins) during a plain-GD run.
    pub fn diagnostic_params(&self) -> AlgoParams<f64> {
        AlgoParams {
            m: self.m,
            lambda: self.lambda,
            alpha: self.alpha,
            delta1: self.delta1,
            delta0: self.delta0,
            eta: self.eta,
            ..AlgoParams::default()
        }
    }
}

/// Multi-epoch flow parameters; every field defaults to the desk-scale
/// preset value.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgoSection {
    pub m: Option<usize>,
    pub epsilon: Option<f64>,
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
    pub alpha: Option<f64>,
    pub delta1: Option<f64>,
    pub delta0: Option<f64>,
    pub eta: Option<f64>,
    pub c_t1a: Option<f64>,
    pub c_t1b: Option<f64>,
    pub c_t1c: Option<f64>,
    pub c_t2: Option<f64>,
    pub c_rho: Option<f64>,
}

impl AlgoSection {
    pub fn to_params(&self) -> AlgoParams<f64> {
        let d = AlgoParams::<f64>::default();
        AlgoParams {
            m: self.m.unwrap_or(d.m),
            epsilon: self.epsilon.unwrap_or(d.epsilon),
            gamma: self.gamma.unwrap_or(d.gamma),
            lambda: self.lambda.unwrap_or(d.lambda),
            alpha: self.alpha.unwrap_or(d.alpha),
            delta1: self.delta1.unwrap_or(d.delta1),
            delta0: self.delta0.unwrap_or(d.delta0),
            eta: self.eta.unwrap_or(d.eta),
            c_t1a: self.c_t1a.unwrap_or(d.c_t1a),
            c_t1b: self.c_t1b.unwrap_or(d.c_t1b),
            c_t1c: self.c_t1c.unwrap_or(d.c_t1c),
            c_t2: self.c_t2.unwrap_or(d.c_t2),
            c_rho: self.c_rho.unwrap_or(d.c_rho),
        }
    }
}

/// Greedy low-rank learning settings (standalone mode).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlrlSection {
    pub epochs: usize,
    pub seed_norm: f64,
    pub rank1_restarts: usize,
    pub step_size: f64,
    pub iters_factor: usize,
}

impl Default for GlrlSection {
    fn default() -> Self {
        let d = GlrlConfig::<f64>::default();
        Self {
            epochs: d.epochs,
            seed_norm: d.seed_norm,
            rank1_restarts: d.rank1_restarts,
            step_size: d.step_size,
            iters_factor: d.iters_factor,
        }
    }
}

impl GlrlSection {
    pub fn to_config(&self) -> GlrlConfig<f64> {
        GlrlConfig {
            epochs: self.epochs,
            seed_norm: self.seed_norm,
            rank1_restarts: self.rank1_restarts,
            step_size: self.step_size,
            iters_factor: self.iters_factor,
        }
    }
}

/// Saddle library built by a greedy run before a `plain_gd` experiment; its
/// RNG stream is owned by `seed`, independent of the per-run seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlrlLibrarySection {
    pub seed: u64,
    #[serde(default = "default_glrl_epochs")]
    pub epochs: usize,
    #[serde(default = "default_glrl_seed_norm")]
    pub seed_norm: f64,
    #[serde(default = "default_glrl_restarts")]
    pub rank1_restarts: usize,
    #[serde(default = "default_glrl_step")]
    pub step_size: f64,
    #[serde(default = "default_glrl_iters")]
    pub iters_factor: usize,
}

fn default_glrl_epochs() -> usize {
    GlrlConfig::<f64>::default().epochs
}

fn default_glrl_seed_norm() -> f64 {
    GlrlConfig::<f64>::default().seed_norm
}

fn default_glrl_restarts() -> usize {
    GlrlConfig::<f64>::default().rank1_restarts
}

fn default_glrl_step() -> f64 {
    GlrlConfig::<f64>::default().step_size
}

fn default_glrl_iters() -> usize {
    GlrlConfig::<f64>::default().iters_factor
}

impl GlrlLibrarySection {
    pub fn to_config(&self) -> GlrlConfig<f64> {
        GlrlConfig {
            epochs: self.epochs,
            seed_norm: self.seed_norm,
            rank1_restarts: self.rank1_restarts,
            step_size: self.step_size,
            iters_factor: self.iters_factor,
        }
    }
}

/// Power-iteration demonstration: independent random starts on one target.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSection {
    pub trials: usize,
    #[serde(default = "default_power_iters")]
    pub max_iters: usize,
    #[serde(default = "default_power_tol")]
    pub tol: f64,
}

fn default_power_iters() -> usize {
    PowerConfig::<f64>::default().max_iters
}

fn default_power_tol() -> f64 {
    PowerConfig::<f64>::default().tol
}

impl PowerSection {
    pub fn to_config(&self) -> PowerConfig<f64> {
        PowerConfig {
            max_iters: self.max_iters,
            tol: self.tol,
            restarts: 1,
        }
    }
}

/// Greedy deflation settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeflationSection {
    /// Stop once the residual norm falls to this value.
    pub stop_norm: f64,
    #[serde(default = "default_deflation_restarts")]
    pub restarts: usize,
    #[serde(default = "default_power_iters")]
    pub max_iters: usize,
    #[serde(default = "default_power_tol")]
    pub tol: f64,
    #[serde(default = "default_rank1_step")]
    pub step_size: f64,
}

fn default_deflation_restarts() -> usize {
    20
}

fn default_rank1_step() -> f64 {
    RANK1_ASCENT_STEP
}

impl DeflationSection {
    pub fn to_config(&self) -> PowerConfig<f64> {
        PowerConfig {
            max_iters: self.max_iters,
            tol: self.tol,
            restarts: self.restarts,
        }
    }
}

/// Mirror-pair rate grid: every (alpha, v_sq_norm) combination is evaluated.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Claim1Section {
    pub alphas: Vec<f64>,
    pub v_sq_norms: Vec<f64>,
    pub total_sq_norm: f64,
    pub d: usize,
}

impl ExperimentConfig {
    /// Structural checks: nonempty seeds, the mode's section present, and no
    /// stray sections that silently would not run.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("config must list at least one seed");
        }
        if self.record_every == 0 {
            bail!("record_every must be ≥ 1");
        }
        let need = |present: bool, section: &str| -> Result<()> {
            if !present {
                bail!(
                    "mode \"{}\" requires the \"{section}\" section",
                    self.mode.name()
                );
            }
            Ok(())
        };
        match self.mode {
            Mode::PlainGd => need(self.gd.is_some(), "gd")?,
            Mode::ModifiedFlow => need(self.algo.is_some(), "algo")?,
            Mode::Glrl => need(self.glrl.is_some(), "glrl")?,
            Mode::Power => need(self.power.is_some(), "power")?,
            Mode::Deflation => need(self.deflation.is_some(), "deflation")?,
            Mode::Claim1 => need(self.claim1.is_some(), "claim1")?,
        }
        if self.glrl_library.is_some() && self.mode != Mode::PlainGd {
            bail!("\"glrl_library\" only applies to mode \"plain_gd\"");
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).context("parsing config JSON")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_json(&text)
    }
}
