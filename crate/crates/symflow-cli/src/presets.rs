//! Named, fully pinned experiment configurations.

use crate::config::{
    AlgoSection, Claim1Section, DeflationSection, ExperimentConfig, GdSection, GlrlLibrarySection,
    Mode, PowerSection, TruthSpec,
};
use symflow::tensor::Normalization;

pub const PRESET_NAMES: [&str; 7] = [
    "fig1",
    "modified",
    "nonortho-glrl",
    "nonortho-glrl-large",
    "claim1",
    "power-demo",
    "deflation-demo",
];

/// The staircase target: five basis directions in ten dimensions with weight
/// ratio 1.2 and unit Frobenius norm.
fn staircase_truth() -> TruthSpec {
    TruthSpec::Orthogonal {
        d: 10,
        r: 5,
        ratio: 1.2,
        normalization: Normalization::FrobeniusOne,
    }
}

/// The pinned non-orthogonal target shared by the greedy-baseline presets.
fn nonortho_truth() -> TruthSpec {
    TruthSpec::RandomNonorthogonal {
        d: 10,
        r: 5,
        seed: 39,
    }
}

fn empty(mode: Mode, truth: TruthSpec, seeds: Vec<u64>) -> ExperimentConfig {
    ExperimentConfig {
        mode,
        truth,
        seeds,
        record_every: 10,
        gd: None,
        algo: None,
        glrl: None,
        glrl_library: None,
        power: None,
        deflation: None,
        claim1: None,
    }
}

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let cfg = match name {
        // Plain gradient descent from tiny initialization on the staircase
        // target: the loss falls in steps, fitting directions largest-first.
        "fig1" => ExperimentConfig {
            gd: Some(GdSection {
                m: 50,
                delta0: 1e-15,
                eta: 0.1,
                steps: 2000,
                lambda: 0.0,
                alpha: 1e-3,
                delta1: 1e-4,
            }),
            ..empty(Mode::PlainGd, staircase_truth(), vec![0, 1, 2, 3, 4])
        },
        // The multi-epoch flow at desk scale (all defaults).
        "modified" => ExperimentConfig {
            algo: Some(AlgoSection::default()),
            ..empty(Mode::ModifiedFlow, staircase_truth(), vec![0, 1, 2, 3, 4])
        },
        // Greedy baseline first (building the saddle library), then plain
        // gradient descent on the same non-orthogonal target, recording the
        // distance to the nearest greedy saddle at every sampled step.
        "nonortho-glrl" => ExperimentConfig {
            record_every: 5,
            gd: Some(GdSection {
                m: 50,
                delta0: 1e-60,
                eta: 0.3,
                steps: 1000,
                lambda: 0.0,
                alpha: 1e-3,
                delta1: 1e-4,
            }),
            glrl_library: Some(GlrlLibrarySection {
                seed: 1000,
                epochs: 5,
                seed_norm: 1e-60,
                rank1_restarts: 50,
                step_size: 0.3,
                iters_factor: 2000,
            }),
            ..empty(Mode::PlainGd, nonortho_truth(), vec![11])
        },
        // The same experiment at the full m=1000 component count, run briefly
        // to exercise extreme-scale arithmetic.
        "nonortho-glrl-large" => ExperimentConfig {
            gd: Some(GdSection {
                m: 1000,
                delta0: 1e-100,
                eta: 0.3,
                steps: 100,
                lambda: 0.0,
                alpha: 1e-3,
                delta1: 1e-4,
            }),
            glrl_library: Some(GlrlLibrarySection {
                seed: 1000,
                epochs: 5,
                seed_norm: 1e-60,
                rank1_restarts: 50,
                step_size: 0.3,
                iters_factor: 2000,
            }),
            ..empty(Mode::PlainGd, nonortho_truth(), vec![11])
        },
        // Mirror-pair alignment rates over the documented grid.
        "claim1" => ExperimentConfig {
            claim1: Some(Claim1Section {
                alphas: vec![1e-4, 1e-3, 1e-2],
                v_sq_norms: vec![1e-4, 1e-3, 1e-2],
                total_sq_norm: 0.8,
                d: 10,
            }),
            ..empty(
                Mode::Claim1,
                TruthSpec::Orthogonal {
                    d: 10,
                    r: 1,
                    ratio: 1.0,
                    normalization: Normalization::None,
                },
                vec![0],
            )
        },
        // Tensor power iteration from many random starts.
        "power-demo" => ExperimentConfig {
            power: Some(PowerSection {
                trials: 100,
                max_iters: 200,
                tol: 1e-12,
            }),
            ..empty(
                Mode::Power,
                TruthSpec::Orthogonal {
                    d: 8,
                    r: 4,
                    ratio: 1.2,
                    normalization: Normalization::FrobeniusOne,
                },
                vec![0],
            )
        },
        // Greedy deflation on the staircase target.
        "deflation-demo" => ExperimentConfig {
            deflation: Some(DeflationSection {
                stop_norm: 1e-8,
                restarts: 20,
                max_iters: 200,
                tol: 1e-12,
                step_size: 0.3,
            }),
            ..empty(Mode::Deflation, staircase_truth(), vec![0])
        },
        _ => return None,
    };
    Some(cfg)
}
