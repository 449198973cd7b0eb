//! Helpers shared by the integration tests: seeded RNGs, random instances,
//! the dense brute-force tensor, rotation utilities, and a finite-difference
//! gradient of the loss in raw parameter coordinates.
#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use symflow::dense::DenseSymTensor4;
use symflow::flow::LossSpec;
use symflow::tensor::{Component, ComponentModel, GroundTruth, RankOneSum, UnitVector};
use symflow::truth::{random_truth, sample_unit_sphere};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random model whose component norms are uniform in `[lo, hi]`.
pub fn random_model_in(
    d: usize,
    m: usize,
    lo: f64,
    hi: f64,
    rng: &mut impl Rng,
) -> ComponentModel<f64> {
    let components = (0..m)
        .map(|_| {
            let norm: f64 = rng.random_range(lo..=hi);
            Component::new(sample_unit_sphere(d, rng), norm * norm).unwrap()
        })
        .collect();
    ComponentModel::new(d, components).unwrap()
}

/// Random non-orthogonal truth plus a moderate-scale random model.
pub fn random_instance(
    d: usize,
    r: usize,
    m: usize,
    rng: &mut impl Rng,
) -> (GroundTruth<f64>, ComponentModel<f64>) {
    let truth = random_truth(d, r, rng).unwrap();
    let model = random_model_in(d, m, 0.3, 1.5, rng);
    (truth, model)
}

pub fn dense(t: &impl RankOneSum<f64>) -> DenseSymTensor4<f64> {
    DenseSymTensor4::from_rank_one_sum(t).unwrap()
}

/// Asserts `|a − b| ≤ tol · max(|a|, |b|, floor)`.
pub fn assert_rel_close(a: f64, b: f64, tol: f64, floor: f64, what: &str) {
    let scale = a.abs().max(b.abs()).max(floor);
    assert!(
        (a - b).abs() <= tol * scale,
        "{what}: {a} vs {b} differ by {:.3e} (allowed {:.3e})",
        (a - b).abs(),
        tol * scale
    );
}

/// Random orthogonal matrix (rows returned) via Gram–Schmidt on a Gaussian
/// matrix; re-orthogonalized once so row inner products sit at round-off.
pub fn random_orthogonal(d: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(d);
    while rows.len() < d {
        let mut v: Vec<f64> = sample_unit_sphere::<f64, _>(d, rng).as_slice().to_vec();
        for _ in 0..2 {
            for row in &rows {
                let ip: f64 = v.iter().zip(row).map(|(a, b)| a * b).sum();
                for (x, &r) in v.iter_mut().zip(row) {
                    *x -= ip * r;
                }
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            for x in &mut v {
                *x /= norm;
            }
            rows.push(v);
        }
    }
    rows
}

/// `Q v` for a matrix stored as rows.
pub fn apply_matrix(q: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    q.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

pub fn transpose(q: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = q.len();
    (0..d).map(|j| (0..d).map(|i| q[i][j]).collect()).collect()
}

pub fn rotate_unit(q: &[Vec<f64>], v: &UnitVector<f64>) -> UnitVector<f64> {
    UnitVector::new(apply_matrix(q, v.as_slice())).unwrap()
}

pub fn rotate_truth(q: &[Vec<f64>], truth: &GroundTruth<f64>) -> GroundTruth<f64> {
    let directions = truth
        .directions()
        .iter()
        .map(|u| rotate_unit(q, u))
        .collect();
    GroundTruth::new(
        truth.weights().to_vec(),
        directions,
        truth.is_orthonormal(),
        truth.normalization(),
    )
    .unwrap()
}

pub fn rotate_model(q: &[Vec<f64>], model: &ComponentModel<f64>) -> ComponentModel<f64> {
    let components = model
        .components()
        .iter()
        .map(|c| Component::new(rotate_unit(q, c.direction()), c.sq_norm()).unwrap())
        .collect();
    ComponentModel::new(model.dim(), components).unwrap()
}

fn with_raw_vector(model: &ComponentModel<f64>, j: usize, w: &[f64]) -> ComponentModel<f64> {
    let sq: f64 = w.iter().map(|x| x * x).sum();
    let mut out = model.clone();
    out.replace(
        j,
        Component::new(UnitVector::new(w.to_vec()).unwrap(), sq).unwrap(),
    )
    .unwrap();
    out
}

/// Raw parameter vector `w_j = ‖w_j‖ · direction_j`.
pub fn raw_vector(model: &ComponentModel<f64>, j: usize) -> Vec<f64> {
    let comp = model.component(j).unwrap();
    let norm = comp.norm();
    comp.direction()
        .as_slice()
        .iter()
        .map(|&v| norm * v)
        .collect()
}

/// Central finite difference of the loss with respect to each coordinate of
/// the raw parameter vector of component `j`.
pub fn fd_gradient(
    spec: &LossSpec<f64>,
    model: &ComponentModel<f64>,
    j: usize,
    h: f64,
) -> Vec<f64> {
    let w0 = raw_vector(model, j);
    (0..w0.len())
        .map(|k| {
            let mut lo = w0.clone();
            lo[k] -= h;
            let mut hi = w0.clone();
            hi[k] += h;
            let loss_hi = spec.loss(&with_raw_vector(model, j, &hi)).unwrap();
            let loss_lo = spec.loss(&with_raw_vector(model, j, &lo)).unwrap();
            (loss_hi - loss_lo) / (2.0 * h)
        })
        .collect()
}
