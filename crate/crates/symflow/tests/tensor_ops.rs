//! Factored tensor representation: construction contracts, contraction
//! closed forms, agreement with the dense brute-force oracle, extreme-scale
//! behavior, and the mass-versus-norm bound.

mod common;

use common::*;
use symflow::dense::DenseSymTensor4;
use symflow::monitor::norm_bound_check;
use symflow::tensor::{
    contract31, contract4, pairwise_inner, per_direction_residual, residual_frobenius, Component,
    ComponentModel, GroundTruth, Normalization, UnitVector,
};
use symflow::truth::{orthogonal_truth, random_truth, sample_unit_sphere};
use symflow::Error;

#[test]
fn unit_vector_normalizes_and_rejects_degenerates() {
    let v = UnitVector::new(vec![3.0, 4.0]).unwrap();
    assert_eq!(v.as_slice(), &[0.6, 0.8]);

    // Already-unit inputs pass through bit for bit (no spurious division).
    let w = UnitVector::new(vec![0.6, 0.8]).unwrap();
    assert_eq!(w.as_slice(), &[0.6, 0.8]);

    assert!(matches!(
        UnitVector::<f64>::new(vec![0.0, 0.0]),
        Err(Error::DegenerateVector)
    ));
    assert!(UnitVector::new(vec![f64::NAN, 1.0]).is_err());

    let e1 = UnitVector::<f64>::basis(4, 1).unwrap();
    assert_eq!(e1.as_slice(), &[0.0, 1.0, 0.0, 0.0]);
    assert!(UnitVector::<f64>::basis(4, 4).is_err());

    let flipped = v.flipped();
    assert_eq!(flipped.as_slice(), &[-0.6, -0.8]);
    assert_eq!(v.dot(&flipped), -1.0);
}

#[test]
fn component_and_model_validation() {
    let dir = UnitVector::<f64>::basis(3, 0).unwrap();
    assert!(Component::new(dir.clone(), 0.5).is_ok());
    assert!(Component::new(dir.clone(), 0.0).is_err());
    assert!(Component::new(dir.clone(), -1.0).is_err());
    assert!(Component::new(dir.clone(), f64::INFINITY).is_err());

    let comp = Component::new(dir, 0.25).unwrap();
    assert_eq!(comp.norm(), 0.5);

    let mismatched = Component::new(UnitVector::<f64>::basis(4, 0).unwrap(), 1.0).unwrap();
    assert!(ComponentModel::new(3, vec![mismatched.clone()]).is_err());

    let mut model = ComponentModel::<f64>::empty(3);
    assert!(model.is_empty());
    assert!(model.push(mismatched).is_err());
    assert!(model.component(0).is_err());
}

#[test]
fn ground_truth_validation() {
    let e0 = UnitVector::<f64>::basis(3, 0).unwrap();
    let e1 = UnitVector::<f64>::basis(3, 1).unwrap();

    // Weights must be sorted nonincreasing and nonnegative.
    assert!(GroundTruth::new(
        vec![0.4, 0.6],
        vec![e0.clone(), e1.clone()],
        true,
        Normalization::SumWeightsOne
    )
    .is_err());
    assert!(GroundTruth::new(vec![-1.0], vec![e0.clone()], true, Normalization::None).is_err());

    // Orthonormality of the directions is enforced when claimed.
    let tilted = UnitVector::new(vec![0.8, 0.6, 0.0]).unwrap();
    assert!(GroundTruth::new(
        vec![1.0, 1.0],
        vec![e0.clone(), tilted.clone()],
        true,
        Normalization::None
    )
    .is_err());
    assert!(GroundTruth::new(
        vec![1.0, 1.0],
        vec![e0.clone(), tilted],
        false,
        Normalization::None
    )
    .is_ok());

    // Declared normalizations are checked numerically.
    assert!(GroundTruth::new(
        vec![0.9, 0.3],
        vec![e0.clone(), e1.clone()],
        true,
        Normalization::SumWeightsOne
    )
    .is_err());
    assert!(GroundTruth::new(
        vec![0.9, 0.3],
        vec![e0, e1],
        true,
        Normalization::FrobeniusOne
    )
    .is_err());
}

#[test]
fn orthogonal_truth_weight_arithmetic() {
    // Frobenius-normalized ratio family: a_k ∝ 1.2^{-k}, ‖T*‖_F = 1.
    let truth = orthogonal_truth::<f64>(10, 5, 1.2, Normalization::FrobeniusOne).unwrap();
    let unnormalized: Vec<f64> = (0..5).map(|k| 1.2f64.powi(4 - k)).collect();
    let fro: f64 = unnormalized.iter().map(|a| a * a).sum::<f64>().sqrt();
    // Largest and smallest weights from direct arithmetic.
    assert_rel_close(truth.weights()[0], unnormalized[0] / fro, 1e-12, 0.0, "a_1");
    assert_rel_close(truth.weights()[4], unnormalized[4] / fro, 1e-12, 0.0, "a_5");
    assert_rel_close(truth.weights()[0], 0.60366, 1e-4, 0.0, "a_1 value");
    assert_rel_close(truth.weights()[4], 0.29112, 1e-4, 0.0, "a_5 value");
    for k in 0..4 {
        assert_rel_close(
            truth.weights()[k] / truth.weights()[k + 1],
            1.2,
            1e-12,
            0.0,
            "ratio",
        );
    }
    assert_rel_close(truth.tensor_frobenius_norm(), 1.0, 1e-12, 0.0, "‖T*‖_F");

    // Sum-normalized two-term family solves 1.2x + x = 1.
    let truth = orthogonal_truth::<f64>(4, 2, 1.2, Normalization::SumWeightsOne).unwrap();
    assert_rel_close(truth.weights()[0], 6.0 / 11.0, 1e-12, 0.0, "6/11");
    assert_rel_close(truth.weights()[1], 5.0 / 11.0, 1e-12, 0.0, "5/11");

    // ratio = 1 → all weights equal.
    let flat = orthogonal_truth::<f64>(5, 3, 1.0, Normalization::SumWeightsOne).unwrap();
    assert!(flat.weights().iter().all(|&a| a == flat.weights()[0]));

    assert!(orthogonal_truth::<f64>(3, 4, 1.2, Normalization::None).is_err());
    assert!(orthogonal_truth::<f64>(3, 2, 0.9, Normalization::None).is_err());
}

#[test]
fn contract4_orthonormal_probes() {
    let truth = orthogonal_truth::<f64>(6, 3, 1.5, Normalization::SumWeightsOne).unwrap();
    let e0 = UnitVector::basis(6, 0).unwrap();
    assert_eq!(contract4(&truth, &e0).unwrap(), truth.weights()[0]);

    let mut mix = vec![0.0; 6];
    mix[0] = 1.0;
    mix[1] = 1.0;
    let v = UnitVector::new(mix).unwrap();
    let expected = (truth.weights()[0] + truth.weights()[1]) / 4.0;
    assert_rel_close(
        contract4(&truth, &v).unwrap(),
        expected,
        1e-14,
        0.0,
        "(a1+a2)/4",
    );

    let wrong_dim = UnitVector::<f64>::basis(5, 0).unwrap();
    assert!(contract4(&truth, &wrong_dim).is_err());
}

#[test]
fn contract31_basis_and_perpendicular_probes() {
    let truth = orthogonal_truth::<f64>(6, 3, 1.5, Normalization::SumWeightsOne).unwrap();
    let e0 = UnitVector::basis(6, 0).unwrap();
    let out = contract31(&truth, &e0).unwrap();
    assert_eq!(out[0], truth.weights()[0]);
    assert!(out[1..].iter().all(|&x| x == 0.0));

    // A probe orthogonal to a rank-one target contracts to the zero vector.
    let single = GroundTruth::new(
        vec![1.0],
        vec![UnitVector::basis(6, 0).unwrap()],
        true,
        Normalization::None,
    )
    .unwrap();
    let perp = UnitVector::basis(6, 3).unwrap();
    assert!(contract31(&single, &perp)
        .unwrap()
        .iter()
        .all(|&x| x == 0.0));
}

#[test]
fn pairwise_inner_closed_forms() {
    let mut r = rng(11);
    let u = sample_unit_sphere::<f64, _>(5, &mut r);
    let v = sample_unit_sphere::<f64, _>(5, &mut r);
    let mu = ComponentModel::new(5, vec![Component::new(u.clone(), 1.0).unwrap()]).unwrap();
    let mv = ComponentModel::new(5, vec![Component::new(v.clone(), 1.0).unwrap()]).unwrap();
    assert_eq!(pairwise_inner(&mu, &mv).unwrap(), u.dot(&v).powi(4));

    let truth = orthogonal_truth::<f64>(6, 4, 1.3, Normalization::SumWeightsOne).unwrap();
    let sum_sq: f64 = truth.weights().iter().map(|a| a * a).sum();
    assert_rel_close(
        pairwise_inner(&truth, &truth).unwrap(),
        sum_sq,
        1e-14,
        0.0,
        "⟨T*,T*⟩",
    );

    let smaller = ComponentModel::<f64>::empty(4);
    assert!(pairwise_inner(&truth, &smaller).is_err());
}

#[test]
fn residual_frobenius_examples() {
    let truth = orthogonal_truth::<f64>(10, 5, 1.2, Normalization::FrobeniusOne).unwrap();
    let empty = ComponentModel::empty(10);
    assert_rel_close(
        residual_frobenius(&truth, &empty).unwrap(),
        1.0,
        1e-12,
        0.0,
        "empty-model residual",
    );

    // The mirrored model carries identical term values in identical order, so
    // the three Gram sums coincide and x − 2x + x vanishes in floating point.
    let exact = truth.as_exact_model();
    assert_eq!(residual_frobenius(&truth, &exact).unwrap(), 0.0);

    let nonortho = random_truth::<f64, _>(6, 3, &mut rng(5)).unwrap();
    assert_eq!(
        residual_frobenius(&nonortho, &nonortho.as_exact_model()).unwrap(),
        0.0
    );
}

#[test]
fn per_direction_residual_examples() {
    let truth = orthogonal_truth::<f64>(10, 5, 1.2, Normalization::FrobeniusOne).unwrap();
    let empty = ComponentModel::empty(10);
    for i in 0..5 {
        assert_eq!(
            per_direction_residual(&truth, &empty, i).unwrap(),
            truth.weights()[i]
        );
    }
    let exact = truth.as_exact_model();
    for i in 0..5 {
        assert_eq!(per_direction_residual(&truth, &exact, i).unwrap(), 0.0);
    }
    assert!(per_direction_residual(&truth, &empty, 5).is_err());
}

#[test]
fn dense_representation_of_basis_power() {
    let single = GroundTruth::new(
        vec![1.0],
        vec![UnitVector::<f64>::basis(3, 0).unwrap()],
        true,
        Normalization::None,
    )
    .unwrap();
    let t = dense(&single);
    assert_eq!(t.get(0, 0, 0, 0), 1.0);
    let mut nonzero = 0;
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    if t.get(i, j, k, l) != 0.0 {
                        nonzero += 1;
                    }
                }
            }
        }
    }
    assert_eq!(nonzero, 1);
    assert_eq!(t.max_symmetry_violation(), 0.0);
    assert_eq!(t.frobenius_norm(), 1.0);

    let truth = orthogonal_truth::<f64>(5, 3, 1.4, Normalization::SumWeightsOne).unwrap();
    let dt = dense(&truth);
    let expected: f64 = truth.weights().iter().map(|a| a * a).sum::<f64>().sqrt();
    assert_rel_close(dt.frobenius_norm(), expected, 1e-12, 0.0, "dense ‖T*‖_F");
    assert!(dt.max_symmetry_violation() <= 1e-12 * dt.frobenius_norm());

    assert!(DenseSymTensor4::<f64>::zeros(33).is_err());
}

#[test]
fn gram_and_dense_computations_agree() {
    for seed in 0..20u64 {
        let mut r = rng(1000 + seed);
        let (truth, model) = random_instance(6, 3, 4, &mut r);
        let v = sample_unit_sphere::<f64, _>(6, &mut r);

        let dt = dense(&truth);
        let dm = dense(&model);
        let diff = dt.sub(&dm).unwrap();

        assert_rel_close(
            contract4(&truth, &v).unwrap(),
            dt.contract4(&v).unwrap(),
            1e-10,
            1e-12,
            "contract4 truth",
        );
        assert_rel_close(
            contract4(&model, &v).unwrap(),
            dm.contract4(&v).unwrap(),
            1e-10,
            1e-12,
            "contract4 model",
        );
        let g31 = contract31(&model, &v).unwrap();
        let d31 = dm.contract31(&v).unwrap();
        for (k, (&a, &b)) in g31.iter().zip(&d31).enumerate() {
            assert_rel_close(a, b, 1e-10, 1e-12, &format!("contract31[{k}]"));
        }
        assert_rel_close(
            pairwise_inner(&truth, &model).unwrap(),
            dt.inner(&dm).unwrap(),
            1e-10,
            1e-12,
            "pairwise inner",
        );
        assert_rel_close(
            residual_frobenius(&truth, &model).unwrap(),
            diff.frobenius_norm(),
            1e-10,
            1e-12,
            "residual",
        );
        assert!(dm.max_symmetry_violation() <= 1e-12 * dm.frobenius_norm().max(1.0));
    }

    // Probing along the target directions of an orthonormal truth.
    let truth = orthogonal_truth::<f64>(6, 3, 1.2, Normalization::FrobeniusOne).unwrap();
    let model = random_model_in(6, 5, 0.2, 1.0, &mut rng(77));
    let diff = dense(&truth).sub(&dense(&model)).unwrap();
    for i in 0..3 {
        assert_rel_close(
            per_direction_residual(&truth, &model, i).unwrap(),
            diff.contract4(&truth.directions()[i]).unwrap(),
            1e-10,
            1e-12,
            "per-direction residual",
        );
    }
}

#[test]
fn sum_sq_norms_examples_and_norm_bound() {
    let single = ComponentModel::new(
        6,
        vec![Component::new(UnitVector::basis(6, 2).unwrap(), 0.5).unwrap()],
    )
    .unwrap();
    assert_eq!(single.sum_sq_norms(), 0.5);
    // Rank one is the equality case ‖T‖_F = ‖w‖², so the margin is (d−1)‖w‖².
    assert_rel_close(norm_bound_check(&single), 5.0 * 0.5, 1e-12, 0.0, "margin");

    let empty = ComponentModel::<f64>::empty(6);
    assert_eq!(empty.sum_sq_norms(), 0.0);
    assert_eq!(norm_bound_check(&empty), 0.0);

    // The bound holds with slack on random models, including sizes that
    // exercise the tree-reduction summation path.
    for seed in 0..30u64 {
        let mut r = rng(2000 + seed);
        let m = 1 + (seed as usize * 7) % 90;
        let model = random_model_in(5, m, 0.05, 2.0, &mut r);
        let margin = norm_bound_check(&model);
        assert!(
            margin >= -1e-9,
            "norm bound violated at seed {seed}: margin {margin}"
        );
        assert!(
            model.sum_sq_norms() <= 5.0 * model.tensor_frobenius_norm() + 1e-9,
            "mass exceeds d·‖T‖_F at seed {seed}"
        );
    }
}

#[test]
fn tiny_components_stay_representable() {
    let mut r = rng(3);
    let tiny_dir = sample_unit_sphere::<f64, _>(8, &mut r);
    let tiny = Component::new(tiny_dir.clone(), 1e-200).unwrap();
    let big = Component::new(UnitVector::basis(8, 0).unwrap(), 1.0).unwrap();
    let model = ComponentModel::new(8, vec![tiny, big]).unwrap();

    // An O(1) component does not absorb the tiny one's contribution...
    let at_big = contract4(&model, &UnitVector::basis(8, 0).unwrap()).unwrap();
    assert!(at_big.is_finite());
    assert_rel_close(at_big, 1.0, 1e-12, 0.0, "big direction");

    // ...and in isolation the tiny component contracts to its own scale.
    let alone =
        ComponentModel::new(8, vec![Component::new(tiny_dir.clone(), 1e-200).unwrap()]).unwrap();
    let self_value = contract4(&alone, &tiny_dir).unwrap();
    assert_rel_close(self_value, 1e-200, 1e-12, 0.0, "tiny self-contraction");
    let g31 = contract31(&alone, &tiny_dir).unwrap();
    for (k, &x) in g31.iter().enumerate() {
        assert!(x.is_finite());
        assert_rel_close(
            x,
            1e-200 * tiny_dir.as_slice()[k],
            1e-12,
            1e-215,
            "tiny contract31",
        );
    }

    // A thousand tiny components plus one large one: the tree reduction keeps
    // everything finite and the large term intact.
    let mut comps = vec![Component::new(UnitVector::basis(8, 1).unwrap(), 0.7).unwrap()];
    for _ in 0..1000 {
        comps.push(Component::new(sample_unit_sphere(8, &mut r), 1e-200).unwrap());
    }
    let crowd = ComponentModel::new(8, comps).unwrap();
    let at_e1 = contract4(&crowd, &UnitVector::basis(8, 1).unwrap()).unwrap();
    assert_rel_close(at_e1, 0.7, 1e-12, 0.0, "crowded contraction");
    assert!(crowd.tensor_frobenius_norm().is_finite());
}

#[test]
fn sign_flips_and_permutations_preserve_values() {
    let mut r = rng(9);
    let (truth, model) = random_instance(5, 2, 10, &mut r);
    let v = sample_unit_sphere::<f64, _>(5, &mut r);

    // Flipping direction signs leaves even-order contractions bit-identical.
    let flipped = ComponentModel::new(
        5,
        model
            .components()
            .iter()
            .map(|c| Component::new(c.direction().flipped(), c.sq_norm()).unwrap())
            .collect(),
    )
    .unwrap();
    assert_eq!(
        contract4(&model, &v).unwrap(),
        contract4(&flipped, &v).unwrap()
    );
    assert_eq!(
        residual_frobenius(&truth, &model).unwrap(),
        residual_frobenius(&truth, &flipped).unwrap()
    );

    // Reordering components only reorders the summation: within round-off.
    let reversed =
        ComponentModel::new(5, model.components().iter().rev().cloned().collect()).unwrap();
    assert_rel_close(
        contract4(&model, &v).unwrap(),
        contract4(&reversed, &v).unwrap(),
        1e-12,
        1e-14,
        "permuted contract4",
    );
    assert_rel_close(
        residual_frobenius(&truth, &model).unwrap(),
        residual_frobenius(&truth, &reversed).unwrap(),
        1e-12,
        1e-14,
        "permuted residual",
    );
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn gram_matches_dense_on_random_instances(
            seed in 0u64..(1u64 << 48),
            d in 2usize..=7,
            r_raw in 1usize..=3,
            m in 0usize..=5,
        ) {
            let r = r_raw.min(d);
            let mut rg = rng(seed);
            let truth = random_truth::<f64, _>(d, r, &mut rg).unwrap();
            let model = random_model_in(d, m, 0.1, 1.5, &mut rg);
            let v = sample_unit_sphere::<f64, _>(d, &mut rg);

            let dt = dense(&truth);
            let dm = dense(&model);

            // The dense side accumulates round-off at the scale of the whole
            // tensor, so near-orthogonal probes need an absolute floor next to
            // the relative tolerance.
            let scale = dm.frobenius_norm().max(1e-12);
            let g4 = contract4(&model, &v).unwrap();
            let d4 = dm.contract4(&v).unwrap();
            prop_assert!((g4 - d4).abs() <= 1e-10 * g4.abs().max(d4.abs()) + 1e-12 * scale);

            let rscale = dt.frobenius_norm() + dm.frobenius_norm();
            let gr = residual_frobenius(&truth, &model).unwrap();
            let dr = dt.sub(&dm).unwrap().frobenius_norm();
            prop_assert!((gr - dr).abs() <= 1e-10 * gr.max(dr) + 1e-12 * rscale);
        }

        #[test]
        fn component_mass_never_exceeds_dim_times_tensor_norm(
            seed in 0u64..(1u64 << 48),
            d in 2usize..=8,
            m in 1usize..=90,
            scale_exp in -30.0f64..2.0,
        ) {
            let mut rg = rng(seed);
            let scale = 10f64.powf(scale_exp);
            let model = random_model_in(d, m, 0.5 * scale, 1.5 * scale, &mut rg);
            prop_assert!(norm_bound_check(&model) >= -1e-9);
        }
    }
}
