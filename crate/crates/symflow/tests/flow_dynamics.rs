//! Gradient-flow dynamics: loss values, radial/tangent rate closed forms,
//! agreement with finite differences and raw-vector Euler stepping, descent,
//! rotation equivariance, and behavior at extreme component scales.

mod common;

use common::*;
use symflow::flow::{LossSpec, StepperConfig, EULER_SQ_NORM_FLOOR};
use symflow::tensor::{Component, ComponentModel, GroundTruth, Normalization, UnitVector};
use symflow::truth::{orthogonal_truth, random_truth, sample_unit_sphere};

fn single_direction_truth(d: usize, weight: f64) -> GroundTruth<f64> {
    GroundTruth::new(
        vec![weight],
        vec![UnitVector::basis(d, 0).unwrap()],
        true,
        Normalization::None,
    )
    .unwrap()
}

fn aligned_model(d: usize, sq_norm: f64) -> ComponentModel<f64> {
    ComponentModel::new(
        d,
        vec![Component::new(UnitVector::basis(d, 0).unwrap(), sq_norm).unwrap()],
    )
    .unwrap()
}

#[test]
fn loss_examples() {
    let truth = orthogonal_truth::<f64>(6, 3, 1.3, Normalization::FrobeniusOne).unwrap();
    let spec = LossSpec::new(truth.clone(), 0.0).unwrap();

    // Empty model: loss is half the squared target norm, residual is ‖T*‖.
    let empty = ComponentModel::empty(6);
    assert_rel_close(spec.loss(&empty).unwrap(), 0.5, 1e-12, 0.0, "empty loss");
    assert_rel_close(
        spec.residual_norm(&empty).unwrap(),
        1.0,
        1e-12,
        0.0,
        "empty residual",
    );

    // Exact mirror: the fit term vanishes exactly; only the ridge remains.
    let exact = truth.as_exact_model();
    assert_eq!(spec.loss(&exact).unwrap(), 0.0);
    let lambda = 1e-3;
    let ridged = LossSpec::new(truth.clone(), lambda).unwrap();
    assert_eq!(
        ridged.loss(&exact).unwrap(),
        0.5 * lambda * exact.sum_sq_norms()
    );

    // Residual probes along the target directions of an unfitted model.
    for (i, dir) in truth.directions().iter().enumerate() {
        assert_eq!(spec.residual_on4(&empty, dir).unwrap(), truth.weights()[i]);
        let r3 = spec.residual_on31(&empty, dir).unwrap();
        assert_eq!(r3[i], truth.weights()[i]);
    }

    assert!(LossSpec::new(truth, -1.0).is_err());
}

#[test]
fn aligned_component_rates_and_growth() {
    // Target e_0⊗⁴ with unit weight; one component exactly along e_0 with
    // squared norm a. Symmetry kills the tangent rate identically and the
    // radial rate is 2(1 − a) − λ; one Euler step multiplies the squared norm
    // by 1 + 2η·radial, i.e. 1 + 4η(1 − a) at λ = 0.
    let a = 0.3;
    let truth = single_direction_truth(6, 1.0);
    let spec = LossSpec::new(truth, 0.0).unwrap();
    let model = aligned_model(6, a);

    let rates = spec.component_rates(&model, 0).unwrap();
    assert_eq!(rates.radial, 2.0 * (1.0 - a));
    assert!(rates.tangent.iter().all(|&t| t == 0.0));

    let eta = 0.01;
    let next = spec.euler_step(&model, eta).unwrap();
    let comp = next.component(0).unwrap();
    assert_eq!(comp.sq_norm(), a * (1.0 + 2.0 * eta * (2.0 * (1.0 - a))));
    assert_eq!(
        comp.direction().as_slice(),
        UnitVector::<f64>::basis(6, 0).unwrap().as_slice()
    );

    // The gradient of that configuration points along −e_0 with magnitude
    // √a · radial.
    let g = spec.component_gradient(&model, 0).unwrap();
    assert_eq!(g[0], -a.sqrt() * (2.0 * (1.0 - a)));
    assert!(g[1..].iter().all(|&x| x == 0.0));
}

#[test]
fn pure_shrink_under_ridge_when_residual_vanishes() {
    // When the model mirrors the target exactly, the residual acts as zero on
    // every component, so the flow is pure ridge decay: radial = −λ and one
    // Euler step scales each squared norm by exactly 1 − 2ηλ.
    let truth = orthogonal_truth::<f64>(5, 2, 1.4, Normalization::SumWeightsOne).unwrap();
    let lambda = 1e-3;
    let spec = LossSpec::new(truth.clone(), lambda).unwrap();
    let model = truth.as_exact_model();

    for j in 0..model.len() {
        let rates = spec.component_rates(&model, j).unwrap();
        assert_eq!(rates.radial, -lambda);
        assert!(rates.tangent.iter().all(|&t| t == 0.0));
    }

    let eta = 0.05;
    let next = spec.euler_step(&model, eta).unwrap();
    for j in 0..model.len() {
        assert_eq!(
            next.component(j).unwrap().sq_norm(),
            model.component(j).unwrap().sq_norm() * (1.0 - 2.0 * eta * lambda)
        );
    }
}

#[test]
fn gradient_matches_finite_differences() {
    for seed in 0..10u64 {
        let mut r = rng(4000 + seed);
        let d = 4 + (seed as usize) % 3;
        let truth = random_truth::<f64, _>(d, 2, &mut r).unwrap();
        let model = random_model_in(d, 3, 0.1, 3.0, &mut r);
        let lambda = if seed % 2 == 0 { 0.0 } else { 1e-2 };
        let spec = LossSpec::new(truth, lambda).unwrap();

        for j in 0..model.len() {
            let g = spec.component_gradient(&model, j).unwrap();
            let h = 1e-5 * model.component(j).unwrap().norm().max(1.0);
            let fd = fd_gradient(&spec, &model, j, h);
            let gnorm: f64 = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            let err: f64 = g
                .iter()
                .zip(&fd)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(
                err <= 1e-6 * gnorm.max(1e-8),
                "seed {seed} comp {j}: FD mismatch {err:.3e} vs ‖g‖ {gnorm:.3e}"
            );
        }
    }
}

#[test]
fn euler_matches_raw_vector_step() {
    // The factored update (multiplicative norm, renormalized direction) agrees
    // with a raw-coordinate Euler step w ← w − η∇L to second order in η.
    let mut r = rng(41);
    let truth = random_truth::<f64, _>(5, 2, &mut r).unwrap();
    let model = random_model_in(5, 3, 0.5, 1.2, &mut r);
    let spec = LossSpec::new(truth, 1e-3).unwrap();

    let max_gap = |eta: f64| -> f64 {
        let stepped = spec.euler_step(&model, eta).unwrap();
        let mut worst = 0.0f64;
        for j in 0..model.len() {
            let g = spec.component_gradient(&model, j).unwrap();
            let raw: Vec<f64> = raw_vector(&model, j)
                .iter()
                .zip(&g)
                .map(|(w, gk)| w - eta * gk)
                .collect();
            let fac = raw_vector(&stepped, j);
            for (a, b) in fac.iter().zip(&raw) {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    };

    // Absolute closeness at a small step size...
    assert!(max_gap(1e-6) <= 1e-8, "gap {} at η=1e-6", max_gap(1e-6));

    // ...and the defect shrinks like η² when the step is halved.
    let (g1, g2) = (max_gap(1e-3), max_gap(5e-4));
    assert!(g1 > 1e-13, "defect too small to resolve the order");
    let ratio = g1 / g2;
    assert!(
        (3.3..=4.7).contains(&ratio),
        "halving η gave defect ratio {ratio}, expected ≈4"
    );
}

#[test]
fn analytic_rate_examples() {
    // Exactly fitted component: the direction is stationary, every coordinate
    // rate is exactly zero.
    let truth = orthogonal_truth::<f64>(4, 2, 1.5, Normalization::SumWeightsOne).unwrap();
    let spec = LossSpec::new(truth.clone(), 0.0).unwrap();
    let exact = truth.as_exact_model();
    for k in 0..4 {
        assert_eq!(spec.analytic_direction_rate(&exact, 0, k).unwrap(), 0.0);
    }

    // Hand-checked: target e_0⊗⁴ in d = 2, a negligible component at 45°.
    // With q = ⟨e_0, v̄⟩ = √½ the first-coordinate rate is
    //   2v̄_0·4(q³ − q⁴v̄_0) = 8(2^{-2} − 2^{-3}) = 1.
    let truth2 = single_direction_truth(2, 1.0);
    let spec2 = LossSpec::new(truth2, 0.0).unwrap();
    let half = 0.5f64.sqrt();
    let diag = ComponentModel::new(
        2,
        vec![Component::new(UnitVector::new(vec![half, half]).unwrap(), 1e-30).unwrap()],
    )
    .unwrap();
    assert_rel_close(
        spec2.analytic_direction_rate(&diag, 0, 0).unwrap(),
        1.0,
        1e-12,
        0.0,
        "45° rate",
    );

    assert!(spec2.analytic_direction_rate(&diag, 0, 2).is_err());

    // On random instances the coordinate rates sum to ~0 (unit-norm
    // constraint) and match finite differences of the squared coordinates
    // along the discrete trajectory.
    let mut r = rng(42);
    let truth = random_truth::<f64, _>(5, 2, &mut r).unwrap();
    let model = random_model_in(5, 3, 0.4, 1.1, &mut r);
    let spec = LossSpec::new(truth.clone(), 1e-3).unwrap();
    let eta = 1e-7;
    let stepped = spec.euler_step(&model, eta).unwrap();
    for j in 0..model.len() {
        let before = model.component(j).unwrap().direction();
        let after = stepped.component(j).unwrap().direction();
        let mut sum = 0.0;
        for k in 0..5 {
            let rate = spec.analytic_direction_rate(&model, j, k).unwrap();
            sum += rate;
            let fd = (after.as_slice()[k].powi(2) - before.as_slice()[k].powi(2)) / eta;
            assert!(
                (fd - rate).abs() <= 1e-5 * rate.abs().max(fd.abs()) + 1e-8,
                "comp {j} coord {k}: fd {fd:.6e} vs rate {rate:.6e}"
            );
        }
        assert!(sum.abs() <= 1e-12, "rates sum to {sum}");

        // Alignment rate against an arbitrary unit vector follows the same
        // chain rule; against the component's own direction it vanishes.
        let u = sample_unit_sphere::<f64, _>(5, &mut r);
        let arate = spec.alignment_rate(&model, j, &u).unwrap();
        let fd = (after.dot(&u).powi(2) - before.dot(&u).powi(2)) / eta;
        assert!(
            (fd - arate).abs() <= 1e-5 * arate.abs().max(fd.abs()) + 1e-8,
            "alignment rate fd {fd:.6e} vs {arate:.6e}"
        );
        assert!(spec.alignment_rate(&model, j, before).unwrap().abs() <= 1e-12);

        let wrong_dim = UnitVector::<f64>::basis(4, 0).unwrap();
        assert!(spec.alignment_rate(&model, j, &wrong_dim).is_err());
    }
}

#[test]
fn euler_descends_for_small_enough_steps() {
    for seed in 0..20u64 {
        let mut r = rng(5000 + seed);
        let (truth, model) = random_instance(5, 2, 4, &mut r);
        let spec = LossSpec::new(truth, 0.0).unwrap();
        let base = spec.loss(&model).unwrap();

        let mut eta = 0.1;
        let mut descended = false;
        for _ in 0..20 {
            let next = spec.euler_step(&model, eta).unwrap();
            if spec.loss(&next).unwrap() < base {
                descended = true;
                break;
            }
            eta *= 0.5;
        }
        assert!(descended, "no descent found at seed {seed}");
    }
}

#[test]
fn trajectories_are_rotation_equivariant() {
    // Running the flow against a rotated target from a rotated start, then
    // rotating back, reproduces the original trajectory coordinate-wise.
    for trial in 0..5u64 {
        let mut r = rng(6000 + trial);
        let truth = random_truth::<f64, _>(5, 2, &mut r).unwrap();
        let model = random_model_in(5, 4, 0.3, 1.0, &mut r);
        let q = random_orthogonal(5, &mut r);

        let cfg = StepperConfig {
            step_size: 0.02,
            max_steps: 50,
        };
        let spec = LossSpec::new(truth.clone(), 1e-3).unwrap();
        let spec_rot = LossSpec::new(rotate_truth(&q, &truth), 1e-3).unwrap();

        let plain = spec
            .gradient_descent(model.clone(), &cfg, |_, _| {})
            .unwrap();
        let rotated = spec_rot
            .gradient_descent(rotate_model(&q, &model), &cfg, |_, _| {})
            .unwrap();

        let qt = transpose(&q);
        for j in 0..plain.len() {
            let a = raw_vector(&plain, j);
            let back = apply_matrix(&qt, &raw_vector(&rotated, j));
            for (k, (&x, &y)) in a.iter().zip(&back).enumerate() {
                assert!(
                    (x - y).abs() <= 1e-8,
                    "trial {trial} comp {j} coord {k}: {x} vs {y}"
                );
            }
        }
    }
}

#[test]
fn rates_stay_exact_at_extreme_scales() {
    // The factored form keeps the aligned closed form 2(1 − c) − λ at any
    // representable scale; nothing overflows, underflows, or loses the
    // closed-form value.
    let lambda = 1e-3;
    let truth = single_direction_truth(4, 1.0);
    let spec = LossSpec::new(truth, lambda).unwrap();
    for &c in &[1e-200, 1e-12, 1.0, 1e12] {
        let model = aligned_model(4, c);
        let rates = spec.component_rates(&model, 0).unwrap();
        assert_eq!(rates.radial, 2.0 * (1.0 - c) - lambda, "sq_norm {c}");
        assert!(rates.tangent.iter().all(|&t| t == 0.0));
        let g = spec.component_gradient(&model, 0).unwrap();
        assert_eq!(g[0], -c.sqrt() * (2.0 * (1.0 - c) - lambda));
        assert!(g.iter().all(|x| x.is_finite()));
    }

    // The hand-checked 45° rate is scale-free: the same value appears whether
    // the component mass is 1e-30 or 1e-300.
    let truth2 = single_direction_truth(2, 1.0);
    let spec2 = LossSpec::new(truth2, 0.0).unwrap();
    let half = 0.5f64.sqrt();
    for &c in &[1e-30, 1e-300] {
        let diag = ComponentModel::new(
            2,
            vec![Component::new(UnitVector::new(vec![half, half]).unwrap(), c).unwrap()],
        )
        .unwrap();
        assert_rel_close(
            spec2.analytic_direction_rate(&diag, 0, 0).unwrap(),
            1.0,
            1e-12,
            0.0,
            "scale-free 45° rate",
        );
    }
}

#[test]
fn euler_step_guards_and_stepper_config() {
    let truth = single_direction_truth(4, 1.0);
    let spec = LossSpec::new(truth, 0.0).unwrap();

    // A strongly misaligned heavy component has a violently negative radial
    // rate; the multiplicative update floors the growth factor instead of
    // driving the squared norm negative.
    let misaligned = ComponentModel::new(
        4,
        vec![Component::new(UnitVector::basis(4, 3).unwrap(), 100.0).unwrap()],
    )
    .unwrap();
    let stepped = spec.euler_step(&misaligned, 0.05).unwrap();
    assert_eq!(
        stepped.component(0).unwrap().sq_norm(),
        100.0 * EULER_SQ_NORM_FLOOR
    );

    assert!(spec.euler_step(&misaligned, 0.0).is_err());
    assert!(spec.euler_step(&misaligned, -0.1).is_err());

    assert!(StepperConfig {
        step_size: 0.0,
        max_steps: 10
    }
    .validate()
    .is_err());

    // The observer sees every step index once, in order.
    let model = aligned_model(4, 0.5);
    let mut seen = Vec::new();
    let cfg = StepperConfig {
        step_size: 0.01,
        max_steps: 5,
    };
    let _ = spec
        .gradient_descent(model, &cfg, |t, m| {
            assert_eq!(m.len(), 1);
            seen.push(t);
        })
        .unwrap();
    assert_eq!(seen, vec![1, 2, 3, 4, 5]);
}
