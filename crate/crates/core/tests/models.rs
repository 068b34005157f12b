mod common;

use fairitr_core::cate::{fit_rlearner, weight_from_effect};
use fairitr_core::data::{generate_experiment, LabeledDataset, LabeledRow, Scenario, Treatment};
use fairitr_core::metrics::{estimate_value, ValueRow};
use fairitr_core::nuisance::{
    fit_owl, fit_owl_cv, fit_propensity, fit_qlearning, DecisionModel, KernelSpec, PropensityModel, DEFAULT_RIDGE_GRID,
};
use fairitr_core::rng::RngSeed;
use proptest::prelude::*;

/// Randomized two-group data with `d` uniform covariates and reward
/// `reward(x, W) + N(0, noise²)`, `W ∈ {0, 1}`.
fn synthetic(n: usize, d: usize, seed: u64, noise: f64, reward: impl Fn(&[f64], f64) -> f64) -> LabeledDataset {
    let family = RngSeed(seed);
    let rows = (0..n)
        .map(|i| {
            let mut rng = family.stream(i as u64);
            let x: Vec<f64> = (0..d).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
            let s = rng.below(2) as usize;
            let a = if rng.bernoulli(0.5) { Treatment::Treated } else { Treatment::Control };
            let w = if a == Treatment::Treated { 1.0 } else { 0.0 };
            let r = reward(&x, w) + noise * rng.normal();
            LabeledRow { x, s, a, r }
        })
        .collect();
    LabeledDataset::new(d, vec!["0".into(), "1".into()], rows).unwrap()
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

#[test]
fn propensity_on_randomized_experiment_is_near_half() {
    let data = generate_experiment(1, 10_000, RngSeed(1)).unwrap();
    let prop = fit_propensity(&data, 1e-3, 0.01).unwrap();
    let m = mean(data.rows().iter().map(|r| prop.prob_treated(&r.x, r.s)));
    assert!((0.48..=0.52).contains(&m), "mean propensity {m}");
}

proptest! {
    #[test]
    fn propensity_is_clipped(
        coefs in prop::collection::vec(-50.0f64..50.0, 6),
        floor in 1e-4f64..0.49,
        x in prop::collection::vec(-1e3f64..1e3, 3),
        s in 0usize..2,
    ) {
        let p = PropensityModel::from_coefficients(3, 2, coefs, floor).unwrap();
        let v = p.prob_treated(&x, s);
        prop_assert!(v >= floor && v <= 1.0 - floor);
        let total = p.prob(Treatment::Treated, &x, s) + p.prob(Treatment::Control, &x, s);
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weight_is_monotone_in_alpha_and_below_one(
        effect in -1e3f64..1e3,
        a1 in 0.0f64..1e3,
        a2 in 0.0f64..1e3,
    ) {
        let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
        let (w1, w2) = (weight_from_effect(effect, lo).unwrap(), weight_from_effect(effect, hi).unwrap());
        prop_assert!((0.0..1.0).contains(&w1) && (0.0..1.0).contains(&w2));
        prop_assert!(w1 <= w2);
        if effect == 0.0 {
            prop_assert_eq!(w2, 0.0);
        }
    }
}

#[test]
fn weight_is_strictly_increasing_for_nonzero_effect() {
    for effect in [-3.0, -0.2, 0.5, 4.0] {
        let w: Vec<f64> = [0.0, 0.1, 0.5, 1.0, 2.0].iter().map(|&a| weight_from_effect(effect, a).unwrap()).collect();
        assert!(w.windows(2).all(|p| p[0] < p[1]), "{w:?}");
    }
    assert!(weight_from_effect(1.0, -0.1).is_err());
}

#[test]
fn owl_without_signal_shrinks_to_zero() {
    // two copies of every x, one per arm, equal rewards
    let rows: Vec<LabeledRow> = (0..40)
        .flat_map(|i| {
            let x = vec![-2.0 + 0.1 * i as f64];
            [Treatment::Treated, Treatment::Control].map(|a| LabeledRow { x: x.clone(), s: i % 2, a, r: 1.0 })
        })
        .collect();
    let data = LabeledDataset::new(1, vec!["0".into(), "1".into()], rows).unwrap();
    let prop = PropensityModel::constant(1, 2, 0.5, 0.01).unwrap();
    let norm = |m: &DecisionModel| m.coefficients.iter().map(|c| c * c).sum::<f64>().sqrt();
    let norms: Vec<f64> = [1e-2, 1.0, 1e2]
        .iter()
        .map(|&ridge| norm(&fit_owl(&data, KernelSpec::Linear, ridge, &prop).unwrap()))
        .collect();
    assert!(norms.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{norms:?}");
    assert!(norms[2] < 1e-6, "{norms:?}");
}

#[test]
fn owl_beats_treat_none_on_experiment_one() {
    let fitted = common::fit_experiment_one(500, 2);
    let test = generate_experiment(1, 100_000, RngSeed(3)).unwrap();
    let sc = Scenario::Experiment(1);
    let learned = mean(test.rows().iter().map(|r| {
        let a = Treatment::from_score(fitted.base.score(&r.x, r.s).unwrap());
        sc.mean_reward(&r.x, r.s, a)
    }));
    let none = mean(test.rows().iter().map(|r| sc.mean_reward(&r.x, r.s, Treatment::Control)));
    assert!(learned > none, "learned {learned} vs treat-none {none}");
}

#[test]
fn cross_validated_owl_keeps_a_nonconstant_rule() {
    let test = generate_experiment(1, 5000, RngSeed(99)).unwrap();
    for seed in 0..8 {
        let train = generate_experiment(1, 500, RngSeed(seed)).unwrap();
        let prop = fit_propensity(&train, 1e-3, 0.01).unwrap();
        let (model, ridge) = fit_owl_cv(&train, KernelSpec::Linear, &DEFAULT_RIDGE_GRID, 5, &prop, |rows| {
            fit_propensity(rows, 1e-3, 0.01)
        })
        .unwrap();
        let treated = mean(test.rows().iter().map(|r| f64::from(u8::from(model.score(&r.x, r.s).unwrap() > 0.0))));
        assert!((0.1..=0.9).contains(&treated), "seed {seed}: ridge {ridge}, treated share {treated}");
    }
}

#[test]
fn qlearning_recovers_sign_of_linear_effect() {
    let data = synthetic(1000, 2, 4, 1.0, |x, w| (2.0 * w - 1.0) * x[0]);
    let f = fit_qlearning(&data, KernelSpec::Linear, 1e-2).unwrap();
    for i in 0..=40 {
        let x1 = -2.0 + 0.1 * i as f64;
        if x1.abs() > 0.2 {
            for s in 0..2 {
                let v = f.score(&[x1, 0.3], s).unwrap();
                assert_eq!(v > 0.0, x1 > 0.0, "x1={x1} f={v}");
                assert!((v - 2.0 * x1).abs() < 0.3, "x1={x1} f={v}");
            }
        }
    }
}

#[test]
fn qlearning_without_effect_is_small() {
    let n = 1000;
    let data = synthetic(n, 2, 5, 1.0, |x, _| x[1]);
    let f = fit_qlearning(&data, KernelSpec::Linear, 1e-2).unwrap();
    let worst = data.rows().iter().map(|r| f.score(&r.x, r.s).unwrap().abs()).fold(0.0, f64::max);
    assert!(worst <= 3.0 * 4.0 / (n as f64).sqrt(), "sup |f| = {worst}");
}

#[test]
fn qlearning_is_deterministic_and_arm_symmetric() {
    let data = generate_experiment(2, 300, RngSeed(6)).unwrap();
    let f = fit_qlearning(&data, KernelSpec::Linear, 1e-2).unwrap();
    assert_eq!(f, fit_qlearning(&data, KernelSpec::Linear, 1e-2).unwrap());
    let swapped_rows = data.rows().iter().map(|r| LabeledRow { a: r.a.flipped(), ..r.clone() }).collect();
    let swapped = LabeledDataset::new(data.d(), data.groups().to_vec(), swapped_rows).unwrap();
    let g = fit_qlearning(&swapped, KernelSpec::Linear, 1e-2).unwrap();
    for r in data.rows() {
        let (a, b) = (f.score(&r.x, r.s).unwrap(), g.score(&r.x, r.s).unwrap());
        assert!((a + b).abs() <= 1e-9 * (1.0 + a.abs()), "{a} vs {b}");
    }
}

#[test]
fn rlearner_constant_effect() {
    let data = synthetic(2000, 2, 7, 1.0, |x, w| w + x[0]);
    let cate = fit_rlearner(&data, KernelSpec::Linear, 1e-2, 5).unwrap();
    let test = synthetic(1000, 2, 8, 1.0, |_, _| 0.0);
    let m = mean(test.rows().iter().map(|r| cate.effect(&r.x, r.s).unwrap()));
    assert!((0.9..=1.1).contains(&m), "mean effect {m}");
}

#[test]
fn rlearner_null_effect() {
    let data = synthetic(2000, 2, 9, 1.0, |x, _| x[0] - x[1]);
    let cate = fit_rlearner(&data, KernelSpec::Linear, 1e-2, 5).unwrap();
    let test = synthetic(1000, 2, 10, 1.0, |_, _| 0.0);
    let m = mean(test.rows().iter().map(|r| cate.effect(&r.x, r.s).unwrap().abs()));
    assert!(m <= 0.1, "mean |effect| {m}");
}

#[test]
fn rlearner_agrees_with_two_arm_difference() {
    let data = synthetic(2000, 2, 11, 1.0, |x, w| w * (1.0 + x[0]) + x[1]);
    let cate = fit_rlearner(&data, KernelSpec::Linear, 1e-2, 5).unwrap();
    let direct = fit_qlearning(&data, KernelSpec::Linear, 1e-2).unwrap();
    let test = synthetic(1000, 2, 12, 1.0, |_, _| 0.0);
    let rmse = mean(test.rows().iter().map(|r| {
        let e = cate.effect(&r.x, r.s).unwrap() - direct.score(&r.x, r.s).unwrap();
        e * e
    }))
    .sqrt();
    assert!(rmse <= 0.1, "rmse {rmse}");
}

#[test]
fn rlearner_tracks_experiment_one_effect() {
    let fitted = common::fit_experiment_one(500, 13);
    let test = generate_experiment(1, 2000, RngSeed(14)).unwrap();
    let sc = Scenario::Experiment(1);
    let pairs: Vec<(f64, f64)> =
        test.rows().iter().map(|r| (fitted.cate.effect(&r.x, r.s).unwrap(), sc.cate(&r.x, r.s))).collect();
    let (mx, my) = (mean(pairs.iter().map(|p| p.0)), mean(pairs.iter().map(|p| p.1)));
    let cov = mean(pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)));
    let vx = mean(pairs.iter().map(|p| (p.0 - mx).powi(2)));
    let vy = mean(pairs.iter().map(|p| (p.1 - my).powi(2)));
    let corr = cov / (vx * vy).sqrt();
    assert!(corr >= 0.9, "correlation {corr}");
}

#[test]
fn rlearner_rejects_single_arm_fold() {
    let data = synthetic(40, 1, 15, 1.0, |x, _| x[0]);
    let rows = data.rows().iter().map(|r| LabeledRow { a: Treatment::Treated, ..r.clone() }).collect();
    let one_arm = LabeledDataset::new(1, data.groups().to_vec(), rows).unwrap();
    assert!(fit_rlearner(&one_arm, KernelSpec::Linear, 1e-2, 5).is_err());
    assert!(fit_propensity(&one_arm, 1e-3, 0.01).is_err());
}

#[test]
fn value_estimate_matches_straight_loop() {
    let fitted = common::fit_experiment_one(300, 16);
    let rows: Vec<ValueRow> = fitted
        .train
        .rows()
        .iter()
        .map(|r| ValueRow {
            score: fitted.base.score(&r.x, r.s).unwrap(),
            a: r.a,
            r: r.r,
            prob_treated: fitted.prop.prob_treated(&r.x, r.s),
        })
        .collect();
    let mut total = 0.0;
    for row in &rows {
        let policy = if row.score > 0.0 { 1.0 } else { -1.0 };
        let a = row.a.sign();
        if policy == a {
            let pi = if a == 1.0 { row.prob_treated } else { 1.0 - row.prob_treated };
            total += row.r / pi;
        }
    }
    let by_loop = total / rows.len() as f64;
    assert_eq!(estimate_value(&rows).unwrap().to_bits(), by_loop.to_bits());
}
