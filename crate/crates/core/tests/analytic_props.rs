use proptest::prelude::*;

use actuator::analytic::{
    fixed_points, large_n_var_expansion, step_moments, trajectory_moments, RecurrenceKind, TeacherCount,
};
use actuator::{LearningConfig, MomentState, PhoneticModel, PriorSpec};

fn model(sigma: f64, omega: f64, lambda: f64) -> PhoneticModel {
    PhoneticModel {
        sigma_a: sigma,
        omega,
        lambda,
        ..PhoneticModel::reference()
    }
}

fn learn(n: usize, prior: PriorSpec) -> LearningConfig {
    LearningConfig { n, prior }
}

fn kinds() -> impl Strategy<Value = RecurrenceKind> {
    prop_oneof![
        Just(RecurrenceKind::SimpleSingle),
        (2u64..50).prop_map(|m| RecurrenceKind::SimpleMulti(TeacherCount::Finite(m))),
        Just(RecurrenceKind::SimpleMulti(TeacherCount::Infinite)),
        (2u64..50).prop_map(|m| RecurrenceKind::NaiveMulti(TeacherCount::Finite(m))),
        Just(RecurrenceKind::NaiveMulti(TeacherCount::Infinite)),
    ]
}

fn prior_for(kind: RecurrenceKind, tau: f64) -> PriorSpec {
    match kind {
        RecurrenceKind::SimpleSingle | RecurrenceKind::SimpleMulti(_) => PriorSpec::SimpleGaussian { tau },
        _ => PriorSpec::Naive,
    }
}

proptest! {
    #[test]
    fn distance_to_fixed_point_shrinks_by_rate(
        kind in kinds(),
        sigma in 5.0f64..80.0,
        omega in 0.0f64..30.0,
        lambda in -2.0f64..2.0,
        n in 2usize..300,
        tau in 1.0f64..200.0,
        var0 in 0.0f64..5000.0,
    ) {
        let m = model(sigma, omega, lambda);
        let l = learn(n, prior_for(kind, tau));
        let fp = fixed_points(kind, &m, &l).unwrap();
        let (var_fp, rate) = (fp.var_fp.unwrap(), fp.geometric_rate.unwrap());
        prop_assert!(rate > 0.0 && rate < 1.0);
        let next = step_moments(kind, MomentState { mean: 700.0, var: var0 }, &m, &l).unwrap();
        let expected = (var0 - var_fp) * rate;
        prop_assert!((next.var - var_fp - expected).abs() <= 1e-9 * (1.0 + var0.abs() + var_fp));
    }

    #[test]
    fn fixed_point_is_stationary(
        kind in kinds(),
        sigma in 5.0f64..80.0,
        omega in 0.0f64..30.0,
        lambda in -2.0f64..2.0,
        n in 2usize..300,
        tau in 1.0f64..200.0,
    ) {
        let m = model(sigma, omega, lambda);
        let l = learn(n, prior_for(kind, tau));
        let fp = fixed_points(kind, &m, &l).unwrap();
        let var_fp = fp.var_fp.unwrap();
        let mean = fp.mean_fp().unwrap_or(700.0);
        let next = step_moments(kind, MomentState { mean, var: var_fp }, &m, &l).unwrap();
        prop_assert!((next.var - var_fp).abs() <= 1e-9 * var_fp);
        if let Some(mean_fp) = fp.mean_fp() {
            prop_assert!((next.mean - mean_fp).abs() <= 1e-9 * mean_fp.abs());
        }
    }

    #[test]
    fn stable_variance_decreases_in_teachers_and_examples(
        sigma in 5.0f64..80.0,
        omega in 0.0f64..30.0,
        n in 2usize..300,
        m_teachers in 2u64..100,
        tau in 1.0f64..200.0,
        gaussian in any::<bool>(),
    ) {
        let md = model(sigma, omega, 0.0);
        let prior = if gaussian { PriorSpec::SimpleGaussian { tau } } else { PriorSpec::Naive };
        let make = |m: TeacherCount| if gaussian { RecurrenceKind::SimpleMulti(m) } else { RecurrenceKind::NaiveMulti(m) };
        let var = |m: TeacherCount, n: usize| fixed_points(make(m), &md, &learn(n, prior)).unwrap().var_fp.unwrap();
        let base = var(TeacherCount::Finite(m_teachers), n);
        prop_assert!(var(TeacherCount::Finite(m_teachers + 1), n) < base);
        prop_assert!(var(TeacherCount::Infinite, n) < base);
        // More examples mean less shrinkage too, so for a narrow Gaussian prior
        // the variance can rise with n; it falls once the pooling term dominates.
        let pooled = (m_teachers as f64 - 1.0) / m_teachers as f64 * tau * tau / (sigma * sigma);
        let shrink = sigma * sigma / (n as f64 * (n as f64 + 1.0) * tau * tau);
        if !gaussian || pooled > shrink {
            prop_assert!(var(TeacherCount::Finite(m_teachers), n + 1) < base);
        }
    }

    #[test]
    fn very_weak_prior_matches_naive(
        sigma in 5.0f64..80.0,
        omega in 0.0f64..30.0,
        lambda in -2.0f64..2.0,
        n in 2usize..300,
        m_teachers in 2u64..20,
        var0 in 1.0f64..1000.0,
    ) {
        let md = model(sigma, omega, lambda);
        let start = MomentState { mean: 700.0, var: var0 };
        let t = TeacherCount::Finite(m_teachers);
        let weak = trajectory_moments(RecurrenceKind::SimpleMulti(t), start, &md,
            &learn(n, PriorSpec::SimpleGaussian { tau: 1e8 }), 20).unwrap();
        let naive = trajectory_moments(RecurrenceKind::NaiveMulti(t), start, &md,
            &learn(n, PriorSpec::Naive), 20).unwrap();
        for (a, b) in weak.iter().zip(&naive) {
            prop_assert!((a.var - b.var).abs() <= 1e-6 * b.var);
            prop_assert!((a.mean - b.mean).abs() <= 1e-6);
        }
    }

    #[test]
    fn multi_teacher_expansion_ignores_prior_width(
        sigma in 5.0f64..80.0,
        omega in 0.0f64..30.0,
        n in 2usize..300,
        m_teachers in 2u64..20,
        tau1 in 1.0f64..200.0,
        tau2 in 1.0f64..200.0,
    ) {
        let md = model(sigma, omega, 0.0);
        let kind = RecurrenceKind::SimpleMulti(TeacherCount::Finite(m_teachers));
        let a = large_n_var_expansion(kind, &md, &learn(n, PriorSpec::SimpleGaussian { tau: tau1 })).unwrap();
        let b = large_n_var_expansion(kind, &md, &learn(n, PriorSpec::SimpleGaussian { tau: tau2 })).unwrap();
        prop_assert_eq!(a, b);
    }
}

/// The gap between the exact stable variance and its expansion shrinks like
/// 1/n²: quadrupling n cuts it by about 16.
#[test]
fn expansion_error_is_second_order() {
    let md = model(50.0, 10.0, 0.0);
    for kind in [
        RecurrenceKind::SimpleSingle,
        RecurrenceKind::SimpleMulti(TeacherCount::Finite(2)),
        RecurrenceKind::SimpleMulti(TeacherCount::Infinite),
    ] {
        let gap = |n: usize| {
            let l = learn(n, PriorSpec::SimpleGaussian { tau: 40.0 });
            let exact = fixed_points(kind, &md, &l).unwrap().var_fp.unwrap();
            let approx = large_n_var_expansion(kind, &md, &l).unwrap();
            (exact - approx).abs()
        };
        let (g1, g2) = (gap(1000), gap(4000));
        assert!(g2 < g1 / 12.0, "{kind:?}: {g1:e} -> {g2:e}");
    }
}
