use fracdiff::mittag_leffler::{mlf, mlf_decay_bound_holds, rgamma, MlfEvaluator};
use proptest::prelude::*;

/// Series summed in long double style with compensated (Kahan) summation,
/// usable for moderate negative arguments where cancellation stays mild.
fn kahan_series(z: f64, beta: f64, b: f64) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    let mut zk = 1.0f64;
    for k in 0..400 {
        let term = zk * rgamma(beta * k as f64 + b);
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        if k > 5 && term.abs() < 1e-18 {
            break;
        }
        zk *= z;
    }
    sum
}

#[test]
fn classical_and_half_order_identities() {
    assert!((mlf(-1.0, 1.0, 1.0).unwrap() - 0.367_879_441_171_442_3).abs() < 1e-15);
    let e_half = std::f64::consts::E * libm::erfc(1.0);
    assert!((mlf(-1.0, 0.5, 1.0).unwrap() - e_half).abs() < 1e-14);
    assert!((e_half - 0.427_583_576_2).abs() < 1e-10);
}

#[test]
fn agrees_with_compensated_series_on_moderate_arguments() {
    for &beta in &[0.5, 0.7, 0.9] {
        for &b in &[0.8, 1.0, 1.2] {
            for &z in &[-0.3, -0.9, -1.5, -2.5] {
                let reference = kahan_series(z, beta, b);
                let v = mlf(z, beta, b).unwrap();
                assert!(
                    (v - reference).abs() < 1e-12,
                    "beta={beta} b={b} z={z}: {v} vs {reference}"
                );
            }
        }
    }
}

#[test]
fn first_asymptotic_term_at_minus_hundred() {
    let v = mlf(-100.0, 0.7, 1.0).unwrap();
    let first = rgamma(0.3) / 100.0;
    assert!(((v - first) / first).abs() <= 1e-2);
}

#[test]
fn asymptotic_ratio_at_one_million() {
    for &beta in &[0.3, 0.5, 0.7, 0.9] {
        let z: f64 = 1e6;
        let ratio = z * mlf(-z, beta, 1.0).unwrap() / rgamma(1.0 - beta);
        assert!((ratio - 1.0).abs() <= 1e-4, "beta={beta} ratio={ratio}");
    }
}

#[test]
fn decay_bound_examples() {
    assert!(mlf_decay_bound_holds(0.0, 0.7, 1.0).unwrap());
    assert!(mlf_decay_bound_holds(-1e3, 0.7, 2.0).unwrap());
    assert!(!mlf_decay_bound_holds(-1.0, 0.99, 1e-3).unwrap());
}

#[test]
fn a_finite_decay_constant_exists_on_a_sampled_grid() {
    for &beta in &[0.2, 0.5, 0.7, 0.95, 1.0] {
        let c0 = (0..=400)
            .map(|k| {
                let x = 10f64.powf(-3.0 + 9.0 * k as f64 / 400.0);
                mlf(-x, beta, 1.0).unwrap() * (1.0 + x)
            })
            .fold(0.0, f64::max);
        assert!(c0.is_finite() && c0 < 10.0, "beta={beta} c0={c0}");
        assert!(mlf_decay_bound_holds(-3.7, beta, c0 * 1.0001).unwrap());
    }
}

#[test]
fn invalid_arguments_are_domain_errors() {
    assert!(mlf(f64::NAN, 0.5, 1.0).is_err());
    assert!(mlf(-1.0, 0.0, 1.0).is_err());
    assert!(mlf(-1.0, 1.1, 1.0).is_err());
    assert!(mlf(-1.0, 0.5, 0.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn decreasing_and_positive_on_the_negative_axis(beta in 0.05f64..=1.0, a in 0.0f64..1e4, gap in 1e-3f64..1e3) {
        let hi = mlf(-a, beta, 1.0).unwrap();
        let lo = mlf(-(a + gap), beta, 1.0).unwrap();
        prop_assert!(lo > 0.0);
        prop_assert!(lo < hi, "E({}) = {} !< E({}) = {}", -(a + gap), lo, -a, hi);
        prop_assert!(hi <= 1.0);
    }

    #[test]
    fn table_evaluator_matches_direct_evaluation(beta in 0.1f64..1.0, lx in -8.0f64..14.0) {
        let x = lx.exp();
        let ev = MlfEvaluator::new(beta).unwrap();
        let direct = mlf(-x, beta, 1.0).unwrap();
        prop_assert!((ev.eval_neg(x) - direct).abs() <= 1e-12);
    }
}
