use fracdiff::forward::uniform_times;
use fracdiff::inversion::*;
use fracdiff::quadrature::QuadratureRule;
use fracdiff::{ParameterVector, SolverContext, Trajectory};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn exact_setup(n: usize, nt: usize) -> (SolverContext, CostConfig) {
    let ctx = SolverContext::with_default_bump(n).unwrap();
    let g = ctx
        .trajectory(&ParameterVector::REFERENCE, &uniform_times(1.0, nt).unwrap())
        .unwrap();
    let cfg = CostConfig::new(g, 0.0, QuadratureRule::Simpson).unwrap();
    (ctx, cfg)
}

/// Box-Muller from two uniform streams; independent of the library's samplers.
fn noisy(g: &Trajectory, sd: f64, seed: u64) -> Trajectory {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = g
        .values
        .iter()
        .map(|v| {
            let u1: f64 = 1.0 - rng.random::<f64>();
            let u2: f64 = rng.random();
            v + sd * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        })
        .collect();
    Trajectory::new(g.times.clone(), values).unwrap()
}

#[test]
fn weights_integrate_one() {
    let (_, cfg) = exact_setup(31, 100);
    assert!((cfg.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    assert_eq!(cfg.rule, QuadratureRule::Simpson);
}

#[test]
fn strip_point_has_small_cost() {
    let (ctx, cfg) = exact_setup(199, 100);
    let j = cost(&ParameterVector::new(0.5, 1.45, 0.7), &cfg, &ctx).unwrap();
    assert!(j > 0.0 && j < 1e-3, "J = {j}");
}

#[test]
fn gradient_matches_a_direct_difference_of_the_cost() {
    let (ctx, cfg) = exact_setup(199, 100);
    let theta = ParameterVector::new(0.6, 1.4, 0.65);
    let bounds = BoxBounds::default();
    let jac = jacobian_fd(&theta, &cfg, &ctx, 1e-6, &bounds).unwrap();
    let r = residuals(&theta, &cfg, &ctx).unwrap();
    let g = gradient(&jac, &r, &theta, cfg.lambda);
    let base = theta.to_array();
    for j in 0..3 {
        let h = 1e-5 * base[j];
        let (mut p, mut m) = (base, base);
        p[j] += h;
        m[j] -= h;
        let direct = (cost(&ParameterVector::from_array(p), &cfg, &ctx).unwrap()
            - cost(&ParameterVector::from_array(m), &cfg, &ctx).unwrap())
            / (2.0 * h);
        assert!(
            ((g[j] - direct) / direct).abs() <= 1e-5,
            "component {j}: {} vs {direct}",
            g[j]
        );
    }
}

#[test]
fn truth_is_stationary_and_beta_dominates_alpha1() {
    let (ctx, cfg) = exact_setup(199, 100);
    let theta = ParameterVector::REFERENCE;
    let jac = jacobian_fd(&theta, &cfg, &ctx, 1e-6, &BoxBounds::default()).unwrap();
    let r = residuals(&theta, &cfg, &ctx).unwrap();
    let g = gradient(&jac, &r, &theta, 0.0);
    assert!(g.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-8);
    let (c_a1, c_beta) = (jac.column(0).norm(), jac.column(2).norm());
    assert!(c_beta > 10.0 * c_a1, "beta column {c_beta}, alpha1 column {c_a1}");
}

#[test]
fn fit_from_truth_terminates_immediately() {
    let (ctx, cfg) = exact_setup(199, 100);
    assert!(cost(&ParameterVector::REFERENCE, &cfg, &ctx).unwrap() < 1e-20);
    let rep = fit(&cfg, &OptimizerConfig::new(ParameterVector::REFERENCE), &ctx).unwrap();
    assert!(rep.iterations <= 1);
    assert_eq!(rep.theta_hat, ParameterVector::REFERENCE);
}

#[test]
fn accepted_costs_never_increase_and_stay_below_the_start() {
    let (ctx, cfg) = exact_setup(99, 50);
    let rep = fit(&cfg, &OptimizerConfig::new(ParameterVector::new(0.8, 1.2, 0.5)), &ctx).unwrap();
    assert!(rep.trace.windows(2).all(|w| w[1].cost <= w[0].cost));
    assert!(rep.cost_final <= rep.cost_initial);
    assert_eq!(rep.trace.first().unwrap().cost, rep.cost_initial);
    assert_eq!(rep.trace.last().unwrap().cost, rep.cost_final);
}

#[test]
fn swapped_starts_give_swapped_estimates() {
    let (ctx, cfg) = exact_setup(99, 50);
    let a = fit(&cfg, &OptimizerConfig::new(ParameterVector::new(0.6, 1.3, 0.6)), &ctx).unwrap();
    let b = fit(&cfg, &OptimizerConfig::new(ParameterVector::new(1.3, 0.6, 0.6)), &ctx).unwrap();
    assert!((a.cost_final - b.cost_final).abs() <= 1e-10);
    assert!((a.theta_hat.alpha1 - b.theta_hat.alpha2).abs() <= 1e-10);
    assert!((a.theta_hat.alpha2 - b.theta_hat.alpha1).abs() <= 1e-10);
    assert!((a.theta_hat.beta - b.theta_hat.beta).abs() <= 1e-10);
}

#[test]
fn tikhonov_weight_shrinks_the_estimate() {
    let ctx = SolverContext::with_default_bump(99).unwrap();
    let g = ctx
        .trajectory(&ParameterVector::REFERENCE, &uniform_times(1.0, 100).unwrap())
        .unwrap();
    let g = noisy(&g, 1e-3, 5);
    let start = OptimizerConfig::new(ParameterVector::new(0.6, 1.4, 0.65));
    let plain = fit(
        &CostConfig::new(g.clone(), 0.0, QuadratureRule::Simpson).unwrap(),
        &start,
        &ctx,
    )
    .unwrap();
    let reg = fit(
        &CostConfig::new(g, 1e-2, QuadratureRule::Simpson).unwrap(),
        &start,
        &ctx,
    )
    .unwrap();
    assert!(
        reg.theta_hat.norm() < plain.theta_hat.norm(),
        "{} vs {}",
        reg.theta_hat,
        plain.theta_hat
    );
}

#[test]
fn noise_floor_of_the_cost() {
    let ctx = SolverContext::with_default_bump(99).unwrap();
    let g = ctx
        .trajectory(&ParameterVector::REFERENCE, &uniform_times(1.0, 100).unwrap())
        .unwrap();
    let sd = 1e-3;
    let cfg = CostConfig::new(noisy(&g, sd, 6), 0.0, QuadratureRule::Simpson).unwrap();
    let j = cost(&ParameterVector::REFERENCE, &cfg, &ctx).unwrap();
    let expect = 0.5 * sd * sd;
    assert!(j > expect / 2.0 && j < expect * 2.0, "J = {j}, expected about {expect}");
}

#[test]
fn trapezoid_and_simpson_differ_at_second_order() {
    let ctx = SolverContext::with_default_bump(99).unwrap();
    let theta = ParameterVector::new(0.6, 1.4, 0.65);
    let gap = |nt: usize| {
        let g = ctx
            .trajectory(&ParameterVector::REFERENCE, &uniform_times(1.0, nt).unwrap())
            .unwrap();
        let s = cost(
            &theta,
            &CostConfig::new(g.clone(), 0.0, QuadratureRule::Simpson).unwrap(),
            &ctx,
        )
        .unwrap();
        let t = cost(
            &theta,
            &CostConfig::new(g, 0.0, QuadratureRule::Trapezoid).unwrap(),
            &ctx,
        )
        .unwrap();
        (s - t).abs()
    };
    // Δt = 10⁻² against Δt/2.
    let ratio = gap(100) / gap(200);
    assert!((2.5..=6.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn start_outside_the_box_is_rejected() {
    let (ctx, cfg) = exact_setup(31, 10);
    let opt = OptimizerConfig::new(ParameterVector::new(1.0, 1.9995, 0.5));
    assert!(matches!(fit(&cfg, &opt, &ctx), Err(fracdiff::Error::Domain(_))));
}

#[test]
fn report_json_contains_the_trace() {
    let (ctx, cfg) = exact_setup(31, 10);
    let rep = fit(&cfg, &OptimizerConfig::new(ParameterVector::new(0.8, 1.2, 0.6)), &ctx).unwrap();
    let v: serde_json::Value = serde_json::from_str(&rep.to_json().unwrap()).unwrap();
    assert_eq!(v["trace"].as_array().unwrap().len(), rep.trace.len());
    assert!(v["termination"].is_string());
}
