use std::f64::consts::PI;

use fracdiff::spectral::{build_operator_matrix, build_single_alpha_matrix, eigendecompose, eigenvalues, Grid1D};
use proptest::prelude::*;

#[test]
fn near_two_approaches_the_dirichlet_laplacian() {
    let grid = Grid1D::new(999).unwrap();
    let a = build_single_alpha_matrix(&grid, 1.999).unwrap();
    let mu = nalgebra::SymmetricEigen::new(a).eigenvalues;
    let mut mu: Vec<f64> = mu.iter().copied().collect();
    mu.sort_by(f64::total_cmp);
    for k in 1..=3 {
        let exact = (k as f64 * PI / 2.0).powi(2);
        assert!(
            ((mu[k - 1] - exact) / exact).abs() <= 0.02,
            "k={k}: {} vs {exact}",
            mu[k - 1]
        );
    }
}

#[test]
fn unit_order_ground_state() {
    // Known ground-state eigenvalue of (-Δ)^{1/2} on (-1, 1).
    let grid = Grid1D::new(1999).unwrap();
    let mu = eigenvalues(&build_operator_matrix(&grid, 1.0, 1.0).unwrap());
    assert!(
        (mu[0] / 2.0 / 1.157_773_883_697_7 - 1.0).abs() <= 0.01,
        "{}",
        mu[0] / 2.0
    );
}

#[test]
fn eigenvalue_band_against_the_two_term_growth_law() {
    let grid = Grid1D::new(199).unwrap();
    let mu = eigenvalues(&build_operator_matrix(&grid, 0.5, 1.5).unwrap());
    let ratios: Vec<f64> = (1..=50)
        .map(|k| mu[k - 1] / ((k as f64).powf(0.5) + (k as f64).powf(1.5)))
        .collect();
    let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(lo > 0.0 && hi / lo <= 10.0, "band {lo}..{hi}");
}

#[test]
fn log_slope_tends_to_the_larger_order() {
    let n = 499;
    let grid = Grid1D::new(n).unwrap();
    let mu = eigenvalues(&build_operator_matrix(&grid, 0.5, 1.5).unwrap());
    let (k0, k1) = (n / 4, n / 2);
    let slope = (mu[k1 - 1].ln() - mu[k0 - 1].ln()) / ((k1 as f64).ln() - (k0 as f64).ln());
    assert!((slope - 1.5).abs() <= 0.15, "slope {slope}");
}

#[test]
fn reconstruction_reproduces_the_matrix() {
    let grid = Grid1D::new(101).unwrap();
    let m = build_operator_matrix(&grid, 0.5, 1.5).unwrap();
    let d = eigendecompose(&m).unwrap();
    let h = grid.h();
    let diag = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d.mu.clone()));
    let rebuilt = (&d.phi * diag * d.phi.transpose()) * h;
    let dev = (&rebuilt - &m.entries).norm() / m.entries.norm();
    assert!(dev <= 1e-8, "relative deviation {dev}");
}

#[test]
fn positive_ground_state_on_an_order_grid() {
    let grid = Grid1D::new(41).unwrap();
    let orders = [0.1, 0.5, 1.0, 1.5, 1.9];
    for &a1 in &orders {
        for &a2 in &orders {
            let mu = eigenvalues(&build_operator_matrix(&grid, a1, a2).unwrap());
            assert!(mu[0] > 0.0, "({a1}, {a2}) mu1 = {}", mu[0]);
        }
    }
}

#[test]
fn eigenvectors_obey_a_power_bound() {
    let grid = Grid1D::new(199).unwrap();
    let d = eigendecompose(&build_operator_matrix(&grid, 0.5, 1.5).unwrap()).unwrap();
    let c3: Vec<f64> = (0..d.n() / 2)
        .map(|n| {
            let sup = d.phi.column(n).amax();
            sup / d.mu[n].powf(1.0 / 3.0)
        })
        .collect();
    let worst = c3.iter().cloned().fold(0.0, f64::max);
    // Normalized sines have sup 1 on (-1, 1), and mu_n >= mu_1 > 1.
    assert!(worst.is_finite() && worst < 2.0, "c3 = {worst}");
}

#[test]
fn order_swap_gives_identical_decompositions() {
    let grid = Grid1D::new(51).unwrap();
    let a = eigendecompose(&build_operator_matrix(&grid, 0.5, 1.5).unwrap()).unwrap();
    let b = eigendecompose(&build_operator_matrix(&grid, 1.5, 0.5).unwrap()).unwrap();
    assert_eq!(a.mu, b.mu);
    assert_eq!(a.phi, b.phi);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn decomposition_invariants(a1 in 0.05f64..1.95, a2 in 0.05f64..1.95, half in 5usize..30) {
        let grid = Grid1D::new(2 * half + 1).unwrap();
        let m = build_operator_matrix(&grid, a1, a2).unwrap();
        prop_assert_eq!(&m.entries, &m.entries.transpose());
        let d = eigendecompose(&m).unwrap();
        let h = grid.h();
        for n in 0..d.n() {
            prop_assert!(d.mu[n] > 0.0);
            if n > 0 {
                prop_assert!(d.mu[n] >= d.mu[n - 1]);
            }
            let v = d.phi.column(n);
            let resid = (&m.entries * v - v * d.mu[n]).amax();
            prop_assert!(resid <= 1e-9 * d.mu[n]);
            let top = v.amax();
            let first = v.iter().position(|x| x.abs() >= top * (1.0 - 1e-9)).unwrap();
            prop_assert!(v[first] > 0.0);
        }
        let gram = d.phi.transpose() * &d.phi * h;
        let eye = nalgebra::DMatrix::<f64>::identity(d.n(), d.n());
        prop_assert!((gram - eye).amax() <= 1e-9);
    }
}
