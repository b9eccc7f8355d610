//! Quadrature rules: double-exponential (tanh-sinh) integration on finite
//! intervals, and composite Newton-Cotes weights for uniform time grids.

use std::f64::consts::FRAC_PI_2;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::error::{input, Result};

const T_MAX: f64 = 6.0;
const MAX_LEVEL: usize = 8;
const MIN_LEVEL: usize = 3;

/// One abscissa on the positive half-line of the tanh-sinh parameter.
/// `left` is the distance of the mirrored (negative-t) node from the left
/// endpoint of the unit-half-length interval, i.e. `1 + u(-t)`.
#[derive(Clone, Copy)]
struct Node {
    left: f64,
    weight: f64,
}

struct TanhSinhTable {
    /// `levels[0]` holds t = j/2 for j = 1..; level k > 0 holds the new odd
    /// multiples of 2^-(k+1).
    levels: Vec<Vec<Node>>,
}

fn node_at(t: f64) -> Node {
    let v = FRAC_PI_2 * t.sinh();
    let e = (2.0 * v).exp();
    let left = 2.0 / (e + 1.0);
    let sech = 2.0 / (v.exp() + (-v).exp());
    Node {
        left,
        weight: FRAC_PI_2 * t.cosh() * sech * sech,
    }
}

static TABLE: LazyLock<TanhSinhTable> = LazyLock::new(|| {
    let mut levels = Vec::with_capacity(MAX_LEVEL + 1);
    let h0 = 0.5;
    levels.push(
        (1..)
            .map(|j| j as f64 * h0)
            .take_while(|&t| t <= T_MAX)
            .map(node_at)
            .collect(),
    );
    for k in 1..=MAX_LEVEL {
        let h = h0 / (1u64 << k) as f64;
        levels.push(
            (0..)
                .map(|j| (2 * j + 1) as f64 * h)
                .take_while(|&t| t <= T_MAX)
                .map(node_at)
                .collect(),
        );
    }
    TanhSinhTable { levels }
});

/// Integrates `f` over `[0, length]` with the tanh-sinh rule.
///
/// `f` receives the offset from the left endpoint, computed without
/// cancellation, so integrands whose behaviour depends on the distance to
/// the left endpoint keep full relative precision there. Endpoint
/// singularities that are integrable are handled. Returns the estimate and
/// the difference between the last two refinement levels.
pub fn tanh_sinh<F: FnMut(f64) -> f64>(mut f: F, length: f64, rel_tol: f64) -> (f64, f64) {
    if length <= 0.0 {
        return (0.0, 0.0);
    }
    let half = 0.5 * length;
    let table = &*TABLE;
    let mut sum = FRAC_PI_2 * f(half);
    let mut add_level = |nodes: &[Node], sum: &mut f64| {
        for n in nodes {
            let l = half * n.left;
            let r = length - l;
            let fl = f(l);
            let fr = f(r);
            let mut s = 0.0;
            if fl.is_finite() {
                s += fl;
            }
            if fr.is_finite() {
                s += fr;
            }
            *sum += n.weight * s;
        }
    };
    add_level(&table.levels[0], &mut sum);
    let mut h = 0.5;
    let mut estimate = h * half * sum;
    let mut diff = f64::INFINITY;
    for k in 1..=MAX_LEVEL {
        add_level(&table.levels[k], &mut sum);
        h *= 0.5;
        let next = h * half * sum;
        diff = (next - estimate).abs();
        estimate = next;
        if k >= MIN_LEVEL && diff <= rel_tol * estimate.abs() {
            break;
        }
    }
    (estimate, diff)
}

/// Composite rule used on a uniform time grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    /// Composite Simpson over an even number of panels.
    Simpson,
    /// Composite Simpson followed by a Simpson-3/8 panel on the last three
    /// intervals (odd interval count).
    SimpsonThreeEighths,
    /// Composite trapezoid.
    Trapezoid,
}

/// Weights for `m` uniformly spaced nodes with spacing `dt`.
///
/// With Simpson requested and an odd interval count, the last three
/// intervals use Simpson-3/8 and the returned rule says so. Two nodes fall
/// back to the trapezoid.
pub fn uniform_weights(m: usize, dt: f64, rule: QuadratureRule) -> Result<(Vec<f64>, QuadratureRule)> {
    if m < 2 {
        return Err(input(format!("quadrature needs at least 2 nodes, got {m}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(input(format!("time step must be positive, got {dt}")));
    }
    let intervals = m - 1;
    let mut w = vec![0.0; m];
    let trapezoid = |w: &mut [f64]| {
        for i in 0..intervals {
            w[i] += 0.5 * dt;
            w[i + 1] += 0.5 * dt;
        }
    };
    let simpson = |w: &mut [f64], panels_end: usize| {
        let mut i = 0;
        while i + 2 <= panels_end {
            w[i] += dt / 3.0;
            w[i + 1] += 4.0 * dt / 3.0;
            w[i + 2] += dt / 3.0;
            i += 2;
        }
    };
    let used = match rule {
        QuadratureRule::Trapezoid => {
            trapezoid(&mut w);
            QuadratureRule::Trapezoid
        }
        _ if intervals == 1 => {
            trapezoid(&mut w);
            QuadratureRule::Trapezoid
        }
        _ if intervals.is_multiple_of(2) => {
            simpson(&mut w, intervals);
            QuadratureRule::Simpson
        }
        _ => {
            let s_end = intervals - 3;
            simpson(&mut w, s_end);
            let c = 3.0 * dt / 8.0;
            w[s_end] += c;
            w[s_end + 1] += 3.0 * c;
            w[s_end + 2] += 3.0 * c;
            w[s_end + 3] += c;
            QuadratureRule::SimpsonThreeEighths
        }
    };
    Ok((w, used))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanh_sinh_polynomial_and_endpoint_singularity() {
        let (v, _) = tanh_sinh(|x| x * x, 3.0, 1e-12);
        assert!((v - 9.0).abs() < 1e-13);
        // ∫_0^1 x^{-1/2} dx = 2
        let (v, _) = tanh_sinh(|x| x.powf(-0.5), 1.0, 1e-12);
        assert!((v - 2.0).abs() < 1e-12, "{v}");
        // ∫_0^1 ln x dx = -1
        let (v, _) = tanh_sinh(|x| x.ln(), 1.0, 1e-12);
        assert!((v + 1.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn weights_integrate_constants_and_cubics() {
        for m in [2usize, 3, 4, 5, 8, 101, 102] {
            let t_final = 1.0;
            let dt = t_final / (m - 1) as f64;
            let (w, rule) = uniform_weights(m, dt, QuadratureRule::Simpson).unwrap();
            let total: f64 = w.iter().sum();
            assert!((total - t_final).abs() < 1e-12, "m={m}");
            if m >= 3 {
                assert_ne!(rule, QuadratureRule::Trapezoid);
                let cubic: f64 = w.iter().enumerate().map(|(i, wi)| wi * (i as f64 * dt).powi(3)).sum();
                assert!((cubic - 0.25).abs() < 1e-12, "m={m} cubic={cubic}");
            }
        }
        let (_, rule) = uniform_weights(102, 0.01, QuadratureRule::Simpson).unwrap();
        assert_eq!(rule, QuadratureRule::SimpsonThreeEighths);
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(uniform_weights(1, 0.1, QuadratureRule::Simpson).is_err());
        assert!(uniform_weights(5, 0.0, QuadratureRule::Simpson).is_err());
    }
}
