//! Mittag-Leffler functions on the real axis.
//!
//! `E_{β,b}(z) = Σ_k z^k / Γ(βk + b)` is evaluated with three regimes:
//!
//! * `|z| ≤ 1`: the power series, summed until the terms drop below
//!   `1e-16` of the partial sum;
//! * `1 < |z| < 1e5` (negative `z`): an integral representation along the
//!   real half-line, mapped onto a finite angle and integrated with
//!   tanh-sinh quadrature;
//! * `|z| ≥ 1e5`: the two-term asymptotic expansion
//!   `-Σ_{k=1,2} z^{-k} / Γ(b - βk)`.
//!
//! For the relaxation function (`b = 1`) the integral reduces to
//!
//! ```text
//! E_β(-x) = 1/(βπ) ∫_0^{βπ} exp(-(x sin δ / sin(βπ - δ))^{1/β}) dδ,
//! ```
//!
//! a bounded, positive integrand, which is what makes the middle regime
//! accurate to a few ulps.
//!
//! [`MlfEvaluator`] tabulates `x ↦ E_β(-x)` for one order `β` with
//! piecewise Chebyshev interpolation in `ln x`; the forward solver uses it
//! because each cost evaluation needs tens of thousands of values.

use std::f64::consts::PI;

use crate::error::{domain, Error, Result};
use crate::quadrature::tanh_sinh;

const SERIES_RADIUS: f64 = 1.0;
const ASYMPTOTIC_RADIUS: f64 = 1e5;
/// Exponent at which `exp(-χ^{1/β})` is treated as zero in the integral.
const TAIL_EXPONENT: f64 = 50.0;
const QUAD_TOL: f64 = 1e-11;

/// Reciprocal gamma function, zero at the poles of Γ.
pub fn rgamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        return 0.0;
    }
    if x > 171.7 {
        return 0.0;
    }
    1.0 / libm::tgamma(x)
}

/// Argument triple of a Mittag-Leffler evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlfArgument {
    pub z: f64,
    pub beta: f64,
    pub alpha2nd: f64,
}

impl MlfArgument {
    pub fn new(z: f64, beta: f64, alpha2nd: f64) -> Result<Self> {
        check_args(z, beta, alpha2nd)?;
        Ok(Self { z, beta, alpha2nd })
    }

    /// One-parameter function `E_β(z)`.
    pub fn one_parameter(z: f64, beta: f64) -> Result<Self> {
        Self::new(z, beta, 1.0)
    }

    pub fn eval(&self) -> Result<f64> {
        mlf(self.z, self.beta, self.alpha2nd)
    }
}

fn check_args(z: f64, beta: f64, alpha2nd: f64) -> Result<()> {
    if !z.is_finite() {
        return Err(domain(format!("Mittag-Leffler argument must be finite, got {z}")));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(domain(format!("Mittag-Leffler order must lie in (0, 1], got {beta}")));
    }
    if !(alpha2nd > 0.0 && alpha2nd.is_finite()) {
        return Err(domain(format!(
            "Mittag-Leffler second parameter must be positive, got {alpha2nd}"
        )));
    }
    Ok(())
}

/// Two-parameter Mittag-Leffler function `E_{β,b}(z)` for real `z`.
pub fn mlf(z: f64, beta: f64, alpha2nd: f64) -> Result<f64> {
    check_args(z, beta, alpha2nd)?;
    if beta == 1.0 && alpha2nd == 1.0 {
        return Ok(z.exp());
    }
    if z == 0.0 {
        return Ok(rgamma(alpha2nd));
    }
    if z > 0.0 || -z <= SERIES_RADIUS {
        return series(z, beta, alpha2nd);
    }
    let x = -z;
    if x >= ASYMPTOTIC_RADIUS {
        return Ok(asymptotic(x, beta, alpha2nd));
    }
    Ok(integral(x, beta, alpha2nd))
}

/// Whether `|E_β(z)| ≤ c0 / (1 + |z|)` holds at the given point.
pub fn mlf_decay_bound_holds(z: f64, beta: f64, c0: f64) -> Result<bool> {
    if z > 0.0 {
        return Err(domain(format!("decay bound is stated for z <= 0, got {z}")));
    }
    if !(c0 > 0.0) {
        return Err(domain(format!("bound constant must be positive, got {c0}")));
    }
    let e = mlf(z, beta, 1.0)?;
    Ok(e.abs() <= c0 / (1.0 + z.abs()))
}

fn series(z: f64, beta: f64, b: f64) -> Result<f64> {
    let mut sum = 0.0;
    let mut power = 1.0;
    for k in 0..20_000usize {
        let arg = beta * k as f64 + b;
        let term = power * rgamma(arg);
        if !term.is_finite() || !power.is_finite() {
            return Err(Error::Numeric(format!("Mittag-Leffler series overflow at z = {z}")));
        }
        sum += term;
        // 1/Γ is decreasing past its maximum near 1.46.
        if arg >= 2.0 && (term.abs() <= 1e-16 * sum.abs() || power == 0.0) {
            return Ok(sum);
        }
        power *= z;
    }
    Err(Error::Numeric(format!(
        "Mittag-Leffler series did not converge at z = {z}"
    )))
}

fn asymptotic(x: f64, beta: f64, b: f64) -> f64 {
    // -Σ z^{-k}/Γ(b-βk) with z = -x
    rgamma(b - beta) / x - rgamma(b - 2.0 * beta) / (x * x)
}

/// Integral representation of `E_{β,b}(-x)`, `x > 0`.
fn integral(x: f64, beta: f64, b: f64) -> f64 {
    if beta == 1.0 {
        return integral_unit_order(x, b);
    }
    if b >= 1.0 + beta {
        // E_{β,b}(z) = (E_{β,b-β}(z) - 1/Γ(b-β)) / z
        let lower = integral(x, beta, b - beta);
        return (lower - rgamma(b - beta)) / (-x);
    }
    let pb = PI * beta;
    let chi_max = TAIL_EXPONENT.powf(beta);
    let q = chi_max / x;
    let upper = (q * pb.sin()).atan2(1.0 + q * pb.cos());
    let inv_beta = 1.0 / beta;
    let chi = |d: f64| x * d.sin() / (pb - d).sin();
    let value = if b == 1.0 {
        let (v, _) = tanh_sinh(|d| (-chi(d).powf(inv_beta)).exp(), upper, QUAD_TOL);
        v
    } else {
        let s1 = (PI * (1.0 - b)).sin();
        let s2 = (PI * (1.0 - b + beta)).sin();
        let p = (1.0 - b) / beta;
        let scale = 1.0 / (x * pb.sin());
        let (v, _) = tanh_sinh(
            |d| {
                let c = chi(d);
                c.powf(p) * (-c.powf(inv_beta)).exp() * (c * s1 + x * s2) * scale
            },
            upper,
            QUAD_TOL,
        );
        v
    };
    value / pb
}

/// `E_{1,b}(-x)` for `b ≠ 1`.
fn integral_unit_order(x: f64, b: f64) -> f64 {
    if b < 1.0 {
        // E_{1,b}(z) = 1/Γ(b) + z E_{1,b+1}(z)
        return rgamma(b) - x * integral_unit_order(x, b + 1.0);
    }
    // E_{1,b}(z) = 1/Γ(b-1) ∫_0^1 e^{z(1-s)} s^{b-2} ds for b > 1
    let (v, _) = tanh_sinh(|s| (-x * (1.0 - s)).exp() * s.powf(b - 2.0), 1.0, QUAD_TOL);
    v * rgamma(b - 1.0)
}

const PANELS: usize = 40;
const CHEB_NODES: usize = 16;

/// Tabulated relaxation function `x ↦ E_β(-x)` for a fixed order.
///
/// Agrees with [`mlf`] to about `1e-14` absolute on `[0, ∞)`.
#[derive(Debug, Clone)]
pub struct MlfEvaluator {
    beta: f64,
    series: Vec<f64>,
    /// Chebyshev coefficients per panel in `s = ln x`, panel `p` covering
    /// `[p·width, (p+1)·width]`.
    panels: Vec<[f64; CHEB_NODES]>,
    width: f64,
    asym1: f64,
    asym2: f64,
}

impl MlfEvaluator {
    pub fn new(beta: f64) -> Result<Self> {
        check_args(-1.0, beta, 1.0)?;
        let mut series = Vec::new();
        if beta < 1.0 {
            for k in 0.. {
                let arg = beta * k as f64 + 1.0;
                let c = rgamma(arg);
                series.push(c);
                if arg >= 2.0 && c < 1e-18 {
                    break;
                }
            }
        }
        let width = ASYMPTOTIC_RADIUS.ln() / PANELS as f64;
        let mut panels = Vec::new();
        if beta < 1.0 {
            panels.reserve(PANELS);
            for p in 0..PANELS {
                let lo = p as f64 * width;
                let mut values = [0.0; CHEB_NODES];
                for (j, v) in values.iter_mut().enumerate() {
                    let y = (PI * (j as f64 + 0.5) / CHEB_NODES as f64).cos();
                    let s = lo + 0.5 * width * (y + 1.0);
                    *v = mlf(-s.exp(), beta, 1.0)?;
                }
                let mut coef = [0.0; CHEB_NODES];
                for (k, c) in coef.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (j, v) in values.iter().enumerate() {
                        acc += v * (PI * k as f64 * (j as f64 + 0.5) / CHEB_NODES as f64).cos();
                    }
                    *c = 2.0 * acc / CHEB_NODES as f64;
                }
                panels.push(coef);
            }
        }
        Ok(Self {
            beta,
            series,
            panels,
            width,
            asym1: rgamma(1.0 - beta),
            asym2: rgamma(1.0 - 2.0 * beta),
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `E_β(-x)` for `x ≥ 0`.
    pub fn eval_neg(&self, x: f64) -> f64 {
        if self.beta == 1.0 {
            return (-x).exp();
        }
        if x <= SERIES_RADIUS {
            let z = -x;
            return self.series.iter().rev().fold(0.0, |acc, c| acc * z + c);
        }
        if x >= ASYMPTOTIC_RADIUS {
            return self.asym1 / x - self.asym2 / (x * x);
        }
        let s = x.ln();
        let p = ((s / self.width) as usize).min(PANELS - 1);
        let y = 2.0 * (s - p as f64 * self.width) / self.width - 1.0;
        let coef = &self.panels[p];
        let (mut b1, mut b2) = (0.0, 0.0);
        for c in coef[1..].iter().rev() {
            let b0 = 2.0 * y * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        y * b1 - b2 + 0.5 * coef[0]
    }
}
