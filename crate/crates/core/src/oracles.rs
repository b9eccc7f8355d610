//! Independent checks of the spectral solver: Monte Carlo simulation of the
//! killed, time-changed process `Z = X + Y` and the L1 scheme for the
//! Caputo derivative.

use std::f64::consts::PI;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, input, Result};
use crate::forward::{InitialCondition, ParameterVector};
use crate::mittag_leffler::rgamma;

/// Name of the generator recorded in reports.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng, seed_from_u64(seed), stream = batch index";
/// Paths per independently seeded batch.
pub const BATCH_SIZE: usize = 4096;

/// Symmetric `α`-stable law with characteristic function `exp(-t|ξ|^α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableSamplerConfig {
    pub alpha: f64,
    pub seed: u64,
}

impl StableSamplerConfig {
    pub fn new(alpha: f64, seed: u64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(domain(format!("stable index must lie in (0, 2), got {alpha}")));
        }
        Ok(Self { alpha, seed })
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    pub fn sample<R: Rng + ?Sized>(&self, t_scale: f64, rng: &mut R) -> f64 {
        sample_symmetric_stable(self.alpha, t_scale, rng)
    }
}

/// One draw of `X_t` via the Chambers-Mallows-Stuck transform.
pub fn sample_symmetric_stable<R: Rng + ?Sized>(alpha: f64, t_scale: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    let v = PI * (u - 0.5);
    let scale = t_scale.powf(1.0 / alpha);
    if alpha == 1.0 {
        return scale * v.tan();
    }
    let w = -rng.sample::<f64, _>(Open01).ln();
    let x = (alpha * v).sin() / v.cos().powf(1.0 / alpha) * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha);
    scale * x
}

/// Standard positive `β`-stable variable, `E[e^{-sS}] = e^{-s^β}` (Kanter).
pub fn sample_positive_stable<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> f64 {
    let u = PI * rng.sample::<f64, _>(Open01);
    let w = -rng.sample::<f64, _>(Open01).ln();
    (beta * u).sin() / u.sin().powf(1.0 / beta) * (((1.0 - beta) * u).sin() / w).powf((1.0 - beta) / beta)
}

/// One draw of the inverse `β`-stable subordinator at time `t`,
/// `E_t = (t / S)^β`.
pub fn sample_inverse_stable_subordinator<R: Rng + ?Sized>(beta: f64, t: f64, rng: &mut R) -> f64 {
    let s = sample_positive_stable(beta, rng);
    (t / s).powf(beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McForwardConfig {
    pub n_paths: usize,
    pub dt_step: f64,
    pub seed: u64,
    pub theta: ParameterVector,
}

impl McForwardConfig {
    fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(input("Monte Carlo run needs at least one path"));
        }
        if !(self.dt_step > 0.0 && self.dt_step.is_finite()) {
            return Err(input(format!("dt_step must be positive, got {}", self.dt_step)));
        }
        self.theta.validate_oracle()
    }
}

/// Monte Carlo estimate of `u(t, x)` with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub dt_step: f64,
    pub seed: u64,
    pub theta: ParameterVector,
    pub t: f64,
    pub x: f64,
    pub rng: String,
}

/// Running mean and second central moment, merged pairwise.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.n += 1.0;
        let d = v - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (v - self.mean);
    }

    fn merge(a: Moments, b: Moments) -> Moments {
        if a.n == 0.0 {
            return b;
        }
        if b.n == 0.0 {
            return a;
        }
        let n = a.n + b.n;
        let d = b.mean - a.mean;
        Moments {
            n,
            mean: a.mean + d * b.n / n,
            m2: a.m2 + b.m2 + d * d * a.n * b.n / n,
        }
    }

    fn stderr(&self) -> f64 {
        if self.n < 2.0 {
            return f64::INFINITY;
        }
        (self.m2 / (self.n - 1.0) / self.n).sqrt()
    }
}

/// Pairwise reduction in index order, so the result depends only on the
/// batch contents and not on how batches were scheduled.
fn tree_reduce(mut parts: Vec<Moments>) -> Moments {
    if parts.is_empty() {
        return Moments::default();
    }
    while parts.len() > 1 {
        parts = parts
            .chunks(2)
            .map(|c| if c.len() == 2 { Moments::merge(c[0], c[1]) } else { c[0] })
            .collect();
    }
    parts[0]
}

fn batch_rng(seed: u64, batch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch as u64);
    rng
}

fn batches(n_paths: usize) -> Vec<(usize, usize)> {
    (0..n_paths.div_ceil(BATCH_SIZE))
        .map(|b| (b, BATCH_SIZE.min(n_paths - b * BATCH_SIZE)))
        .collect()
}

/// Operational time of one path: a draw of the inverse subordinator, or
/// `t` itself in the classical limit.
fn operational_time<R: Rng + ?Sized>(beta: f64, t: f64, rng: &mut R) -> f64 {
    if beta == 1.0 {
        t
    } else {
        sample_inverse_stable_subordinator(beta, t, rng)
    }
}

/// Simulates `Z` from `x` over operational time `s` in steps of `dt`.
/// Returns the end point and whether the path stayed in `D` at every step
/// end. With `stop_on_exit` the path is abandoned at the first exit.
fn simulate_path<R: Rng + ?Sized>(
    theta: &ParameterVector,
    x: f64,
    s: f64,
    dt: f64,
    stop_on_exit: bool,
    rng: &mut R,
) -> (f64, bool) {
    let steps = (s / dt).ceil().max(1.0) as usize;
    let last = s - (steps - 1) as f64 * dt;
    let mut z = x;
    let mut alive = true;
    for k in 0..steps {
        let d = if k + 1 == steps { last } else { dt };
        if d <= 0.0 {
            break;
        }
        z += sample_symmetric_stable(theta.alpha1, d, rng) + sample_symmetric_stable(theta.alpha2, d, rng);
        if alive && z.abs() >= 1.0 {
            alive = false;
            if stop_on_exit {
                break;
            }
        }
    }
    (z, alive)
}

fn check_point(t: f64, x: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(input(format!("time must be positive, got {t}")));
    }
    if !(x > -1.0 && x < 1.0) {
        return Err(input(format!("start point must lie in (-1, 1), got {x}")));
    }
    Ok(())
}

/// Monte Carlo estimate of `u(t, x) = E_x[f(Z_{E_t}); E_t < τ_D]`.
///
/// Exit is checked at step ends only, which slightly underestimates
/// killing. Batches of [`BATCH_SIZE`] paths use their own generator stream
/// and run on the current rayon pool; the reduction is independent of the
/// pool size.
pub fn mc_forward_solution(config: &McForwardConfig, f: &InitialCondition, t: f64, x: f64) -> Result<McEstimate> {
    config.validate()?;
    check_point(t, x)?;
    let parts: Vec<Moments> = batches(config.n_paths)
        .into_par_iter()
        .map(|(b, count)| {
            let mut rng = batch_rng(config.seed, b);
            let mut m = Moments::default();
            for _ in 0..count {
                let s = operational_time(config.theta.beta, t, &mut rng);
                let (z, alive) = simulate_path(&config.theta, x, s, config.dt_step, true, &mut rng);
                m.push(if alive { f.eval(z) } else { 0.0 });
            }
            m
        })
        .collect();
    let total = tree_reduce(parts);
    Ok(McEstimate {
        estimate: total.mean,
        stderr: total.stderr(),
        n_paths: config.n_paths,
        dt_step: config.dt_step,
        seed: config.seed,
        theta: config.theta,
        t,
        x,
        rng: RNG_ALGORITHM.into(),
    })
}

/// Killed and free averages of `|f(Z)|` on common paths (`f` extended by
/// zero outside `D`). Returns `(killed, free)` means.
pub fn mc_killed_and_free(config: &McForwardConfig, f: &InitialCondition, t: f64, x: f64) -> Result<(f64, f64)> {
    config.validate()?;
    check_point(t, x)?;
    let parts: Vec<(Moments, Moments)> = batches(config.n_paths)
        .into_par_iter()
        .map(|(b, count)| {
            let mut rng = batch_rng(config.seed, b);
            let (mut killed, mut free) = (Moments::default(), Moments::default());
            for _ in 0..count {
                let s = operational_time(config.theta.beta, t, &mut rng);
                let (z, alive) = simulate_path(&config.theta, x, s, config.dt_step, false, &mut rng);
                let v = if z.abs() < 1.0 { f.eval(z).abs() } else { 0.0 };
                killed.push(if alive { v } else { 0.0 });
                free.push(v);
            }
            (killed, free)
        })
        .collect();
    let (k, fr): (Vec<_>, Vec<_>) = parts.into_iter().unzip();
    Ok((tree_reduce(k).mean, tree_reduce(fr).mean))
}

/// Histogram estimate of the density of the free process `Z_t = X_t + Y_t`
/// at the origin, from `n` exact draws and the window `(-half_width, half_width)`.
pub fn mc_free_density_at_origin(
    alpha1: f64,
    alpha2: f64,
    t: f64,
    n: usize,
    half_width: f64,
    seed: u64,
) -> Result<f64> {
    StableSamplerConfig::new(alpha1, seed)?;
    StableSamplerConfig::new(alpha2, seed)?;
    if n == 0 || !(half_width > 0.0) || !(t > 0.0) {
        return Err(input("density estimate needs n > 0, t > 0 and a positive window"));
    }
    let hits: usize = batches(n)
        .into_par_iter()
        .map(|(b, count)| {
            let mut rng = batch_rng(seed, b);
            (0..count)
                .filter(|_| {
                    let z = sample_symmetric_stable(alpha1, t, &mut rng) + sample_symmetric_stable(alpha2, t, &mut rng);
                    z.abs() < half_width
                })
                .count()
        })
        .sum();
    Ok(hits as f64 / n as f64 / (2.0 * half_width))
}

/// L1 approximation of the Caputo derivative of order `β` of samples `q`
/// on a uniform grid with spacing `dt`.
///
/// Entry `k` of the result is the derivative at `t_{k+1}`:
/// `Δt^{-β}/Γ(2-β) Σ_{j<n} b_j (q_{n-j} - q_{n-j-1})`,
/// `b_j = (j+1)^{1-β} - j^{1-β}`.
pub fn caputo_l1(q: &[f64], dt: f64, beta: f64) -> Result<Vec<f64>> {
    if q.len() < 2 {
        return Err(input(format!("L1 scheme needs at least 2 nodes, got {}", q.len())));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(domain(format!("Caputo order must lie in (0, 1), got {beta}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(input(format!("time step must be positive, got {dt}")));
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(input("samples must be finite"));
    }
    let m = q.len();
    let e = 1.0 - beta;
    let b: Vec<f64> = (0..m).map(|j| (j as f64 + 1.0).powf(e) - (j as f64).powf(e)).collect();
    let diffs: Vec<f64> = q.windows(2).map(|w| w[1] - w[0]).collect();
    let scale = dt.powf(-beta) * rgamma(2.0 - beta);
    Ok((1..m)
        .map(|n| scale * (0..n).map(|j| b[j] * diffs[n - j - 1]).sum::<f64>())
        .collect())
}
