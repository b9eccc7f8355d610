//! Regularized least-squares identification of `θ` from an observed
//! trajectory at the centre of the domain.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::context::SolverContext;
use crate::error::{domain, input, Error, Result};
use crate::forward::{fmt_f64, ParameterVector, Trajectory};
use crate::quadrature::{uniform_weights, QuadratureRule};

/// Data, quadrature and Tikhonov weight defining
/// `J(θ) = ½ Σ wᵢ (u(tᵢ, 0; θ) − gᵢ)² + (λ/2) ‖θ‖²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    pub lambda: f64,
    pub weights: Vec<f64>,
    pub rule: QuadratureRule,
    pub data: Trajectory,
}

impl CostConfig {
    /// Requires uniformly spaced observation times.
    pub fn new(data: Trajectory, lambda: f64, rule: QuadratureRule) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(input(format!("lambda must be non-negative, got {lambda}")));
        }
        let t = &data.times;
        if t.len() < 2 {
            return Err(input("cost needs at least 2 observation times"));
        }
        let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
        for (i, w) in t.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0) {
                return Err(input(format!("observation times are not uniform at index {}", i + 1)));
            }
        }
        let (weights, rule) = uniform_weights(t.len(), dt, rule)?;
        Ok(Self {
            lambda,
            weights,
            rule,
            data,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.data.times
    }

    fn regularization(&self, theta: &ParameterVector) -> f64 {
        0.5 * self.lambda * theta.norm().powi(2)
    }
}

/// Model trajectory minus data, `u(tᵢ, 0; θ) − gᵢ`.
pub fn deviations(theta: &ParameterVector, cfg: &CostConfig, ctx: &SolverContext) -> Result<Vec<f64>> {
    theta.validate()?;
    let model = ctx.forward_model(theta)?;
    let out: Vec<f64> = cfg
        .times()
        .iter()
        .zip(&cfg.data.values)
        .map(|(&t, g)| model.evaluate_center(t) - g)
        .collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite model output at {theta}")));
    }
    Ok(out)
}

/// Weighted residuals `rᵢ = √wᵢ (u(tᵢ, 0; θ) − gᵢ)`.
pub fn residuals(theta: &ParameterVector, cfg: &CostConfig, ctx: &SolverContext) -> Result<Vec<f64>> {
    Ok(deviations(theta, cfg, ctx)?
        .iter()
        .zip(&cfg.weights)
        .map(|(d, w)| w.sqrt() * d)
        .collect())
}

fn cost_from_residuals(r: &[f64], theta: &ParameterVector, cfg: &CostConfig) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>() + cfg.regularization(theta)
}

pub fn cost(theta: &ParameterVector, cfg: &CostConfig, ctx: &SolverContext) -> Result<f64> {
    let r = residuals(theta, cfg, ctx)?;
    Ok(cost_from_residuals(&r, theta, cfg))
}

/// Closed box `[lo, hi]` per component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    pub lower: [f64; 3],
    pub upper: [f64; 3],
}

impl BoxBounds {
    pub fn with_margin(eps: f64) -> Self {
        Self {
            lower: [eps; 3],
            upper: [2.0 - eps, 2.0 - eps, 1.0 - eps],
        }
    }

    pub fn project(&self, v: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|i| v[i].clamp(self.lower[i], self.upper[i]))
    }

    pub fn contains_strictly(&self, v: [f64; 3]) -> bool {
        (0..3).all(|i| v[i] > self.lower[i] && v[i] < self.upper[i])
    }

    fn active(&self, v: [f64; 3]) -> bool {
        (0..3).any(|i| v[i] <= self.lower[i] || v[i] >= self.upper[i])
    }
}

impl Default for BoxBounds {
    fn default() -> Self {
        Self::with_margin(1e-3)
    }
}

/// Central-difference Jacobian of the weighted residuals, `m × 3`.
///
/// The step for component `j` is `fd_step · |θ_j|`, clipped so both
/// evaluation points stay inside `bounds`. The six perturbed solves run
/// concurrently.
pub fn jacobian_fd(
    theta: &ParameterVector,
    cfg: &CostConfig,
    ctx: &SolverContext,
    fd_step: f64,
    bounds: &BoxBounds,
) -> Result<DMatrix<f64>> {
    theta.validate()?;
    let base = theta.to_array();
    let points: Vec<([f64; 3], [f64; 3])> = (0..3)
        .map(|j| {
            let h = fd_step * base[j].abs().max(f64::MIN_POSITIVE);
            let mut plus = base;
            let mut minus = base;
            plus[j] = (base[j] + h).min(bounds.upper[j]);
            minus[j] = (base[j] - h).max(bounds.lower[j]);
            (plus, minus)
        })
        .collect();
    let evals: Vec<Result<Vec<f64>>> = points
        .par_iter()
        .flat_map_iter(|(p, m)| [*p, *m])
        .map(|v| residuals(&ParameterVector::from_array(v), cfg, ctx))
        .collect();
    let m = cfg.weights.len();
    let mut jac = DMatrix::zeros(m, 3);
    let mut it = evals.into_iter();
    for (j, (p, mi)) in points.iter().enumerate() {
        let rp = it.next().expect("plus evaluation")?;
        let rm = it.next().expect("minus evaluation")?;
        let span = p[j] - mi[j];
        if span <= 0.0 {
            return Err(input(format!("no room for a finite-difference step in component {j}")));
        }
        for i in 0..m {
            jac[(i, j)] = (rp[i] - rm[i]) / span;
        }
    }
    Ok(jac)
}

/// `∇J = Jᵀ r + λ θ`.
pub fn gradient(jac: &DMatrix<f64>, r: &[f64], theta: &ParameterVector, lambda: f64) -> [f64; 3] {
    let th = theta.to_array();
    std::array::from_fn(|j| (0..r.len()).map(|i| jac[(i, j)] * r[i]).sum::<f64>() + lambda * th[j])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub theta0: ParameterVector,
    pub bounds: BoxBounds,
    pub fd_step: f64,
    pub lm_damping0: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    pub max_iter: usize,
    pub gtol: f64,
    pub ftol: f64,
    pub xtol: f64,
    /// Threshold on the condition number of the `α` columns of the Jacobian
    /// above which the report flags strip degeneracy.
    pub degeneracy_condition: f64,
}

impl OptimizerConfig {
    pub fn new(theta0: ParameterVector) -> Self {
        Self {
            theta0,
            bounds: BoxBounds::default(),
            fd_step: 1e-6,
            lm_damping0: 1e-3,
            damping_up: 10.0,
            damping_down: 10.0,
            max_iter: 200,
            gtol: 1e-10,
            ftol: 1e-12,
            xtol: 1e-10,
            degeneracy_condition: 1e6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.bounds.contains_strictly(self.theta0.to_array()) {
            return Err(domain(format!(
                "theta0 = {} is not strictly inside the box",
                self.theta0
            )));
        }
        if !(self.fd_step > 0.0 && self.lm_damping0 > 0.0 && self.damping_up > 1.0 && self.damping_down > 1.0) {
            return Err(input("fd_step and damping must be positive, damping factors > 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Projected gradient below `gtol`.
    Gradient,
    /// Accepted step below `xtol` relative to `‖θ‖`.
    Step,
    /// Relative cost decrease below `ftol`, or no decrease found with
    /// saturated damping away from the bounds.
    Cost,
    MaxIter,
    /// No progress possible because the step is cut off by the box.
    Boundary,
}

impl Termination {
    pub fn converged(self) -> bool {
        matches!(self, Self::Gradient | Self::Step | Self::Cost)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub theta: ParameterVector,
    pub cost: f64,
    pub gradient_norm: f64,
    pub damping: f64,
    pub step_norm: f64,
    /// Rejected trial steps before this one was accepted.
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub theta0: ParameterVector,
    pub theta_hat: ParameterVector,
    pub cost_initial: f64,
    pub cost_final: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub residual_norm: f64,
    pub gradient: [f64; 3],
    /// Condition number of the `α₁, α₂` columns of the final Jacobian.
    pub alpha_condition: f64,
    pub strip_degenerate: bool,
    pub lambda: f64,
    pub quadrature: QuadratureRule,
    pub optimizer: OptimizerConfig,
    pub trace: Vec<TraceEntry>,
}

impl FitReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Ratio of extreme singular values of the `α` columns; infinite when they
/// are linearly dependent.
pub fn alpha_condition(jac: &DMatrix<f64>) -> f64 {
    let sub = jac.columns(0, 2).into_owned();
    let sv = sub.singular_values();
    let (hi, lo) = (sv.max(), sv.min());
    if lo <= hi * f64::EPSILON || lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

fn projected_gradient_norm(theta: [f64; 3], g: [f64; 3], bounds: &BoxBounds) -> f64 {
    let moved = bounds.project(std::array::from_fn(|i| theta[i] - g[i]));
    (0..3).map(|i| (theta[i] - moved[i]).abs()).fold(0.0, f64::max)
}

fn solve_step(jac: &DMatrix<f64>, g: [f64; 3], shift: f64) -> Option<[f64; 3]> {
    let mut a = jac.transpose() * jac;
    for i in 0..3 {
        a[(i, i)] += shift;
    }
    let rhs = DVector::from_iterator(3, g.iter().map(|v| -v));
    let d = a.cholesky()?.solve(&rhs);
    Some([d[0], d[1], d[2]])
}

/// Projected Levenberg-Marquardt.
///
/// Each iteration solves `(JᵀJ + (λ_lm + λ) I) δ = −(Jᵀr + λθ)`, projects
/// `θ + δ` onto the box and accepts on cost decrease. Rejections raise the
/// damping; once it exceeds `1e16` the run stops.
pub fn fit(cfg: &CostConfig, opt: &OptimizerConfig, ctx: &SolverContext) -> Result<FitReport> {
    opt.validate()?;
    let bounds = &opt.bounds;
    let mut theta = opt.theta0;
    let mut r = residuals(&theta, cfg, ctx)?;
    let mut cost_now = cost_from_residuals(&r, &theta, cfg);
    let cost_initial = cost_now;
    let mut damping = opt.lm_damping0;
    let mut jac = jacobian_fd(&theta, cfg, ctx, opt.fd_step, bounds)?;
    let mut grad = gradient(&jac, &r, &theta, cfg.lambda);
    let mut trace = vec![TraceEntry {
        iteration: 0,
        theta,
        cost: cost_now,
        gradient_norm: projected_gradient_norm(theta.to_array(), grad, bounds),
        damping,
        step_norm: 0.0,
        rejected: 0,
    }];
    let mut iterations = 0;
    let termination = 'outer: loop {
        if projected_gradient_norm(theta.to_array(), grad, bounds) <= opt.gtol {
            break Termination::Gradient;
        }
        if iterations >= opt.max_iter {
            break Termination::MaxIter;
        }
        iterations += 1;
        let current = theta.to_array();
        let mut rejected = 0;
        loop {
            if damping > 1e16 {
                break 'outer if bounds.active(current) {
                    Termination::Boundary
                } else {
                    Termination::Cost
                };
            }
            let trial = solve_step(&jac, grad, damping + cfg.lambda)
                .map(|d| bounds.project(std::array::from_fn(|i| current[i] + d[i])));
            let Some(trial) = trial else {
                damping *= opt.damping_up;
                rejected += 1;
                continue;
            };
            let step: f64 = (0..3).map(|i| (trial[i] - current[i]).powi(2)).sum::<f64>().sqrt();
            if step == 0.0 {
                break 'outer Termination::Boundary;
            }
            let cand = ParameterVector::from_array(trial);
            let evaluated = residuals(&cand, cfg, ctx).map(|rc| {
                let c = cost_from_residuals(&rc, &cand, cfg);
                (rc, c)
            });
            match evaluated {
                Ok((rc, c)) if c < cost_now => {
                    let decrease = cost_now - c;
                    let previous = cost_now;
                    theta = cand;
                    r = rc;
                    cost_now = c;
                    damping = (damping / opt.damping_down).max(1e-300);
                    jac = jacobian_fd(&theta, cfg, ctx, opt.fd_step, bounds)?;
                    grad = gradient(&jac, &r, &theta, cfg.lambda);
                    trace.push(TraceEntry {
                        iteration: iterations,
                        theta,
                        cost: cost_now,
                        gradient_norm: projected_gradient_norm(trial, grad, bounds),
                        damping,
                        step_norm: step,
                        rejected,
                    });
                    if step <= opt.xtol * (theta.norm() + opt.xtol) {
                        break 'outer Termination::Step;
                    }
                    if decrease <= opt.ftol * previous {
                        break 'outer Termination::Cost;
                    }
                    break;
                }
                _ => {
                    damping *= opt.damping_up;
                    rejected += 1;
                }
            }
        }
    };
    let alpha_cond = alpha_condition(&jac);
    Ok(FitReport {
        theta0: opt.theta0,
        theta_hat: theta,
        cost_initial,
        cost_final: cost_now,
        iterations,
        termination,
        residual_norm: r.iter().map(|v| v * v).sum::<f64>().sqrt(),
        gradient: grad,
        alpha_condition: alpha_cond,
        strip_degenerate: alpha_cond > opt.degeneracy_condition,
        lambda: cfg.lambda,
        quadrature: cfg.rule,
        optimizer: *opt,
        trace,
    })
}

/// `t,residual` rows of `u(tᵢ, 0; θ) − gᵢ`.
pub fn write_residuals_csv<W: Write>(
    mut w: W,
    theta: &ParameterVector,
    cfg: &CostConfig,
    ctx: &SolverContext,
) -> Result<()> {
    let d = deviations(theta, cfg, ctx)?;
    writeln!(w, "t,residual")?;
    for (t, v) in cfg.times().iter().zip(d) {
        writeln!(w, "{},{}", fmt_f64(*t), fmt_f64(v))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::uniform_times;

    fn setup(n: usize, nt: usize) -> (SolverContext, CostConfig) {
        let ctx = SolverContext::with_default_bump(n).unwrap();
        let times = uniform_times(1.0, nt).unwrap();
        let g = ctx.trajectory(&ParameterVector::REFERENCE, &times).unwrap();
        let cfg = CostConfig::new(g, 0.0, QuadratureRule::Simpson).unwrap();
        (ctx, cfg)
    }

    #[test]
    fn exact_data_has_zero_cost() {
        let (ctx, cfg) = setup(31, 20);
        assert_eq!(cost(&ParameterVector::REFERENCE, &cfg, &ctx).unwrap(), 0.0);
        assert!(cost(&ParameterVector::new(0.6, 1.4, 0.65), &cfg, &ctx).unwrap() > 0.0);
    }

    #[test]
    fn cost_rejects_points_outside_theta() {
        let (ctx, cfg) = setup(31, 20);
        assert!(matches!(
            cost(&ParameterVector::new(0.5, 2.0, 0.7), &cfg, &ctx),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn nonuniform_times_are_rejected() {
        let g = Trajectory::new(vec![0.0, 0.1, 0.3], vec![1.0, 0.9, 0.8]).unwrap();
        assert!(CostConfig::new(g, 0.0, QuadratureRule::Simpson).is_err());
    }

    #[test]
    fn projection_and_strict_interior() {
        let b = BoxBounds::default();
        assert_eq!(b.project([-1.0, 3.0, 0.5]), [1e-3, 2.0 - 1e-3, 0.5]);
        assert!(!b.contains_strictly([1e-3, 1.0, 0.5]));
        let opt = OptimizerConfig::new(ParameterVector::new(1e-3, 1.0, 0.5));
        assert!(opt.validate().is_err());
    }

    #[test]
    fn fit_from_truth_stops_at_once() {
        let (ctx, cfg) = setup(31, 20);
        let rep = fit(&cfg, &OptimizerConfig::new(ParameterVector::REFERENCE), &ctx).unwrap();
        assert_eq!(rep.iterations, 0);
        assert_eq!(rep.termination, Termination::Gradient);
        assert_eq!(rep.theta_hat, ParameterVector::REFERENCE);
    }

    #[test]
    fn residual_csv_header() {
        let (ctx, cfg) = setup(31, 4);
        let mut buf = Vec::new();
        write_residuals_csv(&mut buf, &ParameterVector::new(0.6, 1.4, 0.65), &cfg, &ctx).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,residual\n"));
        assert_eq!(text.lines().count(), 6);
    }
}
