//! Cost landscapes over one or two components of `θ`, sublevel sets and
//! `β`-sensitivity curves.

use std::collections::VecDeque;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::context::SolverContext;
use crate::error::{input, Result};
use crate::forward::{fmt_f64, ParameterVector, Trajectory};
use crate::inversion::{cost, deviations, CostConfig};
use crate::quadrature::QuadratureRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    Alpha1,
    Alpha2,
    Beta,
}

impl Param {
    pub fn get(self, theta: &ParameterVector) -> f64 {
        match self {
            Self::Alpha1 => theta.alpha1,
            Self::Alpha2 => theta.alpha2,
            Self::Beta => theta.beta,
        }
    }

    pub fn set(self, theta: &mut ParameterVector, v: f64) {
        match self {
            Self::Alpha1 => theta.alpha1 = v,
            Self::Alpha2 => theta.alpha2 = v,
            Self::Beta => theta.beta = v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub param: Param,
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(param: Param, min: f64, max: f64, points: usize) -> Self {
        Self {
            param,
            min,
            max,
            points,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        let step = (self.max - self.min) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.min + step * i as f64).collect()
    }

    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.points - 1) as f64
    }
}

/// Grid over one or two components; the others are taken from `fixed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axes: Vec<Axis>,
    pub fixed: ParameterVector,
}

impl SweepSpec {
    /// The `(α₁, α₂)` contour grid at fixed `β`: 61 × 61 points over
    /// `[0.2, 0.9] × [1.1, 1.9]`.
    pub fn default_contour(beta: f64) -> Self {
        Self {
            axes: vec![
                Axis::new(Param::Alpha1, 0.2, 0.9, 61),
                Axis::new(Param::Alpha2, 1.1, 1.9, 61),
            ],
            fixed: ParameterVector::new(0.5, 1.5, beta),
        }
    }

    /// 41 points of `β` over `[0.5, 0.9]`.
    pub fn default_beta_axis() -> Axis {
        Axis::new(Param::Beta, 0.5, 0.9, 41)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.points).collect()
    }

    /// All grid points in row-major order (last axis fastest).
    pub fn points(&self) -> Vec<ParameterVector> {
        let vals: Vec<Vec<f64>> = self.axes.iter().map(Axis::values).collect();
        let total: usize = self.shape().iter().product();
        (0..total)
            .map(|flat| {
                let mut theta = self.fixed;
                let mut rem = flat;
                for (k, axis) in self.axes.iter().enumerate().rev() {
                    let idx = rem % axis.points;
                    rem /= axis.points;
                    axis.param.set(&mut theta, vals[k][idx]);
                }
                theta
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() || self.axes.len() > 2 {
            return Err(input(format!("a sweep has 1 or 2 axes, got {}", self.axes.len())));
        }
        if self.axes.len() == 2 && self.axes[0].param == self.axes[1].param {
            return Err(input("sweep axes must be different parameters"));
        }
        for a in &self.axes {
            if a.points < 2 {
                return Err(input(format!("axis {:?} needs at least 2 points", a.param)));
            }
            if !(a.min < a.max) {
                return Err(input(format!("axis {:?} needs min < max", a.param)));
            }
        }
        self.fixed
            .validate()
            .map_err(|e| input(format!("fixed parameters: {e}")))?;
        for p in self.points() {
            p.validate()
                .map_err(|e| input(format!("sweep point {p} outside the admissible set: {e}")))?;
        }
        Ok(())
    }
}

/// Description of the data a landscape was computed against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMeta {
    pub fixed: ParameterVector,
    pub data_hash: String,
    pub data_points: usize,
    pub t_final: f64,
    pub lambda: f64,
    pub quadrature: QuadratureRule,
    pub n_interior: usize,
    pub h: f64,
}

impl SweepMeta {
    fn new(spec: &SweepSpec, cfg: &CostConfig, ctx: &SolverContext) -> Self {
        Self {
            fixed: spec.fixed,
            data_hash: data_hash(&cfg.data),
            data_points: cfg.data.len(),
            t_final: cfg.data.times.last().copied().unwrap_or(0.0),
            lambda: cfg.lambda,
            quadrature: cfg.rule,
            n_interior: ctx.grid().n_interior(),
            h: ctx.grid().h(),
        }
    }
}

/// SHA-256 over the exact bits of the trajectory.
pub fn data_hash(g: &Trajectory) -> String {
    let mut hasher = Sha256::new();
    for (t, v) in g.times.iter().zip(&g.values) {
        hasher.update(t.to_le_bytes());
        hasher.update(v.to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

/// Costs in row-major order matching [`SweepSpec::points`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axes: Vec<Axis>,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub meta: SweepMeta,
}

/// Evaluates [`cost`] at every grid point on the current rayon pool. The
/// whole grid is checked before any evaluation.
pub fn sweep(spec: &SweepSpec, cfg: &CostConfig, ctx: &SolverContext) -> Result<SweepResult> {
    spec.validate()?;
    let values = spec
        .points()
        .par_iter()
        .map(|p| cost(p, cfg, ctx))
        .collect::<Result<Vec<f64>>>()?;
    Ok(SweepResult {
        axes: spec.axes.clone(),
        shape: spec.shape(),
        values,
        meta: SweepMeta::new(spec, cfg, ctx),
    })
}

impl SweepResult {
    pub fn spec(&self) -> SweepSpec {
        SweepSpec {
            axes: self.axes.clone(),
            fixed: self.meta.fixed,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.shape[1] + j]
    }

    /// Flat index of the smallest value (first on ties).
    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (k, v) in self.values.iter().enumerate() {
            if *v < self.values[best] {
                best = k;
            }
        }
        best
    }

    /// Long-format CSV: `p1,J` or `p1,p2,J`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let pts = self.spec().points();
        if self.axes.len() == 1 {
            writeln!(w, "p1,J")?;
        } else {
            writeln!(w, "p1,p2,J")?;
        }
        for (p, v) in pts.iter().zip(&self.values) {
            let coords: Vec<String> = self.axes.iter().map(|a| fmt_f64(a.param.get(p))).collect();
            writeln!(w, "{},{}", coords.join(","), fmt_f64(*v))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub index: (usize, usize),
    pub theta: ParameterVector,
    pub cost: f64,
    pub deviation: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub threshold: f64,
    pub axes: Vec<Axis>,
    pub members: Vec<Member>,
    /// Observation times, present when deviations were computed.
    pub times: Option<Vec<f64>>,
}

/// Grid points of a 2-D sweep with `J < threshold`. With `deviations`, each
/// member also stores `u(tᵢ, 0; θ) − gᵢ`.
pub fn sublevel_set(
    result: &SweepResult,
    threshold: f64,
    deviations_from: Option<(&CostConfig, &SolverContext)>,
) -> Result<ThresholdSet> {
    if !(threshold > 0.0) {
        return Err(input(format!("threshold must be positive, got {threshold}")));
    }
    if result.axes.len() != 2 {
        return Err(input("sublevel sets need a 2-D sweep"));
    }
    let pts = result.spec().points();
    let n2 = result.shape[1];
    let chosen: Vec<usize> = (0..pts.len()).filter(|&k| result.values[k] < threshold).collect();
    let devs: Vec<Option<Vec<f64>>> = match deviations_from {
        Some((cfg, ctx)) => chosen
            .par_iter()
            .map(|&k| deviations(&pts[k], cfg, ctx).map(Some))
            .collect::<Result<_>>()?,
        None => vec![None; chosen.len()],
    };
    let members = chosen
        .iter()
        .zip(devs)
        .map(|(&k, deviation)| Member {
            index: (k / n2, k % n2),
            theta: pts[k],
            cost: result.values[k],
            deviation,
        })
        .collect();
    Ok(ThresholdSet {
        threshold,
        axes: result.axes.clone(),
        members,
        times: deviations_from.map(|(cfg, _)| cfg.times().to_vec()),
    })
}

impl ThresholdSet {
    pub fn contains(&self, index: (usize, usize)) -> bool {
        self.members.iter().any(|m| m.index == index)
    }

    /// Sizes of the 8-connected components, largest first.
    pub fn components(&self) -> Vec<usize> {
        let idx: std::collections::HashSet<(usize, usize)> = self.members.iter().map(|m| m.index).collect();
        let mut seen = std::collections::HashSet::new();
        let mut sizes = Vec::new();
        for m in &self.members {
            if !seen.insert(m.index) {
                continue;
            }
            let mut queue = VecDeque::from([m.index]);
            let mut size = 0;
            while let Some((i, j)) = queue.pop_front() {
                size += 1;
                for di in -1i64..=1 {
                    for dj in -1i64..=1 {
                        let (ni, nj) = (i as i64 + di, j as i64 + dj);
                        if ni < 0 || nj < 0 {
                            continue;
                        }
                        let n = (ni as usize, nj as usize);
                        if idx.contains(&n) && seen.insert(n) {
                            queue.push_back(n);
                        }
                    }
                }
            }
            sizes.push(size);
        }
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        sizes
    }

    /// Extents of the member coordinates along the principal axes of their
    /// covariance, `(major, minor)`, in parameter units.
    pub fn principal_extents(&self) -> (f64, f64) {
        let pts: Vec<(f64, f64)> = self
            .members
            .iter()
            .map(|m| (self.axes[0].param.get(&m.theta), self.axes[1].param.get(&m.theta)))
            .collect();
        if pts.len() < 2 {
            return (0.0, 0.0);
        }
        let n = pts.len() as f64;
        let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0 / n, b + p.1 / n));
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for (x, y) in &pts {
            sxx += (x - mx) * (x - mx);
            sxy += (x - mx) * (y - my);
            syy += (y - my) * (y - my);
        }
        let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
        let (c, s) = (angle.cos(), angle.sin());
        let range = |f: &dyn Fn(f64, f64) -> f64| {
            let vals: Vec<f64> = pts.iter().map(|&(x, y)| f(x - mx, y - my)).collect();
            vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - vals.iter().cloned().fold(f64::INFINITY, f64::min)
        };
        let major = range(&|x, y| c * x + s * y);
        let minor = range(&|x, y| -s * x + c * y);
        (major, minor)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Long-format deviations: `p1,p2,t,deviation` per member and time.
    pub fn write_deviations_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let times = self
            .times
            .as_ref()
            .ok_or_else(|| input("threshold set was computed without deviations"))?;
        writeln!(w, "p1,p2,t,deviation")?;
        for m in &self.members {
            let d = m.deviation.as_ref().expect("deviations present with times");
            let p1 = fmt_f64(self.axes[0].param.get(&m.theta));
            let p2 = fmt_f64(self.axes[1].param.get(&m.theta));
            for (t, v) in times.iter().zip(d) {
                writeln!(w, "{p1},{p2},{},{}", fmt_f64(*t), fmt_f64(*v))?;
            }
        }
        Ok(())
    }
}

/// One `β`-curve per `(α₁, α₂)` pair on the common `beta_axis`.
pub fn beta_sensitivity(
    pairs: &[(f64, f64)],
    beta_axis: Axis,
    cfg: &CostConfig,
    ctx: &SolverContext,
) -> Result<Vec<SweepResult>> {
    if pairs.is_empty() {
        return Err(input("beta sensitivity needs at least one (alpha1, alpha2) pair"));
    }
    if beta_axis.param != Param::Beta {
        return Err(input("beta sensitivity axis must sweep beta"));
    }
    let specs: Vec<SweepSpec> = pairs
        .iter()
        .map(|&(a1, a2)| SweepSpec {
            axes: vec![beta_axis],
            fixed: ParameterVector::new(a1, a2, 0.5 * (beta_axis.min + beta_axis.max)),
        })
        .collect();
    for s in &specs {
        s.validate()?;
    }
    specs.iter().map(|s| sweep(s, cfg, ctx)).collect()
}

/// Largest second difference `J_{k-1} − 2J_k + J_{k+1}` over the triples
/// within `radius` cells of the minimum of a 1-D curve.
pub fn max_second_difference_near_min(curve: &SweepResult, radius: usize) -> f64 {
    let v = &curve.values;
    let k = curve.argmin();
    let lo = k.saturating_sub(radius).max(1);
    let hi = (k + radius).min(v.len() - 2);
    (lo..=hi)
        .map(|c| v[c - 1] - 2.0 * v[c] + v[c + 1])
        .fold(f64::NEG_INFINITY, f64::max)
}
