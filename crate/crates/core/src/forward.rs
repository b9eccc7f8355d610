//! Spectral solution `u(t, x) = Σ_n E_β(-μ_n t^β) ⟨f, φ_n⟩ φ_n(x)` with every
//! discrete mode retained.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{domain, input, Error, Result};
use crate::mittag_leffler::MlfEvaluator;
use crate::spectral::{Grid1D, SpectralDecomposition};

/// The unknown exponents `θ = (α₁, α₂, β)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta: f64,
}

impl ParameterVector {
    pub const REFERENCE: ParameterVector = ParameterVector {
        alpha1: 0.5,
        alpha2: 1.5,
        beta: 0.7,
    };

    pub fn new(alpha1: f64, alpha2: f64, beta: f64) -> Self {
        Self { alpha1, alpha2, beta }
    }

    /// Checks membership of the admissible set `0 < α₁, α₂ < 2`, `0 < β < 1`.
    pub fn validate(&self) -> Result<()> {
        self.check_alphas()?;
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(domain(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        Ok(())
    }

    /// Like [`validate`](Self::validate) but admits the classical limit `β = 1`.
    pub fn validate_oracle(&self) -> Result<()> {
        self.check_alphas()?;
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(domain(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        Ok(())
    }

    fn check_alphas(&self) -> Result<()> {
        for (name, v) in [("alpha1", self.alpha1), ("alpha2", self.alpha2)] {
            if !(v > 0.0 && v < 2.0) {
                return Err(domain(format!("{name} must lie in (0, 2), got {v}")));
            }
        }
        Ok(())
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.alpha1, self.alpha2, self.beta]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn norm(&self) -> f64 {
        self.to_array().iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn swapped(&self) -> Self {
        Self::new(self.alpha2, self.alpha1, self.beta)
    }
}

impl FromStr for ParameterVector {
    type Err = Error;

    /// Parses `a1,a2,b`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(input(format!("expected three comma-separated values, got {s:?}")));
        }
        let mut v = [0.0; 3];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p.parse().map_err(|_| input(format!("not a number: {p:?} in {s:?}")))?;
        }
        Ok(Self::from_array(v))
    }
}

impl fmt::Display for ParameterVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.alpha1, self.alpha2, self.beta)
    }
}

/// Initial profile `u(0, x) = f(x)`.
#[derive(Clone)]
pub struct InitialCondition {
    evaluator: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub description: String,
}

impl fmt::Debug for InitialCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InitialCondition")
            .field("description", &self.description)
            .finish()
    }
}

impl InitialCondition {
    pub fn new(description: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            evaluator: Arc::new(f),
            description: description.into(),
        }
    }

    /// `f(x) = (1 - x²)^{7/2}`.
    pub fn smooth_bump() -> Self {
        Self::new("(1-x^2)^(7/2)", |x: f64| {
            let s = 1.0 - x * x;
            if s <= 0.0 {
                0.0
            } else {
                s.powi(3) * s.sqrt()
            }
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.evaluator)(x)
    }

    pub fn sample(&self, grid: &Grid1D) -> Result<Vec<f64>> {
        grid.nodes()
            .into_iter()
            .map(|x| {
                let v = self.eval(x);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(input(format!("initial condition is not finite at x = {x}")))
                }
            })
            .collect()
    }
}

impl Default for InitialCondition {
    fn default() -> Self {
        Self::smooth_bump()
    }
}

/// `c_n = Σ_j h f(x_j) φ_n(x_j)`.
pub fn project_initial_condition(decomposition: &SpectralDecomposition, f: &InitialCondition) -> Result<Vec<f64>> {
    let values = f.sample(&decomposition.grid)?;
    let h = decomposition.grid.weight();
    let fv = nalgebra::DVector::from_vec(values);
    Ok((decomposition.phi.tr_mul(&fv) * h).iter().copied().collect())
}

/// Observed or simulated time series at `x = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(input(format!(
                "trajectory has {} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(input("trajectory times must be strictly ascending"));
        }
        Ok(Self { times, values })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV with header `t,value`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,value")?;
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(w, "{},{}", fmt_f64(*t), fmt_f64(*v))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut saw_header = false;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if !saw_header {
                if line.replace(' ', "") != "t,value" {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("expected header `t,value`, found {line:?}"),
                    });
                }
                saw_header = true;
                continue;
            }
            let (t, v) = parse_pair(line, lineno)?;
            times.push(t);
            values.push(v);
        }
        if !saw_header {
            return Err(Error::Parse {
                line: 1,
                message: "empty trajectory file".into(),
            });
        }
        if times.is_empty() {
            return Err(Error::Parse {
                line: 2,
                message: "trajectory file has no data rows".into(),
            });
        }
        Self::new(times, values)
    }
}

pub(crate) fn parse_pair(line: &str, lineno: usize) -> Result<(f64, f64)> {
    let mut it = line.split(',');
    let mut next = |what: &str| -> Result<f64> {
        let field = it.next().ok_or_else(|| Error::Parse {
            line: lineno,
            message: format!("missing {what} column"),
        })?;
        field.trim().parse::<f64>().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("invalid {what} value {field:?}"),
        })
    };
    let a = next("first")?;
    let b = next("second")?;
    if it.next().is_some() {
        return Err(Error::Parse {
            line: lineno,
            message: "too many columns".into(),
        });
    }
    Ok((a, b))
}

/// 17 significant digits, round-trip exact.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// JSON form of a trajectory with its provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryDocument {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub theta: Option<ParameterVector>,
    pub grid: Option<GridInfo>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridInfo {
    pub n_interior: usize,
    pub h: f64,
}

impl From<Grid1D> for GridInfo {
    fn from(g: Grid1D) -> Self {
        Self {
            n_interior: g.n_interior(),
            h: g.h(),
        }
    }
}

/// `m` = `nt + 1` uniform nodes on `[0, t_final]`.
pub fn uniform_times(t_final: f64, nt: usize) -> Result<Vec<f64>> {
    if nt == 0 || !(t_final > 0.0 && t_final.is_finite()) {
        return Err(input(format!(
            "time grid needs nt >= 1 and T > 0, got nt = {nt}, T = {t_final}"
        )));
    }
    Ok((0..=nt).map(|i| t_final * i as f64 / nt as f64).collect())
}

/// Immutable forward map for one `(α₁, α₂, β)` on one grid.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    pub decomposition: Arc<SpectralDecomposition>,
    pub coefficients: Vec<f64>,
    pub beta: f64,
    evaluator: Arc<MlfEvaluator>,
    /// `c_n φ_n(0)`
    center_weights: Vec<f64>,
}

impl ForwardModel {
    pub fn new(decomposition: Arc<SpectralDecomposition>, f: &InitialCondition, beta: f64) -> Result<Self> {
        let coefficients = project_initial_condition(&decomposition, f)?;
        Self::from_parts(decomposition, coefficients, Arc::new(MlfEvaluator::new(beta)?))
    }

    pub fn from_parts(
        decomposition: Arc<SpectralDecomposition>,
        coefficients: Vec<f64>,
        evaluator: Arc<MlfEvaluator>,
    ) -> Result<Self> {
        if coefficients.len() != decomposition.n() {
            return Err(input("coefficient count does not match the decomposition"));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::Numeric("non-finite projection coefficient".into()));
        }
        let center = decomposition.grid.center();
        let center_weights = coefficients
            .iter()
            .enumerate()
            .map(|(n, c)| c * decomposition.phi[(center, n)])
            .collect();
        Ok(Self {
            beta: evaluator.beta(),
            decomposition,
            coefficients,
            evaluator,
            center_weights,
        })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.decomposition.grid
    }

    fn check_time(t: f64) -> Result<()> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(input(format!("time must be finite and non-negative, got {t}")));
        }
        Ok(())
    }

    /// `u(t, x)` at a grid node `x`.
    pub fn evaluate_solution(&self, t: f64, x: f64) -> Result<f64> {
        Self::check_time(t)?;
        let j = self
            .grid()
            .node_index(x)
            .ok_or_else(|| input(format!("x = {x} is not a grid node")))?;
        Ok(self.evaluate_at_node(t, j))
    }

    /// `u(t, x_j)` for the 0-based node index `j`.
    pub fn evaluate_at_node(&self, t: f64, j: usize) -> f64 {
        let d = &self.decomposition;
        let tb = t.powf(self.beta);
        d.mu.iter()
            .zip(&self.coefficients)
            .enumerate()
            .map(|(n, (mu, c))| self.evaluator.eval_neg(mu * tb) * c * d.phi[(j, n)])
            .sum()
    }

    /// `u(t, 0)`.
    pub fn evaluate_center(&self, t: f64) -> f64 {
        let tb = t.powf(self.beta);
        self.decomposition
            .mu
            .iter()
            .zip(&self.center_weights)
            .map(|(mu, w)| self.evaluator.eval_neg(mu * tb) * w)
            .sum()
    }

    /// `c_n φ_n(0)` per mode.
    pub fn center_weights(&self) -> &[f64] {
        &self.center_weights
    }

    pub fn evaluate_trajectory(&self, times: &[f64]) -> Result<Trajectory> {
        for &t in times {
            Self::check_time(t)?;
        }
        let values = times.iter().map(|&t| self.evaluate_center(t)).collect();
        Trajectory::new(times.to_vec(), values)
    }
}
