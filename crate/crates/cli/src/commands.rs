use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use fracdiff::forward::{fmt_f64, uniform_times, GridInfo, TrajectoryDocument};
use fracdiff::inversion::{self, CostConfig, OptimizerConfig, Termination};
use fracdiff::landscape::{self, data_hash, Axis, Param, SweepResult, SweepSpec, ThresholdSet};
use fracdiff::oracles::{mc_forward_solution, McEstimate, McForwardConfig};
use fracdiff::quadrature::QuadratureRule;
use fracdiff::spectral::{build_operator_matrix, eigendecompose, Grid1D};
use fracdiff::{Error, ParameterVector, SolverContext, Trajectory};

use crate::manifest::{write_text, write_with, Manifest};
use crate::{parse_theta, Common, Failure, GridArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    Simpson,
    Trapezoid,
}

impl From<Quadrature> for QuadratureRule {
    fn from(q: Quadrature) -> Self {
        match q {
            Quadrature::Simpson => QuadratureRule::Simpson,
            Quadrature::Trapezoid => QuadratureRule::Trapezoid,
        }
    }
}

fn prepare(common: &Common, n_interior: usize) -> Result<SolverContext, Failure> {
    fs::create_dir_all(&common.out)?;
    let ctx = SolverContext::with_default_bump(n_interior)?;
    Ok(match &common.cache {
        Some(dir) => ctx.with_cache_dir(dir)?,
        None => ctx,
    })
}

/// Reads a trajectory from CSV (`t,value`) or from its JSON form.
fn read_trajectory(path: &Path) -> Result<Trajectory, Failure> {
    let file = File::open(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        let doc: TrajectoryDocument = serde_json::from_reader(BufReader::new(file))?;
        return Ok(Trajectory::new(doc.times, doc.values)?);
    }
    Ok(Trajectory::read_csv(BufReader::new(file))?)
}

/// Observed data from a file, or the noise-free trajectory at `theta`.
fn resolve_data(
    data: Option<&Path>,
    theta: &ParameterVector,
    ctx: &SolverContext,
    t_final: f64,
    nt: usize,
) -> Result<Trajectory, Failure> {
    match data {
        Some(p) => read_trajectory(p),
        None => Ok(ctx.trajectory(theta, &uniform_times(t_final, nt)?)?),
    }
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<(), Failure> {
    write_text(dir, name, &(serde_json::to_string_pretty(value)? + "\n"))
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub grid: GridArgs,
    /// θ = α₁,α₂,β.
    #[arg(long, value_parser = parse_theta, default_value = "0.5,1.5,0.7")]
    pub theta: ParameterVector,
    /// Standard deviation of additive Gaussian noise.
    #[arg(long, default_value_t = 0.0)]
    pub noise_sd: f64,
}

pub fn generate(a: GenerateArgs) -> Result<(), Failure> {
    a.theta.validate()?;
    if !(a.noise_sd >= 0.0 && a.noise_sd.is_finite()) {
        return Err(Error::Input(format!("noise sd must be non-negative, got {}", a.noise_sd)).into());
    }
    let ctx = prepare(&a.common, a.grid.nx)?;
    let mut g = ctx.trajectory(&a.theta, &uniform_times(a.grid.t_final, a.grid.nt)?)?;
    if a.noise_sd > 0.0 {
        let normal = Normal::new(0.0, a.noise_sd).map_err(|e| Error::Input(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(a.common.seed);
        for v in &mut g.values {
            *v += normal.sample(&mut rng);
        }
    }
    let out = &a.common.out;
    write_with(out, "trajectory.csv", |w| g.write_csv(w))?;
    let doc = TrajectoryDocument {
        times: g.times.clone(),
        values: g.values.clone(),
        theta: Some(a.theta),
        grid: Some(GridInfo::from(*ctx.grid())),
    };
    write_json(out, "trajectory.json", &doc)?;
    let mut m = Manifest::new("generate", &a)?;
    m.outputs = vec!["trajectory.csv".into(), "trajectory.json".into()];
    m.data_hash = Some(data_hash(&g));
    m.write(out)
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    /// Observed trajectory (CSV `t,value` or trajectory JSON).
    #[arg(long)]
    pub data: PathBuf,
    /// Interior grid nodes of the forward solver.
    #[arg(long, default_value_t = 199)]
    pub nx: usize,
    /// Starting point θ₀ = α₁,α₂,β.
    #[arg(long, value_parser = parse_theta, default_value = "1.0,1.0,0.5")]
    pub theta: ParameterVector,
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    #[arg(long, value_enum, default_value_t = Quadrature::Simpson)]
    pub quadrature: Quadrature,
}

pub fn fit(a: FitArgs) -> Result<(), Failure> {
    let g = read_trajectory(&a.data)?;
    let ctx = prepare(&a.common, a.nx)?;
    let cfg = CostConfig::new(g, a.lambda, a.quadrature.into())?;
    let mut opt = OptimizerConfig::new(a.theta);
    opt.max_iter = a.max_iter;
    let report = inversion::fit(&cfg, &opt, &ctx)?;
    let out = &a.common.out;
    write_text(out, "fit_report.json", &(report.to_json()? + "\n"))?;
    write_with(out, "residuals.csv", |w| {
        inversion::write_residuals_csv(w, &report.theta_hat, &cfg, &ctx)
    })?;
    let mut m = Manifest::new("fit", &a)?;
    m.outputs = vec!["fit_report.json".into(), "residuals.csv".into()];
    m.data_hash = Some(data_hash(&cfg.data));
    m.write(out)?;
    println!(
        "theta_hat = {}  J = {:e}  iterations = {}  termination = {:?}  strip_degenerate = {}",
        report.theta_hat, report.cost_final, report.iterations, report.termination, report.strip_degenerate
    );
    match report.termination {
        Termination::MaxIter => Err(Failure::NotConverged),
        Termination::Boundary => Err(Failure::BoundaryStall),
        _ => Ok(()),
    }
}

/// Sweep description read from JSON. `data` is resolved relative to the
/// spec file; without it the noise-free trajectory at `--theta` is used.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepFile {
    #[serde(flatten)]
    pub spec: SweepSpec,
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub grid: GridArgs,
    /// JSON sweep spec; defaults to the 61 × 61 (α₁, α₂) contour at β = 0.7.
    pub spec: Option<PathBuf>,
    /// Observed trajectory; overrides the spec's `data`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Parameters generating the data when no file is given.
    #[arg(long, value_parser = parse_theta, default_value = "0.5,1.5,0.7")]
    pub theta: ParameterVector,
    /// Overrides the spec's `lambda`.
    #[arg(long)]
    pub lambda: Option<f64>,
}

pub fn sweep(a: SweepArgs) -> Result<(), Failure> {
    let file = match &a.spec {
        Some(p) => {
            let mut f: SweepFile = serde_json::from_reader(BufReader::new(File::open(p)?))?;
            if let (Some(d), Some(dir)) = (&f.data, p.parent()) {
                f.data = Some(dir.join(d));
            }
            f
        }
        None => SweepFile {
            spec: SweepSpec::default_contour(0.7),
            data: None,
            lambda: None,
        },
    };
    file.spec.validate()?;
    let ctx = prepare(&a.common, a.grid.nx)?;
    let data_path = a.data.clone().or(file.data.clone());
    let g = resolve_data(data_path.as_deref(), &a.theta, &ctx, a.grid.t_final, a.grid.nt)?;
    let lambda = a.lambda.or(file.lambda).unwrap_or(0.0);
    let cfg = CostConfig::new(g, lambda, QuadratureRule::Simpson)?;
    let start = std::time::Instant::now();
    let result = landscape::sweep(&file.spec, &cfg, &ctx)?;
    eprintln!(
        "{} points, {} eigensolves, {:.1} s",
        result.values.len(),
        ctx.eigensolves(),
        start.elapsed().as_secs_f64()
    );
    let out = &a.common.out;
    write_with(out, "sweep.csv", |w| result.write_csv(w))?;
    write_text(out, "sweep.json", &(result.to_json()? + "\n"))?;
    #[derive(Serialize)]
    struct Resolved<'a> {
        args: &'a SweepArgs,
        sweep: &'a SweepFile,
        data: Option<PathBuf>,
        lambda: f64,
    }
    let mut m = Manifest::new(
        "sweep",
        Resolved {
            args: &a,
            sweep: &file,
            data: data_path,
            lambda,
        },
    )?;
    m.outputs = vec!["sweep.csv".into(), "sweep.json".into()];
    m.data_hash = Some(result.meta.data_hash.clone());
    m.write(out)
}

fn read_sweep(path: &Path) -> Result<SweepResult, Failure> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// Rebuilds the cost configuration a sweep was computed with and checks
/// that the data matches its recorded hash.
fn sweep_cost_config(
    result: &SweepResult,
    data: Option<&Path>,
    theta: &ParameterVector,
    ctx: &SolverContext,
) -> Result<CostConfig, Failure> {
    let meta = &result.meta;
    let g = resolve_data(data, theta, ctx, meta.t_final, meta.data_points.saturating_sub(1))?;
    if data_hash(&g) != meta.data_hash {
        return Err(Error::Input("data does not match the hash recorded in the sweep".into()).into());
    }
    Ok(CostConfig::new(g, meta.lambda, meta.quadrature)?)
}

#[derive(Debug, Args, Serialize)]
pub struct SublevelArgs {
    #[command(flatten)]
    pub common: Common,
    /// `sweep.json` written by `fracdiff sweep`.
    #[arg(long)]
    pub sweep: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1e-3,1e-4,1e-6")]
    pub threshold: Vec<f64>,
    /// Also write u(t, 0; θ) − g(t) for every member.
    #[arg(long)]
    pub deviations: bool,
    /// Data the sweep was computed against, needed for deviations.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Parameters that generated the data when no file is given.
    #[arg(long, value_parser = parse_theta, default_value = "0.5,1.5,0.7")]
    pub theta: ParameterVector,
}

#[derive(Debug, Serialize)]
struct SublevelSummary {
    threshold: f64,
    members: usize,
    components: Vec<usize>,
    principal_extent: f64,
    transverse_extent: f64,
}

fn threshold_name(prefix: &str, t: f64, ext: &str) -> String {
    format!("{prefix}_{t:e}.{ext}")
}

pub fn sublevel(a: SublevelArgs) -> Result<(), Failure> {
    let result = read_sweep(&a.sweep)?;
    let ctx = prepare(&a.common, result.meta.n_interior)?;
    let cfg = if a.deviations {
        Some(sweep_cost_config(&result, a.data.as_deref(), &a.theta, &ctx)?)
    } else {
        None
    };
    let out = &a.common.out;
    let mut outputs = Vec::new();
    let mut summary = Vec::new();
    for &t in &a.threshold {
        let set: ThresholdSet = landscape::sublevel_set(&result, t, cfg.as_ref().map(|c| (c, &ctx)))?;
        let name = threshold_name("sublevel", t, "json");
        write_text(out, &name, &(set.to_json()? + "\n"))?;
        outputs.push(name);
        if a.deviations {
            let name = threshold_name("deviations", t, "csv");
            write_with(out, &name, |w| set.write_deviations_csv(w))?;
            outputs.push(name);
        }
        let (major, minor) = set.principal_extents();
        println!(
            "J < {t:e}: {} points, components {:?}, extents {major:.4} x {minor:.4}",
            set.members.len(),
            set.components()
        );
        summary.push(SublevelSummary {
            threshold: t,
            members: set.members.len(),
            components: set.components(),
            principal_extent: major,
            transverse_extent: minor,
        });
    }
    write_json(out, "sublevel_summary.json", &summary)?;
    outputs.push("sublevel_summary.json".into());
    let mut m = Manifest::new("sublevel", &a)?;
    m.outputs = outputs;
    m.data_hash = Some(result.meta.data_hash.clone());
    m.write(out)
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => Ok((
            a.parse().map_err(|e| format!("bad alpha1 {a:?}: {e}"))?,
            b.parse().map_err(|e| format!("bad alpha2 {b:?}: {e}"))?,
        )),
        _ => Err(format!("expected alpha1,alpha2, got {s:?}")),
    }
}

#[derive(Debug, Args, Serialize)]
pub struct BetaSensArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Take the pairs with J < `--threshold` from this 2-D sweep.
    #[arg(long, conflicts_with = "pair")]
    pub sweep: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-4)]
    pub threshold: f64,
    /// Explicit pair `alpha1,alpha2`; repeatable.
    #[arg(long, value_parser = parse_pair)]
    pub pair: Vec<(f64, f64)>,
    #[arg(long, default_value_t = 0.5)]
    pub beta_min: f64,
    #[arg(long, default_value_t = 0.9)]
    pub beta_max: f64,
    #[arg(long, default_value_t = 41)]
    pub beta_points: usize,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Parameters generating the data when no file is given.
    #[arg(long, value_parser = parse_theta, default_value = "0.5,1.5,0.7")]
    pub theta: ParameterVector,
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
}

#[derive(Debug, Serialize)]
struct BetaCurves {
    axis: Axis,
    pairs: Vec<(f64, f64)>,
    argmin_beta: Vec<f64>,
    curves: Vec<SweepResult>,
}

pub fn beta_sens(a: BetaSensArgs) -> Result<(), Failure> {
    let axis = Axis::new(Param::Beta, a.beta_min, a.beta_max, a.beta_points);
    let (ctx, cfg, pairs) = match &a.sweep {
        Some(p) => {
            let result = read_sweep(p)?;
            let ctx = prepare(&a.common, result.meta.n_interior)?;
            let cfg = sweep_cost_config(&result, a.data.as_deref(), &a.theta, &ctx)?;
            let set = landscape::sublevel_set(&result, a.threshold, None)?;
            let pairs = set.members.iter().map(|m| (m.theta.alpha1, m.theta.alpha2)).collect();
            (ctx, cfg, pairs)
        }
        None => {
            let ctx = prepare(&a.common, a.grid.nx)?;
            let g = resolve_data(a.data.as_deref(), &a.theta, &ctx, a.grid.t_final, a.grid.nt)?;
            let cfg = CostConfig::new(g, a.lambda, QuadratureRule::Simpson)?;
            let pairs = if a.pair.is_empty() {
                vec![(a.theta.alpha1, a.theta.alpha2)]
            } else {
                a.pair.clone()
            };
            (ctx, cfg, pairs)
        }
    };
    let curves = landscape::beta_sensitivity(&pairs, axis, &cfg, &ctx)?;
    let betas = axis.values();
    let argmin_beta: Vec<f64> = curves.iter().map(|c| betas[c.argmin()]).collect();
    let out = &a.common.out;
    write_with(out, "beta_sens.csv", |w| {
        use std::io::Write;
        writeln!(w, "alpha1,alpha2,beta,J")?;
        for ((a1, a2), c) in pairs.iter().zip(&curves) {
            for (b, v) in betas.iter().zip(&c.values) {
                writeln!(w, "{},{},{},{}", fmt_f64(*a1), fmt_f64(*a2), fmt_f64(*b), fmt_f64(*v))?;
            }
        }
        Ok(())
    })?;
    let doc = BetaCurves {
        axis,
        pairs: pairs.clone(),
        argmin_beta,
        curves,
    };
    write_json(out, "beta_sens.json", &doc)?;
    let lo = doc.argmin_beta.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = doc.argmin_beta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    println!("{} curves, minimizing beta in [{lo}, {hi}]", pairs.len());
    let mut m = Manifest::new("beta-sens", &a)?;
    m.outputs = vec!["beta_sens.csv".into(), "beta_sens.json".into()];
    m.data_hash = Some(data_hash(&cfg.data));
    m.write(out)
}

#[derive(Debug, Args, Serialize)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Interior grid nodes of the spectral solver.
    #[arg(long, default_value_t = 199)]
    pub nx: usize,
    /// θ = α₁,α₂,β; β = 1 selects the unsubordinated process.
    #[arg(long, value_parser = parse_theta, default_value = "0.5,1.5,1.0")]
    pub theta: ParameterVector,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.2")]
    pub times: Vec<f64>,
    /// Start point; must be a grid node.
    #[arg(long, default_value_t = 0.0)]
    pub x: f64,
    #[arg(long, default_value_t = 100_000)]
    pub n_paths: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub dt_step: f64,
    /// Discretization allowance added to three standard errors.
    #[arg(long, default_value_t = 2e-2)]
    pub allowance: f64,
}

#[derive(Debug, Serialize)]
struct ValidationRow {
    t: f64,
    spectral: f64,
    oracle: McEstimate,
    difference: f64,
    bound: f64,
    pass: bool,
}

pub fn validate(a: ValidateArgs) -> Result<(), Failure> {
    a.theta.validate_oracle()?;
    let mc = McForwardConfig {
        n_paths: a.n_paths,
        dt_step: a.dt_step,
        seed: a.common.seed,
        theta: a.theta,
    };
    let ctx = prepare(&a.common, a.nx)?;
    let model = ctx.forward_model(&a.theta)?;
    let mut rows = Vec::new();
    for &t in &a.times {
        let spectral = model.evaluate_solution(t, a.x)?;
        let oracle = mc_forward_solution(&mc, ctx.initial(), t, a.x)?;
        let difference = oracle.estimate - spectral;
        let bound = 3.0 * oracle.stderr + a.allowance;
        println!(
            "t = {t}: spectral {spectral:.6}  mc {:.6} ± {:.6}  {}",
            oracle.estimate,
            oracle.stderr,
            if difference.abs() <= bound { "pass" } else { "FAIL" }
        );
        rows.push(ValidationRow {
            t,
            spectral,
            oracle,
            difference,
            bound,
            pass: difference.abs() <= bound,
        });
    }
    let out = &a.common.out;
    write_json(out, "validate.json", &rows)?;
    write_with(out, "validate.csv", |w| {
        use std::io::Write;
        writeln!(w, "t,spectral,mc,stderr,pass")?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                fmt_f64(r.t),
                fmt_f64(r.spectral),
                fmt_f64(r.oracle.estimate),
                fmt_f64(r.oracle.stderr),
                r.pass
            )?;
        }
        Ok(())
    })?;
    let mut m = Manifest::new("validate", &a)?;
    m.outputs = vec!["validate.json".into(), "validate.csv".into()];
    m.write(out)
}

#[derive(Debug, Args, Serialize)]
pub struct EigArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 199)]
    pub nx: usize,
    /// Orders `alpha1,alpha2`.
    #[arg(long, value_parser = parse_pair, default_value = "0.5,1.5")]
    pub alpha: (f64, f64),
}

pub fn eig(a: EigArgs) -> Result<(), Failure> {
    fs::create_dir_all(&a.common.out)?;
    let grid = Grid1D::new(a.nx)?;
    // Same ordering as the solver cache, so the record is interchangeable with it.
    let (lo, hi) = if a.alpha.0 <= a.alpha.1 {
        a.alpha
    } else {
        (a.alpha.1, a.alpha.0)
    };
    let d = eigendecompose(&build_operator_matrix(&grid, lo, hi)?)?;
    let out = &a.common.out;
    let bin = d.key().file_name();
    d.save(&out.join(&bin))?;
    if let Some(cache) = &a.common.cache {
        fs::create_dir_all(cache)?;
        d.save(&cache.join(&bin))?;
    }
    write_with(out, "eigenvalues.csv", |w| {
        use std::io::Write;
        writeln!(w, "k,mu")?;
        for (k, mu) in d.mu.iter().enumerate() {
            writeln!(w, "{},{}", k + 1, fmt_f64(*mu))?;
        }
        Ok(())
    })?;
    write_json(out, "eig.json", &d.to_json())?;
    println!("n = {}  mu_1 = {:.10}  mu_n = {:.6e}", d.n(), d.mu[0], d.mu[d.n() - 1]);
    let mut m = Manifest::new("eig", &a)?;
    m.outputs = vec![bin, "eigenvalues.csv".into(), "eig.json".into()];
    m.write(out)
}
