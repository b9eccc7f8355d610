//! Finite-difference discretisation of `(-Δ)^{α₁/2} + (-Δ)^{α₂/2}` on
//! `D = (-1, 1)` with zero exterior values, and its eigendecomposition.
//!
//! The single-order operator is written in hypersingular form,
//!
//! ```text
//! (-Δ)^{α/2} u(x) = c_α ∫_0^∞ (2u(x) - u(x-ξ) - u(x+ξ)) ξ^{-1-α} dξ,
//! c_α = α 2^{α-1} Γ((1+α)/2) / (√π Γ(1-α/2)).
//! ```
//!
//! On `[0, L]`, `L = 2`, the integrand is split as
//! `ψ(ξ) · ξ^{γ-1-α}` with `ψ(ξ) = (2u(x) - u(x-ξ) - u(x+ξ)) / ξ^γ` and
//! `γ = 1 + α/2`; `ψ` is integrated with the trapezoidal rule against the
//! exact moments of the power weight (`ψ(0) = 0` for `γ < 2`). Beyond `L`
//! both shifted points are outside `D`, so the tail contributes
//! `2u(x) L^{-α}/α` exactly. The result is a symmetric Toeplitz matrix with
//! positive diagonal and negative off-diagonal entries.

use std::f64::consts::PI;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{domain, input, Error, Result};

/// Uniform grid of interior nodes `x_j = -1 + j·h`, `j = 1..=n`, on `(-1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid1D {
    n_interior: usize,
}

impl Grid1D {
    /// `n_interior` must be odd, so that `x = 0` is a node, and at least 3.
    pub fn new(n_interior: usize) -> Result<Self> {
        if n_interior < 3 {
            return Err(domain(format!(
                "grid needs at least 3 interior nodes, got {n_interior}"
            )));
        }
        if n_interior.is_multiple_of(2) {
            return Err(domain(format!(
                "interior node count must be odd so that x = 0 is a node, got {n_interior}"
            )));
        }
        Ok(Self { n_interior })
    }

    /// Grid with spacing closest to `h` (odd node count).
    pub fn with_spacing(h: f64) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) {
            return Err(domain(format!("grid spacing must lie in (0, 1), got {h}")));
        }
        let intervals = (2.0 / h).round() as usize;
        let intervals = if intervals % 2 == 1 { intervals + 1 } else { intervals };
        Self::new(intervals.max(4) - 1)
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn h(&self) -> f64 {
        2.0 / (self.n_interior + 1) as f64
    }

    /// Coordinate of the 0-based node index `i`.
    pub fn node(&self, i: usize) -> f64 {
        -1.0 + (i + 1) as f64 * self.h()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_interior).map(|i| self.node(i)).collect()
    }

    /// Index of the node at `x = 0`.
    pub fn center(&self) -> usize {
        (self.n_interior - 1) / 2
    }

    /// Index of the node at `x`, if `x` is a node.
    pub fn node_index(&self, x: f64) -> Option<usize> {
        let h = self.h();
        let pos = (x + 1.0) / h;
        let j = pos.round();
        if j < 1.0 || j > self.n_interior as f64 || (pos - j).abs() > 1e-9 {
            return None;
        }
        Some(j as usize - 1)
    }

    /// Trapezoidal quadrature weight (uniform, boundary values are zero).
    pub fn weight(&self) -> f64 {
        self.h()
    }
}

fn check_order(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(domain(format!("fractional order must lie in (0, 2), got {alpha}")));
    }
    Ok(())
}

/// Normalising constant of the hypersingular integral in one dimension.
pub fn fractional_laplacian_constant(alpha: f64) -> f64 {
    alpha * 2f64.powf(alpha - 1.0) * libm::tgamma(0.5 * (1.0 + alpha)) / (PI.sqrt() * libm::tgamma(1.0 - 0.5 * alpha))
}

/// `a^ν - b^ν` for `a > b > 0` without cancellation.
fn pow_diff(a: f64, b: f64, nu: f64) -> f64 {
    if b == 0.0 {
        return a.powf(nu);
    }
    b.powf(nu) * (nu * ((a - b) / b).ln_1p()).exp_m1()
}

/// Off-diagonal stencil weights `s_k`, `k = 1..=n`, and the diagonal, such
/// that `A_ii = diag`, `A_ij = -s_{|i-j|}` (all scaled by `c_α h^{-α}`).
fn toeplitz_stencil(n: usize, alpha: f64) -> (f64, Vec<f64>) {
    let h = 2.0 / (n + 1) as f64;
    let gamma = 1.0 + 0.5 * alpha;
    let nu = gamma - alpha;
    let m = n + 1;
    let scale = fractional_laplacian_constant(alpha) * h.powf(-alpha);
    let mut stencil = Vec::with_capacity(m);
    for k in 1..=m {
        let kf = k as f64;
        let moment = if k < m {
            pow_diff(kf + 1.0, kf - 1.0, nu)
        } else {
            pow_diff(kf, kf - 1.0, nu)
        } / (2.0 * nu);
        stencil.push(scale * moment * kf.powf(-gamma));
    }
    let tail = fractional_laplacian_constant(alpha) * 2.0 * 2f64.powf(-alpha) / alpha;
    let diag = 2.0 * stencil.iter().sum::<f64>() + tail;
    stencil.truncate(n);
    (diag, stencil)
}

/// Positive-definite discretisation of `(-Δ)^{α/2}` on the grid.
pub fn build_single_alpha_matrix(grid: &Grid1D, alpha: f64) -> Result<DMatrix<f64>> {
    check_order(alpha)?;
    let n = grid.n_interior();
    let (diag, stencil) = toeplitz_stencil(n, alpha);
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            diag
        } else {
            -stencil[i.abs_diff(j) - 1]
        }
    }))
}

/// Matrix of `-L_D = (-Δ)^{α₁/2} + (-Δ)^{α₂/2}` restricted to the grid.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub alpha1: f64,
    pub alpha2: f64,
    pub grid: Grid1D,
    pub entries: DMatrix<f64>,
}

pub fn build_operator_matrix(grid: &Grid1D, alpha1: f64, alpha2: f64) -> Result<OperatorMatrix> {
    let a = build_single_alpha_matrix(grid, alpha1)?;
    let b = build_single_alpha_matrix(grid, alpha2)?;
    Ok(OperatorMatrix {
        alpha1,
        alpha2,
        grid: *grid,
        entries: a + b,
    })
}

/// Cache key: node count and both orders rounded to 12 decimals, unordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpectralKey {
    pub n: usize,
    pub alpha_lo: i64,
    pub alpha_hi: i64,
}

impl SpectralKey {
    pub fn new(n: usize, alpha1: f64, alpha2: f64) -> Self {
        let a = (alpha1 * 1e12).round() as i64;
        let b = (alpha2 * 1e12).round() as i64;
        Self {
            n,
            alpha_lo: a.min(b),
            alpha_hi: a.max(b),
        }
    }

    pub fn file_name(&self) -> String {
        format!("eig_{}_{}_{}.bin", self.n, self.alpha_lo, self.alpha_hi)
    }
}

/// Eigenpairs of the operator matrix, ascending, with eigenvectors scaled
/// so that `Σ_j h φ_n(x_j)^2 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub alpha1: f64,
    pub alpha2: f64,
    pub grid: Grid1D,
    pub mu: Vec<f64>,
    /// Column `n` is `φ_n` sampled at the interior nodes.
    pub phi: DMatrix<f64>,
}

const EIG_EPS: f64 = 1e-15;
const EIG_MAX_ITER: usize = 100_000;

fn condition_report(m: &DMatrix<f64>) -> String {
    let n = m.nrows();
    let diag: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let dmax = diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let gersh_lo = (0..n)
        .map(|i| m[(i, i)] - (0..n).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    let gersh_hi = (0..n)
        .map(|i| m[(i, i)] + (0..n).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    format!(
        "n = {n}, diagonal in [{dmin:e}, {dmax:e}], Gershgorin spectrum in [{gersh_lo:e}, {gersh_hi:e}], \
         condition estimate {:e}",
        gersh_hi / gersh_lo.max(f64::MIN_POSITIVE)
    )
}

/// Full symmetric eigendecomposition, sorted and normalised.
///
/// Each eigenvector is signed so that its entry of largest magnitude is
/// positive; entries within a relative `1e-9` of the maximum count as
/// tied and the lowest index wins.
pub fn eigendecompose(matrix: &OperatorMatrix) -> Result<SpectralDecomposition> {
    let n = matrix.grid.n_interior();
    if matrix.entries.nrows() != n || matrix.entries.ncols() != n {
        return Err(input("operator matrix shape does not match its grid"));
    }
    let eig = SymmetricEigen::try_new(matrix.entries.clone(), EIG_EPS, EIG_MAX_ITER).ok_or_else(|| {
        Error::Numeric(format!(
            "symmetric eigensolver did not converge: {}",
            condition_report(&matrix.entries)
        ))
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let norm = 1.0 / matrix.grid.weight().sqrt();
    let mut phi = DMatrix::zeros(n, n);
    let mut mu = Vec::with_capacity(n);
    for (col, &src) in order.iter().enumerate() {
        mu.push(eig.eigenvalues[src]);
        let v = eig.eigenvectors.column(src);
        let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let pivot = v.iter().position(|x| x.abs() >= vmax * (1.0 - 1e-9)).unwrap_or(0);
        let sign = if v[pivot] < 0.0 { -norm } else { norm };
        for i in 0..n {
            phi[(i, col)] = sign * v[i];
        }
    }
    if mu.iter().any(|m| !m.is_finite()) || mu.first().is_some_and(|&m| m <= 0.0) {
        return Err(Error::Numeric(format!(
            "operator matrix is not positive definite (smallest eigenvalue {:e}): {}",
            mu[0],
            condition_report(&matrix.entries)
        )));
    }
    Ok(SpectralDecomposition {
        alpha1: matrix.alpha1,
        alpha2: matrix.alpha2,
        grid: matrix.grid,
        mu,
        phi,
    })
}

/// Ascending eigenvalues only (cheaper than the full decomposition).
pub fn eigenvalues(matrix: &OperatorMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = matrix.entries.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheHeader {
    key: SpectralKey,
    n: usize,
    alpha1: f64,
    alpha2: f64,
    format: String,
    layout: String,
}

const BINARY_FORMAT: &str = "f64le";
const BINARY_LAYOUT: &str = "mu[n], phi[n*n] column-major";

impl SpectralDecomposition {
    pub fn n(&self) -> usize {
        self.mu.len()
    }

    pub fn key(&self) -> SpectralKey {
        SpectralKey::new(self.grid.n_interior(), self.alpha1, self.alpha2)
    }

    /// Binary cache record: one JSON header line followed by little-endian
    /// `f64` values, all `μ` then `φ` column by column.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let header = CacheHeader {
            key: self.key(),
            n: self.n(),
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            format: BINARY_FORMAT.into(),
            layout: BINARY_LAYOUT.into(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        let mut buf = Vec::with_capacity(8 * (self.n() + self.phi.len()));
        for v in self.mu.iter().chain(self.phi.as_slice()) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = String::new();
        r.read_line(&mut line)?;
        let header: CacheHeader = serde_json::from_str(line.trim_end())?;
        if header.format != BINARY_FORMAT {
            return Err(input(format!("unsupported cache format {}", header.format)));
        }
        let n = header.n;
        let grid = Grid1D::new(n)?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != 8 * (n + n * n) {
            return Err(input(format!(
                "cache record for n = {n} has {} payload bytes, expected {}",
                bytes.len(),
                8 * (n + n * n)
            )));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(Self {
            alpha1: header.alpha1,
            alpha2: header.alpha2,
            grid,
            mu: values[..n].to_vec(),
            phi: DMatrix::from_column_slice(n, n, &values[n..]),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        static SEQ: AtomicU64 = AtomicU64::new(0);
        // Unique per writer so concurrent saves of one key never share a file.
        let tmp = path.with_extension(format!(
            "tmp{}-{}",
            std::process::id(),
            SEQ.fetch_add(1, Ordering::Relaxed)
        ));
        self.write_binary(std::io::BufWriter::new(fs::File::create(&tmp)?))?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_binary(fs::File::open(path)?)
    }

    /// JSON document with the same content as the binary record.
    pub fn to_json(&self) -> serde_json::Value {
        let columns: Vec<&[f64]> = (0..self.n())
            .map(|c| {
                let start = c * self.n();
                &self.phi.as_slice()[start..start + self.n()]
            })
            .collect();
        serde_json::json!({
            "key": self.key(),
            "n": self.n(),
            "alpha1": self.alpha1,
            "alpha2": self.alpha2,
            "h": self.grid.h(),
            "nodes": self.grid.nodes(),
            "mu": self.mu,
            "phi": columns,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parity_and_nodes() {
        assert!(Grid1D::new(10).is_err());
        assert!(Grid1D::new(1).is_err());
        let g = Grid1D::new(199).unwrap();
        assert!((g.h() - 0.01).abs() < 1e-15);
        assert_eq!(g.node(g.center()), 0.0);
        assert!((g.h() * 200.0 - 2.0).abs() < 1e-14);
        assert_eq!(g.node_index(0.0), Some(99));
        assert_eq!(g.node_index(0.005), None);
        assert_eq!(g.node_index(-1.0), None);
        assert_eq!(Grid1D::with_spacing(0.01).unwrap().n_interior(), 199);
    }

    #[test]
    fn single_matrix_is_symmetric_with_signed_entries() {
        let g = Grid1D::new(11).unwrap();
        let a = build_single_alpha_matrix(&g, 0.5).unwrap();
        assert_eq!(a, a.transpose());
        let b = build_single_alpha_matrix(&g, 1.2).unwrap();
        for i in 0..11 {
            assert!(b[(i, i)] > 0.0);
            for j in 0..11 {
                if i != j {
                    assert!(b[(i, j)] <= 0.0);
                }
            }
        }
    }

    #[test]
    fn orders_outside_range_are_rejected() {
        let g = Grid1D::new(11).unwrap();
        for alpha in [0.0, 2.0, -0.5, f64::NAN] {
            assert!(matches!(build_single_alpha_matrix(&g, alpha), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn operator_is_additive_and_symmetric_in_orders() {
        let g = Grid1D::new(31).unwrap();
        let single = build_single_alpha_matrix(&g, 1.0).unwrap();
        let double = build_operator_matrix(&g, 1.0, 1.0).unwrap();
        assert_eq!(double.entries, &single * 2.0);
        let ab = build_operator_matrix(&g, 0.5, 1.5).unwrap();
        let ba = build_operator_matrix(&g, 1.5, 0.5).unwrap();
        assert_eq!(ab.entries, ba.entries);
    }

    #[test]
    fn stencil_is_consistent_on_a_quadratic_bump() {
        // (-Δ)^{α/2} of (1-x²)_+ has a closed form at x = 0:
        // c_α ∫_0^∞ (2u(0) - 2u(ξ)) ξ^{-1-α} dξ with u = (1-ξ²)_+
        // = 2c_α [∫_0^1 ξ^{1-α} dξ + ∫_1^∞ ξ^{-1-α} dξ] = 2c_α [1/(2-α) + 1/α].
        for &alpha in &[0.5, 1.0, 1.5] {
            let mut errs = Vec::new();
            for &n in &[99usize, 199, 399] {
                let g = Grid1D::new(n).unwrap();
                let a = build_single_alpha_matrix(&g, alpha).unwrap();
                let u: Vec<f64> = g.nodes().iter().map(|x| 1.0 - x * x).collect();
                let c = g.center();
                let v: f64 = (0..n).map(|j| a[(c, j)] * u[j]).sum();
                let exact = 2.0 * fractional_laplacian_constant(alpha) * (1.0 / (2.0 - alpha) + 1.0 / alpha);
                errs.push((v - exact).abs());
            }
            assert!(errs[2] < errs[1] && errs[1] < errs[0], "alpha={alpha} {errs:?}");
            assert!(errs[2] / exact_scale(alpha) < 1e-2, "alpha={alpha} {errs:?}");
        }
    }

    fn exact_scale(alpha: f64) -> f64 {
        2.0 * fractional_laplacian_constant(alpha) * (1.0 / (2.0 - alpha) + 1.0 / alpha)
    }

    #[test]
    fn decomposition_invariants_small() {
        let g = Grid1D::new(41).unwrap();
        let m = build_operator_matrix(&g, 0.5, 1.5).unwrap();
        let d = eigendecompose(&m).unwrap();
        let h = g.h();
        for n in 0..41 {
            let col = d.phi.column(n);
            let av = &m.entries * col;
            let res = (av - col * d.mu[n]).amax();
            assert!(res <= 1e-9 * d.mu[n], "n={n} res={res}");
            let vmax = col.amax();
            let pivot = col.iter().position(|x| x.abs() >= vmax * (1.0 - 1e-9)).unwrap();
            assert!(col[pivot] > 0.0);
            for k in 0..41 {
                let ip: f64 = h * col.dot(&d.phi.column(k));
                let expected = if k == n { 1.0 } else { 0.0 };
                assert!((ip - expected).abs() <= 1e-9);
            }
        }
        assert!(d.mu.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn binary_cache_round_trip_is_exact() {
        let g = Grid1D::new(15).unwrap();
        let d = eigendecompose(&build_operator_matrix(&g, 0.3, 1.7).unwrap()).unwrap();
        let mut buf = Vec::new();
        d.write_binary(&mut buf).unwrap();
        let back = SpectralDecomposition::read_binary(&buf[..]).unwrap();
        assert_eq!(back, d);
        let header_end = buf.iter().position(|&b| b == b'\n').unwrap();
        assert_eq!(buf.len() - header_end - 1, 8 * (15 + 225));
        assert!(SpectralDecomposition::read_binary(&buf[..buf.len() - 8]).is_err());
    }

    #[test]
    fn cache_keys_separate_small_steps() {
        let a = SpectralKey::new(199, 0.5, 1.5);
        let b = SpectralKey::new(199, 0.5 * (1.0 + 1e-6), 1.5);
        assert_ne!(a, b);
        assert_eq!(SpectralKey::new(199, 1.5, 0.5), a);
    }
}
