//! Periodic spatial discretization of the flat torus `T^N = [-1,1]^N`.
//!
//! Nodes along each axis sit at `x_j = -1 + 2j/n`; the period is fixed to 2,
//! so Fourier mode `k` carries the frequency `pi*k`. Fields are real samples
//! in row-major order (axis 0 slowest). All spectral operations go through
//! the complex FFT and are exact for trigonometric polynomials resolvable on
//! the grid.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

pub const PERIOD: f64 = 2.0;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("unsupported dimension {0}: desk scale covers N in {{1, 2}}")]
    UnsupportedDimension(usize),
    #[error("invalid resolution {0}: n must be even and >= 8")]
    InvalidResolution(usize),
    #[error("sample count {got} does not match grid ({want} expected)")]
    LengthMismatch { got: usize, want: usize },
    #[error("non-finite sample at node {0}")]
    NonFiniteSample(usize),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("axis {axis} out of range for dimension {dim}")]
    AxisOutOfRange { axis: usize, dim: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed field file: {0}")]
    MalformedFile(String),
}

/// Uniform periodic grid on `[-1,1]^N` with identified endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TorusGrid {
    dim: usize,
    n: usize,
}

impl TorusGrid {
    /// Dealiasing and the symmetric spectrum require an even `n >= 8`.
    pub fn new(dim: usize, points_per_dim: usize) -> Result<Self, GridError> {
        if dim == 0 || dim > 2 {
            return Err(GridError::UnsupportedDimension(dim));
        }
        if points_per_dim < 8 || points_per_dim % 2 != 0 {
            return Err(GridError::InvalidResolution(points_per_dim));
        }
        Ok(Self {
            dim,
            n: points_per_dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_dim(&self) -> usize {
        self.n
    }

    pub fn node_count(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Grid spacing `2/n`, equal along every axis.
    pub fn spacing(&self) -> f64 {
        PERIOD / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Total volume `|T^N| = 2^N`.
    pub fn volume(&self) -> f64 {
        PERIOD.powi(self.dim as i32)
    }

    /// Coordinates of a row-major node index.
    pub fn coords(&self, node: usize) -> [f64; 2] {
        let mut out = [0.0; 2];
        let mut rest = node;
        for axis in (0..self.dim).rev() {
            let idx = rest % self.n;
            rest /= self.n;
            out[axis] = -1.0 + PERIOD * idx as f64 / self.n as f64;
        }
        out
    }

    /// Largest mode kept by the 2/3 dealiasing rule.
    pub fn dealias_cutoff(&self) -> i64 {
        (self.n / 3) as i64
    }

    fn signed_mode(&self, bin: usize) -> i64 {
        let n = self.n as i64;
        let b = bin as i64;
        if b <= n / 2 {
            b
        } else {
            b - n
        }
    }

    /// Signed mode vector of a row-major spectral bin.
    pub(crate) fn mode_vector(&self, bin: usize) -> [i64; 2] {
        let mut out = [0i64; 2];
        let mut rest = bin;
        for axis in (0..self.dim).rev() {
            out[axis] = self.signed_mode(rest % self.n);
            rest /= self.n;
        }
        out
    }
}

/// Real scalar samples on a [`TorusGrid`], one value per node.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.node_count() {
            return Err(GridError::LengthMismatch {
                got: values.len(),
                want: grid.node_count(),
            });
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFiniteSample(bad));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: TorusGrid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.node_count()],
        }
    }

    /// Unvalidated constructor for solver-internal stage values, where
    /// non-finite entries are caught at the end of the step instead.
    pub(crate) fn from_raw(grid: TorusGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.node_count());
        Self { grid, values }
    }

    pub fn zero(grid: TorusGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Sample a closure of the node coordinates.
    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.node_count())
            .map(|i| {
                let c = grid.coords(i);
                f(&c[..grid.dim()])
            })
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `self += alpha * other`, in place.
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        for (v, o) in self.values.iter_mut().zip(&other.values) {
            *v += alpha * o;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for v in &mut self.values {
            *v *= alpha;
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Real vector samples on a [`TorusGrid`], `N` values per node, stored
/// component-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: TorusGrid,
    comps: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn new(grid: TorusGrid, comps: Vec<Vec<f64>>) -> Result<Self, GridError> {
        if comps.len() != grid.dim() {
            return Err(GridError::LengthMismatch {
                got: comps.len(),
                want: grid.dim(),
            });
        }
        for comp in &comps {
            if comp.len() != grid.node_count() {
                return Err(GridError::LengthMismatch {
                    got: comp.len(),
                    want: grid.node_count(),
                });
            }
            if let Some(bad) = comp.iter().position(|v| !v.is_finite()) {
                return Err(GridError::NonFiniteSample(bad));
            }
        }
        Ok(Self { grid, comps })
    }

    pub fn zero(grid: TorusGrid) -> Self {
        Self {
            grid,
            comps: vec![vec![0.0; grid.node_count()]; grid.dim()],
        }
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64], usize) -> f64) -> Self {
        let comps = (0..grid.dim())
            .map(|axis| {
                (0..grid.node_count())
                    .map(|i| {
                        let c = grid.coords(i);
                        f(&c[..grid.dim()], axis)
                    })
                    .collect()
            })
            .collect();
        Self { grid, comps }
    }

    pub fn from_components(comps: Vec<ScalarField>) -> Result<Self, GridError> {
        let grid = comps.first().ok_or(GridError::GridMismatch)?.grid();
        if comps.iter().any(|c| c.grid() != grid) {
            return Err(GridError::GridMismatch);
        }
        Self::new(grid, comps.into_iter().map(|c| c.into_values()).collect())
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.comps[axis]
    }

    pub fn component_mut(&mut self, axis: usize) -> &mut [f64] {
        &mut self.comps[axis]
    }

    pub fn component_field(&self, axis: usize) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.comps[axis].clone(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.comps
            .iter()
            .all(|c| c.iter().all(|v| v.is_finite()))
    }

    /// Euclidean norm of the vector at one node.
    pub fn norm_at(&self, node: usize) -> f64 {
        self.comps
            .iter()
            .map(|c| c[node] * c[node])
            .sum::<f64>()
            .sqrt()
    }

    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        for (c, o) in self.comps.iter_mut().zip(&other.comps) {
            for (v, w) in c.iter_mut().zip(o) {
                *v += alpha * w;
            }
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for c in &mut self.comps {
            for v in c.iter_mut() {
                *v *= alpha;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

// ---------------------------------------------------------------------------
// FFT plumbing
// ---------------------------------------------------------------------------

thread_local! {
    static PLANS: RefCell<HashMap<(usize, bool), Arc<dyn Fft<f64>>>> =
        RefCell::new(HashMap::new());
}

fn plan(n: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cache| {
        cache
            .borrow_mut()
            .entry((n, forward))
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                if forward {
                    planner.plan_fft_forward(n)
                } else {
                    planner.plan_fft_inverse(n)
                }
            })
            .clone()
    })
}

fn transform_axes(grid: TorusGrid, data: &mut [Complex64], forward: bool) {
    let n = grid.points_per_dim();
    let fft = plan(n, forward);
    match grid.dim() {
        1 => fft.process(data),
        2 => {
            // rows are contiguous (axis 1)
            for row in data.chunks_exact_mut(n) {
                fft.process(row);
            }
            let mut col = vec![Complex64::default(); n];
            for j in 0..n {
                for i in 0..n {
                    col[i] = data[i * n + j];
                }
                fft.process(&mut col);
                for i in 0..n {
                    data[i * n + j] = col[i];
                }
            }
        }
        _ => unreachable!("grid dimension is validated at construction"),
    }
}

/// Forward DFT normalized so a constant field `c` has coefficient `c` in the
/// zero bin; Parseval then reads `sum_k |f_k|^2 = mean(|f|^2)`.
pub(crate) fn forward(field: &ScalarField) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = field
        .values()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    transform_axes(field.grid(), &mut data, true);
    let scale = 1.0 / field.grid().node_count() as f64;
    for c in &mut data {
        *c *= scale;
    }
    data
}

pub(crate) fn inverse(grid: TorusGrid, mut coeffs: Vec<Complex64>) -> ScalarField {
    transform_axes(grid, &mut coeffs, false);
    ScalarField {
        grid,
        values: coeffs.into_iter().map(|c| c.re).collect(),
    }
}

/// One spectral round trip applying `mult(k)` per signed mode vector.
pub(crate) fn apply_multiplier(
    field: &ScalarField,
    mult: impl Fn(&[i64]) -> Complex64,
) -> ScalarField {
    let grid = field.grid();
    let mut coeffs = forward(field);
    for (bin, c) in coeffs.iter_mut().enumerate() {
        let k = grid.mode_vector(bin);
        *c *= mult(&k[..grid.dim()]);
    }
    inverse(grid, coeffs)
}

fn mode_norm_sq(k: &[i64]) -> f64 {
    k.iter().map(|&ki| (ki * ki) as f64).sum()
}

// ---------------------------------------------------------------------------
// Spectral calculus
// ---------------------------------------------------------------------------

/// Exact derivative for resolvable trigonometric polynomials; mode `k`
/// carries the frequency `pi*k` on the period-2 torus. The Nyquist mode is
/// dropped for odd orders to keep the result real-symmetric.
pub fn spectral_derivative(f: &ScalarField, axis: usize, order: u32) -> ScalarField {
    let grid = f.grid();
    assert!(
        axis < grid.dim(),
        "axis {axis} out of range for dimension {}",
        grid.dim()
    );
    assert!(order >= 1, "derivative order must be >= 1");
    let nyquist = (grid.points_per_dim() / 2) as i64;
    let odd = order % 2 == 1;
    apply_multiplier(f, |k| {
        if odd && k[axis].abs() == nyquist {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::new(0.0, std::f64::consts::PI * k[axis] as f64).powu(order)
    })
}

/// `-eps * Laplacian^{2m} u`, the hyperviscous right-hand side; per mode the
/// multiplier is `-eps * (pi^2 |k|^2)^{2m}`.
pub fn hyperviscous_term(u: &VectorField, m_order: u32, eps: f64) -> VectorField {
    assert!(m_order >= 1, "hyperviscosity exponent must be >= 1");
    assert!(eps >= 0.0, "viscosity must be nonnegative");
    let grid = u.grid();
    let comps = (0..grid.dim())
        .map(|axis| {
            let comp = u.component_field(axis);
            apply_multiplier(&comp, |k| {
                let lam = (std::f64::consts::PI.powi(2) * mode_norm_sq(k)).powi(2 * m_order as i32);
                Complex64::new(-eps * lam, 0.0)
            })
            .into_values()
        })
        .collect();
    VectorField { grid, comps }
}

/// Quadrature `mean * volume`; spectrally exact for resolvable trig
/// polynomials.
pub fn integrate(f: &ScalarField) -> f64 {
    let mean = f.values().iter().sum::<f64>() / f.grid().node_count() as f64;
    mean * f.grid().volume()
}

/// Discrete `L^2(T^N)` inner product `\int f g dx`.
pub fn inner_product(f: &ScalarField, g: &ScalarField) -> f64 {
    assert_eq!(f.grid(), g.grid(), "fields live on different grids");
    let dot: f64 = f
        .values()
        .iter()
        .zip(g.values())
        .map(|(&a, &b)| a * b)
        .sum();
    dot / f.grid().node_count() as f64 * f.grid().volume()
}

pub fn l2_norm(f: &ScalarField) -> f64 {
    inner_product(f, f).max(0.0).sqrt()
}

/// `W^{-ell,2}(T^N)` norm: `norm^2 = 2^N sum_k (1 + pi^2|k|^2)^{-ell} |f_k|^2`
/// with Parseval-normalized coefficients. Requires `ell > N/2 + 1`.
pub fn negative_sobolev_norm(f: &ScalarField, ell: u32) -> f64 {
    let grid = f.grid();
    assert!(
        2 * ell as usize > grid.dim() + 2,
        "need ell > N/2 + 1 for the trajectory-space metric"
    );
    let coeffs = forward(f);
    let mut acc = 0.0;
    for (bin, c) in coeffs.iter().enumerate() {
        let k = grid.mode_vector(bin);
        let weight = (1.0 + std::f64::consts::PI.powi(2) * mode_norm_sq(&k[..grid.dim()]))
            .powi(-(ell as i32));
        acc += weight * c.norm_sqr();
    }
    (grid.volume() * acc).sqrt()
}

/// `W^{-ell,2}` distance of two scalar fields on a common grid.
pub fn negative_sobolev_distance(f: &ScalarField, g: &ScalarField, ell: u32) -> f64 {
    assert_eq!(f.grid(), g.grid(), "fields live on different grids");
    let diff = f.zip_map(g, |a, b| a - b);
    negative_sobolev_norm(&diff, ell)
}

/// 2/3-rule dealiasing: zero every mode with `|k_axis| > n/3` on some axis.
pub fn dealias(f: &ScalarField) -> ScalarField {
    let cutoff = f.grid().dealias_cutoff();
    apply_multiplier(f, |k| {
        if k.iter().any(|ka| ka.abs() > cutoff) {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(1.0, 0.0)
        }
    })
}

pub fn dealias_vector(u: &VectorField) -> VectorField {
    let grid = u.grid();
    let comps = (0..grid.dim())
        .map(|axis| dealias(&u.component_field(axis)).into_values())
        .collect();
    VectorField { grid, comps }
}

/// Gaussian spectral low-pass `exp(-(sigma pi |k|)^2 / 2)`; the identity at
/// `sigma = 0`.
pub fn low_pass(f: &ScalarField, sigma: f64) -> ScalarField {
    assert!(sigma >= 0.0, "smoothing width must be nonnegative");
    if sigma == 0.0 {
        return f.clone();
    }
    apply_multiplier(f, |k| {
        let arg = sigma * sigma * std::f64::consts::PI.powi(2) * mode_norm_sq(k) / 2.0;
        Complex64::new((-arg).exp(), 0.0)
    })
}

/// Gradient of a scalar field.
pub fn gradient(f: &ScalarField) -> VectorField {
    let grid = f.grid();
    let comps = (0..grid.dim())
        .map(|axis| spectral_derivative(f, axis, 1).into_values())
        .collect();
    VectorField { grid, comps }
}

/// Divergence of a vector field.
pub fn divergence(u: &VectorField) -> ScalarField {
    let grid = u.grid();
    let mut out = ScalarField::zero(grid);
    for axis in 0..grid.dim() {
        let d = spectral_derivative(&u.component_field(axis), axis, 1);
        out.axpy(1.0, &d);
    }
    out
}

/// Fused derivative + 2/3 mask, used for the nonlinear flux terms.
pub(crate) fn flux_derivative(f: &ScalarField, axis: usize) -> ScalarField {
    let grid = f.grid();
    let cutoff = grid.dealias_cutoff();
    apply_multiplier(f, |k| {
        if k.iter().any(|ka| ka.abs() > cutoff) {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, std::f64::consts::PI * k[axis] as f64)
        }
    })
}

// ---------------------------------------------------------------------------
// Serialization: CSV of node values, row-major, one-line header `dim,n,period`
// ---------------------------------------------------------------------------

fn header_line(grid: TorusGrid) -> String {
    format!("{},{},{}", grid.dim(), grid.points_per_dim(), PERIOD as i64)
}

fn parse_header(line: &str) -> Result<TorusGrid, GridError> {
    let parts: Vec<&str> = line.trim().split(',').collect();
    if parts.len() != 3 {
        return Err(GridError::MalformedFile(format!(
            "expected header dim,n,period, got {line:?}"
        )));
    }
    let dim: usize = parts[0]
        .parse()
        .map_err(|_| GridError::MalformedFile("bad dim".into()))?;
    let n: usize = parts[1]
        .parse()
        .map_err(|_| GridError::MalformedFile("bad n".into()))?;
    let period: f64 = parts[2]
        .parse()
        .map_err(|_| GridError::MalformedFile("bad period".into()))?;
    if (period - PERIOD).abs() > 1e-12 {
        return Err(GridError::MalformedFile(format!(
            "period {period} unsupported (the torus is fixed to period 2)"
        )));
    }
    TorusGrid::new(dim, n)
}

pub fn write_scalar_csv(f: &ScalarField, path: &Path) -> Result<(), GridError> {
    let mut out = String::new();
    out.push_str(&header_line(f.grid()));
    out.push('\n');
    for v in f.values() {
        writeln!(out, "{v:.17e}").expect("string write cannot fail");
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_scalar_csv(path: &Path) -> Result<ScalarField, GridError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let grid = parse_header(
        lines
            .next()
            .ok_or_else(|| GridError::MalformedFile("empty file".into()))?,
    )?;
    let values: Vec<f64> = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse::<f64>()
                .map_err(|_| GridError::MalformedFile(format!("bad value {l:?}")))
        })
        .collect::<Result<_, _>>()?;
    ScalarField::new(grid, values)
}

pub fn write_vector_csv(u: &VectorField, path: &Path) -> Result<(), GridError> {
    let grid = u.grid();
    let mut out = String::new();
    out.push_str(&header_line(grid));
    out.push('\n');
    for node in 0..grid.node_count() {
        let row: Vec<String> = (0..grid.dim())
            .map(|axis| format!("{:.17e}", u.component(axis)[node]))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_vector_csv(path: &Path) -> Result<VectorField, GridError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let grid = parse_header(
        lines
            .next()
            .ok_or_else(|| GridError::MalformedFile("empty file".into()))?,
    )?;
    let mut comps = vec![Vec::with_capacity(grid.node_count()); grid.dim()];
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let parts: Vec<&str> = line.trim().split(',').collect();
        if parts.len() != grid.dim() {
            return Err(GridError::MalformedFile(format!(
                "expected {} components per node, got {line:?}",
                grid.dim()
            )));
        }
        for (axis, p) in parts.iter().enumerate() {
            comps[axis].push(
                p.parse::<f64>()
                    .map_err(|_| GridError::MalformedFile(format!("bad value {p:?}")))?,
            );
        }
    }
    VectorField::new(grid, comps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid1(n: usize) -> TorusGrid {
        TorusGrid::new(1, n).unwrap()
    }

    /// Random-looking but deterministic trig polynomial of degree <= deg.
    fn trig_poly(grid: TorusGrid, deg: i64, seed: u64) -> ScalarField {
        let mut s = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
        let mut coef = || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s % 2000) as f64 / 1000.0 - 1.0
        };
        let mut terms: Vec<(f64, f64, i64, i64)> = Vec::new();
        for k0 in 0..=deg {
            for k1 in 0..=(if grid.dim() == 2 { deg } else { 0 }) {
                terms.push((coef(), coef(), k0, k1));
            }
        }
        ScalarField::from_fn(grid, |x| {
            let y = if grid.dim() == 2 { x[1] } else { 0.0 };
            terms
                .iter()
                .map(|&(a, b, k0, k1)| {
                    let phase = PI * (k0 as f64 * x[0] + k1 as f64 * y);
                    a * phase.cos() + b * phase.sin()
                })
                .sum()
        })
    }

    #[test]
    fn make_grid_examples() {
        let g = grid1(16);
        assert_eq!(g.node_count(), 16);
        assert_abs_diff_eq!(g.volume(), 2.0);
        let g2 = TorusGrid::new(2, 32).unwrap();
        assert_eq!(g2.node_count(), 1024);
        assert_abs_diff_eq!(g2.volume(), 4.0);
        assert!(matches!(
            TorusGrid::new(3, 16),
            Err(GridError::UnsupportedDimension(3))
        ));
        assert!(matches!(
            TorusGrid::new(1, 15),
            Err(GridError::InvalidResolution(15))
        ));
        assert!(matches!(
            TorusGrid::new(1, 4),
            Err(GridError::InvalidResolution(4))
        ));
    }

    #[test]
    fn node_coordinates() {
        let g = grid1(8);
        assert_abs_diff_eq!(g.coords(0)[0], -1.0);
        assert_abs_diff_eq!(g.coords(4)[0], 0.0);
        let g2 = TorusGrid::new(2, 8).unwrap();
        let c = g2.coords(8 + 2); // row 1, col 2
        assert_abs_diff_eq!(c[0], -0.75);
        assert_abs_diff_eq!(c[1], -0.5);
    }

    #[test]
    fn derivative_of_single_mode() {
        let g = grid1(32);
        let f = ScalarField::from_fn(g, |x| (PI * x[0]).sin());
        let df = spectral_derivative(&f, 0, 1);
        let expect = ScalarField::from_fn(g, |x| PI * (PI * x[0]).cos());
        for (a, b) in df.values().iter().zip(expect.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let g = grid1(16);
        let f = ScalarField::constant(g, 3.25);
        assert!(spectral_derivative(&f, 0, 1).max_abs() < 1e-13);
        assert!(spectral_derivative(&f, 0, 2).max_abs() < 1e-13);
    }

    #[test]
    fn derivative_matches_central_differences_on_refined_grid() {
        // finite-difference oracle: sample the analytic polynomial on an
        // 8x refined grid and difference there
        let n = 24;
        let g = grid1(n);
        let deg = (n / 3) as i64;
        for seed in 1..4u64 {
            let f = trig_poly(g, deg, seed);
            let refine = 8;
            let gf = grid1(n * refine);
            let fine = trig_poly(gf, deg, seed);
            let h = gf.spacing();
            let df = spectral_derivative(&f, 0, 1);
            let m = gf.node_count();
            for i in 0..n {
                let j = i * refine;
                let fd = (fine.values()[(j + 1) % m] - fine.values()[(j + m - 1) % m]) / (2.0 * h);
                // central differences are O(h^2) on the refined spacing
                let tol = 60.0 * h * h * (deg as f64).powi(3).max(1.0);
                assert!(
                    (df.values()[i] - fd).abs() < tol,
                    "node {i}: spectral {} vs fd {}",
                    df.values()[i],
                    fd
                );
            }
        }
    }

    #[test]
    fn second_derivative_composes() {
        let g = grid1(48);
        let f = trig_poly(g, g.dealias_cutoff(), 7);
        let twice = spectral_derivative(&spectral_derivative(&f, 0, 1), 0, 1);
        let once = spectral_derivative(&f, 0, 2);
        let scale = once.max_abs().max(1e-300);
        for (a, b) in twice.values().iter().zip(once.values()) {
            assert!((a - b).abs() / scale < 1e-10);
        }
    }

    #[test]
    fn hyperviscous_single_modes() {
        let g = grid1(32);
        let u = VectorField::from_fn(g, |x, _| (PI * x[0]).sin());
        let out = hyperviscous_term(&u, 1, 1e-3);
        let expect = ScalarField::from_fn(g, |x| -1e-3 * PI.powi(4) * (PI * x[0]).sin());
        for (a, b) in out.component(0).iter().zip(expect.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }

        let c = VectorField::from_fn(g, |_, _| 0.7);
        assert!(hyperviscous_term(&c, 1, 1.0).max_abs() < 1e-12);

        let u2 = VectorField::from_fn(g, |x, _| (2.0 * PI * x[0]).sin());
        let out2 = hyperviscous_term(&u2, 2, 1.0);
        let factor = (4.0 * PI * PI).powi(4);
        let expect2 = ScalarField::from_fn(g, |x| -factor * (2.0 * PI * x[0]).sin());
        for (a, b) in out2.component(0).iter().zip(expect2.values()) {
            assert!((a - b).abs() < 1e-9 * factor);
        }
    }

    #[test]
    fn integrate_examples() {
        let g = grid1(16);
        assert_abs_diff_eq!(integrate(&ScalarField::constant(g, 1.0)), 2.0);
        let s = ScalarField::from_fn(g, |x| (PI * x[0]).sin());
        assert!(integrate(&s).abs() < 1e-14);
    }

    #[test]
    fn integrate_matches_dense_quadrature() {
        // dense quadrature oracle: trapezoid on a 512x refined sampling of
        // the analytic polynomial
        let g = grid1(24);
        for seed in 11..14u64 {
            let f = trig_poly(g, 8, seed);
            let fine = 512 * 24;
            let gfine = grid1(fine);
            let dense = trig_poly(gfine, 8, seed);
            let oracle = dense.values().iter().sum::<f64>() / fine as f64 * 2.0;
            assert_abs_diff_eq!(integrate(&f), oracle, epsilon = 1e-12);
        }
    }

    #[test]
    fn negative_sobolev_norm_examples() {
        let g = grid1(32);
        assert_abs_diff_eq!(negative_sobolev_norm(&ScalarField::zero(g), 2), 0.0);
        let c = ScalarField::constant(g, -1.5);
        assert_abs_diff_eq!(
            negative_sobolev_norm(&c, 2),
            1.5 * 2.0f64.sqrt(),
            epsilon = 1e-12
        );
        // single-mode oracle: ||sin||_{L2} = 1, weight (1+pi^2)^{-2}
        let s = ScalarField::from_fn(g, |x| (PI * x[0]).sin());
        assert_abs_diff_eq!(
            negative_sobolev_norm(&s, 2),
            1.0 / (1.0 + PI * PI),
            epsilon = 1e-12
        );
    }

    #[test]
    fn negative_sobolev_monotone_in_ell() {
        let g = grid1(32);
        let f = trig_poly(g, 9, 3);
        let norms: Vec<f64> = (2..6).map(|ell| negative_sobolev_norm(&f, ell)).collect();
        for w in norms.windows(2) {
            assert!(w[1] <= w[0] + 1e-14);
        }
        assert!(norms[0] <= l2_norm(&f) + 1e-14);
    }

    #[test]
    fn dealias_clears_high_band_only() {
        let g = grid1(24);
        let keep = ScalarField::from_fn(g, |x| (PI * 3.0 * x[0]).cos());
        let kill = ScalarField::from_fn(g, |x| (PI * 11.0 * x[0]).cos());
        let mixed = keep.zip_map(&kill, |a, b| a + b);
        let filtered = dealias(&mixed);
        for (a, b) in filtered.values().iter().zip(keep.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn low_pass_identity_at_zero_width() {
        let g = grid1(16);
        let f = trig_poly(g, 5, 9);
        let same = low_pass(&f, 0.0);
        assert_eq!(f.values(), same.values());
        // positive width contracts toward the mean
        let smoothed = low_pass(&f, 0.3);
        let mean = integrate(&f) / g.volume();
        let dev = |field: &ScalarField| {
            field
                .values()
                .iter()
                .map(|v| (v - mean).abs())
                .fold(0.0f64, f64::max)
        };
        assert!(dev(&smoothed) < dev(&f) + 1e-12);
        assert_abs_diff_eq!(integrate(&smoothed), integrate(&f), epsilon = 1e-12);
    }

    #[test]
    fn two_dimensional_derivative_and_integral() {
        let g = TorusGrid::new(2, 16).unwrap();
        let f = ScalarField::from_fn(g, |x| (PI * x[0]).sin() * (2.0 * PI * x[1]).cos());
        let dy = spectral_derivative(&f, 1, 1);
        let expect =
            ScalarField::from_fn(g, |x| -2.0 * PI * (PI * x[0]).sin() * (2.0 * PI * x[1]).sin());
        for (a, b) in dy.values().iter().zip(expect.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-11);
        }
        assert!(integrate(&f).abs() < 1e-13);
        assert_abs_diff_eq!(
            integrate(&ScalarField::constant(g, 2.5)),
            10.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn two_dimensional_spectral_norms_and_hyperviscosity() {
        let g = TorusGrid::new(2, 16).unwrap();
        // constant on the 2-torus: only the zero mode, weight one
        let c = ScalarField::constant(g, -0.8);
        assert_abs_diff_eq!(negative_sobolev_norm(&c, 3), 0.8 * 2.0, epsilon = 1e-12);

        // single product mode sin(pi x) cos(pi y): |k|^2 = 2
        let u = VectorField::from_fn(g, |x, axis| {
            if axis == 0 {
                (PI * x[0]).sin() * (PI * x[1]).cos()
            } else {
                0.0
            }
        });
        let out = hyperviscous_term(&u, 1, 1.0);
        let factor = (2.0 * PI * PI).powi(2);
        let expect = ScalarField::from_fn(g, |x| -factor * (PI * x[0]).sin() * (PI * x[1]).cos());
        for (a, b) in out.component(0).iter().zip(expect.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
        assert!(out.component(1).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn field_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = TorusGrid::new(2, 8).unwrap();
        let f = trig_poly(g, 2, 5);
        let path = dir.path().join("rho.csv");
        write_scalar_csv(&f, &path).unwrap();
        let back = read_scalar_csv(&path).unwrap();
        assert_eq!(f.values(), back.values());

        let u = VectorField::from_fn(g, |x, a| if a == 0 { x[0] * x[1] } else { x[1] });
        let vpath = dir.path().join("mom.csv");
        write_vector_csv(&u, &vpath).unwrap();
        let uback = read_vector_csv(&vpath).unwrap();
        assert_eq!(u.component(0), uback.component(0));
        assert_eq!(u.component(1), uback.component(1));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn derivative_integrates_to_zero(seed in 1u64..500) {
            let g = grid1(32);
            let f = trig_poly(g, g.dealias_cutoff(), seed);
            let df = spectral_derivative(&f, 0, 1);
            prop_assert!(integrate(&df).abs() < 1e-12 * (1.0 + f.max_abs()));
        }

        #[test]
        fn hyperviscous_is_linear(seed in 1u64..500, alpha in -2.0f64..2.0, beta in -2.0f64..2.0) {
            let g = grid1(16);
            let u = VectorField::from_fn(g, |x, _| (PI * x[0]).sin() + 0.3 * (2.0 * PI * x[0]).cos());
            let v = {
                let s = trig_poly(g, 4, seed);
                VectorField::from_components(vec![s]).unwrap()
            };
            let mut combo = u.clone();
            combo.scale(alpha);
            combo.axpy(beta, &v);
            let lhs = hyperviscous_term(&combo, 1, 1e-2);
            let mut rhs = hyperviscous_term(&u, 1, 1e-2);
            rhs.scale(alpha);
            rhs.axpy(beta, &hyperviscous_term(&v, 1, 1e-2));
            let scale = lhs.max_abs().max(rhs.max_abs()).max(1.0);
            for (a, b) in lhs.component(0).iter().zip(rhs.component(0)) {
                prop_assert!((a - b).abs() < 1e-11 * scale);
            }
        }

        #[test]
        fn negative_sobolev_below_l2(seed in 1u64..500) {
            let g = grid1(16);
            let f = trig_poly(g, 5, seed);
            prop_assert!(negative_sobolev_norm(&f, 2) <= l2_norm(&f) + 1e-13);
        }
    }
}
