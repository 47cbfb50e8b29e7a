//! Convolution kernels: cell-averaged discretization (with the Dirac measure
//! as an exact special case) and periodic discrete convolution.
//!
//! A discrete kernel holds one value per cell offset. Offset `m` is averaged
//! over the interval of width `dx` centered at `m*dx` (wrapped to
//! `[-L/2, L/2)`), so that `dx * sum_n rho[(i-n) mod N] * u[n]` is the exact
//! finite volume image of the convolution at cell `i`. The local model is
//! recovered with the Dirac kernel, for which the convolution is the
//! identity by construction.

use crate::error::{Error, Result};
use crate::fft::{Fft1D, Fft2D};
use crate::grid::{PeriodicGrid1D, PeriodicGrid2D};
use rustfft::num_complex::Complex64;
use std::sync::Arc;

/// Cell count above which convolutions switch from direct summation to the
/// Fourier path. Both paths agree to roundoff; see the module tests.
const DIRECT_CONV_MAX: usize = 256;

/// Largest number of retained Fourier modes for which a kernel is given a
/// low-rank circulant factorization (used by the direct Newton solver).
const LOW_RANK_MAX_MODES: usize = 4;

/// Kernel described as a function, before discretization on a grid.
#[derive(Clone)]
pub enum KernelSpec {
    /// Dirac measure at the origin; convolution is the identity.
    Dirac,
    /// `delta^-1 * chi_[-delta/2, delta/2]`, an approximation of a Dirac.
    Indicator { delta: f64 },
    /// `cos(2*pi*x/L) + 1`; smooth, non-negative, integral `L`.
    SmoothCos,
    /// Piecewise-quadratic predator detection kernel: vanishes at the
    /// origin, peaks at `|x| = radius`, supported on `[-2r, 2r]`,
    /// normalized to unit integral.
    Hunting { radius: f64 },
    /// Indicator of the annulus `r2_inner < x^2 + y^2 < r2_outer`,
    /// normalized to unit integral; with `quadrant` set the support is
    /// restricted to `x >= 0, y >= 0`, which breaks evenness.
    Annulus { r2_inner: f64, r2_outer: f64, quadrant: bool },
    /// Arbitrary non-negative 1D function, discretized by Gauss quadrature.
    Custom1D(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl KernelSpec {
    /// Symmetric annulus with the standard squared radii 3/8 and 1/2.
    pub fn annulus_symmetric() -> Self {
        KernelSpec::Annulus { r2_inner: 0.375, r2_outer: 0.5, quadrant: false }
    }

    /// Upper-right-quadrant restriction of [`KernelSpec::annulus_symmetric`].
    pub fn annulus_quadrant() -> Self {
        KernelSpec::Annulus { r2_inner: 0.375, r2_outer: 0.5, quadrant: true }
    }

    /// Sup norm of the kernel Laplacian, needed by the maximum-principle
    /// time step restriction. Analytic for `SmoothCos`; estimated by second
    /// differences on 10^4 sample points for `Custom1D`. Kernels that are
    /// not twice continuously differentiable are rejected.
    pub fn laplacian_sup(&self, length: f64) -> Result<f64> {
        match self {
            KernelSpec::SmoothCos => {
                let nu = 2.0 * std::f64::consts::PI / length;
                Ok(nu * nu)
            }
            KernelSpec::Custom1D(f) => {
                let samples = 10_000usize;
                let h = length / samples as f64;
                let wrap = |x: f64| {
                    let mut y = (x + 0.5 * length) % length;
                    if y < 0.0 {
                        y += length;
                    }
                    y - 0.5 * length
                };
                let mut sup: f64 = 0.0;
                for i in 0..samples {
                    let x = -0.5 * length + i as f64 * h;
                    let d2 = (f(wrap(x + h)) - 2.0 * f(x) + f(wrap(x - h))) / (h * h);
                    sup = sup.max(d2.abs());
                }
                Ok(sup)
            }
            _ => Err(Error::BoundInapplicable(
                "kernel Laplacian bound requires a twice continuously differentiable kernel"
                    .into(),
            )),
        }
    }
}

impl std::fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KernelSpec::Dirac => write!(f, "Dirac"),
            KernelSpec::Indicator { delta } => write!(f, "Indicator(delta = {delta})"),
            KernelSpec::SmoothCos => write!(f, "SmoothCos"),
            KernelSpec::Hunting { radius } => write!(f, "Hunting(r = {radius})"),
            KernelSpec::Annulus { r2_inner, r2_outer, quadrant } => {
                write!(f, "Annulus({r2_inner}, {r2_outer}, quadrant = {quadrant})")
            }
            KernelSpec::Custom1D(_) => write!(f, "Custom1D(<fn>)"),
        }
    }
}

/// Grid shape a discrete kernel was built on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    One { n: usize, dx: f64, length: f64 },
    Two { nx: usize, ny: usize, dx: f64, dy: f64 },
}

impl Shape {
    pub fn cells(&self) -> usize {
        match *self {
            Shape::One { n, .. } => n,
            Shape::Two { nx, ny, .. } => nx * ny,
        }
    }

    /// Cell measure: `dx` in 1D, `dx*dy` in 2D.
    pub fn measure(&self) -> f64 {
        match *self {
            Shape::One { dx, .. } => dx,
            Shape::Two { dx, dy, .. } => dx * dy,
        }
    }
}

/// Rank-limited factorization of a circulant convolution matrix
/// `C[m][n] = measure * rho[(m-n) mod N]`, written as `sum_r left_r ⊗ right_r`.
/// Available when the kernel has very few active Fourier modes.
#[derive(Debug, Clone)]
pub struct LowRankCirculant {
    pub left: Vec<Vec<f64>>,
    pub right: Vec<Vec<f64>>,
}

impl LowRankCirculant {
    pub fn rank(&self) -> usize {
        self.left.len()
    }
}

/// Cell-averaged kernel on a periodic grid, with cached spectral data.
#[derive(Debug, Clone)]
pub struct DiscreteKernel {
    pub values: Vec<f64>,
    pub shape: Shape,
    pub is_dirac: bool,
    support: Vec<usize>,
    spectrum: Option<Vec<Complex64>>,
    low_rank: Option<LowRankCirculant>,
    fft1: Option<Fft1D>,
    fft2: Option<Fft2D>,
}

impl DiscreteKernel {
    /// Builds a kernel from raw per-offset values, computing the support
    /// list, spectrum and (in 1D) a low-rank factorization when one exists.
    pub fn from_values(values: Vec<f64>, shape: Shape, is_dirac: bool) -> Result<Self> {
        if values.len() != shape.cells() {
            return Err(Error::InvalidConfig(format!(
                "kernel value count {} does not match grid with {} cells",
                values.len(),
                shape.cells()
            )));
        }
        let mut values = values;
        for v in values.iter_mut() {
            if *v < 0.0 {
                if *v < -1e-12 {
                    return Err(Error::Domain(format!("kernel value {v} is negative")));
                }
                *v = 0.0; // clip quadrature noise
            }
        }
        let support: Vec<usize> =
            values.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(i, _)| i).collect();
        let mut kernel = DiscreteKernel {
            values,
            shape,
            is_dirac,
            support,
            spectrum: None,
            low_rank: None,
            fft1: None,
            fft2: None,
        };
        if !is_dirac {
            match shape {
                Shape::One { n, .. } => {
                    let fft = Fft1D::new(n);
                    let spec = fft.forward_real(&kernel.values);
                    kernel.low_rank = build_low_rank(&spec, shape);
                    kernel.spectrum = Some(spec);
                    kernel.fft1 = Some(fft);
                }
                Shape::Two { nx, ny, .. } => {
                    let fft = Fft2D::new(nx, ny);
                    kernel.spectrum = Some(fft.forward_real(&kernel.values));
                    kernel.fft2 = Some(fft);
                }
            }
        }
        Ok(kernel)
    }

    /// Discrete mass `measure * sum(values)`; 1 for normalized kernels.
    pub fn mass(&self) -> f64 {
        self.shape.measure() * self.values.iter().sum::<f64>()
    }

    /// Discrete L1 norm of the kernel (equal to [`Self::mass`] for the
    /// non-negative kernels built here).
    pub fn l1_norm(&self) -> f64 {
        self.shape.measure() * self.values.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// Low-rank circulant factorization if the kernel admits one.
    pub fn low_rank(&self) -> Option<&LowRankCirculant> {
        self.low_rank.as_ref()
    }

    /// Is the kernel even, `rho[i] == rho[-i]`, up to roundoff?
    pub fn is_even(&self) -> bool {
        let tol = 1e-12 * self.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        match self.shape {
            Shape::One { n, .. } => (0..n).all(|i| {
                let j = (n - i) % n;
                (self.values[i] - self.values[j]).abs() <= tol
            }),
            Shape::Two { nx, ny, .. } => (0..nx * ny).all(|idx| {
                let (i, j) = (idx % nx, idx / nx);
                let r = ((nx - i) % nx) + nx * ((ny - j) % ny);
                (self.values[idx] - self.values[r]).abs() <= tol
            }),
        }
    }

    /// Kernel with reversed argument, `rho_refl[i] = rho[-i]`.
    pub fn reflected(&self) -> Self {
        let vals = match self.shape {
            Shape::One { n, .. } => {
                (0..n).map(|i| self.values[(n - i) % n]).collect::<Vec<f64>>()
            }
            Shape::Two { nx, ny, .. } => (0..nx * ny)
                .map(|idx| {
                    let (i, j) = (idx % nx, idx / nx);
                    self.values[((nx - i) % nx) + nx * ((ny - j) % ny)]
                })
                .collect(),
        };
        DiscreteKernel::from_values(vals, self.shape, self.is_dirac)
            .expect("reflection preserves validity")
    }

    fn check_same_grid(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.shape.cells() {
            return Err(Error::InvalidConfig(format!(
                "convolution input length {} does not match kernel grid with {} cells",
                u.len(),
                self.shape.cells()
            )));
        }
        Ok(())
    }

    /// Periodic discrete convolution `out_i = measure * sum_n rho[i-n] u[n]`.
    /// Exact identity for the Dirac kernel.
    pub fn convolve(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_same_grid(u)?;
        if self.is_dirac {
            return Ok(u.to_vec());
        }
        let cells = self.shape.cells();
        if cells <= DIRECT_CONV_MAX {
            Ok(self.convolve_direct(u))
        } else {
            Ok(self.convolve_fft(u))
        }
    }

    /// Direct O(cells * |support|) summation path.
    pub fn convolve_direct(&self, u: &[f64]) -> Vec<f64> {
        if self.is_dirac {
            return u.to_vec();
        }
        let measure = self.shape.measure();
        match self.shape {
            Shape::One { n, .. } => {
                let mut out = vec![0.0; n];
                for (i, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for &m in &self.support {
                        // n-index such that i - n = m
                        let src = (i + n - m) % n;
                        acc += self.values[m] * u[src];
                    }
                    *o = acc * measure;
                }
                out
            }
            Shape::Two { nx, ny, .. } => {
                let mut out = vec![0.0; nx * ny];
                for (idx, o) in out.iter_mut().enumerate() {
                    let (i, j) = (idx % nx, idx / nx);
                    let mut acc = 0.0;
                    for &m in &self.support {
                        let (mi, mj) = (m % nx, m / nx);
                        let si = (i + nx - mi) % nx;
                        let sj = (j + ny - mj) % ny;
                        acc += self.values[m] * u[si + nx * sj];
                    }
                    *o = acc * measure;
                }
                out
            }
        }
    }

    /// Fourier path: multiply spectra and transform back.
    pub fn convolve_fft(&self, u: &[f64]) -> Vec<f64> {
        if self.is_dirac {
            return u.to_vec();
        }
        let measure = self.shape.measure();
        let spec = self.spectrum.as_ref().expect("non-Dirac kernel has spectrum");
        let mut out = match self.shape {
            Shape::One { .. } => {
                let fft = self.fft1.as_ref().unwrap();
                let mut hat = fft.forward_real(u);
                for (h, s) in hat.iter_mut().zip(spec.iter()) {
                    *h *= s;
                }
                fft.inverse_to_real(hat)
            }
            Shape::Two { .. } => {
                let fft = self.fft2.as_ref().unwrap();
                let mut hat = fft.forward_real(u);
                for (h, s) in hat.iter_mut().zip(spec.iter()) {
                    *h *= s;
                }
                fft.inverse_to_real(hat)
            }
        };
        for o in out.iter_mut() {
            *o *= measure;
        }
        out
    }
}

fn build_low_rank(spectrum: &[Complex64], shape: Shape) -> Option<LowRankCirculant> {
    let Shape::One { n, dx, .. } = shape else { return None };
    let scale: f64 = spectrum.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Some(LowRankCirculant { left: vec![], right: vec![] });
    }
    let tol = 1e-13 * scale;
    let mut modes = Vec::new();
    for k in 0..=n / 2 {
        let mag = spectrum[k].norm().max(spectrum[(n - k) % n].norm());
        if mag > tol {
            modes.push(k);
            if modes.len() > LOW_RANK_MAX_MODES {
                return None;
            }
        }
    }
    // Matrix entries carry the convolution weight dx.
    let mut left: Vec<Vec<f64>> = Vec::new();
    let mut right: Vec<Vec<f64>> = Vec::new();
    let inv_n = 1.0 / n as f64;
    for &k in &modes {
        let theta = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
        let hat = spectrum[k] * dx;
        let (a, b) = (hat.re, -hat.im);
        if k == 0 || (n % 2 == 0 && k == n / 2) {
            // real self-conjugate mode, rank one
            let phi: Vec<f64> = (0..n).map(|m| (theta * m as f64).cos()).collect();
            let psi: Vec<f64> = phi.iter().map(|c| a * inv_n * c).collect();
            left.push(phi);
            right.push(psi);
        } else {
            let cosv: Vec<f64> = (0..n).map(|m| (theta * m as f64).cos()).collect();
            let sinv: Vec<f64> = (0..n).map(|m| (theta * m as f64).sin()).collect();
            let psi_c: Vec<f64> = (0..n)
                .map(|m| 2.0 * inv_n * (a * cosv[m] - b * sinv[m]))
                .collect();
            let psi_s: Vec<f64> = (0..n)
                .map(|m| 2.0 * inv_n * (a * sinv[m] + b * cosv[m]))
                .collect();
            left.push(cosv);
            right.push(psi_c);
            left.push(sinv);
            right.push(psi_s);
        }
    }
    Some(LowRankCirculant { left, right })
}

/// Wraps `x` to the fundamental window `[-L/2, L/2)`.
fn wrap_centered(x: f64, length: f64) -> f64 {
    let mut y = (x + 0.5 * length) % length;
    if y < 0.0 {
        y += length;
    }
    y - 0.5 * length
}

/// Integral of the indicator kernel `delta^-1 chi_[-d/2, d/2]` over `[a, b]`.
fn indicator_integral(a: f64, b: f64, delta: f64) -> f64 {
    let lo = a.max(-0.5 * delta);
    let hi = b.min(0.5 * delta);
    (hi - lo).max(0.0) / delta
}

/// Integral of the unnormalized hunting kernel over `[a, b]`: the pieces are
/// `(x+2r)^2` on `[-2r, -r]`, `x^2` on `[-r, r]`, `(x-2r)^2` on `[r, 2r]`.
fn hunting_integral(a: f64, b: f64, r: f64) -> f64 {
    let cube = |x: f64| x * x * x;
    let mut total = 0.0;
    let (lo, hi) = (a.max(-2.0 * r), b.min(-r));
    if hi > lo {
        total += (cube(hi + 2.0 * r) - cube(lo + 2.0 * r)) / 3.0;
    }
    let (lo, hi) = (a.max(-r), b.min(r));
    if hi > lo {
        total += (cube(hi) - cube(lo)) / 3.0;
    }
    let (lo, hi) = (a.max(r), b.min(2.0 * r));
    if hi > lo {
        total += (cube(hi - 2.0 * r) - cube(lo - 2.0 * r)) / 3.0;
    }
    total
}

/// Exact cell averages for a compactly supported kernel given its integral
/// function, accounting for the periodic images of cells near the wrap point.
fn cell_averages_from_integral<F: Fn(f64, f64) -> f64>(
    grid: &PeriodicGrid1D,
    integral: F,
) -> Vec<f64> {
    let (n, dx, length) = (grid.n_cells, grid.dx, grid.length);
    (0..n)
        .map(|m| {
            let x = wrap_centered(m as f64 * dx, length);
            let (a, b) = (x - 0.5 * dx, x + 0.5 * dx);
            let mut acc = 0.0;
            for img in [-length, 0.0, length] {
                acc += integral(a + img, b + img);
            }
            acc / dx
        })
        .collect()
}

const GAUSS10_NODES: [f64; 5] = [
    0.148_874_338_981_631_2,
    0.433_395_394_129_247_2,
    0.679_409_568_299_024_4,
    0.865_063_366_688_984_5,
    0.973_906_528_517_171_7,
];
const GAUSS10_WEIGHTS: [f64; 5] = [
    0.295_524_224_714_752_9,
    0.269_266_719_309_996_3,
    0.219_086_362_515_982_0,
    0.149_451_349_150_580_6,
    0.066_671_344_308_688_1,
];

/// 10-point Gauss-Legendre quadrature of `f` over `[a, b]`.
pub(crate) fn gauss10<F: Fn(f64) -> f64>(a: f64, b: f64, f: F) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (t, w) in GAUSS10_NODES.iter().zip(GAUSS10_WEIGHTS.iter()) {
        acc += w * (f(mid + half * t) + f(mid - half * t));
    }
    acc * half
}

/// Discretizes a 1D kernel spec on a periodic grid by exact or high-order
/// cell averaging.
pub fn discretize(spec: &KernelSpec, grid: &PeriodicGrid1D) -> Result<DiscreteKernel> {
    let shape = Shape::One { n: grid.n_cells, dx: grid.dx, length: grid.length };
    match spec {
        KernelSpec::Dirac => {
            let mut values = vec![0.0; grid.n_cells];
            values[0] = 1.0 / grid.dx;
            DiscreteKernel::from_values(values, shape, true)
        }
        KernelSpec::Indicator { delta } => {
            if !(*delta > 0.0) || *delta > grid.length * (1.0 + 1e-12) {
                return Err(Error::InvalidConfig(format!(
                    "indicator width {delta} must lie in (0, L = {}]",
                    grid.length
                )));
            }
            let d = *delta;
            let values = cell_averages_from_integral(grid, |a, b| indicator_integral(a, b, d));
            DiscreteKernel::from_values(values, shape, false)
        }
        KernelSpec::SmoothCos => {
            let nu = 2.0 * std::f64::consts::PI / grid.length;
            // exact average of cos over a cell: cos at the offset times a sinc factor
            let s = (0.5 * nu * grid.dx).sin() / (0.5 * nu * grid.dx);
            let values = (0..grid.n_cells)
                .map(|m| 1.0 + s * (nu * (m as f64) * grid.dx).cos())
                .collect();
            DiscreteKernel::from_values(values, shape, false)
        }
        KernelSpec::Hunting { radius } => {
            if !(*radius > 0.0) || 4.0 * radius > grid.length * (1.0 + 1e-12) {
                return Err(Error::InvalidConfig(format!(
                    "hunting kernel support [-2r, 2r] with r = {radius} exceeds the domain"
                )));
            }
            let r = *radius;
            let c = 3.0 / (4.0 * r * r * r); // unit-integral scaling of the quadratic pieces
            let mut values: Vec<f64> =
                cell_averages_from_integral(grid, |a, b| c * hunting_integral(a, b, r));
            let mass: f64 = values.iter().sum::<f64>() * grid.dx;
            for v in values.iter_mut() {
                *v /= mass;
            }
            DiscreteKernel::from_values(values, shape, false)
        }
        KernelSpec::Annulus { .. } => Err(Error::InvalidConfig(
            "annulus kernels are two-dimensional; discretize on a 2D grid".into(),
        )),
        KernelSpec::Custom1D(f) => {
            let values = (0..grid.n_cells)
                .map(|m| {
                    let x = wrap_centered(m as f64 * grid.dx, grid.length);
                    gauss10(x - 0.5 * grid.dx, x + 0.5 * grid.dx, |y| {
                        f(wrap_centered(y, grid.length))
                    }) / grid.dx
                })
                .collect();
            DiscreteKernel::from_values(values, shape, false)
        }
    }
}

/// Discretizes a kernel spec on a periodic 2D grid. Supports the Dirac
/// measure and the annulus family.
pub fn discretize_2d(spec: &KernelSpec, grid: &PeriodicGrid2D) -> Result<DiscreteKernel> {
    let shape = Shape::Two { nx: grid.nx, ny: grid.ny, dx: grid.dx, dy: grid.dy };
    match spec {
        KernelSpec::Dirac => {
            let mut values = vec![0.0; grid.nx * grid.ny];
            values[0] = 1.0 / (grid.dx * grid.dy);
            DiscreteKernel::from_values(values, shape, true)
        }
        KernelSpec::Annulus { r2_inner, r2_outer, quadrant } => {
            if !(*r2_outer > *r2_inner) || *r2_inner < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "annulus needs 0 <= r2_inner < r2_outer, got {r2_inner}, {r2_outer}"
                )));
            }
            if 2.0 * r2_outer.sqrt() > grid.lx.min(grid.ly) * (1.0 + 1e-12) {
                return Err(Error::InvalidConfig(
                    "annulus support diameter exceeds the domain".into(),
                ));
            }
            let mut values =
                annulus_cell_averages(grid, *r2_inner, *r2_outer, *quadrant);
            let mass: f64 = values.iter().sum::<f64>() * grid.dx * grid.dy;
            if mass <= 0.0 {
                return Err(Error::InvalidConfig(
                    "annulus support does not intersect the grid".into(),
                ));
            }
            for v in values.iter_mut() {
                *v /= mass;
            }
            DiscreteKernel::from_values(values, shape, false)
        }
        _ => Err(Error::InvalidConfig(format!(
            "kernel {spec:?} is one-dimensional; discretize on a 1D grid"
        ))),
    }
}

fn annulus_cell_averages(
    grid: &PeriodicGrid2D,
    r2i: f64,
    r2o: f64,
    quadrant: bool,
) -> Vec<f64> {
    let sub = 32usize; // midpoint subsamples per axis for boundary cells
    let inside = |x: f64, y: f64| -> bool {
        if quadrant && (x < 0.0 || y < 0.0) {
            return false;
        }
        let r2 = x * x + y * y;
        r2 > r2i && r2 < r2o
    };
    let axis_extremes = |a: f64, b: f64| -> (f64, f64) {
        let lo = if a <= 0.0 && 0.0 <= b { 0.0 } else { a.abs().min(b.abs()) };
        (lo, a.abs().max(b.abs()))
    };
    let mut values = vec![0.0; grid.nx * grid.ny];
    for j in 0..grid.ny {
        let yc = wrap_centered(j as f64 * grid.dy, grid.ly);
        let (ya, yb) = (yc - 0.5 * grid.dy, yc + 0.5 * grid.dy);
        for i in 0..grid.nx {
            let xc = wrap_centered(i as f64 * grid.dx, grid.lx);
            let (xa, xb) = (xc - 0.5 * grid.dx, xc + 0.5 * grid.dx);
            let (xmin, xmax) = axis_extremes(xa, xb);
            let (ymin, ymax) = axis_extremes(ya, yb);
            let r2min = xmin * xmin + ymin * ymin;
            let r2max = xmax * xmax + ymax * ymax;
            let quadrant_clean = !quadrant || xa >= 0.0 && ya >= 0.0;
            let value = if r2min >= r2o || r2max <= r2i || (quadrant && (xb <= 0.0 || yb <= 0.0))
            {
                0.0
            } else if quadrant_clean && r2min >= r2i && r2max <= r2o {
                1.0
            } else {
                // straddles a boundary: midpoint subsampling
                let mut hits = 0usize;
                for sj in 0..sub {
                    let y = ya + (sj as f64 + 0.5) * grid.dy / sub as f64;
                    for si in 0..sub {
                        let x = xa + (si as f64 + 0.5) * grid.dx / sub as f64;
                        if inside(x, y) {
                            hits += 1;
                        }
                    }
                }
                hits as f64 / (sub * sub) as f64
            };
            values[i + grid.nx * j] = value;
        }
    }
    values
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_periodic_1d, make_periodic_2d};

    #[test]
    fn indicator_two_cells_wide() {
        // exact overlap integrals of delta^-1 chi over each cell
        let g = make_periodic_1d(8, 2.0).unwrap();
        let k = discretize(&KernelSpec::Indicator { delta: 2.0 * g.dx }, &g).unwrap();
        assert!((k.values[0] - 1.0 / (2.0 * g.dx)).abs() < 1e-14);
        assert!((k.values[1] - 1.0 / (4.0 * g.dx)).abs() < 1e-14);
        assert!((k.values[7] - 1.0 / (4.0 * g.dx)).abs() < 1e-14);
        assert!(k.values[2..7].iter().all(|&v| v == 0.0));
        assert!((k.mass() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn dirac_representation() {
        let g = make_periodic_1d(8, 1.0).unwrap();
        let k = discretize(&KernelSpec::Dirac, &g).unwrap();
        assert_eq!(k.values[0], 1.0 / g.dx);
        assert!(k.values[1..].iter().all(|&v| v == 0.0));
        let u: Vec<f64> = (0..8).map(|i| i as f64 * 0.5 - 1.0).collect();
        assert_eq!(k.convolve(&u).unwrap(), u);
    }

    #[test]
    fn smooth_cos_mass_is_domain_length() {
        // closed-form integral of cos(2 pi x / L) + 1 over one period is L
        let g = make_periodic_1d(64, 25.0).unwrap();
        let k = discretize(&KernelSpec::SmoothCos, &g).unwrap();
        assert!((k.mass() - 25.0).abs() < 1e-12);
        assert!(k.is_even());
        assert!(k.low_rank().is_some());
        assert_eq!(k.low_rank().unwrap().rank(), 3);
    }

    #[test]
    fn hunting_kernel_normalized_even_and_vanishing_at_origin() {
        let g = make_periodic_1d(500, 25.0).unwrap();
        let r = 10.0 * 25.0 / 49.0;
        let k = discretize(&KernelSpec::Hunting { radius: r }, &g).unwrap();
        assert!((k.mass() - 1.0).abs() < 1e-13);
        assert!(k.is_even());
        // the origin cell average is tiny but nonzero (quadratic dip)
        assert!(k.values[0] < k.values[(r / g.dx).round() as usize] * 1e-2);
        assert!(discretize(&KernelSpec::Hunting { radius: 7.0 }, &g).is_err());
    }

    #[test]
    fn support_preconditions() {
        let g = make_periodic_1d(16, 1.0).unwrap();
        assert!(discretize(&KernelSpec::Indicator { delta: 1.5 }, &g).is_err());
        assert!(discretize(&KernelSpec::Indicator { delta: 0.0 }, &g).is_err());
    }

    #[test]
    fn convolution_matches_hand_example() {
        // Indicator(2 dx) against a unit impulse
        let g = make_periodic_1d(4, 1.0).unwrap();
        let k = discretize(&KernelSpec::Indicator { delta: 2.0 * g.dx }, &g).unwrap();
        let out = k.convolve(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        let expect = [0.5, 0.25, 0.0, 0.25];
        for (o, e) in out.iter().zip(expect.iter()) {
            assert!((o - e).abs() < 1e-14, "{out:?}");
        }
    }

    #[test]
    fn normalized_kernel_preserves_constants() {
        let g = make_periodic_1d(32, 3.0).unwrap();
        for spec in [
            KernelSpec::Indicator { delta: 1.0 },
            KernelSpec::Hunting { radius: 0.7 },
        ] {
            let k = discretize(&spec, &g).unwrap();
            let out = k.convolve(&vec![2.5; 32]).unwrap();
            for o in out {
                assert!((o - 2.5).abs() < 1e-12, "{spec:?}");
            }
        }
    }

    #[test]
    fn convolve_is_linear_and_self_adjoint_for_even_kernels() {
        let g = make_periodic_1d(24, 2.0).unwrap();
        let k = discretize(&KernelSpec::Indicator { delta: 0.6 }, &g).unwrap();
        let u: Vec<f64> = (0..24).map(|i| ((i * 37) % 11) as f64 - 3.0).collect();
        let v: Vec<f64> = (0..24).map(|i| ((i * 23) % 7) as f64 + 0.5).collect();
        // linearity
        let lhs = k
            .convolve(&u.iter().zip(&v).map(|(a, b)| 2.0 * a - 0.5 * b).collect::<Vec<_>>())
            .unwrap();
        let ku = k.convolve(&u).unwrap();
        let kv = k.convolve(&v).unwrap();
        for i in 0..24 {
            assert!((lhs[i] - (2.0 * ku[i] - 0.5 * kv[i])).abs() < 1e-12);
        }
        // self-adjointness in the dx-weighted inner product
        let dot = |a: &[f64], b: &[f64]| -> f64 {
            a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * g.dx
        };
        assert!((dot(&ku, &v) - dot(&u, &kv)).abs() < 1e-12);
    }

    #[test]
    fn direct_and_fft_paths_agree() {
        let g = make_periodic_1d(300, 4.0).unwrap();
        let k = discretize(&KernelSpec::Indicator { delta: 1.3 }, &g).unwrap();
        let u: Vec<f64> = (0..300).map(|i| ((i * 7919) % 101) as f64 / 13.0).collect();
        let direct = k.convolve_direct(&u);
        let fast = k.convolve_fft(&u);
        let scale = direct.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in direct.iter().zip(fast.iter()) {
            assert!((a - b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn nonnegative_inputs_give_nonnegative_outputs() {
        let g = make_periodic_1d(40, 1.0).unwrap();
        let k = discretize(&KernelSpec::Hunting { radius: 0.2 }, &g).unwrap();
        let u: Vec<f64> = (0..40).map(|i| ((i * 13) % 5) as f64).collect();
        assert!(k.convolve(&u).unwrap().iter().all(|&v| v >= -1e-15));
    }

    #[test]
    fn low_rank_factors_reproduce_the_circulant() {
        let g = make_periodic_1d(32, 25.0).unwrap();
        let k = discretize(&KernelSpec::SmoothCos, &g).unwrap();
        let lr = k.low_rank().unwrap();
        for m in [0usize, 5, 20] {
            for n in 0..32 {
                let exact = g.dx * k.values[(m + 32 - n) % 32];
                let approx: f64 =
                    lr.left.iter().zip(&lr.right).map(|(l, r)| l[m] * r[n]).sum();
                assert!((exact - approx).abs() < 1e-12, "entry ({m},{n})");
            }
        }
    }

    #[test]
    fn annulus_normalized_and_symmetry_flags() {
        let g = make_periodic_2d(40, 30, 4.0, 3.0).unwrap();
        let sym = discretize_2d(&KernelSpec::annulus_symmetric(), &g).unwrap();
        assert!((sym.mass() - 1.0).abs() < 1e-12);
        assert!(sym.is_even());
        let quad = discretize_2d(&KernelSpec::annulus_quadrant(), &g).unwrap();
        assert!((quad.mass() - 1.0).abs() < 1e-12);
        assert!(!quad.is_even());
        // quadrant restriction: no mass at negative offsets
        let xneg = quad
            .values
            .iter()
            .enumerate()
            .filter(|(idx, _)| {
                let i = idx % 40;
                wrap_centered(i as f64 * g.dx, g.lx) < -0.5 * g.dx
            })
            .map(|(_, &v)| v)
            .sum::<f64>();
        assert_eq!(xneg, 0.0);
    }

    #[test]
    fn reflection_identity_for_even_kernels() {
        let g = make_periodic_1d(20, 5.0).unwrap();
        let k = discretize(&KernelSpec::Indicator { delta: 1.0 }, &g).unwrap();
        let r = k.reflected();
        for (a, b) in k.values.iter().zip(r.values.iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn grid_mismatch_rejected() {
        let g = make_periodic_1d(8, 1.0).unwrap();
        let k = discretize(&KernelSpec::Dirac, &g).unwrap();
        assert!(k.convolve(&[0.0; 9]).is_err());
    }
}
