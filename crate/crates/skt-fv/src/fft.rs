//! Thin wrappers around `rustfft` for real circular convolution in one and
//! two dimensions. Plans are created once and shared; all transforms are
//! unnormalized, so an fft/ifft round trip scales by the point count.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

#[derive(Clone)]
pub struct Fft1D {
    pub n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft1D {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft1D {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn forward_real(&self, data: &[f64]) -> Vec<Complex64> {
        debug_assert_eq!(data.len(), self.n);
        let mut buf: Vec<Complex64> = data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fwd.process(&mut buf);
        buf
    }

    /// Inverse transform divided by `n`, real part only.
    pub fn inverse_to_real(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        debug_assert_eq!(spec.len(), self.n);
        self.inv.process(&mut spec);
        let scale = 1.0 / self.n as f64;
        spec.iter().map(|c| c.re * scale).collect()
    }
}

impl std::fmt::Debug for Fft1D {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft1D(n = {})", self.n)
    }
}

/// Row-major 2D transform built from per-axis 1D plans.
#[derive(Clone)]
pub struct Fft2D {
    pub nx: usize,
    pub ny: usize,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
}

impl Fft2D {
    pub fn new(nx: usize, ny: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2D {
            nx,
            ny,
            fwd_x: planner.plan_fft_forward(nx),
            inv_x: planner.plan_fft_inverse(nx),
            fwd_y: planner.plan_fft_forward(ny),
            inv_y: planner.plan_fft_inverse(ny),
        }
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        let (fx, fy) = if inverse {
            (&self.inv_x, &self.inv_y)
        } else {
            (&self.fwd_x, &self.fwd_y)
        };
        for row in buf.chunks_exact_mut(self.nx) {
            fx.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); self.ny];
        for i in 0..self.nx {
            for j in 0..self.ny {
                col[j] = buf[i + self.nx * j];
            }
            fy.process(&mut col);
            for j in 0..self.ny {
                buf[i + self.nx * j] = col[j];
            }
        }
    }

    pub fn forward_real(&self, data: &[f64]) -> Vec<Complex64> {
        debug_assert_eq!(data.len(), self.nx * self.ny);
        let mut buf: Vec<Complex64> = data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.transform(&mut buf, false);
        buf
    }

    /// Inverse transform divided by `nx*ny`, real part only.
    pub fn inverse_to_real(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        debug_assert_eq!(spec.len(), self.nx * self.ny);
        self.transform(&mut spec, true);
        let scale = 1.0 / (self.nx * self.ny) as f64;
        spec.iter().map(|c| c.re * scale).collect()
    }
}

impl std::fmt::Debug for Fft2D {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft2D({} x {})", self.nx, self.ny)
    }
}
