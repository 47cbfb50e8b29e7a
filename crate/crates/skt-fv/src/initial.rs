//! Cell-averaged discretization of initial data. Indicator-type profiles are
//! averaged with exact overlap integrals; smooth profiles with closed forms
//! where available and 10-point Gauss quadrature otherwise.

use crate::error::{Error, Result};
use crate::grid::{PeriodicGrid1D, PeriodicGrid2D};
use crate::kernels::gauss10;
use crate::scheme::State;
use std::sync::Arc;

/// One-dimensional initial profile.
#[derive(Clone)]
pub enum Profile {
    Constant(f64),
    /// `baseline + height * chi_[lo, hi]`, averaged exactly per cell.
    Step { baseline: f64, height: f64, lo: f64, hi: f64 },
    /// `offset + amplitude * cos(2 pi x / L)`, exact cell averages.
    Cosine { offset: f64, amplitude: f64 },
    /// `offset + amplitude * sin(2 pi x / L)`, exact cell averages.
    Sine { offset: f64, amplitude: f64 },
    /// Arbitrary pointwise function, Gauss-averaged per cell.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for Profile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Profile::Constant(c) => write!(f, "Constant({c})"),
            Profile::Step { baseline, height, lo, hi } => {
                write!(f, "Step({baseline} + {height} on [{lo}, {hi}])")
            }
            Profile::Cosine { offset, amplitude } => write!(f, "Cosine({offset}, {amplitude})"),
            Profile::Sine { offset, amplitude } => write!(f, "Sine({offset}, {amplitude})"),
            Profile::Custom(_) => write!(f, "Custom(<fn>)"),
        }
    }
}

impl Profile {
    /// Cell averages on a periodic grid; errors when an average is negative.
    pub fn discretize(&self, grid: &PeriodicGrid1D) -> Result<Vec<f64>> {
        let n = grid.n_cells;
        let nu = 2.0 * std::f64::consts::PI / grid.length;
        let values: Vec<f64> = match self {
            Profile::Constant(c) => vec![*c; n],
            Profile::Step { baseline, height, lo, hi } => {
                if hi < lo {
                    return Err(Error::InvalidConfig(format!(
                        "step profile needs lo <= hi, got [{lo}, {hi}]"
                    )));
                }
                (0..n)
                    .map(|i| {
                        let a = i as f64 * grid.dx;
                        let b = a + grid.dx;
                        let overlap = (b.min(*hi) - a.max(*lo)).max(0.0);
                        baseline + height * overlap / grid.dx
                    })
                    .collect()
            }
            Profile::Cosine { offset, amplitude } => {
                let s = (0.5 * nu * grid.dx).sin() / (0.5 * nu * grid.dx);
                (0..n)
                    .map(|i| offset + amplitude * s * (nu * grid.center(i)).cos())
                    .collect()
            }
            Profile::Sine { offset, amplitude } => {
                let s = (0.5 * nu * grid.dx).sin() / (0.5 * nu * grid.dx);
                (0..n)
                    .map(|i| offset + amplitude * s * (nu * grid.center(i)).sin())
                    .collect()
            }
            Profile::Custom(f) => (0..n)
                .map(|i| {
                    let a = i as f64 * grid.dx;
                    gauss10(a, a + grid.dx, |x| f(x)) / grid.dx
                })
                .collect(),
        };
        if let Some(v) = values.iter().find(|v| **v < 0.0) {
            return Err(Error::Domain(format!(
                "initial profile produced a negative cell average {v}"
            )));
        }
        Ok(values)
    }
}

/// Two-dimensional initial profile.
#[derive(Clone)]
pub enum Profile2D {
    Constant(f64),
    /// `baseline + height * chi_[x_lo,x_hi]x[y_lo,y_hi]`, exact averages.
    Box { baseline: f64, height: f64, x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64 },
    Custom(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for Profile2D {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Profile2D::Constant(c) => write!(f, "Constant({c})"),
            Profile2D::Box { baseline, height, x_lo, x_hi, y_lo, y_hi } => write!(
                f,
                "Box({baseline} + {height} on [{x_lo},{x_hi}]x[{y_lo},{y_hi}])"
            ),
            Profile2D::Custom(_) => write!(f, "Custom(<fn>)"),
        }
    }
}

impl Profile2D {
    pub fn discretize(&self, grid: &PeriodicGrid2D) -> Result<Vec<f64>> {
        let values: Vec<f64> = match self {
            Profile2D::Constant(c) => vec![*c; grid.n_cells()],
            Profile2D::Box { baseline, height, x_lo, x_hi, y_lo, y_hi } => {
                let mut vals = vec![*baseline; grid.n_cells()];
                for j in 0..grid.ny {
                    let ya = j as f64 * grid.dy;
                    let oy = ((ya + grid.dy).min(*y_hi) - ya.max(*y_lo)).max(0.0) / grid.dy;
                    if oy == 0.0 {
                        continue;
                    }
                    for i in 0..grid.nx {
                        let xa = i as f64 * grid.dx;
                        let ox =
                            ((xa + grid.dx).min(*x_hi) - xa.max(*x_lo)).max(0.0) / grid.dx;
                        vals[grid.idx(i, j)] += height * ox * oy;
                    }
                }
                vals
            }
            Profile2D::Custom(f) => {
                // tensorized 10x10 Gauss rule per cell
                let mut vals = vec![0.0; grid.n_cells()];
                for j in 0..grid.ny {
                    let ya = j as f64 * grid.dy;
                    for i in 0..grid.nx {
                        let xa = i as f64 * grid.dx;
                        let avg = gauss10(xa, xa + grid.dx, |x| {
                            gauss10(ya, ya + grid.dy, |y| f(x, y))
                        }) / (grid.dx * grid.dy);
                        vals[grid.idx(i, j)] = avg;
                    }
                }
                vals
            }
        };
        if let Some(v) = values.iter().find(|v| **v < 0.0) {
            return Err(Error::Domain(format!(
                "initial profile produced a negative cell average {v}"
            )));
        }
        Ok(values)
    }
}

/// Discretizes a pair of 1D profiles into an initial state at `time = 0`.
pub fn initial_state(u1: &Profile, u2: &Profile, grid: &PeriodicGrid1D) -> Result<State> {
    Ok(State::new(u1.discretize(grid)?, u2.discretize(grid)?, 0.0))
}

/// Discretizes a pair of 2D profiles into an initial state at `time = 0`.
pub fn initial_state_2d(
    u1: &Profile2D,
    u2: &Profile2D,
    grid: &PeriodicGrid2D,
) -> Result<State> {
    Ok(State::new(u1.discretize(grid)?, u2.discretize(grid)?, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_periodic_1d, make_periodic_2d};

    #[test]
    fn constant_profile() {
        let g = make_periodic_1d(8, 1.0).unwrap();
        let v = Profile::Constant(2.5).discretize(&g).unwrap();
        assert!(v.iter().all(|&x| x == 2.5));
    }

    #[test]
    fn indicator_mass_is_exact() {
        // chi_[L/9, L/3] on L = 25, N = 32: averages in [0,1] and exact mass
        let g = make_periodic_1d(32, 25.0).unwrap();
        let v = Profile::Step { baseline: 0.0, height: 1.0, lo: 25.0 / 9.0, hi: 25.0 / 3.0 }
            .discretize(&g)
            .unwrap();
        assert!(v.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let mass: f64 = v.iter().sum::<f64>() * g.dx;
        let exact = 25.0 * (1.0 / 3.0 - 1.0 / 9.0);
        assert!((mass - exact).abs() < 1e-12);
    }

    #[test]
    fn cosine_mass_is_domain_length() {
        let g = make_periodic_1d(64, 25.0).unwrap();
        let v = Profile::Cosine { offset: 1.0, amplitude: 1.0 }.discretize(&g).unwrap();
        let mass: f64 = v.iter().sum::<f64>() * g.dx;
        assert!((mass - 25.0).abs() < 1e-10);
        assert!(v.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn custom_profile_matches_closed_form() {
        let g = make_periodic_1d(16, 2.0).unwrap();
        let f = |x: f64| 1.0 + x * x;
        let v = Profile::Custom(Arc::new(f)).discretize(&g).unwrap();
        for i in 0..16 {
            let a = i as f64 * g.dx;
            let b = a + g.dx;
            let exact = 1.0 + (b * b * b - a * a * a) / (3.0 * g.dx);
            assert!((v[i] - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn negative_profile_rejected() {
        let g = make_periodic_1d(8, 1.0).unwrap();
        assert!(Profile::Constant(-1.0).discretize(&g).is_err());
        assert!(Profile::Step { baseline: 0.1, height: -1.0, lo: 0.2, hi: 0.8 }
            .discretize(&g)
            .is_err());
    }

    #[test]
    fn box_profile_mass() {
        let g = make_periodic_2d(20, 15, 4.0, 3.0).unwrap();
        let p = Profile2D::Box {
            baseline: 5.0,
            height: 0.01,
            x_lo: 4.0 / 9.0,
            x_hi: 16.0 / 9.0,
            y_lo: 7.0 / 3.0,
            y_hi: 8.0 / 3.0,
        };
        let v = p.discretize(&g).unwrap();
        let mass: f64 = v.iter().sum::<f64>() * g.dx * g.dy;
        let exact = 5.0 * 12.0 + 0.01 * (12.0 / 9.0) * (1.0 / 3.0);
        assert!((mass - exact).abs() < 1e-12);
    }
}
