//! Finite volume scheme for the nonlocal system on the unit interval with
//! zero-flux boundaries and a boundary-vanishing coupling kernel `G(x, y)`,
//! together with its per-step entropy inequality check.
//!
//! Cells are indexed `0..ell`, interfaces `0..=ell` at `x = i*dx`. The
//! nonlocal coefficients live on interfaces; interface averages use the
//! one-sided cell value at the boundary, consistent with the zero-flux
//! condition, and both boundary fluxes are exactly zero.

use crate::error::{Error, Result};
use crate::grid::BoundedGrid1D;
use crate::linsolve::DenseLu;
use crate::newton::{dense_log_solve, SolverConfig};
use crate::norms::entropy_density;
use crate::scheme::State;
use std::sync::Arc;

/// Continuous non-negative kernel on the unit square vanishing on the
/// boundary, sampled at the interface points.
#[derive(Clone)]
pub struct BoundaryKernel {
    /// `samples[i * (ell+1) + n] = G(x_{i+1/2}, x_{n+1/2})`.
    samples: Vec<f64>,
    ell: usize,
}

impl std::fmt::Debug for BoundaryKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BoundaryKernel(ell = {})", self.ell)
    }
}

impl BoundaryKernel {
    pub fn new(
        g: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
        grid: &BoundedGrid1D,
    ) -> Result<Self> {
        let ell = grid.n_cells;
        let m = ell + 1;
        let mut samples = vec![0.0; m * m];
        for i in 0..m {
            for n in 0..m {
                let v = g(grid.interface(i), grid.interface(n));
                if v < -1e-12 {
                    return Err(Error::Domain(format!(
                        "boundary kernel is negative ({v}) at an interface"
                    )));
                }
                samples[i * m + n] = v.max(0.0);
            }
        }
        // boundary interfaces must carry a vanishing kernel
        for k in 0..m {
            for v in [samples[k], samples[(m - 1) * m + k], samples[k * m], samples[k * m + m - 1]]
            {
                if v > 1e-12 {
                    return Err(Error::Domain(
                        "boundary kernel must vanish on the domain boundary".into(),
                    ));
                }
            }
        }
        Ok(BoundaryKernel { samples, ell })
    }

    /// `G(x, y) = sin(pi x) sin(pi y)`: smooth, separable, boundary-vanishing.
    pub fn default_sine(grid: &BoundedGrid1D) -> Self {
        let pi = std::f64::consts::PI;
        Self::new(Arc::new(move |x, y| (pi * x).sin() * (pi * y).sin()), grid)
            .expect("sine kernel is admissible")
    }

    #[inline]
    pub fn at(&self, i: usize, n: usize) -> f64 {
        self.samples[i * (self.ell + 1) + n]
    }
}

/// Coefficients of the bounded-domain scheme; the self-diffusion constants
/// are fixed to zero in this model.
#[derive(Debug, Clone)]
pub struct BoundedParams {
    pub d1: f64,
    pub d2: f64,
    pub d12: f64,
    pub d21: f64,
    pub kernel: BoundaryKernel,
}

/// Interface coefficient vectors of one state, each of length `ell + 1`.
#[derive(Debug, Clone)]
pub struct BoundedMu {
    /// `mu2[i] = sum_n dx G(x_i, x_n) * avg(u2)_n` (drives species 1).
    pub mu2: Vec<f64>,
    /// `mu1[n] = sum_i dx G(x_i, x_n) * avg(u1)_i` (drives species 2).
    pub mu1: Vec<f64>,
    /// `mut2[i] = sum_n G(x_i, x_n) * (u2_n - u2_{n+1})`.
    pub mut2: Vec<f64>,
    /// `mut1[n] = sum_i G(x_i, x_n) * (u1_i - u1_{i+1})`.
    pub mut1: Vec<f64>,
}

/// Interface average of a cell vector; one-sided at the left boundary.
fn interface_avg(u: &[f64], n: usize) -> f64 {
    if n == 0 {
        u[0]
    } else {
        0.5 * (u[n - 1] + u[n])
    }
}

/// Difference `u_{n} - u_{n+1}` in paper cell numbering; zero at the left
/// boundary where the ghost value equals the first cell.
fn interface_diff(u: &[f64], n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        u[n - 1] - u[n]
    }
}

/// Kernel-weighted interface coefficients of a state.
pub fn bounded_mu(state: &State, params: &BoundedParams, grid: &BoundedGrid1D) -> BoundedMu {
    let ell = grid.n_cells;
    let dx = grid.dx;
    let mut mu2 = vec![0.0; ell + 1];
    let mut mut2 = vec![0.0; ell + 1];
    let mut mu1 = vec![0.0; ell + 1];
    let mut mut1 = vec![0.0; ell + 1];
    for i in 0..=ell {
        let mut acc_mu = 0.0;
        let mut acc_mut = 0.0;
        for n in 0..ell {
            let g = params.kernel.at(i, n);
            if g != 0.0 {
                acc_mu += dx * g * interface_avg(&state.u2, n);
                acc_mut += g * interface_diff(&state.u2, n);
            }
        }
        mu2[i] = acc_mu;
        mut2[i] = acc_mut;
    }
    for n in 0..=ell {
        let mut acc_mu = 0.0;
        let mut acc_mut = 0.0;
        for i in 0..ell {
            let g = params.kernel.at(i, n);
            if g != 0.0 {
                acc_mu += dx * g * interface_avg(&state.u1, i);
                acc_mut += g * interface_diff(&state.u1, i);
            }
        }
        mu1[n] = acc_mu;
        mut1[n] = acc_mut;
    }
    BoundedMu { mu2, mu1, mut2, mut1 }
}

/// Numerical fluxes at all interfaces, with the boundary fluxes exactly zero.
pub fn bounded_fluxes(
    state: &State,
    params: &BoundedParams,
    grid: &BoundedGrid1D,
) -> (Vec<f64>, Vec<f64>) {
    let ell = grid.n_cells;
    let dx = grid.dx;
    let coeffs = bounded_mu(state, params, grid);
    let mut f1 = vec![0.0; ell + 1];
    let mut f2 = vec![0.0; ell + 1];
    for i in 1..ell {
        let du1 = (state.u1[i - 1] - state.u1[i]) / dx;
        f1[i] = (params.d1 + params.d12 * coeffs.mu2[i]) * du1
            + params.d12 * 0.5 * (state.u1[i - 1] + state.u1[i]) * coeffs.mut2[i];
        let du2 = (state.u2[i - 1] - state.u2[i]) / dx;
        f2[i] = (params.d2 + params.d21 * coeffs.mu1[i]) * du2
            + params.d21 * 0.5 * (state.u2[i - 1] + state.u2[i]) * coeffs.mut1[i];
    }
    (f1, f2)
}

/// Residual of the implicit step, `(u - prev)/dt + (F_{i+1} - F_i)/dx`.
pub fn bounded_residual(
    candidate: &State,
    previous: &State,
    dt: f64,
    params: &BoundedParams,
    grid: &BoundedGrid1D,
) -> (Vec<f64>, Vec<f64>) {
    let ell = grid.n_cells;
    let (f1, f2) = bounded_fluxes(candidate, params, grid);
    let inv_dt = 1.0 / dt;
    let r1 = (0..ell)
        .map(|i| (candidate.u1[i] - previous.u1[i]) * inv_dt + (f1[i + 1] - f1[i]) / grid.dx)
        .collect();
    let r2 = (0..ell)
        .map(|i| (candidate.u2[i] - previous.u2[i]) * inv_dt + (f2[i + 1] - f2[i]) / grid.dx)
        .collect();
    (r1, r2)
}

/// Dense Jacobian of the residual with respect to the densities,
/// `(2 ell)^2` row-major with species-major ordering `[u1; u2]`.
fn bounded_jacobian(
    state: &State,
    dt: f64,
    params: &BoundedParams,
    grid: &BoundedGrid1D,
) -> Vec<f64> {
    let ell = grid.n_cells;
    let dx = grid.dx;
    let dim = 2 * ell;
    let coeffs = bounded_mu(state, params, grid);
    let mut jac = vec![0.0; dim * dim];

    // d(interface avg)_n / d u_m and d(interface diff)_n / d u_m helpers
    let avg_deriv = |n: usize, m: usize| -> f64 {
        if n == 0 {
            if m == 0 {
                1.0
            } else {
                0.0
            }
        } else if m + 1 == n || m == n {
            0.5
        } else {
            0.0
        }
    };
    let diff_deriv = |n: usize, m: usize| -> f64 {
        if n == 0 {
            0.0
        } else if m + 1 == n {
            1.0
        } else if m == n {
            -1.0
        } else {
            0.0
        }
    };

    // flux derivatives: dF1[i]/du1[m] is banded, dF1[i]/du2[m] is dense
    let df1_du1 = |i: usize, m: usize| -> f64 {
        if i == 0 || i == ell {
            return 0.0;
        }
        let a = (params.d1 + params.d12 * coeffs.mu2[i]) / dx;
        let mut v = 0.0;
        if m == i - 1 {
            v += a + params.d12 * 0.5 * coeffs.mut2[i];
        }
        if m == i {
            v += -a + params.d12 * 0.5 * coeffs.mut2[i];
        }
        v
    };
    let df2_du2 = |i: usize, m: usize| -> f64 {
        if i == 0 || i == ell {
            return 0.0;
        }
        let a = (params.d2 + params.d21 * coeffs.mu1[i]) / dx;
        let mut v = 0.0;
        if m == i - 1 {
            v += a + params.d21 * 0.5 * coeffs.mut1[i];
        }
        if m == i {
            v += -a + params.d21 * 0.5 * coeffs.mut1[i];
        }
        v
    };
    let df1_du2 = |i: usize, m: usize| -> f64 {
        if i == 0 || i == ell {
            return 0.0;
        }
        let du1 = (state.u1[i - 1] - state.u1[i]) / dx;
        let ubar1 = 0.5 * (state.u1[i - 1] + state.u1[i]);
        let mut dmu = 0.0;
        let mut dmut = 0.0;
        for n in [m, m + 1] {
            if n < ell {
                let g = params.kernel.at(i, n);
                if g != 0.0 {
                    dmu += dx * g * avg_deriv(n, m);
                    dmut += g * diff_deriv(n, m);
                }
            }
        }
        params.d12 * (du1 * dmu + ubar1 * dmut)
    };
    let df2_du1 = |n: usize, m: usize| -> f64 {
        if n == 0 || n == ell {
            return 0.0;
        }
        let du2 = (state.u2[n - 1] - state.u2[n]) / dx;
        let ubar2 = 0.5 * (state.u2[n - 1] + state.u2[n]);
        let mut dmu = 0.0;
        let mut dmut = 0.0;
        for i in [m, m + 1] {
            if i < ell {
                let g = params.kernel.at(i, n);
                if g != 0.0 {
                    dmu += dx * g * avg_deriv(i, m);
                    dmut += g * diff_deriv(i, m);
                }
            }
        }
        params.d21 * (du2 * dmu + ubar2 * dmut)
    };

    let inv_dt = 1.0 / dt;
    for i in 0..ell {
        for m in 0..ell {
            let mut v11 = (df1_du1(i + 1, m) - df1_du1(i, m)) / dx;
            if i == m {
                v11 += inv_dt;
            }
            jac[i * dim + m] = v11;
            jac[i * dim + ell + m] = (df1_du2(i + 1, m) - df1_du2(i, m)) / dx;
            jac[(ell + i) * dim + m] = (df2_du1(i + 1, m) - df2_du1(i, m)) / dx;
            let mut v22 = (df2_du2(i + 1, m) - df2_du2(i, m)) / dx;
            if i == m {
                v22 += inv_dt;
            }
            jac[(ell + i) * dim + ell + m] = v22;
        }
    }
    jac
}

/// Result of one accepted bounded-domain step.
#[derive(Debug, Clone)]
pub struct BoundedStep {
    pub state: State,
    pub iterations: usize,
    pub final_residual: f64,
    pub first_residual: f64,
}

/// Solves one implicit step of the bounded-domain scheme with the dense
/// log-variable Newton solver; the returned state is strictly positive.
pub fn bounded_step(
    previous: &State,
    dt: f64,
    params: &BoundedParams,
    grid: &BoundedGrid1D,
    config: &SolverConfig,
) -> Result<BoundedStep> {
    let ell = grid.n_cells;
    let initial: Vec<f64> =
        previous.u1.iter().chain(previous.u2.iter()).cloned().collect();
    let residual = |u: &[f64]| -> Vec<f64> {
        let st = State::new(u[..ell].to_vec(), u[ell..].to_vec(), 0.0);
        let (r1, r2) = bounded_residual(&st, previous, dt, params, grid);
        r1.into_iter().chain(r2).collect()
    };
    let jacobian = |u: &[f64]| -> Vec<f64> {
        let st = State::new(u[..ell].to_vec(), u[ell..].to_vec(), 0.0);
        bounded_jacobian(&st, dt, params, grid)
    };
    let out = dense_log_solve(residual, jacobian, &initial, dt, config)?;
    Ok(BoundedStep {
        state: State::new(out.u[..ell].to_vec(), out.u[ell..].to_vec(), previous.time + dt),
        iterations: out.iterations,
        final_residual: out.final_residual,
        first_residual: out.first_residual,
    })
}

/// One row of the per-step entropy inequality check.
#[derive(Debug, Clone, Copy)]
pub struct BoundedEntropyStep {
    pub step: usize,
    /// `(H^k - H^(k-1))/dt + 4 d1/d12 * sum (sqrt diff)^2/dx + ...`.
    pub lhs: f64,
    /// Solver-accuracy slack the left side is allowed.
    pub slack: f64,
    pub pass: bool,
}

/// Entropy of a bounded-domain state.
pub fn bounded_entropy(state: &State, params: &BoundedParams, grid: &BoundedGrid1D) -> Result<f64> {
    if !(params.d12 > 0.0 && params.d21 > 0.0) {
        return Err(Error::Domain("entropy needs d12, d21 > 0".into()));
    }
    let mut acc = 0.0;
    for &x in &state.u1 {
        acc += entropy_density(x, params.d12);
    }
    for &x in &state.u2 {
        acc += entropy_density(x, params.d21);
    }
    Ok(acc * grid.dx)
}

/// Verifies the discrete entropy inequality along a trajectory of accepted
/// states (including the initial one): entropy decrease plus the two
/// square-root gradient sums stays non-positive up to solver slack.
pub fn bounded_entropy_check(
    trajectory: &[State],
    params: &BoundedParams,
    dt: f64,
    grid: &BoundedGrid1D,
) -> Result<Vec<BoundedEntropyStep>> {
    let ell = grid.n_cells;
    let mut rows = Vec::new();
    for k in 1..trajectory.len() {
        let prev = &trajectory[k - 1];
        let curr = &trajectory[k];
        let h_prev = bounded_entropy(prev, params, grid)?;
        let h_curr = bounded_entropy(curr, params, grid)?;
        let grad_sq = |u: &[f64]| -> f64 {
            (1..ell)
                .map(|i| {
                    let d = u[i - 1].sqrt() - u[i].sqrt();
                    d * d / grid.dx
                })
                .sum()
        };
        let lhs = (h_curr - h_prev) / dt
            + 4.0 * params.d1 / params.d12 * grad_sq(&curr.u1)
            + 4.0 * params.d2 / params.d21 * grad_sq(&curr.u2);
        let (r1, r2) = bounded_residual(curr, prev, dt, params, grid);
        let res = r1.iter().chain(r2.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
        let log_sup = curr
            .u1
            .iter()
            .chain(curr.u2.iter())
            .filter(|v| **v > 0.0)
            .fold(0.0f64, |m, v| m.max(v.ln().abs()));
        let slack = 10.0 * res * (1.0 + log_sup);
        rows.push(BoundedEntropyStep { step: k, lhs, slack, pass: lhs <= slack });
    }
    Ok(rows)
}

/// The 2x2 coupling matrix of the entropy estimate at a cell pair, built
/// from interface averages and logarithmic means. It is singular with
/// positive trace for positive states, hence positive semidefinite.
pub fn entropy_pair_matrix(u1_pair: (f64, f64), u2_pair: (f64, f64)) -> [[f64; 2]; 2] {
    let log_mean = |a: f64, b: f64| -> f64 {
        if a == b {
            a
        } else {
            (a - b) / (a.ln() - b.ln())
        }
    };
    let ubar1 = 0.5 * (u1_pair.0 + u1_pair.1);
    let ubar2 = 0.5 * (u2_pair.0 + u2_pair.1);
    let ulog1 = log_mean(u1_pair.0, u1_pair.1);
    let ulog2 = log_mean(u2_pair.0, u2_pair.1);
    [[ubar2 / ulog1, ubar1 / ulog1], [ubar2 / ulog2, ubar1 / ulog2]]
}

/// Verifies that the dense analytic Jacobian matches finite differences;
/// exposed for the test suites.
#[doc(hidden)]
pub fn jacobian_fd_check(
    state: &State,
    dt: f64,
    params: &BoundedParams,
    grid: &BoundedGrid1D,
) -> f64 {
    let ell = grid.n_cells;
    let dim = 2 * ell;
    let jac = bounded_jacobian(state, dt, params, grid);
    let eval = |u: &[f64]| -> Vec<f64> {
        let st = State::new(u[..ell].to_vec(), u[ell..].to_vec(), 0.0);
        let (r1, r2) = bounded_residual(&st, state, dt, params, grid);
        r1.into_iter().chain(r2).collect()
    };
    let u0: Vec<f64> = state.u1.iter().chain(state.u2.iter()).cloned().collect();
    let mut worst = 0.0f64;
    let scale = jac.iter().fold(1e-12f64, |m, v| m.max(v.abs()));
    for j in 0..dim {
        let h = 1e-6 * u0[j].abs().max(1e-6);
        let mut up = u0.clone();
        up[j] += h;
        let mut um = u0.clone();
        um[j] -= h;
        let (fp, fm) = (eval(&up), eval(&um));
        for i in 0..dim {
            let fd = (fp[i] - fm[i]) / (2.0 * h);
            worst = worst.max((jac[i * dim + j] - fd).abs() / scale);
        }
    }
    worst
}

/// Dense LU solve of the assembled Jacobian; exposed so callers can verify
/// solvability of a given configuration.
#[doc(hidden)]
pub fn jacobian_is_solvable(
    state: &State,
    dt: f64,
    params: &BoundedParams,
    grid: &BoundedGrid1D,
) -> bool {
    DenseLu::factor(bounded_jacobian(state, dt, params, grid), 2 * grid.n_cells).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_bounded_1d;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_params(grid: &BoundedGrid1D) -> BoundedParams {
        BoundedParams {
            d1: 0.3,
            d2: 0.2,
            d12: 1.0,
            d21: 2.0,
            kernel: BoundaryKernel::default_sine(grid),
        }
    }

    #[test]
    fn kernel_validation() {
        let g = make_bounded_1d(8).unwrap();
        assert!(BoundaryKernel::new(Arc::new(|_, _| 1.0), &g).is_err()); // no boundary decay
        assert!(BoundaryKernel::new(
            Arc::new(|x: f64, y: f64| -(std::f64::consts::PI * x).sin() * y),
            &g
        )
        .is_err()); // negative
        assert!(BoundaryKernel::new(Arc::new(|_, _| 0.0), &g).is_ok());
    }

    #[test]
    fn constant_state_has_zero_mut_and_zero_interior_drift() {
        let g = make_bounded_1d(10).unwrap();
        let p = test_params(&g);
        let st = State::constant(10, 1.4, 0.7);
        let coeffs = bounded_mu(&st, &p, &g);
        assert!(coeffs.mut1.iter().chain(coeffs.mut2.iter()).all(|v| v.abs() < 1e-14));
        let (f1, f2) = bounded_fluxes(&st, &p, &g);
        assert!(f1.iter().chain(f2.iter()).all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn zero_kernel_zeroes_all_coefficients() {
        let g = make_bounded_1d(6).unwrap();
        let p = BoundedParams {
            d1: 0.1,
            d2: 0.1,
            d12: 1.0,
            d21: 1.0,
            kernel: BoundaryKernel::new(Arc::new(|_, _| 0.0), &g).unwrap(),
        };
        let st = State::new(
            (0..6).map(|i| 1.0 + i as f64).collect(),
            (0..6).map(|i| 2.0 - 0.2 * i as f64).collect(),
            0.0,
        );
        let c = bounded_mu(&st, &p, &g);
        assert!(c.mu1.iter().chain(&c.mu2).chain(&c.mut1).chain(&c.mut2).all(|&v| v == 0.0));
    }

    #[test]
    fn mu_matches_direct_double_loop() {
        let g = make_bounded_1d(8).unwrap();
        let p = test_params(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let st = State::new(
            (0..8).map(|_| rng.gen_range(0.2..2.0)).collect(),
            (0..8).map(|_| rng.gen_range(0.2..2.0)).collect(),
            0.0,
        );
        let c = bounded_mu(&st, &p, &g);
        // independent evaluation with paper-style one-based cells
        let pi = std::f64::consts::PI;
        let gval = |i: usize, n: usize| (pi * g.interface(i)).sin() * (pi * g.interface(n)).sin();
        for i in 0..=8 {
            let mut mu2 = 0.0;
            let mut mut2 = 0.0;
            for n in 0..8 {
                let avg = if n == 0 { st.u2[0] } else { 0.5 * (st.u2[n - 1] + st.u2[n]) };
                let diff = if n == 0 { 0.0 } else { st.u2[n - 1] - st.u2[n] };
                mu2 += g.dx * gval(i, n) * avg;
                mut2 += gval(i, n) * diff;
            }
            assert!((c.mu2[i] - mu2).abs() < 1e-13);
            assert!((c.mut2[i] - mut2).abs() < 1e-13);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let g = make_bounded_1d(7).unwrap();
        let p = test_params(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let st = State::new(
            (0..7).map(|_| rng.gen_range(0.3..2.0)).collect(),
            (0..7).map(|_| rng.gen_range(0.3..2.0)).collect(),
            0.0,
        );
        let worst = jacobian_fd_check(&st, 0.05, &p, &g);
        assert!(worst < 1e-6, "worst relative deviation {worst}");
    }

    #[test]
    fn step_conserves_mass_and_preserves_positivity() {
        let g = make_bounded_1d(16).unwrap();
        let p = test_params(&g);
        let st = State::new(
            (0..16).map(|i| 1.0 + 0.5 * (std::f64::consts::PI * g.center(i)).sin()).collect(),
            (0..16).map(|i| 0.8 + 0.3 * (2.0 * std::f64::consts::PI * g.center(i)).cos())
                .collect(),
            0.0,
        );
        let (m1, m2) = st.masses(g.dx);
        let config = SolverConfig::default();
        let out = bounded_step(&st, 0.01, &p, &g, &config).unwrap();
        let (a, b) = out.state.masses(g.dx);
        assert!((a - m1).abs() <= 10.0 * config.tolerance * m1);
        assert!((b - m2).abs() <= 10.0 * config.tolerance * m2);
        assert!(out.state.u1.iter().chain(out.state.u2.iter()).all(|&v| v > 0.0));
    }

    #[test]
    fn one_step_matches_dense_damped_oracle() {
        let grid = make_bounded_1d(8).unwrap();
        let p = test_params(&grid);
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let prev = State::new(
            (0..8).map(|_| rng.gen_range(0.3..2.0)).collect(),
            (0..8).map(|_| rng.gen_range(0.3..2.0)).collect(),
            0.0,
        );
        let dt = 0.02;
        let out = bounded_step(&prev, dt, &p, &grid, &SolverConfig::default()).unwrap();

        // damped Newton in the densities with finite-difference Jacobian
        let ell = 8usize;
        let dim = 2 * ell;
        let eval = |u: &[f64]| -> Vec<f64> {
            let st = State::new(u[..ell].to_vec(), u[ell..].to_vec(), 0.0);
            let (r1, r2) = bounded_residual(&st, &prev, dt, &p, &grid);
            r1.into_iter().chain(r2).collect()
        };
        let norm2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut u: Vec<f64> = prev.u1.iter().chain(prev.u2.iter()).cloned().collect();
        for _ in 0..200 {
            let f = eval(&u);
            if norm2(&f) < 1e-13 * (1.0 + norm2(&u) / dt) {
                break;
            }
            let mut jac = vec![0.0; dim * dim];
            for j in 0..dim {
                let h = 1e-7 * u[j].abs().max(1e-7);
                let mut up = u.clone();
                up[j] += h;
                let mut um = u.clone();
                um[j] -= h;
                let (fp, fm) = (eval(&up), eval(&um));
                for i in 0..dim {
                    jac[i * dim + j] = (fp[i] - fm[i]) / (2.0 * h);
                }
            }
            let lu = DenseLu::factor(jac, dim).unwrap();
            let mut delta = f.clone();
            lu.solve_in_place(&mut delta);
            let f0 = norm2(&f);
            let mut lambda = 1.0;
            for _ in 0..40 {
                let trial: Vec<f64> =
                    u.iter().zip(&delta).map(|(ui, di)| ui - lambda * di).collect();
                if trial.iter().all(|&v| v > 0.0) && norm2(&eval(&trial)) <= f0 {
                    u = trial;
                    break;
                }
                lambda *= 0.5;
            }
        }
        for i in 0..ell {
            assert!((out.state.u1[i] - u[i]).abs() < 1e-9);
            assert!((out.state.u2[i] - u[ell + i]).abs() < 1e-9);
        }
    }

    #[test]
    fn entropy_inequality_along_a_run() {
        let g = make_bounded_1d(16).unwrap();
        let p = test_params(&g);
        let mut state = State::new(
            (0..16).map(|i| 1.0 + 0.6 * (std::f64::consts::PI * g.center(i)).cos()).collect(),
            (0..16)
                .map(|i| 1.2 + 0.4 * (std::f64::consts::PI * g.center(i)).sin())
                .collect(),
            0.0,
        );
        let dt = 5e-3;
        let mut trajectory = vec![state.clone()];
        for _ in 0..8 {
            state = bounded_step(&state, dt, &p, &g, &SolverConfig::default()).unwrap().state;
            trajectory.push(state.clone());
        }
        let rows = bounded_entropy_check(&trajectory, &p, dt, &g).unwrap();
        assert!(rows.iter().all(|r| r.pass), "{rows:?}");
        // constant trajectories give a zero left side
        let flat = vec![State::constant(16, 1.0, 1.0); 3];
        let rows = bounded_entropy_check(&flat, &p, dt, &g).unwrap();
        assert!(rows.iter().all(|r| r.lhs.abs() < 1e-12));
    }

    #[test]
    fn pair_matrix_singular_with_positive_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..100 {
            let a = entropy_pair_matrix(
                (rng.gen_range(0.01..5.0), rng.gen_range(0.01..5.0)),
                (rng.gen_range(0.01..5.0), rng.gen_range(0.01..5.0)),
            );
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            let trace = a[0][0] + a[1][1];
            assert!(det.abs() <= 1e-12 * trace * trace.max(1.0));
            assert!(trace > 0.0);
        }
        // equal pair uses the continuous extension of the log mean
        let a = entropy_pair_matrix((2.0, 2.0), (3.0, 3.0));
        assert!((a[0][0] - 1.5).abs() < 1e-15);
    }
}
