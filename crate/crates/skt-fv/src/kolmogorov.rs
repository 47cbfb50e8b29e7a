//! Discrete Kolmogorov equation `dz/dt = Lap(mu z)` with prescribed
//! non-negative mobilities: implicit forward solver through a column-wise
//! diagonally dominant M-matrix, sup-norm and energy estimates with their
//! product bounds, the backward dual solver, and the duality inequality
//! diagnostic. A discrete Gronwall helper backs the product bounds.

use crate::error::{Error, Result};
use crate::grid::{Mesh, PeriodicGrid1D};
use crate::linsolve::PeriodicTridiag;
use crate::scheme::discrete_laplacian;

/// Forward problem data: per-step mobilities `mu[k]` for steps `1..=n_steps`
/// and the initial datum.
#[derive(Debug, Clone)]
pub struct KolmogorovProblem {
    pub grid: PeriodicGrid1D,
    pub mu: Vec<Vec<f64>>,
    pub dt: f64,
    pub z0: Vec<f64>,
}

impl KolmogorovProblem {
    pub fn new(grid: PeriodicGrid1D, mu: Vec<Vec<f64>>, dt: f64, z0: Vec<f64>) -> Result<Self> {
        if z0.len() != grid.n_cells || mu.iter().any(|m| m.len() != grid.n_cells) {
            return Err(Error::InvalidConfig(
                "mobility or initial datum does not match the grid".into(),
            ));
        }
        if mu.iter().flatten().any(|&v| v < 0.0) {
            return Err(Error::Domain("mobilities must be non-negative".into()));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {dt}")));
        }
        Ok(KolmogorovProblem { grid, mu, dt, z0 })
    }

    pub fn n_steps(&self) -> usize {
        self.mu.len()
    }
}

/// System matrix of one implicit step: tridiagonal with periodic corners,
/// unit column sums, and strict column diagonal dominance.
pub fn assemble_m_matrix(mu_k: &[f64], dt: f64, grid: &PeriodicGrid1D) -> PeriodicTridiag {
    let n = grid.n_cells;
    debug_assert_eq!(mu_k.len(), n);
    let lambda = dt / (grid.dx * grid.dx);
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for i in 0..n {
        lower[i] = -lambda * mu_k[(i + n - 1) % n];
        diag[i] = 1.0 + 2.0 * lambda * mu_k[i];
        upper[i] = -lambda * mu_k[(i + 1) % n];
    }
    PeriodicTridiag { lower, diag, upper }
}

/// One implicit forward step: solves `M z = z_prev`. Preserves the sum of
/// `z` exactly (unit column sums) and componentwise non-negativity
/// (M-matrix monotonicity).
pub fn forward_step(
    z_prev: &[f64],
    mu_k: &[f64],
    dt: f64,
    grid: &PeriodicGrid1D,
) -> Result<Vec<f64>> {
    assemble_m_matrix(mu_k, dt, grid).solve(z_prev)
}

/// Runs the forward problem, returning `z^0..z^(n_steps)`.
pub fn solve_forward(problem: &KolmogorovProblem) -> Result<Vec<Vec<f64>>> {
    let mut states = Vec::with_capacity(problem.n_steps() + 1);
    states.push(problem.z0.clone());
    for mu_k in &problem.mu {
        let next = forward_step(states.last().unwrap(), mu_k, problem.dt, &problem.grid)?;
        states.push(next);
    }
    Ok(states)
}

fn positive_part_sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x))
}

fn negative_part_sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(-x))
}

/// Per-step result of the sup-norm bound check.
#[derive(Debug, Clone)]
pub struct LinfBoundStep {
    pub step: usize,
    pub lower: f64,
    pub upper: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct LinfBoundsReport {
    pub steps: Vec<LinfBoundStep>,
    pub all_pass: bool,
}

/// Verifies the product sup-norm bounds
/// `lo_k = gamma * prod_n (1 + dt |[Lap mu^n]_-|)^-1` and
/// `up_k = Gamma * prod_n (1 - dt |[Lap mu^n]_+|)^-1` against the computed
/// trajectory. Requires `dt
/// < 1 / max_k |[Lap mu^k]_+|` (otherwise the bound does not apply).
pub fn linf_bounds_check(
    problem: &KolmogorovProblem,
    gamma: f64,
    big_gamma: f64,
) -> Result<LinfBoundsReport> {
    let mesh = Mesh::One(problem.grid);
    let laps: Vec<Vec<f64>> =
        problem.mu.iter().map(|mu_k| discrete_laplacian(mu_k, &mesh)).collect();
    let pos_max = laps.iter().map(|l| positive_part_sup(l)).fold(0.0f64, f64::max);
    if pos_max > 0.0 && problem.dt >= 1.0 / pos_max {
        return Err(Error::BoundInapplicable(format!(
            "dt = {} is not below 1/max |[Lap mu]_+| = {}",
            problem.dt,
            1.0 / pos_max
        )));
    }
    let states = solve_forward(problem)?;
    let mut lower = gamma;
    let mut upper = big_gamma;
    let mut steps = Vec::with_capacity(problem.n_steps());
    let mut all_pass = true;
    for (k, lap) in laps.iter().enumerate() {
        lower /= 1.0 + problem.dt * negative_part_sup(lap);
        upper /= 1.0 - problem.dt * positive_part_sup(lap);
        let z = &states[k + 1];
        let z_min = z.iter().cloned().fold(f64::INFINITY, f64::min);
        let z_max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let slack = 1e-12 * (1.0 + z_max.abs());
        let pass = z_min >= lower - slack && z_max <= upper + slack;
        all_pass &= pass;
        steps.push(LinfBoundStep { step: k + 1, lower, upper, z_min, z_max, pass });
    }
    Ok(LinfBoundsReport { steps, all_pass })
}

/// Per-step result of the energy estimate check.
#[derive(Debug, Clone)]
pub struct EnergyStep {
    pub step: usize,
    pub left: f64,
    pub right: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct EnergyReport {
    pub steps: Vec<EnergyStep>,
    pub all_pass: bool,
}

/// Verifies, step by step, that the squared `L^2` norm plus the accumulated
/// weighted gradient sum stays below the Gronwall product times the initial
/// energy.
pub fn energy_estimate_check(problem: &KolmogorovProblem) -> Result<EnergyReport> {
    let mesh = Mesh::One(problem.grid);
    let grid = &problem.grid;
    let n = grid.n_cells;
    let laps: Vec<Vec<f64>> =
        problem.mu.iter().map(|mu_k| discrete_laplacian(mu_k, &mesh)).collect();
    let pos_max = laps.iter().map(|l| positive_part_sup(l)).fold(0.0f64, f64::max);
    if pos_max > 0.0 && problem.dt >= 1.0 / pos_max {
        return Err(Error::BoundInapplicable(format!(
            "dt = {} is not below 1/max |[Lap mu]_+| = {}",
            problem.dt,
            1.0 / pos_max
        )));
    }
    let states = solve_forward(problem)?;
    let l2_sq = |z: &[f64]| -> f64 { z.iter().map(|v| v * v).sum::<f64>() * grid.dx };
    let e0 = l2_sq(&problem.z0);
    let mut gradient_sum = 0.0;
    let mut product = 1.0;
    let mut steps = Vec::with_capacity(problem.n_steps());
    let mut all_pass = true;
    for k in 1..=problem.n_steps() {
        let z = &states[k];
        let mu_k = &problem.mu[k - 1];
        for i in 0..n {
            let ip = (i + 1) % n;
            let diff = z[ip] - z[i];
            gradient_sum += problem.dt * (mu_k[i] + mu_k[ip]) * diff * diff / grid.dx;
        }
        product /= 1.0 - problem.dt * positive_part_sup(&laps[k - 1]);
        let left = l2_sq(z) + gradient_sum;
        let right = product * e0;
        let pass = left <= right + 1e-12 * right.abs().max(1.0);
        all_pass &= pass;
        steps.push(EnergyStep { step: k, left, right, pass });
    }
    Ok(EnergyReport { steps, all_pass })
}

/// Backward dual data: one source vector per step; the terminal condition is
/// identically zero.
#[derive(Debug, Clone)]
pub struct DualProblem {
    pub sources: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct DualReport {
    /// `v^k` for `k = 1..=n_steps` (index 0 holds `v^1`).
    pub v: Vec<Vec<f64>>,
    /// Left sides of the seminorm estimate per `k`.
    pub lhs: Vec<f64>,
    /// Right side `|mu^(-1/2) S|^2_{L2(QT)}`.
    pub rhs: f64,
    pub all_pass: bool,
}

/// Solves the transposed systems backward in time,
/// `(M^k)^T v^k = v^(k+1) + dt S^k`, and verifies the seminorm estimate
/// `|v^k|^2_{1,2} + sum_{n>=k} dt sum_i dx mu^n_i (Lap v^n)_i^2
///  <= |mu^(-1/2) S|^2_{L2(QT)}`. Requires strictly positive mobilities.
pub fn dual_solve(problem: &KolmogorovProblem, dual: &DualProblem) -> Result<DualReport> {
    let grid = &problem.grid;
    let n = grid.n_cells;
    let n_steps = problem.n_steps();
    if dual.sources.len() != n_steps || dual.sources.iter().any(|s| s.len() != n) {
        return Err(Error::InvalidConfig("dual sources do not match the problem".into()));
    }
    if problem.mu.iter().flatten().any(|&m| !(m > 0.0)) {
        return Err(Error::Domain(
            "dual estimates require strictly positive mobilities".into(),
        ));
    }
    let mesh = Mesh::One(*grid);

    let mut v_next = vec![0.0; n];
    let mut v_all = vec![Vec::new(); n_steps];
    for k in (0..n_steps).rev() {
        let m = assemble_m_matrix(&problem.mu[k], problem.dt, grid).transpose();
        let rhs: Vec<f64> = v_next
            .iter()
            .zip(&dual.sources[k])
            .map(|(v, s)| v + problem.dt * s)
            .collect();
        let v = m.solve(&rhs)?;
        v_all[k] = v.clone();
        v_next = v;
    }

    let rhs: f64 = (0..n_steps)
        .map(|k| {
            problem.dt
                * (0..n)
                    .map(|i| {
                        grid.dx * dual.sources[k][i] * dual.sources[k][i] / problem.mu[k][i]
                    })
                    .sum::<f64>()
        })
        .sum();

    // suffix sums of the weighted curvature term
    let seminorm_sq = |v: &[f64]| -> f64 {
        (0..n)
            .map(|i| {
                let d = v[(i + 1) % n] - v[i];
                d * d / grid.dx
            })
            .sum()
    };
    let curvature: Vec<f64> = (0..n_steps)
        .map(|k| {
            let lap = discrete_laplacian(&v_all[k], &mesh);
            problem.dt
                * (0..n)
                    .map(|i| grid.dx * problem.mu[k][i] * lap[i] * lap[i])
                    .sum::<f64>()
        })
        .collect();
    let mut suffix = 0.0;
    let mut lhs = vec![0.0; n_steps];
    for k in (0..n_steps).rev() {
        suffix += curvature[k];
        lhs[k] = seminorm_sq(&v_all[k]) + suffix;
    }
    let all_pass = lhs.iter().all(|&l| l <= rhs + 1e-12 * rhs.max(1.0));
    Ok(DualReport { v: v_all, lhs, rhs, all_pass })
}

#[derive(Debug, Clone, Copy)]
pub struct DualityReport {
    /// `(sum_k dt sum_i dx mu^k_i (z^k_i)^2)^(1/2)`.
    pub lhs: f64,
    /// `(1 + |mu|^(1/2)_{L1(QT)}) |z0|_{L2}`.
    pub normalizer: f64,
    /// `lhs / normalizer`; bounded under refinement (the constant in front
    /// is not explicit, so boundedness is what is reported).
    pub ratio: f64,
}

/// Duality inequality diagnostic for the forward problem.
pub fn duality_inequality_check(problem: &KolmogorovProblem) -> Result<DualityReport> {
    if problem.mu.iter().flatten().any(|&m| !(m > 0.0)) {
        return Err(Error::Domain(
            "duality diagnostic requires strictly positive mobilities".into(),
        ));
    }
    let grid = &problem.grid;
    let states = solve_forward(problem)?;
    let mut lhs_sq = 0.0;
    let mut mu_l1 = 0.0;
    for (k, mu_k) in problem.mu.iter().enumerate() {
        let z = &states[k + 1];
        for i in 0..grid.n_cells {
            lhs_sq += problem.dt * grid.dx * mu_k[i] * z[i] * z[i];
            mu_l1 += problem.dt * grid.dx * mu_k[i];
        }
    }
    let z0_l2 =
        (problem.z0.iter().map(|v| v * v).sum::<f64>() * grid.dx).sqrt();
    let lhs = lhs_sq.sqrt();
    let normalizer = (1.0 + mu_l1.sqrt()) * z0_l2;
    Ok(DualityReport { lhs, normalizer, ratio: if normalizer > 0.0 { lhs / normalizer } else { 0.0 } })
}

/// Product bounds of the discrete Gronwall inequality: for non-negative
/// `a_k` with `dt < 1/sup a_k`, any sequence with
/// `u_n <= u_0 + dt sum_{k<=n} a_k u_k` satisfies
/// `u_n <= u_0 * prod_{k<=n} (1 - dt a_k)^-1`. Returns the bound for each
/// `n = 1..=a.len()`.
pub fn discrete_gronwall(u0: f64, a: &[f64], dt: f64) -> Result<Vec<f64>> {
    if u0 < 0.0 || a.iter().any(|&x| x < 0.0) {
        return Err(Error::Domain("Gronwall data must be non-negative".into()));
    }
    let sup = a.iter().cloned().fold(0.0f64, f64::max);
    if sup > 0.0 && dt >= 1.0 / sup {
        return Err(Error::BoundInapplicable(format!(
            "dt = {dt} violates dt < 1/sup(a) = {}",
            1.0 / sup
        )));
    }
    let mut bounds = Vec::with_capacity(a.len());
    let mut value = u0;
    for &ak in a {
        value /= 1.0 - dt * ak;
        bounds.push(value);
    }
    Ok(bounds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_periodic_1d;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn smooth_mu(grid: &PeriodicGrid1D, steps: usize, base: f64, wobble: f64) -> Vec<Vec<f64>> {
        let nu = 2.0 * std::f64::consts::PI / grid.length;
        (0..steps)
            .map(|k| {
                (0..grid.n_cells)
                    .map(|i| {
                        base + wobble
                            * (nu * grid.center(i)).sin()
                            * (0.3 * (k as f64 + 1.0)).cos()
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn m_matrix_entries_and_column_sums() {
        let g = make_periodic_1d(4, 2.0).unwrap();
        // dt/dx^2 = 1
        let dt = g.dx * g.dx;
        let m = assemble_m_matrix(&[1.0; 4], dt, &g);
        assert!(m.diag.iter().all(|&d| (d - 3.0).abs() < 1e-15));
        assert!(m.lower.iter().chain(m.upper.iter()).all(|&o| (o + 1.0).abs() < 1e-15));

        // mu = 0 gives the identity
        let m0 = assemble_m_matrix(&[0.0; 4], dt, &g);
        assert!(m0.diag.iter().all(|&d| d == 1.0));
        assert!(m0.lower.iter().chain(m0.upper.iter()).all(|&o| o == 0.0));

        // unit column sums for arbitrary mobilities
        let g = make_periodic_1d(7, 1.0).unwrap();
        let mu: Vec<f64> = (0..7).map(|i| 0.2 + (i as f64) * 0.3).collect();
        let m = assemble_m_matrix(&mu, 0.05, &g);
        for c in 0..7 {
            // column c receives diag[c], lower[c+1], upper[c-1]
            let sum = m.diag[c] + m.lower[(c + 1) % 7] + m.upper[(c + 6) % 7];
            assert!((sum - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn forward_step_preserves_sum_positivity_and_matches_dense() {
        let g = make_periodic_1d(8, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let mu: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..3.0)).collect();
        let z0: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..2.0)).collect();
        let z1 = forward_step(&z0, &mu, 0.02, &g).unwrap();
        assert!(z1.iter().all(|&v| v >= -1e-14));
        let s0: f64 = z0.iter().sum();
        let s1: f64 = z1.iter().sum();
        assert!((s0 - s1).abs() < 1e-12 * s0.max(1.0));

        // dense oracle: full Gaussian elimination on the assembled matrix
        let m = assemble_m_matrix(&mu, 0.02, &g);
        let n = 8usize;
        let mut dense = vec![0.0; n * n];
        for i in 0..n {
            dense[i * n + (i + n - 1) % n] += m.lower[i];
            dense[i * n + i] += m.diag[i];
            dense[i * n + (i + 1) % n] += m.upper[i];
        }
        let mut x = z0.clone();
        for k in 0..n {
            let p = (k..n).max_by(|&a, &b| {
                dense[a * n + k].abs().partial_cmp(&dense[b * n + k].abs()).unwrap()
            }).unwrap();
            for c in 0..n {
                dense.swap(k * n + c, p * n + c);
            }
            x.swap(k, p);
            for r in k + 1..n {
                let f = dense[r * n + k] / dense[k * n + k];
                for c in k..n {
                    dense[r * n + c] -= f * dense[k * n + c];
                }
                x[r] -= f * x[k];
            }
        }
        for k in (0..n).rev() {
            for c in k + 1..n {
                x[k] -= dense[k * n + c] * x[c];
            }
            x[k] /= dense[k * n + k];
        }
        for (a, b) in z1.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }

        // identity when mu = 0
        let z_same = forward_step(&z0, &[0.0; 8], 0.02, &g).unwrap();
        for (a, b) in z_same.iter().zip(&z0) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn forward_step_is_monotone() {
        let g = make_periodic_1d(16, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mu: Vec<f64> = (0..16).map(|_| rng.gen_range(0.0..2.0)).collect();
        let w0: Vec<f64> = (0..16).map(|_| rng.gen_range(0.0..1.0)).collect();
        let z0: Vec<f64> = w0.iter().map(|&v| v + rng.gen_range(0.0..0.5)).collect();
        let z1 = forward_step(&z0, &mu, 0.03, &g).unwrap();
        let w1 = forward_step(&w0, &mu, 0.03, &g).unwrap();
        for (a, b) in z1.iter().zip(&w1) {
            assert!(a >= &(b - 1e-12));
        }
    }

    #[test]
    fn linf_bounds_hold_on_smooth_mobility() {
        let g = make_periodic_1d(64, 1.0).unwrap();
        let mu = smooth_mu(&g, 12, 1.0, 0.5);
        let problem = KolmogorovProblem::new(g, mu, 1e-3, vec![1.5; 64]).unwrap();
        let report = linf_bounds_check(&problem, 1.5, 1.5).unwrap();
        assert!(report.all_pass);

        // constant-in-space mobility: bounds reduce to the initial envelope
        let flat = KolmogorovProblem::new(g, vec![vec![2.0; 64]; 5], 1e-2, vec![1.0; 64])
            .unwrap();
        let report = linf_bounds_check(&flat, 0.5, 2.5).unwrap();
        for s in &report.steps {
            assert_eq!(s.lower, 0.5);
            assert_eq!(s.upper, 2.5);
            assert!(s.pass);
        }
    }

    #[test]
    fn linf_bounds_reject_large_dt() {
        let g = make_periodic_1d(32, 1.0).unwrap();
        let mu = smooth_mu(&g, 3, 1.0, 0.9);
        let problem = KolmogorovProblem::new(g, mu, 10.0, vec![1.0; 32]).unwrap();
        assert!(matches!(
            linf_bounds_check(&problem, 1.0, 1.0),
            Err(Error::BoundInapplicable(_))
        ));
    }

    #[test]
    fn energy_estimate_cases() {
        let g = make_periodic_1d(32, 1.0).unwrap();
        let z0: Vec<f64> = (0..32).map(|i| 1.0 + (i as f64 * 0.37).sin()).collect();

        // mu = 0: identity evolution, equality of left and right
        let problem = KolmogorovProblem::new(g, vec![vec![0.0; 32]; 4], 0.01, z0.clone())
            .unwrap();
        let report = energy_estimate_check(&problem).unwrap();
        let e0: f64 = z0.iter().map(|v| v * v).sum::<f64>() * g.dx;
        for s in &report.steps {
            assert!((s.left - e0).abs() < 1e-12 && (s.right - e0).abs() < 1e-12);
        }

        // spatially constant mu: right side stays at the initial energy
        let problem =
            KolmogorovProblem::new(g, vec![vec![1.3; 32]; 6], 0.01, z0.clone()).unwrap();
        let report = energy_estimate_check(&problem).unwrap();
        for s in &report.steps {
            assert!((s.right - e0).abs() < 1e-12);
            assert!(s.pass);
        }

        // random smooth mobility over 10 steps
        let mu = smooth_mu(&g, 10, 1.0, 0.6);
        let problem = KolmogorovProblem::new(g, mu, 1e-3, z0).unwrap();
        assert!(energy_estimate_check(&problem).unwrap().all_pass);
    }

    #[test]
    fn dual_solver_zero_source_transpose_and_dense_oracle() {
        let g = make_periodic_1d(8, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mu = vec![
            (0..8).map(|_| rng.gen_range(0.5..2.0)).collect::<Vec<f64>>(),
            (0..8).map(|_| rng.gen_range(0.5..2.0)).collect::<Vec<f64>>(),
        ];
        let problem = KolmogorovProblem::new(g, mu.clone(), 0.05, vec![1.0; 8]).unwrap();

        // zero source gives the zero dual state
        let zero = DualProblem { sources: vec![vec![0.0; 8]; 2] };
        let report = dual_solve(&problem, &zero).unwrap();
        assert!(report.v.iter().flatten().all(|&v| v.abs() < 1e-14));

        // adjoint identity <M z, v> = <z, M^T v>
        let m = assemble_m_matrix(&mu[0], 0.05, &g);
        let mt = m.transpose();
        let z: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mz = m.matvec(&z);
        let mtv = mt.matvec(&v);
        let a: f64 = mz.iter().zip(&v).map(|(x, y)| x * y).sum();
        let b: f64 = z.iter().zip(&mtv).map(|(x, y)| x * y).sum();
        assert!((a - b).abs() < 1e-13);

        // random sources against a dense backward oracle
        let sources: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let dual = DualProblem { sources: sources.clone() };
        let report = dual_solve(&problem, &dual).unwrap();
        assert!(report.all_pass);
        // oracle: dense solve of (M^k)^T v = v_next + dt S^k (row-built)
        let mut v_next = vec![0.0; 8];
        for k in (0..2).rev() {
            let mt = assemble_m_matrix(&mu[k], 0.05, &g).transpose();
            let n = 8usize;
            let mut dense = vec![0.0; n * n];
            for i in 0..n {
                dense[i * n + (i + n - 1) % n] += mt.lower[i];
                dense[i * n + i] += mt.diag[i];
                dense[i * n + (i + 1) % n] += mt.upper[i];
            }
            let mut rhs: Vec<f64> =
                v_next.iter().zip(&sources[k]).map(|(v, s)| v + 0.05 * s).collect();
            // Gaussian elimination
            for kk in 0..n {
                let p = (kk..n).max_by(|&a, &b| {
                    dense[a * n + kk].abs().partial_cmp(&dense[b * n + kk].abs()).unwrap()
                }).unwrap();
                for c in 0..n {
                    dense.swap(kk * n + c, p * n + c);
                }
                rhs.swap(kk, p);
                for r in kk + 1..n {
                    let f = dense[r * n + kk] / dense[kk * n + kk];
                    for c in kk..n {
                        dense[r * n + c] -= f * dense[kk * n + c];
                    }
                    rhs[r] -= f * rhs[kk];
                }
            }
            for kk in (0..n).rev() {
                for c in kk + 1..n {
                    rhs[kk] -= dense[kk * n + c] * rhs[c];
                }
                rhs[kk] /= dense[kk * n + kk];
            }
            for (a, b) in report.v[k].iter().zip(&rhs) {
                assert!((a - b).abs() < 1e-12);
            }
            v_next = rhs;
        }
    }

    #[test]
    fn duality_check_trivial_and_constant() {
        let g = make_periodic_1d(16, 2.0).unwrap();
        // zero initial datum: zero left side
        let problem =
            KolmogorovProblem::new(g, vec![vec![1.0; 16]; 3], 0.1, vec![0.0; 16]).unwrap();
        assert_eq!(duality_inequality_check(&problem).unwrap().lhs, 0.0);

        // mu = 1, z0 = 1: z stays 1 and lhs = sqrt(T L)
        let problem =
            KolmogorovProblem::new(g, vec![vec![1.0; 16]; 4], 0.25, vec![1.0; 16]).unwrap();
        let report = duality_inequality_check(&problem).unwrap();
        assert!((report.lhs - (1.0f64 * 2.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn gronwall_bounds() {
        // a = 0 keeps the bound at u0
        let b = discrete_gronwall(2.0, &[0.0; 5], 0.1).unwrap();
        assert!(b.iter().all(|&v| (v - 2.0).abs() < 1e-15));
        // u0 = 1, a = 1, dt = 1/2, n = 2 gives (1 - 1/2)^-2 = 4
        let b = discrete_gronwall(1.0, &[1.0, 1.0], 0.5).unwrap();
        assert!((b[1] - 4.0).abs() < 1e-14);
        // hypothesis violation rejected
        assert!(discrete_gronwall(1.0, &[2.0], 0.5).is_err());
    }

    #[test]
    fn gronwall_bound_respected_by_equality_sequences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let len = rng.gen_range(1..20);
            let a: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..2.0)).collect();
            let sup = a.iter().cloned().fold(0.0f64, f64::max);
            let dt = if sup > 0.0 {
                rng.gen_range(0.01..1.0) / sup
            } else {
                rng.gen_range(0.01..1.0)
            };
            let u0 = rng.gen_range(0.1..3.0);
            let bounds = discrete_gronwall(u0, &a, dt).unwrap();
            // forward recursion with equality in the hypothesis
            let mut u = Vec::with_capacity(len);
            let mut weighted_sum = 0.0;
            for k in 0..len {
                let un = (u0 + weighted_sum) / (1.0 - dt * a[k]);
                weighted_sum += dt * a[k] * un;
                u.push(un);
            }
            for (un, bn) in u.iter().zip(&bounds) {
                assert!(*un <= bn * (1.0 + 1e-12), "{un} vs {bn}");
            }
        }
    }
}
