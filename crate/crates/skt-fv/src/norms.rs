//! Discrete norms and seminorms, the Boltzmann entropy and its dissipation
//! functional, and the exact one-dimensional Wasserstein-1 distance.

use crate::error::{Error, Result};
use crate::grid::PeriodicGrid1D;
use crate::kernels::DiscreteKernel;

/// Norm selector for the discrete functionals below.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormKind {
    /// `L^p` norm, `p >= 1` or `f64::INFINITY`.
    Lp(f64),
    /// Discrete `W^{1,p}` seminorm, `p` finite.
    W1pSeminorm(f64),
    /// `L^1` plus total variation; equals the discrete `W^{1,1}` norm for
    /// piecewise constants.
    Bv,
}

/// Evaluates a [`NormKind`] on a periodic 1D cell vector.
pub fn norm_1d(kind: NormKind, u: &[f64], grid: &PeriodicGrid1D) -> Result<f64> {
    match kind {
        NormKind::Lp(p) => lp_norm(u, grid.dx, p),
        NormKind::W1pSeminorm(p) => w1p_seminorm(u, grid, p),
        NormKind::Bv => Ok(w1p_seminorm(u, grid, 1.0)? + lp_norm(u, grid.dx, 1.0)?),
    }
}

/// `(sum measure * |u_i|^p)^(1/p)`, or `max |u_i|` for `p = infinity`.
/// `measure` is the cell volume (`dx`, or `dx*dy` in 2D).
pub fn lp_norm(u: &[f64], measure: f64, p: f64) -> Result<f64> {
    if p.is_infinite() && p > 0.0 {
        return Ok(u.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    if !(p >= 1.0) {
        return Err(Error::Domain(format!("Lp norm requires p >= 1, got {p}")));
    }
    if p == 1.0 {
        return Ok(u.iter().map(|v| v.abs()).sum::<f64>() * measure);
    }
    if p == 2.0 {
        return Ok((u.iter().map(|v| v * v).sum::<f64>() * measure).sqrt());
    }
    Ok((u.iter().map(|v| v.abs().powf(p)).sum::<f64>() * measure).powf(1.0 / p))
}

/// Discrete `W^{1,p}` seminorm with periodic wrap:
/// `(sum_i dx * |(u_{i+1} - u_i)/dx|^p)^(1/p)`, `p` finite.
pub fn w1p_seminorm(u: &[f64], grid: &PeriodicGrid1D, p: f64) -> Result<f64> {
    if !(p >= 1.0) || p.is_infinite() {
        return Err(Error::Domain(format!(
            "W^(1,p) seminorm requires finite p >= 1, got {p}"
        )));
    }
    let n = grid.n_cells;
    debug_assert_eq!(u.len(), n);
    let mut acc = 0.0;
    for i in 0..n {
        let diff = (u[(i + 1) % n] - u[i]).abs() / grid.dx;
        acc += grid.dx * if p == 2.0 { diff * diff } else { diff.powf(p) };
    }
    Ok(acc.powf(1.0 / p))
}

/// `x log x` continuously extended by 0 at the origin.
#[inline]
fn x_log_x(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Entropy density `(x (log x - 1) + 1) / d`, with value `1/d` at `x = 0`.
#[inline]
pub fn entropy_density(x: f64, d: f64) -> f64 {
    (x_log_x(x) - x + 1.0) / d
}

/// Boltzmann entropy `sum measure * (h1(u1_i) + h2(u2_i))` with the species
/// weights `1/d12` and `1/d21`. Non-negative for non-negative states.
pub fn entropy(u1: &[f64], u2: &[f64], d12: f64, d21: f64, measure: f64) -> Result<f64> {
    if !(d12 > 0.0 && d21 > 0.0) {
        return Err(Error::Domain(format!(
            "entropy weights require d12, d21 > 0 (got {d12}, {d21})"
        )));
    }
    let mut acc = 0.0;
    for &x in u1 {
        if x < 0.0 {
            return Err(Error::Domain(format!("entropy of negative density {x}")));
        }
        acc += entropy_density(x, d12);
    }
    for &x in u2 {
        if x < 0.0 {
            return Err(Error::Domain(format!("entropy of negative density {x}")));
        }
        acc += entropy_density(x, d21);
    }
    Ok(acc * measure)
}

/// Entropy dissipation functional of a two-species state: two kernel-weighted
/// square-root pair sums, the two gradient terms of `sqrt(u_j)`, and the
/// cross term weighted by `rho`. Cost is `O(N * |kernel support|)`; intended
/// for diagnostics, not the time-stepping hot path.
#[allow(clippy::too_many_arguments)]
pub fn dissipation(
    u1: &[f64],
    u2: &[f64],
    sigma1: &DiscreteKernel,
    sigma2: &DiscreteKernel,
    rho: &DiscreteKernel,
    d1: f64,
    d2: f64,
    d11: f64,
    d22: f64,
    d12: f64,
    d21: f64,
    grid: &PeriodicGrid1D,
) -> Result<f64> {
    if !(d12 > 0.0 && d21 > 0.0) {
        return Err(Error::Domain(format!(
            "dissipation weights require d12, d21 > 0 (got {d12}, {d21})"
        )));
    }
    if u1.iter().chain(u2.iter()).any(|&x| x < 0.0) {
        return Err(Error::Domain("dissipation of a negative density".into()));
    }
    let n = grid.n_cells;
    let s1: Vec<f64> = u1.iter().map(|&x| x.sqrt()).collect();
    let s2: Vec<f64> = u2.iter().map(|&x| x.sqrt()).collect();

    // kernel-weighted sum over index shifts j of pair差 squares
    let pair_sum = |kernel: &DiscreteKernel, a: &[f64], b: &[f64]| -> f64 {
        let mut total = 0.0;
        for (j, &kj) in kernel.values.iter().enumerate() {
            if kj == 0.0 {
                continue;
            }
            let mut inner = 0.0;
            for i in 0..n {
                let ip = (i + 1) % n;
                let d = a[ip] * b[(ip + n - j) % n] - a[i] * b[(i + n - j) % n];
                inner += d * d;
            }
            total += kj * inner;
        }
        total
    };

    let mut total = 0.0;
    if d11 > 0.0 {
        total += 2.0 * d11 / d12 * pair_sum(sigma1, &s1, &s1);
    }
    if d22 > 0.0 {
        total += 2.0 * d22 / d21 * pair_sum(sigma2, &s2, &s2);
    }
    let grad_sq = |s: &[f64]| -> f64 {
        (0..n).map(|i| {
            let d = s[(i + 1) % n] - s[i];
            d * d
        }).sum::<f64>() / grid.dx
    };
    total += 4.0 * d1 / d12 * grad_sq(&s1);
    total += 4.0 * d2 / d21 * grad_sq(&s2);
    total += 4.0 * pair_sum(rho, &s1, &s2);
    Ok(total)
}

/// Exact Wasserstein-1 distance between two non-negative cell densities of
/// equal mass on `[0, L)`, computed as the L1 norm of the difference of the
/// piecewise-linear cumulative functions. The domain is treated as an
/// interval, not a torus.
pub fn wasserstein1(f: &[f64], g: &[f64], grid: &PeriodicGrid1D) -> Result<f64> {
    let n = grid.n_cells;
    if f.len() != n || g.len() != n {
        return Err(Error::InvalidConfig("wasserstein1: vector/grid mismatch".into()));
    }
    if f.iter().chain(g.iter()).any(|&x| x < 0.0) {
        return Err(Error::Domain("wasserstein1 requires non-negative densities".into()));
    }
    let mass_f: f64 = f.iter().sum::<f64>() * grid.dx;
    let mass_g: f64 = g.iter().sum::<f64>() * grid.dx;
    if (mass_f - mass_g).abs() > 1e-10 * mass_f.abs().max(1e-300) {
        return Err(Error::Domain(format!(
            "wasserstein1 requires equal masses, got {mass_f} and {mass_g}"
        )));
    }
    // H = F - G is piecewise linear with breakpoints at the cell interfaces
    let mut total = 0.0;
    let mut h0 = 0.0f64;
    for i in 0..n {
        let h1 = h0 + grid.dx * (f[i] - g[i]);
        total += if h0 * h1 >= 0.0 {
            0.5 * (h0.abs() + h1.abs()) * grid.dx
        } else {
            let t = h0 / (h0 - h1) * grid.dx;
            0.5 * (h0.abs() * t + h1.abs() * (grid.dx - t))
        };
        h0 = h1;
    }
    Ok(total)
}

/// Discrete `L^2(Q_T)` norm of a time series of cell vectors.
pub fn l2_space_time(w: &[Vec<f64>], dt: f64, measure: f64) -> f64 {
    (w.iter()
        .map(|wk| wk.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        * dt
        * measure)
        .sqrt()
}
