//! Finite volume operators of the nonlocal SKT system: nonlocal diffusion
//! coefficients, discrete Laplacian, two-point fluxes, reaction terms, the
//! implicit one-step residual, and the structural bound computations
//! (maximum principle, duality functional).

use crate::error::{Error, Result};
use crate::grid::{Mesh, PeriodicGrid1D};
use crate::kernels::{self, DiscreteKernel, KernelSpec};

/// Reaction terms evaluated pointwise at the (implicit) candidate state.
#[derive(Debug, Clone, PartialEq)]
pub enum ReactionSpec {
    Zero,
    /// `R_j = u_j (a_j0 - a_j1 u_1 - a_j2 u_2)` with non-negative coefficients.
    LotkaVolterra { a10: f64, a11: f64, a12: f64, a20: f64, a21: f64, a22: f64 },
    /// `R_1 = a u1 + e u1^2 - b u1 u2`, `R_2 = -d u2^2 + c u1 u2`.
    SegelLevin { a: f64, b: f64, c: f64, d: f64, e: f64 },
    /// `R_1 = a u1 + e u1^2 - d u1^3 - b u1 u2`,
    /// `R_2 = -f u2 - g u2^2 + c u1 u2`.
    MimuraNishiuraYamaguti { a: f64, b: f64, c: f64, d: f64, e: f64, f: f64, g: f64 },
}

impl ReactionSpec {
    /// Standard phytoplankton-herbivore coefficients.
    pub fn segel_levin_standard() -> Self {
        ReactionSpec::SegelLevin { a: 1.0, b: 1.0, c: 1.0, d: 1.0, e: 1.0 / 3.0 }
    }

    /// Standard coefficients of the cubic prey-predator variant.
    pub fn mny_standard() -> Self {
        ReactionSpec::MimuraNishiuraYamaguti {
            a: 35.0 / 9.0,
            b: 1.0,
            c: 1.0,
            d: 1.0 / 9.0,
            e: 16.0 / 9.0,
            f: 1.0,
            g: 2.0 / 5.0,
        }
    }

    /// Pointwise value `(R_1, R_2)`.
    #[inline]
    pub fn eval(&self, u1: f64, u2: f64) -> (f64, f64) {
        match *self {
            ReactionSpec::Zero => (0.0, 0.0),
            ReactionSpec::LotkaVolterra { a10, a11, a12, a20, a21, a22 } => (
                u1 * (a10 - a11 * u1 - a12 * u2),
                u2 * (a20 - a21 * u1 - a22 * u2),
            ),
            ReactionSpec::SegelLevin { a, b, c, d, e } => {
                (a * u1 + e * u1 * u1 - b * u1 * u2, -d * u2 * u2 + c * u1 * u2)
            }
            ReactionSpec::MimuraNishiuraYamaguti { a, b, c, d, e, f, g } => (
                a * u1 + e * u1 * u1 - d * u1 * u1 * u1 - b * u1 * u2,
                -f * u2 - g * u2 * u2 + c * u1 * u2,
            ),
        }
    }

    /// Pointwise Jacobian `[[dR1/du1, dR1/du2], [dR2/du1, dR2/du2]]`.
    #[inline]
    pub fn jacobian(&self, u1: f64, u2: f64) -> [[f64; 2]; 2] {
        match *self {
            ReactionSpec::Zero => [[0.0; 2]; 2],
            ReactionSpec::LotkaVolterra { a10, a11, a12, a20, a21, a22 } => [
                [a10 - 2.0 * a11 * u1 - a12 * u2, -a12 * u1],
                [-a21 * u2, a20 - a21 * u1 - 2.0 * a22 * u2],
            ],
            ReactionSpec::SegelLevin { a, b, c, d, e } => [
                [a + 2.0 * e * u1 - b * u2, -b * u1],
                [c * u2, -2.0 * d * u2 + c * u1],
            ],
            ReactionSpec::MimuraNishiuraYamaguti { a, b, c, d, e, f, g } => [
                [a + 2.0 * e * u1 - 3.0 * d * u1 * u1 - b * u2, -b * u1],
                [c * u2, -f - 2.0 * g * u2 + c * u1],
            ],
        }
    }

    /// Spatially homogeneous equilibrium where both reactions vanish, if the
    /// variant has a positive one in closed form.
    pub fn equilibrium(&self) -> Option<(f64, f64)> {
        match *self {
            ReactionSpec::SegelLevin { a, b, c, d, e } => {
                let den = b * c - d * e;
                (den > 0.0).then(|| (a * d / den, a * c / den))
            }
            ReactionSpec::MimuraNishiuraYamaguti { a, b, c, d, e, f, g } => {
                let disc = b * b * c * c - 2.0 * b * c * e * g
                    + 4.0 * d * f * b * g
                    + e * e * g * g
                    + 4.0 * a * d * g * g;
                if disc < 0.0 {
                    return None;
                }
                let u2 = (c * disc.sqrt() - b * c * c + c * e * g - 2.0 * d * f * g)
                    / (2.0 * d * g * g);
                let u1 = (f + g * u2) / c;
                (u1 > 0.0 && u2 > 0.0).then_some((u1, u2))
            }
            _ => None,
        }
    }
}

/// Kernel assignments by role, kept in spec form so that bound computations
/// can query analytic kernel properties.
#[derive(Debug, Clone)]
pub struct KernelSet {
    pub sigma1: KernelSpec,
    pub sigma2: KernelSpec,
    pub rho1: KernelSpec,
    pub rho2: KernelSpec,
}

impl KernelSet {
    /// All four roles bound to the same (even) kernel.
    pub fn uniform(spec: KernelSpec) -> Self {
        KernelSet { sigma1: spec.clone(), sigma2: spec.clone(), rho1: spec.clone(), rho2: spec }
    }

    pub fn all_dirac() -> Self {
        Self::uniform(KernelSpec::Dirac)
    }
}

/// Coefficients and discretized kernels of the two-species scheme.
///
/// The self-diffusion constants `d1, d2, d11, d22` must be non-negative.
/// The cross-diffusion constants `d12, d21` must also be non-negative; they
/// are required to be strictly positive only by the entropy functionals,
/// which is checked where those are evaluated (the scheme itself runs fine
/// with one of them zero, as in the prey-predator studies).
#[derive(Debug, Clone)]
pub struct SchemeParams {
    pub d1: f64,
    pub d2: f64,
    pub d11: f64,
    pub d12: f64,
    pub d21: f64,
    pub d22: f64,
    pub sigma1: DiscreteKernel,
    pub sigma2: DiscreteKernel,
    pub rho1: DiscreteKernel,
    pub rho2: DiscreteKernel,
    pub reaction: ReactionSpec,
    specs: Option<KernelSet>,
}

impl SchemeParams {
    /// Discretizes the kernel set on `mesh` and validates the coefficients.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        d1: f64,
        d2: f64,
        d11: f64,
        d12: f64,
        d21: f64,
        d22: f64,
        kernels: KernelSet,
        reaction: ReactionSpec,
        mesh: &Mesh,
    ) -> Result<Self> {
        for (name, v) in
            [("d1", d1), ("d2", d2), ("d11", d11), ("d12", d12), ("d21", d21), ("d22", d22)]
        {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "diffusion coefficient {name} must be non-negative and finite, got {v}"
                )));
            }
        }
        let disc = |spec: &KernelSpec| -> Result<DiscreteKernel> {
            match mesh {
                Mesh::One(g) => kernels::discretize(spec, g),
                Mesh::Two(g) => kernels::discretize_2d(spec, g),
            }
        };
        Ok(SchemeParams {
            d1,
            d2,
            d11,
            d12,
            d21,
            d22,
            sigma1: disc(&kernels.sigma1)?,
            sigma2: disc(&kernels.sigma2)?,
            rho1: disc(&kernels.rho1)?,
            rho2: disc(&kernels.rho2)?,
            reaction,
            specs: Some(kernels),
        })
    }

    /// Builds params from already-discretized kernels (mainly for tests and
    /// custom kernel experiments).
    #[allow(clippy::too_many_arguments)]
    pub fn from_discrete(
        d1: f64,
        d2: f64,
        d11: f64,
        d12: f64,
        d21: f64,
        d22: f64,
        sigma1: DiscreteKernel,
        sigma2: DiscreteKernel,
        rho1: DiscreteKernel,
        rho2: DiscreteKernel,
        reaction: ReactionSpec,
    ) -> Self {
        SchemeParams {
            d1,
            d2,
            d11,
            d12,
            d21,
            d22,
            sigma1,
            sigma2,
            rho1,
            rho2,
            reaction,
            specs: None,
        }
    }

    pub fn kernel_specs(&self) -> Option<&KernelSet> {
        self.specs.as_ref()
    }

    /// Does the parameter set satisfy the symmetry hypotheses under which the
    /// entropy inequality is proved: `d12, d21 > 0`, even `sigma1, sigma2`,
    /// and `rho2` the reflection of `rho1`?
    pub fn satisfies_entropy_hypotheses(&self) -> bool {
        if !(self.d12 > 0.0 && self.d21 > 0.0) {
            return false;
        }
        if self.d11 > 0.0 && !self.sigma1.is_even() {
            return false;
        }
        if self.d22 > 0.0 && !self.sigma2.is_even() {
            return false;
        }
        let refl = self.rho1.reflected();
        let tol =
            1e-12 * refl.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        refl.values
            .iter()
            .zip(self.rho2.values.iter())
            .all(|(a, b)| (a - b).abs() <= tol)
    }
}

/// Two-species non-negative cell state at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub time: f64,
}

impl State {
    pub fn new(u1: Vec<f64>, u2: Vec<f64>, time: f64) -> Self {
        debug_assert_eq!(u1.len(), u2.len());
        State { u1, u2, time }
    }

    pub fn constant(n: usize, c1: f64, c2: f64) -> Self {
        State { u1: vec![c1; n], u2: vec![c2; n], time: 0.0 }
    }

    pub fn n_cells(&self) -> usize {
        self.u1.len()
    }

    /// Mass of each species, `measure * sum(u_j)`.
    pub fn masses(&self, measure: f64) -> (f64, f64) {
        (
            self.u1.iter().sum::<f64>() * measure,
            self.u2.iter().sum::<f64>() * measure,
        )
    }

    pub fn min_max(&self) -> ((f64, f64), (f64, f64)) {
        let mm = |v: &[f64]| {
            v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            })
        };
        (mm(&self.u1), mm(&self.u2))
    }
}

/// Discrete Laplacian with periodic wrap: second difference over `dx^2` in
/// 1D, the 5-point tensor stencil in 2D. Annihilates constants and sums to
/// zero (telescoping) on any input.
pub fn discrete_laplacian(w: &[f64], mesh: &Mesh) -> Vec<f64> {
    let mut out = vec![0.0; w.len()];
    laplacian_into(w, mesh, &mut out);
    out
}

pub(crate) fn laplacian_into(w: &[f64], mesh: &Mesh, out: &mut [f64]) {
    match mesh {
        Mesh::One(g) => {
            let n = g.n_cells;
            debug_assert_eq!(w.len(), n);
            let inv_dx2 = 1.0 / (g.dx * g.dx);
            for i in 0..n {
                let ip = if i + 1 == n { 0 } else { i + 1 };
                let im = if i == 0 { n - 1 } else { i - 1 };
                out[i] = (w[ip] - 2.0 * w[i] + w[im]) * inv_dx2;
            }
        }
        Mesh::Two(g) => {
            let (nx, ny) = (g.nx, g.ny);
            debug_assert_eq!(w.len(), nx * ny);
            let inv_dx2 = 1.0 / (g.dx * g.dx);
            let inv_dy2 = 1.0 / (g.dy * g.dy);
            for j in 0..ny {
                let jn = if j + 1 == ny { 0 } else { j + 1 };
                let jp = if j == 0 { ny - 1 } else { j - 1 };
                for i in 0..nx {
                    let ie = if i + 1 == nx { 0 } else { i + 1 };
                    let iw = if i == 0 { nx - 1 } else { i - 1 };
                    let c = w[i + nx * j];
                    out[i + nx * j] = (w[ie + nx * j] - 2.0 * c + w[iw + nx * j]) * inv_dx2
                        + (w[i + nx * jn] - 2.0 * c + w[i + nx * jp]) * inv_dy2;
                }
            }
        }
    }
}

/// Nonlocal diffusion coefficients
/// `mu1 = d1 + d11 sigma1*u1 + d12 rho1*u2` and
/// `mu2 = d2 + d21 rho2*u1 + d22 sigma2*u2`.
pub fn mu(state: &State, params: &SchemeParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = state.n_cells();
    let mut mu1 = vec![params.d1; n];
    let mut mu2 = vec![params.d2; n];
    if params.d11 != 0.0 {
        let c = params.sigma1.convolve(&state.u1)?;
        for (m, v) in mu1.iter_mut().zip(c) {
            *m += params.d11 * v;
        }
    }
    if params.d12 != 0.0 {
        let c = params.rho1.convolve(&state.u2)?;
        for (m, v) in mu1.iter_mut().zip(c) {
            *m += params.d12 * v;
        }
    }
    if params.d21 != 0.0 {
        let c = params.rho2.convolve(&state.u1)?;
        for (m, v) in mu2.iter_mut().zip(c) {
            *m += params.d21 * v;
        }
    }
    if params.d22 != 0.0 {
        let c = params.sigma2.convolve(&state.u2)?;
        for (m, v) in mu2.iter_mut().zip(c) {
            *m += params.d22 * v;
        }
    }
    Ok((mu1, mu2))
}

/// Two-point flux at one interface, `(u_l mu_l - u_r mu_r) / dx`.
/// Antisymmetric under swapping the cell pair.
#[inline]
pub fn interface_flux(u_left: f64, mu_left: f64, u_right: f64, mu_right: f64, dx: f64) -> f64 {
    (u_left * mu_left - u_right * mu_right) / dx
}

/// Per-interface numerical fluxes of both species on a 1D grid; entry `i`
/// is the flux through the interface between cells `i` and `i+1`.
pub fn fluxes(
    state: &State,
    params: &SchemeParams,
    grid: &PeriodicGrid1D,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (mu1, mu2) = mu(state, params)?;
    let n = grid.n_cells;
    let flux = |u: &[f64], m: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let ip = (i + 1) % n;
                interface_flux(u[i], m[i], u[ip], m[ip], grid.dx)
            })
            .collect()
    };
    Ok((flux(&state.u1, &mu1), flux(&state.u2, &mu2)))
}

/// Pointwise reaction values for the whole state.
pub fn reaction(state: &State, spec: &ReactionSpec) -> (Vec<f64>, Vec<f64>) {
    let n = state.n_cells();
    let mut r1 = vec![0.0; n];
    let mut r2 = vec![0.0; n];
    for i in 0..n {
        let (a, b) = spec.eval(state.u1[i], state.u2[i]);
        r1[i] = a;
        r2[i] = b;
    }
    (r1, r2)
}

/// Residual of the fully implicit step at a positive candidate state:
/// `(u - u_prev)/dt - Lap(mu(u) u) - R(u)`, one vector per species. The
/// candidate solves the scheme exactly when both vectors vanish.
pub fn step_residual(
    candidate: &State,
    previous: &State,
    dt: f64,
    params: &SchemeParams,
    mesh: &Mesh,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (mu1, mu2) = mu(candidate, params)?;
    Ok(residual_with_mu(candidate, previous, dt, params, mesh, &mu1, &mu2))
}

/// Residual evaluation with the nonlocal coefficients already computed;
/// shared by the public entry point and the Newton iteration.
pub(crate) fn residual_with_mu(
    candidate: &State,
    previous: &State,
    dt: f64,
    params: &SchemeParams,
    mesh: &Mesh,
    mu1: &[f64],
    mu2: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = mesh.n_cells();
    debug_assert_eq!(candidate.n_cells(), n);
    debug_assert_eq!(previous.n_cells(), n);
    let inv_dt = 1.0 / dt;
    let mut work = vec![0.0; n];
    let mut res1 = vec![0.0; n];
    let mut res2 = vec![0.0; n];

    let prod: Vec<f64> = candidate.u1.iter().zip(mu1).map(|(u, m)| u * m).collect();
    laplacian_into(&prod, mesh, &mut work);
    for i in 0..n {
        let (r1, _) = params.reaction.eval(candidate.u1[i], candidate.u2[i]);
        res1[i] = (candidate.u1[i] - previous.u1[i]) * inv_dt - work[i] - r1;
    }
    let prod: Vec<f64> = candidate.u2.iter().zip(mu2).map(|(u, m)| u * m).collect();
    laplacian_into(&prod, mesh, &mut work);
    for i in 0..n {
        let (_, r2) = params.reaction.eval(candidate.u1[i], candidate.u2[i]);
        res2[i] = (candidate.u2[i] - previous.u2[i]) * inv_dt - work[i] - r2;
    }
    (res1, res2)
}

/// Lower/upper bound pair `(e_k, E_k)` of the discrete maximum principle at
/// step `k`, together with the time step limit below which the bounds apply.
#[derive(Debug, Clone, Copy)]
pub struct MaxPrincipleBounds {
    pub lower: f64,
    pub upper: f64,
    pub dt_limit: f64,
}

/// Evaluates the geometric per-step bounds `e_k = gamma (1 + dt B)^-k` and
/// `E_k = Gamma (1 - dt B)^-k`, where `B` combines the kernel Laplacian sup
/// norms with the initial masses. Requires twice continuously differentiable
/// kernels (their Laplacian sup norms are evaluated analytically or by fine
/// sampling) and `dt` below `1/B`.
#[allow(clippy::too_many_arguments)]
pub fn max_principle_bounds(
    params: &SchemeParams,
    length: f64,
    mass1: f64,
    mass2: f64,
    gamma: f64,
    big_gamma: f64,
    dt: f64,
    k: usize,
) -> Result<MaxPrincipleBounds> {
    let specs = params.kernel_specs().ok_or_else(|| {
        Error::BoundInapplicable(
            "maximum principle bounds need symbolic kernel specs (SchemeParams::new)".into(),
        )
    })?;
    let self_term = {
        let t1 = if params.d11 > 0.0 {
            params.d11 * mass1 * specs.sigma1.laplacian_sup(length)?
        } else {
            0.0
        };
        let t2 = if params.d22 > 0.0 {
            params.d22 * mass2 * specs.sigma2.laplacian_sup(length)?
        } else {
            0.0
        };
        t1.min(t2)
    };
    let cross_term = {
        let coeff = (params.d12 * mass2).min(params.d21 * mass1);
        if coeff > 0.0 {
            coeff * specs.rho1.laplacian_sup(length)?
        } else {
            0.0
        }
    };
    let b = self_term + cross_term;
    let dt_limit = if b > 0.0 { 1.0 / b } else { f64::INFINITY };
    if dt >= dt_limit {
        return Err(Error::BoundInapplicable(format!(
            "time step {dt} is not below the maximum principle limit {dt_limit}"
        )));
    }
    let kf = k as i32;
    Ok(MaxPrincipleBounds {
        lower: gamma * (1.0 + dt * b).powi(-kf),
        upper: big_gamma * (1.0 - dt * b).powi(-kf),
        dt_limit,
    })
}

/// Left side of the duality estimate accumulated over a trajectory:
/// `sum_k dt sum_i measure (mu1 u1 + mu2 u2)(u1 + u2)` over the supplied
/// post-step states.
pub fn duality_functional(states: &[State], params: &SchemeParams, dt: f64, mesh: &Mesh) -> Result<f64> {
    let measure = mesh.measure();
    let mut total = 0.0;
    for st in states {
        let (mu1, mu2) = mu(st, params)?;
        let mut inner = 0.0;
        for i in 0..st.n_cells() {
            inner += (mu1[i] * st.u1[i] + mu2[i] * st.u2[i]) * (st.u1[i] + st.u2[i]);
        }
        total += dt * measure * inner;
    }
    Ok(total)
}

/// The kernel-and-mass constant `A` that normalizes the duality estimate:
/// `A = d1 + d2 + d11 m1 |sigma1|_L1 + d22 m2 |sigma2|_L1
///      + |rho|_L1 (d12 m2 + d21 m1)`.
pub fn duality_normalization(params: &SchemeParams, mass1: f64, mass2: f64) -> f64 {
    params.d1
        + params.d2
        + params.d11 * mass1 * params.sigma1.l1_norm()
        + params.d22 * mass2 * params.sigma2.l1_norm()
        + params.rho1.l1_norm() * (params.d12 * mass2 + params.d21 * mass1)
}
