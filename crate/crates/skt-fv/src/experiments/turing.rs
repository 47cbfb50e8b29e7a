//! Turing pattern studies for prey-predator systems where the predators
//! either diffuse linearly or through a nonlocal cross-diffusion kernel
//! sensing the prey density at a distance.

use crate::error::{Error, Result};
use crate::grid::{make_periodic_1d, make_periodic_2d, Mesh};
use crate::initial::{initial_state, initial_state_2d, Profile, Profile2D};
use crate::kernels::KernelSpec;
use crate::newton::{adaptive_advance, AdvanceOptions, SolverConfig};
use crate::scheme::{KernelSet, ReactionSpec, SchemeParams, State};

/// Diffusion structure of the 1D study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Turing1DCase {
    /// Linear diffusion for both species (`d1 = 0.05`, `d2 = 2`).
    LinearDiffusion,
    /// Linear diffusion for the prey, hunting-kernel cross-diffusion for the
    /// predators (`d1 = 0.05`, `d2 = 0`, `d21 = 1`).
    HuntingCrossDiffusion,
}

#[derive(Debug, Clone)]
pub struct Turing1DStudy {
    pub case: Turing1DCase,
    pub n_cells: usize,
    pub length: f64,
    pub t_final: f64,
    pub dt: f64,
    /// Perturbation amplitude on the prey over `[L/9, L/3]`.
    pub epsilon: f64,
    /// Detection radius of the hunting kernel.
    pub radius: f64,
    pub snapshot_times: Vec<f64>,
    pub solver: SolverConfig,
}

impl Turing1DStudy {
    pub fn new(case: Turing1DCase) -> Self {
        let length = 25.0;
        Turing1DStudy {
            case,
            n_cells: 500,
            length,
            t_final: 500.0,
            dt: 0.1,
            epsilon: 1e-2,
            radius: 10.0 * length / 49.0,
            snapshot_times: Vec::new(),
            solver: SolverConfig::default(),
        }
    }
}

/// Diffusion structure of the 2D study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Turing2DCase {
    /// Linear diffusion for both species (`d1 = 0.001`, `d2 = 4`).
    LinearDiffusion,
    /// Predator cross-diffusion with the radially symmetric annulus kernel.
    SymmetricAnnulus,
    /// Same with the kernel restricted to the upper-right quadrant.
    QuadrantAnnulus,
}

#[derive(Debug, Clone)]
pub struct Turing2DStudy {
    pub case: Turing2DCase,
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub t_final: f64,
    pub dt: f64,
    pub epsilon: f64,
    pub snapshot_times: Vec<f64>,
    pub solver: SolverConfig,
}

impl Turing2DStudy {
    pub fn new(case: Turing2DCase) -> Self {
        Turing2DStudy {
            case,
            nx: 133,
            ny: 100,
            lx: 4.0,
            ly: 3.0,
            t_final: 20.0,
            dt: 0.01,
            epsilon: 1e-2,
            snapshot_times: Vec::new(),
            solver: SolverConfig::default(),
        }
    }

    /// Half-resolution variant with a doubled time step, for smoke testing.
    pub fn smoke(case: Turing2DCase) -> Self {
        let mut study = Self::new(case);
        study.nx = 66;
        study.ny = 50;
        study.dt = 0.02;
        study
    }
}

/// Result of a pattern run.
#[derive(Debug, Clone)]
pub struct TuringOutcome {
    pub final_state: State,
    pub equilibrium: (f64, f64),
    /// Max deviation of the unperturbed equilibrium from itself over ten
    /// solver steps (stationarity check).
    pub stationarity_deviation: f64,
    /// Final `max |u1 - equilibrium|` of the perturbed run.
    pub departure: f64,
    /// Whether the perturbed run left the equilibrium by more than ten times
    /// the perturbation amplitude.
    pub patterned: bool,
    pub min1: f64,
    pub max1: f64,
    pub min2: f64,
    pub max2: f64,
    /// Strict local maxima of the prey density along the 1D slice (the first
    /// row in 2D).
    pub extrema_count: usize,
    /// States captured at the requested snapshot times.
    pub snapshots: Vec<(f64, State)>,
}

fn count_local_maxima(u: &[f64]) -> usize {
    let n = u.len();
    (0..n)
        .filter(|&i| {
            let prev = u[(i + n - 1) % n];
            let next = u[(i + 1) % n];
            u[i] > prev && u[i] > next
        })
        .count()
}

fn advance_with_snapshots(
    initial: &State,
    t_final: f64,
    dt: f64,
    params: &SchemeParams,
    mesh: &Mesh,
    solver: &SolverConfig,
    snapshot_times: &[f64],
) -> Result<(State, Vec<(f64, State)>)> {
    let mut marks: Vec<f64> = snapshot_times
        .iter()
        .cloned()
        .filter(|&t| t > 0.0 && t < t_final)
        .collect();
    marks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    marks.push(t_final);
    let options = AdvanceOptions::default();
    let mut state = initial.clone();
    let mut snapshots = Vec::new();
    for target in marks {
        match adaptive_advance(&state, target, dt, params, mesh, solver, &options) {
            Ok(adv) => state = adv.final_state,
            Err(fail) => return Err(fail.error),
        }
        snapshots.push((state.time, state.clone()));
    }
    let final_state = snapshots.pop().map(|(_, s)| s).unwrap();
    Ok((final_state, snapshots))
}

fn summarize(
    equilibrium: (f64, f64),
    stationarity_deviation: f64,
    epsilon: f64,
    final_state: State,
    slice_len: usize,
    snapshots: Vec<(f64, State)>,
) -> TuringOutcome {
    let departure = final_state
        .u1
        .iter()
        .fold(0.0f64, |m, v| m.max((v - equilibrium.0).abs()));
    let ((min1, max1), (min2, max2)) = final_state.min_max();
    let extrema_count = count_local_maxima(&final_state.u1[..slice_len]);
    TuringOutcome {
        patterned: departure > 10.0 * epsilon,
        final_state,
        equilibrium,
        stationarity_deviation,
        departure,
        min1,
        max1,
        min2,
        max2,
        extrema_count,
        snapshots,
    }
}

/// Max deviation from the constant equilibrium over ten steps of the
/// unperturbed problem.
fn stationarity_deviation(
    equilibrium: (f64, f64),
    dt: f64,
    params: &SchemeParams,
    mesh: &Mesh,
    solver: &SolverConfig,
) -> Result<f64> {
    let mut state = State::constant(mesh.n_cells(), equilibrium.0, equilibrium.1);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        state = crate::newton::newton_step_solve(&state, dt, params, mesh, solver)?.state;
        for v in &state.u1 {
            worst = worst.max((v - equilibrium.0).abs());
        }
        for v in &state.u2 {
            worst = worst.max((v - equilibrium.1).abs());
        }
    }
    Ok(worst)
}

/// Runs the 1D prey-predator study.
pub fn run_turing_1d(study: &Turing1DStudy) -> Result<TuringOutcome> {
    let grid = make_periodic_1d(study.n_cells, study.length)?;
    let mesh = Mesh::One(grid);
    let reaction = ReactionSpec::segel_levin_standard();
    let equilibrium = reaction.equilibrium().expect("standard coefficients admit one");
    let (d2, d21, rho2) = match study.case {
        Turing1DCase::LinearDiffusion => (2.0, 0.0, KernelSpec::Dirac),
        Turing1DCase::HuntingCrossDiffusion => {
            (0.0, 1.0, KernelSpec::Hunting { radius: study.radius })
        }
    };
    let params = SchemeParams::new(
        0.05,
        d2,
        0.0,
        0.0,
        d21,
        0.0,
        KernelSet {
            sigma1: KernelSpec::Dirac,
            sigma2: KernelSpec::Dirac,
            rho1: KernelSpec::Dirac,
            rho2,
        },
        reaction,
        &mesh,
    )?;

    let stationarity =
        stationarity_deviation(equilibrium, study.dt, &params, &mesh, &study.solver)?;

    let u1 = Profile::Step {
        baseline: equilibrium.0,
        height: study.epsilon,
        lo: study.length / 9.0,
        hi: study.length / 3.0,
    };
    let u2 = Profile::Constant(equilibrium.1);
    let init = initial_state(&u1, &u2, &grid)?;
    let (final_state, snapshots) = advance_with_snapshots(
        &init,
        study.t_final,
        study.dt,
        &params,
        &mesh,
        &study.solver,
        &study.snapshot_times,
    )?;
    Ok(summarize(
        equilibrium,
        stationarity,
        study.epsilon,
        final_state,
        study.n_cells,
        snapshots,
    ))
}

/// Runs the 2D prey-predator study.
pub fn run_turing_2d(study: &Turing2DStudy) -> Result<TuringOutcome> {
    let grid = make_periodic_2d(study.nx, study.ny, study.lx, study.ly)?;
    let mesh = Mesh::Two(grid);
    let reaction = ReactionSpec::mny_standard();
    let equilibrium = reaction.equilibrium().expect("standard coefficients admit one");
    let (d2, d21, rho2) = match study.case {
        Turing2DCase::LinearDiffusion => (4.0, 0.0, KernelSpec::Dirac),
        Turing2DCase::SymmetricAnnulus => (0.0, 0.4, KernelSpec::annulus_symmetric()),
        Turing2DCase::QuadrantAnnulus => (0.0, 0.4, KernelSpec::annulus_quadrant()),
    };
    let params = SchemeParams::new(
        0.001,
        d2,
        0.0,
        0.0,
        d21,
        0.0,
        KernelSet {
            sigma1: KernelSpec::Dirac,
            sigma2: KernelSpec::Dirac,
            rho1: KernelSpec::Dirac,
            rho2,
        },
        reaction,
        &mesh,
    )?;

    let stationarity =
        stationarity_deviation(equilibrium, study.dt, &params, &mesh, &study.solver)?;

    let u1 = Profile2D::Box {
        baseline: equilibrium.0,
        height: study.epsilon,
        x_lo: study.lx / 9.0,
        x_hi: 4.0 * study.lx / 9.0,
        y_lo: 7.0 * study.ly / 9.0,
        y_hi: 8.0 * study.ly / 9.0,
    };
    let u2 = Profile2D::Constant(equilibrium.1);
    let init = initial_state_2d(&u1, &u2, &grid)?;
    let (final_state, snapshots) = advance_with_snapshots(
        &init,
        study.t_final,
        study.dt,
        &params,
        &mesh,
        &study.solver,
        &study.snapshot_times,
    )?;
    Ok(summarize(
        equilibrium,
        stationarity,
        study.epsilon,
        final_state,
        study.nx,
        snapshots,
    ))
}

/// Max-norm distance between the prey fields of two outcomes (used to
/// compare the symmetric and quadrant kernels).
pub fn prey_field_distance(a: &TuringOutcome, b: &TuringOutcome) -> Result<f64> {
    if a.final_state.n_cells() != b.final_state.n_cells() {
        return Err(Error::InvalidConfig("outcomes live on different grids".into()));
    }
    Ok(a.final_state
        .u1
        .iter()
        .zip(&b.final_state.u1)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs())))
}
