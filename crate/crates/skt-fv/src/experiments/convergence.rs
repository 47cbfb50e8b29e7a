//! Grid convergence study: a ladder of simultaneous space/time refinements
//! of the pure cross-diffusion system, with errors measured against the
//! finest run projected onto each coarser mesh.

use crate::error::{Error, Result};
use crate::grid::{make_periodic_1d, project_to_coarser, Mesh};
use crate::initial::{initial_state, Profile};
use crate::kernels::KernelSpec;
use crate::newton::{adaptive_advance, AdvanceOptions, SolverConfig};
use crate::scheme::{KernelSet, ReactionSpec, SchemeParams, State};

/// Convolution kernel column of the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvergenceKernel {
    SmoothCos,
    /// Indicator kernel of width `L/4`.
    Indicator,
    Dirac,
}

/// Initial data row of the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialDataChoice {
    /// Two indicator bumps, `chi_[L/9, L/3]` and `chi_[L/3, 3L/4]`.
    Indicator,
    /// `cos(2 pi x/L) + 1` and `sin(2 pi x/L) + 1`.
    Smooth,
}

impl InitialDataChoice {
    pub fn profiles(&self, length: f64) -> (Profile, Profile) {
        match self {
            InitialDataChoice::Indicator => (
                Profile::Step {
                    baseline: 0.0,
                    height: 1.0,
                    lo: length / 9.0,
                    hi: length / 3.0,
                },
                Profile::Step {
                    baseline: 0.0,
                    height: 1.0,
                    lo: length / 3.0,
                    hi: 3.0 * length / 4.0,
                },
            ),
            InitialDataChoice::Smooth => (
                Profile::Cosine { offset: 1.0, amplitude: 1.0 },
                Profile::Sine { offset: 1.0, amplitude: 1.0 },
            ),
        }
    }
}

/// How per-species errors are combined into the reported error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorAggregation {
    MaxOverSpecies,
    Species1,
    Species2,
}

#[derive(Debug, Clone)]
pub struct ConvergenceStudy {
    pub kernel: ConvergenceKernel,
    pub initial: InitialDataChoice,
    /// Ladder depth; level `k` has `base_cells * 2^(k-1)` cells and time step
    /// `dt0 * 4^-(k-1)`, and the deepest level is the reference.
    pub levels: usize,
    pub base_cells: usize,
    pub length: f64,
    pub t_final: f64,
    pub dt0: f64,
    pub d12: f64,
    pub d21: f64,
    pub aggregation: ErrorAggregation,
    pub solver: SolverConfig,
}

impl ConvergenceStudy {
    pub fn new(kernel: ConvergenceKernel, initial: InitialDataChoice) -> Self {
        ConvergenceStudy {
            kernel,
            initial,
            levels: 6,
            base_cells: 32,
            length: 25.0,
            t_final: 5.0,
            dt0: 5.0,
            d12: 1.0,
            d21: 2.0,
            aggregation: ErrorAggregation::MaxOverSpecies,
            solver: SolverConfig::default(),
        }
    }

    fn kernel_spec(&self) -> KernelSpec {
        match self.kernel {
            ConvergenceKernel::SmoothCos => KernelSpec::SmoothCos,
            ConvergenceKernel::Indicator => KernelSpec::Indicator { delta: self.length / 4.0 },
            ConvergenceKernel::Dirac => KernelSpec::Dirac,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConvergenceRow {
    pub level: usize,
    pub n_cells: usize,
    pub dx: f64,
    pub dt: f64,
    pub error: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceResult {
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares order over all non-reference levels; absent when the
    /// study aborted before enough levels completed.
    pub order: Option<f64>,
    /// Set when a solver hard failure aborted the ladder; the completed rows
    /// are retained.
    pub failure: Option<Error>,
}

/// Runs one cell of the convergence table: all ladder levels, errors against
/// the projected finest solution, and the fitted order.
pub fn run_convergence(study: &ConvergenceStudy) -> Result<ConvergenceResult> {
    if study.levels < 3 {
        return Err(Error::InvalidConfig("convergence ladder needs at least 3 levels".into()));
    }
    let (p1, p2) = study.initial.profiles(study.length);
    let mut finals: Vec<(usize, f64, f64, State)> = Vec::new(); // (n, dx, dt, state)
    let mut failure = None;
    for k in 1..=study.levels {
        let n = study.base_cells << (k - 1);
        let dt = study.dt0 * 0.25f64.powi(k as i32 - 1);
        let grid = make_periodic_1d(n, study.length)?;
        let mesh = Mesh::One(grid);
        let params = SchemeParams::new(
            0.0,
            0.0,
            0.0,
            study.d12,
            study.d21,
            0.0,
            KernelSet::uniform(study.kernel_spec()),
            ReactionSpec::Zero,
            &mesh,
        )?;
        let init = initial_state(&p1, &p2, &grid)?;
        match adaptive_advance(
            &init,
            study.t_final,
            dt,
            &params,
            &mesh,
            &study.solver,
            &AdvanceOptions::default(),
        ) {
            Ok(adv) => finals.push((n, grid.dx, dt, adv.final_state)),
            Err(fail) => {
                failure = Some(fail.error);
                break;
            }
        }
    }

    let mut rows = Vec::new();
    if finals.len() >= 2 {
        let (ref_n, _, _, ref_state) = finals.last().unwrap().clone();
        let fine_grid = make_periodic_1d(ref_n, study.length)?;
        for (n, dx, dt, state) in finals.iter().take(finals.len() - 1) {
            let coarse_grid = make_periodic_1d(*n, study.length)?;
            let ref1 = project_to_coarser(&ref_state.u1, &fine_grid, &coarse_grid)?;
            let ref2 = project_to_coarser(&ref_state.u2, &fine_grid, &coarse_grid)?;
            let linf = |a: &[f64], b: &[f64]| {
                a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
            };
            let e1 = linf(&state.u1, &ref1);
            let e2 = linf(&state.u2, &ref2);
            let error = match study.aggregation {
                ErrorAggregation::MaxOverSpecies => e1.max(e2),
                ErrorAggregation::Species1 => e1,
                ErrorAggregation::Species2 => e2,
            };
            rows.push(ConvergenceRow {
                level: rows.len() + 1,
                n_cells: *n,
                dx: *dx,
                dt: *dt,
                error,
            });
        }
    }
    let order = if rows.len() >= 2 && failure.is_none() {
        let dxs: Vec<f64> = rows.iter().map(|r| r.dx).collect();
        let errs: Vec<f64> = rows.iter().map(|r| r.error).collect();
        Some(super::fit_log_slope(&dxs, &errs))
    } else {
        None
    };
    Ok(ConvergenceResult { rows, order, failure })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_smooth_ladder_shows_second_order() {
        // a reduced ladder (cheap) already exhibits a clean order near 2
        let mut study =
            ConvergenceStudy::new(ConvergenceKernel::SmoothCos, InitialDataChoice::Smooth);
        study.levels = 4;
        study.base_cells = 16;
        study.t_final = 1.0;
        study.dt0 = 0.5;
        let result = run_convergence(&study).unwrap();
        assert!(result.failure.is_none());
        assert_eq!(result.rows.len(), 3);
        let order = result.order.unwrap();
        assert!(order > 1.5, "order {order}, rows {:?}", result.rows);
        // errors decrease monotonically along the ladder
        for w in result.rows.windows(2) {
            assert!(w[1].error < w[0].error);
        }
    }
}
