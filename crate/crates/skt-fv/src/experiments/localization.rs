//! Localization study: distance at final time between the nonlocal system
//! with an indicator kernel of width `delta` and the local (Dirac) system,
//! swept over `delta`, with fitted decay slopes.

use crate::error::{Error, Result};
use crate::grid::{make_periodic_1d, Mesh};
use crate::initial::initial_state;
use crate::kernels::KernelSpec;
use crate::newton::{adaptive_advance, AdvanceOptions, SolverConfig};
use crate::norms::{lp_norm, wasserstein1};
use crate::scheme::{KernelSet, ReactionSpec, SchemeParams, State};

use super::convergence::InitialDataChoice;

#[derive(Debug, Clone)]
pub struct LocalizationStudy {
    /// Kernel widths as fractions of the domain length, descending.
    pub deltas_over_l: Vec<f64>,
    pub initial: InitialDataChoice,
    pub length: f64,
    pub t_final: f64,
    pub n_cells: usize,
    pub dt: f64,
    pub d12: f64,
    pub d21: f64,
    /// Restrict the slope fit to `delta/L` at most this value; `None` fits
    /// over the whole sweep.
    pub fit_window_max: Option<f64>,
    pub solver: SolverConfig,
}

impl LocalizationStudy {
    pub fn new(initial: InitialDataChoice) -> Self {
        LocalizationStudy {
            deltas_over_l: vec![
                1.0, 0.5, 0.4, 0.3, 0.2, 0.1, 0.05, 0.04, 0.03, 0.02, 0.01, 0.005, 0.003,
            ],
            initial,
            length: 25.0,
            t_final: 1.0,
            n_cells: 1024,
            dt: 1e-2,
            d12: 1.0,
            d21: 2.0,
            fit_window_max: None,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LocalizationRow {
    pub delta_over_l: f64,
    pub w1: f64,
    pub l1: f64,
    pub linf: f64,
}

#[derive(Debug, Clone)]
pub struct LocalizationResult {
    pub rows: Vec<LocalizationRow>,
    /// Fitted slopes of `(W1, L1, Linf)` over the fit window.
    pub slopes: (f64, f64, f64),
}

/// Runs the sweep: one local (Dirac) baseline plus one run per kernel width,
/// comparing final states species by species.
pub fn run_localization(study: &LocalizationStudy) -> Result<LocalizationResult> {
    if study.deltas_over_l.len() < 2 {
        return Err(Error::InvalidConfig("localization sweep needs at least 2 widths".into()));
    }
    let grid = make_periodic_1d(study.n_cells, study.length)?;
    let mesh = Mesh::One(grid);
    let (p1, p2) = study.initial.profiles(study.length);
    let init = initial_state(&p1, &p2, &grid)?;

    let run = |kernel: KernelSpec| -> Result<State> {
        let params = SchemeParams::new(
            0.0,
            0.0,
            0.0,
            study.d12,
            study.d21,
            0.0,
            KernelSet::uniform(kernel),
            ReactionSpec::Zero,
            &mesh,
        )?;
        match adaptive_advance(
            &init,
            study.t_final,
            study.dt,
            &params,
            &mesh,
            &study.solver,
            &AdvanceOptions::default(),
        ) {
            Ok(adv) => Ok(adv.final_state),
            Err(fail) => Err(fail.error),
        }
    };

    let baseline = run(KernelSpec::Dirac)?;
    let mut rows = Vec::with_capacity(study.deltas_over_l.len());
    for &frac in &study.deltas_over_l {
        let state = run(KernelSpec::Indicator { delta: frac * study.length })?;
        // rescale the baseline to the run's mass per species so the exact
        // CDF distance applies despite the solver-level mass drift
        let renorm = |f: &[f64], g: &[f64]| -> Vec<f64> {
            let mf: f64 = f.iter().sum();
            let mg: f64 = g.iter().sum();
            g.iter().map(|v| v * mf / mg).collect()
        };
        let base1 = renorm(&state.u1, &baseline.u1);
        let base2 = renorm(&state.u2, &baseline.u2);
        let w1 = wasserstein1(&state.u1, &base1, &grid)?
            + wasserstein1(&state.u2, &base2, &grid)?;
        let diff1: Vec<f64> =
            state.u1.iter().zip(&baseline.u1).map(|(a, b)| a - b).collect();
        let diff2: Vec<f64> =
            state.u2.iter().zip(&baseline.u2).map(|(a, b)| a - b).collect();
        let l1 = lp_norm(&diff1, grid.dx, 1.0)? + lp_norm(&diff2, grid.dx, 1.0)?;
        let linf = lp_norm(&diff1, grid.dx, f64::INFINITY)?
            + lp_norm(&diff2, grid.dx, f64::INFINITY)?;
        rows.push(LocalizationRow { delta_over_l: frac, w1, l1, linf });
    }

    let window: Vec<&LocalizationRow> = match study.fit_window_max {
        Some(cap) => rows.iter().filter(|r| r.delta_over_l <= cap + 1e-15).collect(),
        None => rows.iter().collect(),
    };
    if window.len() < 2 {
        return Err(Error::InvalidConfig("slope fit window contains fewer than 2 rows".into()));
    }
    let xs: Vec<f64> = window.iter().map(|r| r.delta_over_l).collect();
    let fit = |get: fn(&LocalizationRow) -> f64| -> f64 {
        let ys: Vec<f64> = window.iter().map(|r| get(r)).collect();
        super::fit_log_slope(&xs, &ys)
    };
    let slopes = (fit(|r| r.w1), fit(|r| r.l1), fit(|r| r.linf));
    Ok(LocalizationResult { rows, slopes })
}
