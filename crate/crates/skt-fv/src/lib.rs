//! Entropy-stable finite volume solver for the nonlocal
//! Shigesada-Kawasaki-Teramoto cross-diffusion system on periodic 1D/2D
//! domains, with a bounded-domain variant, built-in structural diagnostics
//! (mass, entropy dissipation, maximum principle, duality estimates), and
//! reproducible convergence, localization-limit and Turing pattern studies.
//!
//! The crate is a library first: see the `examples/` directory for one
//! runnable program per capability, and the thin `skt-fv` binary for the
//! subcommand interface over run-configuration files.

pub mod bounded;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod experiments;
mod fft;
pub mod grid;
pub mod initial;
pub mod kernels;
pub mod kolmogorov;
pub mod linsolve;
pub mod newton;
pub mod norms;
pub mod output;
pub mod scheme;

pub use error::{Error, Result};
pub use grid::{
    make_bounded_1d, make_periodic_1d, make_periodic_2d, make_time_grid, project_to_coarser,
    BoundedGrid1D, Mesh, PeriodicGrid1D, PeriodicGrid2D, TimeGrid,
};
pub use initial::{initial_state, initial_state_2d, Profile, Profile2D};
pub use kernels::{discretize, discretize_2d, DiscreteKernel, KernelSpec};
pub use newton::{
    adaptive_advance, entropy_variables, newton_step_solve, Advance, AdvanceOptions,
    LinearSolverKind, SolverConfig, StepOutcome,
};
pub use scheme::{
    discrete_laplacian, duality_functional, fluxes, max_principle_bounds, mu, reaction,
    step_residual, KernelSet, ReactionSpec, SchemeParams, State,
};
