//! Thin command-line front end: each subcommand loads a run configuration
//! (file plus `--set key=value` overrides plus a few dedicated flags),
//! executes the corresponding library driver, and writes plain-text outputs
//! together with the fully resolved configuration.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 on solver hard
//! failures (partial outputs are retained).

use crate::config::RunConfig;
use crate::diagnostics::fmt_full;
use crate::error::{Error, Result};
use crate::experiments::{run_convergence, run_localization, run_turing_1d, run_turing_2d};
use crate::grid::{make_bounded_1d, make_periodic_1d, Mesh};
use crate::initial::initial_state;
use crate::kolmogorov::{
    duality_inequality_check, dual_solve, energy_estimate_check, linf_bounds_check,
    DualProblem, KolmogorovProblem,
};
use crate::newton::{adaptive_advance, AdvanceOptions};
use crate::output::OutputDir;
use crate::scheme::{KernelSet, SchemeParams, State};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "skt-fv",
    about = "Finite volume solver for nonlocal cross-diffusion systems",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// TOML run configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any configuration scalar, e.g. `--set time.dt=0.05`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (defaults to the configured one).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a single simulation and emit diagnostics and field snapshots.
    Simulate(CommonArgs),
    /// Grid convergence study on a space/time refinement ladder.
    Converge {
        #[command(flatten)]
        common: CommonArgs,
        /// Kernel column: smooth, indicator or dirac.
        #[arg(long)]
        kernel: Option<String>,
        /// Initial data row: indicator or smooth.
        #[arg(long)]
        ic: Option<String>,
        #[arg(long)]
        levels: Option<usize>,
    },
    /// Sweep of kernel widths against the local (Dirac) baseline.
    Localize {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        ic: Option<String>,
    },
    /// 1D prey-predator pattern run.
    Turing1d {
        #[command(flatten)]
        common: CommonArgs,
        /// Diffusion case: linear or hunting.
        #[arg(long)]
        case: Option<String>,
    },
    /// 2D prey-predator pattern run.
    Turing2d {
        #[command(flatten)]
        common: CommonArgs,
        /// Diffusion case: linear, symmetric or quadrant.
        #[arg(long)]
        case: Option<String>,
        /// Half-resolution smoke variant.
        #[arg(long)]
        smoke: bool,
    },
    /// Forward/dual estimates for the linear Kolmogorov problem.
    KolmogorovCheck(CommonArgs),
    /// Per-step entropy inequality of the bounded-domain scheme.
    BoundedEntropy(CommonArgs),
}

/// Parses the process arguments and dispatches; returns the exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::HardFailure { .. } | Error::NewtonStalled { .. } => 3,
                _ => 2,
            }
        }
    }
}

fn load_config(common: &CommonArgs, extra: Vec<String>) -> Result<RunConfig> {
    let mut overrides = common.set.clone();
    overrides.extend(extra);
    if let Some(dir) = &common.output {
        overrides.push(format!("output.dir=\"{}\"", dir.display()));
    }
    RunConfig::load(common.config.as_deref(), &overrides)
}

fn open_output(config: &RunConfig) -> Result<OutputDir> {
    let dir = OutputDir::new(&config.output.dir)?;
    dir.write_text("resolved_config.toml", &config.to_toml_string())?;
    Ok(dir)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(common) => {
            let config = load_config(&common, vec![])?;
            simulate(&config)
        }
        Command::Converge { common, kernel, ic, levels } => {
            let mut extra = Vec::new();
            if let Some(k) = kernel {
                extra.push(format!("converge.kernel=\"{k}\""));
            }
            if let Some(i) = ic {
                extra.push(format!("converge.ic=\"{i}\""));
            }
            if let Some(l) = levels {
                extra.push(format!("converge.levels={l}"));
            }
            let config = load_config(&common, extra)?;
            converge(&config)
        }
        Command::Localize { common, ic } => {
            let mut extra = Vec::new();
            if let Some(i) = ic {
                extra.push(format!("localize.ic=\"{i}\""));
            }
            let config = load_config(&common, extra)?;
            localize(&config)
        }
        Command::Turing1d { common, case } => {
            let mut extra = Vec::new();
            if let Some(c) = case {
                extra.push(format!("turing1d.case=\"{c}\""));
            }
            let config = load_config(&common, extra)?;
            turing1d(&config)
        }
        Command::Turing2d { common, case, smoke } => {
            let mut extra = Vec::new();
            if let Some(c) = case {
                extra.push(format!("turing2d.case=\"{c}\""));
            }
            if smoke {
                extra.push("turing2d.smoke=true".to_string());
            }
            let config = load_config(&common, extra)?;
            turing2d(&config)
        }
        Command::KolmogorovCheck(common) => {
            let config = load_config(&common, vec![])?;
            kolmogorov_check(&config)
        }
        Command::BoundedEntropy(common) => {
            let config = load_config(&common, vec![])?;
            bounded_entropy(&config)
        }
    }
}

fn simulate(config: &RunConfig) -> Result<()> {
    let dir = open_output(config)?;
    let grid = make_periodic_1d(config.grid.n_cells, config.grid.length)?;
    let mesh = Mesh::One(grid);
    let params = SchemeParams::new(
        config.coefficients.d1,
        config.coefficients.d2,
        config.coefficients.d11,
        config.coefficients.d12,
        config.coefficients.d21,
        config.coefficients.d22,
        KernelSet {
            sigma1: config.kernels.sigma1.to_spec()?,
            sigma2: config.kernels.sigma2.to_spec()?,
            rho1: config.kernels.rho1.to_spec()?,
            rho2: config.kernels.rho2.to_spec()?,
        },
        config.reaction.to_spec()?,
        &mesh,
    )?;
    let init = initial_state(
        &config.initial.u1.to_profile()?,
        &config.initial.u2.to_profile()?,
        &grid,
    )?;
    let solver = config.solver.to_solver_config()?;
    let options = AdvanceOptions {
        store_trajectory: false,
        compute_dissipation: config.output.dissipation,
        entropy_check: config.output.entropy_check,
    };

    // run segment by segment so snapshots land exactly on requested times
    let mut marks: Vec<f64> = config
        .output
        .snapshot_times
        .iter()
        .cloned()
        .filter(|&t| t > 0.0 && t < config.time.t_final)
        .collect();
    marks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    marks.push(config.time.t_final);
    let mut records = Vec::new();
    let mut state = init;
    let mut failure = None;
    for target in marks {
        match adaptive_advance(&state, target, config.time.dt, &params, &mesh, &solver, &options)
        {
            Ok(mut adv) => {
                records.append(&mut adv.records);
                state = adv.final_state;
                dir.write_field(&format!("simulate_field_t{}.csv", state.time), &state, &mesh)?;
            }
            Err(fail) => {
                records.extend(fail.partial.records.iter().cloned());
                state = fail.partial.final_state.clone();
                failure = Some(fail.error);
                break;
            }
        }
    }
    dir.write_diagnostics("simulate_diag.csv", &records)?;
    println!(
        "simulate: {} steps to t = {}, outputs in {}",
        records.len(),
        state.time,
        dir.path().display()
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn converge(config: &RunConfig) -> Result<()> {
    let dir = open_output(config)?;
    let study = config.converge.to_study(config.solver.to_solver_config()?)?;
    let result = run_convergence(&study)?;
    let rows: Vec<Vec<f64>> = result
        .rows
        .iter()
        .map(|r| vec![r.level as f64, r.n_cells as f64, r.dx, r.dt, r.error])
        .collect();
    dir.write_table("converge_table.csv", "level,n_cells,dx,dt,error", &rows)?;
    let mut summary = String::new();
    match result.order {
        Some(order) => summary.push_str(&format!("fitted_order,{}\n", fmt_full(order))),
        None => summary.push_str("fitted_order,\n"),
    }
    dir.write_text("converge_summary.csv", &summary)?;
    for r in &result.rows {
        println!("N = {:5}  dx = {:.5e}  error = {:.5e}", r.n_cells, r.dx, r.error);
    }
    if let Some(order) = result.order {
        println!("fitted order: {order:.3}");
    }
    match result.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn localize(config: &RunConfig) -> Result<()> {
    let dir = open_output(config)?;
    let study = config.localize.to_study(config.solver.to_solver_config()?)?;
    let result = run_localization(&study)?;
    let rows: Vec<Vec<f64>> = result
        .rows
        .iter()
        .map(|r| vec![r.delta_over_l, r.w1, r.l1, r.linf])
        .collect();
    dir.write_table("localize_table.csv", "delta_over_l,w1,l1,linf", &rows)?;
    let (sw, sl, si) = result.slopes;
    dir.write_text(
        "localize_summary.csv",
        &format!(
            "metric,slope\nw1,{}\nl1,{}\nlinf,{}\n",
            fmt_full(sw),
            fmt_full(sl),
            fmt_full(si)
        ),
    )?;
    println!("localization slopes: W1 {sw:.3}, L1 {sl:.3}, Linf {si:.3}");
    Ok(())
}

fn turing1d(config: &RunConfig) -> Result<()> {
    let dir = open_output(config)?;
    let study = config
        .turing1d
        .to_study(config.solver.to_solver_config()?, config.output.snapshot_times.clone())?;
    let out = run_turing_1d(&study)?;
    let mesh = Mesh::One(make_periodic_1d(study.n_cells, study.length)?);
    for (t, snap) in &out.snapshots {
        dir.write_field(&format!("turing1d_field_t{t}.csv"), snap, &mesh)?;
    }
    dir.write_field("turing1d_field_final.csv", &out.final_state, &mesh)?;
    write_turing_summary(&dir, "turing1d_summary.csv", &out)?;
    println!(
        "turing1d: departure {:.3e} ({} prey maxima), stationarity {:.3e}",
        out.departure, out.extrema_count, out.stationarity_deviation
    );
    Ok(())
}

fn turing2d(config: &RunConfig) -> Result<()> {
    let dir = open_output(config)?;
    let study = config
        .turing2d
        .to_study(config.solver.to_solver_config()?, config.output.snapshot_times.clone())?;
    let out = run_turing_2d(&study)?;
    let mesh = Mesh::Two(crate::grid::make_periodic_2d(study.nx, study.ny, study.lx, study.ly)?);
    for (t, snap) in &out.snapshots {
        dir.write_field(&format!("turing2d_field_t{t}.csv"), snap, &mesh)?;
    }
    dir.write_field("turing2d_field_final.csv", &out.final_state, &mesh)?;
    write_turing_summary(&dir, "turing2d_summary.csv", &out)?;
    println!(
        "turing2d: departure {:.3e}, stationarity {:.3e}",
        out.departure, out.stationarity_deviation
    );
    Ok(())
}

fn write_turing_summary(
    dir: &OutputDir,
    name: &str,
    out: &crate::experiments::TuringOutcome,
) -> Result<()> {
    dir.write_table(
        name,
        "eq1,eq2,stationarity_dev,departure,patterned,min1,max1,min2,max2,extrema",
        &[vec![
            out.equilibrium.0,
            out.equilibrium.1,
            out.stationarity_deviation,
            out.departure,
            if out.patterned { 1.0 } else { 0.0 },
            out.min1,
            out.max1,
            out.min2,
            out.max2,
            out.extrema_count as f64,
        ]],
    )
}

/// Smooth space/time mobility profile used by the estimate checks.
pub fn smooth_test_mobility(
    grid: &crate::grid::PeriodicGrid1D,
    steps: usize,
    base: f64,
    wobble: f64,
) -> Vec<Vec<f64>> {
    let nu = 2.0 * std::f64::consts::PI / grid.length;
    (0..steps)
        .map(|k| {
            (0..grid.n_cells)
                .map(|i| {
                    base + wobble * (nu * grid.center(i)).sin() * (0.3 * (k as f64 + 1.0)).cos()
                })
                .collect()
        })
        .collect()
}

fn kolmogorov_check(config: &RunConfig) -> Result<()> {
    let dir = open_output(config)?;
    let section = &config.kolmogorov;
    let grid = make_periodic_1d(section.n_cells, section.length)?;
    let mu = smooth_test_mobility(&grid, section.steps, section.mu_base, section.mu_wobble);
    let nu = 2.0 * std::f64::consts::PI / section.length;
    let z0: Vec<f64> =
        (0..grid.n_cells).map(|i| 1.5 + 0.5 * (nu * grid.center(i)).sin()).collect();
    let gamma = z0.iter().cloned().fold(f64::INFINITY, f64::min);
    let big_gamma = z0.iter().cloned().fold(0.0f64, f64::max);
    let problem = KolmogorovProblem::new(grid, mu, section.dt, z0)?;

    let bounds = linf_bounds_check(&problem, gamma, big_gamma)?;
    let energy = energy_estimate_check(&problem)?;
    let sources: Vec<Vec<f64>> = (0..section.steps)
        .map(|k| {
            (0..grid.n_cells)
                .map(|i| (nu * grid.center(i) + 0.2 * k as f64).cos())
                .collect()
        })
        .collect();
    let dual = dual_solve(&problem, &DualProblem { sources })?;
    let duality = duality_inequality_check(&problem)?;

    let mut rows = Vec::new();
    for k in 0..section.steps {
        let b = &bounds.steps[k];
        let e = &energy.steps[k];
        rows.push(vec![
            (k + 1) as f64,
            b.lower,
            b.upper,
            b.z_min,
            b.z_max,
            if b.pass { 1.0 } else { 0.0 },
            e.left,
            e.right,
            if e.pass { 1.0 } else { 0.0 },
            dual.lhs[k],
            dual.rhs,
            if dual.lhs[k] <= dual.rhs * (1.0 + 1e-12) { 1.0 } else { 0.0 },
        ]);
    }
    dir.write_table(
        "kolmogorov_table.csv",
        "k,lower,upper,z_min,z_max,linf_pass,energy_left,energy_right,energy_pass,dual_lhs,dual_rhs,dual_pass",
        &rows,
    )?;
    dir.write_text(
        "kolmogorov_summary.csv",
        &format!(
            "duality_lhs,duality_normalizer,duality_ratio\n{},{},{}\n",
            fmt_full(duality.lhs),
            fmt_full(duality.normalizer),
            fmt_full(duality.ratio)
        ),
    )?;
    println!(
        "kolmogorov-check: bounds {}, energy {}, dual {}, duality ratio {:.4}",
        pass_str(bounds.all_pass),
        pass_str(energy.all_pass),
        pass_str(dual.all_pass),
        duality.ratio
    );
    if bounds.all_pass && energy.all_pass && dual.all_pass {
        Ok(())
    } else {
        Err(Error::Domain("a Kolmogorov estimate check failed".into()))
    }
}

fn pass_str(b: bool) -> &'static str {
    if b {
        "pass"
    } else {
        "FAIL"
    }
}

fn bounded_entropy(config: &RunConfig) -> Result<()> {
    use crate::bounded::{bounded_entropy_check, bounded_step, BoundaryKernel, BoundedParams};
    let dir = open_output(config)?;
    let section = &config.bounded;
    let grid = make_bounded_1d(section.cells)?;
    let params = BoundedParams {
        d1: section.d1,
        d2: section.d2,
        d12: section.d12,
        d21: section.d21,
        kernel: BoundaryKernel::default_sine(&grid),
    };
    let pi = std::f64::consts::PI;
    let mut state = State::new(
        (0..section.cells).map(|i| 1.0 + 0.6 * (pi * grid.center(i)).cos()).collect(),
        (0..section.cells).map(|i| 1.2 + 0.4 * (pi * grid.center(i)).sin()).collect(),
        0.0,
    );
    let solver = config.solver.to_solver_config()?;
    let mut trajectory = vec![state.clone()];
    for _ in 0..section.steps {
        state = bounded_step(&state, section.dt, &params, &grid, &solver)?.state;
        trajectory.push(state.clone());
    }
    let rows = bounded_entropy_check(&trajectory, &params, section.dt, &grid)?;
    let table: Vec<Vec<f64>> = rows
        .iter()
        .zip(trajectory.iter().skip(1))
        .map(|(r, st)| {
            let (m1, m2) = st.masses(grid.dx);
            vec![r.step as f64, r.lhs, r.slack, if r.pass { 1.0 } else { 0.0 }, m1, m2]
        })
        .collect();
    dir.write_table("bounded_entropy.csv", "k,lhs,slack,pass,mass1,mass2", &table)?;
    let all_pass = rows.iter().all(|r| r.pass);
    println!("bounded-entropy: {} over {} steps", pass_str(all_pass), rows.len());
    if all_pass {
        Ok(())
    } else {
        Err(Error::Domain("bounded-domain entropy inequality check failed".into()))
    }
}
