//! Run configuration: a TOML file of flat key-value sections, overridable
//! key by key from the command line, re-serialized verbatim next to every
//! run's outputs so runs are diffable and reproducible.

use crate::error::{Error, Result};
use crate::experiments::{
    ConvergenceKernel, ConvergenceStudy, ErrorAggregation, InitialDataChoice,
    LocalizationStudy, Turing1DCase, Turing1DStudy, Turing2DCase, Turing2DStudy,
};
use crate::initial::Profile;
use crate::kernels::KernelSpec;
use crate::newton::{LinearSolverKind, SolverConfig};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridSection,
    pub time: TimeSection,
    pub coefficients: CoeffSection,
    pub kernels: KernelsSection,
    pub reaction: ReactionSection,
    pub initial: InitialSection,
    pub solver: SolverSection,
    pub output: OutputSection,
    pub converge: ConvergeSection,
    pub localize: LocalizeSection,
    pub turing1d: Turing1DSection,
    pub turing2d: Turing2DSection,
    pub kolmogorov: KolmogorovSection,
    pub bounded: BoundedSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub n_cells: usize,
    pub length: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { n_cells: 128, length: 25.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeSection {
    pub t_final: f64,
    pub dt: f64,
}

impl Default for TimeSection {
    fn default() -> Self {
        // the 128-cell rung of the refinement ladder
        TimeSection { t_final: 5.0, dt: 0.3125 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoeffSection {
    pub d1: f64,
    pub d2: f64,
    pub d11: f64,
    pub d12: f64,
    pub d21: f64,
    pub d22: f64,
}

impl Default for CoeffSection {
    fn default() -> Self {
        CoeffSection { d1: 0.0, d2: 0.0, d11: 0.0, d12: 1.0, d21: 2.0, d22: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSection {
    /// One of `dirac`, `indicator`, `smooth` (cosine bump), `hunting`.
    pub kind: String,
    pub delta: f64,
    pub radius: f64,
}

impl Default for KernelSection {
    fn default() -> Self {
        KernelSection { kind: "smooth".into(), delta: 6.25, radius: 1.0 }
    }
}

impl KernelSection {
    pub fn to_spec(&self) -> Result<KernelSpec> {
        match self.kind.as_str() {
            "dirac" => Ok(KernelSpec::Dirac),
            "indicator" => Ok(KernelSpec::Indicator { delta: self.delta }),
            "smooth" | "smooth_cos" => Ok(KernelSpec::SmoothCos),
            "hunting" => Ok(KernelSpec::Hunting { radius: self.radius }),
            "annulus" => Ok(KernelSpec::annulus_symmetric()),
            "annulus_quadrant" => Ok(KernelSpec::annulus_quadrant()),
            other => Err(Error::InvalidConfig(format!("unknown kernel kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct KernelsSection {
    pub sigma1: KernelSection,
    pub sigma2: KernelSection,
    pub rho1: KernelSection,
    pub rho2: KernelSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReactionSection {
    /// One of `zero`, `lotka_volterra`, `segel_levin`, `mny`.
    pub kind: String,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
    pub g: f64,
    pub a10: f64,
    pub a11: f64,
    pub a12: f64,
    pub a20: f64,
    pub a21: f64,
    pub a22: f64,
}

impl Default for ReactionSection {
    fn default() -> Self {
        ReactionSection {
            kind: "zero".into(),
            a: 1.0,
            b: 1.0,
            c: 1.0,
            d: 1.0,
            e: 1.0 / 3.0,
            f: 1.0,
            g: 0.4,
            a10: 0.0,
            a11: 0.0,
            a12: 0.0,
            a20: 0.0,
            a21: 0.0,
            a22: 0.0,
        }
    }
}

impl ReactionSection {
    pub fn to_spec(&self) -> Result<crate::scheme::ReactionSpec> {
        use crate::scheme::ReactionSpec;
        match self.kind.as_str() {
            "zero" => Ok(ReactionSpec::Zero),
            "lotka_volterra" => Ok(ReactionSpec::LotkaVolterra {
                a10: self.a10,
                a11: self.a11,
                a12: self.a12,
                a20: self.a20,
                a21: self.a21,
                a22: self.a22,
            }),
            "segel_levin" => Ok(ReactionSpec::SegelLevin {
                a: self.a,
                b: self.b,
                c: self.c,
                d: self.d,
                e: self.e,
            }),
            "mny" => Ok(ReactionSpec::MimuraNishiuraYamaguti {
                a: self.a,
                b: self.b,
                c: self.c,
                d: self.d,
                e: self.e,
                f: self.f,
                g: self.g,
            }),
            other => Err(Error::InvalidConfig(format!("unknown reaction kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileSection {
    /// One of `constant`, `step`, `cosine`, `sine`.
    pub kind: String,
    pub value: f64,
    pub baseline: f64,
    pub height: f64,
    pub lo: f64,
    pub hi: f64,
    pub offset: f64,
    pub amplitude: f64,
}

impl Default for ProfileSection {
    fn default() -> Self {
        ProfileSection {
            kind: "cosine".into(),
            value: 1.0,
            baseline: 0.0,
            height: 1.0,
            lo: 0.0,
            hi: 1.0,
            offset: 1.0,
            amplitude: 1.0,
        }
    }
}

impl ProfileSection {
    pub fn to_profile(&self) -> Result<Profile> {
        match self.kind.as_str() {
            "constant" => Ok(Profile::Constant(self.value)),
            "step" => Ok(Profile::Step {
                baseline: self.baseline,
                height: self.height,
                lo: self.lo,
                hi: self.hi,
            }),
            "cosine" => Ok(Profile::Cosine { offset: self.offset, amplitude: self.amplitude }),
            "sine" => Ok(Profile::Sine { offset: self.offset, amplitude: self.amplitude }),
            other => Err(Error::InvalidConfig(format!("unknown profile kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSection {
    pub u1: ProfileSection,
    pub u2: ProfileSection,
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection {
            u1: ProfileSection { kind: "cosine".into(), ..Default::default() },
            u2: ProfileSection { kind: "sine".into(), ..Default::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_dt_halvings: usize,
    /// One of `auto`, `dense`, `banded`, `krylov`.
    pub linear: String,
    pub krylov_restart: usize,
    pub krylov_tol: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            tolerance: 1e-10,
            max_iterations: 50,
            max_dt_halvings: 20,
            linear: "auto".into(),
            krylov_restart: 60,
            krylov_tol: 1e-6,
        }
    }
}

impl SolverSection {
    pub fn to_solver_config(&self) -> Result<SolverConfig> {
        let linear_solver = match self.linear.as_str() {
            "auto" => LinearSolverKind::Auto,
            "dense" => LinearSolverKind::DenseDirect,
            "banded" => LinearSolverKind::BandedPlusLowRankDirect,
            "krylov" => LinearSolverKind::KrylovMatrixFree {
                restart: self.krylov_restart,
                inner_tol: self.krylov_tol,
            },
            other => {
                return Err(Error::InvalidConfig(format!("unknown linear solver `{other}`")))
            }
        };
        Ok(SolverConfig {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            max_dt_halvings: self.max_dt_halvings,
            linear_solver,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    pub snapshot_times: Vec<f64>,
    /// Tri-state: absent means the per-size default.
    pub dissipation: Option<bool>,
    pub entropy_check: Option<bool>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: "out".into(),
            snapshot_times: Vec::new(),
            dissipation: None,
            entropy_check: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergeSection {
    /// One of `smooth`, `indicator`, `dirac`.
    pub kernel: String,
    /// One of `indicator`, `smooth`.
    pub ic: String,
    pub levels: usize,
    pub base_cells: usize,
    /// One of `max`, `species1`, `species2`.
    pub aggregation: String,
    pub length: f64,
    pub t_final: f64,
    pub dt0: f64,
}

impl Default for ConvergeSection {
    fn default() -> Self {
        ConvergeSection {
            kernel: "smooth".into(),
            ic: "indicator".into(),
            levels: 6,
            base_cells: 32,
            aggregation: "max".into(),
            length: 25.0,
            t_final: 5.0,
            dt0: 5.0,
        }
    }
}

pub fn parse_ic(name: &str) -> Result<InitialDataChoice> {
    match name {
        "indicator" => Ok(InitialDataChoice::Indicator),
        "smooth" => Ok(InitialDataChoice::Smooth),
        other => Err(Error::InvalidConfig(format!("unknown initial data `{other}`"))),
    }
}

impl ConvergeSection {
    pub fn to_study(&self, solver: SolverConfig) -> Result<ConvergenceStudy> {
        let kernel = match self.kernel.as_str() {
            "smooth" => ConvergenceKernel::SmoothCos,
            "indicator" => ConvergenceKernel::Indicator,
            "dirac" => ConvergenceKernel::Dirac,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown convergence kernel `{other}`"
                )))
            }
        };
        let aggregation = match self.aggregation.as_str() {
            "max" => ErrorAggregation::MaxOverSpecies,
            "species1" => ErrorAggregation::Species1,
            "species2" => ErrorAggregation::Species2,
            other => {
                return Err(Error::InvalidConfig(format!("unknown aggregation `{other}`")))
            }
        };
        let mut study = ConvergenceStudy::new(kernel, parse_ic(&self.ic)?);
        study.levels = self.levels;
        study.base_cells = self.base_cells;
        study.length = self.length;
        study.t_final = self.t_final;
        study.dt0 = self.dt0;
        study.aggregation = aggregation;
        study.solver = solver;
        Ok(study)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalizeSection {
    pub ic: String,
    pub deltas_over_l: Vec<f64>,
    /// Cap of the slope-fit window in `delta/L`; 0 disables the cap.
    pub fit_window: f64,
    pub n_cells: usize,
    pub length: f64,
    pub t_final: f64,
    pub dt: f64,
}

impl Default for LocalizeSection {
    fn default() -> Self {
        LocalizeSection {
            ic: "smooth".into(),
            deltas_over_l: vec![
                1.0, 0.5, 0.4, 0.3, 0.2, 0.1, 0.05, 0.04, 0.03, 0.02, 0.01, 0.005, 0.003,
            ],
            fit_window: 0.0,
            n_cells: 1024,
            length: 25.0,
            t_final: 1.0,
            dt: 1e-2,
        }
    }
}

impl LocalizeSection {
    pub fn to_study(&self, solver: SolverConfig) -> Result<LocalizationStudy> {
        let mut study = LocalizationStudy::new(parse_ic(&self.ic)?);
        study.deltas_over_l = self.deltas_over_l.clone();
        study.n_cells = self.n_cells;
        study.length = self.length;
        study.t_final = self.t_final;
        study.dt = self.dt;
        study.fit_window_max = (self.fit_window > 0.0).then_some(self.fit_window);
        study.solver = solver;
        Ok(study)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Turing1DSection {
    /// One of `linear`, `hunting`.
    pub case: String,
    pub n_cells: usize,
    pub length: f64,
    pub t_final: f64,
    pub dt: f64,
    pub epsilon: f64,
    /// Detection radius; 0 selects the standard `10 L / 49`.
    pub radius: f64,
}

impl Default for Turing1DSection {
    fn default() -> Self {
        Turing1DSection {
            case: "hunting".into(),
            n_cells: 500,
            length: 25.0,
            t_final: 500.0,
            dt: 0.1,
            epsilon: 1e-2,
            radius: 0.0,
        }
    }
}

impl Turing1DSection {
    pub fn to_study(&self, solver: SolverConfig, snapshots: Vec<f64>) -> Result<Turing1DStudy> {
        let case = match self.case.as_str() {
            "linear" => Turing1DCase::LinearDiffusion,
            "hunting" => Turing1DCase::HuntingCrossDiffusion,
            other => return Err(Error::InvalidConfig(format!("unknown 1D case `{other}`"))),
        };
        let mut study = Turing1DStudy::new(case);
        study.n_cells = self.n_cells;
        study.length = self.length;
        study.t_final = self.t_final;
        study.dt = self.dt;
        study.epsilon = self.epsilon;
        study.radius = if self.radius > 0.0 { self.radius } else { 10.0 * self.length / 49.0 };
        study.snapshot_times = snapshots;
        study.solver = solver;
        Ok(study)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Turing2DSection {
    /// One of `linear`, `symmetric`, `quadrant`.
    pub case: String,
    pub smoke: bool,
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub t_final: f64,
    pub dt: f64,
    pub epsilon: f64,
}

impl Default for Turing2DSection {
    fn default() -> Self {
        Turing2DSection {
            case: "symmetric".into(),
            smoke: false,
            nx: 133,
            ny: 100,
            lx: 4.0,
            ly: 3.0,
            t_final: 20.0,
            dt: 0.01,
            epsilon: 1e-2,
        }
    }
}

impl Turing2DSection {
    pub fn to_study(&self, solver: SolverConfig, snapshots: Vec<f64>) -> Result<Turing2DStudy> {
        let case = match self.case.as_str() {
            "linear" => Turing2DCase::LinearDiffusion,
            "symmetric" => Turing2DCase::SymmetricAnnulus,
            "quadrant" => Turing2DCase::QuadrantAnnulus,
            other => return Err(Error::InvalidConfig(format!("unknown 2D case `{other}`"))),
        };
        let mut study =
            if self.smoke { Turing2DStudy::smoke(case) } else { Turing2DStudy::new(case) };
        if !self.smoke {
            study.nx = self.nx;
            study.ny = self.ny;
            study.dt = self.dt;
        }
        study.lx = self.lx;
        study.ly = self.ly;
        study.t_final = self.t_final;
        study.epsilon = self.epsilon;
        study.snapshot_times = snapshots;
        study.solver = solver;
        Ok(study)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KolmogorovSection {
    pub n_cells: usize,
    pub length: f64,
    pub steps: usize,
    pub dt: f64,
    /// Mean level and spatial amplitude of the smooth test mobility.
    pub mu_base: f64,
    pub mu_wobble: f64,
}

impl Default for KolmogorovSection {
    fn default() -> Self {
        KolmogorovSection {
            n_cells: 64,
            length: 1.0,
            steps: 20,
            dt: 1e-3,
            mu_base: 1.0,
            mu_wobble: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundedSection {
    pub cells: usize,
    pub steps: usize,
    pub dt: f64,
    pub d1: f64,
    pub d2: f64,
    pub d12: f64,
    pub d21: f64,
}

impl Default for BoundedSection {
    fn default() -> Self {
        BoundedSection { cells: 32, steps: 20, dt: 1e-2, d1: 0.3, d2: 0.2, d12: 1.0, d21: 2.0 }
    }
}

impl RunConfig {
    /// Loads a config file (or the defaults) and applies `key=value`
    /// overrides with dotted paths, e.g. `time.dt=0.05`. Unknown keys are
    /// rejected with the offending key named.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
        let mut value: toml::Value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    Error::InvalidConfig(format!("cannot read config {}: {e}", p.display()))
                })?;
                toml::from_str(&text)
                    .map_err(|e| Error::InvalidConfig(format!("config parse error: {e}")))?
            }
            None => toml::Value::Table(Default::default()),
        };
        for item in overrides {
            let (key, raw) = item.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("override `{item}` is not of the form key=value"))
            })?;
            apply_override(&mut value, key.trim(), raw.trim())?;
        }
        RunConfig::deserialize(value)
            .map_err(|e| Error::InvalidConfig(format!("configuration error: {e}")))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

fn apply_override(root: &mut toml::Value, key: &str, raw: &str) -> Result<()> {
    // parse the value as any TOML literal, falling back to a string
    let parsed: toml::Value = match toml::from_str::<toml::Value>(&format!("v = {raw}")) {
        Ok(toml::Value::Table(t)) => t.get("v").cloned().unwrap(),
        _ => toml::Value::String(raw.to_string()),
    };
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::InvalidConfig(format!("malformed override key `{key}`")));
    }
    for part in &parts[..parts.len() - 1] {
        let table = node.as_table_mut().ok_or_else(|| {
            Error::InvalidConfig(format!("override key `{key}` traverses a non-table"))
        })?;
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    let table = node.as_table_mut().ok_or_else(|| {
        Error::InvalidConfig(format!("override key `{key}` traverses a non-table"))
    })?;
    table.insert(parts.last().unwrap().to_string(), parsed);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let config = RunConfig::default();
        let text = config.to_toml_string();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(config, back);
    }

    #[test]
    fn overrides_apply_and_unknown_keys_fail() {
        let config = RunConfig::load(
            None,
            &["time.dt=0.5".to_string(), "converge.kernel=dirac".to_string()],
        )
        .unwrap();
        assert_eq!(config.time.dt, 0.5);
        assert_eq!(config.converge.kernel, "dirac");

        let err = RunConfig::load(None, &["time.dtt=0.5".to_string()]).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("dtt"), "{msg}");
    }

    #[test]
    fn kernel_and_reaction_parsing() {
        let k = KernelSection { kind: "hunting".into(), delta: 1.0, radius: 2.0 };
        assert!(matches!(k.to_spec().unwrap(), KernelSpec::Hunting { radius } if radius == 2.0));
        let k = KernelSection { kind: "nope".into(), ..Default::default() };
        assert!(k.to_spec().is_err());
        let r = ReactionSection { kind: "segel_levin".into(), ..Default::default() };
        assert!(r.to_spec().is_ok());
    }
}
