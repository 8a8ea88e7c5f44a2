//! Declarative analysis configuration. Everything is checked before any
//! computation starts; unknown keys are rejected at every level.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::divisibility::{TimeGrid, Tolerances};
use crate::dynamics::{
    integrate_generator, preset_amplitude_damping, preset_equilibrium_relaxation,
    preset_pauli_channel, DampingFunction, GklsChannel, GklsSpec, IntegrationOptions, MapFamily,
    PauliEigenvalues, ScalarSignal,
};
use crate::error::{Error, Result};
use crate::extension::ExtendOptions;
use crate::linalg;
use crate::operator::{DensityMatrix, HermitianMatrix};
use crate::witness::ScanOptions;

pub const PRESETS: [&str; 5] = [
    "amplitude_damping",
    "pauli_channel",
    "equilibrium_relaxation",
    "gkls",
    "identity",
];

pub const DEFAULT_POINTS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Verdict,
    WitnessScan,
    Blp,
    Extend,
    Rates,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Verdict => "verdict",
            Self::WitnessScan => "witness_scan",
            Self::Blp => "blp",
            Self::Extend => "extend",
            Self::Rates => "rates",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub t_max: Option<f64>,
    pub n_points: Option<usize>,
    /// Explicit grid; must start at 0 and increase strictly.
    pub times: Option<Vec<f64>>,
}

impl GridConfig {
    pub fn build(&self) -> Result<TimeGrid> {
        match (&self.times, self.t_max) {
            (Some(times), t_max) => {
                if self.n_points.is_some() {
                    return Err(Error::Config(
                        "grid: give either times or n_points, not both".into(),
                    ));
                }
                let grid = TimeGrid::new(times.clone())?;
                if t_max.is_some_and(|t| t != grid.t_max()) {
                    return Err(Error::Config(
                        "grid: t_max disagrees with the last explicit time".into(),
                    ));
                }
                Ok(grid)
            }
            (None, Some(t_max)) => {
                if !(t_max.is_finite() && t_max > 0.0) {
                    return Err(Error::Config(format!(
                        "grid: t_max = {t_max} must be positive"
                    )));
                }
                TimeGrid::uniform(t_max, self.n_points.unwrap_or(DEFAULT_POINTS))
            }
            (None, None) => Err(Error::Config("grid: t_max or times is required".into())),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlpConfig {
    pub rho1: DensityMatrix,
    pub rho2: DensityMatrix,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtendConfig {
    /// Breakpoints to probe; defaults to every rank-drop breakpoint.
    pub times: Option<Vec<f64>>,
    pub require_tp: Option<bool>,
    pub solver: ExtendOptions,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatesConfig {
    /// Finite-difference step for the generator.
    pub fd_step: f64,
}

impl Default for RatesConfig {
    fn default() -> Self {
        Self { fd_step: 1e-3 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub family: FamilyConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_tasks")]
    pub tasks: Vec<Task>,
    #[serde(default)]
    pub witness: ScanOptions,
    #[serde(default)]
    pub blp: Option<BlpConfig>,
    #[serde(default)]
    pub extend: ExtendConfig,
    #[serde(default)]
    pub rates: RatesConfig,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_tasks() -> Vec<Task> {
    vec![Task::Verdict]
}

fn default_output() -> PathBuf {
    PathBuf::from("markovlens-out")
}

/// A validated configuration with its family and grid already built.
pub struct Prepared {
    pub config: AnalysisConfig,
    pub family: MapFamily,
    pub grid: TimeGrid,
}

impl AnalysisConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn prepare(self) -> Result<Prepared> {
        let tol = &self.tolerances;
        for (name, v) in [
            ("rank_rtol", tol.rank_rtol),
            ("choi_tol", tol.choi_tol),
            ("tp_tol", tol.tp_tol),
            ("kernel_tol", tol.kernel_tol),
            ("image_tol", tol.image_tol),
            ("fd_tol", tol.fd_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!(
                    "tolerances.{name} = {v} must be positive"
                )));
            }
        }
        if self.tasks.is_empty() {
            return Err(Error::Config("tasks must not be empty".into()));
        }
        if self.witness.n_samples == 0 {
            return Err(Error::Config("witness.n_samples must be >= 1".into()));
        }
        if !(self.rates.fd_step.is_finite() && self.rates.fd_step > 0.0) {
            return Err(Error::Config("rates.fd_step must be positive".into()));
        }
        let grid = self.grid.build().map_err(as_config)?;
        let family = self.family.build(&grid).map_err(as_config)?;
        if let Some(blp) = &self.blp {
            if blp.rho1.dim() != family.dim() || blp.rho2.dim() != family.dim() {
                return Err(Error::Config(format!(
                    "blp states must be {0}x{0}",
                    family.dim()
                )));
            }
        }
        Ok(Prepared {
            config: self,
            family,
            grid,
        })
    }
}

/// Invalid parameters in a config are configuration errors, whatever layer
/// detected them. Integration failures are numerical and pass through.
fn as_config(e: Error) -> Error {
    match e {
        Error::Config(_) | Error::IntegrationError { .. } => e,
        other => Error::Config(other.to_string()),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct AmplitudeDampingParams {
    g: Option<ScalarSignal>,
    rate: Option<ScalarSignal>,
    detuning: Option<ScalarSignal>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PauliParams {
    eigenvalues: Option<[ScalarSignal; 3]>,
    rates: Option<[ScalarSignal; 3]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RelaxationParams {
    omega: Option<DensityMatrix>,
    /// Draws a random full-rank `ω` when no matrix is given.
    omega_seed: Option<u64>,
    f: ScalarSignal,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelParams {
    op: crate::io::matrix_json::MatrixJson,
    rate: ScalarSignal,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct GklsParams {
    hamiltonian: Option<HermitianMatrix>,
    #[serde(default)]
    channels: Vec<ChannelParams>,
    #[serde(default)]
    integration: IntegrationOptions,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct IdentityParams {}

#[derive(Debug, Clone)]
enum Preset {
    AmplitudeDamping(AmplitudeDampingParams),
    PauliChannel(PauliParams),
    EquilibriumRelaxation(RelaxationParams),
    Gkls(GklsParams),
    Identity(IdentityParams),
}

/// `{"preset": <name>, "dim": <optional>, ...preset parameters}`.
#[derive(Debug, Clone, Deserialize)]
#[serde(try_from = "Value")]
pub struct FamilyConfig {
    preset: Preset,
    dim: Option<usize>,
}

impl TryFrom<Value> for FamilyConfig {
    type Error = String;

    fn try_from(v: Value) -> std::result::Result<Self, String> {
        let Value::Object(mut map) = v else {
            return Err("family must be an object".into());
        };
        let name = match map.remove("preset") {
            Some(Value::String(s)) => s,
            _ => {
                return Err(format!(
                    "family.preset is required; valid presets: {}",
                    PRESETS.join(", ")
                ))
            }
        };
        let dim = match map.remove("dim") {
            None => None,
            Some(d) => {
                Some(serde_json::from_value::<usize>(d).map_err(|e| format!("family.dim: {e}"))?)
            }
        };
        let params = Value::Object(map);
        fn parse<T: serde::de::DeserializeOwned>(
            name: &str,
            v: Value,
        ) -> std::result::Result<T, String> {
            serde_json::from_value(v).map_err(|e| format!("family ({name}): {e}"))
        }
        let preset = match name.as_str() {
            "amplitude_damping" => Preset::AmplitudeDamping(parse(&name, params)?),
            "pauli_channel" => Preset::PauliChannel(parse(&name, params)?),
            "equilibrium_relaxation" => Preset::EquilibriumRelaxation(parse(&name, params)?),
            "gkls" => Preset::Gkls(parse(&name, params)?),
            "identity" => Preset::Identity(parse(&name, params)?),
            other => {
                return Err(format!(
                    "unknown preset '{other}'; valid presets: {}",
                    PRESETS.join(", ")
                ))
            }
        };
        Ok(FamilyConfig { preset, dim })
    }
}

impl FamilyConfig {
    pub fn preset_name(&self) -> &'static str {
        match self.preset {
            Preset::AmplitudeDamping(_) => "amplitude_damping",
            Preset::PauliChannel(_) => "pauli_channel",
            Preset::EquilibriumRelaxation(_) => "equilibrium_relaxation",
            Preset::Gkls(_) => "gkls",
            Preset::Identity(_) => "identity",
        }
    }

    fn check_dim(&self, actual: usize) -> Result<()> {
        match self.dim {
            Some(d) if d != actual => Err(Error::Config(format!(
                "family.dim = {d} but preset {} has dimension {actual}",
                self.preset_name()
            ))),
            _ => Ok(()),
        }
    }

    fn required_dim(&self) -> Result<usize> {
        match self.dim {
            Some(d) if d >= 1 => Ok(d),
            _ => Err(Error::Config(format!(
                "family.dim (>= 1) is required for preset {}",
                self.preset_name()
            ))),
        }
    }

    pub fn build(&self, grid: &TimeGrid) -> Result<MapFamily> {
        let t_max = grid.t_max();
        let signals_ok = |s: &[&ScalarSignal]| s.iter().try_for_each(|x| x.validate());
        match &self.preset {
            Preset::AmplitudeDamping(p) => {
                self.check_dim(2)?;
                let g = match (&p.g, &p.rate) {
                    (Some(g), None) if p.detuning.is_none() => {
                        signals_ok(&[g])?;
                        DampingFunction::Direct(g.clone())
                    }
                    (None, Some(rate)) => {
                        signals_ok(&[rate])?;
                        if let Some(s) = &p.detuning {
                            signals_ok(&[s])?;
                        }
                        DampingFunction::Rates {
                            rate: rate.clone(),
                            detuning: p.detuning.clone(),
                        }
                    }
                    _ => {
                        return Err(Error::Config(
                            "amplitude_damping: give either g, or rate with optional detuning"
                                .into(),
                        ))
                    }
                };
                preset_amplitude_damping(g, t_max)
            }
            Preset::PauliChannel(p) => {
                self.check_dim(2)?;
                let eig = match (&p.eigenvalues, &p.rates) {
                    (Some(l), None) => {
                        signals_ok(&[&l[0], &l[1], &l[2]])?;
                        PauliEigenvalues::Direct(l.clone())
                    }
                    (None, Some(g)) => {
                        signals_ok(&[&g[0], &g[1], &g[2]])?;
                        PauliEigenvalues::Rates(g.clone())
                    }
                    _ => {
                        return Err(Error::Config(
                            "pauli_channel: give exactly one of eigenvalues, rates".into(),
                        ))
                    }
                };
                preset_pauli_channel(eig, t_max)
            }
            Preset::EquilibriumRelaxation(p) => {
                signals_ok(&[&p.f])?;
                let omega = match (&p.omega, p.omega_seed) {
                    (Some(w), None) => w.clone(),
                    (None, Some(seed)) => {
                        let d = self.required_dim()?;
                        DensityMatrix::new(linalg::random_density(
                            &mut ChaCha8Rng::seed_from_u64(seed),
                            d,
                        ))?
                    }
                    _ => {
                        return Err(Error::Config(
                            "equilibrium_relaxation: give exactly one of omega, omega_seed".into(),
                        ))
                    }
                };
                self.check_dim(omega.dim())?;
                preset_equilibrium_relaxation(omega, p.f.clone(), t_max)
            }
            Preset::Gkls(p) => {
                let dim = self.required_dim()?;
                let channels = p
                    .channels
                    .iter()
                    .map(|c| -> Result<GklsChannel> {
                        c.rate.validate()?;
                        Ok(GklsChannel {
                            op: linalg::CMat::try_from(c.op.clone())?,
                            rate: c.rate.clone(),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let spec = GklsSpec {
                    dim,
                    hamiltonian: p.hamiltonian.as_ref().map(|h| h.matrix().clone()),
                    channels,
                };
                spec.validate()?;
                let opts = p.integration;
                if !(opts.max_step > 0.0 && opts.tol > 0.0) {
                    return Err(Error::Config(
                        "gkls.integration: max_step and tol must be positive".into(),
                    ));
                }
                integrate_generator(dim, spec.generator_fn(), grid, opts)
            }
            Preset::Identity(_) => Ok(MapFamily::identity(self.required_dim()?, t_max)),
        }
    }
}
