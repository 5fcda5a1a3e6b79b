//! Experiment configuration: a TOML document whose sections mirror the
//! library's parameter types. Unknown keys are rejected and every numeric
//! constraint is re-checked at load time.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::controller::{ControlGain, Interpolation};
use crate::error::{ensure, Error, Result};
use crate::feasibility::{GoalRegion, VonMisesSpec};
use crate::geometry::{ArenaMap, TorusPoint};
use crate::kde::KdeParams;
use crate::kernel::KernelParams;
use crate::micro::SimParams;
use crate::Execution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub execution: Execution,
    pub domain: DomainConfig,
    pub kernel: KernelConfig,
    pub goal: GoalConfig,
    pub von_mises: VonMisesConfig,
    pub agents: AgentsConfig,
    pub sim: SimConfig,
    pub grids: GridsConfig,
    pub kde: KdeConfig,
    pub control: ControlConfig,
    pub output: OutputConfig,
    pub continuum: ContinuumConfig,
    pub sweep: SweepConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainConfig {
    /// Report positions in `[-w, w]²` instead of `Ω`. Inputs stay in `Ω`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arena_half_width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    pub length: f64,
    pub periodization_order: u32,
    /// Lookup-table side for the agent loop; 0 evaluates exactly.
    pub table_resolution: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            length: PI,
            periodization_order: 2,
            table_resolution: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GoalConfig {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Default for GoalConfig {
    fn default() -> Self {
        GoalConfig {
            center: [0.0, 0.0],
            radius: PI / 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VonMisesConfig {
    /// `k₁ = k₂`; omitted means `3/r*`, zero gives the uniform density.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub concentration: Option<f64>,
    pub cross_term: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentsConfig {
    pub targets: u64,
    /// Overrides the count the feasibility analysis would choose.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub herders: Option<u64>,
}

impl Default for AgentsConfig {
    fn default() -> Self {
        AgentsConfig {
            targets: 720,
            herders: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub diffusion: f64,
    pub dt: f64,
    pub horizon: f64,
    pub control_period: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_speed: Option<f64>,
    pub interpolation: Interpolation,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            diffusion: 0.01,
            dt: 0.01,
            horizon: 200.0,
            control_period: 1,
            max_speed: None,
            interpolation: Interpolation::Bilinear,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridsConfig {
    pub control: usize,
    pub deconvolution: usize,
}

impl Default for GridsConfig {
    fn default() -> Self {
        GridsConfig {
            control: 64,
            deconvolution: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KdeConfig {
    pub bandwidth: f64,
    pub periodization_order: u32,
}

impl Default for KdeConfig {
    fn default() -> Self {
        KdeConfig {
            bandwidth: 0.4,
            periodization_order: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlConfig {
    pub gain: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig { gain: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldFormat {
    #[default]
    Text,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: String,
    /// Steps between metric records.
    pub metrics_every: u64,
    /// Steps between trajectory snapshots; 0 keeps only the first and last.
    pub snapshot_every: u64,
    pub field_format: FieldFormat,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: "out".into(),
            metrics_every: 100,
            snapshot_every: 1000,
            field_format: FieldFormat::Text,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuumMode {
    /// Herder feedback loop alone.
    #[default]
    Herders,
    /// Targets under the frozen desired herder density.
    Targets,
    /// Both species, herders under feedback.
    Coupled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuumStart {
    /// Desired density plus a single-mode perturbation.
    #[default]
    Perturbed,
    /// Exactly the desired density.
    Equilibrium,
    /// Uniform density of the same mass.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuumConfig {
    pub mode: ContinuumMode,
    pub start: ContinuumStart,
    /// Grid side; reusing the deconvolution grid makes the desired target
    /// density an exact discrete equilibrium.
    pub grid: usize,
    pub horizon: f64,
    pub sample_interval: f64,
    /// Perturbation amplitude relative to the mean desired density.
    pub amplitude: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_dt: Option<f64>,
}

impl Default for ContinuumConfig {
    fn default() -> Self {
        ContinuumConfig {
            mode: ContinuumMode::Herders,
            start: ContinuumStart::Perturbed,
            grid: 25,
            horizon: 20.0,
            sample_interval: 0.1,
            amplitude: 0.5,
            max_dt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub concentrations: Vec<f64>,
    pub diffusions: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            concentrations: (1..=10).map(|i| 0.5 * i as f64).collect(),
            diffusions: (1..=10).map(|i| 0.01 * i as f64).collect(),
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            execution: Execution::Sequential,
            domain: DomainConfig::default(),
            kernel: KernelConfig::default(),
            goal: GoalConfig::default(),
            von_mises: VonMisesConfig::default(),
            agents: AgentsConfig::default(),
            sim: SimConfig::default(),
            grids: GridsConfig::default(),
            kde: KdeConfig::default(),
            control: ControlConfig::default(),
            output: OutputConfig::default(),
            continuum: ContinuumConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Canonical text: fixed key order, defaults spelled out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Re-runs every constructor check.
    pub fn validate(&self) -> Result<()> {
        self.kernel_params()?;
        self.goal()?;
        self.von_mises(1.0)?;
        self.sim_params()?.validate()?;
        self.gain()?;
        KdeParams::new(self.kde.bandwidth, self.kde.periodization_order, 1.0)?;
        self.arena()?;
        ensure(self.grids.control >= 4, "grids.control", || "must be at least 4".into())?;
        ensure(self.grids.deconvolution >= 4, "grids.deconvolution", || "must be at least 4".into())?;
        ensure(self.continuum.grid >= 4, "continuum.grid", || "must be at least 4".into())?;
        ensure(self.output.metrics_every >= 1, "output.metrics_every", || "must be at least 1".into())?;
        ensure(self.continuum.sample_interval > 0.0, "continuum.sample_interval", || "must be positive".into())?;
        ensure(self.continuum.horizon >= 0.0, "continuum.horizon", || "must be nonnegative".into())?;
        ensure(self.continuum.amplitude >= 0.0, "continuum.amplitude", || "must be nonnegative".into())?;
        if let Some(v) = self.sim.max_speed {
            ensure(v > 0.0, "sim.max_speed", || format!("must be positive, got {v}"))?;
        }
        ensure(
            self.sweep.concentrations.iter().all(|k| *k > 0.0),
            "sweep.concentrations",
            || "must be positive".into(),
        )?;
        ensure(self.sweep.diffusions.iter().all(|d| *d > 0.0), "sweep.diffusions", || {
            "must be positive".into()
        })
    }

    pub fn kernel_params(&self) -> Result<KernelParams> {
        KernelParams::new(self.kernel.length, self.kernel.periodization_order)
    }

    pub fn goal(&self) -> Result<GoalRegion> {
        let [c1, c2] = self.goal.center;
        GoalRegion::new(TorusPoint::new(c1, c2)?, self.goal.radius)
    }

    pub fn concentration(&self) -> f64 {
        self.von_mises.concentration.unwrap_or(3.0 / self.goal.radius)
    }

    pub fn von_mises(&self, target_mass: f64) -> Result<VonMisesSpec> {
        let k = self.concentration();
        let goal = self.goal()?;
        VonMisesSpec::new([k, k], goal.center().coords(), target_mass, self.von_mises.cross_term)
    }

    pub fn sim_params(&self) -> Result<SimParams> {
        let p = SimParams {
            diffusion: self.sim.diffusion,
            dt: self.sim.dt,
            horizon: self.sim.horizon,
            seed: self.seed,
            control_period: self.sim.control_period,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn gain(&self) -> Result<ControlGain> {
        ControlGain::new(self.control.gain)
    }

    pub fn arena(&self) -> Result<ArenaMap> {
        match self.domain.arena_half_width {
            Some(w) => ArenaMap::new(w),
            None => Ok(ArenaMap::identity()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_the_reference_setup() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.concentration(), 6.0 / PI);
        assert_eq!(c.agents.targets, 720);
        assert_eq!(c.control.gain, 10.0);
    }

    #[test]
    fn round_trip_is_exact() {
        let mut c = ExperimentConfig::default();
        c.agents.herders = Some(70);
        c.domain.arena_half_width = Some(1.0);
        c.sim.max_speed = Some(0.5);
        c.continuum.mode = ContinuumMode::Targets;
        let text = c.to_toml();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_toml(), text);
        assert_eq!(back.hash(), c.hash());
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let err = ExperimentConfig::from_toml("[sim]\ndifusion = 0.1\n").unwrap_err();
        assert!(err.to_string().contains("difusion"), "{err}");
        assert!(ExperimentConfig::from_toml("gain = 3\n").is_err());
    }

    #[test]
    fn constraints_are_rechecked() {
        assert!(ExperimentConfig::from_toml("[sim]\ndt = 0.0\n").is_err());
        assert!(ExperimentConfig::from_toml("[goal]\nradius = 4.0\n").is_err());
        assert!(ExperimentConfig::from_toml("[kde]\nbandwidth = -1.0\n").is_err());
        assert!(ExperimentConfig::from_toml("[control]\ngain = 0.0\n").is_err());
        assert!(ExperimentConfig::from_toml("[domain]\narena_half_width = 0.0\n").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.seed = 2;
        assert_ne!(a.hash(), b.hash());
    }
}
