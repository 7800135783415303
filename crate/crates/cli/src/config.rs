//! TOML experiment configuration. Every numeric parameter of a run lives
//! here; the commands only combine sections.

use std::path::Path;

use robust_consensus::model::{ControlLaw, InputLaw, ModelParams, UncertaintySpec};
use robust_consensus::sim::{InitialCondition, TimeGrid};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub uncertainty: Vec<InputLaw>,
    pub initial: Option<InitialCondition>,
    pub gpc: Option<GpcSection>,
    pub integrator: Option<TimeGrid>,
    #[serde(default)]
    pub controls: Vec<ControlLaw>,
    #[serde(default)]
    pub gains: GainsSection,
    #[serde(default)]
    pub seed: u64,
    pub test2: Option<Test2Section>,
    pub meanfield: Option<MeanfieldSection>,
    pub gamma_surface: Option<GammaSurfaceSection>,
    pub certify: Option<CertifySection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub n_agents: usize,
    #[serde(default = "one")]
    pub dim: usize,
    pub p_bar: f64,
    pub nu: f64,
    #[serde(default)]
    pub r: f64,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpcSection {
    /// Largest polynomial degree per input.
    pub order: usize,
    /// Quadrature points per input for the basis integrals.
    pub quad_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainMode {
    #[default]
    Algebraic,
    /// Time-varying gains of the finite-horizon problem on `[0, T]`.
    FiniteHorizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSection {
    #[serde(default)]
    pub mode: GainMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Test2Section {
    pub nu_values: Vec<f64>,
    /// Reference values of `c_N` reported next to the computed ones.
    pub reference_c_n: Vec<f64>,
    /// Certificates are issued at `gamma = gamma_factor / c_N`.
    pub gamma_factor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanfieldSection {
    pub n_particles: usize,
    pub bins: usize,
    /// Quadrature points per input for the density reconstruction.
    pub quad_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    #[serde(default)]
    pub log: bool,
}

impl Axis {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        if self.points == 0 || !(self.min <= self.max) || (self.log && !(self.min > 0.0)) {
            return Err(CliError::Config(format!("bad axis {self:?}")));
        }
        if self.points == 1 {
            return Ok(vec![self.min]);
        }
        let n = (self.points - 1) as f64;
        Ok((0..self.points)
            .map(|i| {
                let f = i as f64 / n;
                if self.log {
                    10f64.powf(self.min.log10() + f * (self.max.log10() - self.min.log10()))
                } else {
                    self.min + f * (self.max - self.min)
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaSurfaceSection {
    pub nu: Axis,
    pub p_bar: Axis,
    pub r_values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifySection {
    pub gamma: Option<f64>,
    /// The frequency sweep cross-check runs only up to this many agents.
    pub sweep_max_agents: usize,
    pub omega: Axis,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn params(&self) -> Result<ModelParams, CliError> {
        let m = &self.model;
        Ok(ModelParams::new(m.n_agents, m.dim, m.p_bar, m.nu, m.r, self.uncertainty.len())?)
    }

    pub fn uncertainty(&self) -> Result<UncertaintySpec, CliError> {
        Ok(UncertaintySpec::new(self.uncertainty.clone())?)
    }

    pub fn initial(&self) -> Result<&InitialCondition, CliError> {
        section(&self.initial, "initial")
    }

    pub fn gpc(&self) -> Result<&GpcSection, CliError> {
        section(&self.gpc, "gpc")
    }

    pub fn integrator(&self) -> Result<&TimeGrid, CliError> {
        section(&self.integrator, "integrator")
    }

    pub fn controls(&self) -> Result<&[ControlLaw], CliError> {
        if self.controls.is_empty() {
            return Err(CliError::Config("`controls` must list at least one control law".into()));
        }
        Ok(&self.controls)
    }
}

pub fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    s.as_ref().ok_or_else(|| CliError::Config(format!("missing [{name}] section")))
}
