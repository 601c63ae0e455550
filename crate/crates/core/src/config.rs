//! Run configuration shared by the command-line subcommands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::binding::{DynamicsMap, StabilityTracker};
use crate::error::{Error, Result};
use crate::eval::ExperimentConfig;
use crate::scene_graph::Bounds2;
use crate::simulator::FlowScenario;
use crate::system::SystemConfig;

pub const CONFIG_VERSION: u32 = 1;

/// Built-in scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Multimodal,
    Unimodal,
}

impl Preset {
    pub fn scenario(self) -> FlowScenario {
        match self {
            Preset::Multimodal => FlowScenario::multimodal(),
            Preset::Unimodal => FlowScenario::unimodal(),
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multimodal" => Ok(Preset::Multimodal),
            "unimodal" => Ok(Preset::Unimodal),
            other => Err(Error::invalid(format!("unknown preset {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    /// Training stream.
    pub simulation: u64,
    /// Held-out stream used by `sweep` and `ablate`.
    pub test: u64,
    /// Reservoir draws during ingestion and per-cell fit seeds.
    /// Overrides `system.fit.rng_seed`.
    pub fitting: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            simulation: 1,
            test: 2,
            fitting: 7,
        }
    }
}

pub fn default_resolutions() -> Vec<f64> {
    vec![0.2, 0.3, 0.5, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    /// Scenario TOML file, relative to the config file. Mutually exclusive
    /// with `preset`; without either the multimodal preset is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default = "default_resolutions")]
    pub resolutions: Vec<f64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub system: SystemConfig,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output_dir() -> String {
    "out".into()
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            scenario: None,
            preset: None,
            resolutions: default_resolutions(),
            output_dir: default_output_dir(),
            seeds: Seeds::default(),
            system: SystemConfig::default(),
            base_dir: PathBuf::new(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.message().trim().to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    /// Reads, parses and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenario.is_some() && self.preset.is_some() {
            return Err(Error::Config("set at most one of `scenario` and `preset`".into()));
        }
        if let Some(p) = self.scenario_path() {
            if !p.is_file() {
                return Err(Error::Config(format!("scenario file {} does not exist", p.display())));
            }
        }
        if self.resolutions.is_empty() {
            return Err(Error::Config("resolutions must not be empty".into()));
        }
        for &r in &self.resolutions {
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::Config(format!("resolution must be > 0, got {r}")));
            }
        }
        let s = &self.system;
        s.fit.validate()?;
        DynamicsMap::new(s.map)?;
        StabilityTracker::new(s.stabilization_window, s.significance_threshold)?;
        if !(s.update_interval >= 0.0) || !s.update_interval.is_finite() {
            return Err(Error::Config("update_interval must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn scenario_path(&self) -> Option<PathBuf> {
        self.scenario.as_ref().map(|s| self.base_dir.join(s))
    }

    /// The scenario with its own seed, before any stream seed is applied.
    pub fn scenario(&self) -> Result<FlowScenario> {
        match (self.scenario_path(), self.preset) {
            (Some(p), _) => FlowScenario::load(&p),
            (None, Some(preset)) => Ok(preset.scenario()),
            (None, None) => Ok(Preset::Multimodal.scenario()),
        }
    }

    /// System settings with the fitting seed applied.
    pub fn system_config(&self) -> SystemConfig {
        let mut s = self.system.clone();
        s.fit.rng_seed = self.seeds.fitting;
        s
    }

    pub fn experiment(&self, bounds: Bounds2) -> ExperimentConfig {
        ExperimentConfig {
            bounds,
            system: self.system_config(),
            ingest_seed: self.seeds.fitting,
            bins: self.system.map.bins,
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.base_dir.join(&self.output_dir)
    }
}
