//! TOML run and sweep configurations, and the shipped presets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classical::ClassicalConfig;
use crate::elliptic::NewtonConfig;
use crate::error::{Error, Result};
use crate::grid::{build_grid, Geometry, Grid};
use crate::profiles::{profile, Doping, InitialProfile};
use crate::scheme::{ModelParams, StepConfig, StepSolver};
use crate::sweep::SweepSpec;

/// Run presets shipped with the crate, by id.
pub const RUN_PRESETS: &[(&str, &str)] = &[
    ("dlss", include_str!("../presets/dlss.toml")),
    ("interaction", include_str!("../presets/interaction.toml")),
    ("concentrated", include_str!("../presets/concentrated.toml")),
    ("vacuum", include_str!("../presets/vacuum.toml")),
];

pub const SWEEP_PRESETS: &[(&str, &str)] = &[("dichotomy", include_str!("../presets/dichotomy.toml"))];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub epsilon: f64,
    pub sigma: f64,
    pub doping: Doping,
    /// Id of an initial profile preset.
    pub initial: String,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            sigma: 0.0,
            doping: Doping::None,
            initial: "cosine".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub d: usize,
    pub geometry: Geometry,
    pub nodes: usize,
    pub length: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            d: 1,
            geometry: Geometry::Slab,
            nodes: 201,
            length: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeSection {
    pub tau: f64,
    pub horizon: f64,
    pub solver: StepSolver,
    pub picard_max: usize,
    pub picard_tol: f64,
    pub relaxation: f64,
    /// λ ladder for continuation; empty disables it.
    pub continuation: Vec<f64>,
    pub max_halvings: u32,
    pub delta: f64,
    pub entropy_budget: f64,
    pub newton: NewtonConfig,
}

impl Default for SchemeSection {
    fn default() -> Self {
        let s = StepConfig::default();
        Self {
            tau: 1e-4,
            horizon: 0.1,
            solver: s.solver,
            picard_max: s.picard_max,
            picard_tol: s.picard_tol,
            relaxation: s.relaxation,
            continuation: s.continuation.unwrap_or_default(),
            max_halvings: s.max_halvings,
            delta: s.delta,
            entropy_budget: s.entropy_budget,
            newton: s.newton,
        }
    }
}

impl SchemeSection {
    pub fn step_config(&self) -> StepConfig {
        StepConfig {
            tau: self.tau,
            picard_max: self.picard_max,
            picard_tol: self.picard_tol,
            relaxation: self.relaxation,
            continuation: if self.continuation.is_empty() {
                None
            } else {
                Some(self.continuation.clone())
            },
            newton: self.newton,
            solver: self.solver,
            max_halvings: self.max_halvings,
            delta: self.delta,
            entropy_budget: self.entropy_budget,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoSection {
    pub out_dir: PathBuf,
    /// Record every k-th step as a snapshot; 0 keeps only the first and last.
    pub snapshot_every: usize,
}

impl Default for IoSection {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            snapshot_every: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelSection,
    pub grid: GridSection,
    pub scheme: SchemeSection,
    pub classical: ClassicalConfig,
    pub io: IoSection,
}

fn field_error(field: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::InvalidArgument(m) | Error::InvalidGrid(m) => Error::config(field, m),
        other => other,
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::config("<file>", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Checks every section; classical runs (`epsilon = 0`) are only
    /// accepted through [`RunConfig::validate_allowing_classical`].
    pub fn validate(&self) -> Result<()> {
        if !(self.model.epsilon > 0.0 && self.model.epsilon.is_finite()) {
            return Err(Error::config(
                "model.epsilon",
                format!("must be positive, got {}", self.model.epsilon),
            ));
        }
        self.validate_allowing_classical()
    }

    pub fn validate_allowing_classical(&self) -> Result<()> {
        if !(self.model.epsilon >= 0.0 && self.model.epsilon.is_finite()) {
            return Err(Error::config(
                "model.epsilon",
                format!("must be nonnegative, got {}", self.model.epsilon),
            ));
        }
        if !self.model.sigma.is_finite() {
            return Err(Error::config("model.sigma", "must be finite"));
        }
        self.initial_profile()?;
        self.grid().map_err(field_error("grid"))?;
        if !(self.scheme.horizon > 0.0 && self.scheme.horizon.is_finite()) {
            return Err(Error::config("scheme.horizon", "must be positive"));
        }
        self.scheme
            .step_config()
            .validate()
            .map_err(field_error("scheme"))?;
        self.classical.validate().map_err(field_error("classical"))?;
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        build_grid(self.grid.d, self.grid.geometry, self.grid.nodes, self.grid.length)
    }

    pub fn initial_profile(&self) -> Result<InitialProfile> {
        profile(&self.model.initial).map_err(|_| {
            Error::config(
                "model.initial",
                format!("unknown profile `{}`", self.model.initial),
            )
        })
    }

    pub fn params(&self, grid: &Grid) -> ModelParams {
        ModelParams {
            epsilon: self.model.epsilon,
            sigma: self.model.sigma,
            doping: self.model.doping.values(grid),
        }
    }

    pub fn preset(id: &str) -> Result<Self> {
        let text = RUN_PRESETS
            .iter()
            .find(|(k, _)| *k == id)
            .map(|(_, t)| *t)
            .ok_or_else(|| Error::UnknownPreset(id.to_string()))?;
        Self::from_toml(text)
    }

    /// Reads a file, or falls back to a shipped preset when `source` is not an
    /// existing path.
    pub fn load(source: &str) -> Result<Self> {
        let path = Path::new(source);
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            Self::from_toml(&text)
        } else {
            Self::preset(source)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    sweep: SweepSpec,
}

impl SweepSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let f: SweepFile =
            toml::from_str(text).map_err(|e| Error::config("<file>", e.message().to_string()))?;
        f.sweep.validate()?;
        Ok(f.sweep)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&SweepFile { sweep: self.clone() }).expect("sweep spec serializes")
    }

    pub fn load(source: &str) -> Result<Self> {
        let path = Path::new(source);
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            Self::from_toml(&text)
        } else {
            let text = SWEEP_PRESETS
                .iter()
                .find(|(k, _)| *k == source)
                .map(|(_, t)| *t)
                .ok_or_else(|| Error::UnknownPreset(source.to_string()))?;
            Self::from_toml(text)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_validate() {
        for (id, _) in RUN_PRESETS {
            RunConfig::preset(id).unwrap();
        }
        for (id, _) in SWEEP_PRESETS {
            SweepSpec::load(id).unwrap();
        }
    }

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            RunConfig::from_toml("[model]\nepsilon = 0.1\nbogus = 1\n"),
            Err(Error::Config { .. })
        ));
        assert!(RunConfig::from_toml("[nope]\n").is_err());
    }

    #[test]
    fn bad_epsilon_names_the_field() {
        let err = RunConfig::from_toml("[model]\nepsilon = 0.0\n").unwrap_err();
        assert!(err.to_string().contains("model.epsilon"), "{err}");
        let err = RunConfig::from_toml("[model]\ninitial = \"nope\"\n").unwrap_err();
        assert!(err.to_string().contains("model.initial"));
    }

    #[test]
    fn unknown_preset() {
        assert!(matches!(
            RunConfig::load("no-such-preset"),
            Err(Error::UnknownPreset(_))
        ));
    }
}
