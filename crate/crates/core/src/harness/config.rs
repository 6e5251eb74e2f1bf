//! Experiment config files (TOML, `schema_version = 1`) and their resolution
//! into ready-to-run domain objects.

use std::path::{Path, PathBuf};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundled;
use crate::controller::ControllerConfig;
use crate::grid::{BoundedInterval, CandidateGrid};
use crate::learner::ResetPolicy;
use crate::plant::{
    Channel, DisturbanceSchedule, PlantKind, PlantModel, ReferenceSpec, TrainParams,
};
use crate::rbf::RbfNetwork;

pub const SCHEMA_VERSION: u32 = 1;
pub const NOISE_GENERATOR: &str = "chacha8";

/// Learner noise variance used when the plant is noiseless, so the
/// Gaussian likelihood stays well defined.
pub const MIN_LEARNER_VARIANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{origin}: {source}")]
    Syntax {
        origin: String,
        source: toml::de::Error,
    },
    #[error("{field}: {msg}")]
    Invalid { field: String, msg: String },
    #[error("unknown config `{0}` (not a file and not a bundled config name)")]
    Unknown(String),
}

fn invalid(field: impl Into<String>, msg: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        msg: msg.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantKindName {
    AffineCase1,
    Crh3Train,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainParamsConfig {
    pub xi: f64,
    pub sample_time: f64,
    pub c_r: f64,
    pub c_m: f64,
    pub c_a: f64,
}

impl From<TrainParamsConfig> for TrainParams {
    fn from(p: TrainParamsConfig) -> Self {
        TrainParams {
            xi: p.xi,
            sample_time: p.sample_time,
            c_r: p.c_r,
            c_m: p.c_m,
            c_a: p.c_a,
        }
    }
}

fn default_generator() -> String {
    NOISE_GENERATOR.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub kind: PlantKindName,
    pub noise_variance: f64,
    #[serde(default = "default_generator")]
    pub noise_generator: String,
    pub initial_output: f64,
    /// Train coefficients; the CRH3 values are used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainParamsConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    /// Parameter file, relative to the config file's directory.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceConfig {
    /// `amplitude·cos(2πk/period)`.
    Cosine {
        amplitude: f64,
        period: f64,
    },
    Square {
        segments: Vec<(usize, f64)>,
    },
    /// `base + amplitude/(1 + exp(−rate·k))`.
    LogisticTrain {
        base: f64,
        amplitude: f64,
        rate: f64,
    },
    /// `base + amplitude·(1 + exp(−rate·k))`.
    TransientTrain {
        base: f64,
        amplitude: f64,
        rate: f64,
    },
    /// Two-column `k,y_r` CSV, relative to the config file's directory.
    UserTable {
        path: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub lower: f64,
    pub upper: f64,
    pub eps: f64,
    pub segments: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceConfig {
    pub alpha: ChannelConfig,
    pub beta: ChannelConfig,
    pub gamma: ChannelConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_clamp: Option<f64>,
    #[serde(default)]
    pub initial_input: f64,
}

fn default_threshold() -> f64 {
    0.95
}

fn identity3() -> [[f64; 3]; 3] {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSection {
    pub admissible_error: f64,
    #[serde(default = "default_threshold")]
    pub posterior_threshold: f64,
    #[serde(default = "identity3")]
    pub initial_covariance: [[f64; 3]; 3],
    /// Defaults to the plant's noise variance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_variance: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelName {
    Alpha,
    Beta,
    Gamma,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSection {
    /// Channels redrawn uniformly from their bounds once per run.
    #[serde(default)]
    pub randomize: Vec<ChannelName>,
}

fn default_spike() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    /// `|y − y_r|` level counted as a post-change spike.
    #[serde(default = "default_spike")]
    pub spike_threshold: f64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            spike_threshold: default_spike(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub iterations: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub plant: PlantConfig,
    pub network: NetworkConfig,
    pub reference: ReferenceConfig,
    pub disturbance: DisturbanceConfig,
    pub controller: ControllerSection,
    pub learner: LearnerSection,
    #[serde(default)]
    pub monte_carlo: MonteCarloSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub output: OutputSection,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_seed() -> u64 {
    1
}

/// A validated config with every referenced file loaded.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub name: String,
    pub iterations: usize,
    pub seed: u64,
    pub plant: PlantModel,
    pub initial_output: f64,
    pub initial_input: f64,
    pub network: RbfNetwork,
    pub reference: ReferenceSpec,
    pub schedule: DisturbanceSchedule,
    pub grid: CandidateGrid,
    pub controller: ControllerConfig,
    pub reset: ResetPolicy,
    pub initial_covariance: Matrix3<f64>,
    pub learner_noise_variance: f64,
    pub randomize: Vec<ChannelName>,
    pub spike_threshold: f64,
}

impl ExperimentConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|source| ConfigError::Syntax {
            origin: origin.to_string(),
            source,
        })?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!(
                    "unsupported version {} (expected {SCHEMA_VERSION})",
                    cfg.schema_version
                ),
            ));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text, &path.display().to_string())?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    /// A file path, or else the name of a bundled config.
    pub fn load_or_bundled(spec: &str) -> Result<Self, ConfigError> {
        let path = Path::new(spec);
        if path.is_file() {
            return Self::load(path);
        }
        match bundled::config(spec) {
            Some(text) => Self::parse(text, spec),
            None => Err(ConfigError::Unknown(spec.to_string())),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn resolve_path(&self, rel: &str) -> Option<PathBuf> {
        let p = Path::new(rel);
        let candidate = match &self.base_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        };
        candidate.is_file().then_some(candidate)
    }

    fn load_network(&self) -> Result<RbfNetwork, ConfigError> {
        let rel = &self.network.path;
        if let Some(path) = self.resolve_path(rel) {
            return RbfNetwork::load(&path).map_err(|e| invalid("network.path", e));
        }
        match bundled::network_text(rel) {
            Some(text) => RbfNetwork::parse(text).map_err(|e| invalid("network.path", e)),
            None => Err(invalid("network.path", format!("cannot find `{rel}`"))),
        }
    }

    fn reference_spec(&self) -> Result<ReferenceSpec, ConfigError> {
        let spec = match &self.reference {
            ReferenceConfig::Cosine { amplitude, period } => {
                if !(*period > 0.0) {
                    return Err(invalid("reference.period", "must be positive"));
                }
                ReferenceSpec::Cosine {
                    amplitude: *amplitude,
                    omega: 2.0 * std::f64::consts::PI / period,
                }
            }
            ReferenceConfig::Square { segments } => ReferenceSpec::Square {
                segments: segments.clone(),
            },
            ReferenceConfig::LogisticTrain {
                base,
                amplitude,
                rate,
            } => ReferenceSpec::Logistic {
                base: *base,
                amplitude: *amplitude,
                rate: *rate,
            },
            ReferenceConfig::TransientTrain {
                base,
                amplitude,
                rate,
            } => ReferenceSpec::Transient {
                base: *base,
                amplitude: *amplitude,
                rate: *rate,
            },
            ReferenceConfig::UserTable { path } => {
                let file = self
                    .resolve_path(path)
                    .ok_or_else(|| invalid("reference.path", format!("cannot find `{path}`")))?;
                ReferenceSpec::load_table(&file).map_err(|e| invalid("reference.path", e))?
            }
        };
        spec.validate().map_err(|e| invalid("reference", e))?;
        // u(N) targets y_r(N+1)
        if !spec.covers(self.iterations + 1) {
            return Err(invalid(
                "reference",
                format!(
                    "must be defined for every k in [1, {}]",
                    self.iterations + 1
                ),
            ));
        }
        Ok(spec)
    }

    /// Check every section and load referenced files.
    pub fn resolve(&self) -> Result<Experiment, ConfigError> {
        if self.iterations < 2 {
            return Err(invalid("iterations", "must be at least 2"));
        }
        let p = &self.plant;
        if p.noise_generator != NOISE_GENERATOR {
            return Err(invalid(
                "plant.noise_generator",
                format!(
                    "unsupported generator `{}` (only `{NOISE_GENERATOR}`)",
                    p.noise_generator
                ),
            ));
        }
        if !p.initial_output.is_finite() {
            return Err(invalid("plant.initial_output", "must be finite"));
        }
        let kind = match (p.kind, p.train) {
            (PlantKindName::AffineCase1, None) => PlantKind::AffineCase1,
            (PlantKindName::AffineCase1, Some(_)) => {
                return Err(invalid(
                    "plant.train",
                    "only valid for kind = \"crh3_train\"",
                ))
            }
            (PlantKindName::Crh3Train, params) => {
                PlantKind::Crh3Train(params.map_or(TrainParams::CRH3, Into::into))
            }
        };
        let plant = PlantModel::new(kind, p.noise_variance).map_err(|e| invalid("plant", e))?;

        let d = &self.disturbance;
        let mut intervals = Vec::with_capacity(3);
        let mut channels = Vec::with_capacity(3);
        for (name, ch) in [("alpha", &d.alpha), ("beta", &d.beta), ("gamma", &d.gamma)] {
            let iv = BoundedInterval::new(ch.lower, ch.upper, ch.eps)
                .map_err(|e| invalid(format!("disturbance.{name}"), e))?;
            intervals.push(iv);
            channels.push(Channel {
                lower: ch.lower,
                upper: ch.upper,
                segments: ch.segments.clone(),
            });
        }
        let gamma = channels.pop().unwrap();
        let beta = channels.pop().unwrap();
        let alpha = channels.pop().unwrap();
        let schedule =
            DisturbanceSchedule::new(alpha, beta, gamma, self.iterations).map_err(|e| match e {
                crate::plant::SimError::Schedule { channel, msg } => {
                    invalid(format!("disturbance.{channel}.segments"), msg)
                }
                other => invalid("disturbance", other),
            })?;
        let grid = CandidateGrid::from_intervals(&intervals[0], &intervals[1], &intervals[2]);

        let controller = ControllerConfig::new(self.controller.lambda, self.controller.input_clamp)
            .map_err(|e| invalid("controller", e))?;
        if !self.controller.initial_input.is_finite() {
            return Err(invalid("controller.initial_input", "must be finite"));
        }
        let l = &self.learner;
        let reset = ResetPolicy::new(l.admissible_error, l.posterior_threshold)
            .map_err(|e| invalid("learner", e))?;
        let initial_covariance = Matrix3::from_fn(|i, j| l.initial_covariance[i][j]);
        if !crate::learner::is_psd(&initial_covariance) {
            return Err(invalid(
                "learner.initial_covariance",
                "must be symmetric positive semidefinite",
            ));
        }
        let learner_noise_variance = match l.noise_variance {
            Some(v) if v > 0.0 && v.is_finite() => v,
            Some(v) => {
                return Err(invalid(
                    "learner.noise_variance",
                    format!("must be positive, got {v}"),
                ))
            }
            None => p.noise_variance.max(MIN_LEARNER_VARIANCE),
        };
        if !(self.metrics.spike_threshold > 0.0) {
            return Err(invalid("metrics.spike_threshold", "must be positive"));
        }
        let mut randomize = self.monte_carlo.randomize.clone();
        randomize.sort_by_key(|c| *c as u8);
        randomize.dedup();

        Ok(Experiment {
            name: self.name.clone(),
            iterations: self.iterations,
            seed: self.seed,
            plant,
            initial_output: p.initial_output,
            initial_input: self.controller.initial_input,
            network: self.load_network()?,
            reference: self.reference_spec()?,
            schedule,
            grid,
            controller,
            reset,
            initial_covariance,
            learner_noise_variance,
            randomize,
            spike_threshold: self.metrics.spike_threshold,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_bundled_config_resolves() {
        for (name, text) in bundled::CONFIGS {
            let cfg = ExperimentConfig::parse(text, name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(&cfg.name, name);
            cfg.resolve().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn bundled_configs_round_trip() {
        for (name, text) in bundled::CONFIGS {
            let cfg = ExperimentConfig::parse(text, name).unwrap();
            let again = ExperimentConfig::parse(&cfg.to_toml(), name).unwrap();
            assert_eq!(cfg, again, "{name}");
        }
    }

    #[test]
    fn case1_grid_and_schedule() {
        let exp = ExperimentConfig::load_or_bundled("case1")
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(exp.grid.size(), 15);
        assert_eq!(exp.schedule.at(100).unwrap().alpha, 1.11);
        assert_eq!(exp.learner_noise_variance, 0.0004);
    }

    #[test]
    fn case4_grid_size() {
        let exp = ExperimentConfig::load_or_bundled("case4")
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(exp.grid.size(), 105);
        assert_eq!(exp.grid.beta_set().midpoints(), &[1.0]);
    }

    #[test]
    fn missing_lambda_names_the_field() {
        let text = bundled::config("case1")
            .unwrap()
            .replace("lambda = 0.9", "");
        let err = ExperimentConfig::parse(&text, "t").unwrap_err().to_string();
        assert!(err.contains("lambda"), "{err}");
    }

    #[test]
    fn overlapping_segments_are_rejected() {
        let text = bundled::config("case1")
            .unwrap()
            .replace("[180, 0.78]", "[80, 0.78]");
        let err = ExperimentConfig::parse(&text, "t")
            .unwrap()
            .resolve()
            .unwrap_err()
            .to_string();
        assert!(err.contains("disturbance.alpha.segments"), "{err}");
        assert!(err.contains("overlaps"), "{err}");
    }

    #[test]
    fn unknown_names_and_versions() {
        assert!(matches!(
            ExperimentConfig::load_or_bundled("nope"),
            Err(ConfigError::Unknown(_))
        ));
        let text = bundled::config("case1")
            .unwrap()
            .replace("schema_version = 1", "schema_version = 7");
        assert!(ExperimentConfig::parse(&text, "t")
            .unwrap_err()
            .to_string()
            .contains("schema_version"));
        let text = bundled::config("case1")
            .unwrap()
            .replace("chacha8", "mt19937");
        let err = ExperimentConfig::parse(&text, "t")
            .unwrap()
            .resolve()
            .unwrap_err();
        assert!(err.to_string().contains("plant.noise_generator"));
    }
}
