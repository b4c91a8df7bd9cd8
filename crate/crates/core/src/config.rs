//! TOML scenario configuration shared by the command-line tools.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::IoError;
use crate::features::ModelWeights;
use crate::grid::{BoundingBox, RebalancingGrid};
use crate::learning::{TrainConfig, TrainingSetConfig, DEFAULT_EXTRACTION_PERIOD_S, DEFAULT_PERTURBATIONS, DEFAULT_SIGMA};
use crate::model::{Objective, ObjectiveMode};
use crate::policy::{
    PolicyKind, PolicySpec, Sparsification, DEFAULT_CB_HORIZON_S, DEFAULT_DISCOUNT, DEFAULT_SAMPLING_HORIZON_S,
    DEFAULT_SB_HORIZON_S,
};
use crate::synth::SyntheticConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum PolicyName {
    Greedy,
    Sampling,
    SampleBased,
    CellBased,
    FullInformation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyName,
    /// Weight factor on sampled requests (sampling policy).
    pub discount: f64,
    /// Prediction horizon; the policy's default when absent.
    pub horizon_s: Option<f64>,
    /// Learned weights (sample- and cell-based policies).
    pub model: Option<PathBuf>,
    /// Capacity vertices per rebalancing cell (cell-based policy).
    pub n_capacity: u32,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self { kind: PolicyName::Greedy, discount: DEFAULT_DISCOUNT, horizon_s: None, model: None, n_capacity: 1 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputsConfig {
    pub requests: Option<PathBuf>,
    pub travel_times: Option<PathBuf>,
    pub distribution: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Rebalancing cell edge.
    pub cell_m: f64,
    /// Time-of-day bin of the calibrated distribution.
    pub bin_width_s: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { cell_m: 500.0, bin_width_s: 900.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparsificationConfig {
    pub t_max_s: f64,
    pub d_max_km: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub data: u64,
    pub fleet: u64,
    pub policy: u64,
    pub training: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { data: 1, fleet: 2, policy: 3, training: 4 }
    }
}

impl Seeds {
    pub fn all(seed: u64) -> Self {
        Self { data: seed, fleet: seed.wrapping_add(1), policy: seed.wrapping_add(2), training: seed.wrapping_add(3) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Learned policy to train; its model path is the output.
    pub policy: PolicyName,
    /// Core window, seconds after midnight.
    pub core_start_s: f64,
    pub core_end_s: f64,
    pub warmup_s: f64,
    pub cooldown_s: f64,
    pub extraction_period_s: f64,
    pub match_radius_m: f64,
    pub perturbations: usize,
    pub sigma: f64,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            policy: PolicyName::SampleBased,
            core_start_s: 7.0 * 3600.0,
            core_end_s: 8.0 * 3600.0,
            warmup_s: 1800.0,
            cooldown_s: 1800.0,
            extraction_period_s: DEFAULT_EXTRACTION_PERIOD_S,
            match_radius_m: 500.0,
            perturbations: DEFAULT_PERTURBATIONS,
            sigma: DEFAULT_SIGMA,
            max_iterations: 100,
            gradient_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub fleet_sizes: Vec<usize>,
    pub densities: Vec<f64>,
    pub policies: Vec<PolicyConfig>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            fleet_sizes: Vec::new(),
            densities: Vec::new(),
            policies: vec![PolicyConfig { kind: PolicyName::Sampling, ..PolicyConfig::default() }],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub fleet_size: usize,
    pub request_density: f64,
    pub period_s: f64,
    /// Absolute start of the simulated window; the first request's epoch
    /// when absent.
    pub start_s: Option<f64>,
    pub horizon_epochs: u32,
    /// Time before the start whose pickups seed the initial fleet positions.
    pub warmup_s: f64,
    pub objective: ObjectiveMode,
    pub cost_per_km: Option<f64>,
    /// Record per-epoch vehicle positions.
    pub snapshots: bool,
    pub inputs: InputsConfig,
    pub policy: PolicyConfig,
    pub grid: GridConfig,
    pub sparsification: Option<SparsificationConfig>,
    pub seeds: Seeds,
    pub training: TrainingConfig,
    pub evaluate: EvaluateConfig,
    pub synthetic: SyntheticConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            fleet_size: 60,
            request_density: 1.0,
            period_s: 60.0,
            start_s: None,
            horizon_epochs: 60,
            warmup_s: 1800.0,
            objective: ObjectiveMode::Profit,
            cost_per_km: None,
            snapshots: false,
            inputs: InputsConfig::default(),
            policy: PolicyConfig::default(),
            grid: GridConfig::default(),
            sparsification: None,
            seeds: Seeds::default(),
            training: TrainingConfig::default(),
            evaluate: EvaluateConfig::default(),
            synthetic: SyntheticConfig::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p.as_mut().filter(|p| p.is_relative()) {
        *path = base.join(&*path);
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, IoError> {
        toml::from_str(text).map_err(|e| IoError::Format(e.to_string()))
    }

    /// Reads a config file; relative paths inside it are resolved against
    /// its directory.
    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(|source| IoError::File { path: path.display().to_string(), source })?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| {
            let line = e.span().map_or(0, |s| text[..s.start].lines().count().max(1) as u64);
            IoError::Parse { path: path.display().to_string(), line, message: e.message().to_string() }
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut cfg.inputs.requests);
        resolve(base, &mut cfg.inputs.travel_times);
        resolve(base, &mut cfg.inputs.distribution);
        resolve(base, &mut cfg.policy.model);
        for p in &mut cfg.evaluate.policies {
            resolve(base, &mut p.model);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), IoError> {
        let bad = |m: String| Err(IoError::Format(m));
        if !(self.request_density > 0.0 && self.request_density <= 1.0) {
            return bad(format!("request_density {} outside (0, 1]", self.request_density));
        }
        if !(self.period_s > 0.0) {
            return bad("period_s must be positive".into());
        }
        if !(self.grid.cell_m > 0.0 && self.grid.bin_width_s > 0.0) {
            return bad("grid sizes must be positive".into());
        }
        let files = [&self.inputs.requests, &self.inputs.travel_times, &self.inputs.distribution, &self.policy.model];
        for p in files.into_iter().flatten() {
            if !p.exists() {
                return bad(format!("missing file {}", p.display()));
            }
        }
        Ok(())
    }

    pub fn objective(&self) -> Objective {
        let mut o = Objective::for_mode(self.objective);
        if let Some(c) = self.cost_per_km {
            o.cost_per_km = c;
        }
        o
    }

    pub fn rebalancing_grid(&self, area: BoundingBox) -> RebalancingGrid {
        RebalancingGrid::square(area, self.grid.cell_m)
    }

    pub fn cuts(&self) -> Option<Sparsification> {
        self.sparsification.map(|s| Sparsification { t_max_s: s.t_max_s, d_max_km: s.d_max_km })
    }

    /// Builds a runnable policy; learned policies load their model file.
    pub fn policy_spec(&self, p: &PolicyConfig, area: BoundingBox) -> Result<PolicySpec, IoError> {
        let model = || -> Result<ModelWeights, IoError> {
            let path = p.model.as_ref().ok_or_else(|| IoError::Format(format!("policy {:?} needs a model file", p.kind)))?;
            ModelWeights::load(path)
        };
        let kind = match p.kind {
            PolicyName::Greedy => PolicyKind::Greedy,
            PolicyName::Sampling => {
                PolicyKind::Sampling { discount: p.discount, horizon_s: p.horizon_s.unwrap_or(DEFAULT_SAMPLING_HORIZON_S) }
            }
            PolicyName::SampleBased => {
                PolicyKind::SampleBased { model: model()?, horizon_s: p.horizon_s.unwrap_or(DEFAULT_SB_HORIZON_S) }
            }
            PolicyName::CellBased => PolicyKind::CellBased {
                model: model()?,
                grid: self.rebalancing_grid(area),
                n_capacity: p.n_capacity,
                horizon_s: p.horizon_s.unwrap_or(DEFAULT_CB_HORIZON_S),
            },
            PolicyName::FullInformation => PolicyKind::FullInformation,
        };
        Ok(PolicySpec { kind, objective: self.objective(), sparsification: self.cuts(), seed: self.seeds.policy })
    }

    /// The graph-shaping part of a learned policy, with an empty model.
    pub fn training_policy(&self, area: BoundingBox) -> Result<PolicySpec, IoError> {
        let horizon = self.policy.horizon_s;
        let schema_model = |s| ModelWeights::zeros(s);
        let kind = match self.training.policy {
            PolicyName::SampleBased => PolicyKind::SampleBased {
                model: schema_model(crate::features::FeatureSchema::SampleBased),
                horizon_s: horizon.unwrap_or(DEFAULT_SB_HORIZON_S),
            },
            PolicyName::CellBased => PolicyKind::CellBased {
                model: schema_model(crate::features::FeatureSchema::CellBased),
                grid: self.rebalancing_grid(area),
                n_capacity: self.policy.n_capacity,
                horizon_s: horizon.unwrap_or(DEFAULT_CB_HORIZON_S),
            },
            other => return Err(IoError::Format(format!("cannot train policy {other:?}"))),
        };
        Ok(PolicySpec { kind, objective: self.objective(), sparsification: self.cuts(), seed: self.seeds.training })
    }

    pub fn training_set_config(&self, area: BoundingBox) -> Result<TrainingSetConfig, IoError> {
        let t = &self.training;
        Ok(TrainingSetConfig {
            policy: self.training_policy(area)?,
            fleet_size: self.fleet_size,
            period_s: self.period_s,
            core_start_s: t.core_start_s,
            core_end_s: t.core_end_s,
            warmup_s: t.warmup_s,
            cooldown_s: t.cooldown_s,
            extraction_period_s: t.extraction_period_s,
            match_radius_m: t.match_radius_m,
            seed: self.seeds.training,
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            perturbations: t.perturbations,
            sigma: t.sigma,
            max_iterations: t.max_iterations,
            gradient_tolerance: t.gradient_tolerance,
            seed: self.seeds.training,
        }
    }
}
