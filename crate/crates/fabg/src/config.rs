//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "scenarios": [{"kind": "rapid_cycle", "duration_ticks": 150, "period_ticks": 10}],
//!   "strategies": [{"kind": "NoTE", "k": 20}, {"kind": "TE", "k": 20, "m": 0.1}, {"kind": "PDLC", "k": 20}],
//!   "latencies": [{"perception_delay": 1, "inference_delay": 1, "communication_delay": 1}],
//!   "policy": {"oracle": {"noise_sigma": 0.05}},
//!   "trials": 5,
//!   "seed": 0
//! }
//! ```

use std::path::PathBuf;

use fabg_core::depth::PipelineConfig;
use fabg_core::executor::{
    compute_offset_masked, Compensation, LatencySeconds, StrategyConfig, StrategyKind, DEFAULT_TE_DECAY,
};
use fabg_core::metrics::Cost;
use fabg_core::policy::TrainConfig;
use fabg_core::scenario::{CorpusOptions, ScenarioSpec};
use fabg_core::LatencyModel;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config error at {path}: {message}")]
    Invalid { path: String, message: String },
}

impl ConfigError {
    fn at(path: impl Into<String>, message: impl std::fmt::Display) -> Self {
        ConfigError::Invalid {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// JSON path of the offending entry, when known.
    pub fn path(&self) -> Option<&str> {
        match self {
            ConfigError::Invalid { path, .. } => Some(path),
            ConfigError::Io { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyEntry {
    pub kind: StrategyKind,
    pub k: usize,
    /// TE decay; defaults to 0.1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    /// PDLC offset; when absent it is derived from each latency model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Delay sources the derived offset compensates.
    #[serde(default)]
    pub compensate: Compensation,
}

impl StrategyEntry {
    pub fn label(&self, n: Option<usize>) -> String {
        match self.kind {
            StrategyKind::NoTE => format!("NoTE(k={})", self.k),
            StrategyKind::TE => format!("TE(k={},m={})", self.k, self.m.unwrap_or(DEFAULT_TE_DECAY)),
            StrategyKind::PDLC => format!("PDLC(k={},n={})", self.k, n.unwrap_or(0)),
        }
    }
}

/// Delays in ticks, or in seconds converted with the scenario's rate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyEntry {
    #[serde(default)]
    pub perception_delay: u32,
    #[serde(default)]
    pub inference_delay: u32,
    #[serde(default)]
    pub communication_delay: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seconds: Option<LatencySeconds>,
}

impl LatencyEntry {
    pub fn ticks(p: u32, i: u32, c: u32) -> Self {
        Self {
            perception_delay: p,
            inference_delay: i,
            communication_delay: c,
            seconds: None,
        }
    }

    /// Simulated delays at `rate_hz`.
    pub fn model(&self, rate_hz: f64) -> LatencyModel {
        match &self.seconds {
            Some(s) => s.to_ticks(rate_hz),
            None => LatencyModel::new(self.perception_delay, self.inference_delay, self.communication_delay),
        }
    }

    /// Offset for the compensated sources: the tick total, or the rounded
    /// seconds total when delays are given in seconds.
    pub fn offset(&self, rate_hz: f64, mask: Compensation) -> usize {
        match &self.seconds {
            Some(s) => s.offset(rate_hz, mask) as usize,
            None => compute_offset_masked(&self.model(rate_hz), mask) as usize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForesightMode {
    /// The oracle knows the whole future of its source.
    Full,
    /// The oracle sees as far past its observation as the pipeline delay.
    Latency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Foresight {
    Ticks(usize),
    Mode(ForesightMode),
}

impl Default for Foresight {
    fn default() -> Self {
        Foresight::Mode(ForesightMode::Latency)
    }
}

impl Foresight {
    pub fn resolve(self, latency: &LatencyModel) -> Option<usize> {
        match self {
            Foresight::Ticks(h) => Some(h),
            Foresight::Mode(ForesightMode::Full) => None,
            Foresight::Mode(ForesightMode::Latency) => Some(latency.total() as usize),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleOptions {
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub foresight: Foresight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnedOptions {
    /// Training episodes per configured scenario.
    pub episodes: usize,
    pub train: TrainConfig,
    pub obs_height: usize,
    pub obs_width: usize,
    pub jitter: f64,
}

impl Default for LearnedOptions {
    fn default() -> Self {
        Self {
            episodes: 50,
            train: TrainConfig {
                ridge: 1e-3,
                learning_rate: None,
                epochs: 20,
                precondition: true,
            },
            obs_height: 36,
            obs_width: 48,
            jitter: CorpusOptions::default().jitter,
        }
    }
}

impl LearnedOptions {
    pub fn corpus(&self) -> CorpusOptions {
        CorpusOptions {
            observations: true,
            obs_height: self.obs_height,
            obs_width: self.obs_width,
            jitter: self.jitter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum PolicyChoice {
    Oracle(OracleOptions),
    Learned(LearnedOptions),
}

impl Default for PolicyChoice {
    fn default() -> Self {
        PolicyChoice::Oracle(OracleOptions::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostChoice {
    /// The scenario's target dimension.
    #[default]
    Driven,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricOptions {
    pub cost: CostChoice,
    pub response_fraction: f64,
    pub lo_fraction: f64,
    pub hi_fraction: f64,
    pub per_dim: bool,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            cost: CostChoice::Driven,
            response_fraction: 0.1,
            lo_fraction: 0.1,
            hi_fraction: 0.9,
            per_dim: false,
        }
    }
}

impl MetricOptions {
    pub fn cost_for(&self, target: usize) -> Cost {
        match self.cost {
            CostChoice::Driven => Cost::L1Dim(target),
            CostChoice::All => Cost::L1All,
        }
    }
}

fn default_latencies() -> Vec<LatencyEntry> {
    vec![LatencyEntry::default()]
}

fn default_trials() -> usize {
    5
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenarios: Vec<ScenarioSpec>,
    pub strategies: Vec<StrategyEntry>,
    #[serde(default = "default_latencies")]
    pub latencies: Vec<LatencyEntry>,
    #[serde(default)]
    pub policy: PolicyChoice,
    #[serde(default)]
    pub metrics: MetricOptions,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Write one trace CSV per cell.
    #[serde(default = "default_true")]
    pub write_traces: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::at(
                if path.is_empty() {
                    "$".into()
                } else {
                    format!("$.{path}")
                },
                e.inner(),
            )
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Resolved strategy for scenario rate `rate_hz` under latency `l`.
    pub fn strategy_config(&self, s: usize, l: usize, rate_hz: f64) -> StrategyConfig {
        let e = &self.strategies[s];
        StrategyConfig {
            kind: e.kind,
            k: e.k,
            te_decay: e.m.unwrap_or(DEFAULT_TE_DECAY),
            pdlc_offset: match e.kind {
                StrategyKind::PDLC => e.n.unwrap_or_else(|| self.latencies[l].offset(rate_hz, e.compensate)),
                _ => 0,
            },
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.scenarios.is_empty() {
            return Err(ConfigError::at("$.scenarios", "at least one scenario is required"));
        }
        if self.strategies.is_empty() {
            return Err(ConfigError::at("$.strategies", "at least one strategy is required"));
        }
        if self.latencies.is_empty() {
            return Err(ConfigError::at("$.latencies", "at least one latency model is required"));
        }
        if self.trials == 0 {
            return Err(ConfigError::at("$.trials", "trials must be at least 1"));
        }
        for (i, s) in self.scenarios.iter().enumerate() {
            s.validate()
                .map_err(|e| ConfigError::at(format!("$.scenarios[{i}]"), e))?;
        }
        for (j, l) in self.latencies.iter().enumerate() {
            let ticks_given = l.perception_delay + l.inference_delay + l.communication_delay > 0;
            if let Some(s) = &l.seconds {
                if ticks_given {
                    return Err(ConfigError::at(
                        format!("$.latencies[{j}]"),
                        "give delays either in ticks or in seconds, not both",
                    ));
                }
                let all = [s.perception, s.inference, s.communication];
                if !all.iter().all(|v| v.is_finite() && *v >= 0.0) {
                    return Err(ConfigError::at(
                        format!("$.latencies[{j}].seconds"),
                        "delays must be finite and non-negative",
                    ));
                }
            }
        }
        for (i, e) in self.strategies.iter().enumerate() {
            let path = format!("$.strategies[{i}]");
            for (si, scenario) in self.scenarios.iter().enumerate() {
                for j in 0..self.latencies.len() {
                    let cfg = self.strategy_config(i, j, scenario.rate_hz as f64);
                    if let Err(err) = cfg.validate() {
                        let at = match (e.kind, e.n) {
                            (StrategyKind::PDLC, Some(_)) => format!("{path}.n"),
                            (StrategyKind::PDLC, None) => {
                                format!("{path}.n (derived for $.latencies[{j}], $.scenarios[{si}])")
                            }
                            (StrategyKind::TE, _) if e.k > 0 => format!("{path}.m"),
                            _ => format!("{path}.k"),
                        };
                        return Err(ConfigError::at(at, err));
                    }
                }
            }
        }
        if let PolicyChoice::Oracle(o) = &self.policy {
            if !(o.noise_sigma.is_finite() && o.noise_sigma >= 0.0) {
                return Err(ConfigError::at(
                    "$.policy.oracle.noise_sigma",
                    "noise_sigma must be finite and non-negative",
                ));
            }
        }
        if let PolicyChoice::Learned(l) = &self.policy {
            if l.episodes == 0 {
                return Err(ConfigError::at(
                    "$.policy.learned.episodes",
                    "episodes must be at least 1",
                ));
            }
            let (gh, gw) = (fabg_core::depth::GRID_HEIGHT, fabg_core::depth::GRID_WIDTH);
            if l.obs_height < gh || l.obs_width < gw {
                return Err(ConfigError::at(
                    "$.policy.learned",
                    format!("observations must be at least {gh}x{gw} pixels"),
                ));
            }
        }
        let m = &self.metrics;
        if !(m.response_fraction > 0.0 && m.response_fraction < 1.0) {
            return Err(ConfigError::at("$.metrics.response_fraction", "must lie in (0, 1)"));
        }
        if !(m.lo_fraction > 0.0 && m.lo_fraction < m.hi_fraction && m.hi_fraction < 1.0) {
            return Err(ConfigError::at("$.metrics", "need 0 < lo_fraction < hi_fraction < 1"));
        }
        fabg_core::depth::FeaturePipeline::new(self.pipeline).map_err(|e| ConfigError::at("$.pipeline", e))?;
        Ok(())
    }
}
