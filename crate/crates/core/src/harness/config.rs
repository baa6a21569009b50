use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::eql::AgentConfig;
use crate::momdp::EpisodeShape;
use crate::sim::road::ROAD_IDS;
use crate::sim::SimParams;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Eql,
    Sorlw,
    Rs,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Eql => "eql",
            Algorithm::Sorlw => "sorlw",
            Algorithm::Rs => "rs",
        }
    }

    pub fn is_learned(&self) -> bool {
        !matches!(self, Algorithm::Rs)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eql" => Ok(Algorithm::Eql),
            "sorlw" => Ok(Algorithm::Sorlw),
            "rs" => Ok(Algorithm::Rs),
            _ => Err(Error::Config(format!(
                "unknown algorithm {s:?}; expected eql, sorlw or rs"
            ))),
        }
    }
}

/// Everything that determines a run. Timestamps and paths are not part of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub road: u8,
    pub seed: u64,
    pub train_episodes: usize,
    pub eval_episodes: usize,
    pub steps: u32,
    pub ticks_per_step: u32,
    pub dt: f64,
    /// Route time budget in seconds; omitted means route length over half the
    /// speed limit.
    pub budget: Option<f64>,
    /// Write a training trace every this many episodes; 0 disables them.
    pub trace_every: usize,
    /// Use the rayon pool for evaluation episodes and batch math.
    pub parallel: bool,
    pub agent: AgentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            algorithm: Algorithm::Eql,
            road: 1,
            seed: 0,
            train_episodes: 1200,
            eval_episodes: 100,
            steps: 6,
            ticks_per_step: 40,
            dt: 0.05,
            budget: None,
            trace_every: 100,
            parallel: true,
            agent: AgentConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !ROAD_IDS.contains(&self.road) {
            return Err(Error::Config(format!(
                "road id out of range: {} (valid: {}..={})",
                self.road,
                ROAD_IDS.start(),
                ROAD_IDS.end()
            )));
        }
        if self.train_episodes == 0 || self.eval_episodes == 0 {
            return Err(Error::Config("episode counts must be >= 1".into()));
        }
        if !(1..=1000).contains(&self.steps) || !(1..=100_000).contains(&self.ticks_per_step) {
            return Err(Error::Config(format!(
                "steps must lie in 1..=1000 and ticks_per_step in 1..=100000, got {} and {}",
                self.steps, self.ticks_per_step
            )));
        }
        if !(self.dt > 0.0 && self.dt <= 1.0) {
            return Err(Error::Config(format!("dt must lie in (0, 1], got {}", self.dt)));
        }
        if let Some(b) = self.budget {
            if !(b > 0.0) || !b.is_finite() {
                return Err(Error::Config(format!("time budget must be > 0, got {b}")));
            }
        }
        self.agent.validate()
    }

    pub fn sim_params(&self) -> SimParams {
        SimParams {
            dt: self.dt,
            ..SimParams::default()
        }
    }

    pub fn shape(&self) -> EpisodeShape {
        EpisodeShape {
            steps: self.steps,
            ticks_per_step: self.ticks_per_step,
        }
    }
}
