//! Run configuration: one JSON document with every default filled in.
//!
//! The normalized form (all fields present) is what gets embedded in output
//! metadata, so a run can be repeated from its own artifacts.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::capacity::CapacityOptions;
use crate::channel::{ChannelDocument, Family};
use crate::error::{Error, Result};
use crate::exponent::ExponentOptions;
use crate::montecarlo::{SweepGrid, TrialPlan};
use crate::scheme::SchemeConfig;
use crate::units::LogBase;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftSettings {
    pub episodes: u64,
    pub window: usize,
    /// Posterior threshold for the stage-two window runs.
    pub p0: f64,
    /// Target error rate for the stage-two window runs; tiny so the window
    /// is not cut short by stopping.
    pub pe_target: f64,
    pub epsilon: f64,
    pub distance_samples: u64,
    pub bins: u32,
}

impl Default for DriftSettings {
    fn default() -> Self {
        DriftSettings {
            episodes: 1000,
            window: 50,
            p0: 0.999999,
            pe_target: 1e-60,
            epsilon: 0.01,
            distance_samples: 100_000,
            bins: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub channel: ChannelDocument,
    pub capacity: CapacityOptions,
    pub exponent: ExponentOptions,
    pub scheme: SchemeConfig,
    pub sweep: SweepGrid,
    pub trials: TrialPlan,
    pub drift: DriftSettings,
    pub seed: u64,
    /// Worker threads; `None` falls back to `UNIFEED_JOBS`, then 1.
    pub jobs: Option<usize>,
    pub units: LogBase,
    pub out: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            channel: ChannelDocument::Builtin {
                family: Family::Symmetric,
                params: vec![0.5, 0.1],
            },
            capacity: CapacityOptions::default(),
            exponent: ExponentOptions::default(),
            scheme: SchemeConfig::default(),
            sweep: SweepGrid::default(),
            trials: TrialPlan::convergence(0.01),
            drift: DriftSettings::default(),
            seed: 1,
            jobs: None,
            units: LogBase::Bits,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every section against the preconditions of the module it feeds.
    pub fn validate(&self) -> Result<()> {
        self.channel.build()?;
        let c = &self.capacity;
        if !(c.grid_res > 0.0 && c.grid_res <= 1.0) || !(c.action_res > 0.0 && c.action_res <= 1.0) {
            return Err(Error::InvalidConfig("grid_res and action_res must lie in (0, 1]".into()));
        }
        if !(c.tol > 0.0) || c.max_iter == 0 || !(0.0..1.0).contains(&c.aperiodicity) {
            return Err(Error::InvalidConfig("capacity solver settings out of range".into()));
        }
        let e = &self.exponent;
        if !(e.tol > 0.0) || e.max_iter == 0 || !(0.0..1.0).contains(&e.aperiodicity) {
            return Err(Error::InvalidConfig("exponent solver settings out of range".into()));
        }
        self.scheme.validate()?;
        if self.sweep.k.is_empty() || self.sweep.pe.is_empty() || self.sweep.variants.is_empty() {
            return Err(Error::InvalidConfig("sweep lists must be non-empty".into()));
        }
        for &k in &self.sweep.k {
            for &pe in &self.sweep.pe {
                let mut s = self.scheme.clone();
                s.k = k;
                s.pe_target = pe;
                s.validate()?;
            }
        }
        self.trials.validate()?;
        let d = &self.drift;
        if d.episodes == 0 || d.window == 0 || d.bins == 0 {
            return Err(Error::InvalidConfig("drift episodes, window and bins must be positive".into()));
        }
        if !(d.epsilon > 0.0 && d.epsilon <= 1.0) {
            return Err(Error::InvalidConfig(format!("drift epsilon {} outside (0, 1]", d.epsilon)));
        }
        if !(d.p0 > 0.0 && d.pe_target > 0.0 && d.p0 < 1.0 - d.pe_target) {
            return Err(Error::InvalidConfig("drift p0 must satisfy 0 < p0 < 1 - pe_target".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::InvalidConfig("jobs must be positive".into()));
        }
        Ok(())
    }

    /// Pretty JSON with every field present.
    pub fn normalized_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// `jobs`, else `UNIFEED_JOBS`, else 1.
    pub fn effective_jobs(&self) -> usize {
        self.jobs
            .or_else(|| std::env::var("UNIFEED_JOBS").ok().and_then(|v| v.parse().ok()))
            .filter(|&j| j > 0)
            .unwrap_or(1)
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    RunConfig::from_json(&text)
}
