//! JSON run configuration. Unknown keys are rejected; every section is
//! validated against the library invariants when the file is loaded.

use std::path::Path;

use diffmig_core::estimate::{BootstrapSettings, DiffusionSum};
use diffmig_core::{
    AreaRect, DiffusionLaw, DomainRect, DriftVector, ImageSumControl, IntervalDistribution,
    MotionParams, NoiseModel,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::validate::ValidateSettings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub lx: f64,
    pub ly: f64,
    /// Lower-left corner in data coordinates; subtracted on ingestion.
    #[serde(default)]
    pub x_offset: f64,
    #[serde(default)]
    pub y_offset: f64,
}

impl DomainConfig {
    pub fn rect(&self) -> CliResult<DomainRect> {
        Ok(DomainRect::new(self.lx, self.ly)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 1000,
            level: 0.90,
            seed: 1,
        }
    }
}

impl BootstrapConfig {
    pub fn settings(&self) -> BootstrapSettings {
        BootstrapSettings {
            replicates: self.replicates,
            level: self.level,
            seed: self.seed,
        }
    }
}

/// Where `proportions` takes its motion parameters from.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ParamsSource {
    /// Error-corrected collective parameters estimated from `--data`.
    #[default]
    Collective,
    /// One matrix per path from its error-corrected effective parameters.
    PerPath,
    Explicit(MotionParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub paths: usize,
    /// Increments per path.
    pub increments: usize,
    pub beta: DriftVector,
    pub law: DiffusionLaw,
    pub intervals: IntervalDistribution,
    #[serde(default = "NoiseModel::none")]
    pub noise: NoiseModel,
    #[serde(default)]
    pub start: [f64; 2],
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub domain: Option<DomainConfig>,
    /// Initial areas, and final areas unless `final_areas` is given.
    #[serde(default)]
    pub areas: Vec<AreaRect>,
    #[serde(default)]
    pub final_areas: Option<Vec<AreaRect>>,
    /// Reject overlapping final areas.
    #[serde(default)]
    pub require_partition: bool,
    /// Proportion horizon ΔT in days.
    #[serde(default)]
    pub horizon: Option<f64>,
    /// Observation-error variance σ0²; 0 disables the correction.
    #[serde(default)]
    pub error_variance: f64,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    #[serde(default)]
    pub image_sum: ImageSumControl,
    /// Relative tolerance for grouping interval lengths.
    #[serde(default)]
    pub rel_tol: f64,
    #[serde(default)]
    pub project_lonlat: bool,
    #[serde(default)]
    pub diffusion_sum: DiffusionSum,
    #[serde(default)]
    pub params: ParamsSource,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub validate: ValidateSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config is valid")
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Applies `--seed` to every seeded stage.
    pub fn override_seed(&mut self, seed: u64) {
        self.bootstrap.seed = seed;
        self.validate.seed = seed;
        if let Some(sim) = &mut self.simulate {
            sim.seed = seed;
        }
    }

    pub fn domain_rect(&self) -> CliResult<DomainRect> {
        self.domain
            .as_ref()
            .ok_or_else(|| CliError::Usage("config has no domain".into()))?
            .rect()
    }

    pub fn final_areas(&self) -> &[AreaRect] {
        self.final_areas.as_deref().unwrap_or(&self.areas)
    }

    pub fn validate(&self) -> CliResult<()> {
        let usage = |m: String| Err(CliError::Usage(format!("config: {m}")));
        if let Some(d) = &self.domain {
            let rect = d.rect()?;
            for a in self.areas.iter().chain(self.final_areas.iter().flatten()) {
                a.validate_in(&rect)?;
            }
            if !(d.x_offset.is_finite() && d.y_offset.is_finite()) {
                return usage("domain offsets must be finite".into());
            }
        } else if !self.areas.is_empty() || self.final_areas.is_some() {
            return usage("areas require a domain".into());
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0 && h.is_finite()) {
                return usage(format!("horizon must be positive, got {h}"));
            }
        }
        if !(self.error_variance >= 0.0 && self.error_variance.is_finite()) {
            return usage(format!("error_variance must be >= 0, got {}", self.error_variance));
        }
        if !(self.rel_tol >= 0.0 && self.rel_tol.is_finite()) {
            return usage(format!("rel_tol must be >= 0, got {}", self.rel_tol));
        }
        self.bootstrap.settings().validate()?;
        self.image_sum.validate()?;
        if let ParamsSource::Explicit(p) = &self.params {
            p.validate()?;
        }
        if let Some(sim) = &self.simulate {
            if sim.paths == 0 {
                return usage("simulate.paths must be >= 1".into());
            }
            if sim.increments < 2 {
                return usage("simulate.increments must be >= 2".into());
            }
            sim.law.validate()?;
            sim.intervals.validate()?;
            sim.noise.validate()?;
        }
        self.validate.check()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_unknown_keys() {
        let c = RunConfig::from_json("{}").unwrap();
        assert_eq!(c.bootstrap.level, 0.9);
        assert_eq!(c.error_variance, 0.0);
        let e = RunConfig::from_json(r#"{"bogus": 1}"#).unwrap_err();
        assert_eq!(e.exit_code(), 1);
        assert!(RunConfig::from_json(r#"{"bootstrap": {"replicates": 10}}"#).is_err());
    }

    #[test]
    fn areas_are_checked_against_domain() {
        let ok = r#"{"domain": {"lx": 2, "ly": 1},
                     "areas": [{"name": "a", "x": {"lo": 0, "hi": 1}, "y": {"lo": 0, "hi": 1}}]}"#;
        RunConfig::from_json(ok).unwrap();
        let bad = ok.replace("\"hi\": 1}, \"y\"", "\"hi\": 3}, \"y\"");
        assert!(RunConfig::from_json(&bad).is_err());
        let no_domain = r#"{"areas": [{"name": "a", "x": {"lo": 0, "hi": 1}, "y": {"lo": 0, "hi": 1}}]}"#;
        assert!(RunConfig::from_json(no_domain).is_err());
    }

    #[test]
    fn echo_round_trips() {
        let text = r#"{"domain": {"lx": 2, "ly": 1}, "horizon": 30, "params": {"explicit": {"beta_x": 0, "beta_y": 0, "d_x": 1, "d_y": 1}},
            "simulate": {"paths": 2, "increments": 10, "beta": {"beta_x": 0.1, "beta_y": 0},
                         "law": {"kind": "constant", "d": 1}, "intervals": {"kind": "exponential", "mean": 0.5}}}"#;
        let c = RunConfig::from_json(text).unwrap();
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
    }
}
