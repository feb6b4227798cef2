//! Run configuration shared by all CLI commands.
//!
//! Stored as TOML. Unknown keys are rejected and every section falls back to
//! defaults when omitted. File paths are not part of the config, so the
//! config hash stamped into outputs does not depend on where files live.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::contrastive::LossConfig;
use crate::correspondence::{BevGridSpec, SamplingConfig};
use crate::geometry::FootprintConfig;
use crate::pose_graph::{check_range, DEFAULT_IOU_MAX, DEFAULT_IOU_MIN};
use crate::splits::{DEFAULT_PERCENTS, DEFAULT_VAL_FRAC};
use crate::synth::{OverlapPlan, Regime, RouteShape, SceneSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FootprintSection {
    pub lat_extent: f64,
    pub lon_extent: f64,
}

impl Default for FootprintSection {
    fn default() -> Self {
        let d = FootprintConfig::default();
        Self {
            lat_extent: d.lat_extent,
            lon_extent: d.lon_extent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub rows: usize,
    pub cols: usize,
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        let g = BevGridSpec::default();
        Self {
            rows: g.rows,
            cols: g.cols,
            lon_min: g.lon_range.0,
            lon_max: g.lon_range.1,
            lat_min: g.lat_range.0,
            lat_max: g.lat_range.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphSection {
    pub iou_min: f64,
    pub iou_max: f64,
    pub cross_only: bool,
}

impl Default for GraphSection {
    fn default() -> Self {
        Self {
            iou_min: DEFAULT_IOU_MIN,
            iou_max: DEFAULT_IOU_MAX,
            cross_only: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub percents: Vec<f64>,
    pub val_frac: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            percents: DEFAULT_PERCENTS.to_vec(),
            val_frac: DEFAULT_VAL_FRAC,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingSection {
    /// Reference-adjacent pairs drawn per run; 0 takes every graph edge.
    pub pairs: usize,
    pub anchors: usize,
    pub negatives: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_match_dist: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exclusion_radius: Option<f64>,
}

impl Default for SamplingSection {
    fn default() -> Self {
        let s = SamplingConfig::default();
        Self {
            pairs: 16,
            anchors: s.n_anchors,
            negatives: s.n_negatives,
            max_match_dist: None,
            exclusion_radius: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossSection {
    pub tau: f64,
    pub lambda_sup: f64,
    pub lambda_gclr: f64,
    /// Finite-difference step for `loss-check`.
    pub gradcheck_step: f64,
    /// Anchors and negatives of the first batch used by the gradient check.
    pub gradcheck_anchors: usize,
    pub gradcheck_negatives: usize,
}

impl Default for LossSection {
    fn default() -> Self {
        let l = LossConfig::default();
        Self {
            tau: l.tau,
            lambda_sup: l.lambda_sup,
            lambda_gclr: l.lambda_gclr,
            gradcheck_step: 1e-5,
            gradcheck_anchors: 4,
            gradcheck_negatives: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    /// Draw a random mix of components instead of using `plan`.
    pub random: bool,
    pub max_logs: usize,
    pub max_poses_per_log: usize,
    pub n_logs: usize,
    /// Entries of the form `a-b:regime`, regime one of none/partial/full.
    pub plan: Vec<String>,
    pub shapes: Vec<RouteShape>,
    pub poses_per_log: usize,
    pub spacing: f64,
    pub noise: f64,
    pub areas: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        let s = SceneSpec::default();
        Self {
            random: true,
            max_logs: 10,
            max_poses_per_log: 40,
            n_logs: s.n_logs,
            plan: Vec::new(),
            shapes: Vec::new(),
            poses_per_log: s.poses_per_log,
            spacing: s.spacing,
            noise: s.noise,
            areas: s.areas,
        }
    }
}

pub fn parse_plan_entry(s: &str) -> Result<OverlapPlan, ConfigError> {
    let bad = || ConfigError::Invalid(format!("plan entry `{s}` is not `a-b:regime`"));
    let (pair, regime) = s.trim().split_once(':').ok_or_else(bad)?;
    let (a, b) = pair.split_once('-').ok_or_else(bad)?;
    let regime = match regime {
        "none" => Regime::None,
        "partial" => Regime::Partial,
        "full" => Regime::Full,
        _ => return Err(bad()),
    };
    Ok(OverlapPlan {
        a: a.parse().map_err(|_| bad())?,
        b: b.parse().map_err(|_| bad())?,
        regime,
    })
}

impl SynthSection {
    pub fn scene_spec(&self, seed: u64) -> Result<SceneSpec, ConfigError> {
        if self.random {
            return Ok(SceneSpec::random(seed, self.max_logs, self.max_poses_per_log));
        }
        Ok(SceneSpec {
            n_logs: self.n_logs,
            shapes: self.shapes.clone(),
            plan: self.plan.iter().map(|p| parse_plan_entry(p)).collect::<Result<_, _>>()?,
            poses_per_log: self.poses_per_log,
            spacing: self.spacing,
            noise: self.noise,
            areas: self.areas,
            seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub footprint: FootprintSection,
    pub grid: GridSection,
    pub graph: GraphSection,
    pub split: SplitSection,
    pub sampling: SamplingSection,
    pub loss: LossSection,
    pub synth: SynthSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn footprint(&self) -> FootprintConfig {
        FootprintConfig {
            lat_extent: self.footprint.lat_extent,
            lon_extent: self.footprint.lon_extent,
        }
    }

    pub fn grid(&self) -> BevGridSpec {
        BevGridSpec {
            rows: self.grid.rows,
            cols: self.grid.cols,
            lon_range: (self.grid.lon_min, self.grid.lon_max),
            lat_range: (self.grid.lat_min, self.grid.lat_max),
        }
    }

    pub fn sampling(&self) -> SamplingConfig {
        SamplingConfig {
            n_anchors: self.sampling.anchors,
            n_negatives: self.sampling.negatives,
            max_match_dist: self.sampling.max_match_dist,
            exclusion_radius: self.sampling.exclusion_radius,
        }
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            tau: self.loss.tau,
            lambda_sup: self.loss.lambda_sup,
            lambda_gclr: self.loss.lambda_gclr,
        }
    }

    /// Checks every section. The IoU range is left to the graph command so
    /// it can report its own error.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.footprint().validate().map_err(|e| invalid(&e))?;
        self.grid().validate().map_err(|e| invalid(&e))?;
        self.loss().validate().map_err(|e| invalid(&e))?;
        let s = &self.split;
        if !(s.val_frac > 0.0 && s.val_frac < 1.0)
            || s.percents.iter().any(|p| !(*p > 0.0 && *p < 1.0))
            || s.percents.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(ConfigError::Invalid(
                "split fractions must lie in (0, 1) and percents must ascend".into(),
            ));
        }
        if self.sampling.anchors == 0 || self.sampling.negatives == 0 {
            return Err(ConfigError::Invalid("sampling needs at least one anchor and negative".into()));
        }
        for r in [self.sampling.max_match_dist, self.sampling.exclusion_radius].into_iter().flatten() {
            if !(r.is_finite() && r >= 0.0) {
                return Err(ConfigError::Invalid("sampling distances must be finite and >= 0".into()));
            }
        }
        let l = &self.loss;
        if !(l.gradcheck_step > 0.0 && l.gradcheck_step.is_finite())
            || l.gradcheck_anchors == 0
            || l.gradcheck_negatives == 0
        {
            return Err(ConfigError::Invalid("gradient check settings must be positive".into()));
        }
        for p in &self.synth.plan {
            parse_plan_entry(p)?;
        }
        Ok(())
    }

    /// Same as [`check_range`] on the configured bounds.
    pub fn check_iou_range(&self) -> Result<(), crate::pose_graph::GraphError> {
        check_range(self.graph.iou_min, self.graph.iou_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!(RunConfig::from_toml("").unwrap(), c);
        c.validate().unwrap();
    }

    #[test]
    fn partial_sections_fill_defaults() {
        let c = RunConfig::from_toml("seed = 9\n[graph]\niou_min = 0.5\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.graph.iou_min, 0.5);
        assert_eq!(c.graph.iou_max, DEFAULT_IOU_MAX);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("sede = 1\n").is_err());
        assert!(RunConfig::from_toml("[graph]\niou = 0.5\n").is_err());
        assert!(RunConfig::from_toml("[nope]\n").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut c = RunConfig::default();
        c.split.percents = vec![0.2, 0.1];
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.footprint.lat_extent = 0.0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.synth.plan = vec!["0-1:sideways".into()];
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.graph.iou_min = 0.95;
        c.validate().unwrap();
        assert!(c.check_iou_range().is_err());
    }

    #[test]
    fn plan_entries() {
        assert_eq!(
            parse_plan_entry("3-7:full").unwrap(),
            OverlapPlan { a: 3, b: 7, regime: Regime::Full }
        );
        assert!(parse_plan_entry("3:full").is_err());
        assert!(parse_plan_entry("a-b:full").is_err());
    }
}
