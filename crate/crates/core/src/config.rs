//! The line-oriented pipeline configuration: `section.key = value` pairs,
//! `#` comments, unknown keys rejected. Every run emits the fully resolved
//! configuration next to its outputs, and re-running from that file
//! reproduces the outputs byte for byte.

use crate::chain::PowerRule;
use crate::goicp::BnbConfig;
use crate::select::SelectionConfig;
use crate::sim::{ForestSpec, ScanSpec};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {0}: expected `section.key = value`")]
    Malformed(usize),
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value for `{key}`: {msg}")]
    InvalidValue {
        line: usize,
        key: String,
        msg: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Waypoints and frame count of the simulated drive.
#[derive(Debug, Clone, PartialEq)]
pub struct PathConfig {
    pub waypoints: Vec<(f64, f64)>,
    pub n_frames: usize,
    pub tilt_jitter: f64,
}

impl Default for PathConfig {
    fn default() -> Self {
        // A 130 m strip road across the default 180 x 40 m site.
        Self {
            waypoints: vec![(25.0, 20.0), (155.0, 20.0)],
            n_frames: 200,
            tilt_jitter: 0.0,
        }
    }
}

/// Odometry perturbation injected by `generate` to produce a drifted
/// initial pose file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdometryConfig {
    pub rot_bias_deg: f64,
    pub trans_noise: f64,
    pub seed: u64,
}

impl Default for OdometryConfig {
    fn default() -> Self {
        Self {
            rot_bias_deg: 0.3,
            trans_noise: 0.05,
            seed: 11,
        }
    }
}

/// Initial-SLAM parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlamConfig {
    pub gamma: f64,
}

impl Default for SlamConfig {
    fn default() -> Self {
        Self { gamma: 0.6 }
    }
}

/// Metric scales and clustering parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsConfig {
    pub eps1: f64,
    pub eps2: f64,
    pub r_alpha: f64,
    pub min_points: usize,
    pub dim_scales: Vec<f64>,
    pub worst_frames: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            eps1: 0.2,
            eps2: 10.0,
            r_alpha: 0.5,
            min_points: 15,
            dim_scales: vec![0.2, 0.4, 0.8, 1.6, 3.2],
            worst_frames: 0,
        }
    }
}

/// How the branch-and-bound configuration is chosen for the improvement
/// loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnbPreset {
    /// Derive granularity from the data (`σ_t = δ0`, `σ_r = θ0`).
    Auto,
    General,
    SparseUniform,
}

impl BnbPreset {
    pub fn name(&self) -> &'static str {
        match self {
            BnbPreset::Auto => "auto",
            BnbPreset::General => "general",
            BnbPreset::SparseUniform => "sparse-uniform",
        }
    }
}

/// Improvement-loop section.
#[derive(Debug, Clone, PartialEq)]
pub struct ImproveSection {
    pub rule: PowerRule,
    pub strategy: String,
    pub strategy_seed: u64,
    pub lambda0: f64,
    pub patience: usize,
}

impl Default for ImproveSection {
    fn default() -> Self {
        Self {
            rule: PowerRule::Index,
            strategy: "medium_gaps_first".to_string(),
            strategy_seed: 17,
            lambda0: 0.4,
            patience: 10,
        }
    }
}

/// The full pipeline configuration, one struct per section.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub forest: ForestSpec,
    pub scan: ScanSpec,
    pub path: PathConfig,
    pub odometry: OdometryConfig,
    pub slam: SlamConfig,
    pub selection: SelectionConfig,
    pub improve: ImproveSection,
    pub bnb_preset: BnbPreset,
    pub bnb_overrides: BTreeMap<String, f64>,
    pub metrics: MetricsConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            forest: ForestSpec::default(),
            scan: ScanSpec::default(),
            path: PathConfig::default(),
            odometry: OdometryConfig::default(),
            slam: SlamConfig::default(),
            selection: SelectionConfig { m: 40, ..SelectionConfig::default() },
            improve: ImproveSection::default(),
            bnb_preset: BnbPreset::Auto,
            bnb_overrides: BTreeMap::new(),
            metrics: MetricsConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Parses the `section.key = value` format over the defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Malformed(line_no))?;
            let key = key.trim();
            let value = value.trim();
            cfg.apply(key, value, line_no)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        let bad = |msg: &str| ConfigError::InvalidValue {
            line,
            key: key.to_string(),
            msg: msg.to_string(),
        };
        let f = |v: &str| v.parse::<f64>().map_err(|e| bad(&e.to_string()));
        let u = |v: &str| v.parse::<u64>().map_err(|e| bad(&e.to_string()));
        let us = |v: &str| v.parse::<usize>().map_err(|e| bad(&e.to_string()));
        match key {
            "forest.width" => self.forest.width = f(value)?,
            "forest.height" => self.forest.height = f(value)?,
            "forest.target_l0" => self.forest.target_l0 = f(value)?,
            "forest.seed" => self.forest.seed = u(value)?,
            "scan.half_angle_deg" => self.scan.half_angle = f(value)?.to_radians(),
            "scan.range" => self.scan.range = f(value)?,
            "scan.noise" => self.scan.noise = f(value)?,
            "scan.dropout" => self.scan.dropout = f(value)?,
            "path.waypoints" => {
                let nums: Result<Vec<f64>, _> = value.split_whitespace().map(f).collect();
                let nums = nums?;
                if nums.len() < 4 || nums.len() % 2 != 0 {
                    return Err(bad("expected an even number (≥ 4) of coordinates"));
                }
                self.path.waypoints = nums.chunks(2).map(|c| (c[0], c[1])).collect();
            }
            "path.n_frames" => self.path.n_frames = us(value)?,
            "path.tilt_jitter_deg" => self.path.tilt_jitter = f(value)?.to_radians(),
            "odometry.rot_bias_deg" => self.odometry.rot_bias_deg = f(value)?,
            "odometry.trans_noise" => self.odometry.trans_noise = f(value)?,
            "odometry.seed" => self.odometry.seed = u(value)?,
            "slam.gamma" => self.slam.gamma = f(value)?,
            "selection.max_gap" => self.selection.max_gap = us(value)?,
            "selection.lambda_min" => self.selection.lambda_min = f(value)?,
            "selection.m" => self.selection.m = us(value)?,
            "selection.error_intercept" => self.selection.error_intercept = f(value)?,
            "selection.error_slope" => self.selection.error_slope = f(value)?,
            "selection.exhaustive_limit" => self.selection.exhaustive_limit = us(value)?,
            "selection.seed" => self.selection.seed = u(value)?,
            "improve.rule" => {
                self.improve.rule = value.parse().map_err(|e: String| bad(&e))?;
            }
            "improve.strategy" => {
                crate::select::OrderStrategy::parse(value, 0)
                    .map_err(|e| bad(&e.to_string()))?;
                self.improve.strategy = value.to_string();
            }
            "improve.strategy_seed" => self.improve.strategy_seed = u(value)?,
            "improve.lambda0" => self.improve.lambda0 = f(value)?,
            "improve.patience" => self.improve.patience = us(value)?,
            "bnb.preset" => {
                self.bnb_preset = match value {
                    "auto" => BnbPreset::Auto,
                    "general" => BnbPreset::General,
                    "sparse-uniform" => BnbPreset::SparseUniform,
                    other => return Err(bad(&format!("unknown preset `{other}`"))),
                };
            }
            "bnb.sigma_t" | "bnb.sigma_r_deg" | "bnb.horizontal_zone_deg" | "bnb.tilt_zone_deg"
            | "bnb.box_x" | "bnb.box_y" | "bnb.box_z" | "bnb.max_nodes" => {
                self.bnb_overrides.insert(key.to_string(), f(value)?);
            }
            "metrics.eps1" => self.metrics.eps1 = f(value)?,
            "metrics.eps2" => self.metrics.eps2 = f(value)?,
            "metrics.r_alpha" => self.metrics.r_alpha = f(value)?,
            "metrics.min_points" => self.metrics.min_points = us(value)?,
            "metrics.dim_scales" => {
                let nums: Result<Vec<f64>, _> = value.split_whitespace().map(f).collect();
                self.metrics.dim_scales = nums?;
            }
            "metrics.worst_frames" => self.metrics.worst_frames = us(value)?,
            other => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: other.to_string(),
                })
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |msg: &str| Err(ConfigError::Invalid(msg.to_string()));
        if !(0.0..1.0).contains(&self.slam.gamma) {
            return err("slam.gamma must lie in [0, 1)");
        }
        if self.selection.max_gap < 2 {
            return err("selection.max_gap must be at least 2");
        }
        if !(0.0 < self.selection.lambda_min && self.selection.lambda_min < 1.0) {
            return err("selection.lambda_min must lie in (0, 1)");
        }
        if self.selection.m < 1 {
            return err("selection.m must be at least 1");
        }
        if self.path.n_frames < 2 {
            return err("path.n_frames must be at least 2");
        }
        if !(self.metrics.eps1 > 0.0 && self.metrics.eps1 < self.metrics.eps2) {
            return err("metrics scales must satisfy 0 < eps1 < eps2");
        }
        if !(0.0..1.0).contains(&self.scan.dropout) {
            return err("scan.dropout must lie in [0, 1)");
        }
        Ok(())
    }

    /// Resolves the branch-and-bound configuration: preset (or data-derived
    /// granularity for `auto`) plus any explicit key overrides.
    pub fn bnb_config(&self, measured_l0: f64) -> Result<BnbConfig, ConfigError> {
        let mut cfg = match self.bnb_preset {
            BnbPreset::General => BnbConfig::general(),
            BnbPreset::SparseUniform => BnbConfig::sparse_uniform(),
            BnbPreset::Auto => BnbConfig::for_site(measured_l0, self.slam.gamma, self.scan.range)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?,
        };
        for (key, &value) in &self.bnb_overrides {
            match key.as_str() {
                "bnb.sigma_t" => cfg.sigma_t = value,
                "bnb.sigma_r_deg" => cfg.sigma_r = value.to_radians(),
                "bnb.horizontal_zone_deg" => cfg.horizontal_zone = value.to_radians(),
                "bnb.tilt_zone_deg" => cfg.tilt_zone = value.to_radians(),
                "bnb.box_x" => cfg.translation_box[0] = value,
                "bnb.box_y" => cfg.translation_box[1] = value,
                "bnb.box_z" => cfg.translation_box[2] = value,
                "bnb.max_nodes" => cfg.max_nodes = value as usize,
                _ => unreachable!("overrides are filtered at parse time"),
            }
        }
        cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }

    /// Overrides every section seed from a master seed (used by the CLI's
    /// `--seed` flag, so one number pins the whole run).
    pub fn reseed(&mut self, master: u64) {
        self.forest.seed = master;
        self.odometry.seed = master.wrapping_add(1);
        self.selection.seed = master.wrapping_add(2);
        self.improve.strategy_seed = master.wrapping_add(3);
    }

    /// The fully resolved configuration in parseable form, keys sorted.
    pub fn emit(&self) -> String {
        let mut lines: Vec<String> = vec![
            format!("forest.width = {}", self.forest.width),
            format!("forest.height = {}", self.forest.height),
            format!("forest.target_l0 = {}", self.forest.target_l0),
            format!("forest.seed = {}", self.forest.seed),
            format!("scan.half_angle_deg = {}", self.scan.half_angle.to_degrees()),
            format!("scan.range = {}", self.scan.range),
            format!("scan.noise = {}", self.scan.noise),
            format!("scan.dropout = {}", self.scan.dropout),
            format!(
                "path.waypoints = {}",
                self.path
                    .waypoints
                    .iter()
                    .map(|(x, y)| format!("{x} {y}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            ),
            format!("path.n_frames = {}", self.path.n_frames),
            format!("path.tilt_jitter_deg = {}", self.path.tilt_jitter.to_degrees()),
            format!("odometry.rot_bias_deg = {}", self.odometry.rot_bias_deg),
            format!("odometry.trans_noise = {}", self.odometry.trans_noise),
            format!("odometry.seed = {}", self.odometry.seed),
            format!("slam.gamma = {}", self.slam.gamma),
            format!("selection.max_gap = {}", self.selection.max_gap),
            format!("selection.lambda_min = {}", self.selection.lambda_min),
            format!("selection.m = {}", self.selection.m),
            format!("selection.error_intercept = {}", self.selection.error_intercept),
            format!("selection.error_slope = {}", self.selection.error_slope),
            format!("selection.exhaustive_limit = {}", self.selection.exhaustive_limit),
            format!("selection.seed = {}", self.selection.seed),
            format!("improve.rule = {}", self.improve.rule.name()),
            format!("improve.strategy = {}", self.improve.strategy),
            format!("improve.strategy_seed = {}", self.improve.strategy_seed),
            format!("improve.lambda0 = {}", self.improve.lambda0),
            format!("improve.patience = {}", self.improve.patience),
            format!("bnb.preset = {}", self.bnb_preset.name()),
            format!("metrics.eps1 = {}", self.metrics.eps1),
            format!("metrics.eps2 = {}", self.metrics.eps2),
            format!("metrics.r_alpha = {}", self.metrics.r_alpha),
            format!("metrics.min_points = {}", self.metrics.min_points),
            format!(
                "metrics.dim_scales = {}",
                self.metrics
                    .dim_scales
                    .iter()
                    .map(|s| s.to_string())
                    .collect::<Vec<_>>()
                    .join(" ")
            ),
            format!("metrics.worst_frames = {}", self.metrics.worst_frames),
        ];
        for (key, value) in &self.bnb_overrides {
            lines.push(format!("{key} = {value}"));
        }
        lines.sort();
        lines.join("\n") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_emit() {
        let cfg = PipelineConfig::default();
        let text = cfg.emit();
        let parsed = PipelineConfig::parse(&text).unwrap();
        assert_eq!(cfg, parsed);
        assert_eq!(text, parsed.emit());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = PipelineConfig::parse("forest.depth = 3\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { line: 1, .. }));

        let err = PipelineConfig::parse("### ok\nnot a pair\n").unwrap_err();
        assert!(matches!(err, ConfigError::Malformed(2)));
    }

    #[test]
    fn values_and_comments_parse() {
        let text = "\n# comment\nforest.seed = 99  # trailing\nscan.half_angle_deg = 30\nimprove.strategy = small_gaps_first\n";
        let cfg = PipelineConfig::parse(text).unwrap();
        assert_eq!(cfg.forest.seed, 99);
        assert!((cfg.scan.half_angle - 30f64.to_radians()).abs() < 1e-12);
        assert_eq!(cfg.improve.strategy, "small_gaps_first");
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(PipelineConfig::parse("slam.gamma = 1.5\n").is_err());
        assert!(PipelineConfig::parse("improve.strategy = diagonal\n").is_err());
        assert!(PipelineConfig::parse("bnb.preset = huge\n").is_err());
    }

    #[test]
    fn bnb_presets_and_overrides() {
        let mut cfg = PipelineConfig::default();
        cfg.bnb_preset = BnbPreset::SparseUniform;
        let bnb = cfg.bnb_config(3.5).unwrap();
        assert_eq!(bnb, crate::goicp::BnbConfig::sparse_uniform());

        let text = "bnb.preset = sparse-uniform\nbnb.sigma_t = 1.0\nbnb.box_z = 4\n";
        let cfg = PipelineConfig::parse(text).unwrap();
        let bnb = cfg.bnb_config(3.5).unwrap();
        assert_eq!(bnb.sigma_t, 1.0);
        assert_eq!(bnb.translation_box[2], 4.0);
    }
}
