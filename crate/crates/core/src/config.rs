//! Run configuration: one JSON document with a section per subsystem, every
//! field optional, unknown keys rejected. A run is identified by the
//! fingerprint of its effective configuration, not by the file it came from.

use crate::datagen::{FilterConfig, ShapeParams};
use crate::env::EpisodeLimits;
use crate::oracle::OracleConfig;
use crate::rewards::RewardConfig;
use crate::segment::{DiscSegmenter, SeededSegmenter, Segmenter};
use crate::store::digest_of;
use crate::templates::QuestionRatios;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Environment variable consulted when no --config flag is given.
pub const CONFIG_ENV_VAR: &str = "CLICKSIM_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("segmenter kind {0:?} needs an endpoint")]
    MissingEndpoint(SegmenterKind),
    #[error("segmenter kind {0:?} is not constructible locally")]
    NotLocal(SegmenterKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmenterKind {
    Disc,
    Seeded,
    Remote,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmenterConfig {
    pub kind: SegmenterKind,
    pub disc_radius: f64,
    pub prior_bonus: f64,
    pub endpoint: Option<String>,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        SegmenterConfig {
            kind: SegmenterKind::Disc,
            disc_radius: 4.0,
            prior_bonus: 2.0,
            endpoint: None,
        }
    }
}

impl SegmenterConfig {
    /// Builds the in-process segmenters. Remote needs a transport and lives
    /// one crate up; callers branch on `kind` before getting here. The bound
    /// is Send + Sync so the result can also back a server.
    pub fn build_local(&self) -> Result<Box<dyn Segmenter + Send + Sync>, ConfigError> {
        match self.kind {
            SegmenterKind::Disc => Ok(Box::new(DiscSegmenter::new(self.disc_radius))),
            SegmenterKind::Seeded => Ok(Box::new(SeededSegmenter::new(self.prior_bonus))),
            SegmenterKind::Remote => Err(ConfigError::NotLocal(self.kind)),
        }
    }

    pub fn endpoint(&self) -> Result<&str, ConfigError> {
        self.endpoint.as_deref().ok_or(ConfigError::MissingEndpoint(self.kind))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatagenConfig {
    pub count: usize,
    pub shape: ShapeParams,
    pub filter: FilterConfig,
    pub ratios: QuestionRatios,
    pub self_correction_fraction: f64,
    pub inconsistency_fraction: f64,
    /// Dataset-building oracle; annotates click radii by default, unlike the
    /// top-level simulation oracle.
    pub oracle: OracleConfig,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        DatagenConfig {
            count: 100,
            shape: ShapeParams::default(),
            filter: FilterConfig::default(),
            ratios: QuestionRatios::default(),
            self_correction_fraction: 0.15,
            inconsistency_fraction: 0.15,
            oracle: OracleConfig { annotate_radius: true, ..OracleConfig::default() },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub oracle: OracleConfig,
    pub limits: EpisodeLimits,
    pub rewards: RewardConfig,
    pub segmenter: SegmenterConfig,
    pub datagen: DatagenConfig,
    /// Blend weight for mask-over-image observations.
    pub overlay_alpha: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            oracle: OracleConfig::default(),
            limits: EpisodeLimits::default(),
            rewards: RewardConfig::default(),
            segmenter: SegmenterConfig::default(),
            datagen: DatagenConfig::default(),
            overlay_alpha: 0.45,
        }
    }
}

impl Config {
    pub fn parse(path: &Path, text: &str) -> Result<Config, ConfigError> {
        serde_json::from_str(text).map_err(|source| ConfigError::Parse { path: path.into(), source })
    }

    pub fn from_file(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Config::parse(path, &text)
    }

    /// SHA-256 of the canonical re-serialization. Two files that parse to the
    /// same effective configuration share a fingerprint regardless of key
    /// order, whitespace, or which defaults they spell out.
    pub fn fingerprint(&self) -> String {
        digest_of(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConfigSource {
    Flag(PathBuf),
    Env(PathBuf),
    Defaults,
}

impl std::fmt::Display for ConfigSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigSource::Flag(p) => write!(f, "--config {}", p.display()),
            ConfigSource::Env(p) => write!(f, "{CONFIG_ENV_VAR}={}", p.display()),
            ConfigSource::Defaults => f.write_str("built-in defaults"),
        }
    }
}

/// Precedence: explicit flag, then CLICKSIM_CONFIG, then defaults.
pub fn load_config(flag: Option<&Path>) -> Result<(Config, ConfigSource), ConfigError> {
    if let Some(path) = flag {
        return Ok((Config::from_file(path)?, ConfigSource::Flag(path.into())));
    }
    if let Some(path) = std::env::var_os(CONFIG_ENV_VAR) {
        let path = PathBuf::from(path);
        return Ok((Config::from_file(&path)?, ConfigSource::Env(path)));
    }
    Ok((Config::default(), ConfigSource::Defaults))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_documented_ones() {
        let cfg = Config::default();
        assert_eq!(cfg.oracle.tau_iou, 0.95);
        assert_eq!(cfg.oracle.max_steps, 20);
        assert!(!cfg.oracle.annotate_radius);
        assert!(cfg.datagen.oracle.annotate_radius);
        assert_eq!(cfg.limits.max_turns, 20);
        assert_eq!(cfg.segmenter.kind, SegmenterKind::Disc);
        assert_eq!(cfg.segmenter.disc_radius, 4.0);
        assert_eq!(cfg.overlay_alpha, 0.45);
        assert_eq!(cfg.datagen.count, 100);
        assert_eq!(cfg.datagen.filter.min_dice, 0.9);
    }

    #[test]
    fn partial_documents_overlay_defaults() {
        let path = Path::new("inline");
        let cfg = Config::parse(path, r#"{"oracle": {"tau_iou": 0.9}}"#).unwrap();
        assert_eq!(cfg.oracle.tau_iou, 0.9);
        assert_eq!(cfg.oracle.max_steps, 20);
        assert_eq!(cfg.rewards.t_opt, 10);
        let nested =
            Config::parse(path, r#"{"datagen": {"shape": {"canvas": 48}}}"#).unwrap();
        assert_eq!(nested.datagen.shape.canvas, 48);
        assert_eq!(nested.datagen.shape.hole_prob, 0.3);
    }

    #[test]
    fn unknown_keys_are_rejected_at_every_level() {
        let path = Path::new("inline");
        assert!(Config::parse(path, r#"{"orcale": {}}"#).is_err());
        assert!(Config::parse(path, r#"{"oracle": {"tau": 1.0}}"#).is_err());
        assert!(Config::parse(path, r#"{"segmenter": {"radius": 3}}"#).is_err());
    }

    #[test]
    fn fingerprint_ignores_formatting_and_key_order() {
        let path = Path::new("inline");
        let a = Config::parse(path, r#"{"oracle": {"tau_iou": 0.9, "max_steps": 20}}"#).unwrap();
        let b = Config::parse(
            path,
            "{\n  \"oracle\": {\"max_steps\": 20,   \"tau_iou\": 0.9}\n}",
        )
        .unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        // Spelling out a default changes nothing either.
        let c = Config::parse(path, r#"{"oracle": {"tau_iou": 0.9}, "overlay_alpha": 0.45}"#)
            .unwrap();
        assert_eq!(a.fingerprint(), c.fingerprint());
        let d = Config::parse(path, r#"{"oracle": {"tau_iou": 0.8}}"#).unwrap();
        assert_ne!(a.fingerprint(), d.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }

    #[test]
    fn flag_beats_env_beats_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let flag_path = dir.path().join("flag.json");
        let env_path = dir.path().join("env.json");
        std::fs::write(&flag_path, r#"{"overlay_alpha": 0.9}"#).unwrap();
        std::fs::write(&env_path, r#"{"overlay_alpha": 0.1}"#).unwrap();
        // Env access is process-global; keep every case in one test.
        std::env::set_var(CONFIG_ENV_VAR, &env_path);
        let (cfg, src) = load_config(Some(&flag_path)).unwrap();
        assert_eq!(cfg.overlay_alpha, 0.9);
        assert_eq!(src, ConfigSource::Flag(flag_path));
        let (cfg, src) = load_config(None).unwrap();
        assert_eq!(cfg.overlay_alpha, 0.1);
        assert!(matches!(src, ConfigSource::Env(_)));
        std::env::remove_var(CONFIG_ENV_VAR);
        let (cfg, src) = load_config(None).unwrap();
        assert_eq!(cfg.overlay_alpha, 0.45);
        assert_eq!(src, ConfigSource::Defaults);
    }

    #[test]
    fn local_segmenters_build_and_remote_defers() {
        let mut sc = SegmenterConfig::default();
        assert_eq!(sc.build_local().unwrap().kind(), "disc");
        sc.kind = SegmenterKind::Seeded;
        assert_eq!(sc.build_local().unwrap().kind(), "seeded");
        sc.kind = SegmenterKind::Remote;
        assert!(matches!(sc.build_local(), Err(ConfigError::NotLocal(_))));
        assert!(matches!(sc.endpoint(), Err(ConfigError::MissingEndpoint(_))));
        sc.endpoint = Some("http://127.0.0.1:9".into());
        assert_eq!(sc.endpoint().unwrap(), "http://127.0.0.1:9");
    }

    #[test]
    fn missing_file_reports_path() {
        let err = Config::from_file(Path::new("/nonexistent/cfg.json")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/cfg.json"));
    }
}
