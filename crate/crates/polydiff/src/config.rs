//! Layered run configuration: compiled defaults, then an optional JSON
//! file, then `POLYDIFF_*` environment variables, then `--set key=value`
//! overrides, each layer replacing individual keys of the previous one.
//! Unknown keys are rejected wherever they appear.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::diffusion::DiffusionConfig;
use crate::diffusion::TrainConfig;
use crate::error::{Error, Result};
use crate::guidance::GuideConfig;
use crate::rrt::RrtConfig;
use crate::stitching::StitchConfig;
use crate::world::{ExpertConfig, SceneGenConfig};

pub const ENV_PREFIX: &str = "POLYDIFF_";

/// Shape of the polynomial trajectories everything else runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryConfig {
    pub degree: usize,
    pub horizon: usize,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        TrajectoryConfig { degree: 7, horizon: 50 }
    }
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.degree < 1 || self.degree > 15 {
            return Err(Error::InvalidConfig(format!(
                "degree {} outside supported range 1..=15",
                self.degree
            )));
        }
        if self.horizon < self.degree + 1 {
            return Err(Error::InvalidConfig(format!(
                "horizon {} cannot resolve degree {}",
                self.horizon, self.degree
            )));
        }
        Ok(())
    }
}

/// Benchmark-wide options shared by the planning variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchOptions {
    /// Denoising lanes per query.
    pub batch: usize,
    /// Reverse steps whose decoded states feed the stitch pool.
    pub pool_last: usize,
    /// Pool size for the stitching-over-noise baseline.
    pub gs_batch: usize,
    /// Portfolio size for the multi-guide variant.
    pub guides: usize,
    /// Wall-clock limit per query; exceeding it records a timeout failure.
    pub watchdog_secs: u64,
    /// Success requires ending within this distance of the goal.
    pub goal_tolerance: f64,
    /// Sampling planner used as the standalone baseline.
    pub baseline: RrtConfig,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            batch: 32,
            pool_last: 5,
            // Same per-query pool as one denoising batch; the stitched
            // diffusion variants additionally keep the last pool_last
            // steps, which is their advertised edge.
            gs_batch: 32,
            guides: 4,
            watchdog_secs: 60,
            goal_tolerance: 0.05,
            baseline: RrtConfig { step: 0.08, max_nodes: 4000, resolution: 0.025 },
        }
    }
}

impl BenchOptions {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.pool_last == 0 || self.gs_batch == 0 || self.guides == 0 {
            return Err(Error::InvalidConfig("bench batch sizes must be at least 1".into()));
        }
        if self.watchdog_secs == 0 {
            return Err(Error::InvalidConfig("watchdog must be at least 1 second".into()));
        }
        if !(self.goal_tolerance > 0.0) {
            return Err(Error::InvalidConfig("goal tolerance must be positive".into()));
        }
        self.baseline.validate()
    }
}

/// The full run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub trajectory: TrajectoryConfig,
    pub scene: SceneGenConfig,
    pub expert: ExpertConfig,
    pub diffusion: DiffusionConfig,
    pub train: TrainConfig,
    pub guide: GuideConfig,
    pub stitch: StitchConfig,
    pub bench: BenchOptions,
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.trajectory.validate()?;
        self.scene.validate()?;
        self.expert.validate()?;
        self.diffusion.mlp.validate()?;
        if self.diffusion.timesteps < 2 {
            return Err(Error::InvalidConfig("timesteps must be at least 2".into()));
        }
        self.train.validate()?;
        self.guide.validate()?;
        self.stitch.validate()?;
        self.bench.validate()
    }
}

/// Replaces keys of `base` with keys of `layer`, recursing into objects.
fn merge(base: &mut Value, layer: Value) {
    match (base, layer) {
        (Value::Object(b), Value::Object(l)) => {
            for (k, v) in l {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses an override value: JSON if it parses, bare string otherwise.
fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn set_path(root: &mut Value, path: &[String], value: Value, origin: &str) -> Result<()> {
    let mut slot = root;
    for key in &path[..path.len() - 1] {
        slot = slot
            .as_object_mut()
            .ok_or_else(|| {
                Error::InvalidConfig(format!("{origin}: {key} does not name a config section"))
            })?
            .entry(key.clone())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = slot.as_object_mut().ok_or_else(|| {
        Error::InvalidConfig(format!("{origin}: cannot set a key inside a scalar value"))
    })?;
    obj.insert(path.last().unwrap().clone(), value);
    Ok(())
}

/// Applies `PREFIX_SECTION__KEY=value` pairs. Double underscores separate
/// path components; single underscores stay part of the key.
fn apply_env<I: IntoIterator<Item = (String, String)>>(root: &mut Value, vars: I) -> Result<()> {
    let mut entries: Vec<(String, String)> = vars
        .into_iter()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX))
        .collect();
    entries.sort();
    for (key, raw) in entries {
        let path: Vec<String> = key[ENV_PREFIX.len()..]
            .split("__")
            .map(|s| s.to_lowercase())
            .collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(Error::InvalidConfig(format!("malformed environment override {key}")));
        }
        set_path(root, &path, parse_value(&raw), &key)?;
    }
    Ok(())
}

/// Applies `key.path=value` overrides.
fn apply_sets(root: &mut Value, sets: &[String]) -> Result<()> {
    for s in sets {
        let (key, raw) = s.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("override '{s}' is not of the form key=value"))
        })?;
        let path: Vec<String> = key.split('.').map(|p| p.to_string()).collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(Error::InvalidConfig(format!("override '{s}' has an empty path segment")));
        }
        set_path(root, &path, parse_value(raw), s)?;
    }
    Ok(())
}

fn finish(value: Value) -> Result<Config> {
    let cfg: Config =
        serde_json::from_value(value).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Loads configuration from an explicit set of layers. Used directly by
/// tests; `load` wires in the process environment.
pub fn load_with_env<I: IntoIterator<Item = (String, String)>>(
    file: Option<&Path>,
    env: I,
    sets: &[String],
) -> Result<Config> {
    let mut value = serde_json::to_value(Config::default())
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let layer: Value = serde_json::from_str(&text)
            .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
        if !layer.is_object() {
            return Err(Error::format(
                path.display().to_string(),
                "config file must be a JSON object",
            ));
        }
        merge(&mut value, layer);
    }
    apply_env(&mut value, env)?;
    apply_sets(&mut value, sets)?;
    finish(value)
}

/// Loads configuration with the process environment as the env layer.
pub fn load(file: Option<&Path>, sets: &[String]) -> Result<Config> {
    load_with_env(file, std::env::vars(), sets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guidance::ScheduleSpec;

    fn no_env() -> Vec<(String, String)> {
        Vec::new()
    }

    #[test]
    fn defaults_load_and_validate() {
        let cfg = load_with_env(None, no_env(), &[]).unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!(cfg.trajectory.degree, 7);
        assert_eq!(cfg.trajectory.horizon, 50);
        assert_eq!(cfg.diffusion.timesteps, 64);
        assert_eq!(cfg.bench.batch, 32);
    }

    #[test]
    fn file_layer_overrides_single_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"train": {"epochs": 7}, "trajectory": {"degree": 5}}"#).unwrap();
        let cfg = load_with_env(Some(&path), no_env(), &[]).unwrap();
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.trajectory.degree, 5);
        // Untouched siblings keep their defaults.
        assert_eq!(cfg.train.batch, TrainConfig::default().batch);
        assert_eq!(cfg.trajectory.horizon, 50);
    }

    #[test]
    fn unknown_keys_are_rejected_at_any_depth() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"train": {"epocsh": 7}}"#).unwrap();
        let err = load_with_env(Some(&path), no_env(), &[]).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)), "got {err:?}");
        std::fs::write(&path, r#"{"nonsense": 1}"#).unwrap();
        assert!(load_with_env(Some(&path), no_env(), &[]).is_err());
    }

    #[test]
    fn env_layer_overrides_file_layer() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"train": {"epochs": 7}}"#).unwrap();
        let env = vec![
            ("POLYDIFF_TRAIN__EPOCHS".to_string(), "11".to_string()),
            ("POLYDIFF_BENCH__GOAL_TOLERANCE".to_string(), "0.1".to_string()),
            ("UNRELATED".to_string(), "x".to_string()),
        ];
        let cfg = load_with_env(Some(&path), env, &[]).unwrap();
        assert_eq!(cfg.train.epochs, 11);
        assert_eq!(cfg.bench.goal_tolerance, 0.1);
    }

    #[test]
    fn set_overrides_win_over_everything() {
        let env = vec![("POLYDIFF_TRAIN__EPOCHS".to_string(), "11".to_string())];
        let sets = vec![
            "train.epochs=3".to_string(),
            "scene.difficulty_note".to_string(), // malformed, checked below
        ];
        assert!(load_with_env(None, env.clone(), &sets).is_err());
        let sets = vec!["train.epochs=3".to_string(), "guide.lambda={\"constant\":0.2}".to_string()];
        let cfg = load_with_env(None, env, &sets).unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.guide.lambda, ScheduleSpec::Constant(0.2));
    }

    #[test]
    fn string_values_pass_through_unquoted() {
        let sets = vec!["diffusion.schedule=linear".to_string()];
        let cfg = load_with_env(None, no_env(), &sets).unwrap();
        assert_eq!(cfg.diffusion.schedule, crate::diffusion::ScheduleKind::Linear);
    }

    #[test]
    fn validation_runs_after_layering() {
        let sets = vec!["trajectory.degree=0".to_string()];
        assert!(load_with_env(None, no_env(), &sets).is_err());
        let sets = vec!["trajectory.horizon=4".to_string()];
        // degree 7 needs at least 8 waypoints
        assert!(load_with_env(None, no_env(), &sets).is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = Config::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: Config = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
