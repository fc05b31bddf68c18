//! Run configuration files for the command-line workflow: a JSON document
//! holding the model config plus environment, dataset path, seeds, budgets,
//! and output directory. Unknown keys are rejected and validation errors
//! name the offending key. `--set key=value` overrides use dotted paths
//! (`model.alpha=1.0`).

use crate::config::PtConfig;
use crate::envs::{DenseChain, Environment, MazeLayout, MazeWorld};
use crate::tensor::Float;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunConfigError {
    #[error("cannot read config {path}: {err}")]
    Io { path: PathBuf, err: std::io::Error },
    #[error("config: {0}")]
    Parse(String),
    #[error("config override `{key}`: {msg}")]
    Override { key: String, msg: String },
    #[error("unknown environment `{0}` (expected maze-umaze, maze-medium, maze-large, dense-chain)")]
    UnknownEnv(String),
    #[error("layout: {0}")]
    Layout(#[from] crate::envs::maze::LayoutError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// maze-umaze | maze-medium | maze-large | dense-chain.
    pub env: String,
    pub dataset: PathBuf,
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub n_rollouts: usize,
    pub n_updates: usize,
    pub batch_size: usize,
    pub learning_rate: Float,
    /// Optional ASCII grid file overriding the built-in maze layout.
    #[serde(default)]
    pub layout_file: Option<PathBuf>,
    pub model: PtConfig,
}

impl RunConfig {
    pub fn from_file<P: AsRef<Path>>(path: P) -> Result<Self, RunConfigError> {
        Self::from_file_with_overrides(path, &[])
    }

    /// Loads, applies `--set` overrides, and validates. Unknown keys are
    /// rejected by name, both in the file and among the overrides.
    pub fn from_file_with_overrides<P: AsRef<Path>>(
        path: P,
        overrides: &[(String, String)],
    ) -> Result<Self, RunConfigError> {
        let text = std::fs::read_to_string(&path).map_err(|err| RunConfigError::Io {
            path: path.as_ref().to_path_buf(),
            err,
        })?;
        let mut value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| RunConfigError::Parse(e.to_string()))?;
        apply_overrides(&mut value, overrides)?;
        let run: RunConfig =
            serde_json::from_value(value).map_err(|e| RunConfigError::Parse(e.to_string()))?;
        run.model
            .validate()
            .map_err(|e| RunConfigError::Parse(e.to_string()))?;
        Ok(run)
    }

    pub fn maze_layout(&self) -> Result<Option<MazeLayout>, RunConfigError> {
        if let Some(path) = &self.layout_file {
            return Ok(Some(MazeLayout::load(path)?));
        }
        match self.env.as_str() {
            "maze-umaze" => Ok(Some(MazeLayout::builtin("umaze").unwrap())),
            "maze-medium" => Ok(Some(MazeLayout::builtin("medium").unwrap())),
            "maze-large" => Ok(Some(MazeLayout::builtin("large").unwrap())),
            "dense-chain" => Ok(None),
            other => Err(RunConfigError::UnknownEnv(other.to_string())),
        }
    }

    /// Fresh environment instance per call.
    pub fn make_env(&self) -> Result<Box<dyn Environment>, RunConfigError> {
        match self.maze_layout()? {
            Some(layout) => Ok(Box::new(MazeWorld::eval(layout))),
            None => Ok(Box::new(DenseChain::new())),
        }
    }
}

/// Sets dotted-path overrides into a JSON document. Values parse as JSON
/// when possible (numbers, booleans, arrays) and fall back to strings.
pub fn apply_overrides(
    value: &mut serde_json::Value,
    overrides: &[(String, String)],
) -> Result<(), RunConfigError> {
    for (key, raw) in overrides {
        let parsed: serde_json::Value = serde_json::from_str(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.clone()));
        let (parent, leaf) = match key.rsplit_once('.') {
            Some((p, l)) => (Some(p), l),
            None => (None, key.as_str()),
        };
        let target = match parent {
            None => &mut *value,
            Some(p) => {
                let pointer = format!("/{}", p.replace('.', "/"));
                value
                    .pointer_mut(&pointer)
                    .ok_or_else(|| RunConfigError::Override {
                        key: key.clone(),
                        msg: format!("no such section `{p}`"),
                    })?
            }
        };
        let obj = target
            .as_object_mut()
            .ok_or_else(|| RunConfigError::Override {
                key: key.clone(),
                msg: "target is not an object".into(),
            })?;
        obj.insert(leaf.to_string(), parsed);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_config(dir: &Path) -> PathBuf {
        let path = dir.join("run.json");
        let cfg = RunConfig {
            env: "maze-umaze".into(),
            dataset: dir.join("d.jsonl"),
            out_dir: dir.join("out"),
            seeds: vec![0, 1, 2],
            n_rollouts: 10,
            n_updates: 100,
            batch_size: 8,
            learning_rate: 1e-3,
            layout_file: None,
            model: PtConfig::default(),
        };
        std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
        path
    }

    #[test]
    fn round_trips_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(dir.path());
        let run = RunConfig::from_file(&path).unwrap();
        assert_eq!(run.env, "maze-umaze");
        assert_eq!(run.model.n_plan_tokens, 10);
    }

    #[test]
    fn set_overrides_reach_nested_model_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(dir.path());
        let run = RunConfig::from_file_with_overrides(
            &path,
            &[
                ("model.alpha".into(), "1.0".into()),
                ("model.beta".into(), "0.0".into()),
                ("model.n_plan_tokens".into(), "0".into()),
                ("n_updates".into(), "5".into()),
            ],
        )
        .unwrap();
        assert_eq!(run.model.alpha, 1.0);
        assert_eq!(run.model.beta, 0.0);
        assert_eq!(run.model.n_plan_tokens, 0);
        assert_eq!(run.n_updates, 5);
    }

    #[test]
    fn unknown_key_is_rejected_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(dir.path());
        let err = RunConfig::from_file_with_overrides(&path, &[("bogus".into(), "1".into())])
            .unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn invalid_model_setting_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(dir.path());
        let err = RunConfig::from_file_with_overrides(
            &path,
            &[("model.n_heads".into(), "3".into())],
        )
        .unwrap_err();
        assert!(err.to_string().contains("n_heads"), "{err}");
    }
}
