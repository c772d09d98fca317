use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::agent::{Architecture, HeadToggles};
use crate::algo::{Features, HyperParams};
use crate::envs::{make_env, EnvSpec};
use crate::{Error, Result};

/// An environment id and its constant overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub id: String,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub params: Value,
}

impl EnvConfig {
    pub fn new(id: &str) -> Self {
        Self {
            id: id.to_string(),
            params: Value::Null,
        }
    }

    pub fn spec(&self) -> Result<EnvSpec> {
        Ok(make_env(&self.id, &self.params)?.spec())
    }
}

/// Everything that determines a run apart from its seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    /// Second task of the transfer protocol.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer_env: Option<EnvConfig>,
    pub hyper: HyperParams,
    pub heads: HeadToggles,
    pub seeds: Vec<u64>,
    /// Defaults to half of `hyper.total_steps`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_step: Option<u64>,
    pub out_dir: PathBuf,
    pub architecture: Architecture,
    #[serde(default)]
    pub features: Features,
    pub hidden_sizes: Vec<usize>,
    /// Write a checkpoint every this many updates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<u64>,
}

pub const PROFILES: [&str; 2] = ["control", "shared"];

impl ExperimentConfig {
    /// `control`: separate networks on `point_mass_2d`.
    /// `shared`: shared trunk, four actors, `grid_rooms_a` then `grid_rooms_b`.
    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "control" => Ok(Self {
                env: EnvConfig::new("point_mass_2d"),
                transfer_env: None,
                hyper: HyperParams::control(),
                heads: HeadToggles::ALL,
                seeds: vec![0, 1, 2, 3, 4],
                switch_step: None,
                out_dir: PathBuf::from("runs/control"),
                architecture: Architecture::Separate,
                features: Features::default(),
                hidden_sizes: vec![64, 64],
                checkpoint_every: None,
            }),
            "shared" => Ok(Self {
                env: EnvConfig::new("grid_rooms_a"),
                transfer_env: Some(EnvConfig::new("grid_rooms_b")),
                hyper: HyperParams::shared(),
                heads: HeadToggles::ALL,
                seeds: vec![0, 1, 2, 3],
                switch_step: None,
                out_dir: PathBuf::from("runs/shared"),
                architecture: Architecture::SharedTrunk,
                features: Features::default(),
                hidden_sizes: vec![64, 64],
                checkpoint_every: None,
            }),
            other => Err(Error::Config(format!(
                "unknown profile `{other}`, expected one of {PROFILES:?}"
            ))),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Applies `key.path=value` overrides; the value is parsed as JSON and
    /// falls back to a plain string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut v = serde_json::to_value(self)?;
        for o in overrides {
            apply_override(&mut v, o.as_ref())?;
        }
        let cfg: Self = serde_json::from_value(v).map_err(|e| Error::Config(format!("after overrides: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Step at which the transfer swaps tasks, rounded up to an update
    /// boundary.
    pub fn effective_switch_step(&self) -> u64 {
        let raw = self.switch_step.unwrap_or(self.hyper.total_steps / 2);
        let b = self.hyper.batch_size() as u64;
        raw.div_ceil(b) * b
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        self.features.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return Err(Error::Config("hidden_sizes must be non-empty and positive".into()));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::Config("checkpoint_every must be positive".into()));
        }
        self.env.spec()?;
        if let Some(t) = &self.transfer_env {
            t.spec()?;
            let s = self.switch_step.unwrap_or(self.hyper.total_steps / 2);
            if s >= self.hyper.total_steps {
                return Err(Error::Config(format!(
                    "switch_step {s} must be below total_steps {}",
                    self.hyper.total_steps
                )));
            }
        }
        Ok(())
    }
}

fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{part}` is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    Err(Error::Config(format!("override `{spec}` has an empty key")))
}
