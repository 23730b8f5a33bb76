//! The run manifest: a JSON echo of the configuration plus run status.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use codev_core::agent::CuriosityIndex;
use codev_core::harness::{CuriosityPreset, NetworkPreset, RunConfig};
use codev_core::language::ScaleConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub curiosity: String,
    pub eta: [f64; 4],
    pub scale: String,
    pub network: String,
    pub seed: u64,
    pub epochs: usize,
    pub eval_every: usize,
    pub rolling_window: usize,
    pub episodes_per_sentence: usize,
    pub fm_lr: f64,
    pub agent_lr: f64,
    pub curiosity_index: String,
}

impl ConfigEcho {
    pub fn of(c: &RunConfig) -> Self {
        Self {
            curiosity: c.curiosity.name().into(),
            eta: c.curiosity.eta(),
            scale: c.scale.name(),
            network: c.network.name().into(),
            seed: c.seed,
            epochs: c.epochs,
            eval_every: c.eval_every,
            rolling_window: c.rolling_window,
            episodes_per_sentence: c.episodes_per_sentence,
            fm_lr: c.fm_lr,
            agent_lr: c.agent_lr,
            curiosity_index: index_name(c.curiosity_index).into(),
        }
    }

    pub fn config(&self) -> Result<RunConfig> {
        let mut c = RunConfig::new(CuriosityPreset::parse(&self.curiosity)?, ScaleConfig::parse(&self.scale)?, self.seed);
        c.network = NetworkPreset::parse(&self.network)?;
        c.epochs = self.epochs;
        c.eval_every = self.eval_every;
        c.rolling_window = self.rolling_window;
        c.episodes_per_sentence = self.episodes_per_sentence;
        c.fm_lr = self.fm_lr;
        c.agent_lr = self.agent_lr;
        c.curiosity_index = parse_index(&self.curiosity_index)?;
        c.validate()?;
        Ok(c)
    }
}

pub fn index_name(i: CuriosityIndex) -> &'static str {
    match i {
        CuriosityIndex::Current => "current",
        CuriosityIndex::Next => "next",
    }
}

pub fn parse_index(s: &str) -> Result<CuriosityIndex> {
    match s {
        "current" => Ok(CuriosityIndex::Current),
        "next" => Ok(CuriosityIndex::Next),
        other => bail!("unknown curiosity index `{other}` (expected current or next)"),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    Complete,
    Aborted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub codev_version: String,
    pub config: ConfigEcho,
    pub status: Status,
    pub error: Option<String>,
    pub epochs_completed: usize,
    pub started_unix: f64,
    pub wall_seconds: f64,
    pub files: Vec<String>,
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

impl Manifest {
    pub fn new(config: &RunConfig) -> Self {
        Self {
            format: 1,
            codev_version: env!("CARGO_PKG_VERSION").into(),
            config: ConfigEcho::of(config),
            status: Status::Running,
            error: None,
            epochs_completed: 0,
            started_unix: unix_now(),
            wall_seconds: 0.0,
            files: Vec::new(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}
