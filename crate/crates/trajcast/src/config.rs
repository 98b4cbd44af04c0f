//! Run configuration: one TOML document covering data ingestion, model
//! architecture, training and output placement, with dotted-path overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{SceneClip, SynthConfig, Unit};
use crate::model::ModelConfig;
use crate::train::TrainConfig;

/// Environment variable overriding the default output root directory.
pub const OUT_ROOT_ENV: &str = "TRAJCAST_OUT_ROOT";
pub const DEFAULT_OUT_ROOT: &str = "runs";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    Synth,
    Apolloscape,
    Csv,
    Clips,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub format: DataFormat,
    /// Input file (or directory of per-sequence files) for file formats.
    pub path: Option<String>,
    /// History/future clip lengths; when unset they default per format
    /// (6/6 for the 2 Hz urban layout, 15/25 for 5 Hz highway-style data).
    pub t_history: Option<usize>,
    pub t_future: Option<usize>,
    pub downsample: usize,
    /// Scene window half-width in the dataset's units.
    pub window: f64,
    pub stride: usize,
    pub val_fraction: f64,
    pub frame_rate: Option<f64>,
    pub unit: Option<Unit>,
    /// Abort on the first malformed input line instead of collecting errors.
    pub strict: bool,
    /// Window reference agent id; unset uses the scene centroid.
    pub reference_agent: Option<i64>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            format: DataFormat::Synth,
            path: None,
            t_history: None,
            t_future: None,
            downsample: 1,
            window: 90.0,
            stride: 1,
            val_fraction: 0.2,
            frame_rate: None,
            unit: None,
            strict: false,
            reference_agent: None,
        }
    }
}

impl DataConfig {
    pub fn effective_t_history(&self) -> usize {
        self.t_history.unwrap_or(match self.format {
            DataFormat::Apolloscape | DataFormat::Synth | DataFormat::Clips => 6,
            DataFormat::Csv => 15,
        })
    }

    pub fn effective_t_future(&self) -> usize {
        self.t_future.unwrap_or(match self.format {
            DataFormat::Apolloscape | DataFormat::Synth | DataFormat::Clips => 6,
            DataFormat::Csv => 25,
        })
    }

    pub fn effective_frame_rate(&self) -> f64 {
        self.frame_rate.unwrap_or(match self.format {
            DataFormat::Apolloscape | DataFormat::Synth | DataFormat::Clips => 2.0,
            DataFormat::Csv => 5.0,
        })
    }

    pub fn effective_unit(&self) -> Unit {
        self.unit.unwrap_or(match self.format {
            DataFormat::Apolloscape => Unit::Meters,
            DataFormat::Csv => Unit::Feet,
            DataFormat::Synth | DataFormat::Clips => Unit::Units,
        })
    }
}

/// The whole run configuration. Every field has a default; the defaulted
/// config runs the synthetic smoke pipeline end to end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    /// Output directory; unset places outputs under the output root
    /// (see `TRAJCAST_OUT_ROOT`).
    pub out_dir: Option<String>,
    pub data: DataConfig,
    pub synth: SynthConfig,
    /// Model architecture. `n_max = 0` means "size the agent capacity from
    /// the training data" and is resolved before parameters are built.
    pub model: ModelConfig,
    pub training: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: None,
            data: DataConfig::default(),
            synth: SynthConfig::default(),
            model: ModelConfig {
                n_max: 0,
                ..ModelConfig::default()
            },
            training: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Resolve `n_max = 0` against the clips this run will see.
    pub fn resolve_capacity(&mut self, clips: &[SceneClip]) -> Result<()> {
        if self.model.n_max == 0 {
            let max_agents = clips
                .iter()
                .map(|c| c.num_agents())
                .max()
                .ok_or_else(|| Error::Config("cannot size agent capacity: no clips".into()))?;
            self.model.n_max = max_agents;
        }
        Ok(())
    }

    /// Output directory for a subcommand, honoring (in order) an explicit
    /// `--out`, the config's `out_dir`, and the output root.
    pub fn resolve_out_dir(&self, cli_out: Option<&Path>, command: &str) -> PathBuf {
        if let Some(dir) = cli_out {
            return dir.to_path_buf();
        }
        if let Some(dir) = &self.out_dir {
            return PathBuf::from(dir);
        }
        let root = std::env::var(OUT_ROOT_ENV).unwrap_or_else(|_| DEFAULT_OUT_ROOT.into());
        Path::new(&root).join(command)
    }
}

/// Apply one `key.path=value` override onto a TOML document.
fn apply_one_override(doc: &mut toml::Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not of the form KEY=VALUE")))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() {
        return Err(Error::Config(format!("override {spec:?} has an empty key")));
    }
    // Interpret the value as a TOML literal when possible, else a string.
    let value: toml::Value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(table) => table["v"].clone(),
        Err(_) => toml::Value::String(raw.to_string()),
    };

    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        let table = node.as_table_mut().ok_or_else(|| {
            Error::Config(format!("override key {key:?}: {part:?} is not a table"))
        })?;
        node = table
            .entry(part.to_string())
            .or_insert(toml::Value::Table(toml::Table::new()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| Error::Config(format!("override key {key:?} does not address a table")))?;
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Load a config (or the defaults) and apply `--set KEY=VALUE` overrides.
pub fn load_with_overrides(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let base = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if overrides.is_empty() {
        return Ok(base);
    }
    let text = base.to_toml_string()?;
    let mut doc: toml::Value = text
        .parse()
        .map_err(|e| Error::Config(format!("internal config reserialization: {e}")))?;
    for spec in overrides {
        apply_one_override(&mut doc, spec)?;
    }
    let merged = toml::to_string(&doc).map_err(|e| Error::Config(e.to_string()))?;
    RunConfig::from_toml_str(&merged)
}
