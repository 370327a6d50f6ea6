//! Output directory, manifest and the on-disk artifact formats.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use retire_core::simulator::{Panel, ScenarioSpec, SolutionKind};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{sha256_hex, RunConfig};
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const RESOLVED_CONFIG: &str = "config.resolved.conf";
const SOLUTION_FORMAT: &str = "retire-solution v1";

/// Reproducibility record kept next to the outputs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    /// File name to sha256 of its contents.
    pub artifacts: BTreeMap<String, String>,
    /// Subcommand to wall-clock seconds.
    pub timings: BTreeMap<String, f64>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::io(path, e))
    }
}

/// The output directory of one run.
pub struct OutDir {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl OutDir {
    /// Creates the directory and picks up an existing manifest.
    pub fn open(cfg: &RunConfig) -> Result<OutDir, CliError> {
        let dir = cfg.output_dir.clone();
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let path = dir.join(MANIFEST);
        let mut manifest = if path.exists() {
            Manifest::load(&path)?
        } else {
            Manifest::default()
        };
        manifest.tool = env!("CARGO_PKG_NAME").into();
        manifest.version = env!("CARGO_PKG_VERSION").into();
        manifest.config_hash = cfg.config_hash();
        manifest.seed = cfg.scenario.seed;
        let mut out = OutDir { dir, manifest };
        out.write(RESOLVED_CONFIG, cfg.dump_portable().as_bytes())?;
        Ok(out)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.manifest.artifacts.insert(name.into(), sha256_hex(bytes));
        Ok(())
    }

    pub fn record_time(&mut self, step: &str, secs: f64) {
        self.manifest.timings.insert(step.into(), secs);
    }

    pub fn save(&self) -> Result<(), CliError> {
        let path = self.path(MANIFEST);
        let text = serde_json::to_string_pretty(&self.manifest).map_err(|e| CliError::io(&path, e))?;
        fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
    }
}

pub fn solution_file(kind: SolutionKind) -> String {
    format!("solution_{kind}.bin")
}

pub fn panel_file(kind: SolutionKind) -> String {
    format!("panel_{kind}.csv")
}

#[derive(Serialize, Deserialize)]
struct SolutionFile<T> {
    format: String,
    kind: SolutionKind,
    model_hash: String,
    solution: T,
}

pub fn encode_solution<T: Serialize>(kind: SolutionKind, model_hash: &str, solution: &T) -> Result<Vec<u8>, CliError> {
    bincode::serialize(&SolutionFile {
        format: SOLUTION_FORMAT.into(),
        kind,
        model_hash: model_hash.into(),
        solution,
    })
    .map_err(|e| CliError::Numeric(format!("cannot serialize solution: {e}")))
}

/// Loads a solution, refusing files solved under a different model config.
pub fn load_solution<T: DeserializeOwned>(path: &Path, kind: SolutionKind, model_hash: &str) -> Result<T, CliError> {
    if !path.exists() {
        return Err(CliError::missing(path));
    }
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let file: SolutionFile<T> = bincode::deserialize(&bytes).map_err(|_| CliError::Artifact {
        path: path.display().to_string(),
        message: "unreadable solution file".into(),
    })?;
    if file.format != SOLUTION_FORMAT || file.kind != kind {
        return Err(CliError::Artifact {
            path: path.display().to_string(),
            message: format!("not a {kind} solution file"),
        });
    }
    if file.model_hash != model_hash {
        return Err(CliError::stale(path, "solution"));
    }
    Ok(file.solution)
}

const PANEL_CONFIG_PREFIX: &str = "# config ";

/// Panel CSV with the panel hash on the line after the version line.
pub fn encode_panel(panel: &Panel, panel_hash: &str) -> String {
    let csv = panel.to_csv();
    let (version, rest) = csv.split_once('\n').unwrap_or((&csv, ""));
    format!("{version}\n{PANEL_CONFIG_PREFIX}{panel_hash}\n{rest}")
}

pub fn load_panel(path: &Path, scenario: ScenarioSpec, panel_hash: &str) -> Result<Panel, CliError> {
    if !path.exists() {
        return Err(CliError::missing(path));
    }
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let stamped = text
        .lines()
        .nth(1)
        .and_then(|l| l.strip_prefix(PANEL_CONFIG_PREFIX));
    if stamped != Some(panel_hash) {
        return Err(CliError::stale(path, "panel"));
    }
    Panel::from_csv(&text, scenario).map_err(|e| CliError::Artifact {
        path: path.display().to_string(),
        message: format!("unreadable panel ({e})"),
    })
}
