//! Library side of the `vlp` command: scenario loading with overrides, figure
//! runs, CSV tables, and the validation report.

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod figures;
pub mod report;
pub mod table;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vlp_core::{default_scenario, Error, LoadedScenario, Result, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Crlb,
    Surface,
    Sweep,
    Estimate,
    Figure,
    Validate,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Crlb => "crlb",
            CommandKind::Surface => "surface",
            CommandKind::Sweep => "sweep",
            CommandKind::Estimate => "estimate",
            CommandKind::Figure => "figure",
            CommandKind::Validate => "validate",
        }
    }
}

/// What was run, recorded next to the outputs as `<command>.manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: CommandKind,
    /// `None` means the built-in default scenario.
    pub scenario_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub overrides: BTreeMap<String, String>,
    pub seed: Option<u64>,
}

impl RunManifest {
    pub fn override_pairs(&self) -> Vec<(String, String)> {
        self.overrides.iter().map(|(k, v)| (k.clone(), v.clone())).collect()
    }

    pub fn write(&self) -> Result<PathBuf> {
        ensure_dir(&self.output_dir)?;
        let path = self.output_dir.join(format!("{}.manifest.json", self.command.name()));
        write_json(&path, self)?;
        Ok(path)
    }
}

/// Splits `key=value`.
pub fn parse_override(s: &str) -> std::result::Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(format!("expected key=value, got `{s}`")),
    }
}

/// Reads a scenario document (or the built-in default when `path` is `None`),
/// applies the overrides, and parses it without checking invariants.
pub fn read_scenario(path: Option<&Path>, overrides: &[(String, String)]) -> Result<LoadedScenario> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            Scenario::from_json_str(&text, overrides, p.parent())
        }
        None => Scenario::from_json_str(&default_scenario().to_json_pretty(), overrides, None),
    }
}

/// [`read_scenario`] followed by validation. Unknown fields are logged as warnings.
pub fn load_scenario(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Scenario> {
    let loaded = read_scenario(path, overrides)?;
    for field in &loaded.unknown_fields {
        log::warn!("unknown scenario field `{field}` ignored");
    }
    loaded.scenario.validate()?;
    Ok(loaded.scenario)
}

/// Process exit status for an error: 1 for bad input, 2 for failures while running.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse { .. } | Error::Invalid(_) | Error::Config(_) => 1,
        _ => 2,
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
