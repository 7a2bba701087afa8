//! Run-configuration document: JSON schema, flag overrides and resolution
//! against a parsed network.

use crate::fields::InitialCondition;
use crate::network::NetworkSpec;
use crate::simulator::{SimConfig, Toggles};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("configuration syntax error: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("n_cells has no entry for arc '{0}' and no \"default\"")]
    MissingCells(String),
    #[error("initial has no entry for arc '{0}' and no \"default\"")]
    MissingInitial(String),
    #[error("'{key}' in {section} does not name an arc of the network")]
    UnknownArc { section: &'static str, key: String },
    #[error("n_cells entry for '{0}' must be a positive integer")]
    BadCellCount(String),
}

/// Key used in `n_cells` and `initial` maps for unlisted arcs.
pub const DEFAULT_KEY: &str = "default";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum IcDocument {
    Constant { u: f64, v: f64, phi: f64 },
    Gaussian { amplitude: f64, center: f64, width: f64 },
    Steady { u: f64 },
    CustomTable { u: Vec<f64>, v: Vec<f64>, phi: Vec<f64> },
}

impl From<&IcDocument> for InitialCondition {
    fn from(doc: &IcDocument) -> Self {
        match doc {
            IcDocument::Constant { u, v, phi } => {
                InitialCondition::Constant { u: *u, v: *v, phi: *phi }
            }
            IcDocument::Gaussian { amplitude, center, width } => InitialCondition::Gaussian {
                amplitude: *amplitude,
                center: *center,
                width: *width,
            },
            IcDocument::Steady { u } => InitialCondition::Steady { u: *u },
            IcDocument::CustomTable { u, v, phi } => InitialCondition::CustomTable {
                u: u.clone(),
                v: v.clone(),
                phi: phi.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TogglesDocument {
    #[serde(default = "default_true")]
    pub chemotaxis_source: bool,
    #[serde(default = "default_true")]
    pub damping: bool,
    #[serde(default = "default_true")]
    pub production: bool,
}

fn default_true() -> bool {
    true
}

fn default_cfl() -> f64 {
    0.9
}

fn default_output_every() -> usize {
    1
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsDocument {
    #[serde(default)]
    pub csv: Option<String>,
    #[serde(default)]
    pub snapshots: Option<String>,
}

/// Top-level run-configuration document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunDocument {
    /// Path of the network-description document, relative to this file.
    pub network: String,
    pub t_final: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    /// Cells per arc; arc id or "default" keys.
    pub n_cells: BTreeMap<String, i64>,
    #[serde(default = "default_output_every")]
    pub output_every: usize,
    #[serde(default)]
    pub toggles: TogglesDocument,
    #[serde(default = "default_true")]
    pub compat_check: bool,
    /// Initial condition per arc; arc id or "default" keys.
    pub initial: BTreeMap<String, IcDocument>,
    #[serde(default)]
    pub outputs: OutputsDocument,
}

impl Default for TogglesDocument {
    fn default() -> Self {
        Self { chemotaxis_source: true, damping: true, production: true }
    }
}

/// Parse a run-configuration document (no network resolution).
pub fn parse_run_document(text: &str) -> Result<RunDocument, ConfigError> {
    Ok(serde_json::from_str(text)?)
}

fn check_known_arcs<'a>(
    spec: &NetworkSpec,
    keys: impl Iterator<Item = &'a String>,
    section: &'static str,
) -> Result<(), ConfigError> {
    for key in keys {
        if key != DEFAULT_KEY && spec.arc_by_name(key).is_none() {
            return Err(ConfigError::UnknownArc { section, key: key.clone() });
        }
    }
    Ok(())
}

impl RunDocument {
    /// Resolve per-arc cell counts against the network.
    pub fn resolve_cells(&self, spec: &NetworkSpec) -> Result<Vec<usize>, ConfigError> {
        check_known_arcs(spec, self.n_cells.keys(), "n_cells")?;
        spec.arcs()
            .iter()
            .map(|arc| {
                let raw = self
                    .n_cells
                    .get(&arc.id)
                    .or_else(|| self.n_cells.get(DEFAULT_KEY))
                    .ok_or_else(|| ConfigError::MissingCells(arc.id.clone()))?;
                usize::try_from(*raw)
                    .ok()
                    .filter(|&n| n > 0)
                    .ok_or_else(|| ConfigError::BadCellCount(arc.id.clone()))
            })
            .collect()
    }

    /// Resolve per-arc initial conditions against the network.
    pub fn resolve_initial(&self, spec: &NetworkSpec) -> Result<Vec<InitialCondition>, ConfigError> {
        check_known_arcs(spec, self.initial.keys(), "initial")?;
        spec.arcs()
            .iter()
            .map(|arc| {
                self.initial
                    .get(&arc.id)
                    .or_else(|| self.initial.get(DEFAULT_KEY))
                    .map(InitialCondition::from)
                    .ok_or_else(|| ConfigError::MissingInitial(arc.id.clone()))
            })
            .collect()
    }

    /// Build the simulator configuration.
    pub fn to_sim_config(&self, spec: &NetworkSpec) -> Result<SimConfig, ConfigError> {
        Ok(SimConfig {
            t_final: self.t_final,
            cfl: self.cfl,
            n_cells: self.resolve_cells(spec)?,
            output_every: self.output_every,
            toggles: Toggles {
                chemotaxis_source: self.toggles.chemotaxis_source,
                damping: self.toggles.damping,
                production: self.toggles.production,
            },
            compat_check: self.compat_check,
        })
    }
}
