//! Sweep manifest: the list of trace files with their acquisition
//! conditions, plus the input line and material description.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cpw::CpwGeometry;
use crate::loss::QpParams;
use crate::resonator::AttenuationChain;

/// Which derived curve a trace contributes to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Power,
    Temperature,
    Field,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative paths are resolved against the manifest's directory.
    pub path: String,
    pub vna_power_dbm: f64,
    pub temperature_k: f64,
    pub field_mt: f64,
    /// Entries without a tag only enter the photon-number curve.
    #[serde(default)]
    pub sweep: Option<SweepKind>,
    /// Defaults to the file stem.
    #[serde(default)]
    pub label: Option<String>,
}

impl ManifestEntry {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| {
            Path::new(&self.path)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| self.path.clone())
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub entries: Vec<ManifestEntry>,
    #[serde(default)]
    pub chain: AttenuationChain,
    #[serde(default)]
    pub material: Option<QpParams>,
    #[serde(default)]
    pub geometry: Option<CpwGeometry>,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid manifest: {0}")]
    Invalid(String),
}

impl SweepManifest {
    pub fn from_json(bytes: &[u8]) -> Result<Self, ManifestError> {
        let m: Self = serde_json::from_slice(bytes)?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        if self.entries.is_empty() {
            return Err(ManifestError::Invalid("no entries".into()));
        }
        let mut seen = BTreeSet::new();
        for (i, e) in self.entries.iter().enumerate() {
            if !seen.insert(e.path.as_str()) {
                return Err(ManifestError::Invalid(format!(
                    "entry {i}: duplicate path {:?}",
                    e.path
                )));
            }
            if ![e.vna_power_dbm, e.temperature_k, e.field_mt]
                .iter()
                .all(|v| v.is_finite())
            {
                return Err(ManifestError::Invalid(format!("entry {i}: non-finite condition")));
            }
            if e.temperature_k <= 0.0 {
                return Err(ManifestError::Invalid(format!(
                    "entry {i}: temperature must be positive"
                )));
            }
        }
        AttenuationChain::new(self.chain.stages.clone()).map_err(|e| ManifestError::Invalid(e.to_string()))?;
        if let Some(m) = &self.material {
            QpParams::new(m.t_c, m.gap_joules, m.alpha_kinetic).map_err(|e| ManifestError::Invalid(e.to_string()))?;
        }
        if let Some(g) = &self.geometry {
            g.validate().map_err(|e| ManifestError::Invalid(e.to_string()))?;
        }
        Ok(())
    }
}
