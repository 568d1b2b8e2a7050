//! Campaign manifest: where the recorded streams of every session live and
//! which session is the thermal reference.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decomposition::SessionSignals;
use crate::error::{Error, Result};
use crate::kinematics::MachineGeometry;
use crate::signal_io::{self, CsvSchema, SensorCalibration};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Paths are relative to the directory holding the manifest unless
/// absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignManifest {
    pub reference: String,
    #[serde(default)]
    pub geometry: Option<PathBuf>,
    #[serde(default)]
    pub calibration: Option<PathBuf>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    pub sessions: Vec<ManifestSession>,
    #[serde(skip)]
    base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestSession {
    pub id: String,
    pub feed_rate_mm_min: f64,
    pub controller: PathBuf,
    pub encoder: PathBuf,
    pub sensor: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
}

fn default_output() -> PathBuf {
    PathBuf::from("decomposition")
}

impl CampaignManifest {
    pub fn new(reference: impl Into<String>, sessions: Vec<ManifestSession>, base_dir: impl Into<PathBuf>) -> Self {
        Self {
            reference: reference.into(),
            geometry: None,
            calibration: None,
            output: default_output(),
            sessions,
            base_dir: base_dir.into(),
        }
    }

    pub fn from_json_str(s: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut m: Self = serde_json::from_str(s)?;
        m.base_dir = base_dir.into();
        m.validate()?;
        Ok(m)
    }

    /// Reads a manifest file, or `manifest.json` inside a directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut path = path.as_ref().to_path_buf();
        if path.is_dir() {
            path = path.join(MANIFEST_FILE);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json_str(&text, base)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.sessions.is_empty() {
            return Err(Error::invalid("manifest lists no session"));
        }
        for (k, s) in self.sessions.iter().enumerate() {
            if s.id.is_empty() || s.id.contains(['/', '\\']) {
                return Err(Error::invalid(format!("session {k}: id `{}` is not a valid name", s.id)));
            }
            if self.sessions[..k].iter().any(|o| o.id == s.id) {
                return Err(Error::invalid(format!("duplicate session id `{}`", s.id)));
            }
            if !(s.feed_rate_mm_min.is_finite() && s.feed_rate_mm_min > 0.0) {
                return Err(Error::invalid(format!("session `{}`: feed rate must be positive", s.id)));
            }
        }
        if self.session(&self.reference).is_none() {
            return Err(Error::invalid(format!(
                "reference session `{}` is not listed in the manifest",
                self.reference
            )));
        }
        Ok(())
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn session(&self, id: &str) -> Option<&ManifestSession> {
        self.sessions.iter().find(|s| s.id == id)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output)
    }

    pub fn geometry(&self) -> Result<MachineGeometry> {
        match &self.geometry {
            Some(p) => MachineGeometry::load(self.resolve(p)),
            None => Ok(MachineGeometry::default()),
        }
    }

    pub fn calibration(&self) -> Result<SensorCalibration> {
        match &self.calibration {
            Some(p) => SensorCalibration::load(self.resolve(p)),
            None => Ok(SensorCalibration::default()),
        }
    }

    /// Loads the three streams of a session. Errors name the session.
    pub fn load_session(&self, id: &str) -> Result<SessionSignals> {
        let s = self
            .session(id)
            .ok_or_else(|| Error::invalid(format!("no session `{id}` in the manifest")))?;
        let load = |p: &Path, schema| signal_io::load_signals(self.resolve(p), schema);
        let signals = (|| {
            Ok(SessionSignals {
                id: s.id.clone(),
                feed_rate: s.feed_rate_mm_min,
                controller: load(&s.controller, CsvSchema::Joints)?,
                encoder: load(&s.encoder, CsvSchema::Joints)?,
                sensor: load(&s.sensor, CsvSchema::Sensor)?,
            })
        })();
        signals.map_err(|e: Error| e.in_session(id))
    }
}
