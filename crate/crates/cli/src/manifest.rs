//! Run manifests: enough to re-execute a run and to tell two runs apart.

use std::path::{Path, PathBuf};

use oamcavity::SystemConfig;
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    /// Full argument vector, program name first.
    pub argv: Vec<String>,
    pub config_path: Option<PathBuf>,
    /// Resolved configuration, defaults filled in.
    pub config: Option<SystemConfig>,
    pub params_fingerprint: Option<String>,
    pub outputs: Vec<PathBuf>,
    /// Wall-clock time, RFC 3339. The only non-reproducible field; data
    /// files never carry it.
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(
        subcommand: &'static str,
        argv: &[String],
        config_path: Option<&Path>,
        config: Option<SystemConfig>,
        outputs: &[&Path],
    ) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            argv: argv.to_vec(),
            config_path: config_path.map(Path::to_path_buf),
            params_fingerprint: config.as_ref().map(SystemConfig::fingerprint),
            config,
            outputs: outputs.iter().map(|p| p.to_path_buf()).collect(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// `out.csv` → `out.csv.manifest.json`
pub fn manifest_path(primary: &Path) -> PathBuf {
    let mut name = primary.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    primary.with_file_name(name)
}
