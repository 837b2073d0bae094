use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub parameters: Value,
    pub tool_version: String,
    pub timestamp: String,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(subcommand: &str, parameters: Value) -> Self {
        RunManifest {
            subcommand: subcommand.to_string(),
            parameters,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            outputs: Vec::new(),
        }
    }

    /// Write one `<output>.manifest.json` next to every recorded output.
    pub fn write_all(&self) -> std::io::Result<Vec<PathBuf>> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        let mut written = Vec::new();
        for out in &self.outputs {
            let path = manifest_path(out);
            fs::write(&path, &text)?;
            written.push(path);
        }
        Ok(written)
    }
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}
