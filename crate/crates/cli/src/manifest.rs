use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::Failure;

/// Provenance record written next to every run's outputs. It holds no
/// clock readings, so identical runs produce identical manifests.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: &'static str,
    pub version: &'static str,
    pub config: Value,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_hash: Option<String>,
}

impl Manifest {
    pub fn new(command: &'static str, config: impl Serialize) -> Result<Self, Failure> {
        Ok(Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config: serde_json::to_value(config)?,
            outputs: Vec::new(),
            data_hash: None,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<(), Failure> {
        write_text(dir, "manifest.json", &(serde_json::to_string_pretty(self)? + "\n"))
    }
}

pub fn write_text(dir: &Path, name: &str, content: &str) -> Result<(), Failure> {
    fs::write(dir.join(name), content)?;
    Ok(())
}

pub fn write_with<F>(dir: &Path, name: &str, f: F) -> Result<(), Failure>
where
    F: FnOnce(&mut Vec<u8>) -> fracdiff::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    fs::write(dir.join(name), buf)?;
    Ok(())
}
