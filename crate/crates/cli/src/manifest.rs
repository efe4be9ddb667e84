//! Run manifests: the exact inputs, defaults included, behind every output.

use std::fs;
use std::path::Path;

use psimix::Result;
use serde::Serialize;

#[derive(Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: Option<String>,
    pub seed: u64,
    pub out_dir: String,
    pub cap: usize,
    pub version: String,
    pub timestamp: String,
    pub parameters: serde_json::Value,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(dir.join(format!("{}.manifest.json", self.subcommand)), text)?;
        Ok(())
    }
}
