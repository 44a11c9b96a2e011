use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::Serialize;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one command run, written as `manifest.json` in the output directory.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub scenario: String,
    pub config_hash: String,
    pub scenario_hash: String,
    pub seed: u64,
    /// File names relative to the output directory.
    pub artifacts: Vec<String>,
    pub tool_version: String,
    pub started_unix_s: u64,
    pub wall_clock_s: f64,
}

pub struct ManifestBuilder {
    manifest: RunManifest,
    clock: Instant,
    dir: PathBuf,
}

impl ManifestBuilder {
    pub fn start(dir: &Path, command: &str, scenario: &str, config_hash: String, scenario_hash: String, seed: u64) -> Self {
        let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        Self {
            manifest: RunManifest {
                command: command.to_string(),
                scenario: scenario.to_string(),
                config_hash,
                scenario_hash,
                seed,
                artifacts: Vec::new(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                started_unix_s: started,
                wall_clock_s: 0.0,
            },
            clock: Instant::now(),
            dir: dir.to_path_buf(),
        }
    }

    /// Path of a new artifact inside the output directory.
    pub fn artifact(&mut self, name: &str) -> PathBuf {
        self.manifest.artifacts.push(name.to_string());
        self.dir.join(name)
    }

    pub fn record(&mut self, name: String) {
        self.manifest.artifacts.push(name);
    }

    pub fn finish(mut self) -> anyhow::Result<RunManifest> {
        self.manifest.wall_clock_s = self.clock.elapsed().as_secs_f64();
        self.manifest.artifacts.sort();
        self.manifest.artifacts.dedup();
        let path = self.dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(self.manifest)
    }
}
