use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{SecondsFormat, Utc};
use layerrd::io::{to_json_string, RNG_NAME};
use layerrd::{RunManifest, SolverConfig};
use serde::Serialize;

/// Collects provenance while a command runs and writes it at the end.
pub struct Recorder {
    out_dir: PathBuf,
    manifest: RunManifest,
}

impl Recorder {
    pub fn start(command: &str, arguments: &[String], out_dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(out_dir)
            .with_context(|| format!("cannot create output directory {}", out_dir.display()))?;
        Ok(Recorder {
            out_dir: out_dir.to_path_buf(),
            manifest: RunManifest {
                command: command.to_string(),
                arguments: arguments.to_vec(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                config: SolverConfig::default(),
                seed: 0,
                rng: RNG_NAME.to_string(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                started: now(),
                finished: String::new(),
            },
        })
    }

    pub fn manifest_name(&self) -> String {
        format!("{}.manifest.json", self.manifest.command)
    }

    pub fn input(&mut self, path: &Path) {
        self.manifest.inputs.push(path.display().to_string());
    }

    pub fn config(&mut self, cfg: &SolverConfig) {
        self.manifest.config = cfg.clone();
    }

    pub fn seed(&mut self, seed: u64) {
        self.manifest.seed = seed;
    }

    /// Path for an output file, recorded relative to the output directory.
    pub fn output(&mut self, relative: &str) -> PathBuf {
        self.manifest.outputs.push(relative.to_string());
        self.out_dir.join(relative)
    }

    /// Writes `value` as JSON with a `manifest` key naming this run.
    pub fn write_json<T: Serialize>(&mut self, relative: &str, value: &T) -> Result<PathBuf> {
        #[derive(Serialize)]
        struct Tagged<'a, T> {
            #[serde(flatten)]
            value: &'a T,
            manifest: String,
        }
        let text = to_json_string(&Tagged {
            value,
            manifest: self.manifest_name(),
        })?;
        let path = self.output(relative);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.manifest.finished = now();
        let path = self.out_dir.join(self.manifest_name());
        std::fs::write(&path, to_json_string(&self.manifest)?)
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}
