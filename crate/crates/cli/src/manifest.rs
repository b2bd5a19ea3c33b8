//! Run manifests: what was run, on which inputs, and hashes of what it wrote.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use prs_eis::io::{parse_key_values, write_atomic};

use crate::{CliResult, Context};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileRecord {
    pub fn of(path: &Path) -> CliResult<Self> {
        let data = fs::read(path)?;
        Ok(Self {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&data)),
            bytes: data.len() as u64,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub cwd: String,
    pub out_dir: String,
    /// Resolved configuration, one key/value table per section.
    pub config: BTreeMap<String, BTreeMap<String, String>>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub rng_seeds: Vec<u64>,
    pub notes: Vec<String>,
    pub tool_version: String,
    pub started_at: String,
    pub finished_at: String,
}

/// Collects a manifest while a command runs.
pub struct Recorder {
    manifest: RunManifest,
    outputs: Vec<PathBuf>,
}

impl Recorder {
    pub fn new(command: &str, ctx: &Context) -> Self {
        let cwd = std::env::current_dir()
            .map(|p| p.display().to_string())
            .unwrap_or_default();
        Self {
            manifest: RunManifest {
                command: command.to_string(),
                argv: ctx.argv.clone(),
                cwd,
                out_dir: ctx.out_dir.display().to_string(),
                config: BTreeMap::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                rng_seeds: Vec::new(),
                notes: Vec::new(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                started_at: now(),
                finished_at: String::new(),
            },
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        self.manifest.inputs.push(FileRecord::of(path)?);
        Ok(())
    }

    /// Records a `key = value` text block as a config section.
    pub fn section(&mut self, name: &str, text: &str) -> CliResult<()> {
        let table = parse_key_values(text)?.into_iter().map(|(_, k, v)| (k, v)).collect();
        self.manifest.config.insert(name.to_string(), table);
        Ok(())
    }

    pub fn option(&mut self, key: &str, value: impl ToString) {
        self.manifest
            .config
            .entry("options".to_string())
            .or_default()
            .insert(key.to_string(), value.to_string());
    }

    pub fn seed(&mut self, seed: u64) {
        self.manifest.rng_seeds.push(seed);
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.manifest.notes.push(note.into());
    }

    /// Writes `contents` atomically and registers the file as an output.
    pub fn write(&mut self, path: &Path, contents: &[u8]) -> CliResult<()> {
        write_atomic(path, contents)?;
        self.outputs.push(path.to_path_buf());
        Ok(())
    }

    /// Hashes every output and writes the manifest to `path`.
    pub fn finish(mut self, path: &Path) -> CliResult<RunManifest> {
        self.manifest.outputs = self
            .outputs
            .iter()
            .map(|p| FileRecord::of(p))
            .collect::<CliResult<_>>()?;
        self.manifest.finished_at = now();
        let json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        write_atomic(path, format!("{json}\n").as_bytes())?;
        Ok(self.manifest)
    }
}

/// Manifest path used next to a single output file.
pub fn beside(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_owned();
    name.push(".manifest.json");
    output.with_file_name(name)
}

pub fn read(path: &Path) -> CliResult<RunManifest> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| crate::CliError::Usage(format!("{}: not a run manifest: {e}", path.display())))
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
