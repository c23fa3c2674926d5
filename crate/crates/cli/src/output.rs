//! Artifact directory: CSV tables plus `manifest.json`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use fedsep_core::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

pub const MANIFEST: &str = "manifest.json";

/// SHA-256 over git's blob framing, `"blob <len>\0" ++ content`, in hex.
pub fn git_style_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetRecord {
    pub manifest: String,
    pub manifest_hash: String,
    pub data_file: String,
    pub data_hash: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: String,
    seed: u64,
    /// Seeds of the individual replicates, when the command runs several.
    replicate_seeds: &'a [u64],
    overrides: &'a [String],
    config: &'a ExperimentConfig,
    dataset: Option<&'a DatasetRecord>,
    warnings: &'a [String],
    outputs: &'a [String],
}

/// Collects the files an experiment writes and the notes that go into the manifest.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
    pub warnings: Vec<String>,
    pub replicate_seeds: Vec<u64>,
    pub dataset: Option<DatasetRecord>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::Io(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
            warnings: Vec::new(),
            replicate_seeds: Vec::new(),
            dataset: None,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Registers `name` (relative to the root) as an output.
    pub fn record(&mut self, name: &str) {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
    }

    pub fn csv(&mut self, name: &str) -> Result<csv::Writer<BufWriter<File>>> {
        let file = File::create(self.path(name))?;
        self.record(name);
        Ok(csv::Writer::from_writer(BufWriter::new(file)))
    }

    pub fn warn(&mut self, message: String) {
        log::warn!("{message}");
        self.warnings.push(message);
    }

    pub fn write_manifest(&self, config: &ExperimentConfig, overrides: &[String]) -> Result<()> {
        let manifest = Manifest {
            tool: "fedsep",
            version: env!("CARGO_PKG_VERSION"),
            command: config.experiment.map(|c| c.to_string()).unwrap_or_default(),
            seed: config.seed(),
            replicate_seeds: &self.replicate_seeds,
            overrides,
            config,
            dataset: self.dataset.as_ref(),
            warnings: &self.warnings,
            outputs: &self.files,
        };
        let mut w = BufWriter::new(File::create(self.path(MANIFEST))?);
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}
