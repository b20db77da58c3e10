//! CSV/JSON writers and run manifests.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TOOL: &str = "blochnoise";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything needed to repeat a run. Contains no timestamps so that a
/// replay writes identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// Command-line arguments after the binary name, minus `--workers`.
    pub args: Vec<String>,
    pub parameters: serde_json::Value,
    /// SHA-256 of each input file, keyed by the path as given.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub seed: Option<u64>,
}

impl RunManifest {
    pub fn new(subcommand: &str, args: &[String], parameters: serde_json::Value) -> Self {
        Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            subcommand: subcommand.into(),
            args: args.to_vec(),
            parameters,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            seed: None,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.insert(path.display().to_string(), hex::encode(Sha256::digest(&bytes)));
        Ok(())
    }

    /// Sidecar next to the output, or stderr when the report went to stdout.
    pub fn emit(&mut self, out: Option<&Path>) -> Result<()> {
        match out {
            Some(path) => {
                self.outputs = vec![path.display().to_string()];
                write_json(Some(&manifest_path(path)), self)
            }
            None => {
                let text = serde_json::to_string_pretty(self)?;
                eprintln!("{text}");
                Ok(())
            }
        }
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
}

pub fn write_json<T: Serialize + ?Sized>(out: Option<&Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

/// `#`-prefixed metadata lines, then a header and numeric rows.
pub fn write_csv(path: &Path, meta: &[String], header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut buf = Vec::new();
    for line in meta {
        writeln!(buf, "# {line}")?;
    }
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        for row in rows {
            w.write_record(row.iter().map(|v| format!("{v:?}")))?;
        }
        w.flush()?;
    }
    fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}
