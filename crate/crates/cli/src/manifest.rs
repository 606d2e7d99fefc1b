use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ktfield::io::{sha256_hex, strip_timing, write_json};
use ktfield::Result;
use serde::Serialize;

/// Record written next to every command's outputs. Timings live only under
/// `timings`, so two runs with the same inputs differ in that key alone.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub threads: usize,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub timings: BTreeMap<String, f64>,
    #[serde(skip)]
    base: Option<PathBuf>,
}

impl RunManifest {
    pub fn new<C: Serialize>(command: &str, seed: Option<u64>, config: &C) -> Result<Self> {
        let config = serde_json::to_value(config)?;
        let config_hash = sha256_hex(serde_json::to_string(&config)?.as_bytes());
        Ok(Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            threads: rayon::current_num_threads(),
            config,
            config_hash,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            timings: BTreeMap::new(),
            base: None,
        })
    }

    /// Record paths relative to `base` (used when a run owns a directory).
    pub fn relative_to(mut self, base: &Path) -> Self {
        self.base = Some(base.to_path_buf());
        self
    }

    fn key(&self, path: &Path) -> String {
        let p = match &self.base {
            Some(b) => path.strip_prefix(b).unwrap_or(path),
            None => path,
        };
        p.to_string_lossy().replace('\\', "/")
    }

    /// JSON outputs are hashed with timing keys removed so the digests
    /// repeat across runs.
    fn digest(path: &Path) -> Result<String> {
        let bytes = fs::read(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            if let Ok(mut v) = serde_json::from_slice::<serde_json::Value>(&bytes) {
                strip_timing(&mut v);
                return Ok(sha256_hex(serde_json::to_string(&v)?.as_bytes()));
            }
        }
        Ok(sha256_hex(&bytes))
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let k = self.key(path);
        self.inputs.insert(k, Self::digest(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        let k = self.key(path);
        self.outputs.insert(k, Self::digest(path)?);
        Ok(())
    }

    /// Every regular file under `dir`, recursively.
    pub fn output_dir(&mut self, dir: &Path) -> Result<()> {
        let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
        entries.sort();
        for p in entries {
            if p.is_dir() {
                self.output_dir(&p)?;
            } else {
                self.output(&p)?;
            }
        }
        Ok(())
    }

    pub fn time(&mut self, stage: &str, seconds: f64) {
        self.timings.insert(stage.into(), seconds);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

/// `<dir>/<file>.run.json` for an output path `<dir>/<file>`.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".run.json");
    output.with_file_name(name)
}
