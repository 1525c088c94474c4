use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const DEFAULT_OUTPUT_DIR: &str = "results";
/// The only environment variable the CLI reads.
pub const OUTPUT_DIR_ENV: &str = "DEFERRAL_OUTPUT_DIR";

/// Wrapper written around every JSON result.
#[derive(Debug, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub result: T,
}

/// Files of one run, all named `<command>-<hash8>-<seed>...`.
pub struct Outputs {
    dir: PathBuf,
    command: String,
    stem: String,
    hash: String,
    seed: u64,
    written: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(dir: &Path, command: &str, hash: &str, seed: u64) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            stem: format!("{command}-{}-{seed}", &hash[..8]),
            hash: hash.to_string(),
            seed,
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: String, body: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, body)?;
        self.written.push(path);
        Ok(())
    }

    fn envelope_bytes<T: Serialize>(&self, result: &T) -> Result<Vec<u8>> {
        let env = Envelope { command: self.command.clone(), config_hash: self.hash.clone(), seed: self.seed, result };
        let mut bytes = serde_json::to_vec_pretty(&env)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    /// The main result, `<stem>.json`.
    pub fn json<T: Serialize>(&mut self, result: &T) -> Result<()> {
        let bytes = self.envelope_bytes(result)?;
        self.write(format!("{}.json", self.stem), &bytes)
    }

    /// A secondary JSON artifact, `<stem>.<artifact>.json`.
    pub fn artifact_json<T: Serialize>(&mut self, artifact: &str, result: &T) -> Result<()> {
        let bytes = self.envelope_bytes(result)?;
        self.write(format!("{}.{artifact}.json", self.stem), &bytes)
    }

    /// `<stem>.<artifact>.csv`, prefixed by a `# config_hash=... seed=...` line.
    pub fn csv(&mut self, artifact: &str, body: &str) -> Result<()> {
        let text = format!("# config_hash={} seed={}\n{body}", self.hash, self.seed);
        self.write(format!("{}.{artifact}.csv", self.stem), text.as_bytes())
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

/// Output directory: the environment override, else the config, else [`DEFAULT_OUTPUT_DIR`].
pub fn output_dir(configured: Option<&Path>, base_dir: &Path) -> PathBuf {
    if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV).filter(|d| !d.is_empty()) {
        return PathBuf::from(dir);
    }
    match configured {
        Some(p) if p.is_absolute() => p.to_path_buf(),
        Some(p) => base_dir.join(p),
        None => PathBuf::from(DEFAULT_OUTPUT_DIR),
    }
}
