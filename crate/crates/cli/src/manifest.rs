use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

/// Record of one command run, written to `manifests/<command>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config: RunConfig,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub timings: Vec<Timing>,
    /// Partial failures and warnings.
    pub notes: Vec<String>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let mut f = std::fs::File::open(path).map_err(|e| crashdrl::Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| crashdrl::Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

impl Manifest {
    pub fn path(out_dir: &Path, command: &str) -> PathBuf {
        out_dir.join("manifests").join(format!("{command}.json"))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| crashdrl::Error::io(path, e))?;
        Ok(serde_json::from_str(&text).map_err(crashdrl::Error::from)?)
    }

    /// Recompute every output hash and list the files that no longer match.
    pub fn stale_outputs(&self) -> Result<Vec<PathBuf>, CliError> {
        let mut out = Vec::new();
        for f in &self.outputs {
            if !f.path.exists() || sha256_file(&f.path)? != f.sha256 {
                out.push(f.path.clone());
            }
        }
        Ok(out)
    }
}

/// Collects what a command reads and writes while it runs.
pub(crate) struct Recorder {
    command: String,
    seed: u64,
    config: RunConfig,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    timings: Vec<Timing>,
    notes: Vec<String>,
    started: Instant,
}

impl Recorder {
    pub(crate) fn new(command: &str, cfg: &RunConfig, seed: u64) -> Self {
        Self {
            command: command.into(),
            seed,
            config: cfg.clone(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: Vec::new(),
            notes: Vec::new(),
            started: Instant::now(),
        }
    }

    pub(crate) fn input(&mut self, p: &Path) {
        if !self.inputs.iter().any(|q| q == p) {
            self.inputs.push(p.to_path_buf());
        }
    }

    pub(crate) fn output(&mut self, p: &Path) {
        if !self.outputs.iter().any(|q| q == p) {
            self.outputs.push(p.to_path_buf());
        }
    }

    pub(crate) fn note(&mut self, n: impl Into<String>) {
        self.notes.push(n.into());
    }

    pub(crate) fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let v = f();
        self.timings.push(Timing { stage: stage.into(), seconds: t.elapsed().as_secs_f64() });
        v
    }

    pub(crate) fn finish(mut self, out_dir: &Path) -> Result<Manifest, CliError> {
        self.timings.push(Timing { stage: "total".into(), seconds: self.started.elapsed().as_secs_f64() });
        let hash = |ps: &[PathBuf]| -> Result<Vec<FileHash>, CliError> {
            ps.iter().map(|p| Ok(FileHash { path: p.clone(), sha256: sha256_file(p)? })).collect()
        };
        let m = Manifest {
            command: self.command,
            seed: self.seed,
            config: self.config,
            inputs: hash(&self.inputs)?,
            outputs: hash(&self.outputs)?,
            timings: self.timings,
            notes: self.notes,
        };
        let path = Manifest::path(out_dir, &m.command);
        let dir = path.parent().expect("manifest dir");
        std::fs::create_dir_all(dir).map_err(|e| crashdrl::Error::io(dir, e))?;
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        std::fs::write(&path, text).map_err(|e| crashdrl::Error::io(&path, e))?;
        Ok(m)
    }
}
