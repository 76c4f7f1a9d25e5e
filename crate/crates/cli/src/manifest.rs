//! Run manifests and output bookkeeping.
//!
//! Every command writes `manifest.toml` holding the fully resolved
//! configuration and the digests of its input files; `rankpen rerun` replays
//! it. Wall time and thread count go to `timing.toml`, which is the only
//! output that varies between otherwise identical runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::failure::{Failure, Outcome};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const TIMING_FILE: &str = "timing.toml";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest<C> {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub timing: String,
    pub outputs: Vec<String>,
    pub inputs: BTreeMap<String, InputDigest>,
    pub config: C,
}

#[derive(Debug, Serialize)]
struct Timing<'a> {
    command: &'a str,
    threads: usize,
    wall_seconds: f64,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    sections: BTreeMap<String, f64>,
}

pub fn digest_file(path: &Path) -> Outcome<InputDigest> {
    let bytes = fs::read(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    Ok(InputDigest { path: path.to_path_buf(), sha256: hex::encode(Sha256::digest(&bytes)) })
}

pub fn to_toml<T: Serialize>(value: &T) -> Outcome<String> {
    toml::to_string(value).map_err(|e| Failure::input(format!("cannot serialize record: {e}")))
}

/// Collects the files a command writes into its output directory.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
    inputs: BTreeMap<String, InputDigest>,
    sections: BTreeMap<String, f64>,
    started: Instant,
}

impl Outputs {
    pub fn create(dir: &Path) -> Outcome<Self> {
        fs::create_dir_all(dir).map_err(|e| Failure::input(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            inputs: BTreeMap::new(),
            sections: BTreeMap::new(),
            started: Instant::now(),
        })
    }

    pub fn input(&mut self, name: &str, path: &Path) -> Outcome<()> {
        self.inputs.insert(name.to_string(), digest_file(path)?);
        Ok(())
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Outcome<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_toml<T: Serialize>(&mut self, name: &str, value: &T) -> Outcome<()> {
        let text = to_toml(value)?;
        self.write(name, &text)
    }

    /// Records a wall-time entry for `timing.toml`.
    pub fn time(&mut self, section: impl Into<String>, seconds: f64) {
        self.sections.insert(section.into(), seconds);
    }

    /// Writes the manifest and the timing record.
    pub fn finish<C: Serialize>(mut self, command: &str, seed: Option<u64>, config: &C) -> Outcome<()> {
        let mut outputs = self.written.clone();
        outputs.push(MANIFEST_FILE.to_string());
        let manifest = Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            timing: TIMING_FILE.to_string(),
            outputs,
            inputs: std::mem::take(&mut self.inputs),
            config,
        };
        self.write_toml(MANIFEST_FILE, &manifest)?;
        let timing = Timing {
            command,
            threads: rayon::current_num_threads(),
            wall_seconds: self.started.elapsed().as_secs_f64(),
            sections: std::mem::take(&mut self.sections),
        };
        let text = to_toml(&timing)?;
        let path = self.dir.join(TIMING_FILE);
        fs::write(&path, text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
    }
}

/// Reads a manifest, checking that every recorded input still has the
/// recorded digest.
pub fn load<C: DeserializeOwned>(path: &Path) -> Outcome<Manifest<C>> {
    let text = fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let manifest: Manifest<C> =
        toml::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    verify_inputs(&manifest.inputs)?;
    Ok(manifest)
}

pub fn command_of(path: &Path) -> Outcome<String> {
    let text = fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let table: toml::Table =
        toml::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    table
        .get("command")
        .and_then(|c| c.as_str())
        .map(str::to_string)
        .ok_or_else(|| Failure::input(format!("{}: missing 'command'", path.display())))
}

fn verify_inputs(inputs: &BTreeMap<String, InputDigest>) -> Outcome<()> {
    for (name, recorded) in inputs {
        let now = digest_file(&recorded.path)?;
        if now.sha256 != recorded.sha256 {
            return Err(Failure::input(format!(
                "input '{name}' ({}) has changed since the manifest was written",
                recorded.path.display()
            )));
        }
    }
    Ok(())
}
