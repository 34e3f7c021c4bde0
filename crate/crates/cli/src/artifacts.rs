//! Output layout, manifests and hash guards.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST_SUFFIX: &str = ".manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub versions: BTreeMap<String, String>,
    /// SHA-256 of every file written by the command, keyed by file name.
    pub outputs: BTreeMap<String, String>,
}

pub fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("udmeta".to_string(), udmeta::VERSION.to_string()),
        ("udmeta-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("real".to_string(), format!("f{}", 8 * std::mem::size_of::<udmeta::numeric::Real>())),
    ])
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut s = artifact.as_os_str().to_owned();
    s.push(MANIFEST_SUFFIX);
    PathBuf::from(s)
}

/// Writes the manifest of `primary` covering all `outputs`.
pub fn write_manifest(primary: &Path, command: &str, config_hash: &str, seed: Option<u64>, outputs: &[&Path]) -> Result<()> {
    let mut files = BTreeMap::new();
    for p in outputs {
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        files.insert(name, sha256_file(p)?);
    }
    let m = Manifest {
        command: command.to_string(),
        config_hash: config_hash.to_string(),
        seed,
        versions: versions(),
        outputs: files,
    };
    let mut text = serde_json::to_string_pretty(&m)?;
    text.push('\n');
    write(&manifest_path(primary), text)
}

/// Refuses an upstream artifact that is missing, was produced under a
/// different configuration, or was modified after it was written.
pub fn check_upstream(artifact: &Path, config_hash: &str) -> Result<Manifest> {
    if !artifact.is_file() {
        return Err(CliError::data(format!("missing upstream artifact {}; run the producing command first", artifact.display())));
    }
    let mp = manifest_path(artifact);
    let text = std::fs::read_to_string(&mp).map_err(|e| CliError::io(&mp, e))?;
    let m: Manifest = serde_json::from_str(&text)?;
    if m.config_hash != config_hash {
        return Err(CliError::config(format!(
            "{} was produced under config hash {}, current config hash is {}",
            artifact.display(),
            m.config_hash,
            config_hash
        )));
    }
    let name = artifact.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let actual = sha256_file(artifact)?;
    match m.outputs.get(&name) {
        Some(h) if *h == actual => Ok(m),
        Some(h) => Err(CliError::data(format!("{} has content hash {actual}, its manifest records {h}", artifact.display()))),
        None => Err(CliError::data(format!("manifest {} does not cover {name}", mp.display()))),
    }
}

/// File layout under the output directory.
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn pretrained(&self, seed: u64) -> PathBuf {
        self.root.join("pretrain").join(format!("seed{seed}.ckpt.json"))
    }

    pub fn trained(&self, model: &str, seed: u64) -> PathBuf {
        self.root.join("train").join(format!("{model}.seed{seed}.ckpt.json"))
    }

    pub fn snapshot(&self, model: &str, seed: u64, step: usize) -> PathBuf {
        self.root.join("train").join(format!("{model}.seed{seed}.step{step}.ckpt.json"))
    }

    pub fn telemetry(&self, model: &str, seed: u64) -> PathBuf {
        self.root.join("train").join(format!("{model}.seed{seed}.telemetry.jsonl"))
    }

    pub fn summary(&self, model: &str, seed: u64) -> PathBuf {
        self.root.join("train").join(format!("{model}.seed{seed}.summary.json"))
    }

    pub fn reports(&self, model: &str, seed: u64) -> PathBuf {
        self.root.join("metatest").join(format!("{model}.seed{seed}.json"))
    }

    pub fn analysis(&self) -> PathBuf {
        self.root.join("analysis")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }
}
