//! Experiment configuration file: treebank paths by role, optional
//! synthetic grammars, experiment settings and the output directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use udmeta::conllu::{read_conllu, ReadOptions, Treebank};
use udmeta::experiment::{ExperimentData, ExperimentSettings, SyntheticSetup};
use udmeta::meta::TestLanguage;
use udmeta::typology::{read_typology_csv, TypologyTable};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeldOutPaths {
    /// Language tag; defaults to the pool file name up to its first dot.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    pub pool: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub pretrain: PathBuf,
    pub meta_train: Vec<PathBuf>,
    #[serde(default)]
    pub validation: Vec<HeldOutPaths>,
    pub test: Vec<HeldOutPaths>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub typology: Option<PathBuf>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Intermediate training snapshots every this many steps; 0 disables.
    #[serde(default)]
    pub checkpoint_interval: usize,
    pub data: DataPaths,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSetup>,
    #[serde(default)]
    pub experiment: ExperimentSettings,
}

/// A parsed configuration with paths resolved against its directory.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: ExperimentConfig,
    pub base: PathBuf,
    pub hash: String,
}

/// Language tag of a treebank file: its name up to the first dot.
pub fn language_from_path(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    name.split('.').next().unwrap_or_default().to_string()
}

fn set_key(root: &mut toml::Value, key: &str, value: toml::Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = node.as_table_mut().ok_or_else(|| CliError::config(format!("--set {key}: {part} is not inside a table")))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), value);
            return Ok(());
        }
        node = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
    }
    Err(CliError::config("--set needs a non-empty key"))
}

/// Parses `key=value` where the value is a TOML literal; bare words are
/// taken as strings.
fn parse_override(raw: &str) -> Result<(String, toml::Value)> {
    let (key, value) = raw.split_once('=').ok_or_else(|| CliError::config(format!("--set {raw}: expected key=value")))?;
    let doc = format!("v = {value}");
    let parsed = match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").unwrap_or(toml::Value::String(value.to_string())),
        Err(_) => toml::Value::String(value.to_string()),
    };
    Ok((key.trim().to_string(), parsed))
}

impl Loaded {
    pub fn from_file(path: &Path, overrides: &[String], seeds: &[u64]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str(&text, &base, overrides, seeds)
    }

    pub fn from_str(text: &str, base: &Path, overrides: &[String], seeds: &[u64]) -> Result<Self> {
        let mut value: toml::Value = toml::from_str(text).map_err(|e| CliError::config(format!("config: {e}")))?;
        for raw in overrides {
            let (k, v) = parse_override(raw)?;
            set_key(&mut value, &k, v)?;
        }
        let mut config: ExperimentConfig = value.try_into().map_err(|e: toml::de::Error| CliError::config(format!("config: {e}")))?;
        if !seeds.is_empty() {
            config.experiment.seeds = seeds.to_vec();
        }
        config.experiment.validate()?;
        if let Some(s) = &config.synthetic {
            s.validate()?;
        }
        let hash = config_hash(&config);
        Ok(Loaded { config, base: base.to_path_buf(), hash })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.output_dir)
    }

    pub fn settings(&self) -> &ExperimentSettings {
        &self.config.experiment
    }

    /// Every input path, so a missing file is reported before any work.
    pub fn check_inputs(&self) -> Result<()> {
        let d = &self.config.data;
        let mut paths: Vec<&PathBuf> = vec![&d.pretrain];
        paths.extend(&d.meta_train);
        for h in d.validation.iter().chain(&d.test) {
            paths.push(&h.pool);
            paths.extend(&h.test);
        }
        paths.extend(&d.typology);
        for p in paths {
            let full = self.resolve(p);
            if !full.is_file() {
                return Err(CliError::data(format!("missing input {}", full.display())));
            }
        }
        Ok(())
    }

    fn read(&self, p: &Path, language: &str) -> Result<Treebank> {
        let full = self.resolve(p);
        let text = std::fs::read_to_string(&full).map_err(|e| CliError::io(&full, e))?;
        let (tb, skipped) = read_conllu(&text, language, &ReadOptions::default()).map_err(|e| CliError::data(format!("{}: {e}", full.display())))?;
        if !skipped.is_empty() {
            log::warn!("{}: skipped {} sentences", full.display(), skipped.len());
        }
        Ok(tb)
    }

    fn held_out(&self, h: &HeldOutPaths) -> Result<TestLanguage> {
        let lang = h.language.clone().unwrap_or_else(|| language_from_path(&h.pool));
        Ok(TestLanguage {
            pool: self.read(&h.pool, &lang)?,
            test: h.test.as_ref().map(|t| self.read(t, &lang)).transpose()?,
        })
    }

    pub fn load_data(&self) -> Result<ExperimentData> {
        self.check_inputs()?;
        let d = &self.config.data;
        Ok(ExperimentData {
            pretrain: self.read(&d.pretrain, &language_from_path(&d.pretrain))?,
            meta_train: d.meta_train.iter().map(|p| self.read(p, &language_from_path(p))).collect::<Result<_>>()?,
            validation: d.validation.iter().map(|h| self.held_out(h)).collect::<Result<_>>()?,
            test: d.test.iter().map(|h| self.held_out(h)).collect::<Result<_>>()?,
        })
    }

    pub fn load_typology(&self) -> Result<Option<TypologyTable>> {
        let Some(p) = &self.config.data.typology else { return Ok(None) };
        let full = self.resolve(p);
        let text = std::fs::read_to_string(&full).map_err(|e| CliError::io(&full, e))?;
        Ok(Some(read_typology_csv(&text).map_err(|e| CliError::data(format!("{}: {e}", full.display())))?))
    }
}

/// SHA-256 of the canonical JSON of everything but the output location.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let mut c = config.clone();
    c.output_dir = PathBuf::new();
    let json = serde_json::to_vec(&c).expect("configuration serializes");
    hex::encode(Sha256::digest(&json))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
output_dir = "out"
[data]
pretrain = "a.conllu"
meta_train = ["b.conllu"]
test = [{ pool = "c.pool.conllu" }]
"#;

    #[test]
    fn overrides_change_the_hash_and_output_dir_does_not() {
        let base = Loaded::from_str(MINIMAL, Path::new("/x"), &[], &[]).unwrap();
        let moved = Loaded::from_str(MINIMAL, Path::new("/x"), &["output_dir=\"elsewhere\"".into()], &[]).unwrap();
        assert_eq!(base.hash, moved.hash);
        assert_eq!(moved.output_dir(), PathBuf::from("/x/elsewhere"));
        let set = Loaded::from_str(MINIMAL, Path::new("/x"), &["experiment.repetitions=2".into()], &[]).unwrap();
        assert_eq!(set.settings().repetitions, 2);
        assert_ne!(base.hash, set.hash);
        let seeds = Loaded::from_str(MINIMAL, Path::new("/x"), &[], &[9]).unwrap();
        assert_eq!(seeds.settings().seeds, vec![9]);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        let e = Loaded::from_str(&format!("{MINIMAL}\nbogus = 1\n"), Path::new("."), &[], &[]).unwrap_err();
        assert_eq!(e.kind.exit_code(), 2);
        let e = Loaded::from_str(MINIMAL, Path::new("."), &["experiment.seeds=[]".into()], &[]).unwrap_err();
        assert_eq!(e.kind.exit_code(), 2);
    }

    #[test]
    fn missing_inputs_are_data_errors() {
        let l = Loaded::from_str(MINIMAL, Path::new("/nonexistent"), &[], &[]).unwrap();
        assert_eq!(l.check_inputs().unwrap_err().kind.exit_code(), 3);
    }

    #[test]
    fn language_tags_come_from_file_names() {
        assert_eq!(language_from_path(Path::new("data/fr.pool.conllu")), "fr");
        assert_eq!(language_from_path(Path::new("src.conllu")), "src");
    }
}
