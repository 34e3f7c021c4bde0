//! Binary typological feature vectors and the correlation analyses run on them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::evaluate::{spearman, EvalError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TypologyError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("feature schemas differ")]
    SchemaMismatch,
    #[error("no jointly observed features")]
    NoOverlap,
    #[error("zero vector over the jointly observed features")]
    ZeroNorm,
    #[error("unknown language {0}")]
    UnknownLanguage(String),
    #[error("need at least 3 languages, got {0}")]
    TooFewLanguages(usize),
    #[error("{0} values for {1} languages")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Stats(#[from] EvalError),
}

/// Binary features of one language; `None` marks a missing value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypologyVector {
    pub language: String,
    pub features: Vec<String>,
    pub values: Vec<Option<bool>>,
}

impl TypologyVector {
    pub fn get(&self, feature: &str) -> Option<bool> {
        self.features.iter().position(|f| f == feature).and_then(|i| self.values[i])
    }
}

/// Vectors for several languages over one shared feature schema.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TypologyTable {
    pub features: Vec<String>,
    pub vectors: Vec<TypologyVector>,
}

impl TypologyTable {
    pub fn get(&self, language: &str) -> Result<&TypologyVector, TypologyError> {
        self.vectors
            .iter()
            .find(|v| v.language == language)
            .ok_or_else(|| TypologyError::UnknownLanguage(language.to_string()))
    }

    /// Builds a table from vectors, aligning them on the union of their features.
    pub fn from_vectors(vectors: Vec<TypologyVector>) -> Self {
        let mut features: Vec<String> = Vec::new();
        for v in &vectors {
            for f in &v.features {
                if !features.contains(f) {
                    features.push(f.clone());
                }
            }
        }
        let vectors = vectors
            .into_iter()
            .map(|v| TypologyVector {
                values: features.iter().map(|f| v.get(f)).collect(),
                features: features.clone(),
                language: v.language,
            })
            .collect();
        TypologyTable { features, vectors }
    }

    /// CSV with columns `language_tag,feature_name,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("language_tag,feature_name,value\n");
        for v in &self.vectors {
            for (f, x) in v.features.iter().zip(&v.values) {
                let val = match x {
                    Some(true) => "1",
                    Some(false) => "0",
                    None => "",
                };
                out.push_str(&format!("{},{},{}\n", v.language, f, val));
            }
        }
        out
    }
}

/// Parses `language_tag,feature_name,value` rows. A header row is optional;
/// empty values and `NA`, `-`, `--`, `?` are missing. The schema is every
/// feature name in order of first appearance.
pub fn read_typology_csv(text: &str) -> Result<TypologyTable, TypologyError> {
    let mut per_lang: BTreeMap<String, BTreeMap<String, Option<bool>>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut features: Vec<String> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(TypologyError::Parse { line: i + 1, reason: format!("expected 3 columns, found {}", cols.len()) });
        }
        if i == 0 && cols[0].eq_ignore_ascii_case("language_tag") {
            continue;
        }
        let value = match cols[2] {
            "" | "NA" | "-" | "--" | "?" => None,
            v => match v.parse::<f64>() {
                Ok(x) if x == 0.0 => Some(false),
                Ok(x) if x == 1.0 => Some(true),
                _ => return Err(TypologyError::Parse { line: i + 1, reason: format!("value {v:?} is not 0, 1 or missing") }),
            },
        };
        if !per_lang.contains_key(cols[0]) {
            order.push(cols[0].to_string());
        }
        if !features.iter().any(|f| f == cols[1]) {
            features.push(cols[1].to_string());
        }
        per_lang.entry(cols[0].to_string()).or_default().insert(cols[1].to_string(), value);
    }
    let vectors = order
        .into_iter()
        .map(|lang| {
            let vals = &per_lang[&lang];
            TypologyVector {
                values: features.iter().map(|f| vals.get(f).copied().flatten()).collect(),
                features: features.clone(),
                language: lang,
            }
        })
        .collect();
    Ok(TypologyTable { features, vectors })
}

/// Cosine similarity over the features present in both vectors.
pub fn cosine_similarity(a: &TypologyVector, b: &TypologyVector) -> Result<f64, TypologyError> {
    if a.features != b.features {
        return Err(TypologyError::SchemaMismatch);
    }
    let (mut dot, mut na, mut nb, mut shared) = (0.0, 0.0, 0.0, 0);
    for (x, y) in a.values.iter().zip(&b.values) {
        if let (Some(x), Some(y)) = (x, y) {
            shared += 1;
            let (x, y) = (*x as u8 as f64, *y as u8 as f64);
            dot += x * y;
            na += x * x;
            nb += y * y;
        }
    }
    if shared == 0 {
        return Err(TypologyError::NoOverlap);
    }
    if na == 0.0 || nb == 0.0 {
        return Err(TypologyError::ZeroNorm);
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}

/// One Spearman correlation with its label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub model: String,
    pub key: String,
    pub rho: f64,
    pub p: f64,
}

/// Spearman ρ between per-language gains and similarity to each training
/// language. `similarities` holds one vector per training language, aligned
/// with `gains`.
pub fn correlate_gain_similarity(model: &str, gains: &[f64], similarities: &[(String, Vec<f64>)]) -> Result<Vec<Correlation>, TypologyError> {
    if gains.len() < 3 {
        return Err(TypologyError::TooFewLanguages(gains.len()));
    }
    similarities
        .iter()
        .map(|(lang, sims)| {
            if sims.len() != gains.len() {
                return Err(TypologyError::LengthMismatch(sims.len(), gains.len()));
            }
            let (rho, p) = spearman(gains, sims)?;
            Ok(Correlation { model: model.to_string(), key: lang.clone(), rho, p })
        })
        .collect()
}

/// Similarity of each test language to each training language, as needed
/// by [`correlate_gain_similarity`].
pub fn similarity_columns(table: &TypologyTable, test: &[String], train: &[String]) -> Result<Vec<(String, Vec<f64>)>, TypologyError> {
    train
        .iter()
        .map(|t| {
            let tv = table.get(t)?;
            let sims = test.iter().map(|l| cosine_similarity(table.get(l)?, tv)).collect::<Result<Vec<_>, _>>()?;
            Ok((t.clone(), sims))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCorrelation {
    pub feature: String,
    pub rho: f64,
    pub p: f64,
    pub languages: usize,
    pub present_in_pretrain: Option<bool>,
}

/// Per-feature Spearman ρ between gains and feature values over the
/// languages where the feature is observed. Features observed for fewer
/// than three languages, or constant over them, are skipped and returned
/// by name.
pub fn correlate_gain_features(
    gains: &[f64],
    languages: &[String],
    table: &TypologyTable,
    pretrain_language: Option<&str>,
) -> Result<(Vec<FeatureCorrelation>, Vec<String>), TypologyError> {
    if gains.len() != languages.len() {
        return Err(TypologyError::LengthMismatch(gains.len(), languages.len()));
    }
    if gains.len() < 3 {
        return Err(TypologyError::TooFewLanguages(gains.len()));
    }
    let vectors = languages.iter().map(|l| table.get(l)).collect::<Result<Vec<_>, _>>()?;
    let pretrain = pretrain_language.map(|l| table.get(l)).transpose()?;
    let (mut rows, mut skipped) = (Vec::new(), Vec::new());
    for (fi, feature) in table.features.iter().enumerate() {
        let (g, x): (Vec<f64>, Vec<f64>) = vectors
            .iter()
            .zip(gains)
            .filter_map(|(v, &g)| v.values[fi].map(|b| (g, b as u8 as f64)))
            .unzip();
        if g.len() < 3 {
            skipped.push(feature.clone());
            continue;
        }
        match spearman(&g, &x) {
            Ok((rho, p)) => rows.push(FeatureCorrelation {
                feature: feature.clone(),
                rho,
                p,
                languages: g.len(),
                present_in_pretrain: pretrain.and_then(|v| v.values[fi]),
            }),
            Err(EvalError::Constant) => {
                log::info!("feature {feature} skipped: constant over the test languages or gains");
                skipped.push(feature.clone());
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok((rows, skipped))
}

/// Scatter data and Spearman ρ between gains and non-projectivity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectivityCorrelation {
    pub model: String,
    pub rho: f64,
    pub p: f64,
    /// (language, non-projective %, gain)
    pub points: Vec<(String, f64, f64)>,
}

pub fn correlate_gain_projectivity(model: &str, languages: &[String], gains: &[f64], nonproj: &[f64]) -> Result<ProjectivityCorrelation, TypologyError> {
    if gains.len() != languages.len() || nonproj.len() != languages.len() {
        return Err(TypologyError::LengthMismatch(gains.len(), languages.len()));
    }
    if gains.len() < 3 {
        return Err(TypologyError::TooFewLanguages(gains.len()));
    }
    let (rho, p) = spearman(gains, nonproj)?;
    let points = languages
        .iter()
        .zip(nonproj.iter().zip(gains))
        .map(|(l, (&n, &g))| (l.clone(), n, g))
        .collect();
    Ok(ProjectivityCorrelation { model: model.to_string(), rho, p, points })
}

pub fn fig3_csv(rows: &[Correlation]) -> String {
    let mut out = String::from("model,training_language,rho,p\n");
    for r in rows {
        out.push_str(&format!("{},{},{:.6},{:.6}\n", r.model, r.key, r.rho, r.p));
    }
    out
}

pub fn fig4_csv(model: &str, rows: &[FeatureCorrelation]) -> String {
    let mut out = String::from("model,feature,rho,p,languages,present_in_pretrain\n");
    for r in rows {
        let present = r.present_in_pretrain.map(|b| (b as u8).to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{:.6},{:.6},{},{}\n", model, r.feature, r.rho, r.p, r.languages, present));
    }
    out
}

pub fn fig5_csv(rows: &[ProjectivityCorrelation]) -> String {
    let mut out = String::from("model,language,nonprojective_pct,gain,rho,p\n");
    for r in rows {
        for (l, n, g) in &r.points {
            out.push_str(&format!("{},{},{:.4},{:.4},{:.6},{:.6}\n", r.model, l, n, g, r.rho, r.p));
        }
    }
    out
}
