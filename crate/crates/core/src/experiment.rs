//! The full experimental protocol: pre-training, meta-training, baselines,
//! meta-testing over seeds and support sizes, and the typology analyses.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::conllu::{projectivity_stats, Treebank};
use crate::evaluate::{mean, per_seed_las, sign_test, summary_csv, EvalReport, DEFAULT_ALPHA};
use crate::meta::{
    maml_without_pretraining, meta_test, meta_test_only, meta_train, non_episodic_train, pretrain, LanguageData, MetaConfig, MetaError,
    Observer, Silent, TestLanguage, TrainOutcome, Validation,
};
use crate::model::{ModelConfig, ModelError, Parser};
use crate::synthlang::{generate_treebank, typology_of, GrammarSpec};
use crate::numeric::{GroupRates, Tensor};
use crate::typology::{
    correlate_gain_features, correlate_gain_projectivity, correlate_gain_similarity, fig3_csv, fig4_csv, fig5_csv, similarity_columns,
    TypologyError, TypologyTable,
};
use crate::vocab::Vocabulary;

pub const MONO: &str = "mono";
pub const NE: &str = "ne";
pub const MAML: &str = "maml";
pub const MAML_NO_PRETRAIN: &str = "maml-nopt";
pub const META_TEST_ONLY: &str = "mt-only";

/// Every model of the protocol, in report order.
pub const MODELS: [&str; 5] = [META_TEST_ONLY, MONO, NE, MAML_NO_PRETRAIN, MAML];

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Meta(#[from] MetaError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Typology(#[from] TypologyError),
    #[error(transparent)]
    Eval(#[from] crate::evaluate::EvalError),
    #[error("{0}")]
    Config(String),
}

impl From<crate::conllu::ConlluError> for ExperimentError {
    fn from(e: crate::conllu::ConlluError) -> Self {
        ExperimentError::Meta(MetaError::Data(e))
    }
}

/// Meta-testing settings of one model family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptSettings {
    pub lr: GroupRates,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSettings {
    pub model: ModelConfig,
    pub meta: MetaConfig,
    pub seeds: Vec<u64>,
    pub support_sizes: Vec<usize>,
    /// Meta-test repetitions per (language, |S|, seed).
    pub repetitions: usize,
    /// Fine-tuning of mono, MAML and MAML without pre-training; defaults to
    /// the inner loop when absent.
    pub meta_test: Option<AdaptSettings>,
    pub ne_test: Option<AdaptSettings>,
    pub mt_only_test: Option<AdaptSettings>,
    pub models: Vec<String>,
    /// |S| at which gains over the monolingual baseline are analysed.
    pub analysis_support: usize,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            model: ModelConfig::default(),
            meta: MetaConfig::default(),
            seeds: vec![1, 2, 3, 4, 5, 6, 7],
            support_sizes: vec![20, 40, 80],
            repetitions: 5,
            meta_test: None,
            ne_test: None,
            mt_only_test: None,
            models: MODELS.iter().map(|m| m.to_string()).collect(),
            analysis_support: 20,
        }
    }
}

impl ExperimentSettings {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.model.validate().map_err(ExperimentError::Config)?;
        self.meta.validate()?;
        if self.seeds.is_empty() {
            return Err(ExperimentError::Config("seeds must be non-empty".into()));
        }
        if self.support_sizes.is_empty() || self.repetitions == 0 {
            return Err(ExperimentError::Config("need at least one support size and one repetition".into()));
        }
        if let Some(m) = self.models.iter().find(|m| !MODELS.contains(&m.as_str())) {
            return Err(ExperimentError::Config(format!("unknown model {m}; expected one of {MODELS:?}")));
        }
        Ok(())
    }

    pub fn adapt_for(&self, model: &str) -> AdaptSettings {
        let inner = AdaptSettings { lr: self.meta.inner_lr, steps: self.meta.inner_steps };
        match model {
            NE => self.ne_test.or(self.meta_test).unwrap_or(inner),
            META_TEST_ONLY => self.mt_only_test.or(self.meta_test).unwrap_or(inner),
            _ => self.meta_test.unwrap_or(inner),
        }
    }

    fn runs(&self, model: &str) -> bool {
        self.models.iter().any(|m| m == model)
    }
}

/// Treebanks by role.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub pretrain: Treebank,
    pub meta_train: Vec<Treebank>,
    pub validation: Vec<TestLanguage>,
    pub test: Vec<TestLanguage>,
}

impl ExperimentData {
    /// One vocabulary over every treebank of the experiment.
    pub fn vocabulary(&self, cfg: &ModelConfig) -> Vocabulary {
        let mut all: Vec<&Treebank> = vec![&self.pretrain];
        all.extend(&self.meta_train);
        for t in self.validation.iter().chain(&self.test) {
            all.push(&t.pool);
            all.extend(&t.test);
        }
        Vocabulary::build(&all, cfg.min_freq, cfg.piece_len)
    }

    pub fn training_languages(&self) -> Vec<String> {
        std::iter::once(&self.pretrain).chain(&self.meta_train).map(|t| t.language.clone()).collect()
    }

    pub fn test_languages(&self) -> Vec<String> {
        self.test.iter().map(|t| t.language().to_string()).collect()
    }
}

/// Grammars by role plus corpus sizes for a fully synthetic experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSetup {
    pub pretrain_sentences: usize,
    pub meta_train_sentences: usize,
    /// Sentences available for support sets of validation and test languages.
    pub pool_sentences: usize,
    /// Held-out evaluation sentences of validation and test languages.
    pub test_sentences: usize,
    pub seed: u64,
    pub pretrain: GrammarSpec,
    pub meta_train: Vec<GrammarSpec>,
    pub validation: Vec<GrammarSpec>,
    pub test: Vec<GrammarSpec>,
}

impl SyntheticSetup {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        for g in self.grammars() {
            g.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        }
        let mut tags: Vec<&str> = self.grammars().map(|g| g.language.as_str()).collect();
        tags.sort_unstable();
        if tags.windows(2).any(|w| w[0] == w[1]) {
            return Err(ExperimentError::Config("language tags must be unique".into()));
        }
        Ok(())
    }

    pub fn grammars(&self) -> impl Iterator<Item = &GrammarSpec> {
        std::iter::once(&self.pretrain).chain(&self.meta_train).chain(&self.validation).chain(&self.test)
    }

    fn held_out(&self, g: &GrammarSpec) -> TestLanguage {
        let tb = generate_treebank(g, self.pool_sentences + self.test_sentences, self.seed);
        let (pool, test) = tb.sentences.split_at(self.pool_sentences);
        TestLanguage { pool: tb.with_sentences(pool.to_vec()), test: Some(tb.with_sentences(test.to_vec())) }
    }

    pub fn generate(&self) -> ExperimentData {
        ExperimentData {
            pretrain: generate_treebank(&self.pretrain, self.pretrain_sentences, self.seed),
            meta_train: self.meta_train.iter().map(|g| generate_treebank(g, self.meta_train_sentences, self.seed)).collect(),
            validation: self.validation.iter().map(|g| self.held_out(g)).collect(),
            test: self.test.iter().map(|g| self.held_out(g)).collect(),
        }
    }

    /// Ground-truth typology of every grammar.
    pub fn typology(&self) -> TypologyTable {
        TypologyTable::from_vectors(self.grammars().map(typology_of).collect())
    }
}

/// Parser for one seed: the experiment's model config with the seed as
/// initialization seed.
pub fn seeded_parser(settings: &ExperimentSettings, vocab: &Vocabulary, seed: u64) -> Result<Parser, ExperimentError> {
    let cfg = ModelConfig { init_seed: seed, ..settings.model.clone() };
    Ok(Parser::new(cfg, vocab.clone())?)
}

pub fn seeded_meta(settings: &ExperimentSettings, seed: u64) -> MetaConfig {
    MetaConfig { seed, ..settings.meta.clone() }
}

/// Summary of one training run kept in the results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub model: String,
    pub seed: u64,
    pub steps: usize,
    pub best_step: usize,
    pub best_validation: Option<f64>,
    pub validation_curve: Vec<(usize, f64)>,
}

impl TrainingSummary {
    pub fn new(model: &str, seed: u64, outcome: &TrainOutcome) -> Self {
        TrainingSummary {
            model: model.to_string(),
            seed,
            steps: outcome.history.len(),
            best_step: outcome.best_step,
            best_validation: outcome.best_validation,
            validation_curve: outcome.history.iter().filter_map(|r| r.validation_las.map(|v| (r.step, v))).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub reports: Vec<EvalReport>,
    pub training: Vec<TrainingSummary>,
}

impl ExperimentResults {
    pub fn extend(&mut self, other: ExperimentResults) {
        self.reports.extend(other.reports);
        self.training.extend(other.training);
    }

    /// Seed-averaged LAS of `model` over all test languages and repetitions.
    pub fn mean_las(&self, model: &str, support_size: usize) -> Option<f64> {
        let v: Vec<f64> = self.reports.iter().filter(|r| r.model == model && r.support_size == support_size).map(|r| r.las).collect();
        (!v.is_empty()).then(|| mean(&v))
    }

    /// Per-seed LAS of `model`, averaged over test languages and repetitions.
    pub fn seed_las(&self, model: &str, support_size: usize) -> BTreeMap<u64, f64> {
        let mut by_seed: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        for r in self.reports.iter().filter(|r| r.model == model && r.support_size == support_size) {
            by_seed.entry(r.seed).or_default().push(r.las);
        }
        by_seed.into_iter().map(|(s, v)| (s, mean(&v))).collect()
    }

    /// Seeds on which `a` beats `b`, the number of paired seeds, and the
    /// one-sided sign-test p-value.
    pub fn sign_test(&self, a: &str, b: &str, support_size: usize) -> (usize, usize, f64) {
        let (x, y) = (self.seed_las(a, support_size), self.seed_las(b, support_size));
        let pairs: Vec<(f64, f64)> = x.iter().filter_map(|(s, v)| y.get(s).map(|w| (*v, *w))).collect();
        let wins = pairs.iter().filter(|(v, w)| v > w).count();
        (wins, pairs.len(), sign_test(wins, pairs.len()))
    }
}

fn test_all(
    parser: &Parser,
    theta: &[Tensor],
    data: &ExperimentData,
    settings: &ExperimentSettings,
    model: &str,
    seed: u64,
) -> Result<Vec<EvalReport>, ExperimentError> {
    let adapt = settings.adapt_for(model);
    let mut out = Vec::new();
    for target in &data.test {
        for &s in &settings.support_sizes {
            out.extend(meta_test(parser, theta, target, s, &adapt.lr, adapt.steps, settings.repetitions, seed, model)?);
        }
    }
    Ok(out)
}

/// Meta-testing of trained parameters for every test language and |S|.
pub fn evaluate_model(
    parser: &Parser,
    theta: &[Tensor],
    data: &ExperimentData,
    settings: &ExperimentSettings,
    model: &str,
    seed: u64,
) -> Result<Vec<EvalReport>, ExperimentError> {
    if model == META_TEST_ONLY {
        let adapt = settings.adapt_for(model);
        let mut out = Vec::new();
        for target in &data.test {
            for &s in &settings.support_sizes {
                out.extend(meta_test_only(parser, target, s, &adapt.lr, adapt.steps, settings.repetitions, seed, model)?);
            }
        }
        return Ok(out);
    }
    test_all(parser, theta, data, settings, model, seed)
}

fn validation<'a>(data: &'a ExperimentData, settings: &ExperimentSettings, model: &str, seed: u64) -> Validation<'a> {
    let adapt = settings.adapt_for(model);
    Validation {
        languages: &data.validation,
        interval: settings.meta.validation_interval,
        support_size: settings.meta.validation_support,
        lr: adapt.lr,
        steps: adapt.steps,
        seed,
    }
}

/// Stage outputs of one seed, for callers that persist them.
pub trait StageSink {
    fn pretrained(&mut self, _seed: u64, _params: &[Tensor]) {}
    fn trained(&mut self, _model: &str, _seed: u64, _params: &[Tensor], _summary: &TrainingSummary) {}
}

pub struct NoSink;
impl StageSink for NoSink {}

/// Pre-trained parameters for `seed`.
pub fn pretrain_stage(parser: &Parser, data: &ExperimentData, settings: &ExperimentSettings, seed: u64) -> Result<Vec<Tensor>, ExperimentError> {
    let pre = LanguageData::new(parser, data.pretrain.clone());
    Ok(pretrain(parser, &pre, &settings.meta.pretrain, seed)?.params)
}

/// Trains `model` (maml, ne or maml-nopt) for `seed`; `pretrained` is
/// ignored by maml-nopt. Snapshots go to the observer every
/// `checkpoint_interval` steps (0 disables).
pub fn train_stage(
    parser: &Parser,
    pretrained: &[Tensor],
    data: &ExperimentData,
    settings: &ExperimentSettings,
    model: &str,
    seed: u64,
    checkpoint_interval: usize,
    observer: &mut dyn Observer,
) -> Result<(Vec<Tensor>, TrainingSummary), ExperimentError> {
    let cfg = seeded_meta(settings, seed);
    let languages: Vec<LanguageData> = data.meta_train.iter().map(|t| LanguageData::new(parser, t.clone())).collect();
    let refs: Vec<&LanguageData> = languages.iter().collect();
    let val = validation(data, settings, model, seed);
    let outcome = match model {
        MAML => meta_train(parser, pretrained.to_vec(), &refs, &cfg, Some(&val), checkpoint_interval, observer)?,
        NE => non_episodic_train(parser, pretrained.to_vec(), &refs, &cfg, Some(&val), checkpoint_interval, observer)?,
        MAML_NO_PRETRAIN => {
            let pre = LanguageData::new(parser, data.pretrain.clone());
            maml_without_pretraining(parser, &pre, &refs, &cfg, Some(&val), checkpoint_interval, observer)?
        }
        other => return Err(ExperimentError::Config(format!("{other} has no training stage"))),
    };
    let summary = TrainingSummary::new(model, seed, &outcome);
    Ok((outcome.params, summary))
}

/// Every selected model for one seed.
pub fn run_seed(
    data: &ExperimentData,
    vocab: &Vocabulary,
    settings: &ExperimentSettings,
    seed: u64,
    sink: &mut dyn StageSink,
) -> Result<ExperimentResults, ExperimentError> {
    let parser = seeded_parser(settings, vocab, seed)?;
    let mut results = ExperimentResults::default();
    if settings.runs(META_TEST_ONLY) {
        results.reports.extend(evaluate_model(&parser, parser.params.tensors(), data, settings, META_TEST_ONLY, seed)?);
    }
    let needs_pretrain = [MONO, NE, MAML].iter().any(|m| settings.runs(m));
    let pretrained = if needs_pretrain {
        log::info!("seed {seed}: pre-training on {}", data.pretrain.language);
        let p = pretrain_stage(&parser, data, settings, seed)?;
        sink.pretrained(seed, &p);
        p
    } else {
        parser.params.tensors().to_vec()
    };
    if settings.runs(MONO) {
        results.reports.extend(evaluate_model(&parser, &pretrained, data, settings, MONO, seed)?);
    }
    for model in [NE, MAML_NO_PRETRAIN, MAML] {
        if !settings.runs(model) {
            continue;
        }
        log::info!("seed {seed}: training {model}");
        let (params, summary) = train_stage(&parser, &pretrained, data, settings, model, seed, 0, &mut Silent)?;
        sink.trained(model, seed, &params, &summary);
        results.reports.extend(evaluate_model(&parser, &params, data, settings, model, seed)?);
        results.training.push(summary);
    }
    Ok(results)
}

pub fn run_experiment(data: &ExperimentData, settings: &ExperimentSettings, sink: &mut dyn StageSink) -> Result<ExperimentResults, ExperimentError> {
    settings.validate()?;
    let vocab = data.vocabulary(&settings.model);
    let mut results = ExperimentResults::default();
    for &seed in &settings.seeds {
        results.extend(run_seed(data, &vocab, settings, seed, sink)?);
    }
    Ok(results)
}

/// Tables-shaped CSV (language × model × |S|), significance against MAML.
pub fn results_table(results: &ExperimentResults) -> Result<String, ExperimentError> {
    Ok(summary_csv(&results.reports, Some(MAML), DEFAULT_ALPHA)?)
}

/// Figure-shaped CSVs plus notes about skipped analyses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Analysis {
    pub fig3: Option<String>,
    pub fig4: Option<String>,
    pub fig5: Option<String>,
    pub notes: Vec<String>,
}

/// Seed-averaged gain of `model` over the monolingual baseline per test language.
pub fn gains(results: &ExperimentResults, languages: &[String], model: &str, support_size: usize) -> Option<Vec<f64>> {
    languages
        .iter()
        .map(|l| {
            let a = per_seed_las(&results.reports, l, model, support_size);
            let b = per_seed_las(&results.reports, l, MONO, support_size);
            if a.is_empty() || b.is_empty() {
                return None;
            }
            let am = mean(&a.iter().map(|x| x.1).collect::<Vec<_>>());
            let bm = mean(&b.iter().map(|x| x.1).collect::<Vec<_>>());
            Some(am - bm)
        })
        .collect()
}

/// Correlates gains over the monolingual baseline with typological
/// similarity, individual features and non-projectivity.
pub fn analyze(results: &ExperimentResults, data: &ExperimentData, typology: Option<&TypologyTable>, support_size: usize) -> Result<Analysis, ExperimentError> {
    let langs = data.test_languages();
    let mut out = Analysis::default();
    if langs.len() < 3 {
        out.notes.push(format!("analyses need at least 3 test languages, found {}", langs.len()));
        return Ok(out);
    }
    let nonproj = data
        .test
        .iter()
        .map(|t| Ok(100.0 * projectivity_stats(t.test.as_ref().unwrap_or(&t.pool))?))
        .collect::<Result<Vec<f64>, ExperimentError>>()?;
    let (mut fig3, mut fig5) = (Vec::new(), Vec::new());
    let mut fig4 = String::new();
    for model in [NE, MAML] {
        let Some(g) = gains(results, &langs, model, support_size) else {
            out.notes.push(format!("no {model} or {MONO} results at |S|={support_size}"));
            continue;
        };
        match correlate_gain_projectivity(model, &langs, &g, &nonproj) {
            Ok(c) => fig5.push(c),
            Err(e) => out.notes.push(format!("{model} projectivity: {e}")),
        }
        let Some(table) = typology else { continue };
        let train = data.training_languages();
        let sims = match similarity_columns(table, &langs, &train) {
            Ok(s) => s,
            Err(e) => {
                out.notes.push(format!("{model} similarity: {e}"));
                continue;
            }
        };
        match correlate_gain_similarity(model, &g, &sims) {
            Ok(rows) => fig3.extend(rows),
            Err(e) => out.notes.push(format!("{model} similarity: {e}")),
        }
        let (rows, skipped) = correlate_gain_features(&g, &langs, table, Some(&data.pretrain.language))?;
        if !skipped.is_empty() {
            out.notes.push(format!("{model}: skipped features {}", skipped.join(" ")));
        }
        let csv = fig4_csv(model, &rows);
        if fig4.is_empty() {
            fig4 = csv;
        } else {
            fig4.extend(csv.lines().skip(1).map(|l| format!("{l}\n")));
        }
    }
    if typology.is_none() {
        out.notes.push("no typology table; similarity and feature analyses skipped".into());
    } else {
        out.fig3 = Some(fig3_csv(&fig3));
        out.fig4 = Some(fig4);
    }
    out.fig5 = Some(fig5_csv(&fig5));
    Ok(out)
}

#[cfg(test)]
mod tests;
