//! Pre-training, first-order MAML, the non-episodic baseline and meta-testing.
//!
//! The inner loop adapts a copy Φ of the shared initialization Θ to one
//! language's support set with plain SGD; the outer loop sums the query-set
//! gradients taken at each Φ and applies one Adam step to Θ. Gradients at Φ
//! stand in for gradients through the adaptation (first-order MAML).

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conllu::{split_support, ConlluError, Treebank};
use crate::evaluate::{las, EvalError, EvalReport};
use crate::model::{ModelError, Parser};
use crate::numeric::{adam_step, cosine_warmup_lr, sgd_step, AdamConfig, AdamState, GroupRates, NumericError, ParamGroup, Real, Tensor};
use crate::vocab::EncodedSentence;

/// Share of a language's training sentences that episodes draw support sets from.
pub const SUPPORT_PARTITION: f64 = 0.8;

#[derive(Debug, thiserror::Error)]
pub enum MetaError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Data(#[from] ConlluError),
    #[error("{language}: need {support} support and {query} query sentences, partitions hold {train} and {test}")]
    InsufficientData {
        language: String,
        support: usize,
        query: usize,
        train: usize,
        test: usize,
    },
    #[error("empty treebank")]
    EmptyTreebank,
    #[error("no training languages")]
    NoLanguages,
    #[error("invalid meta-learning configuration: {0}")]
    Config(String),
    #[error("non-finite {0} loss")]
    NonFinite(&'static str),
}

/// A differentiable training objective over some data type.
///
/// Lets the same inner/outer loops drive the parser and small analytic
/// problems.
pub trait Objective {
    type Data: ?Sized;

    /// Loss at `params` and its gradient. `rng` drives stochastic layers.
    fn loss_and_grad(&self, params: &[Tensor], data: &Self::Data, rng: Option<&mut ChaCha8Rng>) -> Result<(Real, Vec<Tensor>), MetaError>;
}

impl Objective for Parser {
    type Data = [EncodedSentence];

    fn loss_and_grad(&self, params: &[Tensor], data: &[EncodedSentence], rng: Option<&mut ChaCha8Rng>) -> Result<(Real, Vec<Tensor>), MetaError> {
        Ok(Parser::loss_and_grad(self, params, data, rng)?)
    }
}

/// `c · ‖θ − a‖²` over a single parameter vector: a task of the
/// shifted-quadratic family used to check the meta-learning loops.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticTask {
    pub target: Vec<Real>,
    pub curvature: Real,
}

/// Objective marker for [`QuadraticTask`] data.
#[derive(Debug, Clone, Copy, Default)]
pub struct Quadratic;

impl QuadraticTask {
    pub fn loss(&self, theta: &[Real]) -> Real {
        self.curvature * theta.iter().zip(&self.target).map(|(t, a)| (t - a).powi(2)).sum::<Real>()
    }
}

impl Objective for Quadratic {
    type Data = QuadraticTask;

    fn loss_and_grad(&self, params: &[Tensor], task: &QuadraticTask, _rng: Option<&mut ChaCha8Rng>) -> Result<(Real, Vec<Tensor>), MetaError> {
        let theta = params[0].data();
        let grad = theta.iter().zip(&task.target).map(|(t, a)| 2.0 * task.curvature * (t - a)).collect();
        Ok((task.loss(theta), vec![Tensor::vector(grad)]))
    }
}

/// Result of adapting Θ to one support set.
#[derive(Debug, Clone)]
pub struct Adapted {
    pub params: Vec<Tensor>,
    /// Support loss before each of the k steps.
    pub losses: Vec<Real>,
}

/// `k` SGD steps from `theta` on the full `support` batch (Φ ← Φ − α∇L).
///
/// `theta` is only read; the result is an independent copy.
pub fn inner_adapt<O: Objective>(
    obj: &O,
    theta: &[Tensor],
    support: &O::Data,
    lrs: &[Real],
    steps: usize,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<Adapted, MetaError> {
    let mut phi = theta.to_vec();
    let mut losses = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (loss, grads) = obj.loss_and_grad(&phi, support, rng.as_deref_mut())?;
        if !loss.is_finite() {
            return Err(MetaError::NonFinite("support"));
        }
        losses.push(loss);
        sgd_step(&mut phi, &grads, lrs)?;
    }
    Ok(Adapted { params: phi, losses })
}

/// Losses seen while computing one outer gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLoss {
    pub language: String,
    /// Fingerprint of the support and query indices.
    pub episode: u64,
    pub support_loss: Real,
    pub query_loss: Real,
}

/// `Σᵢ ∇L_Qᵢ(Φᵢ)` over `(support, query)` pairs, summed in the given order.
pub fn fomaml_gradient<O: Objective>(
    obj: &O,
    theta: &[Tensor],
    episodes: &[(&O::Data, &O::Data)],
    inner_lrs: &[Real],
    steps: usize,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<(Vec<Tensor>, Vec<(Real, Real)>), MetaError> {
    let mut total: Vec<Tensor> = theta.iter().map(|t| Tensor::zeros(t.shape())).collect();
    let mut losses = Vec::with_capacity(episodes.len());
    for (support, query) in episodes {
        let adapted = inner_adapt(obj, theta, *support, inner_lrs, steps, rng.as_deref_mut())?;
        let (q, g) = obj.loss_and_grad(&adapted.params, *query, rng.as_deref_mut())?;
        if !q.is_finite() {
            return Err(MetaError::NonFinite("query"));
        }
        for (acc, gi) in total.iter_mut().zip(&g) {
            acc.add_scaled(gi, 1.0)?;
        }
        losses.push((adapted.losses.first().copied().unwrap_or(q), q));
    }
    Ok((total, losses))
}

/// One outer update: Adam on the summed first-order query gradients.
#[allow(clippy::too_many_arguments)]
pub fn meta_step<O: Objective>(
    obj: &O,
    theta: &mut [Tensor],
    adam: &mut AdamState,
    episodes: &[(&O::Data, &O::Data)],
    inner_lrs: &[Real],
    steps: usize,
    outer_lrs: &[Real],
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Vec<(Real, Real)>, MetaError> {
    let (grad, losses) = fomaml_gradient(obj, theta, episodes, inner_lrs, steps, rng)?;
    adam_step(adam, theta, &grad, outer_lrs)?;
    Ok(losses)
}

/// Deterministic per-language seed derived from a run seed.
pub fn language_seed(seed: u64, language: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325 ^ seed;
    for b in language.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Mixes a run seed with a purpose tag so that independent streams do not
/// share state.
pub fn stream_seed(seed: u64, tag: &str) -> u64 {
    language_seed(seed.rotate_left(17) ^ 0x9e3779b97f4a7c15, tag)
}

/// One task: a language and disjoint support and query sentence indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub language: String,
    pub support: Vec<usize>,
    pub query: Vec<usize>,
}

impl Episode {
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = language_seed(0, &self.language);
        for &i in self.support.iter().chain([usize::MAX].iter()).chain(&self.query) {
            h = (h ^ i as u64).wrapping_mul(0x100000001b3);
        }
        h
    }
}

/// Draws episodes for one language.
///
/// Sentences are split once into a support partition (80%) and a query
/// partition (20%). Within an episode sentences are drawn without
/// replacement; different episodes may repeat sentences.
#[derive(Debug, Clone)]
pub struct EpisodeSampler {
    language: String,
    train: Vec<usize>,
    test: Vec<usize>,
    support_size: usize,
    query_size: usize,
}

impl EpisodeSampler {
    pub fn new(language: &str, n_sentences: usize, support_size: usize, query_size: usize, seed: u64) -> Result<Self, MetaError> {
        let mut idx: Vec<usize> = (0..n_sentences).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(language_seed(seed, language));
        idx.shuffle(&mut rng);
        let cut = (SUPPORT_PARTITION * n_sentences as f64).floor() as usize;
        let (train, test) = (idx[..cut].to_vec(), idx[cut..].to_vec());
        if train.len() < support_size || test.len() < query_size || support_size == 0 || query_size == 0 {
            return Err(MetaError::InsufficientData {
                language: language.to_string(),
                support: support_size,
                query: query_size,
                train: train.len(),
                test: test.len(),
            });
        }
        Ok(EpisodeSampler {
            language: language.to_string(),
            train,
            test,
            support_size,
            query_size,
        })
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn partitions(&self) -> (&[usize], &[usize]) {
        (&self.train, &self.test)
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Episode {
        let s = sample(rng, self.train.len(), self.support_size);
        let q = sample(rng, self.test.len(), self.query_size);
        Episode {
            language: self.language.clone(),
            support: s.iter().map(|i| self.train[i]).collect(),
            query: q.iter().map(|i| self.test[i]).collect(),
        }
    }
}

/// A language's gold treebank with its model-side encoding.
#[derive(Debug, Clone)]
pub struct LanguageData {
    pub treebank: Treebank,
    pub encoded: Vec<EncodedSentence>,
}

impl LanguageData {
    pub fn new(parser: &Parser, treebank: Treebank) -> Self {
        let encoded = parser.encode_treebank(&treebank);
        LanguageData { treebank, encoded }
    }

    pub fn language(&self) -> &str {
        &self.treebank.language
    }

    fn select(&self, idx: &[usize]) -> Vec<EncodedSentence> {
        idx.iter().map(|&i| self.encoded[i].clone()).collect()
    }
}

/// A held-out language: support sentences come from `pool`; scores are
/// computed on `test` when the treebank has a standard split, otherwise on
/// the pool minus the sampled support.
#[derive(Debug, Clone)]
pub struct TestLanguage {
    pub pool: Treebank,
    pub test: Option<Treebank>,
}

impl TestLanguage {
    pub fn language(&self) -> &str {
        &self.pool.language
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: GroupRates,
    pub weight_decay: Real,
    /// Leading epochs during which encoder parameters stay fixed.
    pub frozen_encoder_epochs: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            epochs: 60,
            batch_size: 16,
            lr: GroupRates { encoder: 1e-3, decoder: 2e-3 },
            weight_decay: 0.01,
            frozen_encoder_epochs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaConfig {
    /// α, SGD rate of the inner loop and of meta-testing.
    pub inner_lr: GroupRates,
    /// β, peak Adam rate of the outer loop.
    pub outer_lr: GroupRates,
    /// k
    pub inner_steps: usize,
    pub support_size: usize,
    pub query_size: usize,
    /// Meta-steps; each consumes one episode of every training language.
    pub episodes_per_language: usize,
    pub warmup_frac: Real,
    /// Meta-validation cadence in meta-steps; 0 disables validation.
    pub validation_interval: usize,
    pub validation_support: usize,
    /// Peak Adam rate of the non-episodic baseline.
    pub ne_lr: GroupRates,
    /// Episode multiplier of MAML without pre-training.
    pub no_pretrain_episode_factor: usize,
    pub pretrain: PretrainConfig,
    pub seed: u64,
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig {
            inner_lr: GroupRates { encoder: 1e-3, decoder: 1e-2 },
            outer_lr: GroupRates { encoder: 5e-4, decoder: 1e-3 },
            inner_steps: 8,
            support_size: 20,
            query_size: 20,
            episodes_per_language: 500,
            warmup_frac: 0.1,
            validation_interval: 50,
            validation_support: 20,
            ne_lr: GroupRates { encoder: 5e-4, decoder: 1e-3 },
            no_pretrain_episode_factor: 4,
            pretrain: PretrainConfig::default(),
            seed: 1,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<(), MetaError> {
        let positive = |r: &GroupRates| r.encoder > 0.0 && r.decoder > 0.0;
        if !positive(&self.inner_lr) || !positive(&self.outer_lr) || !positive(&self.ne_lr) {
            return Err(MetaError::Config("learning rates must be positive".into()));
        }
        if self.inner_steps == 0 || self.support_size == 0 || self.query_size == 0 {
            return Err(MetaError::Config("inner_steps, support_size and query_size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.warmup_frac) {
            return Err(MetaError::Config("warmup_frac must lie in [0, 1]".into()));
        }
        if self.pretrain.batch_size == 0 {
            return Err(MetaError::Config("pretrain.batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Learning rate per tensor for the given group rates.
pub fn tensor_rates(parser: &Parser, rates: &GroupRates) -> Vec<Real> {
    rates.per_tensor(parser.params.groups())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainOutcome {
    #[serde(skip)]
    pub params: Vec<Tensor>,
    pub epoch_losses: Vec<Real>,
    /// Largest absolute encoder gradient applied in each epoch.
    pub encoder_grad_max: Vec<Real>,
}

/// Supervised training on one treebank.
///
/// Adam with per-group rates and decoupled weight decay, shuffled
/// mini-batches, encoder frozen for the first epochs. The optimizer state is
/// restarted when the encoder unfreezes.
pub fn pretrain(parser: &Parser, data: &LanguageData, cfg: &PretrainConfig, seed: u64) -> Result<PretrainOutcome, MetaError> {
    if data.encoded.is_empty() {
        return Err(MetaError::EmptyTreebank);
    }
    let mut params = parser.params.tensors().to_vec();
    let groups = parser.params.groups().to_vec();
    let adam_cfg = AdamConfig { weight_decay: cfg.weight_decay, ..AdamConfig::default() };
    let mut adam = AdamState::new(&params, adam_cfg);
    let mut order_rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, "pretrain-order"));
    let mut drop_rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, "pretrain-dropout"));
    let mut order: Vec<usize> = (0..data.encoded.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut encoder_grad_max = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let frozen = epoch < cfg.frozen_encoder_epochs;
        if epoch == cfg.frozen_encoder_epochs && epoch > 0 {
            adam = AdamState::new(&params, adam_cfg);
        }
        let lrs: Vec<Real> = groups
            .iter()
            .map(|&g| if frozen && g == ParamGroup::Encoder { 0.0 } else { cfg.lr.rate(g) })
            .collect();
        order.shuffle(&mut order_rng);
        let (mut loss_sum, mut batches, mut gmax) = (0.0, 0, 0.0 as Real);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.select(chunk);
            let (loss, mut grads) = parser.loss_and_grad(&params, &batch, Some(&mut drop_rng))?;
            for (g, &group) in grads.iter_mut().zip(&groups) {
                if group == ParamGroup::Encoder {
                    if frozen {
                        g.fill(0.0);
                    }
                    gmax = gmax.max(g.max_abs());
                }
            }
            adam_step(&mut adam, &mut params, &grads, &lrs)?;
            loss_sum += loss;
            batches += 1;
        }
        let mean = loss_sum / batches as Real;
        log::info!("pretrain {} epoch {}: loss {:.4}", data.language(), epoch + 1, mean);
        epoch_losses.push(mean);
        encoder_grad_max.push(gmax);
    }
    Ok(PretrainOutcome { params, epoch_losses, encoder_grad_max })
}

/// Telemetry of one meta-training (or NE) step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub outer_lr: GroupRates,
    pub episodes: Vec<EpisodeLoss>,
    pub validation_las: Option<f64>,
}

/// Receives telemetry and periodic snapshots during training.
pub trait Observer {
    fn on_step(&mut self, _record: &StepRecord) {}
    fn on_checkpoint(&mut self, _step: usize, _params: &[Tensor]) {}
}

/// Observer that ignores everything.
pub struct Silent;

impl Observer for Silent {}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the best meta-validation LAS (final parameters when
    /// validation is disabled).
    pub params: Vec<Tensor>,
    pub final_params: Vec<Tensor>,
    pub best_step: usize,
    pub best_validation: Option<f64>,
    pub history: Vec<StepRecord>,
    /// Languages that supplied episodes, in order.
    pub sources: Vec<String>,
}

/// Validation languages plus the settings used to score them.
pub struct Validation<'a> {
    pub languages: &'a [TestLanguage],
    /// Steps between validations; 0 disables.
    pub interval: usize,
    pub support_size: usize,
    pub lr: GroupRates,
    pub steps: usize,
    pub seed: u64,
}

impl Validation<'_> {
    fn enabled(&self) -> bool {
        self.interval > 0 && !self.languages.is_empty()
    }

    fn score(&self, parser: &Parser, params: &[Tensor]) -> Result<f64, MetaError> {
        let mut total = 0.0;
        for lang in self.languages {
            let reports = meta_test(parser, params, lang, self.support_size, &self.lr, self.steps, 1, self.seed, "validation")?;
            total += reports[0].las;
        }
        Ok(total / self.languages.len() as f64)
    }
}

#[derive(Clone, Copy, PartialEq)]
enum UpdateRule {
    Fomaml,
    NonEpisodic,
}

fn train_loop(
    parser: &Parser,
    theta: Vec<Tensor>,
    languages: &[&LanguageData],
    cfg: &MetaConfig,
    total_steps: usize,
    rule: UpdateRule,
    validation: Option<&Validation>,
    checkpoint_interval: usize,
    observer: &mut dyn Observer,
) -> Result<TrainOutcome, MetaError> {
    cfg.validate()?;
    if languages.is_empty() {
        return Err(MetaError::NoLanguages);
    }
    let samplers = languages
        .iter()
        .map(|l| EpisodeSampler::new(l.language(), l.encoded.len(), cfg.support_size, cfg.query_size, cfg.seed))
        .collect::<Result<Vec<_>, _>>()?;
    let mut episode_rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, "episodes"));
    let mut drop_rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, "dropout"));
    let inner = tensor_rates(parser, &cfg.inner_lr);
    let peak = match rule {
        UpdateRule::Fomaml => cfg.outer_lr,
        UpdateRule::NonEpisodic => cfg.ne_lr,
    };
    let mut theta = theta;
    let mut adam = AdamState::new(&theta, AdamConfig::default());
    let mut history = Vec::with_capacity(total_steps);
    let mut best = theta.clone();
    let mut best_step = 0;
    let mut best_validation = None;
    if let Some(v) = validation.filter(|v| v.enabled()) {
        let las = v.score(parser, &theta)?;
        log::info!("validation at step 0: LAS {las:.2}");
        best_validation = Some(las);
    }
    for step in 0..total_steps {
        let factor = cosine_warmup_lr(step, total_steps, cfg.warmup_frac, 1.0);
        let rates = peak.scaled(factor);
        let lrs = tensor_rates(parser, &rates);
        let episodes: Vec<Episode> = samplers.iter().map(|s| s.sample(&mut episode_rng)).collect();
        let batches: Vec<(Vec<EncodedSentence>, Vec<EncodedSentence>)> = episodes
            .iter()
            .zip(languages)
            .map(|(e, l)| (l.select(&e.support), l.select(&e.query)))
            .collect();
        let mut losses = Vec::with_capacity(episodes.len());
        match rule {
            UpdateRule::Fomaml => {
                let pairs: Vec<(&[EncodedSentence], &[EncodedSentence])> = batches.iter().map(|(s, q)| (s.as_slice(), q.as_slice())).collect();
                let l = meta_step(parser, &mut theta, &mut adam, &pairs, &inner, cfg.inner_steps, &lrs, Some(&mut drop_rng))?;
                losses.extend(l);
            }
            UpdateRule::NonEpisodic => {
                for (s, q) in &batches {
                    let (ls, gs) = parser.loss_and_grad(&theta, s, Some(&mut drop_rng))?;
                    adam_step(&mut adam, &mut theta, &gs, &lrs)?;
                    let (lq, gq) = parser.loss_and_grad(&theta, q, Some(&mut drop_rng))?;
                    adam_step(&mut adam, &mut theta, &gq, &lrs)?;
                    losses.push((ls, lq));
                }
            }
        }
        let mut record = StepRecord {
            step: step + 1,
            outer_lr: rates,
            episodes: episodes
                .iter()
                .zip(&losses)
                .map(|(e, &(s, q))| EpisodeLoss {
                    language: e.language.clone(),
                    episode: e.fingerprint(),
                    support_loss: s,
                    query_loss: q,
                })
                .collect(),
            validation_las: None,
        };
        if let Some(v) = validation.filter(|v| v.enabled() && (step + 1) % v.interval == 0) {
            let las = v.score(parser, &theta)?;
            log::info!("validation at step {}: LAS {las:.2}", step + 1);
            record.validation_las = Some(las);
            if best_validation.map_or(true, |b| las > b) {
                best_validation = Some(las);
                best = theta.clone();
                best_step = step + 1;
            }
        }
        if checkpoint_interval > 0 && (step + 1) % checkpoint_interval == 0 {
            observer.on_checkpoint(step + 1, &theta);
        }
        observer.on_step(&record);
        history.push(record);
    }
    let validated = validation.is_some_and(|v| v.enabled());
    Ok(TrainOutcome {
        params: if validated { best } else { theta.clone() },
        best_step: if validated { best_step } else { total_steps },
        final_params: theta,
        best_validation,
        history,
        sources: languages.iter().map(|l| l.language().to_string()).collect(),
    })
}

/// Episodic first-order MAML from `theta`.
pub fn meta_train(
    parser: &Parser,
    theta: Vec<Tensor>,
    languages: &[&LanguageData],
    cfg: &MetaConfig,
    validation: Option<&Validation>,
    checkpoint_interval: usize,
    observer: &mut dyn Observer,
) -> Result<TrainOutcome, MetaError> {
    train_loop(parser, theta, languages, cfg, cfg.episodes_per_language, UpdateRule::Fomaml, validation, checkpoint_interval, observer)
}

/// Non-episodic baseline: the episode stream of [`meta_train`] used as plain
/// mini-batches, one Adam update per support set and per query set.
pub fn non_episodic_train(
    parser: &Parser,
    theta: Vec<Tensor>,
    languages: &[&LanguageData],
    cfg: &MetaConfig,
    validation: Option<&Validation>,
    checkpoint_interval: usize,
    observer: &mut dyn Observer,
) -> Result<TrainOutcome, MetaError> {
    train_loop(parser, theta, languages, cfg, cfg.episodes_per_language, UpdateRule::NonEpisodic, validation, checkpoint_interval, observer)
}

/// MAML from the parser's own (untrained) initialization, with the
/// pre-training language added to the sources and proportionally more steps.
pub fn maml_without_pretraining(
    parser: &Parser,
    pretrain_language: &LanguageData,
    languages: &[&LanguageData],
    cfg: &MetaConfig,
    validation: Option<&Validation>,
    checkpoint_interval: usize,
    observer: &mut dyn Observer,
) -> Result<TrainOutcome, MetaError> {
    let mut sources: Vec<&LanguageData> = vec![pretrain_language];
    sources.extend_from_slice(languages);
    let steps = cfg.episodes_per_language * cfg.no_pretrain_episode_factor.max(1);
    train_loop(parser, parser.params.tensors().to_vec(), &sources, cfg, steps, UpdateRule::Fomaml, validation, checkpoint_interval, observer)
}

/// Seed of one meta-test repetition.
pub fn repetition_seed(target: &TestLanguage, support_size: usize, seed: u64, repetition: usize) -> u64 {
    stream_seed(seed, &format!("{}/{support_size}/{repetition}", target.language()))
}

/// Support set and scored set of one meta-test repetition. Without a
/// standard test split the support sentences are removed from the pool
/// before scoring.
pub fn meta_test_split(target: &TestLanguage, support_size: usize, rep_seed: u64) -> Result<(Treebank, Treebank), MetaError> {
    let (support, rest) = if support_size == 0 {
        (target.pool.with_sentences(Vec::new()), target.pool.clone())
    } else {
        split_support(&target.pool, support_size, rep_seed)?
    };
    Ok(match &target.test {
        Some(test) => (support, test.clone()),
        None => (support, rest),
    })
}

/// Few-shot fine-tuning on a sampled support set followed by evaluation,
/// repeated `repetitions` times. `theta` is never modified.
///
/// With `support_size == 0` no fine-tuning happens.
#[allow(clippy::too_many_arguments)]
pub fn meta_test(
    parser: &Parser,
    theta: &[Tensor],
    target: &TestLanguage,
    support_size: usize,
    lr: &GroupRates,
    steps: usize,
    repetitions: usize,
    seed: u64,
    model: &str,
) -> Result<Vec<EvalReport>, MetaError> {
    let lrs = tensor_rates(parser, lr);
    let mut reports = Vec::with_capacity(repetitions);
    for rep in 0..repetitions {
        let rep_seed = repetition_seed(target, support_size, seed, rep);
        let (support, scored) = meta_test_split(target, support_size, rep_seed)?;
        if scored.is_empty() {
            return Err(MetaError::EmptyTreebank);
        }
        let adapted = if support_size == 0 {
            theta.to_vec()
        } else {
            let enc = parser.encode_treebank(&support);
            let mut rng = ChaCha8Rng::seed_from_u64(rep_seed);
            inner_adapt(parser, theta, enc.as_slice(), &lrs, steps, Some(&mut rng))?.params
        };
        let pred = parser.predict_treebank(&adapted, &scored)?;
        let score = las(&scored, &pred)?;
        reports.push(EvalReport {
            language: target.language().to_string(),
            model: model.to_string(),
            support_size,
            repetition: rep,
            seed,
            las: score.las,
            uas: score.uas,
            per_relation: score.per_relation,
        });
    }
    Ok(reports)
}

/// Meta-testing of a randomly initialized parser: no pre-training and no
/// meta-training, only the few-shot fine-tuning.
#[allow(clippy::too_many_arguments)]
pub fn meta_test_only(
    untrained: &Parser,
    target: &TestLanguage,
    support_size: usize,
    lr: &GroupRates,
    steps: usize,
    repetitions: usize,
    seed: u64,
    model: &str,
) -> Result<Vec<EvalReport>, MetaError> {
    meta_test(untrained, untrained.params.tensors(), target, support_size, lr, steps, repetitions, seed, model)
}
