//! Graph-based biaffine dependency parser over a small stacked encoder.
//!
//! Token representations are a learned mixture of every encoder layer,
//! `e = η · Σᵢ softmax(γ)ᵢ Bᵢ`, with the embedding layer as `B₀`. A learned
//! ROOT vector is prepended before the arc and label scorers.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conllu::{Sentence, TreeError, Treebank};
use crate::decoder::{chu_liu_edmonds, DecodeError, ScoreMatrix};
use crate::numeric::{NumericError, ParamGroup, ParamSet, Real, Tape, Tensor, Var};
use crate::vocab::{EncodedSentence, Vocabulary};

pub const CHECKPOINT_FORMAT: &str = "udmeta-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("empty sentence")]
    EmptySentence,
    #[error("head {head} out of range for a sentence of {len} words")]
    InvalidHead { head: usize, len: usize },
    #[error("invalid predicted tree: {0}")]
    Tree(#[from] TreeError),
    #[error("configuration hash mismatch: checkpoint has {found}, expected {expected}")]
    ConfigHash { expected: String, found: String },
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    /// `h + tanh(softmax(QKᵀ/√d) V)`
    Attention,
    /// `h + tanh(hW₁ + b₁) ⊙ σ(hW₂ + b₂)`
    FeedForward,
}

/// Architecture and input-processing settings; everything that determines
/// parameter shapes apart from vocabulary sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub d_arc: usize,
    pub d_tag: usize,
    pub layers: Vec<LayerKind>,
    pub max_positions: usize,
    pub piece_len: usize,
    pub min_freq: usize,
    pub embedding_dropout: Real,
    pub hidden_dropout: Real,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 64,
            d_arc: 64,
            d_tag: 32,
            layers: vec![LayerKind::Attention, LayerKind::FeedForward, LayerKind::Attention],
            max_positions: 128,
            piece_len: 3,
            min_freq: 2,
            embedding_dropout: 0.2,
            hidden_dropout: 0.33,
            init_seed: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.d_model == 0 || self.d_arc == 0 || self.d_tag == 0 {
            return Err("dimensions must be positive".into());
        }
        if self.max_positions == 0 || self.piece_len == 0 {
            return Err("max_positions and piece_len must be positive".into());
        }
        for p in [self.embedding_dropout, self.hidden_dropout] {
            if !(0.0..1.0).contains(&p) {
                return Err(format!("dropout rate {p} outside [0, 1)"));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[derive(Clone, Debug, PartialEq)]
enum LayerParams {
    Attention { q: usize, k: usize, v: usize },
    FeedForward { w1: usize, b1: usize, w2: usize, b2: usize },
}

#[derive(Clone, Debug, PartialEq)]
struct Layout {
    word_emb: usize,
    piece_emb: usize,
    pos_emb: usize,
    layers: Vec<LayerParams>,
    gamma: usize,
    eta: usize,
    root: usize,
    arc_head_w: usize,
    arc_head_b: usize,
    arc_dep_w: usize,
    arc_dep_b: usize,
    arc_u: usize,
    arc_head_bias: usize,
    lab_head_w: usize,
    lab_head_b: usize,
    lab_dep_w: usize,
    lab_dep_b: usize,
    lab_u: usize,
    lab_wh: usize,
    lab_wd: usize,
    lab_b: usize,
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], bound: Real) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for x in t.data_mut() {
        *x = rng.gen_range(-bound..bound);
    }
    t
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    uniform(rng, &[rows, cols], (6.0 / (rows + cols) as Real).sqrt())
}

/// Builds the parameter table. Returns the set and the index layout.
fn init_params(cfg: &ModelConfig, vocab: &Vocabulary) -> (ParamSet, Layout) {
    use ParamGroup::{Decoder, Encoder};
    let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(cfg.init_seed);
    let (d, a, t, k) = (cfg.d_model, cfg.d_arc, cfg.d_tag, vocab.labels.len().max(1));
    let mut p = ParamSet::new();
    let word_emb = p.push("word_emb", Encoder, uniform(&mut rng, &[vocab.words.len(), d], 0.1));
    let piece_emb = p.push("piece_emb", Encoder, uniform(&mut rng, &[vocab.pieces.len(), d], 0.1));
    let pos_emb = p.push("pos_emb", Encoder, uniform(&mut rng, &[cfg.max_positions, d], 0.1));
    let mut layers = Vec::new();
    for (i, kind) in cfg.layers.iter().enumerate() {
        layers.push(match kind {
            LayerKind::Attention => LayerParams::Attention {
                q: p.push(&format!("layer{i}.q"), Encoder, glorot(&mut rng, d, d)),
                k: p.push(&format!("layer{i}.k"), Encoder, glorot(&mut rng, d, d)),
                v: p.push(&format!("layer{i}.v"), Encoder, glorot(&mut rng, d, d)),
            },
            LayerKind::FeedForward => LayerParams::FeedForward {
                w1: p.push(&format!("layer{i}.w1"), Encoder, glorot(&mut rng, d, d)),
                b1: p.push(&format!("layer{i}.b1"), Encoder, Tensor::zeros(&[d])),
                w2: p.push(&format!("layer{i}.w2"), Encoder, glorot(&mut rng, d, d)),
                b2: p.push(&format!("layer{i}.b2"), Encoder, Tensor::zeros(&[d])),
            },
        });
    }
    let layout = Layout {
        word_emb,
        piece_emb,
        pos_emb,
        layers,
        gamma: p.push("gamma", Decoder, Tensor::zeros(&[cfg.layers.len() + 1])),
        eta: p.push("eta", Decoder, Tensor::vector(vec![1.0])),
        root: p.push("root", Decoder, uniform(&mut rng, &[1, d], 0.1)),
        arc_head_w: p.push("arc_head_w", Decoder, glorot(&mut rng, d, a)),
        arc_head_b: p.push("arc_head_b", Decoder, Tensor::zeros(&[a])),
        arc_dep_w: p.push("arc_dep_w", Decoder, glorot(&mut rng, d, a)),
        arc_dep_b: p.push("arc_dep_b", Decoder, Tensor::zeros(&[a])),
        arc_u: p.push("arc_u", Decoder, glorot(&mut rng, a, a)),
        arc_head_bias: p.push("arc_head_bias", Decoder, Tensor::zeros(&[a, 1])),
        lab_head_w: p.push("lab_head_w", Decoder, glorot(&mut rng, d, t)),
        lab_head_b: p.push("lab_head_b", Decoder, Tensor::zeros(&[t])),
        lab_dep_w: p.push("lab_dep_w", Decoder, glorot(&mut rng, d, t)),
        lab_dep_b: p.push("lab_dep_b", Decoder, Tensor::zeros(&[t])),
        lab_u: p.push("lab_u", Decoder, uniform(&mut rng, &[t, k * t], (3.0 / t as Real).sqrt() * 0.5)),
        lab_wh: p.push("lab_wh", Decoder, glorot(&mut rng, t, k)),
        lab_wd: p.push("lab_wd", Decoder, glorot(&mut rng, t, k)),
        lab_b: p.push("lab_b", Decoder, Tensor::zeros(&[k])),
    };
    (p, layout)
}

/// Rebuilds the layout of a parameter set by name, checking shapes.
fn layout_from_names(cfg: &ModelConfig, vocab: &Vocabulary, params: &ParamSet) -> Result<Layout, ModelError> {
    let (reference, layout) = init_params(cfg, vocab);
    if reference.names() != params.names() || reference.groups() != params.groups() {
        return Err(ModelError::Checkpoint("parameter names do not match the configuration".into()));
    }
    for (name, (a, b)) in params.names().iter().zip(reference.tensors().iter().zip(params.tensors())) {
        if a.shape() != b.shape() || b.data().len() != b.shape().iter().product::<usize>() {
            return Err(ModelError::Checkpoint(format!("tensor {name} has shape {:?}, expected {:?}", b.shape(), a.shape())));
        }
    }
    if !params.all_finite() {
        return Err(ModelError::Checkpoint("non-finite parameter values".into()));
    }
    Ok(layout)
}

fn dropout_mask(rng: &mut ChaCha8Rng, rows: usize, cols: usize, p: Real) -> Tensor {
    let keep = 1.0 / (1.0 - p);
    let mut t = Tensor::zeros(&[rows, cols]);
    for x in t.data_mut() {
        *x = if rng.gen::<Real>() < p { 0.0 } else { keep };
    }
    t
}

/// The parser: configuration, vocabulary, parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Parser {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: ParamSet,
    layout: Layout,
}

/// Per-token label predictions and log-probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub heads: Vec<usize>,
    pub labels: Vec<usize>,
}

struct Forward {
    /// ROOT followed by token representations, `[n + 1, d]`.
    rep: Var,
    n: usize,
}

impl Parser {
    pub fn new(config: ModelConfig, vocab: Vocabulary) -> Result<Self, ModelError> {
        config.validate().map_err(ModelError::Config)?;
        let (params, layout) = init_params(&config, &vocab);
        Ok(Parser { config, vocab, params, layout })
    }

    /// Replaces all parameter values; shapes must match.
    pub fn set_tensors(&mut self, tensors: Vec<Tensor>) -> Result<(), ModelError> {
        if tensors.len() != self.params.len() || tensors.iter().zip(self.params.tensors()).any(|(a, b)| !a.same_shape(b)) {
            return Err(ModelError::Checkpoint("parameter shapes do not match the model".into()));
        }
        for (dst, src) in self.params.tensors_mut().iter_mut().zip(tensors) {
            *dst = src;
        }
        Ok(())
    }

    pub fn n_labels(&self) -> usize {
        self.vocab.labels.len().max(1)
    }

    pub fn encode_sentence(&self, s: &Sentence, tb: &Treebank) -> EncodedSentence {
        self.vocab.encode(s, &tb.labels)
    }

    pub fn encode_treebank(&self, tb: &Treebank) -> Vec<EncodedSentence> {
        self.vocab.encode_treebank(tb)
    }

    fn drop(&self, tape: &mut Tape, x: Var, p: Real, rng: &mut Option<&mut ChaCha8Rng>) -> Result<Var, ModelError> {
        match rng {
            Some(r) if p > 0.0 => {
                let (rows, cols) = (tape.value(x).rows(), tape.value(x).cols());
                Ok(tape.apply_mask(x, dropout_mask(r, rows, cols, p))?)
            }
            _ => Ok(x),
        }
    }

    /// Encoder, layer mixing and ROOT; records on `tape`.
    fn forward(&self, tape: &mut Tape, s: &EncodedSentence, rng: &mut Option<&mut ChaCha8Rng>) -> Result<Forward, ModelError> {
        let n = s.len();
        if n == 0 {
            return Err(ModelError::EmptySentence);
        }
        let l = &self.layout;
        let d = self.config.d_model;
        let positions: Vec<usize> = (0..n).map(|i| i.min(self.config.max_positions - 1)).collect();
        let we = tape.param(l.word_emb);
        let pe = tape.param(l.piece_emb);
        let po = tape.param(l.pos_emb);
        let w = tape.gather_rows(we, &s.words)?;
        let p = tape.gather_rows(pe, &s.pieces)?;
        let q = tape.gather_rows(po, &positions)?;
        let x = tape.add(w, p)?;
        let x = tape.add(x, q)?;
        let mut h = self.drop(tape, x, self.config.embedding_dropout, rng)?;
        let mut outputs = vec![h];
        let scale = 1.0 / (d as Real).sqrt();
        for layer in &l.layers {
            let branch = match *layer {
                LayerParams::Attention { q, k, v } => {
                    let (wq, wk, wv) = (tape.param(q), tape.param(k), tape.param(v));
                    let qh = tape.matmul(h, wq)?;
                    let kh = tape.matmul(h, wk)?;
                    let vh = tape.matmul(h, wv)?;
                    let kt = tape.transpose(kh)?;
                    let logits = tape.matmul(qh, kt)?;
                    let logits = tape.scale(logits, scale)?;
                    let att = tape.softmax(logits, 1)?;
                    let ctx = tape.matmul(att, vh)?;
                    tape.tanh(ctx)?
                }
                LayerParams::FeedForward { w1, b1, w2, b2 } => {
                    let (w1, b1, w2, b2) = (tape.param(w1), tape.param(b1), tape.param(w2), tape.param(b2));
                    let a = tape.matmul(h, w1)?;
                    let a = tape.add_row(a, b1)?;
                    let a = tape.tanh(a)?;
                    let g = tape.matmul(h, w2)?;
                    let g = tape.add_row(g, b2)?;
                    let g = tape.sigmoid(g)?;
                    tape.mul(a, g)?
                }
            };
            let branch = self.drop(tape, branch, self.config.hidden_dropout, rng)?;
            h = tape.add(h, branch)?;
            outputs.push(h);
        }
        let gamma = tape.param(l.gamma);
        let weights = tape.softmax(gamma, 0)?;
        let mut mix = tape.scale_by(outputs[0], weights, 0)?;
        for (i, &b) in outputs.iter().enumerate().skip(1) {
            let term = tape.scale_by(b, weights, i)?;
            mix = tape.add(mix, term)?;
        }
        let eta = tape.param(l.eta);
        let e = tape.scale_by(mix, eta, 0)?;
        let root = tape.param(l.root);
        let rep = tape.concat_rows(root, e)?;
        Ok(Forward { rep, n })
    }

    fn project(&self, tape: &mut Tape, x: Var, w: usize, b: usize, rng: &mut Option<&mut ChaCha8Rng>) -> Result<Var, ModelError> {
        let (w, b) = (tape.param(w), tape.param(b));
        let y = tape.matmul(x, w)?;
        let y = tape.add_row(y, b)?;
        let y = tape.tanh(y)?;
        self.drop(tape, y, self.config.hidden_dropout, rng)
    }

    /// Arc scores `S[h, d]`, `[n + 1, n + 1]`, before masking.
    fn arc_scores_var(&self, tape: &mut Tape, f: &Forward, rng: &mut Option<&mut ChaCha8Rng>) -> Result<Var, ModelError> {
        let l = &self.layout;
        let hh = self.project(tape, f.rep, l.arc_head_w, l.arc_head_b, rng)?;
        let hd = self.project(tape, f.rep, l.arc_dep_w, l.arc_dep_b, rng)?;
        let u = tape.param(l.arc_u);
        let hu = tape.matmul(hh, u)?;
        let hdt = tape.transpose(hd)?;
        let s = tape.matmul(hu, hdt)?;
        let hb = tape.param(l.arc_head_bias);
        let head_bias = tape.matmul(hh, hb)?;
        Ok(tape.add_col(s, head_bias)?)
    }

    /// Unnormalized label scores `[n, K]` for the given heads.
    fn label_scores_var(&self, tape: &mut Tape, f: &Forward, heads: &[usize], rng: &mut Option<&mut ChaCha8Rng>) -> Result<Var, ModelError> {
        if heads.len() != f.n {
            return Err(ModelError::InvalidHead { head: heads.len(), len: f.n });
        }
        if let Some(&h) = heads.iter().find(|&&h| h > f.n) {
            return Err(ModelError::InvalidHead { head: h, len: f.n });
        }
        let l = &self.layout;
        let lh = self.project(tape, f.rep, l.lab_head_w, l.lab_head_b, rng)?;
        let deps = tape.slice_rows(f.rep, 1, f.n + 1)?;
        let ld = self.project(tape, deps, l.lab_dep_w, l.lab_dep_b, rng)?;
        let hsel = tape.gather_rows(lh, heads)?;
        let u = tape.param(l.lab_u);
        let p = tape.matmul(hsel, u)?;
        let bil = tape.grouped_dot(p, ld)?;
        let wh = tape.param(l.lab_wh);
        let wd = tape.param(l.lab_wd);
        let a = tape.matmul(hsel, wh)?;
        let b = tape.matmul(ld, wd)?;
        let s = tape.add(bil, a)?;
        let s = tape.add(s, b)?;
        let bias = tape.param(l.lab_b);
        Ok(tape.add_row(s, bias)?)
    }

    /// Sentence loss: arc NLL over candidate heads plus label NLL given gold heads.
    fn loss_var(&self, tape: &mut Tape, s: &EncodedSentence, rng: &mut Option<&mut ChaCha8Rng>) -> Result<Var, ModelError> {
        let f = self.forward(tape, s, rng)?;
        let n = f.n;
        if let Some(&h) = s.heads.iter().find(|&&h| h > n) {
            return Err(ModelError::InvalidHead { head: h, len: n });
        }
        let arcs = self.arc_scores_var(tape, &f, rng)?;
        // rows = dependents, columns = candidate heads
        let by_dep = tape.transpose(arcs)?;
        let m = n + 1;
        let mut allowed = vec![false; m * m];
        for dep in 1..m {
            for head in 0..m {
                allowed[dep * m + head] = head != dep;
            }
        }
        let mut targets = vec![None];
        targets.extend(s.heads.iter().map(|&h| Some(h)));
        let arc_loss = tape.masked_nll(by_dep, allowed, targets)?;
        let labels = self.label_scores_var(tape, &f, &s.heads, rng)?;
        let k = tape.value(labels).cols();
        let lab_loss = tape.masked_nll(labels, vec![true; n * k], s.labels.clone())?;
        Ok(tape.add(arc_loss, lab_loss)?)
    }

    /// Summed loss of one sentence under `params`.
    pub fn sentence_loss(&self, params: &[Tensor], s: &EncodedSentence, rng: Option<&mut ChaCha8Rng>) -> Result<Real, ModelError> {
        let mut tape = Tape::with_params(params);
        let mut rng = rng;
        let loss = self.loss_var(&mut tape, s, &mut rng)?;
        Ok(tape.value(loss).item()?)
    }

    /// Token-averaged loss of a batch and its gradient, both under `params`.
    ///
    /// Dropout is active when `rng` is given.
    pub fn loss_and_grad(&self, params: &[Tensor], batch: &[EncodedSentence], rng: Option<&mut ChaCha8Rng>) -> Result<(Real, Vec<Tensor>), ModelError> {
        let mut grads: Vec<Tensor> = params.iter().map(|t| Tensor::zeros(t.shape())).collect();
        let mut rng = rng;
        let mut total = 0.0;
        let mut tokens = 0usize;
        for s in batch {
            let mut tape = Tape::with_params(params);
            let loss = self.loss_var(&mut tape, s, &mut rng)?;
            total += tape.value(loss).item()?;
            tape.backward_into(loss, &mut grads)?;
            tokens += s.len();
        }
        if tokens == 0 {
            return Ok((0.0, grads));
        }
        let inv = 1.0 / tokens as Real;
        for g in &mut grads {
            for x in g.data_mut() {
                *x *= inv;
            }
        }
        let loss = total * inv;
        if !loss.is_finite() {
            return Err(NumericError::NonFinite("loss").into());
        }
        Ok((loss, grads))
    }

    /// Token-averaged loss without gradients or dropout.
    pub fn batch_loss(&self, params: &[Tensor], batch: &[EncodedSentence]) -> Result<Real, ModelError> {
        let mut total = 0.0;
        let mut tokens = 0;
        for s in batch {
            total += self.sentence_loss(params, s, None)?;
            tokens += s.len();
        }
        Ok(if tokens == 0 { 0.0 } else { total / tokens as Real })
    }

    /// Mixing weights `softmax(γ)` of the current parameters.
    pub fn mixing_weights(&self) -> Vec<Real> {
        let g = self.params.get(self.layout.gamma).data();
        let m = g.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
        let ex: Vec<Real> = g.iter().map(|x| (x - m).exp()).collect();
        let z: Real = ex.iter().sum();
        ex.iter().map(|x| x / z).collect()
    }

    /// Contextual embeddings `e`, `[n, d]`, without dropout.
    pub fn encode(&self, params: &[Tensor], s: &EncodedSentence) -> Result<Tensor, ModelError> {
        let mut tape = Tape::with_params(params);
        let f = self.forward(&mut tape, s, &mut None)?;
        let e = tape.slice_rows(f.rep, 1, f.n + 1)?;
        Ok(tape.value(e).clone())
    }

    /// Masked arc scores.
    pub fn score_arcs(&self, params: &[Tensor], s: &EncodedSentence) -> Result<ScoreMatrix, ModelError> {
        let mut tape = Tape::with_params(params);
        let f = self.forward(&mut tape, s, &mut None)?;
        let arcs = self.arc_scores_var(&mut tape, &f, &mut None)?;
        Ok(ScoreMatrix::new(f.n, tape.value(arcs).data().to_vec())?)
    }

    /// Per-token label log-probabilities `[n, K]` given heads.
    pub fn score_labels(&self, params: &[Tensor], s: &EncodedSentence, heads: &[usize]) -> Result<Tensor, ModelError> {
        let mut tape = Tape::with_params(params);
        let f = self.forward(&mut tape, s, &mut None)?;
        let scores = self.label_scores_var(&mut tape, &f, heads, &mut None)?;
        let lp = tape.log_softmax(scores)?;
        Ok(tape.value(lp).clone())
    }

    /// Chu-Liu/Edmonds heads, then the best label per token given its head.
    pub fn predict(&self, params: &[Tensor], s: &EncodedSentence) -> Result<Prediction, ModelError> {
        let mut tape = Tape::with_params(params);
        let f = self.forward(&mut tape, s, &mut None)?;
        let arcs = self.arc_scores_var(&mut tape, &f, &mut None)?;
        let m = ScoreMatrix::new(f.n, tape.value(arcs).data().to_vec())?;
        let heads = chu_liu_edmonds(&m)?.0;
        let scores = self.label_scores_var(&mut tape, &f, &heads, &mut None)?;
        let labels = argmax_rows(tape.value(scores));
        Ok(Prediction { heads, labels })
    }

    /// Parses every sentence of `tb` on its gold tokenization.
    ///
    /// The result keeps the input's comments and extra columns; its label
    /// vocabulary extends the input's with any model labels it lacked.
    pub fn predict_treebank(&self, params: &[Tensor], tb: &Treebank) -> Result<Treebank, ModelError> {
        let mut labels = tb.labels.clone();
        let ids: Vec<u32> = self.vocab.labels.labels().iter().map(|l| labels.intern(l)).collect();
        let mut sentences = Vec::with_capacity(tb.len());
        for s in &tb.sentences {
            let enc = self.vocab.encode(s, &tb.labels);
            let p = self.predict(params, &enc)?;
            let lab: Vec<u32> = p.labels.iter().map(|&k| ids.get(k).copied().unwrap_or(0)).collect();
            sentences.push(s.with_analysis(&p.heads, &lab, &labels)?);
        }
        let mut out = tb.with_sentences(sentences);
        out.labels = labels;
        Ok(out)
    }

    /// Writes the JSON checkpoint container.
    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config_hash: self.config.hash(),
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            params: self.params.clone(),
        };
        std::fs::write(path, serde_json::to_vec(&ck)?)?;
        Ok(())
    }

    /// Reads a checkpoint; when `expected_hash` is given it must match.
    pub fn load(path: &Path, expected_hash: Option<&str>) -> Result<Parser, ModelError> {
        let bytes = std::fs::read(path)?;
        let ck: Checkpoint = serde_json::from_slice(&bytes)?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!("unsupported container {} v{}", ck.format, ck.version)));
        }
        let actual = ck.config.hash();
        if actual != ck.config_hash {
            return Err(ModelError::ConfigHash { expected: actual, found: ck.config_hash });
        }
        if let Some(exp) = expected_hash {
            if exp != ck.config_hash {
                return Err(ModelError::ConfigHash { expected: exp.to_string(), found: ck.config_hash });
            }
        }
        let mut vocab = ck.vocab;
        vocab.reindex();
        ck.config.validate().map_err(ModelError::Config)?;
        let layout = layout_from_names(&ck.config, &vocab, &ck.params)?;
        Ok(Parser {
            config: ck.config,
            vocab,
            params: ck.params,
            layout,
        })
    }
}

/// Index of the maximum of each row; the lowest index wins ties.
pub fn argmax_rows(t: &Tensor) -> Vec<usize> {
    (0..t.rows())
        .map(|r| {
            let row = t.row(r);
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    config_hash: String,
    config: ModelConfig,
    vocab: Vocabulary,
    params: ParamSet,
}

// written against 64-bit tolerances
#[cfg(all(test, not(feature = "f32")))]
mod tests;
