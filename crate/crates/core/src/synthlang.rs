//! Seeded generator of synthetic dependency treebanks with controllable word
//! order, non-projectivity and vocabulary overlap.
//!
//! Every word belongs to a category that is marked by a three-letter prefix
//! shared by all languages; stems are language specific except for a
//! configurable fraction of shared cognates. Trees are grown top-down under
//! category constraints, linearized projectively from per-label head
//! directions, and optionally receive one re-attachment that makes them
//! non-projective.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conllu::{heads_projective, LabelVocab, Sentence, Token, Treebank};
use crate::meta::{language_seed, stream_seed};
use crate::typology::TypologyVector;

/// The fixed relation inventory, ordered by how close a dependent sits to
/// its head when several fall on the same side (first is farthest).
pub const RELATIONS: [&str; 12] = ["advcl", "mark", "nsubj", "iobj", "obj", "obl", "advmod", "aux", "nmod", "amod", "det", "case"];

/// Attempts at finding a crossing re-attachment before a sentence is left projective.
pub const MAX_REWRITE_ATTEMPTS: usize = 200;

const COGNATE_SEED: u64 = 0x5eed_c09a;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Category {
    Verb,
    Noun,
    Adj,
    Adv,
    Aux,
    Sconj,
    Det,
    Adp,
}

const CATEGORIES: [Category; 8] = [
    Category::Verb,
    Category::Noun,
    Category::Adj,
    Category::Adv,
    Category::Aux,
    Category::Sconj,
    Category::Det,
    Category::Adp,
];

impl Category {
    fn marker(self) -> &'static str {
        match self {
            Category::Verb => "vor",
            Category::Noun => "nam",
            Category::Adj => "qal",
            Category::Adv => "wes",
            Category::Aux => "hul",
            Category::Sconj => "zib",
            Category::Det => "dex",
            Category::Adp => "pun",
        }
    }

    fn index(self) -> usize {
        CATEGORIES.iter().position(|&c| c == self).unwrap()
    }
}

/// (dependent category, head category) of a relation.
fn relation_categories(label: &str) -> (Category, Category) {
    use Category::*;
    match label {
        "nsubj" | "obj" | "iobj" | "obl" => (Noun, Verb),
        "advmod" => (Adv, Verb),
        "aux" => (Aux, Verb),
        "mark" => (Sconj, Verb),
        "advcl" => (Verb, Verb),
        "nmod" => (Noun, Noun),
        "amod" => (Adj, Noun),
        "det" => (Det, Noun),
        "case" => (Adp, Noun),
        other => unreachable!("{other} is not in the inventory"),
    }
}

fn rank(label: &str) -> usize {
    RELATIONS.iter().position(|&r| r == label).unwrap()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid grammar {language}: {reason}")]
    Invalid { language: String, reason: String },
    #[error("grammar file: {0}")]
    Toml(String),
}

fn default_vocab_size() -> usize {
    400
}
fn default_labels() -> Vec<String> {
    RELATIONS.iter().map(|s| s.to_string()).collect()
}
fn default_branching() -> Vec<f64> {
    vec![1.0, 1.0, 0.7, 0.3]
}
fn default_min_len() -> usize {
    4
}
fn default_max_len() -> usize {
    15
}

/// One synthetic language.
///
/// `head_initial[label]` is P(head precedes dependent); labels without an
/// entry default to 0.5. `branching[k]` is the relative weight of a node
/// with `k` dependents receiving another one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrammarSpec {
    pub language: String,
    #[serde(default = "default_vocab_size")]
    pub vocab_size: usize,
    #[serde(default = "default_labels")]
    pub labels: Vec<String>,
    #[serde(default)]
    pub head_initial: BTreeMap<String, f64>,
    #[serde(default = "default_branching")]
    pub branching: Vec<f64>,
    #[serde(default = "default_min_len")]
    pub min_len: usize,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    #[serde(default)]
    pub nonproj_rate: f64,
    #[serde(default)]
    pub shared_cognates: f64,
    #[serde(default)]
    pub lexical_seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GrammarFile {
    language: Vec<GrammarSpec>,
}

/// Reads `[[language]]` tables from TOML and validates each.
pub fn parse_grammars(text: &str) -> Result<Vec<GrammarSpec>, SynthError> {
    let file: GrammarFile = toml::from_str(text).map_err(|e| SynthError::Toml(e.to_string()))?;
    for g in &file.language {
        g.validate()?;
    }
    Ok(file.language)
}

impl GrammarSpec {
    /// All labels present, every direction set to `p`.
    pub fn uniform(language: &str, p: f64) -> GrammarSpec {
        GrammarSpec {
            language: language.to_string(),
            vocab_size: default_vocab_size(),
            labels: default_labels(),
            head_initial: RELATIONS.iter().map(|r| (r.to_string(), p)).collect(),
            branching: default_branching(),
            min_len: default_min_len(),
            max_len: default_max_len(),
            nonproj_rate: 0.0,
            shared_cognates: 0.0,
            lexical_seed: language_seed(0, language),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |reason: String| Err(SynthError::Invalid { language: self.language.clone(), reason });
        if self.language.is_empty() || self.language.contains(char::is_whitespace) {
            return bad("language tag must be non-empty without whitespace".into());
        }
        if self.vocab_size < CATEGORIES.len() {
            return bad(format!("vocab_size must be at least {}", CATEGORIES.len()));
        }
        if self.labels.is_empty() {
            return bad("empty label set".into());
        }
        for (i, l) in self.labels.iter().enumerate() {
            if !RELATIONS.contains(&l.as_str()) {
                return bad(format!("label {l} is not in the inventory {RELATIONS:?}"));
            }
            if self.labels[..i].contains(l) {
                return bad(format!("label {l} listed twice"));
            }
        }
        if !self.labels.iter().any(|l| relation_categories(l).1 == Category::Verb) {
            return bad("at least one clausal relation (headed by a verb) is required".into());
        }
        for (l, &p) in &self.head_initial {
            if !self.labels.contains(l) {
                return bad(format!("head_initial given for unused label {l}"));
            }
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("head_initial[{l}] = {p} outside [0,1]"));
            }
        }
        if self.branching.is_empty() || self.branching.iter().any(|w| !w.is_finite() || *w < 0.0) || self.branching[0] <= 0.0 {
            return bad("branching weights must be finite, non-negative, with a positive first entry".into());
        }
        if self.min_len < 1 || self.min_len > self.max_len {
            return bad(format!("length range {}..={} is empty", self.min_len, self.max_len));
        }
        for (name, v) in [("nonproj_rate", self.nonproj_rate), ("shared_cognates", self.shared_cognates)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} outside [0,1]"));
            }
        }
        Ok(())
    }

    pub fn direction(&self, label: &str) -> f64 {
        self.head_initial.get(label).copied().unwrap_or(0.5)
    }
}

/// Feature schema of [`typology_of`].
pub fn feature_names() -> Vec<String> {
    RELATIONS.iter().map(|r| format!("{r}_head_initial")).collect()
}

/// Binary word-order features: `<label>_head_initial` is 1 iff the head
/// precedes the dependent more often than not; missing for unused labels.
pub fn typology_of(spec: &GrammarSpec) -> TypologyVector {
    TypologyVector {
        language: spec.language.clone(),
        features: feature_names(),
        values: RELATIONS
            .iter()
            .map(|r| spec.labels.iter().any(|l| l == r).then(|| spec.direction(r) > 0.5))
            .collect(),
    }
}

fn stem(rng: &mut ChaCha8Rng) -> String {
    const ONSETS: &[u8] = b"ptkbdgmnslrvfh";
    const VOWELS: &[u8] = b"aeiou";
    let syllables = rng.gen_range(2..=3);
    let mut s = String::new();
    for _ in 0..syllables {
        s.push(ONSETS[rng.gen_range(0..ONSETS.len())] as char);
        s.push(VOWELS[rng.gen_range(0..VOWELS.len())] as char);
    }
    s
}

/// Word forms per category, cognates first.
fn lexicon(spec: &GrammarSpec) -> Vec<Vec<String>> {
    let per_category = (spec.vocab_size / CATEGORIES.len()).max(1);
    let shared = (spec.shared_cognates * per_category as f64).round() as usize;
    let mut own = ChaCha8Rng::seed_from_u64(spec.lexical_seed);
    CATEGORIES
        .iter()
        .map(|&c| {
            let mut common = ChaCha8Rng::seed_from_u64(COGNATE_SEED + c.index() as u64);
            let mut words: Vec<String> = Vec::with_capacity(per_category);
            let mut slot = 0;
            while words.len() < per_category {
                let s = if slot < shared { stem(&mut common) } else { stem(&mut own) };
                slot += 1;
                let w = format!("{}{}", c.marker(), s);
                if !words.contains(&w) {
                    words.push(w);
                }
            }
            words
        })
        .collect()
}

/// What the non-projectivity dial actually did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GenerationStats {
    pub sentences: usize,
    pub rewrites_requested: usize,
    pub rewrites_applied: usize,
}

struct Node {
    category: Category,
    label: &'static str,
    children: Vec<usize>,
    right: bool,
}

/// Relation that always accompanies `label` when the grammar uses both:
/// subordinate clauses carry a marker, oblique and nominal modifiers an
/// adposition.
fn companion(label: &str) -> Option<&'static str> {
    match label {
        "advcl" => Some("mark"),
        "obl" | "nmod" => Some("case"),
        _ => None,
    }
}

fn grow(spec: &GrammarSpec, rng: &mut ChaCha8Rng, n: usize) -> Vec<Node> {
    let used = |l: &str| spec.labels.iter().any(|x| x == l);
    let labels: Vec<&'static str> = RELATIONS.iter().copied().filter(|r| used(r)).collect();
    // relations introduced only as companions are not attached freely
    let bound = |l: &str| labels.iter().any(|&h| companion(h) == Some(l));
    let for_head = |c: Category| labels.iter().copied().filter(|l| relation_categories(l).1 == c && !bound(l)).collect::<Vec<_>>();
    let options = [for_head(Category::Verb), for_head(Category::Noun)];
    let slot = |c: Category| match c {
        Category::Verb => Some(0),
        Category::Noun => Some(1),
        _ => None,
    };
    let needs = |l: &str| 1 + companion(l).is_some_and(|c| used(c)) as usize;
    let mut nodes = vec![Node { category: Category::Verb, label: "root", children: Vec::new(), right: false }];
    let attach = |nodes: &mut Vec<Node>, parent: usize, label: &'static str, rng: &mut ChaCha8Rng| {
        let right = rng.gen_bool(spec.direction(label));
        nodes.push(Node { category: relation_categories(label).0, label, children: Vec::new(), right });
        let child = nodes.len() - 1;
        nodes[parent].children.push(child);
        child
    };
    while nodes.len() < n {
        let capable: Vec<usize> = (0..nodes.len())
            .filter(|&i| slot(nodes[i].category).is_some_and(|s| !options[s].is_empty()))
            .collect();
        let weights: Vec<f64> = capable
            .iter()
            .map(|&i| spec.branching.get(nodes[i].children.len()).copied().unwrap_or(0.0))
            .collect();
        let total: f64 = weights.iter().sum();
        let parent = if total > 0.0 {
            let mut x = rng.gen::<f64>() * total;
            let mut pick = *capable.last().unwrap();
            for (&i, &w) in capable.iter().zip(&weights) {
                if x < w {
                    pick = i;
                    break;
                }
                x -= w;
            }
            pick
        } else {
            // every node is saturated; keep growing anyway
            capable[rng.gen_range(0..capable.len())]
        };
        let all = &options[slot(nodes[parent].category).unwrap()];
        let room = n - nodes.len();
        let fitting: Vec<&'static str> = all.iter().copied().filter(|l| needs(l) <= room).collect();
        let opts = if fitting.is_empty() { all } else { &fitting };
        let label = opts[rng.gen_range(0..opts.len())];
        let child = attach(&mut nodes, parent, label, rng);
        if let Some(c) = companion(label).filter(|c| used(c)) {
            if nodes.len() < n {
                attach(&mut nodes, child, c, rng);
            }
        }
    }
    nodes
}

fn linearize(nodes: &[Node], at: usize, out: &mut Vec<usize>) {
    let mut left: Vec<usize> = nodes[at].children.iter().copied().filter(|&c| !nodes[c].right).collect();
    let mut right: Vec<usize> = nodes[at].children.iter().copied().filter(|&c| nodes[c].right).collect();
    left.sort_by_key(|&c| rank(nodes[c].label));
    right.sort_by_key(|&c| std::cmp::Reverse(rank(nodes[c].label)));
    for c in left {
        linearize(nodes, c, out);
    }
    out.push(at);
    for c in right {
        linearize(nodes, c, out);
    }
}

fn is_descendant(heads: &[usize], node: usize, ancestor: usize) -> bool {
    let mut x = node;
    while x != 0 {
        if x == ancestor {
            return true;
        }
        x = heads[x - 1];
    }
    false
}

/// Moves one non-root word under a new head so that the tree stays a tree
/// and becomes non-projective. Returns false if no such move was found.
fn make_nonprojective(heads: &mut [usize], rng: &mut ChaCha8Rng) -> bool {
    let n = heads.len();
    if n < 3 {
        return false;
    }
    for _ in 0..MAX_REWRITE_ATTEMPTS {
        let d = rng.gen_range(1..=n);
        let h = rng.gen_range(1..=n);
        if heads[d - 1] == 0 || h == d || h == heads[d - 1] || is_descendant(heads, h, d) {
            continue;
        }
        let old = heads[d - 1];
        heads[d - 1] = h;
        if !heads_projective(heads) {
            return true;
        }
        heads[d - 1] = old;
    }
    false
}

/// The label vocabulary shared by every generated treebank.
pub fn label_vocab() -> LabelVocab {
    LabelVocab::from_labels(std::iter::once("root").chain(RELATIONS))
}

pub fn generate_treebank(spec: &GrammarSpec, n_sentences: usize, seed: u64) -> Treebank {
    generate_with_stats(spec, n_sentences, seed).0
}

pub fn generate_with_stats(spec: &GrammarSpec, n_sentences: usize, seed: u64) -> (Treebank, GenerationStats) {
    let labels = label_vocab();
    let words = lexicon(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(language_seed(seed, &spec.language), "synth"));
    let mut stats = GenerationStats { sentences: n_sentences, ..Default::default() };
    let mut sentences = Vec::with_capacity(n_sentences);
    for k in 0..n_sentences {
        let n = rng.gen_range(spec.min_len..=spec.max_len);
        let nodes = grow(spec, &mut rng, n);
        let mut order = Vec::with_capacity(n);
        linearize(&nodes, 0, &mut order);
        let mut position = vec![0; n];
        for (p, &node) in order.iter().enumerate() {
            position[node] = p + 1;
        }
        let mut heads = vec![0; n];
        for (node, parent) in nodes.iter().enumerate() {
            for &c in &parent.children {
                heads[position[c] - 1] = position[node];
            }
        }
        if rng.gen_bool(spec.nonproj_rate) {
            stats.rewrites_requested += 1;
            if make_nonprojective(&mut heads, &mut rng) {
                stats.rewrites_applied += 1;
            }
        }
        let forms: Vec<&str> = order
            .iter()
            .map(|&node| {
                let pool = &words[nodes[node].category.index()];
                pool.choose(&mut rng).unwrap().as_str()
            })
            .collect();
        let tokens = order
            .iter()
            .enumerate()
            .map(|(i, &node)| {
                let label = nodes[node].label;
                Token::word(i + 1, forms[i], heads[i], labels.id(label).unwrap(), label)
            })
            .collect();
        let comments = vec![format!("# sent_id = {}-{}", spec.language, k + 1), format!("# text = {}", forms.join(" "))];
        sentences.push(Sentence::new(comments, tokens).expect("generated analyses are trees"));
    }
    (Treebank::new(&spec.language, sentences, labels), stats)
}
