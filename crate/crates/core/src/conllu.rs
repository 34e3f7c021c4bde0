//! CoNLL-U reading and writing, the treebank data model, and projectivity.
//!
//! All ten columns of every line are kept so that a clean file is written
//! back byte for byte. Only ID, FORM, HEAD and DEPREL carry meaning for
//! training and scoring; multiword-token ranges (`3-4`) and empty nodes
//! (`5.1`) are carried along but never scored.

use std::collections::HashMap;
use std::fmt;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const N_COLUMNS: usize = 10;
const HEAD_COL: usize = 6;
const DEPREL_COL: usize = 7;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConlluError {
    #[error("line {line}: expected {N_COLUMNS} tab-separated columns, found {found}")]
    ColumnCount { line: usize, found: usize },
    #[error("line {line}: invalid token id {value:?}")]
    BadId { line: usize, value: String },
    #[error("line {line}: head {value:?} is not an integer")]
    BadHead { line: usize, value: String },
    #[error("line {line}: word ids must be consecutive from 1, expected {expected}")]
    IdOrder { line: usize, expected: usize },
    #[error("sentence starting at line {line}: {reason}")]
    InvalidTree { line: usize, reason: TreeError },
    #[error("empty treebank")]
    EmptyTreebank,
    #[error("requested {requested} sentences but only {available} are available")]
    NotEnoughSentences { requested: usize, available: usize },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TreeError {
    #[error("sentence has no words")]
    Empty,
    #[error("token {token} has head {head} outside [0, {n}]")]
    HeadOutOfRange { token: usize, head: usize, n: usize },
    #[error("token {0} is its own head")]
    SelfLoop(usize),
    #[error("cycle through token {0}")]
    Cycle(usize),
    #[error("{0} tokens attach to the root, expected exactly one")]
    RootCount(usize),
}

/// Identifier column of a CoNLL-U line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenId {
    Word(usize),
    /// Multiword token spanning words `start..=end`.
    Range(usize, usize),
    /// Empty node `major.minor`.
    Empty(usize, usize),
}

impl TokenId {
    fn parse(s: &str) -> Option<TokenId> {
        if let Some((a, b)) = s.split_once('-') {
            return Some(TokenId::Range(a.parse().ok()?, b.parse().ok()?));
        }
        if let Some((a, b)) = s.split_once('.') {
            return Some(TokenId::Empty(a.parse().ok()?, b.parse().ok()?));
        }
        match s.parse().ok()? {
            0 => None,
            i => Some(TokenId::Word(i)),
        }
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenId::Word(i) => write!(f, "{i}"),
            TokenId::Range(a, b) => write!(f, "{a}-{b}"),
            TokenId::Empty(a, b) => write!(f, "{a}.{b}"),
        }
    }
}

/// One line of a sentence. For words, `head` and `deprel` are the parsed
/// HEAD/DEPREL columns; the remaining columns are stored verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub id: TokenId,
    pub form: String,
    pub head: Option<usize>,
    pub deprel: Option<u32>,
    columns: Vec<String>,
}

impl Token {
    /// A word token with `_` in every column except the four used here.
    pub fn word(index: usize, form: &str, head: usize, deprel: u32, label: &str) -> Token {
        let mut columns = vec!["_".to_string(); N_COLUMNS];
        columns[0] = index.to_string();
        columns[1] = form.to_string();
        columns[HEAD_COL] = head.to_string();
        columns[DEPREL_COL] = label.to_string();
        Token {
            id: TokenId::Word(index),
            form: form.to_string(),
            head: Some(head),
            deprel: Some(deprel),
            columns,
        }
    }

    pub fn is_word(&self) -> bool {
        matches!(self.id, TokenId::Word(_))
    }

    /// Multiword ranges and empty nodes are kept for round-trip only.
    pub fn is_multiword_range(&self) -> bool {
        matches!(self.id, TokenId::Range(..))
    }

    pub fn column(&self, i: usize) -> &str {
        &self.columns[i]
    }
}

/// A sentence: verbatim comment lines followed by its token lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub comments: Vec<String>,
    tokens: Vec<Token>,
}

impl Sentence {
    /// Builds a sentence and checks that its words form a single rooted tree.
    pub fn new(comments: Vec<String>, tokens: Vec<Token>) -> Result<Sentence, TreeError> {
        let s = Sentence { comments, tokens };
        validate_tree(&s.heads())?;
        Ok(s)
    }

    /// All lines including ranges and empty nodes.
    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn words(&self) -> impl Iterator<Item = &Token> {
        self.tokens.iter().filter(|t| t.is_word())
    }

    pub fn len(&self) -> usize {
        self.words().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Head of word `i + 1` at position `i`.
    pub fn heads(&self) -> Vec<usize> {
        self.words().map(|t| t.head.unwrap_or(0)).collect()
    }

    pub fn deprels(&self) -> Vec<u32> {
        self.words().map(|t| t.deprel.unwrap_or(0)).collect()
    }

    pub fn forms(&self) -> Vec<&str> {
        self.words().map(|t| t.form.as_str()).collect()
    }

    /// Replaces heads and labels of the words; used to materialize predictions.
    pub fn with_analysis(&self, heads: &[usize], labels: &[u32], vocab: &LabelVocab) -> Result<Sentence, TreeError> {
        validate_tree(heads)?;
        let mut out = self.clone();
        for (t, (&h, &l)) in out.tokens.iter_mut().filter(|t| t.is_word()).zip(heads.iter().zip(labels)) {
            t.head = Some(h);
            t.deprel = Some(l);
            t.columns[HEAD_COL] = h.to_string();
            t.columns[DEPREL_COL] = vocab.label(l).unwrap_or("_").to_string();
        }
        Ok(out)
    }
}

/// Bidirectional label ↔ id map. Ids are assigned in order of first appearance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelVocab {
    labels: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl LabelVocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_labels<I: IntoIterator<Item = S>, S: AsRef<str>>(labels: I) -> Self {
        let mut v = LabelVocab::new();
        for l in labels {
            v.intern(l.as_ref());
        }
        v
    }

    pub fn intern(&mut self, label: &str) -> u32 {
        if self.index.len() != self.labels.len() {
            self.rebuild_index();
        }
        if let Some(&id) = self.index.get(label) {
            return id;
        }
        let id = self.labels.len() as u32;
        self.labels.push(label.to_string());
        self.index.insert(label.to_string(), id);
        id
    }

    pub fn id(&self, label: &str) -> Option<u32> {
        if self.index.len() == self.labels.len() {
            self.index.get(label).copied()
        } else {
            self.labels.iter().position(|l| l == label).map(|i| i as u32)
        }
    }

    pub fn label(&self, id: u32) -> Option<&str> {
        self.labels.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    fn rebuild_index(&mut self) {
        self.index = self.labels.iter().enumerate().map(|(i, l)| (l.clone(), i as u32)).collect();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Treebank {
    pub language: String,
    pub sentences: Vec<Sentence>,
    pub labels: LabelVocab,
}

impl Treebank {
    pub fn new(language: &str, sentences: Vec<Sentence>, labels: LabelVocab) -> Self {
        Treebank {
            language: language.to_string(),
            sentences,
            labels,
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    /// Same language and label vocabulary, different sentences.
    pub fn with_sentences(&self, sentences: Vec<Sentence>) -> Treebank {
        Treebank {
            language: self.language.clone(),
            sentences,
            labels: self.labels.clone(),
        }
    }

    pub fn label_name(&self, id: u32) -> &str {
        self.labels.label(id).unwrap_or("_")
    }
}

/// Options for tolerant ingestion of real treebank files.
#[derive(Debug, Clone)]
pub struct ReadOptions {
    /// Sentences with more words are skipped.
    pub max_len: Option<usize>,
    /// Skip sentences that fail tree validation instead of failing the file.
    pub skip_invalid: bool,
}

impl Default for ReadOptions {
    fn default() -> Self {
        ReadOptions {
            max_len: Some(60),
            skip_invalid: true,
        }
    }
}

/// Sentences dropped by [`read_conllu`], with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct Skipped {
    pub line: usize,
    pub reason: String,
}

/// Strict parse: any malformed line or invalid tree is an error.
pub fn parse_conllu(text: &str, language: &str) -> Result<Treebank, ConlluError> {
    let opts = ReadOptions {
        max_len: None,
        skip_invalid: false,
    };
    read_conllu(text, language, &opts).map(|(tb, _)| tb)
}

/// Parse with per-sentence recovery: invalid trees and over-long sentences
/// are skipped and reported, column-level errors still fail.
pub fn read_conllu(text: &str, language: &str, opts: &ReadOptions) -> Result<(Treebank, Vec<Skipped>), ConlluError> {
    let mut labels = LabelVocab::new();
    let mut sentences = Vec::new();
    let mut skipped = Vec::new();

    let mut comments: Vec<String> = Vec::new();
    let mut tokens: Vec<Token> = Vec::new();
    let mut start_line = 1;

    let mut finish = |comments: &mut Vec<String>, tokens: &mut Vec<Token>, start: usize| -> Result<(), ConlluError> {
        if comments.is_empty() && tokens.is_empty() {
            return Ok(());
        }
        let c = std::mem::take(comments);
        let t = std::mem::take(tokens);
        let n_words = t.iter().filter(|t| t.is_word()).count();
        if let Some(max) = opts.max_len {
            if n_words > max {
                log::warn!("{language}: skipping sentence at line {start} with {n_words} words (max {max})");
                skipped.push(Skipped {
                    line: start,
                    reason: format!("{n_words} words exceeds max length {max}"),
                });
                return Ok(());
            }
        }
        match Sentence::new(c, t) {
            Ok(s) => {
                sentences.push(s);
                Ok(())
            }
            Err(reason) if opts.skip_invalid => {
                log::warn!("{language}: skipping sentence at line {start}: {reason}");
                skipped.push(Skipped {
                    line: start,
                    reason: reason.to_string(),
                });
                Ok(())
            }
            Err(reason) => Err(ConlluError::InvalidTree { line: start, reason }),
        }
    };

    for (i, line) in text.split('\n').enumerate() {
        let lineno = i + 1;
        if line.is_empty() {
            finish(&mut comments, &mut tokens, start_line)?;
            start_line = lineno + 1;
            continue;
        }
        if line.starts_with('#') && tokens.is_empty() {
            comments.push(line.to_string());
            continue;
        }
        let columns: Vec<String> = line.split('\t').map(str::to_string).collect();
        if columns.len() != N_COLUMNS {
            return Err(ConlluError::ColumnCount {
                line: lineno,
                found: columns.len(),
            });
        }
        let id = TokenId::parse(&columns[0]).ok_or_else(|| ConlluError::BadId {
            line: lineno,
            value: columns[0].clone(),
        })?;
        let (head, deprel) = match id {
            TokenId::Word(idx) => {
                let expected = tokens.iter().filter(|t| t.is_word()).count() + 1;
                if idx != expected {
                    return Err(ConlluError::IdOrder { line: lineno, expected });
                }
                let head: usize = columns[HEAD_COL].parse().map_err(|_| ConlluError::BadHead {
                    line: lineno,
                    value: columns[HEAD_COL].clone(),
                })?;
                (Some(head), Some(labels.intern(&columns[DEPREL_COL])))
            }
            _ => (None, None),
        };
        tokens.push(Token {
            id,
            form: columns[1].clone(),
            head,
            deprel,
            columns,
        });
    }
    finish(&mut comments, &mut tokens, start_line)?;
    Ok((Treebank::new(language, sentences, labels), skipped))
}

/// Writes sentences as comment lines, token lines and a terminating blank line.
pub fn emit_conllu(tb: &Treebank) -> String {
    let mut out = String::new();
    for s in &tb.sentences {
        for c in &s.comments {
            out.push_str(c);
            out.push('\n');
        }
        for t in &s.tokens {
            out.push_str(&t.columns.join("\t"));
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// Checks that `heads` (1-based heads of words 1..=n, 0 = root) describe a
/// single tree hanging from the root.
pub fn validate_tree(heads: &[usize]) -> Result<(), TreeError> {
    let n = heads.len();
    if n == 0 {
        return Err(TreeError::Empty);
    }
    for (i, &h) in heads.iter().enumerate() {
        if h > n {
            return Err(TreeError::HeadOutOfRange { token: i + 1, head: h, n });
        }
        if h == i + 1 {
            return Err(TreeError::SelfLoop(i + 1));
        }
    }
    let roots = heads.iter().filter(|&&h| h == 0).count();
    // 0 = unvisited, 1 = on current path, 2 = reaches root
    let mut state = vec![0u8; n + 1];
    state[0] = 2;
    for start in 1..=n {
        let mut path = Vec::new();
        let mut v = start;
        while state[v] == 0 {
            state[v] = 1;
            path.push(v);
            v = heads[v - 1];
        }
        if state[v] == 1 {
            return Err(TreeError::Cycle(v));
        }
        for p in path {
            state[p] = 2;
        }
    }
    if roots != 1 {
        return Err(TreeError::RootCount(roots));
    }
    Ok(())
}

/// True iff no arc is crossed, checked through dominance: for every arc
/// `h → d`, every word strictly between them descends from `h`.
pub fn is_projective(s: &Sentence) -> bool {
    heads_projective(&s.heads())
}

pub fn heads_projective(heads: &[usize]) -> bool {
    let n = heads.len();
    let dominates = |h: usize, mut k: usize| {
        while k != 0 {
            if k == h {
                return true;
            }
            k = heads[k - 1];
        }
        h == 0
    };
    for d in 1..=n {
        let h = heads[d - 1];
        let (lo, hi) = if h < d { (h, d) } else { (d, h) };
        if ((lo + 1)..hi).any(|k| !dominates(h, k)) {
            return false;
        }
    }
    true
}

/// Crossing-arc formulation of projectivity, root arcs included.
pub fn heads_projective_by_crossing(heads: &[usize]) -> bool {
    let spans: Vec<(usize, usize)> = heads
        .iter()
        .enumerate()
        .map(|(i, &h)| (h.min(i + 1), h.max(i + 1)))
        .collect();
    for (i, &(a1, b1)) in spans.iter().enumerate() {
        for &(a2, b2) in &spans[i + 1..] {
            if (a1 < a2 && a2 < b1 && b1 < b2) || (a2 < a1 && a1 < b2 && b2 < b1) {
                return false;
            }
        }
    }
    true
}

/// Fraction of sentences whose tree is non-projective.
pub fn projectivity_stats(tb: &Treebank) -> Result<f64, ConlluError> {
    if tb.is_empty() {
        return Err(ConlluError::EmptyTreebank);
    }
    let nonproj = tb.sentences.iter().filter(|s| !is_projective(s)).count();
    Ok(nonproj as f64 / tb.len() as f64)
}

/// Uniformly samples `size` sentences without replacement.
///
/// Returns `(support, remainder)`, both in original corpus order.
pub fn split_support(tb: &Treebank, size: usize, seed: u64) -> Result<(Treebank, Treebank), ConlluError> {
    if size > tb.len() {
        return Err(ConlluError::NotEnoughSentences {
            requested: size,
            available: tb.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![false; tb.len()];
    for i in sample(&mut rng, tb.len(), size) {
        chosen[i] = true;
    }
    let (mut support, mut rest) = (Vec::with_capacity(size), Vec::with_capacity(tb.len() - size));
    for (s, &c) in tb.sentences.iter().zip(&chosen) {
        if c {
            support.push(s.clone());
        } else {
            rest.push(s.clone());
        }
    }
    Ok((tb.with_sentences(support), tb.with_sentences(rest)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    const TWO: &str = "# text = a b\n1\ta\ta\tX\t_\t_\t0\troot\t_\t_\n2\tb\tb\tX\t_\t_\t1\tobj\t_\t_\n\n";

    use crate::testutil::random_tree;

    #[test]
    fn parses_two_token_sentence() {
        let tb = parse_conllu(TWO, "xx").unwrap();
        assert_eq!(tb.len(), 1);
        assert_eq!(tb.sentences[0].len(), 2);
        assert_eq!(tb.sentences[0].heads(), vec![0, 1]);
        assert_eq!(tb.label_name(tb.sentences[0].deprels()[1]), "obj");
        assert_eq!(emit_conllu(&tb), TWO);
    }

    #[test]
    fn nine_columns_names_the_line() {
        let text = "# c\n1\ta\ta\tX\t_\t_\t0\troot\t_\t_\n2\tb\tb\tX\t_\t1\tobj\t_\t_\n\n";
        let err = parse_conllu(text, "xx").unwrap_err();
        assert_eq!(err, ConlluError::ColumnCount { line: 3, found: 9 });
        assert!(err.to_string().contains("line 3"));
    }

    #[test]
    fn non_integer_head() {
        let text = "1\ta\ta\tX\t_\t_\tx\troot\t_\t_\n\n";
        assert!(matches!(parse_conllu(text, "xx"), Err(ConlluError::BadHead { line: 1, .. })));
    }

    #[test]
    fn cycle_is_rejected() {
        let text = "1\ta\ta\tX\t_\t_\t2\tdep\t_\t_\n2\tb\tb\tX\t_\t_\t1\tdep\t_\t_\n\n";
        let err = parse_conllu(text, "xx").unwrap_err();
        assert!(matches!(err, ConlluError::InvalidTree { line: 1, reason: TreeError::Cycle(_) }));
    }

    #[test]
    fn multiple_roots_rejected() {
        let text = "1\ta\ta\tX\t_\t_\t0\troot\t_\t_\n2\tb\tb\tX\t_\t_\t0\troot\t_\t_\n\n";
        assert!(matches!(
            parse_conllu(text, "xx"),
            Err(ConlluError::InvalidTree { reason: TreeError::RootCount(2), .. })
        ));
    }

    #[test]
    fn lenient_read_skips_bad_and_long_sentences() {
        let bad = "1\ta\ta\tX\t_\t_\t2\tdep\t_\t_\n2\tb\tb\tX\t_\t_\t1\tdep\t_\t_\n\n";
        let text = format!("{TWO}{bad}{TWO}");
        let (tb, skipped) = read_conllu(&text, "xx", &ReadOptions::default()).unwrap();
        assert_eq!(tb.len(), 2);
        assert_eq!(skipped.len(), 1);
        assert_eq!(skipped[0].line, 5);

        let opts = ReadOptions {
            max_len: Some(1),
            skip_invalid: true,
        };
        let (tb, skipped) = read_conllu(&text, "xx", &opts).unwrap();
        assert_eq!(tb.len(), 0);
        assert_eq!(skipped.len(), 3);
    }

    /// Independent depth-first cycle detector over the head graph.
    fn has_cycle_dfs(heads: &[usize]) -> bool {
        let n = heads.len();
        let mut children = vec![Vec::new(); n + 1];
        for (i, &h) in heads.iter().enumerate() {
            children[h].push(i + 1);
        }
        let mut seen = vec![false; n + 1];
        let mut stack = vec![0];
        while let Some(v) = stack.pop() {
            seen[v] = true;
            stack.extend(children[v].iter().copied());
        }
        seen.iter().skip(1).any(|s| !s)
    }

    #[test]
    fn validation_agrees_with_dfs_on_random_head_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5000 {
            let n = rng.gen_range(1..=7);
            let heads: Vec<usize> = (1..=n)
                .map(|i| loop {
                    let h = rng.gen_range(0..=n);
                    if h != i {
                        break h;
                    }
                })
                .collect();
            let single_root = heads.iter().filter(|&&h| h == 0).count() == 1;
            let expected_ok = single_root && !has_cycle_dfs(&heads);
            assert_eq!(validate_tree(&heads).is_ok(), expected_ok, "{heads:?}");
        }
    }

    #[test]
    fn chain_is_projective() {
        let heads: Vec<usize> = (0..8).collect();
        assert!(heads_projective(&heads));
        assert!(heads_projective_by_crossing(&heads));
    }

    #[test]
    fn crossing_example_is_non_projective() {
        // A B C D: head(A)=C, head(B)=D, head(C)=0, head(D)=C
        let heads = vec![3, 4, 0, 3];
        validate_tree(&heads).unwrap();
        assert!(!heads_projective(&heads));
        assert!(!heads_projective_by_crossing(&heads));
    }

    #[test]
    fn dominance_and_crossing_agree_on_random_trees() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut nonproj = 0;
        for _ in 0..10_000 {
            let n = rng.gen_range(1..=12);
            let mut heads = random_tree(&mut rng, n);
            // random trees almost always have several root children; keep one
            let root = heads.iter().position(|&h| h == 0).unwrap() + 1;
            for (i, h) in heads.iter_mut().enumerate() {
                if *h == 0 && i + 1 != root {
                    *h = root;
                }
            }
            validate_tree(&heads).unwrap();
            let a = heads_projective(&heads);
            assert_eq!(a, heads_projective_by_crossing(&heads), "{heads:?}");
            nonproj += usize::from(!a);
        }
        assert!(nonproj > 1000, "sample should exercise both outcomes");
    }

    #[test]
    fn projectivity_stats_cases() {
        let tb = parse_conllu(&TWO.repeat(5), "xx").unwrap();
        assert_eq!(projectivity_stats(&tb).unwrap(), 0.0);
        let empty = tb.with_sentences(vec![]);
        assert_eq!(projectivity_stats(&empty), Err(ConlluError::EmptyTreebank));
    }

    #[test]
    fn split_support_contracts() {
        let tb = parse_conllu(&TWO.repeat(10), "xx").unwrap();
        let (s, r) = split_support(&tb, 10, 1).unwrap();
        assert_eq!((s.len(), r.len()), (10, 0));
        let (s, r) = split_support(&tb, 0, 1).unwrap();
        assert_eq!(s.len(), 0);
        assert_eq!(r, tb);
        assert!(split_support(&tb, 11, 1).is_err());
    }

    #[test]
    fn split_support_is_deterministic_and_partitions() {
        let mut text = String::new();
        for i in 0..30 {
            text.push_str(&format!("# sent_id = {i}\n1\tw{i}\t_\tX\t_\t_\t0\troot\t_\t_\n\n"));
        }
        let tb = parse_conllu(&text, "xx").unwrap();
        let (s1, r1) = split_support(&tb, 12, 42).unwrap();
        let (s2, r2) = split_support(&tb, 12, 42).unwrap();
        assert_eq!((&s1, &r1), (&s2, &r2));
        let mut ids: Vec<String> = s1.sentences.iter().chain(&r1.sentences).map(|s| s.comments[0].clone()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 30);
        let (s3, _) = split_support(&tb, 12, 43).unwrap();
        assert_ne!(s1, s3);
    }

    #[test]
    fn multiword_and_empty_nodes_round_trip() {
        let text = "# sent_id = 1\n# text = vámonos ya\n1-2\tvámonos\t_\t_\t_\t_\t_\t_\t_\t_\n1\tvamos\tir\tVERB\t_\t_\t0\troot\t_\t_\n2\tnos\tnosotros\tPRON\t_\tCase=Acc\t1\tobj\t_\t_\n2.1\tfue\tir\tVERB\t_\t_\t_\t_\t1:conj\t_\n3\tya\tya\tADV\t_\t_\t1\tadvmod\t_\tSpaceAfter=No\n\n";
        let tb = parse_conllu(text, "es").unwrap();
        let s = &tb.sentences[0];
        assert_eq!(s.len(), 3);
        assert_eq!(s.tokens().len(), 5);
        assert!(s.tokens()[0].is_multiword_range());
        assert_eq!(emit_conllu(&tb), text);
    }

    #[test]
    fn empty_treebank_emits_nothing() {
        let tb = parse_conllu("", "xx").unwrap();
        assert!(tb.is_empty());
        assert_eq!(emit_conllu(&tb), "");
    }
}
