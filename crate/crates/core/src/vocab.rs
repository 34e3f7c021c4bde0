//! Input vocabularies of the parser: word forms, leading word pieces and labels.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::conllu::{LabelVocab, Sentence, Treebank};

pub const UNK: &str = "<unk>";

/// Frequency-thresholded string table with a shared unknown entry at id 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    items: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Lexicon {
    fn build<'a>(items: impl Iterator<Item = String>, min_freq: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut order: Vec<String> = Vec::new();
        for it in items {
            let c = counts.entry(it.clone()).or_insert(0);
            if *c == 0 {
                order.push(it);
            }
            *c += 1;
        }
        let mut lex = Lexicon {
            items: vec![UNK.to_string()],
            index: HashMap::new(),
        };
        lex.items.extend(order.into_iter().filter(|w| counts[w] >= min_freq));
        lex.reindex();
        lex
    }

    fn reindex(&mut self) {
        self.index = self.items.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
    }

    pub fn id(&self, item: &str) -> usize {
        self.index.get(item).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }
}

/// Word, piece and label tables shared by every language a model sees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub words: Lexicon,
    pub pieces: Lexicon,
    pub labels: LabelVocab,
    pub piece_len: usize,
}

/// Lower-cased form.
pub fn normalize(form: &str) -> String {
    form.to_lowercase()
}

/// Leading `len` characters of the normalized form; the stand-in for a
/// subword tokenizer's first piece.
pub fn first_piece(form: &str, len: usize) -> String {
    normalize(form).chars().take(len).collect()
}

impl Vocabulary {
    pub fn build(treebanks: &[&Treebank], min_freq: usize, piece_len: usize) -> Self {
        let words = treebanks
            .iter()
            .flat_map(|tb| tb.sentences.iter())
            .flat_map(|s| s.words().map(|t| normalize(&t.form)).collect::<Vec<_>>());
        let pieces = treebanks
            .iter()
            .flat_map(|tb| tb.sentences.iter())
            .flat_map(|s| s.words().map(|t| first_piece(&t.form, piece_len)).collect::<Vec<_>>());
        // labels in use, sorted, so the vocabulary depends on the trees only
        let used: std::collections::BTreeSet<&str> = treebanks
            .iter()
            .flat_map(|tb| tb.sentences.iter().flat_map(move |s| s.words().filter_map(move |t| t.deprel.map(|d| tb.label_name(d)))))
            .collect();
        Vocabulary {
            words: Lexicon::build(words, min_freq),
            pieces: Lexicon::build(pieces, min_freq),
            labels: LabelVocab::from_labels(used),
            piece_len,
        }
    }

    /// Restores lookup tables after deserialization.
    pub fn reindex(&mut self) {
        self.words.reindex();
        self.pieces.reindex();
        let labels = self.labels.labels().to_vec();
        self.labels = LabelVocab::from_labels(labels);
    }

    /// Maps a gold sentence onto model ids.
    pub fn encode(&self, s: &Sentence, tb_labels: &LabelVocab) -> EncodedSentence {
        let words = s.words().map(|t| self.words.id(&normalize(&t.form))).collect();
        let pieces = s.words().map(|t| self.pieces.id(&first_piece(&t.form, self.piece_len))).collect();
        let labels = s
            .deprels()
            .iter()
            .map(|&l| tb_labels.label(l).and_then(|name| self.labels.id(name)).map(|i| i as usize))
            .collect();
        EncodedSentence {
            words,
            pieces,
            heads: s.heads(),
            labels,
        }
    }

    pub fn encode_treebank(&self, tb: &Treebank) -> Vec<EncodedSentence> {
        tb.sentences.iter().map(|s| self.encode(s, &tb.labels)).collect()
    }
}

/// A sentence as model ids. Labels outside the model's label set are `None`
/// and contribute no label loss.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSentence {
    pub words: Vec<usize>,
    pub pieces: Vec<usize>,
    pub heads: Vec<usize>,
    pub labels: Vec<Option<usize>>,
}

impl EncodedSentence {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}
