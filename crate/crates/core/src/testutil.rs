//! Fixtures shared by unit tests.

use rand::Rng;

use crate::conllu::{LabelVocab, Sentence, Token, Treebank};

/// Uniformly shuffled attachment order; every word hangs off an earlier-attached node.
pub(crate) fn random_tree(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (1..=n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let mut heads = vec![0; n];
    for (k, &w) in order.iter().enumerate().skip(1) {
        heads[w - 1] = order[rng.gen_range(0..k)];
    }
    heads
}

/// Random trees over a tiny lexicon, labelled by attachment direction.
pub(crate) fn toy_treebank(rng: &mut impl Rng, sentences: usize, min_len: usize, max_len: usize) -> Treebank {
    const WORDS: [&str; 6] = ["ka", "mo", "ti", "ru", "sel", "pa"];
    let labels = LabelVocab::from_labels(["root", "left", "right"]);
    let mut out = Vec::new();
    for _ in 0..sentences {
        let n = rng.gen_range(min_len..=max_len);
        let heads = random_tree(rng, n);
        let tokens = heads
            .iter()
            .enumerate()
            .map(|(i, &h)| {
                let (id, name) = match h {
                    0 => (0, "root"),
                    h if h > i + 1 => (1, "left"),
                    _ => (2, "right"),
                };
                Token::word(i + 1, WORDS[rng.gen_range(0..WORDS.len())], h, id, name)
            })
            .collect();
        out.push(Sentence::new(Vec::new(), tokens).expect("random_tree yields trees"));
    }
    Treebank::new("toy", out, labels)
}
