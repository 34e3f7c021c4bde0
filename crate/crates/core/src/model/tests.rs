use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::conllu::validate_tree;
use crate::decoder::brute_force_mst;
use crate::numeric::sgd_step;
use crate::testutil::toy_treebank;

fn tiny_config() -> ModelConfig {
    ModelConfig {
        d_model: 6,
        d_arc: 4,
        d_tag: 3,
        layers: vec![LayerKind::Attention, LayerKind::FeedForward],
        max_positions: 16,
        piece_len: 1,
        min_freq: 1,
        embedding_dropout: 0.2,
        hidden_dropout: 0.33,
        init_seed: 7,
    }
}

fn tiny_parser(seed: u64) -> (Parser, Vec<EncodedSentence>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tb = toy_treebank(&mut rng, 12, 1, 7);
    let mut cfg = tiny_config();
    cfg.init_seed = seed;
    let vocab = Vocabulary::build(&[&tb], cfg.min_freq, cfg.piece_len);
    let parser = Parser::new(cfg, vocab).unwrap();
    let enc = parser.encode_treebank(&tb);
    (parser, enc)
}

fn zero(parser: &mut Parser, idx: &[usize]) {
    for &i in idx {
        parser.params.get_mut(i).fill(0.0);
    }
}

#[test]
fn equal_gamma_gives_uniform_mixing() {
    let (parser, _) = tiny_parser(1);
    let w = parser.mixing_weights();
    assert_eq!(w.len(), parser.config.layers.len() + 1);
    for x in w {
        assert!((x - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn zero_eta_zeroes_embeddings() {
    let (mut parser, enc) = tiny_parser(2);
    let eta = parser.layout.eta;
    zero(&mut parser, &[eta]);
    let e = parser.encode(parser.params.tensors(), &enc[0]).unwrap();
    assert_eq!(e.shape(), &[enc[0].len(), parser.config.d_model]);
    assert!(e.data().iter().all(|&x| x == 0.0));
}

#[test]
fn empty_sentence_is_rejected() {
    let (parser, _) = tiny_parser(3);
    let empty = EncodedSentence {
        words: vec![],
        pieces: vec![],
        heads: vec![],
        labels: vec![],
    };
    assert!(matches!(parser.encode(parser.params.tensors(), &empty), Err(ModelError::EmptySentence)));
}

#[test]
fn zero_biaffine_gives_zero_scores() {
    let (mut parser, enc) = tiny_parser(4);
    let l = parser.layout.clone();
    zero(&mut parser, &[l.arc_u, l.arc_head_bias]);
    let m = parser.score_arcs(parser.params.tensors(), &enc[0]).unwrap();
    let n = m.len();
    for h in 0..=n {
        for d in 1..=n {
            if h != d {
                assert_eq!(m.score(h, d), 0.0);
            } else {
                assert_eq!(m.score(h, d), Real::NEG_INFINITY);
            }
        }
        assert_eq!(m.score(h, 0), Real::NEG_INFINITY);
    }
}

#[test]
fn single_word_attaches_to_root() {
    let (parser, enc) = tiny_parser(5);
    let one = enc.iter().find(|s| s.len() == 1).expect("fixture has a one-word sentence");
    let p = parser.predict(parser.params.tensors(), one).unwrap();
    assert_eq!(p.heads, vec![0]);
}

fn tanh_proj(x: &[Vec<f64>], w: &Tensor, b: &Tensor) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| {
            (0..w.cols())
                .map(|j| (row.iter().enumerate().map(|(i, v)| v * w.at(i, j)).sum::<f64>() + b.data()[j]).tanh())
                .collect()
        })
        .collect()
}

#[test]
fn arc_scores_match_hand_bilinear_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let tb = toy_treebank(&mut rng, 20, 2, 2);
    let mut cfg = tiny_config();
    cfg.d_arc = 2;
    let vocab = Vocabulary::build(&[&tb], 1, 1);
    let mut parser = Parser::new(cfg, vocab).unwrap();
    let l = parser.layout.clone();
    let fixed: [(usize, Vec<f64>); 4] = [
        (l.arc_u, vec![1.0, -2.0, 0.5, 3.0]),
        (l.arc_head_bias, vec![0.25, -1.5]),
        (l.arc_head_b, vec![0.1, -0.2]),
        (l.arc_dep_b, vec![-0.3, 0.4]),
    ];
    for (i, v) in fixed {
        parser.params.get_mut(i).data_mut().copy_from_slice(&v);
    }
    let s = &parser.encode_treebank(&tb)[0];
    assert_eq!(s.len(), 2);
    let e = parser.encode(parser.params.tensors(), s).unwrap();
    let mut rep = vec![parser.params.get(l.root).data().to_vec()];
    rep.extend((0..2).map(|r| e.row(r).to_vec()));
    let hh = tanh_proj(&rep, parser.params.get(l.arc_head_w), parser.params.get(l.arc_head_b));
    let hd = tanh_proj(&rep, parser.params.get(l.arc_dep_w), parser.params.get(l.arc_dep_b));
    let u = [[1.0, -2.0], [0.5, 3.0]];
    let ub = [0.25, -1.5];
    let m = parser.score_arcs(parser.params.tensors(), s).unwrap();
    for h in 0..3 {
        for d in 1..3 {
            if h == d {
                continue;
            }
            let mut want = hh[h][0] * ub[0] + hh[h][1] * ub[1];
            for a in 0..2 {
                for b in 0..2 {
                    want += hh[h][a] * u[a][b] * hd[d][b];
                }
            }
            assert!((m.score(h, d) - want).abs() < 1e-12, "({h},{d}): {} vs {want}", m.score(h, d));
        }
    }
}

#[test]
fn zero_label_scorer_is_uniform() {
    let (mut parser, enc) = tiny_parser(6);
    let l = parser.layout.clone();
    zero(&mut parser, &[l.lab_u, l.lab_wh, l.lab_wd, l.lab_b]);
    let s = &enc[1];
    let lp = parser.score_labels(parser.params.tensors(), s, &s.heads).unwrap();
    let k = parser.n_labels() as f64;
    for x in lp.data() {
        assert!((x + k.ln()).abs() < 1e-12);
    }
}

#[test]
fn label_log_probs_normalize() {
    let (parser, enc) = tiny_parser(7);
    for s in &enc {
        let lp = parser.score_labels(parser.params.tensors(), s, &s.heads).unwrap();
        for r in 0..lp.rows() {
            let z: f64 = lp.row(r).iter().map(|x| x.exp()).sum();
            assert!((z - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn invalid_head_is_rejected() {
    let (parser, enc) = tiny_parser(8);
    let s = &enc[0];
    let mut heads = s.heads.clone();
    heads[0] = s.len() + 1;
    assert!(matches!(
        parser.score_labels(parser.params.tensors(), s, &heads),
        Err(ModelError::InvalidHead { .. })
    ));
}

#[test]
fn uniform_model_loss_matches_closed_form() {
    let (mut parser, enc) = tiny_parser(9);
    let l = parser.layout.clone();
    zero(&mut parser, &[l.arc_u, l.arc_head_bias, l.lab_u, l.lab_wh, l.lab_wd, l.lab_b]);
    let k = parser.n_labels() as f64;
    for s in &enc {
        let n = s.len() as f64;
        // every word has n candidate heads: ROOT and the other n - 1 words
        let want = n * n.ln() + n * k.ln();
        let got = parser.sentence_loss(parser.params.tensors(), s, None).unwrap();
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }
}

#[test]
fn confident_model_loss_approaches_zero() {
    let (parser, enc) = tiny_parser(10);
    let s = enc.iter().find(|s| s.len() >= 3).unwrap();
    let before = parser.sentence_loss(parser.params.tensors(), s, None).unwrap();
    let mut params = parser.params.tensors().to_vec();
    for _ in 0..400 {
        let (_, g) = parser.loss_and_grad(&params, std::slice::from_ref(s), None).unwrap();
        let lrs = vec![0.5; params.len()];
        sgd_step(&mut params, &g, &lrs).unwrap();
    }
    let after = parser.sentence_loss(&params, s, None).unwrap();
    assert!(after < 0.05 * before, "{before} -> {after}");
    assert!(after >= 0.0);
}

#[test]
fn overfitting_one_sentence_decreases_loss_monotonically() {
    let (parser, enc) = tiny_parser(12);
    let s = enc.iter().find(|s| s.len() >= 5).unwrap();
    let mut params = parser.params.tensors().to_vec();
    let mut last = parser.sentence_loss(&params, s, None).unwrap();
    let first = last;
    for step in 0..50 {
        let (_, g) = parser.loss_and_grad(&params, std::slice::from_ref(s), None).unwrap();
        let lrs = vec![0.05; params.len()];
        sgd_step(&mut params, &g, &lrs).unwrap();
        let now = parser.sentence_loss(&params, s, None).unwrap();
        assert!(now < last, "step {step}: {last} -> {now}");
        last = now;
    }
    assert!(last < 0.5 * first);
}

fn fd_check(parser: &Parser, s: &EncodedSentence, dropout_seed: Option<u64>) -> f64 {
    let params = parser.params.tensors().to_vec();
    let rng_for = |seed: Option<u64>| seed.map(ChaCha8Rng::seed_from_u64);
    let eval = |p: &[Tensor]| {
        let mut r = rng_for(dropout_seed);
        parser.sentence_loss(p, s, r.as_mut()).unwrap()
    };
    let mut r = rng_for(dropout_seed);
    let (_, grads) = parser.loss_and_grad(&params, std::slice::from_ref(s), r.as_mut()).unwrap();
    let n = s.len() as f64;
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut work = params.clone();
    for (ti, g) in grads.iter().enumerate() {
        for j in 0..g.len() {
            let orig = work[ti].data()[j];
            work[ti].data_mut()[j] = orig + h;
            let plus = eval(&work);
            work[ti].data_mut()[j] = orig - h;
            let minus = eval(&work);
            work[ti].data_mut()[j] = orig;
            let num = (plus - minus) / (2.0 * h) / n;
            let ana = g.data()[j];
            let err = (num - ana).abs() / (num.abs() + ana.abs()).max(1e-4);
            worst = worst.max(err);
        }
    }
    worst
}

#[test]
fn full_model_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let tb = toy_treebank(&mut rng, 6, 5, 5);
    let vocab = Vocabulary::build(&[&tb], 1, 1);
    let parser = Parser::new(tiny_config(), vocab).unwrap();
    let s = &parser.encode_treebank(&tb)[0];
    let plain = fd_check(&parser, s, None);
    assert!(plain < 1e-4, "rel err {plain}");
    let dropped = fd_check(&parser, s, Some(99));
    eprintln!("max relative error: {plain:.2e} plain, {dropped:.2e} with dropout");
    assert!(dropped < 1e-4, "rel err with dropout {dropped}");
}

#[test]
fn same_seed_gives_identical_loss() {
    let (parser, enc) = tiny_parser(14);
    let run = |seed| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        parser.loss_and_grad(parser.params.tensors(), &enc, Some(&mut r)).unwrap()
    };
    let (a, ga) = run(5);
    let (b, gb) = run(5);
    assert_eq!(a.to_bits(), b.to_bits());
    assert_eq!(ga, gb);
    let (c, _) = run(6);
    assert_ne!(a, c);
}

#[test]
fn prediction_matches_brute_force_tree() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for trial in 0..40 {
        let (parser, enc) = tiny_parser(100 + trial);
        let s = &enc[rng.gen_range(0..enc.len())];
        if s.len() > 6 {
            continue;
        }
        let p = parser.predict(parser.params.tensors(), s).unwrap();
        validate_tree(&p.heads).unwrap();
        let m = parser.score_arcs(parser.params.tensors(), s).unwrap();
        let best = brute_force_mst(&m).unwrap();
        assert!((m.total(&p.heads) - m.total(best.heads())).abs() < 1e-9);
        assert!(p.labels.iter().all(|&k| k < parser.n_labels()));
    }
}

#[test]
fn predicted_treebank_is_valid_and_keeps_tokens() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let tb = toy_treebank(&mut rng, 15, 1, 9);
    let vocab = Vocabulary::build(&[&tb], 1, 1);
    let parser = Parser::new(tiny_config(), vocab).unwrap();
    let pred = parser.predict_treebank(parser.params.tensors(), &tb).unwrap();
    assert_eq!(pred.len(), tb.len());
    for (g, p) in tb.sentences.iter().zip(&pred.sentences) {
        assert_eq!(g.forms(), p.forms());
        validate_tree(&p.heads()).unwrap();
    }
}

#[test]
fn argmax_prefers_lowest_index_on_ties() {
    let t = Tensor::matrix(2, 3, vec![1.0, 3.0, 3.0, 0.0, 0.0, 0.0]).unwrap();
    assert_eq!(argmax_rows(&t), vec![1, 0]);
}

#[test]
fn checkpoint_round_trip_and_hash_guard() {
    let (parser, enc) = tiny_parser(17);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    parser.save(&path).unwrap();
    let loaded = Parser::load(&path, Some(&parser.config.hash())).unwrap();
    assert_eq!(loaded, parser);
    let a = parser.sentence_loss(parser.params.tensors(), &enc[0], None).unwrap();
    let b = loaded.sentence_loss(loaded.params.tensors(), &enc[0], None).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());

    let mut other = parser.config.clone();
    other.d_arc += 1;
    match Parser::load(&path, Some(&other.hash())) {
        Err(ModelError::ConfigHash { expected, found }) => {
            assert_eq!(expected, other.hash());
            assert_eq!(found, parser.config.hash());
        }
        r => panic!("expected hash refusal, got {r:?}"),
    }

    // tampering with the stored config is caught by the stored hash
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replacen("\"d_arc\":4", "\"d_arc\":5", 1)).unwrap();
    assert!(matches!(Parser::load(&path, None), Err(ModelError::ConfigHash { .. })));
}

#[test]
fn config_hash_tracks_every_field() {
    let a = ModelConfig::default();
    let mut b = a.clone();
    assert_eq!(a.hash(), b.hash());
    b.hidden_dropout = 0.3;
    assert_ne!(a.hash(), b.hash());
    assert_eq!(a.hash().len(), 64);
}
