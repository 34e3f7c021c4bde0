use super::*;
use crate::synthlang::GrammarSpec;

fn tiny_setup() -> SyntheticSetup {
    let lang = |tag: &str, p: f64, rate: f64| {
        let mut g = GrammarSpec::uniform(tag, p);
        g.vocab_size = 80;
        g.max_len = 8;
        g.nonproj_rate = rate;
        g.head_initial.insert("det".into(), 1.0 - p);
        g
    };
    SyntheticSetup {
        pretrain_sentences: 60,
        meta_train_sentences: 50,
        pool_sentences: 30,
        test_sentences: 10,
        seed: 3,
        pretrain: lang("src", 0.8, 0.0),
        meta_train: vec![lang("m1", 0.2, 0.1), lang("m2", 0.6, 0.3)],
        validation: vec![lang("v1", 0.4, 0.1)],
        test: vec![lang("t1", 0.3, 0.0), lang("t2", 0.7, 0.2), lang("t3", 0.1, 0.4)],
    }
}

fn tiny_settings() -> ExperimentSettings {
    let mut s = ExperimentSettings::default();
    s.model.d_model = 16;
    s.model.d_arc = 16;
    s.model.d_tag = 8;
    s.model.layers.truncate(1);
    s.meta.pretrain.epochs = 8;
    s.meta.episodes_per_language = 6;
    s.meta.inner_steps = 3;
    s.meta.support_size = 5;
    s.meta.query_size = 5;
    s.meta.validation_interval = 2;
    s.meta.validation_support = 5;
    s.meta.no_pretrain_episode_factor = 1;
    s.seeds = vec![1, 2];
    s.support_sizes = vec![5, 10];
    s.repetitions = 2;
    s
}

#[test]
fn every_model_reports_every_cell() {
    let setup = tiny_setup();
    setup.validate().unwrap();
    let data = setup.generate();
    let settings = tiny_settings();
    let results = run_experiment(&data, &settings, &mut NoSink).unwrap();
    // 5 models × 3 languages × 2 sizes × 2 repetitions × 2 seeds
    assert_eq!(results.reports.len(), 5 * 3 * 2 * 2 * 2);
    assert_eq!(results.training.len(), 3 * 2);
    let table = results_table(&results).unwrap();
    assert_eq!(table.lines().count(), 1 + 5 * 3 * 2);
    let analysis = analyze(&results, &data, Some(&setup.typology()), 5).unwrap();
    assert!(analysis.fig3.clone().unwrap().lines().count() > 1, "{:?}", analysis.notes);
    // a model whose gains are constant at this scale is skipped with a note
    let skipped = analysis.notes.iter().filter(|n| n.contains("projectivity")).count();
    assert_eq!(analysis.fig5.unwrap().lines().count(), 1 + (2 - skipped) * 3);
}

#[test]
fn runs_are_reproducible() {
    let data = tiny_setup().generate();
    let mut settings = tiny_settings();
    settings.seeds = vec![4];
    settings.models = vec![MAML.into(), NE.into()];
    let a = run_experiment(&data, &settings, &mut NoSink).unwrap();
    let b = run_experiment(&data, &settings, &mut NoSink).unwrap();
    assert_eq!(results_table(&a).unwrap(), results_table(&b).unwrap());
    assert_eq!(a, b);
}

#[test]
fn settings_validation() {
    let mut s = tiny_settings();
    s.models.push("udify".into());
    assert!(matches!(s.validate(), Err(ExperimentError::Config(_))));
    let mut s = tiny_settings();
    s.seeds.clear();
    assert!(s.validate().is_err());
    let mut setup = tiny_setup();
    setup.test[0].language = "src".into();
    assert!(setup.validate().is_err());
}

#[test]
fn adaptation_settings_fall_back_to_the_inner_loop() {
    let mut s = tiny_settings();
    assert_eq!(s.adapt_for(NE).steps, s.meta.inner_steps);
    s.mt_only_test = Some(AdaptSettings { lr: GroupRates::uniform(0.1), steps: 40 });
    assert_eq!(s.adapt_for(META_TEST_ONLY).steps, 40);
    assert_eq!(s.adapt_for(MAML).steps, s.meta.inner_steps);
}

#[test]
fn too_few_test_languages_skip_analyses() {
    let mut setup = tiny_setup();
    setup.test.truncate(2);
    let data = setup.generate();
    let mut settings = tiny_settings();
    settings.seeds = vec![1];
    settings.models = vec![MONO.into(), MAML.into()];
    let results = run_experiment(&data, &settings, &mut NoSink).unwrap();
    let a = analyze(&results, &data, None, 5).unwrap();
    assert!(a.fig5.is_none());
    assert_eq!(a.notes.len(), 1);
}
