use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use udmeta::conllu::{emit_conllu, parse_conllu};
use udmeta::evaluate::{las, EvalReport};
use udmeta::experiment::{
    analyze, evaluate_model, pretrain_stage, results_table, seeded_parser, train_stage, Analysis, ExperimentData, ExperimentResults,
    TrainingSummary, MAML, MAML_NO_PRETRAIN, META_TEST_ONLY, MODELS, MONO, NE,
};
use udmeta::meta::{Observer, StepRecord};
use udmeta::model::{ModelConfig, Parser};
use udmeta::numeric::Tensor;

use crate::artifacts::{check_upstream, write, write_manifest, Layout};
use crate::config::{language_from_path, Loaded};
use crate::error::{CliError, Result};

fn layout(cfg: &Loaded) -> Layout {
    Layout { root: cfg.output_dir() }
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

/// Writes every synthetic treebank and the typology table to the `[data]` paths.
pub fn synth(cfg: &Loaded) -> Result<Vec<PathBuf>> {
    let setup = cfg.config.synthetic.as_ref().ok_or_else(|| CliError::config("synth needs a [synthetic] section"))?;
    let d = &cfg.config.data;
    if setup.meta_train.len() != d.meta_train.len() || setup.validation.len() != d.validation.len() || setup.test.len() != d.test.len() {
        return Err(CliError::config("[synthetic] and [data] list different numbers of languages per role"));
    }
    let mut pairs: Vec<(&str, &Path)> = vec![(&setup.pretrain.language, &d.pretrain)];
    pairs.extend(setup.meta_train.iter().zip(&d.meta_train).map(|(g, p)| (g.language.as_str(), p.as_path())));
    for (g, h) in setup.validation.iter().zip(&d.validation).chain(setup.test.iter().zip(&d.test)) {
        pairs.push((&g.language, &h.pool));
        if h.test.is_none() {
            return Err(CliError::config(format!("{}: synthetic held-out languages need a test path", g.language)));
        }
    }
    for (lang, p) in &pairs {
        if language_from_path(p) != *lang {
            return Err(CliError::config(format!("{} does not name language {lang}", p.display())));
        }
    }
    let data = setup.generate();
    let mut written = Vec::new();
    let mut emit = |p: &Path, text: String| -> Result<()> {
        let full = cfg.resolve(p);
        write(&full, text)?;
        written.push(full);
        Ok(())
    };
    emit(&d.pretrain, emit_conllu(&data.pretrain))?;
    for (tb, p) in data.meta_train.iter().zip(&d.meta_train) {
        emit(p, emit_conllu(tb))?;
    }
    for (t, h) in data.validation.iter().zip(&d.validation).chain(data.test.iter().zip(&d.test)) {
        emit(&h.pool, emit_conllu(&t.pool))?;
        if let (Some(tb), Some(p)) = (&t.test, &h.test) {
            emit(p, emit_conllu(tb))?;
        }
    }
    if let Some(p) = &d.typology {
        emit(p, setup.typology().to_csv())?;
    }
    let refs: Vec<&Path> = written.iter().map(PathBuf::as_path).collect();
    let primary = layout(cfg).root.join("synth");
    write_manifest(&primary, "synth", &cfg.hash, Some(setup.seed), &refs)?;
    Ok(written)
}

fn model_hash(cfg: &Loaded, seed: u64) -> String {
    ModelConfig { init_seed: seed, ..cfg.settings().model.clone() }.hash()
}

fn save_params(parser: &Parser, params: &[Tensor], path: &Path) -> Result<()> {
    let mut p = parser.clone();
    p.set_tensors(params.to_vec())?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    p.save(path)?;
    Ok(())
}

fn load_checkpoint(cfg: &Loaded, path: &Path, seed: u64) -> Result<Parser> {
    check_upstream(path, &cfg.hash)?;
    Ok(Parser::load(path, Some(&model_hash(cfg, seed)))?)
}

pub fn pretrain(cfg: &Loaded) -> Result<()> {
    let data = cfg.load_data()?;
    let vocab = data.vocabulary(&cfg.settings().model);
    let out = layout(cfg);
    for &seed in &cfg.settings().seeds {
        log::info!("seed {seed}: pre-training on {}", data.pretrain.language);
        let parser = seeded_parser(cfg.settings(), &vocab, seed)?;
        let params = pretrain_stage(&parser, &data, cfg.settings(), seed)?;
        let path = out.pretrained(seed);
        save_params(&parser, &params, &path)?;
        write_manifest(&path, "pretrain", &cfg.hash, Some(seed), &[&path])?;
    }
    Ok(())
}

struct Telemetry<'a> {
    model: &'a str,
    seed: u64,
    out: BufWriter<File>,
    snapshot: Box<dyn FnMut(usize, &[Tensor]) -> Result<()> + 'a>,
    error: Option<CliError>,
}

#[derive(Serialize)]
struct TelemetryLine<'a> {
    model: &'a str,
    seed: u64,
    #[serde(flatten)]
    record: &'a StepRecord,
}

impl Observer for Telemetry<'_> {
    fn on_step(&mut self, record: &StepRecord) {
        if self.error.is_some() {
            return;
        }
        let line = TelemetryLine { model: self.model, seed: self.seed, record };
        let res = serde_json::to_string(&line).map_err(CliError::from).and_then(|s| writeln!(self.out, "{s}").map_err(|e| CliError::data(e.to_string())));
        self.error = res.err();
    }

    fn on_checkpoint(&mut self, step: usize, params: &[Tensor]) {
        if self.error.is_none() {
            self.error = (self.snapshot)(step, params).err();
        }
    }
}

/// Trains each of `models` for every seed, writing checkpoint, telemetry and summary.
pub fn train(cfg: &Loaded, models: &[&str], command: &str) -> Result<()> {
    let data = cfg.load_data()?;
    let vocab = data.vocabulary(&cfg.settings().model);
    let out = layout(cfg);
    for &seed in &cfg.settings().seeds {
        for &model in models {
            let (parser, pretrained) = if model == MAML_NO_PRETRAIN {
                let p = seeded_parser(cfg.settings(), &vocab, seed)?;
                let init = p.params.tensors().to_vec();
                (p, init)
            } else {
                let p = load_checkpoint(cfg, &out.pretrained(seed), seed)?;
                let init = p.params.tensors().to_vec();
                (p, init)
            };
            if parser.vocab != vocab {
                return Err(CliError::data("treebanks changed since pre-training; the vocabulary differs"));
            }
            log::info!("seed {seed}: training {model}");
            let tpath = out.telemetry(model, seed);
            write(&tpath, "")?;
            let file = File::create(&tpath).map_err(|e| CliError::io(&tpath, e))?;
            let (summary, params) = {
                let parser_ref = &parser;
                let out_ref = &out;
                let hash = cfg.hash.clone();
                let mut obs = Telemetry {
                    model,
                    seed,
                    out: BufWriter::new(file),
                    snapshot: Box::new(move |step, params| {
                        let p = out_ref.snapshot(model, seed, step);
                        save_params(parser_ref, params, &p)?;
                        write_manifest(&p, command, &hash, Some(seed), &[&p])
                    }),
                    error: None,
                };
                let (params, summary) = train_stage(&parser, &pretrained, &data, cfg.settings(), model, seed, cfg.config.checkpoint_interval, &mut obs)?;
                if let Some(e) = obs.error.take() {
                    return Err(e);
                }
                obs.out.flush().map_err(|e| CliError::io(&tpath, e))?;
                (summary, params)
            };
            let ck = out.trained(model, seed);
            save_params(&parser, &params, &ck)?;
            let spath = out.summary(model, seed);
            write(&spath, to_json(&summary)?)?;
            write_manifest(&ck, command, &cfg.hash, Some(seed), &[&ck, &tpath, &spath])?;
            log::info!("seed {seed}: {model} best step {} of {}", summary.best_step, summary.steps);
        }
    }
    Ok(())
}

/// Parameters the given model is meta-tested from.
fn tested_parser(cfg: &Loaded, data: &ExperimentData, model: &str, seed: u64) -> Result<Parser> {
    let out = layout(cfg);
    match model {
        META_TEST_ONLY => Ok(seeded_parser(cfg.settings(), &data.vocabulary(&cfg.settings().model), seed)?),
        MONO => load_checkpoint(cfg, &out.pretrained(seed), seed),
        NE | MAML | MAML_NO_PRETRAIN => load_checkpoint(cfg, &out.trained(model, seed), seed),
        other => Err(CliError::config(format!("unknown model {other}"))),
    }
}

pub fn metatest(cfg: &Loaded, models: &[&str]) -> Result<()> {
    let data = cfg.load_data()?;
    let out = layout(cfg);
    for &seed in &cfg.settings().seeds {
        for &model in models {
            let parser = tested_parser(cfg, &data, model, seed)?;
            log::info!("seed {seed}: meta-testing {model}");
            let reports = evaluate_model(&parser, parser.params.tensors(), &data, cfg.settings(), model, seed)?;
            let path = out.reports(model, seed);
            write(&path, to_json(&reports)?)?;
            write_manifest(&path, "metatest", &cfg.hash, Some(seed), &[&path])?;
        }
    }
    Ok(())
}

/// Scores a prediction file against gold, or parses `input` with a trained
/// model first.
pub enum EvalInput<'a> {
    Files { gold: &'a Path, pred: &'a Path },
    Model { cfg: &'a Loaded, model: &'a str, seed: u64, input: &'a Path, output: Option<&'a Path> },
}

fn read_treebank(p: &Path) -> Result<udmeta::conllu::Treebank> {
    let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
    parse_conllu(&text, &language_from_path(p)).map_err(|e| CliError::data(format!("{}: {e}", p.display())))
}

pub fn eval(input: EvalInput) -> Result<String> {
    let (gold, pred) = match input {
        EvalInput::Files { gold, pred } => (read_treebank(gold)?, read_treebank(pred)?),
        EvalInput::Model { cfg, model, seed, input, output } => {
            let gold = read_treebank(input)?;
            let out = layout(cfg);
            let path = if model == MONO { out.pretrained(seed) } else { out.trained(model, seed) };
            let parser = load_checkpoint(cfg, &path, seed)?;
            let pred = parser.predict_treebank(parser.params.tensors(), &gold)?;
            if let Some(o) = output {
                write(o, emit_conllu(&pred))?;
            }
            (gold, pred)
        }
    };
    let scores = las(&gold, &pred)?;
    Ok(serde_json::to_string(&serde_json::json!({
        "language": gold.language,
        "las": scores.las,
        "uas": scores.uas,
        "labeled_correct": scores.labeled_correct,
        "head_correct": scores.head_correct,
        "total": scores.total,
    }))?)
}

/// Collects meta-test reports in seed-major, model-report order.
fn collect(cfg: &Loaded) -> Result<ExperimentResults> {
    let out = layout(cfg);
    let mut results = ExperimentResults::default();
    let selected: Vec<&str> = MODELS.iter().copied().filter(|m| cfg.settings().models.iter().any(|x| x == m)).collect();
    for &seed in &cfg.settings().seeds {
        for &model in &selected {
            let path = out.reports(model, seed);
            check_upstream(&path, &cfg.hash)?;
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            let reports: Vec<EvalReport> = serde_json::from_str(&text)?;
            results.reports.extend(reports);
            let spath = out.summary(model, seed);
            if spath.is_file() {
                let s: TrainingSummary = serde_json::from_str(&std::fs::read_to_string(&spath).map_err(|e| CliError::io(&spath, e))?)?;
                results.training.push(s);
            }
        }
    }
    Ok(results)
}

fn write_analysis(dir: &Path, a: &Analysis, outputs: &mut Vec<PathBuf>) -> Result<()> {
    for (name, body) in [("fig3.csv", &a.fig3), ("fig4.csv", &a.fig4), ("fig5.csv", &a.fig5)] {
        if let Some(text) = body {
            let p = dir.join(name);
            write(&p, text)?;
            outputs.push(p);
        }
    }
    let notes = dir.join("notes.txt");
    write(&notes, a.notes.iter().map(|n| format!("{n}\n")).collect::<String>())?;
    outputs.push(notes);
    Ok(())
}

fn run_analysis(cfg: &Loaded, results: &ExperimentResults) -> Result<Analysis> {
    let data = cfg.load_data()?;
    let typology = cfg.load_typology()?;
    Ok(analyze(results, &data, typology.as_ref(), cfg.settings().analysis_support)?)
}

pub fn analyze_cmd(cfg: &Loaded) -> Result<Vec<PathBuf>> {
    let results = collect(cfg)?;
    let a = run_analysis(cfg, &results)?;
    let dir = layout(cfg).analysis();
    let mut outputs = Vec::new();
    write_analysis(&dir, &a, &mut outputs)?;
    let refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    write_manifest(&dir.join("analysis"), "analyze", &cfg.hash, None, &refs)?;
    Ok(outputs)
}

pub fn report(cfg: &Loaded) -> Result<Vec<PathBuf>> {
    let results = collect(cfg)?;
    let dir = layout(cfg).report();
    let mut outputs = Vec::new();
    let tables = dir.join("tables.csv");
    write(&tables, results_table(&results)?)?;
    outputs.push(tables);
    let training = dir.join("training.json");
    write(&training, to_json(&results.training)?)?;
    outputs.push(training);
    let a = run_analysis(cfg, &results)?;
    write_analysis(&dir, &a, &mut outputs)?;
    let refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    write_manifest(&dir.join("report"), "report", &cfg.hash, None, &refs)?;
    Ok(outputs)
}

/// Models of `requested` that the configuration selects, or all of
/// `family` when nothing was requested.
pub fn select<'a>(cfg: &Loaded, requested: &'a [String], family: &[&'a str]) -> Result<Vec<&'a str>> {
    if let Some(m) = requested.iter().find(|m| !family.contains(&m.as_str())) {
        return Err(CliError::config(format!("{m} is not one of {family:?}")));
    }
    let wanted: Vec<&str> = if requested.is_empty() { family.to_vec() } else { requested.iter().map(String::as_str).collect() };
    Ok(wanted.into_iter().filter(|m| cfg.settings().models.iter().any(|x| x == m)).collect())
}
