use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use udmeta::experiment::{MAML, MAML_NO_PRETRAIN, MODELS, NE};

mod artifacts;
mod commands;
mod config;
mod error;

use commands::EvalInput;
use config::Loaded;
use error::{CliError, Result};

#[derive(Parser)]
#[command(name = "udmeta", version, about = "Few-shot cross-lingual dependency parsing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment configuration (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Override one configuration key, e.g. `--set experiment.repetitions=2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Restrict the run to these seeds instead of the configured list.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<Loaded> {
        Loaded::from_file(&self.config, &self.overrides, &self.seeds)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic treebanks and typology table named in the config.
    Synth(ConfigArgs),
    /// Pre-train the parser on the pre-training treebank, one checkpoint per seed.
    Pretrain(ConfigArgs),
    /// Meta-train from the pre-trained checkpoints (maml) or from scratch (maml-nopt).
    Metatrain {
        #[command(flatten)]
        args: ConfigArgs,
        #[arg(long = "model", value_name = "MODEL")]
        models: Vec<String>,
    },
    /// Train the non-episodic baseline on the same episode stream.
    TrainNe(ConfigArgs),
    /// Fine-tune every trained model on support sets of the test languages and score it.
    Metatest {
        #[command(flatten)]
        args: ConfigArgs,
        #[arg(long = "model", value_name = "MODEL")]
        models: Vec<String>,
    },
    /// Score a CoNLL-U prediction, or parse a treebank with a trained model and score it.
    Eval {
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long, requires = "gold")]
        pred: Option<PathBuf>,
        #[arg(long, short, conflicts_with = "pred")]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, default_value = MAML)]
        model: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Where to write the predicted treebank.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Correlate gains over the monolingual baseline with typology and non-projectivity.
    Analyze(ConfigArgs),
    /// Write the results table and the figure CSVs.
    Report(ConfigArgs),
}

fn print_paths(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => print_paths(&commands::synth(&a.load()?)?),
        Command::Pretrain(a) => commands::pretrain(&a.load()?)?,
        Command::Metatrain { args, models } => {
            let cfg = args.load()?;
            let selected = commands::select(&cfg, &models, &[MAML, MAML_NO_PRETRAIN])?;
            commands::train(&cfg, &selected, "metatrain")?;
        }
        Command::TrainNe(a) => {
            let cfg = a.load()?;
            let selected = commands::select(&cfg, &[], &[NE])?;
            commands::train(&cfg, &selected, "train-ne")?;
        }
        Command::Metatest { args, models } => {
            let cfg = args.load()?;
            let selected = commands::select(&cfg, &models, &MODELS)?;
            commands::metatest(&cfg, &selected)?;
        }
        Command::Eval { gold, pred, config, overrides, model, seed, output } => {
            let line = match (gold, pred, config) {
                (Some(g), Some(p), _) => commands::eval(EvalInput::Files { gold: &g, pred: &p })?,
                (Some(g), None, Some(c)) => {
                    let cfg = Loaded::from_file(&c, &overrides, &[])?;
                    commands::eval(EvalInput::Model { cfg: &cfg, model: &model, seed, input: &g, output: output.as_deref() })?
                }
                _ => return Err(CliError::config("eval needs --gold with either --pred or --config")),
            };
            println!("{line}");
        }
        Command::Analyze(a) => print_paths(&commands::analyze_cmd(&a.load()?)?),
        Command::Report(a) => print_paths(&commands::report(&a.load()?)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            eprintln!("{}", CliError::config(e.kind().to_string()).json_line());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("{}", e.json_line());
            ExitCode::from(e.kind.exit_code() as u8)
        }
    }
}
