use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use fofe_link::candidates::{generate_corpus, CandidateList, Extensions};
use fofe_link::corpus::{read_corpus, read_jsonl, write_jsonl};
use fofe_link::kb::read_index;
use fofe_link::par::Execution;
use fofe_link::pipeline::{self, LinkRecord, PipelineConfig};
use fofe_link::ranker::{read_model, train, write_model};
use fofe_link::synth::write_synthetic;
use fofe_link::{Error, ErrorClass};

#[derive(Parser)]
#[command(name = "fofe-link", version, about = "Entity linking toolkit")]
struct Cli {
    /// Process documents one at a time instead of in parallel.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the binary KB index from KB JSONL.
    BuildKb {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Generate a synthetic KB and corpus.
    Synth {
        /// Config whose `[synth]` section describes the data; defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Generate distilled candidate lists for every mention of a corpus.
    GenCandidates {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Turn off all mention extensions.
        #[arg(long)]
        no_extensions: bool,
    },
    /// Train a ranker on a labelled corpus and its candidate lists.
    Train {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Link every mention of a corpus with a trained model.
    Link {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Precomputed candidate lists; generated on the fly when absent.
        #[arg(long)]
        candidates: Option<PathBuf>,
        /// Candidate settings used when generating on the fly.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Score links against a gold corpus.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
        report: ReportFormat,
        /// Write the report here instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the whole pipeline from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Text,
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    let mut cfg = match path {
        Some(p) => {
            PipelineConfig::load(p).with_context(|| format!("loading config {}", p.display()))?
        }
        None => PipelineConfig::default(),
    };
    cfg.apply_env()?;
    Ok(cfg)
}

fn execution(cli_sequential: bool, cfg: &PipelineConfig) -> Execution {
    if cli_sequential {
        Execution::Sequential
    } else {
        cfg.execution
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildKb { kb, output } => {
            pipeline::build_kb(&kb, &output)?;
        }
        Command::Synth { config, kb, corpus } => {
            let cfg = load_config(config.as_deref())?;
            let mut spec = cfg.synth.clone().unwrap_or_default();
            if let Some(seed) = cfg.seed {
                spec.seed = seed;
            }
            write_synthetic(&spec, &kb, &corpus)?;
            info!("wrote {} and {}", kb.display(), corpus.display());
        }
        Command::GenCandidates {
            kb,
            corpus,
            output,
            config,
            no_extensions,
        } => {
            let cfg = load_config(config.as_deref())?;
            let kb = read_index(&kb)?;
            let docs = read_corpus(&corpus)?;
            let mut opts = cfg.candidate_options();
            if no_extensions {
                opts.extensions = Extensions::none();
            }
            let lists = generate_corpus(&docs, &kb, &opts, execution(cli.sequential, &cfg));
            write_jsonl(&output, &lists)?;
            info!(
                "{} candidate lists written to {}",
                lists.len(),
                output.display()
            );
        }
        Command::Train {
            kb,
            corpus,
            candidates,
            config,
            output,
        } => {
            let cfg = load_config(Some(&config))?;
            let kb = read_index(&kb)?;
            let docs = read_corpus(&corpus)?;
            let lists: Vec<CandidateList> = read_jsonl(&candidates)?;
            let model = train(
                &docs,
                &lists,
                &kb,
                &cfg.train,
                execution(cli.sequential, &cfg),
            )?;
            write_model(&output, &model)?;
            info!("model written to {}", output.display());
        }
        Command::Link {
            model,
            kb,
            corpus,
            output,
            candidates,
            config,
        } => {
            let cfg = load_config(config.as_deref())?;
            let exec = execution(cli.sequential, &cfg);
            let kb = read_index(&kb)?;
            let docs = read_corpus(&corpus)?;
            let model = read_model(&model)?;
            let lists: Vec<CandidateList> = match candidates {
                Some(p) => read_jsonl(&p)?,
                None => generate_corpus(&docs, &kb, &cfg.candidate_options(), exec),
            };
            let links = pipeline::link_corpus(&model, &docs, &lists, &kb, exec)?;
            write_jsonl(&output, &links)?;
            info!(
                "{} mentions linked, {} to NIL, written to {}",
                links.len(),
                pipeline::nil_count(&links),
                output.display()
            );
        }
        Command::Eval {
            gold,
            pred,
            report,
            output,
        } => {
            let docs = read_corpus(&gold)?;
            let links: Vec<LinkRecord> = read_jsonl(&pred)?;
            let r = pipeline::evaluate_links(&docs, &links)?;
            let text = match report {
                ReportFormat::Json => r.to_json(),
                ReportFormat::Text => r.to_text(),
            };
            match output {
                Some(p) => {
                    std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?
                }
                None => print!("{text}"),
            }
        }
        Command::Run { config } => {
            let mut cfg = load_config(Some(&config))?;
            if cli.sequential {
                cfg.execution = Execution::Sequential;
            }
            let report = pipeline::run_pipeline(&cfg)?;
            print!("{}", report.to_text());
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let class = err
        .chain()
        .find_map(|e| e.downcast_ref::<Error>())
        .map(Error::class);
    match class {
        Some(ErrorClass::Validation) => 2,
        Some(ErrorClass::Runtime) | None => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
