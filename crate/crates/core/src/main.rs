//! Command-line entry point: batch runs, evaluation, index stats, and config
//! validation.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use ragline::config::PipelineConfig;
use ragline::evaluation::render_report_table;
use ragline::pipeline::{load_questions, Engine, EngineOptions};
use ragline::retrieval::{build_index, load_corpus};

#[derive(Parser)]
#[command(name = "ragline", version, about = "Batch retrieval-augmented generation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline over a JSONL question batch.
    Run {
        /// Questions file: one {"id", "question"} object per line.
        #[arg(long)]
        input: PathBuf,
        /// Output records file (JSONL, input order preserved).
        #[arg(long)]
        output: PathBuf,
        /// Pipeline config JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// JSONL corpus for the embedded retriever.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Directory for the content-addressed response cache.
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        /// Scripted mock transcript; replaces all model backends.
        #[arg(long)]
        mock_transcript: Option<PathBuf>,
        /// Zero recorded stage timings so repeat runs are byte-identical.
        #[arg(long)]
        deterministic: bool,
    },
    /// Judge a records file produced by `run`.
    Eval {
        /// Records file from `run`.
        #[arg(long)]
        records: PathBuf,
        /// Verdicts output file (JSONL).
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Corpus used to resolve document texts for judging.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        #[arg(long)]
        mock_transcript: Option<PathBuf>,
    },
    /// Print statistics for a JSONL corpus.
    IndexStats {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Validate a pipeline config file.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load_config(path: &Option<PathBuf>) -> anyhow::Result<PipelineConfig> {
    match path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))?;
            PipelineConfig::from_json(&text)
                .with_context(|| format!("cannot parse config {}", path.display()))
        }
        None => Ok(PipelineConfig::default()),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();

    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            input,
            output,
            config,
            corpus,
            cache_dir,
            mock_transcript,
            deterministic,
        } => {
            let config = load_config(&config)?;
            let engine = Engine::new(
                config,
                EngineOptions {
                    corpus_path: corpus,
                    mock_transcript,
                    cache_dir,
                    deterministic,
                },
            )?;
            // Fail fast on unreadable input before any pipeline work.
            load_questions(&input)?;
            let runtime = tokio::runtime::Runtime::new()?;
            let summary = runtime.block_on(engine.run_batch(&input, &output))?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(if summary.is_clean() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Eval {
            records,
            output,
            config,
            corpus,
            cache_dir,
            mock_transcript,
        } => {
            let config = load_config(&config)?;
            let engine = Engine::new(
                config,
                EngineOptions {
                    corpus_path: corpus,
                    mock_transcript,
                    cache_dir,
                    deterministic: false,
                },
            )?;
            let runtime = tokio::runtime::Runtime::new()?;
            let report = runtime.block_on(engine.run_eval(&records, &output))?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            print!("{}", render_report_table(&report));
            Ok(if report.unevaluable == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::IndexStats { corpus } => {
            let documents = load_corpus(&corpus)?;
            let index = build_index(documents)?;
            let stats = serde_json::json!({
                "doc_count": index.doc_count(),
                "avg_doc_length": index.avg_doc_length(),
                "distinct_terms": index.distinct_terms(),
                "total_postings": index.total_postings(),
            });
            println!("{}", serde_json::to_string_pretty(&stats)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::ValidateConfig { config } => {
            let parsed = load_config(&Some(config))?;
            match parsed.validate() {
                Ok(()) => {
                    println!("config ok");
                    Ok(ExitCode::SUCCESS)
                }
                Err(violations) => {
                    eprintln!("config invalid:");
                    for violation in violations {
                        eprintln!("  - {violation}");
                    }
                    Ok(ExitCode::from(2))
                }
            }
        }
    }
}
