use std::io::BufRead;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use infodemic::evaluate::ReportFormat;
use infodemic::pipeline::{self, PipelineConfig, PipelineError, StageSummary, EXIT_INTERNAL, EXIT_USAGE};

#[derive(Parser)]
#[command(name = "infodemic", version, about = "Fake-news detection pipeline for labeled tweet corpora")]
struct Cli {
    /// Pipeline configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Resolve the label index into tweet records (fixture or live API).
    Hydrate,
    /// Clean text and write the binarized feature table.
    Prepare,
    /// Rebalance the feature table.
    Balance,
    /// Train every configured model on the balanced table.
    Train,
    /// Cross-validate every configured model and write the report.
    Evaluate,
    /// Score texts with a trained model; prints `<label> <score>` per text.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Text to score; repeatable. Reads one text per stdin line if absent.
        #[arg(long)]
        text: Vec<String>,
    },
    /// Model file operations.
    Model {
        #[command(subcommand)]
        command: ModelCommand,
    },
    /// Re-render report.json from the output directory.
    Report {
        #[arg(long, default_value = "markdown")]
        format: String,
    },
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Print the JSON header of a model file.
    Inspect { model: PathBuf },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.paths.out = std::env::current_dir()
            .map(|d| d.join(out))
            .unwrap_or_else(|_| out.clone());
    }
    Ok(cfg)
}

fn print_summary(s: &StageSummary) {
    for line in &s.lines {
        println!("{line}");
    }
}

fn run(cli: Cli) -> Result<u8, PipelineError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(PipelineError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
    }
    let cfg = load_config(&cli)?;
    let summary = match &cli.command {
        Command::Hydrate => pipeline::cmd_hydrate(&cfg)?,
        Command::Prepare => pipeline::cmd_prepare(&cfg)?,
        Command::Balance => pipeline::cmd_balance(&cfg)?,
        Command::Train => pipeline::cmd_train(&cfg)?,
        Command::Evaluate => pipeline::cmd_evaluate(&cfg)?.1,
        Command::Predict { model, text } => {
            let texts = if text.is_empty() {
                std::io::stdin()
                    .lock()
                    .lines()
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| PipelineError::Input {
                        path: "<stdin>".into(),
                        message: e.to_string(),
                    })?
            } else {
                text.clone()
            };
            for p in pipeline::cmd_predict(model, &texts)? {
                println!("{} {}", p.label.as_u8(), p.score);
            }
            return Ok(0);
        }
        Command::Model {
            command: ModelCommand::Inspect { model },
        } => {
            let header = pipeline::cmd_inspect(model)?;
            println!("{}", serde_json::to_string_pretty(&header).expect("header serializes"));
            return Ok(0);
        }
        Command::Report { format } => {
            let format: ReportFormat = format.parse()?;
            print!("{}", pipeline::cmd_report(&cfg, format)?);
            return Ok(0);
        }
    };
    print_summary(&summary);
    Ok(if summary.incomplete { pipeline::EXIT_DATA as u8 } else { 0 })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(code)) => ExitCode::from(code),
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => ExitCode::from(EXIT_INTERNAL as u8),
    }
}
