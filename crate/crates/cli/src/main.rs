use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lscr::analysis::DEFAULT_TOP_K;
use lscr_cli::{cmd_analyze, cmd_eval, cmd_train, AnalyzeArgs, CliError, EvalArgs};

/// Train, evaluate and inspect clustering-regularized text classifiers.
#[derive(Parser)]
#[command(name = "lscr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a TOML run configuration.
    Train {
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Override one configuration key, e.g. `--set m=8`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(short, long)]
        quiet: bool,
    },
    /// Report accuracy and the confusion matrix of a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Where to write the JSON report (default: next to the checkpoint).
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Export cluster statistics, heat maps and text-level distributions.
    Analyze {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_TOP_K)]
        top_k: usize,
        /// Text whose word-to-cluster matrix is exported.
        #[arg(long, value_name = "TEXT")]
        heatmap: Option<String>,
        /// 0-based gold class of the heat-map text.
        #[arg(long, requires = "heatmap")]
        gold: Option<usize>,
        #[arg(long, value_name = "PATH")]
        export_distributions: Option<PathBuf>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// The dataset's first row is a header.
    #[arg(long)]
    has_header: bool,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long)]
    max_len: Option<usize>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut stdout = io::stdout().lock();
    match cli.command {
        Command::Train {
            config,
            overrides,
            quiet,
        } => {
            cmd_train(config.as_deref(), &overrides, quiet)?;
        }
        Command::Eval {
            checkpoint,
            data,
            report,
            common,
        } => {
            let args = EvalArgs {
                checkpoint,
                data,
                has_header: common.has_header,
                batch_size: common.batch_size,
                max_len: common.max_len,
                report,
            };
            let (_, path) = cmd_eval(&args, &mut stdout)?;
            println!("wrote {}", path.display());
        }
        Command::Analyze {
            checkpoint,
            data,
            top_k,
            heatmap,
            gold,
            export_distributions,
            output_dir,
            common,
        } => {
            let args = AnalyzeArgs {
                checkpoint,
                data,
                has_header: common.has_header,
                top_k,
                heatmap,
                gold,
                export_distributions,
                output_dir,
                batch_size: common.batch_size,
                max_len: common.max_len,
            };
            cmd_analyze(&args, &mut stdout)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors, matching our own convention.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
