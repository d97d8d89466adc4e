use clap::{Parser, Subcommand};
use std::path::PathBuf;
use stsgcn::cli::{
    cmd_count_params, cmd_eval, cmd_export_graph, cmd_predict, cmd_synth, cmd_train, Overrides,
    RunConfig,
};
use stsgcn::model::AdjacencyKind;
use stsgcn::model::EncoderVariant;

#[derive(Parser)]
#[command(
    name = "stsgcn",
    about = "Pose forecasting with a space-time-separable graph encoder"
)]
struct Cli {
    /// Run configuration (JSON with model/train/data/synth/output sections).
    #[arg(long)]
    config: PathBuf,
    /// Override train.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override model.variant: separable|full|distinct|shared.
    #[arg(long)]
    variant: Option<String>,
    /// Override train.epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Override output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset files.
    Synth,
    /// Train; writes checkpoint.txt and train_report.csv.
    Train,
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Forecast the continuation of one sequence file.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        sequence: PathBuf,
    },
    /// Export a learnt adjacency stack as CSV.
    ExportGraph {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        layer: usize,
        /// space|time
        #[arg(long)]
        kind: String,
    },
    /// Print the itemized trainable-parameter breakdown.
    CountParams,
}

fn run(cli: Cli) -> stsgcn::Result<()> {
    let mut config = RunConfig::load(&cli.config)?;
    let overrides = Overrides {
        seed: cli.seed,
        variant: cli
            .variant
            .as_deref()
            .map(EncoderVariant::from_tag)
            .transpose()?,
        epochs: cli.epochs,
        out: cli.out.clone(),
    };
    config.apply(&overrides);

    match &cli.command {
        Command::Synth => {
            for path in cmd_synth(&config)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Train => {
            let (ckpt, report) = cmd_train(&config)?;
            println!("wrote {}", ckpt.display());
            println!("wrote {}", report.display());
        }
        Command::Eval { checkpoint } => {
            let (csv, txt) = cmd_eval(&config, checkpoint)?;
            println!("wrote {}", csv.display());
            println!("wrote {}", txt.display());
            print!("{}", std::fs::read_to_string(&txt).unwrap_or_default());
        }
        Command::Predict {
            checkpoint,
            sequence,
        } => {
            let path = cmd_predict(&config, checkpoint, sequence)?;
            println!("wrote {}", path.display());
        }
        Command::ExportGraph {
            checkpoint,
            layer,
            kind,
        } => {
            let kind = AdjacencyKind::from_tag(kind)?;
            let path = cmd_export_graph(&config, checkpoint, *layer, kind)?;
            println!("wrote {}", path.display());
        }
        Command::CountParams => {
            print!("{}", cmd_count_params(&config)?);
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        // single machine-parsable line
        eprintln!("error: {}", e.to_string().replace('\n', "; "));
        std::process::exit(1);
    }
}
