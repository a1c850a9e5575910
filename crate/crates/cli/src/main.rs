use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod status;

use status::CliError;

#[derive(Parser)]
#[command(name = "torsonet", version, about = "Train and run the torso radiograph sorter")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the layer table and parameter totals.
    Summary {
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value = "relu")]
        activation: String,
    },
    /// Train on a class-per-directory image tree.
    Train(TrainArgs),
    /// Score a trained model on a labelled image tree.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Classify individual images.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Run the gradient checks and the layer-table conformance check.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Swap in a faulty backward pass (negative control).
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// List the images of a dataset tree as `path<TAB>class` lines.
    Index {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the synthetic ellipse dataset as graymaps.
    Toy {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "relu")]
    pub activation: String,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f32,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "val-split", default_value_t = 0.2)]
    pub val_split: f64,
}

fn run(cli: Cli) -> Result<(), CliError> {
    torsonet::train::init_threads_from_env()?;
    match cli.command {
        Command::Summary { classes, activation } => commands::summary(classes, &activation),
        Command::Train(args) => commands::train(&args),
        Command::Eval { model, data } => commands::eval(&model, &data),
        Command::Predict { model, images } => commands::predict(&model, &images),
        Command::Verify { seed, inject_fault } => commands::verify(seed, inject_fault.as_deref()),
        Command::Index { data, out } => commands::index(&data, out.as_deref()),
        Command::Toy { out, per_class, seed } => commands::toy(&out, per_class, seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { status::USAGE } else { status::OK });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(status::OK),
        Err(e) => {
            if let Some(msg) = e.message() {
                eprintln!("error: {msg}");
            }
            ExitCode::from(e.code())
        }
    }
}
