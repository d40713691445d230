mod commands;
mod manifest;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "retouch",
    version,
    about = "Learn a detail retouching edit from one before/after pair and apply it"
)]
struct Cli {
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Learn a model from an aligned before/after pair
    Train(commands::train::TrainArgs),
    /// Apply a trained model to one image or a directory
    Apply(commands::apply::ApplyArgs),
    /// Run a reference filter
    Filter(commands::filter::FilterArgs),
    /// Score images against references (PSNR, SSIM)
    Eval(commands::eval::EvalArgs),
    /// Write the band decomposition of an image
    Decompose(commands::decompose::DecomposeArgs),
    /// Train for several K on one pair and score each on a corpus
    Sweep(commands::sweep::SweepArgs),
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Commands::Train(args) => commands::train::run(args),
        Commands::Apply(args) => commands::apply::run(args),
        Commands::Filter(args) => commands::filter::run(args),
        Commands::Eval(args) => commands::eval::run(args),
        Commands::Decompose(args) => commands::decompose::run(args),
        Commands::Sweep(args) => commands::sweep::run(args),
    }
}
