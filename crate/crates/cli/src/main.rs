use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use episwitch::{configure_threads, plot_file, run_file};

#[derive(Parser)]
#[command(name = "episwitch", version, about = "Switched SIS epidemic analyses from JSON scenario files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write report.json, trajectory.csv and trajectory.svg.
    Run {
        scenario: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render a trajectory CSV as SVG.
    Plot {
        csv: PathBuf,
        /// Output file; defaults to the CSV path with an .svg extension.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = configure_threads(std::env::var("EPISWITCH_THREADS").ok().as_deref()).and_then(|()| match cli.command {
        Command::Run { scenario, out, seed } => run_file(&scenario, out.as_deref(), seed).map(|r| {
            println!("{}", r.out_dir.display());
        }),
        Command::Plot { csv, out } => plot_file(&csv, out.as_deref()).map(|p| {
            println!("{}", p.display());
        }),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
