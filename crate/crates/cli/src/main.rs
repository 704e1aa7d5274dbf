use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dcsep_cli::{cmd_evaluate, cmd_hpo, cmd_report, cmd_separate, cmd_synth, cmd_train, CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "dcsep", version, about = "Deep-clustering speech separation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set train.lr=0.0005`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a two-speaker corpus into data.dir.
    Synth,
    /// Train the fixed model and write a checkpoint.
    Train,
    /// Separate the mixtures of eval.split with the trained model.
    Separate,
    /// Score estimates against references and write evaluation.csv.
    Evaluate,
    /// Run the architecture search.
    Hpo,
    /// Group the search ledger by categorical hyperparameters.
    Report,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::Synth => {
            let m = cmd_synth(&cfg)?;
            println!("wrote {} mixtures to {}", m.items.len(), cfg.data.dir.display());
        }
        Command::Train => {
            let r = cmd_train(&cfg)?;
            println!(
                "initial val loss {:.5}, best {:.5}, {} epochs{}",
                r.initial_val_loss,
                r.best_val_loss,
                r.val_loss.len(),
                if r.aborted { " (aborted)" } else { "" }
            );
        }
        Command::Separate => {
            let dir = cmd_separate(&cfg)?;
            println!("estimates written to {}", dir.display());
        }
        Command::Evaluate => {
            let s = cmd_evaluate(&cfg)?;
            println!("mean SDR improvement {:.3} dB over {} mixtures", s.mean_improvement, s.rows.len());
        }
        Command::Hpo => {
            let ledger = cmd_hpo(&cfg)?;
            let best = ledger.iter().map(|r| r.loss).fold(f64::INFINITY, f64::min);
            println!("{} trials, best loss {best:.5}", ledger.len());
        }
        Command::Report => {
            for rows in cmd_report(&cfg)? {
                for r in rows {
                    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
                    println!(
                        "{:>15} {:>11} n={:<3} loss {:>8} sdr {:>8}",
                        r.field,
                        r.value,
                        r.used,
                        fmt(r.mean_loss),
                        fmt(r.mean_sdr_improvement)
                    );
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
