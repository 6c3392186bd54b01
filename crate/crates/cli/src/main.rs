use std::process::ExitCode;

use clap::{Parser, Subcommand};
use strobe_cli::presets::{load, preset_text, PRESETS};
use strobe_cli::{runner, CliError};

#[derive(Parser)]
#[command(name = "strobe", version, about = "Open-system dynamics of stroboscopic quantum simulators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the TCL-2 trajectories of a config file or preset and write CSVs.
    Run { config: String },
    /// Print the tabulated error bounds of a config as JSON.
    Bound { config: String },
    /// Compare TCL-2 with exact joint evolution for a discrete bath.
    Validate { config: String },
    /// List or print the shipped presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    Show { name: String },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config } => {
            let cfg = load(&config)?;
            for line in runner::run(&cfg, &cfg.out_dir())? {
                println!("{line}");
            }
        }
        Command::Bound { config } => {
            let cfg = load(&config)?;
            println!("{}", runner::bound(&cfg, &cfg.out_dir())?);
        }
        Command::Validate { config } => {
            let cfg = load(&config)?;
            for line in runner::validate(&cfg, &cfg.out_dir())? {
                println!("{line}");
            }
        }
        Command::Presets { action: PresetAction::List } => {
            for (name, _) in PRESETS {
                println!("{name}");
            }
        }
        Command::Presets { action: PresetAction::Show { name } } => {
            let text = preset_text(&name).ok_or_else(|| CliError::Config(format!("unknown preset {name:?}")))?;
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("strobe: {e}");
            if let CliError::Numerical { diagnostics: Some(p), .. } = &e {
                eprintln!("strobe: diagnostics written to {}", p.display());
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
