mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use commands::Usage;

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Usage("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let cfg = commands::base_config(cli.config.as_deref())?;
    match cli.command {
        Command::Encode(a) => commands::encode(a, &cfg),
        Command::Harmonize(a) => commands::harmonize(a, &cfg),
        Command::HarmonizeTensor(a) => commands::harmonize_tensor(a, &cfg),
        Command::Generate(a) => commands::generate_cmd(a, &cfg),
        Command::Evaluate(a) => commands::evaluate(a, &cfg),
        Command::Scan(a) => commands::scan(a),
        Command::Synth(a) => commands::synth(a, &cfg),
    }
}

fn is_usage(err: &anyhow::Error) -> bool {
    err.downcast_ref::<Usage>().is_some()
        || matches!(
            err.downcast_ref::<flowmed::Error>(),
            Some(flowmed::Error::InvalidParameter { .. } | flowmed::Error::Config(_))
        )
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_usage(&e) { 2 } else { 1 })
        }
    }
}
