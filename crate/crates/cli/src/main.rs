mod args;
mod commands;
mod config;

use clap::Parser;

use args::{Cli, Command};

fn main() {
    let argv = match config::merge(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("usage error: {e}");
            std::process::exit(2);
        }
    };
    let cli = Cli::parse_from(argv);
    env_logger::Builder::new()
        .parse_filters(&cli.log)
        .format_timestamp(None)
        .init();

    let result = match &cli.command {
        Command::Train(a) => commands::train(a, &cli.data_dir),
        Command::Eval(a) => commands::eval(a, &cli.data_dir),
        Command::Bench(a) => commands::bench(a, &cli.data_dir),
        Command::FitWidth(a) => commands::fit_width(a),
        Command::Sweep(a) => commands::sweep(a, &cli.data_dir),
    };
    if let Err(e) = result {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
