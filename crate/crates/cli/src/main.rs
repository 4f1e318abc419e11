mod args;
mod commands;
mod config;
mod output;

use clap::Parser;

fn main() {
    let argv = match config::merge_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(config::ConfigError(m)) => {
            eprintln!("error: {m}");
            std::process::exit(2);
        }
    };
    // clap exits with status 2 on usage errors and 0 for --help/--version.
    let cli = args::Cli::parse_from(argv);
    if let Err(e) = commands::run(&cli) {
        eprintln!("error: {}", e.message());
        std::process::exit(e.exit_code());
    }
}
