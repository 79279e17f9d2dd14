use clap::Parser;
use granule_cli::commands::{run, Cli};
use granule_cli::{error_line, exit_code};

fn main() {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(summary) => println!("{summary}"),
        Err(e) => {
            eprintln!("{}", error_line(&e));
            std::process::exit(exit_code(e.class()));
        }
    }
}
