use clap::Parser;

fn main() {
    let cli = dplm_cli::Cli::parse();
    if let Err(failure) = dplm_cli::run(cli) {
        eprintln!("{}", failure.to_json());
        std::process::exit(failure.exit_code);
    }
}
