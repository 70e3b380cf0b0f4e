use clap::Parser;

fn main() {
    let cli = idxsel_cli::Cli::parse();
    if let Err(e) = idxsel_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
