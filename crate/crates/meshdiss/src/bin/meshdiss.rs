use clap::Parser;

fn main() {
    let cli = meshdiss::cli::Cli::parse();
    if let Err(e) = meshdiss::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
