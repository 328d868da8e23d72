use clap::Parser;

fn main() {
    let cli = optomech::cli::Cli::parse();
    if let Err(e) = optomech::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
