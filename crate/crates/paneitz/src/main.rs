use clap::Parser;

fn main() {
    let cli = paneitz::cli::Cli::parse();
    std::process::exit(paneitz::cli::run(&cli));
}
