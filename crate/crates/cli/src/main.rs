use clap::Parser;

fn main() {
    let cli = thermoclust_cli::Cli::parse();
    std::process::exit(thermoclust_cli::run(&cli));
}
