use clap::Parser;
use queuereg::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("queuereg: {e}");
        std::process::exit(e.exit_code());
    }
}
