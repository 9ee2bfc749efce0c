use clap::Parser;

use fmahal_cli::commands::{run, Cli};

fn main() {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("fmahal: {e}");
        std::process::exit(e.exit_code());
    }
}
