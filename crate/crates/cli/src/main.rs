use clap::Parser;
use latmod_cli::{run, Command, Options};

#[derive(Parser)]
#[command(name = "latmod", version, about = "Multi-view clustering with a latent baseline partition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    options: Options,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.command, &cli.options) {
        eprintln!("latmod: {e}");
        std::process::exit(e.exit_code());
    }
}
