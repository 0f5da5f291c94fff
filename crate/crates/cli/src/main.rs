use clap::Parser;
use queuecorr_cli::{run, Cli, RunConfig};

fn main() {
    let cli = Cli::parse();
    let code = match RunConfig::from_cli(cli) {
        Ok(cfg) => run(&cfg),
        Err(e) => {
            eprintln!("queuecorr: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
