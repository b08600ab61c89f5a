use clap::Parser;
use misc_cli::{run, Cli};
use tracing_subscriber::EnvFilter;

fn main() {
    let filter = EnvFilter::try_from_env("MISC_LOG").unwrap_or_else(|_| EnvFilter::new("warn"));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
