use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = alpe_cli::Cli::parse();
    if let Err(e) = alpe_cli::run(&cli) {
        eprintln!("alpe: {e}");
        std::process::exit(e.exit_code());
    }
}
