use clap::Parser;

use fade_cli::{commands, exit, Args};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let code = match commands::run(&args) {
        Ok(()) => exit::SUCCESS,
        Err(e) => {
            eprintln!("fade-kit: error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
