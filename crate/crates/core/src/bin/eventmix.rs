use std::process::ExitCode;

use clap::Parser;
use eventmix::cli::{resolve_jobs, run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    let result = resolve_jobs(&cli).and_then(|jobs| {
        let mut pool = rayon::ThreadPoolBuilder::new();
        if let Some(n) = jobs {
            pool = pool.num_threads(n);
        }
        let pool = pool.build().map_err(|e| eventmix::Error::InvalidConfig(format!("thread pool: {e}")))?;
        pool.install(|| run(&cli))
    });

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
