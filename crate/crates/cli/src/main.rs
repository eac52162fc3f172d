use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use dyson_blocks_cli::config::RunConfig;
use dyson_blocks_cli::run::run;
use dyson_blocks_cli::RunError;

/// Solve block Dyson equations and run random-matrix experiments.
#[derive(Debug, Parser)]
#[command(name = "dyson-blocks", version)]
struct Cli {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output file; overrides `output` in the config. Standard output when neither is set.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for sampling commands; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for Monte Carlo trials.
    #[arg(long, env = "DYSON_BLOCKS_THREADS")]
    threads: Option<usize>,
    /// Print the parsed config with defaults filled in, then exit.
    #[arg(long)]
    print_config: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dyson-blocks: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: Cli) -> Result<(), RunError> {
    let config = RunConfig::load(&cli.config)?.with_overrides(cli.out, cli.seed);
    if cli.print_config {
        println!("{}", config.to_pretty());
        return Ok(());
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(RunError::Config("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| RunError::Config(e.to_string()))?;
    pool.install(|| run(&config))
}
