use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use agricaf::par;
use agricaf::pipeline::{
    exit_code, run_stage, Config, RunOptions, Stage, EXIT_FAILURE, EXIT_OK, EXIT_PARTIAL,
};
use clap::Parser;

#[derive(Debug, Parser)]
#[command(name = "agricaf", version, about = "Explainable commodity price-change forecasting")]
struct Cli {
    #[arg(value_parser = ["validate", "assemble", "screen", "forecast", "explain", "report", "all"])]
    stage: String,
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=12))]
    only_month: Option<u8>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=12))]
    only_horizon: Option<u8>,
    /// Override the configured global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

fn stages(name: &str) -> Vec<Stage> {
    if name == "all" {
        Stage::ALL.to_vec()
    } else {
        Stage::parse(name).into_iter().collect()
    }
}

fn run(cli: &Cli) -> i32 {
    let mut cfg = match Config::load(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let opts = RunOptions {
        only_month: cli.only_month,
        only_horizon: cli.only_horizon,
    };
    let mut code = EXIT_OK;
    for stage in stages(&cli.stage) {
        match par::with_jobs(cli.jobs, || run_stage(stage, &cfg, &opts)) {
            Ok(outcome) => {
                if outcome.exit_code() == EXIT_PARTIAL {
                    eprintln!("warning: {stage}: {} cell(s) failed", outcome.failed_cells());
                    code = EXIT_PARTIAL;
                }
            }
            Err(e) => {
                eprintln!("error: {stage}: {e}");
                return exit_code(&e);
            }
        }
    }
    code
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format(|buf, record| {
            writeln!(
                buf,
                "ts={} level={} {}",
                buf.timestamp_millis(),
                record.level(),
                record.args()
            )
        })
        .init();
    // clap's own usage exit code (2) would read as a validation failure
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_FAILURE as u8 } else { 0 });
        }
    };
    ExitCode::from(run(&cli) as u8)
}
