use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use wideflow::scenario::{load_config, run, Scenario, ScenarioConfig};
use wideflow::Error;

/// Run a mean-field spline experiment and write its data files.
#[derive(Parser, Debug)]
#[command(name = "wideflow", version)]
struct Cli {
    scenario: Scenario,
    /// Flat JSON configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    #[arg(long)]
    truncation: Option<usize>,
    /// Rows for table scenarios.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        3
    } else if matches!(e, Error::Io(_)) {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = (|| {
        let base = match &cli.config {
            Some(path) => load_config(path)?,
            None => ScenarioConfig::default(),
        };
        let flags = ScenarioConfig {
            scenario: Some(cli.scenario),
            n: cli.n,
            dt: cli.dt,
            t_end: cli.t_end,
            seed: cli.seed,
            truncation: cli.truncation,
            out_dir: cli.out_dir.clone(),
            count: cli.count,
            ..ScenarioConfig::default()
        };
        let cfg = base.merged(flags).resolve()?;
        run(&cfg).map(|(summary, ok)| (cfg, summary, ok))
    })();
    match result {
        Ok((cfg, summary, ok)) => {
            println!("{}", serde_json::to_string_pretty(&summary["error_metrics"]).unwrap_or_default());
            eprintln!("wrote {}", cfg.out_dir.display());
            if ok {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: one or more checks failed");
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
