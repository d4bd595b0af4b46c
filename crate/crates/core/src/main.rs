use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use odm::domain::{ActionId, CostSpec};
use odm::pm::build_matrices;
use odm::runner::{
    aggregate_dir, fit_matched_from_rounds, read_rounds_csv, run_suite, run_sweep, save_schedule, write_suite,
    ExperimentConfig, RunnerError, SweepAxis, OUTPUT_DIR_ENV,
};

#[derive(Parser)]
#[command(name = "odm", version, about = "Online decision mediation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured policy on every run and write CSV artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides $ODM_OUTPUT_DIR and `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run the suite once per value of one sweep axis.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// noise_q, k_req, s, alpha or k_int
        #[arg(long)]
        axis: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Rebuild the aggregate files of a suite directory from its per-policy files.
    Aggregate {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        ma_window: Option<usize>,
    },
    /// Print the partial-monitoring reward and feedback matrices, one game per human action.
    PmMatrices {
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0.1)]
        k_int: f64,
        #[arg(long)]
        k_req: Option<f64>,
        #[arg(long, value_enum, default_value_t = PmFormat::Text)]
        format: PmFormat,
    },
    /// Fit the matched decaying request schedule from UMPIRE's rounds file.
    FitMatchedEps {
        #[arg(long)]
        rounds: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PmFormat {
    Text,
    Csv,
}

fn output_dir(flag: Option<PathBuf>, config: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("odm-output"))
}

fn load(path: &Path, threads: Option<usize>) -> Result<ExperimentConfig, RunnerError> {
    let mut config = ExperimentConfig::load(path)?;
    if threads.is_some() {
        config.threads = threads;
        config.validate()?;
    }
    Ok(config)
}

fn execute(cmd: Command) -> Result<bool, RunnerError> {
    match cmd {
        Command::Run { config, out, threads } => {
            let config = load(&config, threads)?;
            let dir = output_dir(out, &config);
            let outcome = run_suite(&config)?;
            write_suite(&outcome, &dir)?;
            println!("policy,runs,final_regret_mean,final_regret_std,avg_loss_mean,requests_mean");
            for a in &outcome.aggregates {
                println!(
                    "{},{},{:.4},{:.4},{:.4},{:.1}",
                    a.policy, a.runs, a.final_regret_mean, a.final_regret_std, a.avg_loss_mean, a.requests_mean
                );
            }
            log::info!("wrote {}", dir.display());
            Ok(outcome.failures.is_empty())
        }
        Command::Sweep {
            config,
            axis,
            out,
            threads,
        } => {
            let config = load(&config, threads)?;
            let axis: SweepAxis = axis.parse()?;
            let dir = output_dir(out, &config);
            let rows = run_sweep(&config, axis, Some(&dir))?;
            for r in rows {
                println!(
                    "{}={} {}: avg_loss {:.4} ± {:.4}, final_regret {:.3} ± {:.3}",
                    r.axis, r.value, r.policy, r.avg_loss_mean, r.avg_loss_std, r.final_regret_mean, r.final_regret_std
                );
            }
            Ok(true)
        }
        Command::Aggregate { dir, ma_window } => {
            let policies = aggregate_dir(&dir, ma_window)?;
            println!("aggregated {}", policies.join(", "));
            Ok(true)
        }
        Command::PmMatrices {
            m,
            k_int,
            k_req,
            format,
        } => {
            if m < 2 {
                return Err(RunnerError::Config("--m must be at least 2".into()));
            }
            let costs = CostSpec {
                k_int,
                k_req: k_req.unwrap_or_else(|| CostSpec::default_k_req(m)),
                ..CostSpec::default()
            };
            if matches!(format, PmFormat::Csv) {
                println!("human_action,matrix,arm,outcome,value");
            }
            for h in 0..m {
                let game = build_matrices(m, ActionId(h), &costs);
                match format {
                    PmFormat::Text => println!("{}", game.to_text()),
                    PmFormat::Csv => {
                        for row in game.to_csv_rows() {
                            println!("{}", row.join(","));
                        }
                    }
                }
            }
            Ok(true)
        }
        Command::FitMatchedEps { rounds, out } => {
            let rows = read_rounds_csv(&rounds)?;
            let fit = fit_matched_from_rounds(&rows)?;
            save_schedule(&out, &fit)?;
            let [c1, c2, c3] = fit.coefficients;
            println!(
                "C(u) = {c1:.6} u + {c2:.6} u^2 + {c3:.6} u^3 over {} rounds",
                fit.horizon
            );
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: some runs failed; see failures.csv");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
