//! `icsim` — Monte Carlo simulator for robust transceiver design on the
//! K-user MIMO interference channel.

mod config;
mod selftest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use icsim_core::experiment::{
    run_approx_accuracy, run_convergence, run_sum_rate_sweep, run_variance_table, statistic,
    ExperimentResult, Scenario,
};
use icsim_core::solver::SolverKind;
use icsim_core::Result;

#[derive(Parser)]
#[command(name = "icsim", version, about = "Robust interference-channel transceiver simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// Scenario configuration file (key = value lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in scenario preset: 3x3_1_4, 4x4_2_3, 10x10_5_3, 6x8_4_2.
    #[arg(long)]
    scenario: Option<String>,
    /// Master seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: $ICSIM_OUT_DIR or current directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated algorithms: EM, VM, MaxSINR.
    #[arg(long)]
    algorithms: Option<String>,
    /// Comma-separated SNR grid in dB.
    #[arg(long)]
    snr: Option<String>,
    /// Iteration count per solver run.
    #[arg(long)]
    iters: Option<usize>,
    /// True channels per SNR point (error draws per channel stay at the
    /// configured value).
    #[arg(long)]
    trials: Option<usize>,
    /// Worker thread count (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// CSI error variance override.
    #[arg(long)]
    sigma2: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Average sum rate versus SNR.
    Sweep(RunArgs),
    /// Average SINR variance versus SNR.
    VarianceTable(RunArgs),
    /// Approximate-capacity accuracy versus Monte Carlo truth.
    Approx(RunArgs),
    /// Interference-leakage convergence traces.
    Converge(RunArgs),
    /// Run the built-in invariant checks.
    Selftest {
        /// Worker thread count (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
}

struct Prepared {
    scenarios: Vec<Scenario>,
    kinds: Vec<SolverKind>,
    out_dir: PathBuf,
    workers: Option<usize>,
}

fn parse_kind_list(text: &str) -> Result<Vec<SolverKind>> {
    text.split(',')
        .map(|part| {
            SolverKind::parse(part.trim()).ok_or_else(|| {
                icsim_core::Error::InvalidArgument(format!("unknown algorithm '{part}'"))
            })
        })
        .collect()
}

fn parse_snr_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|_| icsim_core::Error::InvalidArgument(format!("invalid SNR '{part}'")))
        })
        .collect()
}

/// Resolve scenarios and settings with flag > file > default precedence.
fn prepare(args: &RunArgs, default_kinds: &[SolverKind], default_snr: Option<Vec<f64>>) -> Result<Prepared> {
    let mut settings = config::FileSettings::default();
    let mut scenarios = match (&args.config, &args.scenario) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)?;
            let (scenarios, file_settings) = config::parse_config_all(&text)?;
            settings = file_settings;
            scenarios
        }
        (None, Some(name)) => vec![Scenario::preset(name, 0)?],
        (None, None) => {
            return Err(icsim_core::Error::InvalidArgument(
                "provide --config or --scenario".into(),
            ))
        }
    };
    for s in &mut scenarios {
        if let Some(seed) = args.seed {
            s.master_seed = seed;
        }
        if let Some(snr) = &args.snr {
            s.snr_grid_db = parse_snr_list(snr)?;
        } else if let Some(default) = &default_snr {
            s.snr_grid_db = default.clone();
        }
        if let Some(iters) = args.iters {
            s.iterations = iters;
        }
        if let Some(trials) = args.trials {
            s.channels_per_point = trials;
        }
        if let Some(sigma2) = args.sigma2 {
            s.config.sigma2 = sigma2;
        }
    }
    let kinds = match (&args.algorithms, &settings.algorithms) {
        (Some(text), _) => parse_kind_list(text)?,
        (None, Some(kinds)) => kinds.clone(),
        (None, None) => default_kinds.to_vec(),
    };
    let out_dir = args
        .out
        .clone()
        .or_else(|| settings.out.as_ref().map(PathBuf::from))
        .or_else(|| std::env::var_os("ICSIM_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    Ok(Prepared {
        scenarios,
        kinds,
        out_dir,
        workers: args.workers.or(settings.workers),
    })
}

fn write_file(out_dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(name);
    std::fs::write(&path, contents)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn with_workers<T>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> T
where
    T: Send,
{
    match workers {
        None => job(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool")
            .install(job),
    }
}

fn cmd_sweep(args: &RunArgs) -> Result<()> {
    let prep = prepare(args, &SolverKind::ALL, None)?;
    let result = with_workers(prep.workers, || -> Result<ExperimentResult> {
        let mut all = ExperimentResult::default();
        for scenario in &prep.scenarios {
            log::info!("sum-rate sweep: {}", scenario.label);
            all.merge(run_sum_rate_sweep(scenario, &prep.kinds)?);
        }
        Ok(all)
    })?;
    write_file(&prep.out_dir, "sweep.csv", &result.stats_csv_string()?)
}

fn cmd_variance(args: &RunArgs) -> Result<()> {
    let prep = prepare(args, &SolverKind::ALL, None)?;
    let result = with_workers(prep.workers, || -> Result<ExperimentResult> {
        let mut all = ExperimentResult::default();
        for scenario in &prep.scenarios {
            log::info!("variance table: {}", scenario.label);
            all.merge(run_variance_table(scenario, &prep.kinds)?);
        }
        Ok(all)
    })?;
    write_file(&prep.out_dir, "variance_table.csv", &result.stats_csv_string()?)
}

fn cmd_approx(args: &RunArgs) -> Result<()> {
    let prep = prepare(args, &[SolverKind::Em], None)?;
    type ApproxPoint = (f64, f64, Vec<icsim_core::experiment::StatRow>);
    let rows = with_workers(prep.workers, || -> Result<Vec<ApproxPoint>> {
        let mut out = Vec::new();
        for scenario in &prep.scenarios {
            log::info!(
                "approximation accuracy: {} (sigma2 = {})",
                scenario.label,
                scenario.config.sigma2
            );
            let res = run_approx_accuracy(scenario)?;
            for &snr in &scenario.snr_grid_db {
                let rows: Vec<_> = res.rows.iter().filter(|r| r.snr_db == snr).cloned().collect();
                out.push((snr, scenario.config.sigma2, rows));
            }
        }
        Ok(out)
    })?;
    // Wide per-point schema.
    let mut text = String::from("snr_db,sigma2,theoretical,numerical,pct_error\n");
    for (snr, sigma2, rows) in rows {
        let find = |stat: &str| {
            rows.iter()
                .find(|r| r.statistic == stat)
                .map(|r| r.value)
                .unwrap_or(f64::NAN)
        };
        text.push_str(&format!(
            "{snr:.8e},{sigma2:.8e},{:.8e},{:.8e},{:.8e}\n",
            find(statistic::APPROX_CAPACITY),
            find(statistic::NUMERICAL_CAPACITY),
            find(statistic::PCT_ERROR),
        ));
    }
    write_file(&prep.out_dir, "approx.csv", &text)
}

fn cmd_converge(args: &RunArgs) -> Result<()> {
    // Default protocol: all four built-in scenarios at P/N0 = 10 dB.
    let mut args = args.clone();
    let use_all_presets = args.config.is_none() && args.scenario.is_none();
    if use_all_presets {
        args.scenario = Some("3x3_1_4".into());
    }
    let mut prep = prepare(&args, &[SolverKind::Em, SolverKind::Vm], Some(vec![10.0]))?;
    if use_all_presets {
        let seed = args.seed.unwrap_or(0);
        prep.scenarios = Scenario::PRESET_NAMES
            .iter()
            .map(|name| {
                let mut s = Scenario::preset(name, seed)?;
                s.snr_grid_db = vec![10.0];
                if let Some(iters) = args.iters {
                    s.iterations = iters;
                }
                if let Some(trials) = args.trials {
                    s.channels_per_point = trials;
                }
                if let Some(snr) = &args.snr {
                    s.snr_grid_db = parse_snr_list(snr)?;
                }
                if let Some(sigma2) = args.sigma2 {
                    s.config.sigma2 = sigma2;
                }
                Ok(s)
            })
            .collect::<Result<Vec<_>>>()?;
    }
    let result = with_workers(prep.workers, || -> Result<ExperimentResult> {
        let mut all = ExperimentResult::default();
        for scenario in &prep.scenarios {
            log::info!("convergence: {}", scenario.label);
            all.merge(run_convergence(scenario, &prep.kinds)?);
        }
        Ok(all)
    })?;
    write_file(&prep.out_dir, "converge.csv", &result.traces_csv_string()?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Sweep(args) => cmd_sweep(args),
        Command::VarianceTable(args) => cmd_variance(args),
        Command::Approx(args) => cmd_approx(args),
        Command::Converge(args) => cmd_converge(args),
        Command::Selftest { workers } => {
            let failures = with_workers(*workers, selftest::run);
            return if failures == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            };
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
