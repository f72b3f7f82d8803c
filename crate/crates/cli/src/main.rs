//! `askhelp`: generate scenarios, calibrate, evaluate, sweep, and run an
//! interactive help session from the terminal.

mod config;
mod demo;
mod inspect;

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use askhelp::harness::{
    calibrate_scenarios, coverage_distribution, sweep, write_curve_csv, CoverageFile, CurveRow, Experiment,
    RepeatSeeds, ResultsFile,
};
use askhelp::scenario::{read_scenarios, sample_scenarios, write_episodes, write_scenarios};
use askhelp::{CalibratedModel, Error, MetricsSummary, Result, Scenario};
use clap::{ArgMatches, CommandFactory, FromArgMatches, Parser, Subcommand};

use config::{ExperimentArgs, SettingArg};

#[derive(Parser)]
#[command(name = "askhelp", version, about = "Conformal help-seeking for multiple-choice planners")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample scenarios and write them as a scenario file.
    Gen {
        #[arg(long, value_enum, default_value_t = SettingArg::Numeric)]
        setting: SettingArg,
        /// Number of scenarios.
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Root seed (required).
        #[arg(long)]
        seed: Option<u64>,
        /// Output file; `-` writes to standard output.
        #[arg(long, default_value = "scenarios.jsonl")]
        out: PathBuf,
    },
    /// Fit a conformal threshold on a calibration split and write the model.
    Calibrate {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// Calibrate on this scenario file [default: sample `--calibration-size` scenarios].
        #[arg(long)]
        scenarios: Option<PathBuf>,
        #[arg(long, default_value = "model.json")]
        out: PathBuf,
    },
    /// Evaluate one method at one level and write a results file.
    Eval {
        #[command(flatten)]
        experiment: ExperimentArgs,
        #[arg(long, default_value = "results.json")]
        out: PathBuf,
        /// Also write every simulated episode to this file [default: not written].
        #[arg(long)]
        episodes: Option<PathBuf>,
    },
    /// Evaluate a method over a grid of levels; writes `<out>.csv` and `<out>.json`.
    Sweep {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// Comma-separated levels in (0, 1), in any order.
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.15,0.2,0.25,0.3")]
        grid: Vec<f64>,
        #[arg(long, default_value = "curve")]
        out: PathBuf,
    },
    /// Per-repeat coverage of the conformal method, with a histogram.
    Coverage {
        #[command(flatten)]
        experiment: ExperimentArgs,
        #[arg(long, default_value = "coverage.json")]
        out: PathBuf,
    },
    /// Step through episodes and answer help requests at the terminal.
    Demo(demo::DemoArgs),
    /// Summarize any file written by the other commands.
    Inspect {
        /// Scenario, episode, model, results, curve or coverage file.
        path: PathBuf,
    },
}

fn main() -> ExitCode {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("{}", error_line(&e, code));
            ExitCode::from(code)
        }
    }
}

fn run(matches: &ArgMatches) -> Result<()> {
    let cli = Cli::from_arg_matches(matches).map_err(|e| Error::Argument(e.to_string()))?;
    let (_, sub) = matches.subcommand().expect("a subcommand is required");
    match cli.command {
        Command::Gen { setting, count, seed, out } => {
            let seed = seed.ok_or_else(|| Error::Argument("--seed is required".into()))?;
            let scenarios = sample_scenarios(setting.into(), count, seed)?;
            if out.as_os_str() == "-" {
                write_scenarios(io::stdout().lock(), &scenarios)
            } else {
                write_scenarios(BufWriter::new(File::create(&out)?), &scenarios)
            }
        }
        Command::Calibrate { experiment, scenarios, out } => {
            let config = experiment.resolve(sub)?;
            let seeds = RepeatSeeds::new(config.seed, 0);
            let calibration = match &scenarios {
                Some(path) => load_scenarios(path)?,
                None => sample_scenarios(config.setting, config.calibration_size, seeds.calibration)?,
            };
            let scorer = config.scorer.build()?;
            let model = calibrate_scenarios(
                &calibration,
                &scorer,
                seeds.scorer,
                config.epsilon,
                config.delta,
                config.adjustment,
            )?;
            write_text(&out, &(model.to_json()? + "\n"))?;
            print_model(&model);
            Ok(())
        }
        Command::Eval { experiment, out, episodes } => {
            let config = experiment.resolve(sub)?;
            let prepared = Experiment::prepare(&config)?;
            let summary = prepared.evaluate(config.method, config.epsilon)?;
            ResultsFile::new(&config, vec![summary.clone()]).write(&out)?;
            if let Some(path) = episodes {
                let all: Vec<_> = prepared.episodes(config.method, config.epsilon)?.into_iter().flatten().collect();
                write_episodes(BufWriter::new(File::create(path)?), &all)?;
            }
            print_summary(&summary);
            Ok(())
        }
        Command::Sweep { experiment, mut grid, out } => {
            let config = experiment.resolve(sub)?;
            grid.sort_by(|a, b| b.total_cmp(a));
            grid.dedup();
            let prepared = Experiment::prepare(&config)?;
            let summaries = sweep(&prepared, config.method, &grid)?;
            let rows: Vec<CurveRow> = summaries.iter().map(MetricsSummary::row).collect();
            write_curve_csv(&out.with_extension("csv"), &rows)?;
            ResultsFile::new(&config, summaries.clone()).write(&out.with_extension("json"))?;
            for s in &summaries {
                print_summary(s);
            }
            Ok(())
        }
        Command::Coverage { experiment, out } => {
            let config = experiment.resolve(sub)?;
            let distribution = coverage_distribution(&config)?;
            println!("target={}", distribution.target);
            println!("fraction_meeting_target={}", distribution.fraction_meeting_target);
            let mean = distribution.per_repeat.iter().sum::<f64>() / distribution.per_repeat.len() as f64;
            println!("mean_coverage={mean}");
            CoverageFile::new(&config, distribution).write(&out)
        }
        Command::Demo(args) => {
            let stdin = io::stdin();
            demo::run(&args, sub, &mut stdin.lock(), &mut io::stdout().lock())
        }
        Command::Inspect { path } => inspect::inspect(&path, &mut io::stdout().lock()),
    }
}

fn load_scenarios(path: &Path) -> Result<Vec<Scenario>> {
    read_scenarios(BufReader::new(File::open(path)?))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut file = File::create(path)?;
    file.write_all(text.as_bytes())?;
    Ok(())
}

fn print_model(model: &CalibratedModel) {
    println!("epsilon={}", model.epsilon);
    println!("epsilon_hat={}", model.epsilon_hat);
    println!("q_hat={}", model.q_hat);
    println!("n={}", model.n);
}

fn print_summary(s: &MetricsSummary) {
    println!(
        "setting={} method={} epsilon={} success={} help_step={} help_trial={} set_size={} coverage={}",
        s.setting,
        s.method.name(),
        s.epsilon,
        s.plan_success_rate,
        s.help_rate_step,
        s.help_rate_trial,
        s.avg_set_size,
        s.coverage
    );
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Infeasible { .. } => 2,
        Error::Transport(_) | Error::Protocol(_) | Error::DegenerateResponse => 3,
        _ => 1,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Domain(_) => "domain",
        Error::NonConvergence { .. } => "non_convergence",
        Error::Argument(_) => "argument",
        Error::Infeasible { .. } => "infeasible",
        Error::Data(_) => "data",
        Error::Unsupported(_) => "unsupported",
        Error::Transport(_) => "transport",
        Error::Protocol(_) => "protocol",
        Error::DegenerateResponse => "degenerate_response",
        Error::NoMatch { .. } => "no_match",
        Error::Io(_) => "io",
        Error::Json(_) => "parse",
    }
}

/// One JSON object on a single line, so scripts can parse failures.
fn error_line(e: &Error, code: u8) -> String {
    let mut line = serde_json::json!({
        "error": error_kind(e),
        "exit_code": code,
        "message": e.to_string(),
    });
    if let Error::Infeasible { min_n, .. } = e {
        line["min_n"] = serde_json::json!(min_n);
    }
    line.to_string()
}
