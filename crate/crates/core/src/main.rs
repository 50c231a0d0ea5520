use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use guided_rl::experiment::{
    self, parse_key_values, parse_room, Condition, ExperimentConfig, SuiteConfig,
};
use guided_rl::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "guided-rl", version, about = "Calibrated-advisor PPO experiments in an unlock-pickup gridworld")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one agent under one condition.
    Run {
        #[arg(long)]
        condition: Option<Condition>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Room interior size, e.g. 3x3.
        #[arg(long)]
        room: Option<String>,
        #[arg(long)]
        passes: Option<usize>,
        #[arg(long)]
        accuracy: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Flat `key = value` file; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Start from the desk-scale preset instead of the full-scale one.
        #[arg(long)]
        desk: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Train every condition for several seeds and write summary tables.
    Suite {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        repeats: Option<usize>,
        /// Desk-scale preset: 3x3 rooms, 1500 episodes, 3 seeds.
        #[arg(long)]
        desk: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Print AUC and calibration tables from a suite's summary.csv.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn read_settings(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_key_values(&text, &path.display().to_string())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            condition,
            episodes,
            room,
            passes,
            accuracy,
            seed,
            config,
            desk,
            out,
        } => {
            let mut cfg = if desk {
                ExperimentConfig::desk(Condition::CalibratedEntropy)
            } else {
                ExperimentConfig::default()
            };
            if let Some(path) = &config {
                for (k, v) in read_settings(path)? {
                    if !cfg.set(&k, &v)? {
                        return Err(Error::Config(format!("unknown key {k:?} in {}", path.display())));
                    }
                }
            }
            if let Some(c) = condition {
                cfg.condition = c;
            }
            if let Some(n) = episodes {
                cfg.episodes = n;
            }
            if let Some(r) = room {
                (cfg.room_width, cfg.room_height) = parse_room(&r)?;
            }
            if let Some(k) = passes {
                cfg.passes = k;
            }
            if let Some(a) = accuracy {
                cfg.advisor.accuracy = a;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let result = experiment::run_condition(&cfg)?;
            experiment::write_run_outputs(&result, &out)?;
            let row = experiment::aggregate(cfg.condition, &[&result], 0);
            let csv = experiment::summary_csv(&[row]);
            experiment::write_atomic(&out.join("summary.csv"), csv.as_bytes())?;
            println!(
                "{} seed {}: AUC {:.2}, final average reward {:.3}, {:.1}s",
                cfg.condition,
                cfg.seed,
                result.summary.auc,
                result.summary.final_return,
                result.duration.as_secs_f64()
            );
            print!("{}", experiment::render_report(&csv)?);
        }
        Command::Suite {
            config,
            repeats,
            desk,
            out,
        } => {
            let mut suite = if desk {
                SuiteConfig::desk()
            } else {
                SuiteConfig {
                    base: ExperimentConfig::default(),
                    conditions: Condition::ALL.to_vec(),
                    repeats: 1,
                }
            };
            if let Some(path) = &config {
                suite.apply(&read_settings(path)?)?;
            }
            if let Some(r) = repeats {
                suite.repeats = r;
            }
            let report = experiment::run_suite(&suite)?;
            experiment::write_suite_outputs(&report, &out)?;
            for (cfg, r) in &report.runs {
                if let Err(e) = r {
                    eprintln!("{} seed {} failed: {e}", cfg.condition, cfg.seed);
                }
            }
            print!(
                "{}",
                experiment::render_report(&experiment::summary_csv(&report.rows))?
            );
        }
        Command::Report { input } => {
            let path = input.join("summary.csv");
            let text = fs::read_to_string(&path).map_err(|e| Error::Io { path, source: e })?;
            print!("{}", experiment::render_report(&text)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
