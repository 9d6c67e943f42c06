use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stablesim_core::analysis;
use stablesim_core::analytic::{self, AnalyticalParams};
use stablesim_core::sim::{self, emit, ConfigError, ExperimentError, ScenarioConfig, SimError};

/// Stablecoin market simulator.
///
/// Log verbosity is read from `STABLESIM_LOG` (e.g. `info`, `debug`).
#[derive(Parser)]
#[command(name = "stablesim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write steps.csv and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the scenario once per belief weight, same seed.
    SweepBelief {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated belief weights.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        b: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare unlimited minting with a debt ceiling, same seed.
    DebtCeiling {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        ceiling: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-form equilibrium price over belief weights and ETH prices.
    Analytic {
        #[arg(long)]
        k: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        m: f64,
        #[arg(long)]
        c: f64,
        /// Comma-separated belief weights.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        b: Vec<f64>,
        #[arg(long)]
        alpha: f64,
        /// A single price or `start:end:step`.
        #[arg(long)]
        p_eth: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Descriptive statistics and correlation of a `date,eth_close,dai_close` file.
    Stats {
        #[arg(long)]
        csv: PathBuf,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn config(e: impl Display) -> Self {
        Failure::Config(e.to_string())
    }

    fn runtime(e: impl Display) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => Failure::config(c),
            other => Failure::runtime(other),
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Sim(s) => s.into(),
            other => Failure::config(other),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::config(e)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("STABLESIM_LOG", "warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { config, out } => {
            let config = ScenarioConfig::load(&config)?;
            let result = sim::run(&config)?;
            let files = emit(&result, &out).map_err(Failure::runtime)?;
            report_files(&files);
            let s = &result.summary;
            println!(
                "mean_p_dai={} mean_abs_dev={} pearson={}",
                emit::fmt_num(s.mean_p_dai),
                emit::fmt_num(s.mean_abs_dev),
                s.pearson.map_or("n/a".into(), emit::fmt_num)
            );
            Ok(())
        }
        Command::SweepBelief { config, b, out } => {
            let config = ScenarioConfig::load(&config)?;
            let table = sim::belief_experiment(&config, &b)?;
            let files = sim::emit::emit_belief_table(&table, &out).map_err(Failure::runtime)?;
            report_files(&files);
            println!("{:>12} {:>14} {:>14} {:>10}", "b", "mean_p_dai", "mean_abs_dev", "pearson");
            for r in &table.rows {
                println!(
                    "{:>12} {:>14.6} {:>14.6} {:>10}",
                    emit::fmt_num(r.b),
                    r.mean_p_dai,
                    r.mean_abs_dev,
                    r.pearson.map_or("n/a".into(), |p| format!("{p:.4}"))
                );
            }
            println!(
                "deviation monotone: {}, pearson monotone: {}",
                table.deviation_monotone, table.pearson_monotone
            );
            Ok(())
        }
        Command::DebtCeiling { config, ceiling, out } => {
            let config = ScenarioConfig::load(&config)?;
            let cmp = sim::debt_ceiling_experiment(&config, ceiling)?;
            let files = sim::emit::emit_ceiling(&cmp, &out).map_err(Failure::runtime)?;
            report_files(&files);
            println!(
                "baseline mean p_dai {:.6}, ceiling mean p_dai {:.6}, rejected mints {}, binding {}",
                cmp.mean_p_dai_baseline, cmp.mean_p_dai_ceiling, cmp.rejected_mints, cmp.binding
            );
            Ok(())
        }
        Command::Analytic {
            k,
            gamma,
            m,
            c,
            b,
            alpha,
            p_eth,
            out,
        } => {
            let prices = parse_range(&p_eth).map_err(Failure::config)?;
            let lo = prices.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = prices.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut rows = Vec::new();
            for &bv in &b {
                let params = AnalyticalParams::new(k, gamma, m, c, bv, alpha, (lo, hi)).map_err(Failure::config)?;
                rows.extend(analytic::eth_sweep(&params, &prices).map_err(Failure::runtime)?);
            }
            write_analytic(&rows, &out).map_err(Failure::runtime)?;
            report_files(&[out]);
            Ok(())
        }
        Command::Stats { csv } => {
            let series = analysis::load_series(&csv).map_err(|e| match e {
                analysis::AnalysisError::FileNotFound(_) | analysis::AnalysisError::MalformedHeader(_) => {
                    Failure::config(e)
                }
                other => Failure::runtime(other),
            })?;
            print!("{}", stats_table(&series).map_err(Failure::runtime)?);
            Ok(())
        }
    }
}

fn report_files(files: &[PathBuf]) {
    for f in files {
        log::info!("wrote {}", f.display());
    }
}

/// `"200"` or `"50:1500:50"` (inclusive end).
fn parse_range(text: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = text.split(':').collect();
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("bad number `{s}` in --p-eth"));
    match parts.as_slice() {
        [single] => Ok(vec![num(single)?]),
        [start, end, step] => {
            let (start, end, step) = (num(start)?, num(end)?, num(step)?);
            if !(step > 0.0 && end >= start) {
                return Err(format!("--p-eth range needs step > 0 and end >= start, got {text}"));
            }
            let n = ((end - start) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|i| start + step * i as f64).collect())
        }
        _ => Err(format!("--p-eth expects `value` or `start:end:step`, got `{text}`")),
    }
}

fn write_analytic(rows: &[analytic::SweepPoint], out: &Path) -> std::io::Result<()> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut text = String::from("b,p_eth,price,sensitivity,negative_demand,upward_demand\n");
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            emit::fmt_num(r.b),
            emit::fmt_num(r.p_eth),
            emit::fmt_num(r.price),
            emit::fmt_num(r.sensitivity),
            r.negative_demand,
            r.upward_demand
        ));
    }
    std::fs::write(out, text)
}

fn stats_table(series: &analysis::PriceSeries) -> Result<String, analysis::AnalysisError> {
    let eth = analysis::describe(&series.eth())?;
    let dai = analysis::describe(&series.dai())?;
    let mut out = format!("{:<8}{:>16}{:>16}\n", "", "ETH", "DAI");
    let rows = [
        ("count", eth.count as f64, dai.count as f64),
        ("mean", eth.mean, dai.mean),
        ("std", eth.std, dai.std),
        ("max", eth.max, dai.max),
        ("min", eth.min, dai.min),
        ("25%", eth.p25, dai.p25),
        ("50%", eth.p50, dai.p50),
        ("75%", eth.p75, dai.p75),
    ];
    for (label, a, b) in rows {
        out.push_str(&format!("{label:<8}{a:>16.6}{b:>16.6}\n"));
    }
    let r = analysis::pearson(&series.eth(), &series.dai())?;
    out.push_str(&format!("pearson {r:.6}\n"));
    if series.dropped_corrupt + series.dropped_duplicates > 0 {
        out.push_str(&format!(
            "dropped {} corrupt and {} duplicate rows\n",
            series.dropped_corrupt, series.dropped_duplicates
        ));
    }
    Ok(out)
}
