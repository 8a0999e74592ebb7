use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use approachability_harness::{export, run_experiment, write_trace, Command, Config, RawConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "approach-sim", version, about = "Reproduce regret, calibration and approachability experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Internal regret of the invariant-probability strategy
    InternalRegret(Flags),
    /// Calibrated forecasting of a binary outcome
    Calibrate(Flags),
    /// Blackwell's strategy on a B-set target
    ApproachBlackwell(Flags),
    /// Approachability through calibrated forecasts of the opponent
    ApproachCalibrated(Flags),
    /// Blackwell's strategy on the halfspace reduction
    Halfspace(Flags),
    /// Internally consistent play under partial monitoring
    PartialMonitor(Flags),
    /// Partial monitoring restarted on blocks of growing length
    Doubling(Flags),
}

#[derive(Args)]
struct Flags {
    /// key=value file; flags given here take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    steps: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    mesh: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    /// const:<j>, iid:<p,...>, periodic:<j,...>, uniform or greedy
    #[arg(long)]
    adversary: Option<String>,
    /// Output file; the trace goes to stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or jsonl
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    log_every: Option<String>,
    /// Extra settings as key=value, e.g. --set target=0.5
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Flags {
    fn raw(&self) -> Result<RawConfig, String> {
        let mut raw = match &self.config {
            Some(path) => RawConfig::from_file(path).map_err(|e| e.to_string())?,
            None => RawConfig::new(),
        };
        let mut flags = RawConfig::new();
        for entry in &self.set {
            let (k, v) = entry.split_once('=').ok_or_else(|| format!("--set expects KEY=VALUE, got `{entry}`"))?;
            flags.set(k.trim(), v.trim());
        }
        let named = [
            ("scenario", &self.scenario),
            ("steps", &self.steps),
            ("seed", &self.seed),
            ("mesh", &self.mesh),
            ("epsilon", &self.epsilon),
            ("eta", &self.eta),
            ("adversary", &self.adversary),
            ("format", &self.format),
            ("log-every", &self.log_every),
        ];
        for (key, value) in named {
            if let Some(v) = value {
                flags.set(key, v.clone());
            }
        }
        if let Some(out) = &self.out {
            flags.set("out", out.display().to_string());
        }
        raw.overlay(&flags);
        Ok(raw)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, flags) = match &cli.command {
        Sub::InternalRegret(f) => (Command::InternalRegret, f),
        Sub::Calibrate(f) => (Command::Calibrate, f),
        Sub::ApproachBlackwell(f) => (Command::ApproachBlackwell, f),
        Sub::ApproachCalibrated(f) => (Command::ApproachCalibrated, f),
        Sub::Halfspace(f) => (Command::Halfspace, f),
        Sub::PartialMonitor(f) => (Command::PartialMonitor, f),
        Sub::Doubling(f) => (Command::Doubling, f),
    };
    let config = match flags.raw().and_then(|raw| Config::from_raw(Some(command), &raw).map_err(|e| e.to_string())) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    let trace = match run_experiment(&config) {
        Ok(t) => t,
        Err(e) if e.is_config_error() => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("run failed: {e}");
            return ExitCode::from(3);
        }
    };
    for note in &trace.metadata.notes {
        eprintln!("note: {note}");
    }
    let written = match &config.out {
        Some(path) => export(&trace, path, config.format),
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write_trace(&trace, &mut lock, config.format).and_then(|_| lock.flush())
        }
    };
    if let Err(e) = written {
        eprintln!("cannot write trace: {e}");
        return ExitCode::from(3);
    }
    ExitCode::SUCCESS
}
