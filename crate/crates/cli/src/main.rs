//! `bbm`: runs a configured experiment and writes its report.
//!
//! Exit status: 0 when every check passes, 1 when a check fails, 2 when the
//! config cannot be read, parsed or validated, or the run cannot complete.

use std::path::PathBuf;
use std::process::ExitCode;

use bbm_core::experiments::{run, write_output, Experiment, ExperimentConfig, ExperimentReport};
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "kebab-case")]
enum Command {
    Expect,
    Simulate,
    VerifyMean,
    Growth,
    GrowthAbove,
    Rightmost,
    RareSurvival,
    Martingale,
    Spine,
    KernelsTest,
}

impl Command {
    fn name(self) -> &'static str {
        Experiment::NAMES[self as usize]
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "bbm",
    version,
    about = "Branching Brownian motion with catalytic branching at the origin"
)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `replicas`.
    #[arg(long)]
    replicas: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(cli: &Cli) -> bbm_core::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(&cli.config).map_err(|e| {
        bbm_core::Error::InvalidConfig(format!("cannot read {}: {e}", cli.config.display()))
    })?;
    let mut cfg = ExperimentConfig::from_json_str(&text)?;
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    if let Some(r) = cli.replicas {
        cfg.replicas = r;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    cfg.resolve(cli.command.name())?;
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(report: &ExperimentReport, dir: &std::path::Path) {
    for m in &report.metrics {
        let verdict = match m.pass {
            Some(true) => "pass",
            Some(false) => "FAIL",
            None => "info",
        };
        let reference = m
            .reference
            .map(|r| format!(" (reference {r})"))
            .unwrap_or_default();
        println!("[{verdict}] {}: {}{reference}", m.name, m.estimate);
    }
    for f in &report.flags {
        println!("[flag] {f}");
    }
    println!(
        "{} {} in {:.2}s, output in {}",
        report.experiment,
        if report.passed { "passed" } else { "FAILED" },
        report.runtime_seconds,
        dir.display()
    );
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    let out = match run(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let dir = match write_output(&cfg, &out) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("cannot write output: {e}");
            return ExitCode::from(2);
        }
    };
    print_summary(&out.report, &dir);
    if out.report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_names_match_experiments() {
        for c in Command::value_variants() {
            let v = c.to_possible_value().unwrap();
            assert_eq!(v.get_name(), c.name());
        }
    }
}
