use std::path::PathBuf;
use std::process::ExitCode;

use annuity_market::harness::pipeline::Timings;
use annuity_market::harness::report::RunReport;
use annuity_market::harness::{Pipeline, ScenarioConfig, Stage};
use annuity_market::Error;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

/// Annuity market simulation, estimation and counterfactuals.
#[derive(Parser, Debug)]
#[command(name = "annuity", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario file (TOML); defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the scenario file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Stages to run under `pipeline` (repeatable); all when absent.
    #[arg(long, global = true)]
    stage: Vec<String>,
    /// Writes per-stage wall-clock seconds here as JSON.
    #[arg(long, global = true)]
    timings: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    Synth,
    FitMortality,
    Simulate,
    Estimate,
    Counterfactual,
    Report,
    Pipeline,
}

fn stages(cmd: &Command, requested: &[String]) -> Result<Vec<Stage>, Error> {
    Ok(match cmd {
        Command::Synth => vec![Stage::Synth],
        Command::FitMortality => vec![Stage::FitMortality],
        Command::Simulate => vec![Stage::Simulate],
        Command::Estimate => vec![Stage::Estimate],
        Command::Counterfactual => vec![Stage::Counterfactual],
        Command::Report => vec![Stage::Report],
        Command::Pipeline if requested.is_empty() => Stage::ALL.to_vec(),
        Command::Pipeline => requested.iter().map(|s| s.parse()).collect::<Result<_, _>>()?,
    })
}

fn print_timings(t: &Timings) {
    for (stage, secs) in t {
        eprintln!("{stage:<15} {secs:>9.2} s");
    }
}

fn print_report(rep: &RunReport) {
    for c in rep.identification.iter().chain(&rep.counterfactual) {
        println!("{:<5} {:<34} {:>12.6} (threshold {})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.threshold);
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let c = &cli.common;
    let mut cfg = match &c.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if !c.stage.is_empty() && !matches!(cli.command, Command::Pipeline) {
        return Err(Error::Config("--stage applies only to `pipeline`".into()));
    }
    let todo = stages(&cli.command, &c.stage)?;
    let pipeline = Pipeline::new(cfg, &c.out_dir)?;
    let (_, timings) = pipeline.run(&todo)?;
    print_timings(&timings);
    if let Some(path) = &c.timings {
        let named: std::collections::BTreeMap<&str, f64> = timings.iter().map(|(s, t)| (s.as_str(), *t)).collect();
        std::fs::write(path, serde_json::to_string_pretty(&named)?)?;
    }
    if todo.contains(&Stage::Report) {
        let rep: RunReport = serde_json::from_reader(std::fs::File::open(c.out_dir.join("report.json"))?)?;
        print_report(&rep);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 1 } else { 2 })
        }
    }
}
