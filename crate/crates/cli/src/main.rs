//! Command-line driver: train, evaluate, verify the bounds, print the
//! resolved configuration.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use relaynet::algo::Method;
use relaynet::checkpoint::{manifest, Checkpoint};
use relaynet::eval::{compare_methods, curves_csv, evaluate_trained, metrics_csv, run_method, ComparisonRow};
use relaynet::robustness::{sweep_lemma1, sweep_lemma2, sweep_theorem1};
use relaynet::scenario::{Experiment, Scenario};

#[derive(Parser, Debug)]
#[command(name = "relaynet", version, about = "Robust relay selection and power allocation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one or more methods and evaluate the frozen models.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the scenario's test parameters.
    Evaluate(EvaluateArgs),
    /// Check the analytic bounds on random instances.
    Verify(VerifyArgs),
    /// Print the resolved scenario as TOML.
    PrintConfig(ScenarioArgs),
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    /// Scenario TOML file; built-in defaults when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Override a scenario key, e.g. `--set ppo.kappa=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Csv,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Methods to train, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    method: Vec<Method>,
    /// Seeds, comma separated; the scenario's protocol seeds when omitted.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    /// Directory receiving every output file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    workers: u64,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Evaluation seed; the checkpoint's training seed when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory receiving the summary CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    workers: u64,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Suite {
    Lemma1,
    Lemma2,
    Theorem1,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(value_enum)]
    suite: Suite,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    count: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Chain horizon of the lemma2 suite.
    #[arg(long, default_value_t = 10)]
    horizon: usize,
    /// Directory receiving the per-instance CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Outcome of a command that ran to completion but found a failure.
struct Failed(String);

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(Failed(msg))) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<Option<Failed>> {
    match cli.command {
        Command::Train(args) => train(args).map(|()| None),
        Command::Evaluate(args) => evaluate(args).map(|()| None),
        Command::Verify(args) => verify(args),
        Command::PrintConfig(args) => {
            print!("{}", load_scenario(&args)?.to_toml());
            Ok(None)
        }
    }
}

fn load_scenario(args: &ScenarioArgs) -> Result<Scenario> {
    let text = match &args.scenario {
        Some(path) => fs::read_to_string(path).with_context(|| format!("cannot read scenario {}", path.display()))?,
        None => String::new(),
    };
    Ok(Scenario::from_toml_with_overrides(&text, &args.overrides)?)
}

fn build(args: &ScenarioArgs) -> Result<Experiment> {
    let experiment = load_scenario(args)?.build()?;
    Ok(experiment)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn render(rows: Vec<ComparisonRow>, format: Format) -> String {
    let cmp = compare_methods(rows);
    match format {
        Format::Table => cmp.to_table(),
        Format::Csv => cmp.to_csv(),
    }
}

fn train(args: TrainArgs) -> Result<()> {
    let experiment = build(&args.scenario)?;
    let seeds = if args.seed.is_empty() {
        experiment.scenario.protocol.seeds.clone()
    } else {
        args.seed.clone()
    };
    let workers = args.workers as usize;
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    write(&args.out, "scenario.toml", &experiment.scenario.to_toml())?;

    let mut reports = Vec::new();
    let mut rows = Vec::new();
    for &method in &args.method {
        let mut summaries = Vec::new();
        for &seed in &seeds {
            let (trained, report) = run_method(&experiment, method, seed, workers)
                .with_context(|| format!("training {method} with seed {seed}"))?;
            let stem = format!("{method}-seed{seed}");
            let checkpoint = Checkpoint {
                method,
                seed,
                scenario_hash: experiment.scenario.hash(),
                grid: experiment.family.grid.clone(),
                model: trained.model,
            };
            write(&args.out, &format!("{stem}.ckpt"), &checkpoint.to_text())?;
            write(&args.out, &format!("{stem}-metrics.csv"), &metrics_csv(&report.episodes))?;
            write(
                &args.out,
                &format!("{stem}-evaluation.csv"),
                &compare_methods(vec![ComparisonRow::new(method.name(), &report.evaluation)]).to_csv(),
            )?;
            summaries.push(report.evaluation.clone());
            reports.push(report);
        }
        write(&args.out, &format!("{method}-manifest.txt"), &manifest(&experiment, method, &seeds, workers))?;
        rows.push(ComparisonRow::median(method.name(), &summaries)?);
    }
    write(&args.out, "curves.csv", &curves_csv(&reports.iter().collect::<Vec<_>>()))?;
    write(&args.out, "comparison.csv", &compare_methods(rows.clone()).to_csv())?;
    print!("{}", render(rows, args.format));
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let experiment = build(&args.scenario)?;
    let text = fs::read_to_string(&args.checkpoint)
        .with_context(|| format!("cannot read checkpoint {}", args.checkpoint.display()))?;
    let checkpoint = Checkpoint::from_text(&text).with_context(|| format!("in {}", args.checkpoint.display()))?;
    checkpoint.check_grid(&experiment)?;
    let seed = args.seed.unwrap_or(checkpoint.seed);
    let summary = evaluate_trained(&experiment, &checkpoint.model, seed, args.workers as usize)?;
    let rows = vec![ComparisonRow::new(checkpoint.method.name(), &summary)];
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        write(
            dir,
            &format!("{}-seed{seed}-evaluation.csv", checkpoint.method),
            &compare_methods(rows.clone()).to_csv(),
        )?;
    }
    print!("{}", render(rows, args.format));
    Ok(())
}

fn verify(args: VerifyArgs) -> Result<Option<Failed>> {
    let count = args.count as usize;
    let report = match args.suite {
        Suite::Lemma1 => sweep_lemma1(count, args.seed)?,
        Suite::Lemma2 => {
            if args.horizon == 0 {
                bail!("lemma2 horizon must be >= 1");
            }
            sweep_lemma2(count, args.seed, args.horizon)?
        }
        Suite::Theorem1 => sweep_theorem1(count, args.seed)?,
    };
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        write(dir, &format!("{}.csv", report.check), &report.to_csv())?;
    }
    print!("{}", report.to_text());
    Ok(match report.violations() {
        0 => None,
        n => Some(Failed(format!("{n} of {} instances violate the bound", report.instances()))),
    })
}
