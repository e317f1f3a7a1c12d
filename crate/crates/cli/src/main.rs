use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use evosteal::harness::{emit_reports, execute, BaselineSummary, RunConfig, Strategy};

const MODEL_FILE: &str = "attacker.json";

#[derive(Debug, Parser)]
#[command(
    name = "evosteal",
    version,
    about = "Prompt-evolution model extraction in a synthetic world"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the attack and write reports under the output directory.
    Attack(AttackArgs),
    /// Print a complete configuration file to start from.
    Config {
        /// Named preset: "desk" or "full".
        #[arg(long, default_value = "desk")]
        preset: String,
    },
}

#[derive(Debug, clap::Args)]
struct AttackArgs {
    /// JSON configuration; missing keys take their defaults.
    #[arg(long)]
    config: PathBuf,
    /// Master seed, overriding the file.
    #[arg(long)]
    seed: Option<u64>,
    /// Queries per class, overriding the file.
    #[arg(long)]
    budget: Option<usize>,
    /// Output directory, overriding the file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also run the refinement-only baseline and report it alongside.
    #[arg(long)]
    ablation: bool,
    /// Also train an attacker on the victim's probability vectors.
    #[arg(long)]
    soft_labels: bool,
}

fn load_config(args: &AttackArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_json_file(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(budget) = args.budget {
        cfg.budget = budget;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    cfg.compare_ablation |= args.ablation;
    cfg.soft_labels |= args.soft_labels;
    cfg.validate()?;
    Ok(cfg)
}

fn write_model(dir: &Path, model: &evosteal::AttackerModel64) -> Result<PathBuf> {
    let path = dir.join(MODEL_FILE);
    let json = serde_json::to_string_pretty(model)?;
    fs::write(&path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn attack(args: &AttackArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let run = execute(&cfg, Strategy::Evolution)?;
    let mut report = run.report;
    if cfg.compare_ablation {
        let base = execute(&cfg, Strategy::SeedOnly)?.report;
        report.wall_clock_secs += base.wall_clock_secs;
        report.ablation = Some(BaselineSummary {
            strategy: Strategy::SeedOnly,
            attacker_accuracy: base.attacker_accuracy,
            recall: base.recall,
        });
    }

    let mut written = emit_reports(&report, &cfg.out_dir)?;
    written.push(write_model(&cfg.out_dir, &run.model)?);

    println!("victim accuracy      {:.4}", report.victim_accuracy);
    println!("attacker accuracy    {:.4}", report.attacker_accuracy);
    if let Some(soft) = report.attacker_accuracy_soft {
        println!("  with soft labels   {soft:.4}");
    }
    if let Some(base) = &report.ablation {
        println!("refinement-only      {:.4}", base.attacker_accuracy);
    }
    if let Some(recall) = &report.recall {
        println!("recall (k={})         {:.4}", recall.k, recall.mean);
    }
    println!("queries              {}", report.total_queries);
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Attack(args) => attack(args),
        Command::Config { preset } => RunConfig::preset(preset)
            .map_err(Into::into)
            .and_then(|cfg| Ok(serde_json::to_string_pretty(&cfg)?))
            .map(|json| println!("{json}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
