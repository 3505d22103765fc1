mod config;
mod experiments;
mod plots;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "regenjump", version, about = "Run jump-diffusion ergodicity experiments")]
struct Cli {
    /// Overrides the seed of the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; all cores by default.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Root directory for run outputs.
    #[arg(long, global = true, env = "REGENJUMP_OUT", default_value = "runs")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Runs the experiment described by a JSON config.
    Run { config: PathBuf },
    /// Derives plot tables from the artifacts of a finished run.
    Plots { dir: PathBuf },
}

enum Outcome {
    Ok,
    ChecksFailed,
}

fn output_dir(root: &Path, cfg: &ExperimentConfig) -> PathBuf {
    match &cfg.output {
        Some(p) if p.is_absolute() => p.clone(),
        Some(p) => root.join(p),
        None => root.join(&cfg.name),
    }
}

fn prepare(dir: &Path, name: &str) -> Result<()> {
    let manifest = dir.join("manifest.json");
    if manifest.exists() {
        let old: serde_json::Value = serde_json::from_slice(&fs::read(&manifest)?)
            .with_context(|| format!("unreadable {}", manifest.display()))?;
        let other = old["config"]["name"].as_str().unwrap_or_default();
        if other != name {
            bail!(
                "{} already holds the run {other:?}; refusing to overwrite it with {name:?}",
                dir.display()
            );
        }
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn run(cli: &Cli, path: &Path) -> Result<Outcome> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let dir = output_dir(&cli.out, &cfg);
    prepare(&dir, &cfg.name)?;

    let art = experiments::run(&cfg)?;
    let known: Vec<&str> = art.checks.iter().map(|c| c.name.as_str()).collect();
    for c in &cfg.checks {
        if !known.contains(&c.as_str()) {
            bail!(
                "check {c:?} is not available for a {} experiment (available: {})",
                cfg.experiment.kind(),
                known.join(", ")
            );
        }
    }
    let failed: Vec<_> = art
        .checks
        .iter()
        .filter(|c| cfg.checks.contains(&c.name) && !c.passed)
        .collect();

    fs::write(
        dir.join("manifest.json"),
        serde_json::to_vec_pretty(&json!({
            "config": cfg,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": cfg.seed,
        }))?,
    )?;
    for (name, bytes) in &art.files {
        fs::write(dir.join(name), bytes)?;
    }
    fs::write(
        dir.join("summary.json"),
        serde_json::to_vec_pretty(&json!({
            "name": cfg.name,
            "experiment": cfg.experiment.kind(),
            "seed": cfg.seed,
            "results": art.results,
            "checks": art.checks,
            "declared": cfg.checks,
            "passed": failed.is_empty(),
        }))?,
    )?;

    println!("{}: wrote {}", cfg.name, dir.display());
    for c in &art.checks {
        let mark = if c.passed { "pass" } else { "FAIL" };
        let declared = if cfg.checks.contains(&c.name) { "" } else { " (informational)" };
        println!("  {mark} {}{declared}: {}", c.name, c.detail);
    }
    if failed.is_empty() {
        Ok(Outcome::Ok)
    } else {
        for c in &failed {
            eprintln!("check failed: {} ({})", c.name, c.detail);
        }
        Ok(Outcome::ChecksFailed)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Run { config } => run(&cli, config),
        Command::Plots { dir } => plots::make_plots(dir).map(|files| {
            for f in files {
                println!("{}", f.display());
            }
            Outcome::Ok
        }),
    };
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::ChecksFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
