use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dampwave_cli::recipes::{find, recipes};
use dampwave_cli::{run, Command, ExperimentConfig, HarnessError, RunOutcome};

#[derive(Parser)]
#[command(name = "dampwave", version, about = "Damped wave equation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Experiment config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for randomized checks; overrides `[verify] seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Characteristic roots of every mode: roots.csv.
    Roots,
    /// Trajectory and norm histories: trajectory.csv, norms.csv.
    Simulate {
        /// Ignore the forcing section.
        #[arg(long, conflicts_with = "forced")]
        homogeneous: bool,
        /// Require a nonzero forcing section.
        #[arg(long)]
        forced: bool,
    },
    /// Free-evolution amplification per eigenvalue: gap_scan.csv.
    GapScan,
    /// Growth verdicts over the sigma and alpha grids: diagram.csv.
    Diagram,
    /// Builds a counterexample forcing and its certificate.
    Counterexample {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        statement: Option<u8>,
    },
    /// Oracle cross-checks and the energy inequality: verify.csv.
    Verify,
    /// Lists, writes out or runs the built-in recipes.
    Recipes {
        /// Write each recipe config into this directory.
        #[arg(long)]
        emit: Option<PathBuf>,
        /// Run the named recipe (full name or AC number).
        #[arg(long)]
        run: Option<String>,
    },
}

const DEFAULT_VERIFY: &str = "[damping]\nsigma = 1.0\ndelta = 1.0\n";

fn load(path: &Option<PathBuf>, fallback: Option<&str>) -> Result<ExperimentConfig, HarnessError> {
    match (path, fallback) {
        (Some(p), _) => ExperimentConfig::load(p),
        (None, Some(text)) => ExperimentConfig::parse(text, std::path::Path::new(".")),
        (None, None) => Err(HarnessError::Validation {
            field: "--config".into(),
            constraint: "required for this subcommand".into(),
        }),
    }
}

fn report(o: &RunOutcome) -> ExitCode {
    for line in &o.summary {
        println!("{line}");
    }
    for (path, rows) in &o.files {
        println!("wrote {} ({rows} rows)", path.display());
    }
    println!("manifest {}", o.manifest.display());
    match &o.failure {
        Some(msg) => {
            eprintln!("certification failed: {msg}");
            ExitCode::from(3)
        }
        None => ExitCode::SUCCESS,
    }
}

fn execute(cli: Cli) -> Result<ExitCode, HarnessError> {
    let c = &cli.common;
    if let Some(n) = c.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| HarnessError::Validation {
                field: "--threads".into(),
                constraint: e.to_string(),
            })?;
    }
    let (command, cfg) = match cli.command {
        Cmd::Recipes { emit, run: name } => {
            if let Some(dir) = emit {
                std::fs::create_dir_all(&dir)?;
                for r in recipes() {
                    std::fs::write(dir.join(format!("{}.toml", r.name)), r.config)?;
                }
            }
            if let Some(name) = name {
                let r = find(&name).ok_or_else(|| HarnessError::Validation {
                    field: "--run".into(),
                    constraint: format!("no recipe named {name:?}"),
                })?;
                let out = c.out.clone().unwrap_or_else(|| PathBuf::from("out").join(r.name));
                return Ok(report(&r.run(&out, c.seed)?));
            }
            for r in recipes() {
                println!("{:<26} {:<28} {}", r.name, r.command.name(), r.description);
            }
            return Ok(ExitCode::SUCCESS);
        }
        Cmd::Roots => (Command::Roots, load(&c.config, None)?),
        Cmd::Simulate { homogeneous, forced } => {
            let mut cfg = load(&c.config, None)?;
            if homogeneous {
                cfg.forcing.kind = "zero".into();
            }
            if forced && !cfg.is_forced() {
                return Err(HarnessError::Validation {
                    field: "forcing.kind".into(),
                    constraint: "--forced needs a nonzero forcing".into(),
                });
            }
            (Command::Simulate, cfg)
        }
        Cmd::GapScan => (Command::GapScan, load(&c.config, None)?),
        Cmd::Diagram => (Command::Diagram, load(&c.config, None)?),
        Cmd::Counterexample { statement } => {
            let cfg = load(&c.config, None)?;
            let s = statement.or(cfg.counterexample.statement).ok_or_else(|| HarnessError::Validation {
                field: "--statement".into(),
                constraint: "give --statement or counterexample.statement".into(),
            })?;
            (Command::Counterexample(s), cfg)
        }
        Cmd::Verify => (Command::Verify, load(&c.config, Some(DEFAULT_VERIFY))?),
    };
    let out = c.out.clone().unwrap_or_else(|| cfg.resolve(&cfg.output.dir));
    Ok(report(&run(command, &cfg, &out, c.seed)?))
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
