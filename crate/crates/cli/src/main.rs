//! `fjcap`: capacity planning for document-partitioned search clusters.

mod args;
mod commands;
mod manifest;
mod table;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use fjcap::model::ModelError;
use fjcap::scenario::ScenarioError;

use crate::manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "fjcap", version, about)]
struct Cli {
    /// Output directory for result files and the run manifest.
    #[arg(long, env = "FJCAP_OUT_DIR", default_value = "fjcap-out", global = true)]
    out: PathBuf,

    /// How results are printed on stdout. Files are always CSV.
    #[arg(long, value_enum, default_value_t = Format::Table, global = true)]
    format: Format,

    /// Worker threads for sweeps and replications (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Re-run the command recorded in a manifest.json.
    #[arg(long, value_name = "PATH")]
    replay: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Table,
    Csv,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Response-time bounds at one arrival rate.
    Analyze(commands::analyze::AnalyzeArgs),
    /// Load sweeps, upgrade gains and the built-in case study.
    Scenario(commands::scenario::ScenarioArgs),
    /// Highest rate meeting a response-time SLO, and the replicas needed.
    Size(commands::size::SizeArgs),
    /// Discrete-event simulation of the broker and index servers.
    Simulate(commands::simulate::SimulateArgs),
    /// Query-log pipeline: load, folding, interarrival fits, popularity.
    Characterize(commands::characterize::CharacterizeArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Analyze(_) => "analyze",
            Command::Scenario(_) => "scenario",
            Command::Size(_) => "size",
            Command::Simulate(_) => "simulate",
            Command::Characterize(_) => "characterize",
        }
    }
}

/// Shared state of one invocation.
pub struct Ctx {
    pub out: PathBuf,
    pub format: Format,
    pub pool: rayon::ThreadPool,
    pub manifest: RunManifest,
}

impl Ctx {
    /// Writes `contents` to `name` inside the output directory and records it.
    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.out.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.manifest.outputs.push(name.to_owned());
        Ok(())
    }

    pub fn print(&self, table: &table::Table) {
        match self.format {
            Format::Table => print!("{}", table.aligned()),
            Format::Csv => print!("{}", table.csv()),
        }
    }
}

/// Failure classes with their own exit codes.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<ModelError>() {
            if e.is_saturation() {
                return 2;
            }
        }
        if let Some(e) = cause.downcast_ref::<ScenarioError>() {
            match e {
                ScenarioError::Infeasible { .. } => return 3,
                ScenarioError::Model(m) if m.is_saturation() => return 2,
                _ => {}
            }
        }
        if cause.downcast_ref::<commands::Saturated>().is_some() {
            return 2;
        }
    }
    1
}

fn load_replay(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    let (command, format, jobs) = match (&cli.replay, cli.command) {
        (Some(_), Some(_)) => anyhow::bail!("--replay takes the command from the manifest; drop the subcommand"),
        (Some(path), None) => {
            let m = load_replay(path)?;
            (m.command, m.format, m.jobs.or(cli.jobs))
        }
        (None, Some(cmd)) => (cmd, cli.format, cli.jobs),
        (None, None) => anyhow::bail!("no subcommand given; see --help"),
    };
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.unwrap_or(0)).build()?;
    let mut ctx = Ctx { out: cli.out, format, pool, manifest: RunManifest::start(command.clone(), format, jobs) };

    let result = match &command {
        Command::Analyze(a) => commands::analyze::run(a, &mut ctx),
        Command::Scenario(a) => commands::scenario::run(a, &mut ctx),
        Command::Size(a) => commands::size::run(a, &mut ctx),
        Command::Simulate(a) => commands::simulate::run(a, &mut ctx),
        Command::Characterize(a) => commands::characterize::run(a, &mut ctx),
    };
    if let Err(e) = &result {
        ctx.manifest.error = Some(format!("{e:#}"));
    }
    ctx.manifest.write(&ctx.out)?;
    result
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors share the malformed-input code; 2 is reserved for saturation.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
