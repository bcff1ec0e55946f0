mod commands;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use commands::Outcome;

#[derive(Parser)]
#[command(name = "wcsched", version, about = "Worst-case service scheduling on a slotted server")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Schedulability verdict, violating interval and total-service range.
    Check(Common),
    /// Run the scenario and verify every flow's guarantee.
    Simulate(SimulateArgs),
    /// Baseline table, vertices, centroid and membership of a slot's feasible set.
    Polytope(PolytopeArgs),
    /// Tandem service of flows[0] (inner) followed by flows[1] (outer).
    Compose(Common),
    /// Multiplexing gains of the initial flows.
    Gain(Common),
}

#[derive(Args, Clone)]
pub struct Common {
    /// Scenario file, or a directory of `*.json` scenarios.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Report path (for `simulate`: the JSON Lines run log).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the arrival generator seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Convert dual-curve flows to spectral matrices.
    #[arg(long)]
    pub spectral: bool,
    #[arg(short, long, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Args, Clone)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Cross-check each slot against the brute-force feasible set.
    #[arg(long)]
    pub oracle: bool,
    /// CSV of per-slot backlog, service and headroom.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
}

#[derive(Args, Clone)]
pub struct PolytopeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Slot to analyse; earlier slots are simulated under the scenario policy.
    #[arg(long, default_value_t = 0)]
    pub slot: usize,
    /// Total service of the slice; defaults to the largest feasible total.
    #[arg(long)]
    pub mu: Option<u64>,
    /// List the slice's distinct vertices.
    #[arg(long)]
    pub vertices: bool,
    /// Schedule to test for membership, e.g. `2,2`. Repeatable.
    #[arg(long)]
    pub probe: Vec<String>,
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Check(c) | Command::Compose(c) | Command::Gain(c) => c,
            Command::Simulate(s) => &s.common,
            Command::Polytope(p) => &p.common,
        }
    }
}

fn horizon_max() -> anyhow::Result<Option<usize>> {
    match std::env::var("WCSCHED_HORIZON_MAX") {
        Ok(s) => Ok(Some(s.trim().parse().with_context(|| format!("WCSCHED_HORIZON_MAX={s:?} is not a number"))?)),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn execute(cmd: &Command, path: &Path, hmax: Option<usize>) -> anyhow::Result<Outcome> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let sc = wcsched_core::sim::scenario::Scenario::from_json(&text)?;
    let common = cmd.common();
    if common.verbose > 0 {
        eprintln!("{}: c={} H={} flows={}", path.display(), sc.c, sc.horizon, sc.flows.len());
    }
    let opts = commands::options(common, hmax);
    match cmd {
        Command::Check(_) => commands::check(&sc, &opts),
        Command::Simulate(s) => commands::simulate(&sc, opts, s.oracle),
        Command::Polytope(p) => commands::polytope(&sc, &opts, p),
        Command::Compose(_) => commands::compose(&sc, &opts),
        Command::Gain(_) => commands::gain(&sc, &opts),
    }
}

fn write_out(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

fn run_single(cmd: &Command, hmax: Option<usize>) -> anyhow::Result<u8> {
    let common = cmd.common();
    let out = execute(cmd, &common.scenario, hmax)?;
    match (&out.log, cmd) {
        (Some(log), Command::Simulate(s)) => {
            if let Some(p) = &s.plot_data {
                commands::write_plot_data(log, p)?;
            }
            if let Some(p) = &common.out {
                write_out(Some(p), &log.to_jsonl())?;
                print!("{}", pretty(&out.report));
            } else {
                print!("{}", log.to_jsonl());
                eprint!("{}", pretty(&out.report));
            }
        }
        _ => write_out(common.out.as_deref(), &pretty(&out.report))?,
    }
    Ok(out.code)
}

/// Input errors outrank unschedulable systems, which outrank violations.
fn worst(a: u8, b: u8) -> u8 {
    let rank = |c: u8| match c {
        1 => 3,
        3 => 2,
        2 => 1,
        _ => 0,
    };
    if rank(b) > rank(a) {
        b
    } else {
        a
    }
}

fn run_dir(cmd: &Command, dir: &Path, hmax: Option<usize>) -> anyhow::Result<u8> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let common = cmd.common();
    let log_dir = match cmd {
        Command::Simulate(s) => {
            if s.plot_data.is_some() {
                bail!("--plot-data needs a single scenario file");
            }
            if let Some(d) = &common.out {
                std::fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
            }
            common.out.clone()
        }
        _ => None,
    };
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(files.len().max(1));
    let results: Vec<(u8, Value)> = std::thread::scope(|scope| {
        let chunks: Vec<&[PathBuf]> = files.chunks(files.len().div_ceil(workers).max(1)).collect();
        let handles: Vec<_> = chunks
            .into_iter()
            .map(|chunk| {
                let log_dir = log_dir.as_deref();
                scope.spawn(move || chunk.iter().map(|f| one_of_many(cmd, f, hmax, log_dir)).collect::<Vec<_>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    });
    let code = results.iter().fold(0, |acc, (c, _)| worst(acc, *c));
    let report = json!({ "results": results.into_iter().map(|(_, v)| v).collect::<Vec<_>>() });
    let text = pretty(&report);
    match cmd {
        Command::Simulate(_) => print!("{text}"),
        _ => write_out(common.out.as_deref(), &text)?,
    }
    Ok(code)
}

fn one_of_many(cmd: &Command, file: &Path, hmax: Option<usize>, log_dir: Option<&Path>) -> (u8, Value) {
    let name = file.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let result = execute(cmd, file, hmax).and_then(|out| {
        if let (Some(log), Some(dir)) = (&out.log, log_dir) {
            let stem = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            std::fs::write(dir.join(format!("{stem}.jsonl")), log.to_jsonl())?;
        }
        Ok(out)
    });
    match result {
        Ok(out) => (out.code, json!({ "scenario": name, "exit": out.code, "report": out.report })),
        Err(e) => {
            let code = commands::exit_code_of(&e);
            (code, json!({ "scenario": name, "exit": code, "error": format!("{e:#}") }))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = horizon_max().and_then(|hmax| {
        let path = &cli.command.common().scenario;
        if path.is_dir() {
            run_dir(&cli.command, path, hmax)
        } else {
            run_single(&cli.command, hmax)
        }
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code_of(&e))
        }
    }
}
