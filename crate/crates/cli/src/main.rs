//! Command-line experiment runner.

mod commands;
mod config;

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::RunError;
use crate::config::{parse_pairs, Command, ConfigError, ExperimentConfig};

#[derive(Parser, Debug)]
#[command(name = "sharpsched", version, about = "Utilization threshold experiments for fixed-priority scheduling")]
struct Cli {
    /// Base random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output CSV path; a run record is written next to it as `<out>.run`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Flat `key = value` config file (run records work too).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for parallel trials.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Option<Cmd>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Draw one random task set.
    Gen(GenArgs),
    /// Exact rate-monotonic test for a task set file.
    Check(CheckArgs),
    /// Schedulable fraction over a utilization grid.
    Sweep(SweepArgs),
    /// Threshold location and width for one task count.
    Threshold(SweepArgs),
    /// Threshold width across task counts.
    Width(WidthArgs),
    /// Aperiodic deadline-monotonic simulation.
    Apsim(ApsimArgs),
    /// Power-controlled request server simulation.
    Dvs(DvsArgs),
    /// Named preset that regenerates one figure's data.
    Recipe(RecipeArgs),
}

#[derive(Args, Debug, Default)]
struct GeneratorArgs {
    /// Utilization rule: uunisort or equal-split.
    #[arg(long)]
    generator: Option<String>,
    /// Period rule: uniform:LO:HI, set:P1,P2,... or restricted.
    #[arg(long)]
    periods: Option<String>,
}

#[derive(Args, Debug, Default)]
struct GridArgs {
    #[arg(long)]
    u_min: Option<f64>,
    #[arg(long)]
    u_max: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    n: Option<usize>,
    /// Total utilization.
    #[arg(long)]
    u: Option<f64>,
    /// csv or text.
    #[arg(long)]
    format: Option<String>,
    #[command(flatten)]
    generator: GeneratorArgs,
}

#[derive(Args, Debug)]
struct CheckArgs {
    /// Task set file: one `period exec_time [deadline]` per line.
    input: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    n: Option<usize>,
    #[command(flatten)]
    generator: GeneratorArgs,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args, Debug)]
struct WidthArgs {
    /// Comma-separated task counts.
    #[arg(long)]
    n_list: Option<String>,
    #[command(flatten)]
    generator: GeneratorArgs,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args, Debug, Default)]
struct StreamArgs {
    #[arg(long)]
    streams: Option<usize>,
    #[arg(long)]
    max_cd: Option<f64>,
    #[arg(long)]
    deadline_min: Option<f64>,
    #[arg(long)]
    deadline_max: Option<f64>,
    #[arg(long)]
    duty: Option<f64>,
    #[arg(long)]
    horizon_factor: Option<f64>,
}

#[derive(Args, Debug)]
struct ApsimArgs {
    /// Run once with this peak synthetic utilization instead of sweeping.
    #[arg(long)]
    peak: Option<f64>,
    /// Write the event trace of a single run to this CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    streams: StreamArgs,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args, Debug, Default)]
struct DvsArgs {
    /// Comma-separated set points.
    #[arg(long)]
    set_point: Option<String>,
    /// Comma-separated offered loads.
    #[arg(long)]
    load: Option<String>,
    #[arg(long)]
    sessions: Option<usize>,
    /// Operating points file: one `freq_mhz voltage` pair per line.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Wait after a departure before slowing down, in ms.
    #[arg(long)]
    hysteresis: Option<f64>,
    /// none, uniform:A or exponential.
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    static_fraction: Option<f64>,
}

#[derive(Args, Debug)]
struct RecipeArgs {
    /// fig3a, fig3b, fig4, fig5 or fig8.
    name: String,
    #[arg(long)]
    trials: Option<u64>,
}

type Pairs = Vec<(&'static str, String)>;

fn push<T: ToString>(pairs: &mut Pairs, key: &'static str, v: &Option<T>) {
    if let Some(v) = v {
        pairs.push((key, v.to_string()));
    }
}

fn path_str(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

impl GeneratorArgs {
    fn pairs(&self, out: &mut Pairs) {
        push(out, "generator", &self.generator);
        push(out, "periods", &self.periods);
    }
}

impl GridArgs {
    fn pairs(&self, out: &mut Pairs) {
        push(out, "u_min", &self.u_min);
        push(out, "u_max", &self.u_max);
        push(out, "step", &self.step);
        push(out, "trials", &self.trials);
        push(out, "epsilon", &self.epsilon);
    }
}

impl StreamArgs {
    fn pairs(&self, out: &mut Pairs) {
        push(out, "streams", &self.streams);
        push(out, "max_cd", &self.max_cd);
        push(out, "deadline_min", &self.deadline_min);
        push(out, "deadline_max", &self.deadline_max);
        push(out, "duty", &self.duty);
        push(out, "horizon_factor", &self.horizon_factor);
    }
}

impl Cmd {
    fn command(&self) -> Command {
        match self {
            Cmd::Gen(_) => Command::Gen,
            Cmd::Check(_) => Command::Check,
            Cmd::Sweep(_) => Command::Sweep,
            Cmd::Threshold(_) => Command::Threshold,
            Cmd::Width(_) => Command::Width,
            Cmd::Apsim(_) => Command::Apsim,
            Cmd::Dvs(_) => Command::Dvs,
            Cmd::Recipe(_) => Command::Recipe,
        }
    }

    /// Settings given explicitly on the command line.
    fn pairs(&self) -> Pairs {
        let mut p = Pairs::new();
        match self {
            Cmd::Gen(a) => {
                push(&mut p, "n", &a.n);
                push(&mut p, "u", &a.u);
                push(&mut p, "format", &a.format);
                a.generator.pairs(&mut p);
            }
            Cmd::Check(a) => push(&mut p, "input", &path_str(&a.input)),
            Cmd::Sweep(a) | Cmd::Threshold(a) => {
                push(&mut p, "n", &a.n);
                a.generator.pairs(&mut p);
                a.grid.pairs(&mut p);
            }
            Cmd::Width(a) => {
                push(&mut p, "n_list", &a.n_list);
                a.generator.pairs(&mut p);
                a.grid.pairs(&mut p);
            }
            Cmd::Apsim(a) => {
                push(&mut p, "peak", &a.peak);
                push(&mut p, "trace", &path_str(&a.trace));
                a.streams.pairs(&mut p);
                a.grid.pairs(&mut p);
            }
            Cmd::Dvs(a) => {
                push(&mut p, "set_points", &a.set_point);
                push(&mut p, "loads", &a.load);
                push(&mut p, "sessions", &a.sessions);
                push(&mut p, "profile", &path_str(&a.profile));
                push(&mut p, "hysteresis", &a.hysteresis);
                push(&mut p, "noise", &a.noise);
                push(&mut p, "static_fraction", &a.static_fraction);
            }
            Cmd::Recipe(a) => {
                push(&mut p, "recipe", &Some(a.name.clone()));
                push(&mut p, "trials", &a.trials);
            }
        }
        p
    }
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Run(RunError),
}

/// Layers defaults, the config file and command-line flags, in that order.
fn resolve(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let (file_pairs, source) = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            let pairs = parse_pairs(&text)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            (pairs, path.display().to_string())
        }
        None => (Vec::new(), String::new()),
    };
    let file_err = |e: ConfigError| Failure::Config(format!("{source}: {e}"));
    let cli_err = |e: ConfigError| Failure::Config(format!("command line: {e}"));
    let cli_pairs = cli.command.as_ref().map(Cmd::pairs).unwrap_or_default();

    let command = match (&cli.command, file_pairs.iter().rev().find(|p| p.1 == "command")) {
        (Some(c), _) => c.command(),
        (None, Some((line, _, v))) => v
            .parse()
            .map_err(|m: String| file_err(ConfigError { line: Some(*line), field: Some("command".into()), message: m }))?,
        (None, None) => {
            return Err(Failure::Config(
                "no subcommand given and no `command` in the config file".into(),
            ))
        }
    };
    let recipe = if let Some((_, v)) = cli_pairs.iter().find(|p| p.0 == "recipe") {
        Some(v.parse().map_err(|m: String| {
            cli_err(ConfigError { line: None, field: Some("recipe".into()), message: m })
        })?)
    } else if let Some((line, _, v)) = file_pairs.iter().rev().find(|p| p.1 == "recipe") {
        Some(v.parse().map_err(|m: String| {
            file_err(ConfigError { line: Some(*line), field: Some("recipe".into()), message: m })
        })?)
    } else {
        None
    };

    let mut cfg = ExperimentConfig::defaults(command, recipe);
    for (line, k, v) in &file_pairs {
        if k == "command" {
            continue;
        }
        cfg.set(k, v).map_err(|e| file_err(e.at_line(*line)))?;
    }
    cfg.command = command;
    for (k, v) in &cli_pairs {
        cfg.set(k, v).map_err(cli_err)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.display().to_string());
    }
    Ok(cfg)
}

fn write_file(path: &str, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| {
        Failure::Run(RunError::File {
            path: path.to_string(),
            message: e.to_string(),
        })
    })
}

fn run_record(cfg: &ExperimentConfig) -> String {
    format!(
        "# sharpsched run record; rerun with `sharpsched --config <this file>`\nversion = {}\n{}",
        env!("CARGO_PKG_VERSION"),
        cfg.to_text()
    )
}

fn execute(cli: &Cli) -> Result<i32, Failure> {
    let cfg = resolve(cli)?;
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Failure::Config("command line: field `jobs`: must be positive".into()));
        }
        // only fails if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let output = commands::run(&cfg).map_err(|e| match e {
        RunError::Config(c) => Failure::Config(format!("config: {c}")),
        other => Failure::Run(other),
    })?;

    for (path, contents) in &output.extra {
        write_file(path, contents)?;
    }
    match &cfg.out {
        Some(path) => {
            write_file(path, &output.csv)?;
            write_file(&format!("{path}.run"), &run_record(&cfg))?;
        }
        None if output.verdict.is_none() => {
            std::io::stdout()
                .write_all(output.csv.as_bytes())
                .map_err(|e| Failure::Run(RunError::File { path: "stdout".into(), message: e.to_string() }))?;
        }
        None => {}
    }
    if let Some(v) = &output.verdict {
        println!("{v}");
    }
    for note in &output.notes {
        eprintln!("{note}");
    }
    Ok(output.exit_code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
