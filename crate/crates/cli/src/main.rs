//! `awlab`: runs Green-field, bound, scaling, transience, isoperimetry and
//! Monte Carlo experiments and writes JSON reports plus CSV tables.
//!
//! Exit codes: 0 ok, 1 a check failed, 2 bad configuration.

mod commands;
mod config;
mod input;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use input::Input;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Failed(String),
}

impl From<awlab_core::Error> for CliError {
    fn from(e: awlab_core::Error) -> Self {
        use awlab_core::Error as E;
        match e {
            E::SolverFailed { .. } | E::ExcessiveTruncation { .. } => CliError::Failed(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "awlab", version, about = "Exit-time and occupation-time experiments for reversible walks")]
struct Cli {
    #[command(flatten)]
    run: Run,
    #[command(flatten)]
    input: Input,
    /// Config file: TOML with [run], [input] and per-command sections, or a
    /// previous JSON report.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Run {
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Residual tolerance of the linear solves.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Output directory for report.json and the CSV tables; the report goes
    /// to stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<String>,
}

impl Run {
    pub fn tol(&self) -> f64 {
        self.tol.unwrap_or(awlab_core::green::DEFAULT_TOL)
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Config("this run is randomized and needs --seed".into()))
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a conductance environment and write it as an edge list.
    GenEnv(commands::GenEnv),
    /// Solve the killed Green field of one region.
    Green(commands::GreenArgs),
    /// Check the bound chain region by region.
    VerifyBounds(commands::VerifyBounds),
    /// Fit log-log exponents of exit or occupation times against volume.
    Scaling(commands::Scaling),
    /// Origin occupation over growing boxes, and the profile-function test.
    Transience(commands::Transience),
    /// Anchored isoperimetric constants.
    Isoperimetry(commands::Isoperimetry),
    /// Monte Carlo estimates of exit, occupation and displacement.
    Simulate(commands::Simulate),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenEnv(_) => "gen-env",
            Command::Green(_) => "green",
            Command::VerifyBounds(_) => "verify-bounds",
            Command::Scaling(_) => "scaling",
            Command::Transience(_) => "transience",
            Command::Isoperimetry(_) => "isoperimetry",
            Command::Simulate(_) => "simulate",
        }
    }
}

/// What a subcommand hands back for the report.
pub struct Outcome {
    pub ok: bool,
    pub result: Value,
    /// File name and contents, written under `--out`.
    pub files: Vec<(String, String)>,
}

fn threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("AWLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("AWLAB_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    threads()?;
    let file = cli.config.as_deref().map(config::load_file).transpose()?;
    let file = file.as_ref();
    let mut run: Run = config::resolve(&cli.run, file, "run")?;
    run.tol.get_or_insert(awlab_core::green::DEFAULT_TOL);
    let input: Input = config::resolve(&cli.input, file, "input")?;
    let name = cli.command.name();
    macro_rules! dispatch {
        ($args:expr, $f:path) => {{
            let mut args = config::resolve($args, file, name)?;
            let outcome = $f(&run, &input, &mut args)?;
            (outcome, serde_json::to_value(&args).expect("serializable settings"))
        }};
    }
    let (outcome, section) = match &cli.command {
        Command::GenEnv(a) => dispatch!(a, commands::gen_env),
        Command::Green(a) => dispatch!(a, commands::green),
        Command::VerifyBounds(a) => dispatch!(a, commands::verify_bounds),
        Command::Scaling(a) => dispatch!(a, commands::scaling),
        Command::Transience(a) => dispatch!(a, commands::transience),
        Command::Isoperimetry(a) => dispatch!(a, commands::isoperimetry),
        Command::Simulate(a) => dispatch!(a, commands::simulate),
    };
    let mut config = serde_json::Map::new();
    config.insert("run".into(), json!(run));
    config.insert("input".into(), json!(input));
    config.insert(name.into(), section);
    let report = json!({
        "command": name,
        "config": config,
        "seed": run.seed,
        "ok": outcome.ok,
        "result": outcome.result,
    });
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    match &run.out {
        Some(dir) => {
            let dir = PathBuf::from(dir);
            let io = |e: std::io::Error| CliError::Config(format!("{}: {e}", dir.display()));
            std::fs::create_dir_all(&dir).map_err(io)?;
            std::fs::write(dir.join("report.json"), text + "\n").map_err(io)?;
            for (file, contents) in &outcome.files {
                std::fs::write(dir.join(file), contents).map_err(io)?;
            }
        }
        None => {
            use std::io::Write;
            let _ = writeln!(std::io::stdout().lock(), "{text}");
        }
    }
    Ok(outcome.ok)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("awlab: check failed");
            ExitCode::from(1)
        }
        Err(CliError::Failed(msg)) => {
            eprintln!("awlab: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Config(msg)) => {
            eprintln!("awlab: {msg}");
            ExitCode::from(2)
        }
    }
}
