//! The `smfe` command line.
//!
//! ```text
//! smfe solve --game infection --infinite --tol 1e-6
//! smfe solve --game tech --horizon 10 --set p1=0.2
//! smfe oracle --game-file tiny.toml
//! smfe validate --game-file my_game.toml
//! smfe export --game infection-l021 --horizon 20
//! ```
//!
//! Exit codes: 0 success, 1 other failure, 2 usage or unreadable config,
//! 3 invalid game, 4 no stage equilibrium, 5 no convergence.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::GameConfig;
use crate::error::{Error, Result};
use crate::export::write_run;
use crate::games::{InfectionParams, TechAdoptionParams};
use crate::oracle::{oracle_report, TinyGame};
use crate::solver::{forward_pass, solve, ForwardMode, ForwardOptions};
use crate::spec::{validate, GameSpec, Horizon};
use crate::stage::SolverConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INVALID: i32 = 3;
pub const EXIT_NO_EQUILIBRIUM: i32 = 4;
pub const EXIT_NON_CONVERGENCE: i32 = 5;

/// Environment variable with the default worker count.
pub const THREADS_ENV: &str = "SMFE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "smfe", version, about = "Stackelberg mean field equilibrium solver")]
pub struct Cli {
    /// Worker threads for the per-point stage solves.
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a game and write value tables, policies and a trajectory.
    Solve(SolveArgs),
    /// Enumerate all pure SMFE of a tiny game and check the solver against them.
    Oracle(OracleArgs),
    /// Check a game specification and print the report.
    Validate(GameArgs),
    /// Print the resolved game config as TOML.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Infection game with lambda = 0.2.
    Infection,
    /// Infection game with lambda = 0.21.
    #[value(name = "infection-l021")]
    InfectionL021,
    /// Technology adoption game.
    Tech,
}

#[derive(Debug, Clone, Args)]
pub struct GameArgs {
    /// Built-in game.
    #[arg(long, value_enum, conflicts_with = "game_file", required_unless_present = "game_file")]
    pub game: Option<Preset>,
    /// Game config file (TOML).
    #[arg(long)]
    pub game_file: Option<PathBuf>,
    /// Finite horizon T.
    #[arg(long, conflicts_with = "infinite")]
    pub horizon: Option<usize>,
    /// Infinite-horizon stationary solve.
    #[arg(long)]
    pub infinite: bool,
    /// Override a game parameter, e.g. `--set lambda=0.21` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Initial leader belief, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub belief: Option<Vec<f64>>,
    /// Initial mean field, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub mean_field: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Expected,
    Sampled,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub game: GameArgs,
    /// Value-iteration tolerance (sup norm).
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Follower fixed-point tolerance.
    #[arg(long, default_value_t = 1e-9)]
    pub fixed_point_tol: f64,
    /// Bayes denominator threshold.
    #[arg(long, default_value_t = crate::dynamics::BAYES_EPSILON)]
    pub bayes_epsilon: f64,
    /// Mean field grid resolution (default depends on the number of states).
    #[arg(long)]
    pub z_resolution: Option<usize>,
    /// Leader belief grid resolution.
    #[arg(long, default_value_t = crate::grid::DEFAULT_BELIEF_RESOLUTION)]
    pub belief_resolution: usize,
    /// Number of points on the leader action grid of a built-in game.
    #[arg(long)]
    pub leader_action_points: Option<usize>,
    /// Also search mixed leader prescriptions on a lattice with this many steps.
    #[arg(long)]
    pub mixed_leader: Option<usize>,
    /// Disable the damped best-response fallback.
    #[arg(long)]
    pub no_fallback: bool,
    #[arg(long, default_value_t = 5000)]
    pub max_iter: usize,
    /// Forward pass: branch over leader actions or sample one path.
    #[arg(long, value_enum, default_value_t = ModeArg::Expected)]
    pub mode: ModeArg,
    /// Seed for sampled forward passes.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Forward steps (default: the horizon, or 50 when infinite).
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value_t = 64)]
    pub branch_cap: usize,
    /// Output directory (default `./out/<spec hash prefix>/`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    /// Tiny game file: a game config plus an `[oracle]` table.
    #[arg(long, required_unless_present = "random")]
    pub game_file: Option<PathBuf>,
    /// Use a random tiny game with this seed instead.
    #[arg(long, conflicts_with = "game_file")]
    pub random: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub leader_types: usize,
    #[arg(long, default_value_t = 2)]
    pub horizon: usize,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub game: GameArgs,
    /// Write to this file instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::TomlDe(_) => EXIT_USAGE,
        Error::Validation(_) | Error::OffSimplex { .. } => EXIT_INVALID,
        Error::NoEquilibrium(_) => EXIT_NO_EQUILIBRIUM,
        Error::NonConvergence { .. } => EXIT_NON_CONVERGENCE,
        _ => EXIT_FAILURE,
    }
}

fn preset_config(preset: Preset, horizon: Horizon) -> GameConfig {
    match preset {
        Preset::Infection => InfectionParams::default().config(horizon),
        Preset::InfectionL021 => InfectionParams {
            lambda: 0.21,
            ..Default::default()
        }
        .config(horizon),
        Preset::Tech => TechAdoptionParams::default().config(horizon),
    }
}

fn parse_value(raw: &str) -> toml::Value {
    // bare words that are not TOML values are taken as strings
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies `key=value` overrides to the `[game]` table, or to the top
/// level for keys starting with `.`.
fn apply_overrides(config: GameConfig, overrides: &[String]) -> Result<GameConfig> {
    if overrides.is_empty() {
        return Ok(config);
    }
    let mut root = toml::Table::try_from(&config)?;
    for o in overrides {
        let (key, raw) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{o}` is not KEY=VALUE")))?;
        let value = parse_value(raw.trim());
        let key = key.trim();
        if let Some(top) = key.strip_prefix('.') {
            root.insert(top.to_string(), value);
        } else {
            let game = root
                .get_mut("game")
                .and_then(|g| g.as_table_mut())
                .ok_or_else(|| Error::Config("config has no [game] table".into()))?;
            game.insert(key.to_string(), value);
        }
    }
    Ok(toml::Value::Table(root).try_into()?)
}

/// Reads a game config, ignoring an `[oracle]` table so tiny-game files
/// can be solved directly.
fn read_game_file(path: &Path) -> Result<GameConfig> {
    let mut table: toml::Table = toml::from_str(&fs::read_to_string(path)?)?;
    table.remove("oracle");
    Ok(toml::Value::Table(table).try_into()?)
}

/// Resolves the game selection flags into a config.
pub fn resolve_config(args: &GameArgs) -> Result<GameConfig> {
    let mut config = match (&args.game, &args.game_file) {
        (Some(p), None) => preset_config(*p, Horizon::Finite(10)),
        (None, Some(path)) => read_game_file(path)?,
        _ => return Err(Error::Config("give exactly one of --game and --game-file".into())),
    };
    config = apply_overrides(config, &args.overrides)?;
    if args.infinite {
        config.horizon = Horizon::Infinite;
    } else if let Some(t) = args.horizon {
        config.horizon = Horizon::Finite(t);
    }
    if let Some(b) = &args.belief {
        config.initial_leader_belief = Some(b.clone());
    }
    if let Some(z) = &args.mean_field {
        config.initial_mean_field = Some(z.clone());
    }
    Ok(config)
}

fn build_spec(args: &GameArgs, extra: &[String]) -> Result<GameSpec> {
    let mut args = args.clone();
    args.overrides.extend_from_slice(extra);
    let spec = resolve_config(&args)?.build()?;
    validate(&spec).into_result()?;
    Ok(spec)
}

fn solve_cmd(args: &SolveArgs) -> Result<PathBuf> {
    let extra: Vec<String> = match (args.leader_action_points, args.game.game) {
        (None, _) => Vec::new(),
        (Some(n), Some(Preset::Tech)) => vec![format!("price_points={n}")],
        (Some(n), Some(_)) => vec![format!("subsidy_points={n}")],
        (Some(_), None) => {
            return Err(Error::Config(
                "--leader-action-points only applies to built-in games; use --set".into(),
            ))
        }
    };
    let spec = build_spec(&args.game, &extra)?;
    let config = SolverConfig {
        z_resolution: args.z_resolution,
        belief_resolution: args.belief_resolution,
        fixed_point_tol: args.fixed_point_tol,
        bayes_epsilon: args.bayes_epsilon,
        damped_fallback: !args.no_fallback,
        mixed_leader: args.mixed_leader.is_some(),
        mixed_leader_steps: args.mixed_leader.unwrap_or(10),
        value_tol: args.tol,
        max_iter: args.max_iter,
        branch_cap: args.branch_cap,
        ..Default::default()
    };
    let solution = solve(&spec, &config)?;
    let steps = args.steps.or(match spec.horizon() {
        Horizon::Finite(_) => None,
        Horizon::Infinite => Some(50),
    });
    let options = ForwardOptions {
        mode: match args.mode {
            ModeArg::Expected => ForwardMode::Expected,
            ModeArg::Sampled => ForwardMode::Sampled { seed: args.seed },
        },
        steps,
        branch_cap: args.branch_cap,
        bayes_epsilon: args.bayes_epsilon,
    };
    let trajectory = forward_pass(
        &spec,
        solution.generator(),
        spec.initial_leader_belief(),
        spec.initial_mean_field(),
        &options,
    )?;
    let dir = args
        .out
        .clone()
        .unwrap_or_else(|| Path::new("out").join(&spec.spec_hash()[..16]));
    let manifest = write_run(&dir, &spec, &config, &solution, Some(&trajectory))?;
    let last = trajectory.main_path().last().map(|n| n.mean_field.clone());
    println!("game {} ({})", manifest.game, manifest.spec_hash);
    println!("grid points {}", manifest.grid_points);
    if let Some(r) = &manifest.convergence {
        println!(
            "converged in {} iterations, last delta {}",
            r.iterations,
            crate::export::fmt_num(r.deltas.last().copied().unwrap_or(0.0))
        );
    } else {
        println!("stages {}", solution.generator().len());
    }
    if let Some(z) = last {
        let labels = &spec.spaces().follower_states;
        let shown: Vec<String> = labels
            .iter()
            .zip(&z)
            .map(|(l, v)| format!("{l}={}", crate::export::fmt_num(*v)))
            .collect();
        println!("final mean field (main path) {}", shown.join(" "));
    }
    println!("artifacts in {}", dir.display());
    Ok(dir)
}

fn oracle_cmd(args: &OracleArgs) -> Result<bool> {
    let game = match (&args.game_file, args.random) {
        (Some(path), _) => TinyGame::from_toml_str(&fs::read_to_string(path)?)?,
        (None, Some(seed)) => TinyGame::random(seed, args.leader_types, args.horizon)?,
        (None, None) => return Err(Error::Config("give --game-file or --random".into())),
    };
    validate(&game.spec).into_result()?;
    let report = oracle_report(&game)?;
    let text = serde_json::to_string_pretty(&report)? + "\n";
    match &args.out {
        Some(p) => fs::write(p, &text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    for s in &report.initial_states {
        eprintln!(
            "pi={:?} z={:?}: {} SMFE, solver profile {}",
            s.belief,
            s.mean_field,
            s.smfe.len(),
            match s.solver_profile {
                Some(i) => format!("is #{i}"),
                None => "NOT in the set".into(),
            }
        );
    }
    Ok(report.solver_in_set)
}

fn validate_cmd(args: &GameArgs) -> Result<bool> {
    let spec = resolve_config(args)?.build()?;
    let report = validate(&spec);
    if report.is_empty() {
        println!("{}: ok", spec.name());
        Ok(true)
    } else {
        println!("{report}");
        Ok(false)
    }
}

fn export_cmd(args: &ExportArgs) -> Result<()> {
    let text = resolve_config(&args.game)?.to_toml_string()?;
    match &args.out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn init(cli: &Cli) {
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not set thread count: {e}");
        }
    }
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init(&cli);
    let outcome = match &cli.command {
        Command::Solve(a) => solve_cmd(a).map(|_| EXIT_OK),
        Command::Oracle(a) => oracle_cmd(a).map(|ok| if ok { EXIT_OK } else { EXIT_FAILURE }),
        Command::Validate(a) => validate_cmd(a).map(|ok| if ok { EXIT_OK } else { EXIT_INVALID }),
        Command::Export(a) => export_cmd(a).map(|_| EXIT_OK),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(extra: &[&str]) -> GameArgs {
        let mut v = vec!["smfe", "validate"];
        v.extend_from_slice(extra);
        match Cli::try_parse_from(v).unwrap().command {
            Command::Validate(a) => a,
            _ => unreachable!(),
        }
    }

    #[test]
    fn overrides_reach_the_game_table() {
        let c = resolve_config(&args(&["--game", "infection", "--set", "lambda=0.21", "--infinite"])).unwrap();
        assert_eq!(c.horizon, Horizon::Infinite);
        match c.game {
            crate::config::ModelConfig::Infection(p) => assert_eq!(p.lambda, 0.21),
            _ => panic!("wrong game"),
        }
    }

    #[test]
    fn preset_matches_override() {
        let a = resolve_config(&args(&["--game", "infection-l021"])).unwrap();
        let b = resolve_config(&args(&["--game", "infection", "--set", "lambda=0.21"])).unwrap();
        assert_eq!(a.build().unwrap().spec_hash(), b.build().unwrap().spec_hash());
    }

    #[test]
    fn unknown_parameter_is_a_usage_error() {
        let e = resolve_config(&args(&["--game", "tech", "--set", "p9=1"])).unwrap_err();
        assert_eq!(exit_code(&e), EXIT_USAGE);
    }

    #[test]
    fn top_level_override() {
        let c = resolve_config(&args(&["--game", "tech", "--set", ".name=\"x\""])).unwrap();
        assert_eq!(c.name.as_deref(), Some("x"));
    }

    #[test]
    fn missing_game_is_usage() {
        assert_eq!(run(["smfe", "validate"]), EXIT_USAGE);
    }
}
