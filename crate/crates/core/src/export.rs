//! Run artifacts: value tables, policies and trajectories as CSV, a JSON
//! manifest and per-point diagnostics as JSON lines.
//!
//! Every writer is deterministic. Numbers go through [`fmt_num`], rows are
//! in grid order and nothing depends on time or thread scheduling, so two
//! runs with the same inputs produce identical bytes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{csv_err, GridTable};
use crate::solver::{ConvergenceReport, EquilibriumGenerator, ForwardMode, Solution, Trajectory};
use crate::spec::{GameSpec, Horizon};
use crate::stage::{SelectionRule, SolverConfig, StageDiagnostics};

/// Formats `x` with 12 significant digits, `%.12g` style, so regression diffs
/// stay readable and deterministic.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    const SIG: i32 = 12;
    let sci = format!("{:.*e}", (SIG - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..SIG).contains(&exp) {
        let decimals = (SIG - 1 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        let t = s.trim_end_matches('0').trim_end_matches('.');
        if t == "-0" {
            "0".into()
        } else {
            t.to_string()
        }
    } else {
        s
    }
}

/// Solver settings as recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub z_resolution: usize,
    pub belief_resolution: usize,
    pub fixed_point_tol: f64,
    pub tie_tol: f64,
    pub bayes_epsilon: f64,
    pub damped_fallback: bool,
    pub damping: f64,
    pub damped_max_iter: usize,
    pub mixed_leader: bool,
    pub mixed_leader_steps: usize,
    pub value_tol: f64,
    pub max_iter: usize,
    pub branch_cap: usize,
    pub selection: String,
}

impl Settings {
    pub fn new(spec: &GameSpec, config: &SolverConfig) -> Self {
        Self {
            z_resolution: config.z_resolution_for(spec),
            belief_resolution: config.belief_resolution,
            fixed_point_tol: config.fixed_point_tol,
            tie_tol: config.tie_tol,
            bayes_epsilon: config.bayes_epsilon,
            damped_fallback: config.damped_fallback,
            damping: config.damping,
            damped_max_iter: config.damped_max_iter,
            mixed_leader: config.mixed_leader,
            mixed_leader_steps: config.mixed_leader_steps,
            value_tol: config.value_tol,
            max_iter: config.max_iter,
            branch_cap: config.branch_cap,
            selection: match config.selection {
                SelectionRule::Optimistic => "optimistic".into(),
                SelectionRule::Custom(_) => "custom".into(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    #[serde(flatten)]
    pub mode: ForwardMode,
    pub steps: usize,
    pub lost_mass: f64,
    pub off_grid_lookups: usize,
    pub leader_values: Option<Vec<f64>>,
    pub follower_values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub game: String,
    pub spec_hash: String,
    pub horizon: Horizon,
    pub initial_leader_belief: Vec<f64>,
    pub initial_mean_field: Vec<f64>,
    pub grid_points: usize,
    pub settings: Settings,
    pub convergence: Option<ConvergenceReport>,
    pub trajectory: Option<TrajectorySummary>,
    pub files: Vec<String>,
    pub version: String,
}

/// One line of `diagnostics.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsLine {
    pub stage: usize,
    pub point: usize,
    pub belief: Vec<f64>,
    pub mean_field: Vec<f64>,
    pub leader_objective: f64,
    #[serde(flatten)]
    pub diagnostics: StageDiagnostics,
}

fn labels(prefix: &str, names: &[String]) -> Vec<String> {
    names.iter().map(|n| format!("{prefix}{n}")).collect()
}

fn rule_labels(prefix: &str, states: &[String], actions: &[String]) -> Vec<String> {
    states
        .iter()
        .flat_map(|s| actions.iter().map(move |a| format!("{prefix}{s}_{a}")))
        .collect()
}

fn nums(values: &[f64]) -> impl Iterator<Item = String> + '_ {
    values.iter().map(|v| fmt_num(*v))
}

/// Follower and leader tables side by side, one CSV each.
pub fn write_value_table<W: Write>(out: W, spec: &GameSpec, table: &GridTable, leader: bool) -> Result<()> {
    let s = spec.spaces();
    let states = if leader { &s.leader_states } else { &s.follower_states };
    table.write_csv(out, &s.leader_states, &s.follower_states, states)
}

/// One row per stage and grid point with the chosen prescriptions.
pub fn write_policy<W: Write>(out: W, spec: &GameSpec, generator: &EquilibriumGenerator) -> Result<()> {
    let s = spec.spaces();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["stage".to_string(), "point".to_string()];
    header.extend(labels("pi_", &s.leader_states));
    header.extend(labels("z_", &s.follower_states));
    header.extend(rule_labels("gl_", &s.leader_states, &s.leader_actions));
    header.extend(rule_labels("gf_", &s.follower_states, &s.follower_actions));
    header.push("leader_objective".into());
    w.write_record(&header).map_err(csv_err)?;
    let grid = generator.grid();
    for (k, policy) in generator.stages().iter().enumerate() {
        let stage = if generator.is_stationary() { 0 } else { k + 1 };
        for (point, sol) in policy.solutions.iter().enumerate() {
            let (b, z) = grid.point(point);
            let mut row = vec![stage.to_string(), point.to_string()];
            row.extend(nums(b));
            row.extend(nums(z));
            row.extend(nums(sol.prescription.leader.as_slice()));
            row.extend(nums(sol.prescription.follower.as_slice()));
            row.push(fmt_num(sol.leader_objective));
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per trajectory node.
pub fn write_trajectory<W: Write>(out: W, spec: &GameSpec, trajectory: &Trajectory) -> Result<()> {
    let s = spec.spaces();
    let mut w = csv::Writer::from_writer(out);
    let mut header = ["t", "branch", "parent", "weight", "leader_action", "grid_point", "on_grid"]
        .map(String::from)
        .to_vec();
    header.extend(labels("pi_", &s.leader_states));
    header.extend(labels("z_", &s.follower_states));
    header.extend(labels("p_", &s.leader_actions));
    header.extend(rule_labels("gl_", &s.leader_states, &s.leader_actions));
    header.extend(rule_labels("gf_", &s.follower_states, &s.follower_actions));
    header.push("leader_reward".into());
    header.extend(labels("follower_reward_", &s.follower_states));
    header.push("population_reward".into());
    w.write_record(&header).map_err(csv_err)?;
    for nodes in &trajectory.steps {
        for (branch, n) in nodes.iter().enumerate() {
            // the action that led here, or the sampled draw at this node
            let action = n.action_from_parent.or(n.sampled_action);
            let mut row = vec![
                n.t.to_string(),
                branch.to_string(),
                n.parent.map(|p| p.to_string()).unwrap_or_default(),
                fmt_num(n.weight),
                action.map(|a| s.leader_actions[a].clone()).unwrap_or_default(),
                n.grid_point.to_string(),
                n.on_grid.to_string(),
            ];
            row.extend(nums(&n.belief));
            row.extend(nums(&n.mean_field));
            row.extend(nums(&n.action_probs));
            row.extend(nums(n.prescription.leader.as_slice()));
            row.extend(nums(n.prescription.follower.as_slice()));
            row.push(fmt_num(n.leader_reward));
            row.extend(nums(&n.follower_rewards));
            row.push(fmt_num(n.population_reward));
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_diagnostics<W: Write>(mut out: W, generator: &EquilibriumGenerator) -> Result<()> {
    let grid = generator.grid();
    for (k, policy) in generator.stages().iter().enumerate() {
        let stage = if generator.is_stationary() { 0 } else { k + 1 };
        for (point, sol) in policy.solutions.iter().enumerate() {
            let (b, z) = grid.point(point);
            let line = DiagnosticsLine {
                stage,
                point,
                belief: b.to_vec(),
                mean_field: z.to_vec(),
                leader_objective: sol.leader_objective,
                diagnostics: sol.diagnostics.clone(),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes the full artifact set of a solve into `dir` and returns the
/// manifest. Files: `game.toml` (when the game came from a config),
/// `values_follower.csv`, `values_leader.csv` (first stage or fixed point),
/// `values_stages.csv` for finite horizons, `policy.csv`,
/// `diagnostics.jsonl`, `trajectory.csv` when given, and `manifest.json`.
pub fn write_run(
    dir: &Path,
    spec: &GameSpec,
    config: &SolverConfig,
    solution: &Solution,
    trajectory: Option<&Trajectory>,
) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut create = |name: &str| -> Result<fs::File> {
        files.push(name.to_string());
        Ok(fs::File::create(dir.join(name))?)
    };
    if let Some(cfg) = spec.config() {
        create("game.toml")?.write_all(cfg.to_toml_string()?.as_bytes())?;
    }
    let (vf, vl) = solution.initial_tables();
    write_value_table(std::io::BufWriter::new(create("values_follower.csv")?), spec, vf, false)?;
    write_value_table(std::io::BufWriter::new(create("values_leader.csv")?), spec, vl, true)?;
    if let Solution::Finite(s) = solution {
        write_stage_values(std::io::BufWriter::new(create("values_stages.csv")?), spec, s)?;
    }
    write_policy(std::io::BufWriter::new(create("policy.csv")?), spec, solution.generator())?;
    write_diagnostics(std::io::BufWriter::new(create("diagnostics.jsonl")?), solution.generator())?;
    if let Some(t) = trajectory {
        write_trajectory(std::io::BufWriter::new(create("trajectory.csv")?), spec, t)?;
    }
    files.push("manifest.json".into());
    let manifest = Manifest {
        game: spec.name().to_string(),
        spec_hash: spec.spec_hash(),
        horizon: spec.horizon(),
        initial_leader_belief: spec.initial_leader_belief().to_vec(),
        initial_mean_field: spec.initial_mean_field().to_vec(),
        grid_points: solution.generator().grid().len(),
        settings: Settings::new(spec, config),
        convergence: solution.report().cloned(),
        trajectory: trajectory.map(|t| TrajectorySummary {
            mode: t.mode,
            steps: t.steps.len(),
            lost_mass: t.lost_mass,
            off_grid_lookups: t.off_grid_lookups,
            leader_values: t.leader_values.clone(),
            follower_values: t.follower_values.clone(),
        }),
        files,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let mut f = fs::File::create(dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    f.write_all(b"\n")?;
    Ok(manifest)
}

/// Every stage table of a finite-horizon solve in one long CSV.
fn write_stage_values<W: Write>(out: W, spec: &GameSpec, solution: &crate::solver::BackwardSolution) -> Result<()> {
    let s = spec.spaces();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["stage".to_string(), "player".to_string()];
    header.extend(labels("pi_", &s.leader_states));
    header.extend(labels("z_", &s.follower_states));
    header.push("state".into());
    header.push("value".into());
    w.write_record(&header).map_err(csv_err)?;
    let stages = solution.generator.len();
    for t in 0..stages {
        for (player, table, names) in [
            ("follower", &solution.tables.follower[t], &s.follower_states),
            ("leader", &solution.tables.leader[t], &s.leader_states),
        ] {
            let grid = table.grid();
            for point in 0..grid.len() {
                let (b, z) = grid.point(point);
                for (x, name) in names.iter().enumerate() {
                    let mut row = vec![(t + 1).to_string(), player.to_string()];
                    row.extend(nums(b));
                    row.extend(nums(z));
                    row.push(name.clone());
                    row.push(fmt_num(table.get(point, x)));
                    w.write_record(&row).map_err(csv_err)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Paths of the files listed in a manifest.
pub fn manifest_paths(dir: &Path, manifest: &Manifest) -> Vec<PathBuf> {
    manifest.files.iter().map(|f| dir.join(f)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_num(0.1 + 0.2), "0.3");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_num(-2.5), "-2.5");
        assert_eq!(fmt_num(123456.0), "123456");
        assert_eq!(fmt_num(1e-7), "1e-7");
        assert_eq!(fmt_num(6.02214076e23), "6.02214076e23");
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(-1e-300 * 1e-300), "0");
    }

    #[test]
    fn run_artifacts_are_reproducible() {
        use crate::games::InfectionParams;
        use crate::solver::{forward_pass, solve, ForwardOptions};
        let spec = InfectionParams::default().build(Horizon::Finite(2)).unwrap();
        let cfg = SolverConfig {
            z_resolution: Some(10),
            ..Default::default()
        };
        let mut bytes = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir().unwrap();
            let sol = solve(&spec, &cfg).unwrap();
            let traj = forward_pass(
                &spec,
                sol.generator(),
                spec.initial_leader_belief(),
                spec.initial_mean_field(),
                &ForwardOptions::default(),
            )
            .unwrap();
            let m = write_run(dir.path(), &spec, &cfg, &sol, Some(&traj)).unwrap();
            let all: Vec<Vec<u8>> = manifest_paths(dir.path(), &m).iter().map(|p| fs::read(p).unwrap()).collect();
            bytes.push(all);
        }
        assert_eq!(bytes[0], bytes[1]);
        let dir = tempfile::tempdir().unwrap();
        let sol = solve(&spec, &cfg).unwrap();
        let m = write_run(dir.path(), &spec, &cfg, &sol, None).unwrap();
        assert!(!m.files.contains(&"trajectory.csv".to_string()));
        let policy = fs::read_to_string(dir.path().join("policy.csv")).unwrap();
        assert!(policy.starts_with("stage,point,pi_government,z_healthy,z_infected,gl_government_"));
    }
}
